#include "amc/synthetic.hpp"

#include <gtest/gtest.h>

#include <algorithm>

namespace amc {
namespace {

TEST(Surrogate, MatchesCoraShape) {
  const Dataset d = make_surrogate({});
  EXPECT_NO_THROW(d.validate());
  EXPECT_EQ(d.num_nodes(), 2708);
  EXPECT_EQ(d.num_features(), 1433);
  EXPECT_EQ(d.num_classes, 7);
  EXPECT_EQ(d.graph.edge_count(), 5429);
  for (Index i = 0; i < d.num_nodes(); ++i) EXPECT_GT(d.graph.degree(i), 0) << i;
  const std::vector<Index> sizes{351, 217, 418, 818, 426, 298, 180};
  for (int c = 0; c < 7; ++c) EXPECT_EQ(std::count(d.labels.begin(), d.labels.end(), c), sizes[c]);
  // Binary bag-of-words.
  EXPECT_TRUE((d.features.array() == 0.0 || d.features.array() == 1.0).all());
}

TEST(Surrogate, HomophilyNearTarget) {
  const Dataset d = make_surrogate({});
  Index same = 0;
  const auto edges = d.graph.undirected_edges();
  for (const auto& [u, v] : edges) same += d.labels[u] == d.labels[v];
  const double h = static_cast<double>(same) / static_cast<double>(edges.size());
  EXPECT_GT(h, 0.77);
  EXPECT_LT(h, 0.86);
}

TEST(Surrogate, SeededGeneration) {
  SurrogateSpec a;
  a.class_sizes = {40, 30, 30};
  a.edges = 200;
  a.features = 50;
  a.topic_words = 10;
  a.communities_per_class = 2;
  SurrogateSpec b = a;
  b.seed = a.seed + 1;
  const Dataset x = make_surrogate(a), y = make_surrogate(a), z = make_surrogate(b);
  EXPECT_EQ(x.graph, y.graph);
  EXPECT_EQ(x.features, y.features);
  EXPECT_NE(x.graph, z.graph);
}

TEST(PlanetoidSplit, TwentyPerClassThenValAndTest) {
  const Dataset d = make_surrogate({});
  EXPECT_EQ(d.nodes_in(SplitTag::train).size(), 140u);
  EXPECT_EQ(d.nodes_in(SplitTag::val).size(), 500u);
  EXPECT_EQ(d.nodes_in(SplitTag::test).size(), 1000u);
  std::vector<int> per_class(7, 0);
  for (Index i : d.nodes_in(SplitTag::train)) ++per_class[d.labels[i]];
  EXPECT_EQ(per_class, std::vector<int>(7, 20));
}

TEST(Toys, TwoClusterToyIsFullyLabeled) {
  const Dataset d = two_cluster_toy(10, 4, 1);
  EXPECT_NO_THROW(d.validate());
  EXPECT_EQ(d.num_nodes(), 20);
  EXPECT_EQ(d.num_classes, 2);
  EXPECT_TRUE(std::none_of(d.labels.begin(), d.labels.end(), [](int y) { return y < 0; }));
}

TEST(Toys, RandomDatasetIsValid) {
  const Dataset d = random_dataset(30, 5, 3, 0.2, 2);
  EXPECT_NO_THROW(d.validate());
  EXPECT_EQ(d.num_features(), 5);
}

}  // namespace
}  // namespace amc
