#include "amc/graph.hpp"
#include "amc/synthetic.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace amc {
namespace {

using Edges = std::vector<std::pair<Index, Index>>;

TEST(SparseGraph, SymmetrizesAndDeduplicates) {
  const Edges edges{{0, 1}, {1, 0}, {2, 1}, {0, 1}, {3, 3}};
  const SparseGraph g = SparseGraph::from_edges(4, edges);
  EXPECT_EQ(g.edge_count(), 2);
  EXPECT_TRUE(g.has_edge(1, 0));
  EXPECT_TRUE(g.has_edge(1, 2));
  EXPECT_FALSE(g.has_edge(3, 3));
  EXPECT_EQ(g.degree(1), 2);
  EXPECT_EQ(g.degree(3), 0);
  const Edges expect{{0, 1}, {1, 2}};
  EXPECT_EQ(g.undirected_edges(), expect);
}

TEST(SparseGraph, RejectsOutOfRangeIds) {
  const Edges edges{{0, 5}};
  EXPECT_THROW(SparseGraph::from_edges(3, edges), DatasetError);
}

TEST(SparseGraph, FromCsrValidates) {
  // Missing the reverse direction of 0 -> 1.
  EXPECT_THROW(SparseGraph::from_csr(2, {0, 1, 1}, {1}), DatasetError);
  EXPECT_NO_THROW(SparseGraph::from_csr(2, {0, 1, 2}, {1, 0}));
}

// D^{-1/2}(A+I)D^{-1/2} built densely from the edge list.
Matrix dense_normalized(Index n, const Edges& edges) {
  Matrix a = Matrix::Identity(n, n);
  for (const auto& [u, v] : edges) a(u, v) = a(v, u) = 1.0;
  const Vector d = a.rowwise().sum();
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) a(i, j) /= std::sqrt(d(i) * d(j));
  }
  return a;
}

TEST(NormalizeAdjacency, MatchesDenseFormula) {
  const Edges edges{{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 2}, {4, 1}};
  const SparseGraph g = SparseGraph::from_edges(6, edges);
  const Matrix got = normalize_adjacency(g).matrix.to_dense();
  const Matrix want = dense_normalized(6, edges);
  EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((got - got.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  // Isolated node 5 keeps only its self-loop.
  EXPECT_DOUBLE_EQ(got(5, 5), 1.0);
}

TEST(NormalizeAdjacency, RegularGraphIsRowStochastic) {
  Edges ring;
  for (Index i = 0; i < 7; ++i) ring.emplace_back(i, (i + 1) % 7);
  const Matrix a = normalize_adjacency(SparseGraph::from_edges(7, ring)).matrix.to_dense();
  for (Index i = 0; i < 7; ++i) EXPECT_NEAR(a.row(i).sum(), 1.0, 1e-15);
}

TEST(MeanAggregation, AveragesNeighbours) {
  const Edges edges{{0, 1}, {0, 2}};
  const Matrix m = mean_aggregation_operator(SparseGraph::from_edges(4, edges)).to_dense();
  EXPECT_DOUBLE_EQ(m(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(m(0, 2), 0.5);
  EXPECT_DOUBLE_EQ(m(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(m.row(3).sum(), 0.0);
}

TEST(CsrMatrix, DenseRoundTripAndTranspose) {
  Matrix d = test::random_matrix(5, 7, 3);
  d(1, 2) = d(3, 3) = d(4, 0) = 0.0;
  const CsrMatrix c = CsrMatrix::from_dense(d);
  EXPECT_EQ(c.to_dense(), d);
  EXPECT_EQ(c.transpose().to_dense(), Matrix(d.transpose()));
}

TEST(Dataset, SaveLoadRoundTripIsExact) {
  Dataset d = random_dataset(30, 6, 3, 0.15, 9);
  d.labels[4] = -1;
  d.split[4] = SplitTag::none;
  test::TempDir dir("roundtrip");
  save_dataset(d, dir.path());
  const Dataset back = load_dataset(dir.path());
  EXPECT_EQ(back.graph, d.graph);
  EXPECT_EQ(back.features, d.features);
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.split, d.split);
  EXPECT_EQ(back.num_classes, d.num_classes);
  EXPECT_EQ(dataset_checksum(dir.path()).size(), 16u);
}

class DatasetFiles : public ::testing::Test {
 protected:
  void SetUp() override {
    test::write_file(dir / "graph.edges", "0 1\n1 2\n");
    test::write_file(dir / "features.txt", "1 0\n0 1\n1 1\n");
    test::write_file(dir / "labels.txt", "# classes 2\n0\n1\n-1\n");
    test::write_file(dir / "split.txt", "train\nval\ntest\n");
  }
  std::string load_error() {
    try {
      load_dataset(dir.path());
    } catch (const DatasetError& e) {
      return e.what();
    }
    return "";
  }
  test::TempDir dir{"files"};
};

TEST_F(DatasetFiles, LoadsWellFormedFiles) {
  const Dataset d = load_dataset(dir.path());
  EXPECT_EQ(d.num_nodes(), 3);
  EXPECT_EQ(d.num_classes, 2);
  EXPECT_EQ(d.labels[2], -1);
  EXPECT_EQ(d.nodes_in(SplitTag::val), std::vector<Index>{1});
}

TEST_F(DatasetFiles, OutOfRangeEdgeNamesLine) {
  test::write_file(dir / "graph.edges", "0 1\n# comment\n2 7\n");
  EXPECT_NE(load_error().find("graph.edges:3: node index out of range"), std::string::npos) << load_error();
}

TEST_F(DatasetFiles, RaggedFeaturesNameLine) {
  test::write_file(dir / "features.txt", "1 0\n0 1 1\n1 1\n");
  EXPECT_NE(load_error().find("features.txt:2"), std::string::npos) << load_error();
}

TEST_F(DatasetFiles, LabelAboveDeclaredClasses) {
  test::write_file(dir / "labels.txt", "# classes 2\n0\n2\n1\n");
  EXPECT_NE(load_error().find("labels.txt:3"), std::string::npos) << load_error();
}

TEST_F(DatasetFiles, BadSplitTag) {
  test::write_file(dir / "split.txt", "train\nvalid8\ntest\n");
  EXPECT_NE(load_error().find("split.txt:2"), std::string::npos) << load_error();
}

TEST_F(DatasetFiles, MissingFile) {
  std::filesystem::remove(dir / "labels.txt");
  EXPECT_NE(load_error().find("labels.txt"), std::string::npos);
}

TEST_F(DatasetFiles, ChecksumTracksContent) {
  const std::string before = dataset_checksum(dir.path());
  test::write_file(dir / "features.txt", "1 0\n0 1\n1 0\n");
  EXPECT_NE(dataset_checksum(dir.path()), before);
}

}  // namespace
}  // namespace amc
