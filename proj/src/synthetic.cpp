#include "amc/synthetic.hpp"

#include "amc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace amc {

namespace {

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

// Samples indices proportionally to non-negative weights via a cumulative table.
class Sampler {
 public:
  explicit Sampler(const std::vector<double>& weights) : cum_(weights.size()) {
    std::partial_sum(weights.begin(), weights.end(), cum_.begin());
  }
  std::size_t operator()(Rng& rng) const {
    const double u = rng.uniform() * cum_.back();
    return static_cast<std::size_t>(std::upper_bound(cum_.begin(), cum_.end(), u) - cum_.begin());
  }

 private:
  std::vector<double> cum_;
};

}  // namespace

std::vector<SplitTag> planetoid_split(const std::vector<int>& labels, int num_classes, std::uint64_t seed,
                                      int per_class, Index val, Index test) {
  Rng rng(seed);
  std::vector<Index> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);
  std::vector<SplitTag> split(labels.size(), SplitTag::none);
  std::vector<int> taken(static_cast<std::size_t>(num_classes), 0);
  std::vector<Index> rest;
  for (Index i : order) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y >= 0 && taken[static_cast<std::size_t>(y)] < per_class) {
      ++taken[static_cast<std::size_t>(y)];
      split[static_cast<std::size_t>(i)] = SplitTag::train;
    } else {
      rest.push_back(i);
    }
  }
  Index used = 0;
  for (Index i : rest) {
    if (labels[static_cast<std::size_t>(i)] < 0) continue;
    if (used < val) {
      split[static_cast<std::size_t>(i)] = SplitTag::val;
    } else if (used < val + test) {
      split[static_cast<std::size_t>(i)] = SplitTag::test;
    } else {
      break;
    }
    ++used;
  }
  return split;
}

Dataset make_surrogate(const SurrogateSpec& spec) {
  const int k = static_cast<int>(spec.class_sizes.size());
  if (k < 2) throw std::invalid_argument("surrogate needs at least two classes");
  const Index n = std::accumulate(spec.class_sizes.begin(), spec.class_sizes.end(), Index{0});
  if (spec.edges < n - 1 || spec.edges > n * (n - 1) / 4) throw std::invalid_argument("surrogate edge count out of range");
  Rng root(spec.seed);

  // Labels, in random node order.
  std::vector<int> labels;
  for (int c = 0; c < k; ++c) labels.insert(labels.end(), static_cast<std::size_t>(spec.class_sizes[c]), c);
  Rng label_rng = root.derive(1);
  shuffle(labels, label_rng);
  std::vector<std::vector<Index>> members(static_cast<std::size_t>(k));
  for (Index i = 0; i < n; ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);

  // Heavy-tailed degree propensities.
  Rng deg_rng = root.derive(2);
  std::vector<double> theta(static_cast<std::size_t>(n));
  for (double& t : theta) t = std::pow(1.0 - deg_rng.uniform(), -1.0 / spec.degree_shape);
  std::vector<Sampler> within;
  for (const auto& m : members) {
    std::vector<double> w;
    for (Index i : m) w.push_back(theta[static_cast<std::size_t>(i)]);
    within.emplace_back(w);
  }
  // Communities inside each class.
  Rng comm_rng = root.derive(6);
  const int per_class = std::max(1, spec.communities_per_class);
  std::vector<int> community(static_cast<std::size_t>(n));
  std::vector<std::vector<Index>> comm_members(static_cast<std::size_t>(k * per_class));
  for (Index i = 0; i < n; ++i) {
    const int cm = labels[i] * per_class + static_cast<int>(comm_rng.below(static_cast<std::uint64_t>(per_class)));
    community[static_cast<std::size_t>(i)] = cm;
    comm_members[static_cast<std::size_t>(cm)].push_back(i);
  }
  std::vector<Sampler> in_comm;
  std::vector<double> comm_mix(comm_members.size());
  for (std::size_t cm = 0; cm < comm_members.size(); ++cm) {
    std::vector<double> w;
    for (Index i : comm_members[cm]) w.push_back(theta[static_cast<std::size_t>(i)]);
    if (w.empty()) w.push_back(0.0);
    in_comm.emplace_back(w);
    comm_mix[cm] = spec.community_mix * (static_cast<double>(cm % static_cast<std::size_t>(per_class)) + 0.5) / per_class;
  }
  const Sampler any(theta);
  std::vector<double> class_mass(static_cast<std::size_t>(k), 0.0);
  for (Index i = 0; i < n; ++i) class_mass[static_cast<std::size_t>(labels[i])] += theta[static_cast<std::size_t>(i)];

  Rng mix_rng = root.derive(5);
  const double pure = std::min(1.0, (spec.homophily - spec.mixed_fraction * spec.mixed_homophily) /
                                        std::max(1e-12, 1.0 - spec.mixed_fraction));
  std::vector<double> node_h(static_cast<std::size_t>(n));
  for (double& h : node_h) h = mix_rng.uniform() < spec.mixed_fraction ? spec.mixed_homophily : pure;

  // Each class leaks mostly into one other class, as related fields do.
  std::vector<std::size_t> confuser(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) confuser[static_cast<std::size_t>(c)] = static_cast<std::size_t>((c + 1 + mix_rng.below(static_cast<std::uint64_t>(k - 1))) % k);

  Rng edge_rng = root.derive(3);
  std::set<std::pair<Index, Index>> edges;
  auto partner = [&](Index u) {
    const int cu = labels[u];
    if (edge_rng.uniform() < node_h[static_cast<std::size_t>(u)]) {
      const auto cm = static_cast<std::size_t>(community[static_cast<std::size_t>(u)]);
      if (comm_members[cm].size() > 1 && edge_rng.uniform() < spec.community_affinity) {
        return comm_members[cm][in_comm[cm](edge_rng)];
      }
      return members[static_cast<std::size_t>(cu)][within[static_cast<std::size_t>(cu)](edge_rng)];
    }
    std::size_t c = confuser[static_cast<std::size_t>(cu)];
    if (edge_rng.uniform() >= spec.confuser_share) {
      // Another class, chosen by its total propensity.
      std::vector<double> w = class_mass;
      w[static_cast<std::size_t>(cu)] = 0.0;
      c = Sampler(w)(edge_rng);
    }
    return members[c][within[c](edge_rng)];
  };
  auto add = [&](Index u, Index v) {
    if (u == v) return false;
    return edges.insert({std::min(u, v), std::max(u, v)}).second;
  };
  // Every node gets at least one edge, so none is isolated.
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, edge_rng);
  for (Index u : order) {
    if (static_cast<Index>(edges.size()) >= spec.edges) break;
    for (int attempt = 0; attempt < 64 && !add(u, partner(u)); ++attempt) {
    }
  }
  while (static_cast<Index>(edges.size()) < spec.edges) {
    const auto u = static_cast<Index>(any(edge_rng));
    add(u, partner(u));
  }

  // Bag-of-words features: a Zipf background plus one topic per class.
  Rng word_rng = root.derive(4);
  const Index f = spec.features;
  std::vector<Index> vocab(static_cast<std::size_t>(f));
  std::iota(vocab.begin(), vocab.end(), 0);
  shuffle(vocab, word_rng);
  std::vector<double> background(static_cast<std::size_t>(f));
  for (Index j = 0; j < f; ++j) background[static_cast<std::size_t>(vocab[j])] = 1.0 / std::pow(j + 10.0, 0.9);
  const Sampler bg(background);
  std::vector<std::vector<Index>> topic_vocab(static_cast<std::size_t>(k));
  std::vector<Sampler> topics;
  for (int c = 0; c < k; ++c) {
    std::vector<Index> pool = vocab;
    shuffle(pool, word_rng);
    pool.resize(static_cast<std::size_t>(std::min(spec.topic_words, f)));
    std::vector<double> w;
    for (std::size_t j = 0; j < pool.size(); ++j) w.push_back(1.0 / std::pow(j + 3.0, 0.7));
    topic_vocab[static_cast<std::size_t>(c)] = pool;
    topics.emplace_back(w);
  }

  Dataset d;
  d.features = Matrix::Zero(n, f);
  for (Index i = 0; i < n; ++i) {
    const auto own = static_cast<std::size_t>(labels[i]);
    const double mix = comm_mix[static_cast<std::size_t>(community[static_cast<std::size_t>(i)])];
    // Document length around the mean, at least 2 words.
    const double len = spec.words_per_node * std::exp(0.35 * word_rng.normal() - 0.06125);
    const Index words = std::max<Index>(2, static_cast<Index>(std::lround(len)));
    Index placed = 0;
    for (int guard = 0; placed < words && guard < 50 * words; ++guard) {
      Index w;
      if (word_rng.uniform() < spec.topic_share) {
        const std::size_t c = word_rng.uniform() < mix ? confuser[own] : own;
        w = topic_vocab[c][topics[c](word_rng)];
      } else {
        w = static_cast<Index>(bg(word_rng));
      }
      if (d.features(i, w) == 0.0) {
        d.features(i, w) = 1.0;
        ++placed;
      }
    }
  }

  const std::vector<std::pair<Index, Index>> list(edges.begin(), edges.end());
  d.graph = SparseGraph::from_edges(n, list);
  d.labels = labels;
  d.num_classes = k;
  d.split = planetoid_split(labels, k, spec.seed ^ 0x5eed);
  d.validate();
  return d;
}

Dataset two_cluster_toy(Index nodes_per_cluster, Index features, std::uint64_t seed) {
  Rng rng(seed);
  const Index n = 2 * nodes_per_cluster;
  std::vector<std::pair<Index, Index>> edges;
  for (int c = 0; c < 2; ++c) {
    const Index base = c * nodes_per_cluster;
    for (Index i = 0; i < nodes_per_cluster; ++i) {
      for (Index j = i + 1; j < nodes_per_cluster; ++j) {
        if (j == i + 1 || rng.uniform() < 0.6) edges.push_back({base + i, base + j});
      }
    }
  }
  edges.push_back({nodes_per_cluster - 1, nodes_per_cluster});
  Dataset d;
  d.graph = SparseGraph::from_edges(n, edges);
  d.features.resize(n, features);
  d.labels.resize(static_cast<std::size_t>(n));
  d.split.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const int y = i < nodes_per_cluster ? 0 : 1;
    d.labels[static_cast<std::size_t>(i)] = y;
    for (Index j = 0; j < features; ++j) {
      const double signal = (j % 2 == y) ? 1.0 : 0.0;
      d.features(i, j) = signal + 0.3 * rng.normal();
    }
    const Index pos = i % nodes_per_cluster;
    d.split[static_cast<std::size_t>(i)] =
        2 * pos < nodes_per_cluster ? SplitTag::train : (4 * pos < 3 * nodes_per_cluster ? SplitTag::val : SplitTag::test);
  }
  d.num_classes = 2;
  d.validate();
  return d;
}

Dataset random_dataset(Index nodes, Index features, int classes, double edge_prob, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::pair<Index, Index>> edges;
  for (Index i = 0; i < nodes; ++i) {
    for (Index j = i + 1; j < nodes; ++j) {
      if (rng.uniform() < edge_prob) edges.push_back({i, j});
    }
  }
  Dataset d;
  d.graph = SparseGraph::from_edges(nodes, edges);
  d.features.resize(nodes, features);
  for (Index i = 0; i < d.features.size(); ++i) d.features.data()[i] = rng.normal();
  for (Index i = 0; i < nodes; ++i) d.labels.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(classes))));
  d.num_classes = classes;
  d.split = planetoid_split(d.labels, classes, seed + 1, 1, nodes / 4, nodes / 4);
  d.validate();
  return d;
}

}  // namespace amc
