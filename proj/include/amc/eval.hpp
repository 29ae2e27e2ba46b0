#pragma once

// Frozen-embedding evaluation.

#include "amc/graph.hpp"
#include "amc/model.hpp"

#include <filesystem>
#include <functional>
#include <vector>

namespace amc {

/// Nodes with known labels, handed to exactly one stage of the probe.
struct LabeledNodes {
  std::vector<Index> nodes;
  std::vector<int> labels;

  /// Nodes of `tag` that carry a label (>= 0).
  static LabeledNodes from_split(const std::vector<int>& labels, const std::vector<SplitTag>& split, SplitTag tag);
};

struct ProbeConfig {
  int steps = 2000;
  double learning_rate = 0.01;
  /// Penalties tried in turn; validation accuracy picks one.
  std::vector<double> l2{1e-4, 1e-3, 1e-2, 1e-1};
  bool operator==(const ProbeConfig&) const = default;
};

/// Softmax regression on standardized embeddings. Training starts from
/// zero weights with full batches, so it needs no random seed.
struct LinearProbe {
  RowVector mean;
  RowVector inv_std;
  Matrix weight;  // d x C
  RowVector bias;
  int best_step = 0;
  double l2 = 0.0;  // the selected penalty
  double best_val_accuracy = 0.0;
  std::vector<int> absent_classes;  // classes with no training node

  Matrix logits(const Matrix& emb) const;
  std::vector<int> predict(const Matrix& emb) const;
};

/// Full-batch Adam on mean cross-entropy + (l2/2)|W|^2 over `train`, once
/// per candidate l2; the (l2, step) with the best `val` accuracy (ties:
/// lower val loss) is kept. With no val nodes the first candidate's last
/// step is kept. Columns are standardized with
/// statistics of all rows of `emb`, which uses no labels.
LinearProbe fit_probe(const Matrix& emb, const LabeledNodes& train, const LabeledNodes& val, int num_classes,
                      const ProbeConfig& cfg);

struct ProbeResult {
  double accuracy = 0.0;
  double micro_f1 = 0.0;
  std::vector<double> per_class_f1;
  double val_accuracy = 0.0;
  int best_step = 0;
  double l2 = 0.0;
  std::vector<int> absent_classes;
};

/// Accuracy and F1 of `predicted` against `truth` (same order).
ProbeResult score_predictions(const std::vector<int>& predicted, const std::vector<int>& truth, int num_classes);

/// Train split -> fit, val split -> selection, test labels -> scorer only.
/// Throws DatasetError when the train split holds no labeled node.
ProbeResult linear_probe(const Matrix& emb, const std::vector<int>& labels, const std::vector<SplitTag>& split,
                         int num_classes, const ProbeConfig& cfg = {});

struct KMeansResult {
  std::vector<int> assignments;
  Matrix centroids;
  double inertia = 0.0;
  int iterations = 0;
};

/// k-means++ seeding, then Lloyd iterations until the assignment stops
/// changing or `max_iter`. An empty cluster is re-seeded at the point
/// farthest from its current centroid.
KMeansResult kmeans(const Matrix& emb, int k, std::uint64_t seed, int max_iter = 300);

struct ClusterReport {
  double chi = 0.0;
  double dbi = 0.0;
  double sc = 0.0;
  int clusters = 0;
};

/// Calinski-Harabasz, Davies-Bouldin and mean silhouette (Euclidean).
/// Singleton clusters get silhouette 0; CHI is 1 when every cluster has
/// zero scatter. Throws std::invalid_argument with fewer than 2 clusters.
ClusterReport clustering_indices(const Matrix& emb, const std::vector<int>& assignments);

struct StabilityMatrix {
  Matrix s;  // T x T cosine similarities
  double mean_offdiag = 0.0;
  std::vector<int> zero_norm_trials;
};

/// Encodes the unaugmented graph under `trials` independent feature masks
/// of ratio p and compares the node's h^{l1} across trials.
StabilityMatrix stability_matrix(const ModelParams& model, const Dataset& d, Index node, double p = 0.4,
                                 int trials = 10, std::uint64_t seed = 0);

/// Pairwise cosine similarities of the rows of `rows`; zero rows compare as 0.
Matrix cosine_matrix(const Matrix& rows);

struct SweepPoint {
  double ratio = 0.0;
  double accuracy = 0.0;
};

/// Trains a model on the dataset with features polluted at each ratio
/// (one shared column mask per ratio) and probes its embeddings.
using TrainClosure = std::function<ModelParams(const Dataset&)>;
std::vector<SweepPoint> sparsity_sweep(const TrainClosure& train_fn, const Dataset& d, const std::vector<double>& ratios,
                                       std::uint64_t seed, const ProbeConfig& probe = {});

/// "N d" header, then one row of d reals per node.
void write_embeddings(const Matrix& emb, const std::filesystem::path& file);
Matrix read_embeddings(const std::filesystem::path& file);

}  // namespace amc
