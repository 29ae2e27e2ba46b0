#pragma once

#include "amc/graph.hpp"
#include "amc/rng.hpp"

#include <memory>
#include <utility>
#include <vector>

namespace amc {

/// Augmentation probabilities for the two views. p_* drive the target
/// encoder input, q_* the auxiliary encoder input; R = edge dropping,
/// A = attribute masking.
struct AugmentConfig {
  double p_R1 = 0.3;
  double p_R2 = 0.4;
  double q_R1 = 0.2;
  double q_R2 = 0.7;
  double p_A1 = 0.3;
  double p_A2 = 0.3;
  double q_A1 = 0.1;
  double q_A2 = 0.0;

  /// Throws ConfigError unless every probability lies in [0, 1].
  void validate() const;
  bool operator==(const AugmentConfig&) const = default;
};

struct MaskedFeatures {
  Matrix features;
  std::vector<double> mask;  // 0/1 per feature dimension
};

/// One augmented view of a dataset.
struct GraphView {
  std::shared_ptr<const NormalizedAdjacency> adj_target;
  std::shared_ptr<const NormalizedAdjacency> adj_aux;
  // Neighbour-mean operators of the same dropped graphs (mean-aggregation encoder).
  std::shared_ptr<const CsrMatrix> mean_target;
  std::shared_ptr<const CsrMatrix> mean_aux;
  Matrix masked_features;
  std::shared_ptr<const CsrMatrix> feature_csr;  // masked_features in CSR form
  std::vector<double> feature_mask;
  std::vector<double> aux_mask;  // applied to the target encoder output
  Index target_edges = 0;
  Index aux_edges = 0;
};

/// Keeps each undirected edge independently with probability 1 - rho;
/// both directions go together.
SparseGraph drop_edges(const SparseGraph& g, double rho, Rng& rng);

/// One Bernoulli(1 - p) keep-draw per dimension.
std::vector<double> draw_mask(Index dims, double p, Rng& rng);

/// Zeroes the same randomly chosen feature columns in every row.
MaskedFeatures mask_features(const Matrix& x, double p, Rng& rng);

/// Applies a fixed mask to every row.
Matrix apply_mask(const Matrix& x, const std::vector<double>& mask);

/// Builds one view. Random streams are derived from `stream` in a fixed
/// order: 0 target edge drop, 1 feature mask, 2 auxiliary edge drop,
/// 3 auxiliary mask, so changing one probability never shifts the others.
GraphView make_view(const Dataset& d, double p_R, double p_A, double q_R, double q_A, Index aux_dim,
                    const Rng& stream);

/// View 1 uses stream rng.derive(1), view 2 uses rng.derive(2).
/// `aux_dim` is the width of the target encoder output that the
/// auxiliary mask covers.
std::pair<GraphView, GraphView> generate_views(const Dataset& d, const AugmentConfig& cfg, Index aux_dim,
                                               const Rng& rng);

/// The unaugmented graph and features, as a view.
GraphView identity_view(const Dataset& d, Index aux_dim);
GraphView identity_view(const SparseGraph& g, const Matrix& features, Index aux_dim);

}  // namespace amc
