#include "amc/augment.hpp"

#include <string>

namespace amc {

void AugmentConfig::validate() const {
  const std::pair<const char*, double> entries[] = {{"p_R1", p_R1}, {"p_R2", p_R2}, {"q_R1", q_R1},
                                                    {"q_R2", q_R2}, {"p_A1", p_A1}, {"p_A2", p_A2},
                                                    {"q_A1", q_A1}, {"q_A2", q_A2}};
  for (const auto& [name, value] : entries) {
    if (!(value >= 0.0 && value <= 1.0)) {
      throw ConfigError(std::string(name) + " must lie in [0, 1], got " + std::to_string(value));
    }
  }
}

SparseGraph drop_edges(const SparseGraph& g, double rho, Rng& rng) {
  std::vector<std::pair<Index, Index>> kept;
  kept.reserve(static_cast<std::size_t>(g.edge_count()));
  for (const auto& edge : g.undirected_edges()) {
    if (rng.uniform() >= rho) kept.push_back(edge);
  }
  SparseGraph out = SparseGraph::from_edges(g.num_nodes(), kept);
  out.validate();
  return out;
}

std::vector<double> draw_mask(Index dims, double p, Rng& rng) {
  std::vector<double> mask(static_cast<std::size_t>(dims));
  for (double& m : mask) m = rng.uniform() >= p ? 1.0 : 0.0;
  return mask;
}

Matrix apply_mask(const Matrix& x, const std::vector<double>& mask) {
  if (static_cast<Index>(mask.size()) != x.cols()) throw DimensionError("apply_mask: mask length differs from columns");
  const RowVector m = Eigen::Map<const RowVector>(mask.data(), x.cols());
  Matrix out = x.array().rowwise() * m.array();
  return out;
}

MaskedFeatures mask_features(const Matrix& x, double p, Rng& rng) {
  MaskedFeatures out;
  out.mask = draw_mask(x.cols(), p, rng);
  out.features = apply_mask(x, out.mask);
  return out;
}

namespace {

GraphView view_from(const SparseGraph& target, const SparseGraph& aux, Matrix features, std::vector<double> fmask,
                    std::vector<double> amask) {
  GraphView v;
  v.adj_target = std::make_shared<const NormalizedAdjacency>(normalize_adjacency(target));
  v.adj_aux = std::make_shared<const NormalizedAdjacency>(normalize_adjacency(aux));
  v.mean_target = std::make_shared<const CsrMatrix>(mean_aggregation_operator(target));
  v.mean_aux = std::make_shared<const CsrMatrix>(mean_aggregation_operator(aux));
  v.feature_csr = std::make_shared<const CsrMatrix>(CsrMatrix::from_dense(features));
  v.masked_features = std::move(features);
  v.feature_mask = std::move(fmask);
  v.aux_mask = std::move(amask);
  v.target_edges = target.edge_count();
  v.aux_edges = aux.edge_count();
  return v;
}

}  // namespace

GraphView make_view(const Dataset& d, double p_R, double p_A, double q_R, double q_A, Index aux_dim,
                    const Rng& stream) {
  Rng target_rng = stream.derive(0);
  Rng feature_rng = stream.derive(1);
  Rng aux_rng = stream.derive(2);
  Rng aux_mask_rng = stream.derive(3);
  SparseGraph target = drop_edges(d.graph, p_R, target_rng);
  MaskedFeatures masked = mask_features(d.features, p_A, feature_rng);
  SparseGraph aux = drop_edges(d.graph, q_R, aux_rng);
  std::vector<double> amask = draw_mask(aux_dim, q_A, aux_mask_rng);
  return view_from(target, aux, std::move(masked.features), std::move(masked.mask), std::move(amask));
}

std::pair<GraphView, GraphView> generate_views(const Dataset& d, const AugmentConfig& cfg, Index aux_dim,
                                               const Rng& rng) {
  cfg.validate();
  return {make_view(d, cfg.p_R1, cfg.p_A1, cfg.q_R1, cfg.q_A1, aux_dim, rng.derive(1)),
          make_view(d, cfg.p_R2, cfg.p_A2, cfg.q_R2, cfg.q_A2, aux_dim, rng.derive(2))};
}

GraphView identity_view(const SparseGraph& g, const Matrix& features, Index aux_dim) {
  return view_from(g, g, features, std::vector<double>(static_cast<std::size_t>(features.cols()), 1.0),
                   std::vector<double>(static_cast<std::size_t>(aux_dim), 1.0));
}

GraphView identity_view(const Dataset& d, Index aux_dim) { return identity_view(d.graph, d.features, aux_dim); }

}  // namespace amc
