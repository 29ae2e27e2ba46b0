#include "amc/encoder.hpp"

#include <cmath>
#include <string>

namespace amc {

std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "prelu"; }
std::string_view to_string(EncoderKind k) { return k == EncoderKind::gcn ? "gcn" : "sage"; }

Activation parse_activation(std::string_view s) {
  if (s == "relu" || s == "ReLU" || s == "ReLu") return Activation::relu;
  if (s == "prelu" || s == "PReLU" || s == "PReLu") return Activation::prelu;
  throw ConfigError("unknown activation '" + std::string(s) + "' (expected relu or prelu)");
}

EncoderKind parse_encoder_kind(std::string_view s) {
  if (s == "gcn") return EncoderKind::gcn;
  if (s == "sage") return EncoderKind::sage;
  throw ConfigError("unknown encoder '" + std::string(s) + "' (expected gcn or sage)");
}

void EncoderShape::validate() const {
  if (in_dim < 1) throw ConfigError("encoder input dimension must be positive");
  if (hidden_dim < 1) throw ConfigError("hidden_dim must be positive");
  if (target_layers < 1) throw ConfigError("target_layers must be at least 1");
  if (aux_layers < 0) throw ConfigError("aux_layers must be non-negative");
}

Matrix glorot_uniform(Index rows, Index cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = (2.0 * rng.uniform() - 1.0) * a;
  return m;
}

EncoderParams init_encoder(const EncoderShape& shape, Rng& rng) {
  shape.validate();
  const Index fan = shape.kind == EncoderKind::sage ? 2 : 1;
  EncoderParams p;
  auto slope = [] { return Matrix::Constant(1, 1, kDefaultPreluSlope); };
  for (int l = 0; l < shape.target_layers; ++l) {
    const Index in = l == 0 ? shape.in_dim : shape.hidden_dim;
    p.target.push_back(glorot_uniform(fan * in, shape.hidden_dim, rng));
    if (shape.activation == Activation::prelu) p.target_slopes.push_back(slope());
  }
  for (int l = 0; l < shape.aux_layers; ++l) {
    p.aux.push_back(glorot_uniform(fan * shape.hidden_dim, shape.hidden_dim, rng));
    if (shape.activation == Activation::prelu) p.aux_slopes.push_back(slope());
  }
  return p;
}

ProjectionHead init_projection_head(Index in_dim, Index proj_dim, Rng& rng) {
  ProjectionHead h;
  h.w1 = glorot_uniform(in_dim, proj_dim, rng);
  h.w2 = glorot_uniform(proj_dim, proj_dim, rng);
  return h;
}

ad::Var activate(ad::Var x, Activation act, ad::Var slope) {
  if (act == Activation::relu) return ad::relu(x);
  if (!slope.valid()) throw std::invalid_argument("prelu activation requires a slope");
  return ad::prelu(x, slope);
}

ad::Var gcn_layer(const std::shared_ptr<const NormalizedAdjacency>& adj, ad::Var h, ad::Var w, Activation act,
                  ad::Var slope) {
  if (h.cols() != w.rows()) {
    throw DimensionError("gcn_layer: input " + shape_string(h.value()) + " vs weight " + shape_string(w.value()));
  }
  if (h.rows() != adj->num_nodes()) throw DimensionError("gcn_layer: input rows differ from node count");
  std::shared_ptr<const CsrMatrix> a(adj, &adj->matrix);
  ad::Var pre = w.cols() <= w.rows() ? ad::sparse_matmul(a, ad::matmul(h, w)) : ad::matmul(ad::sparse_matmul(a, h), w);
  return activate(pre, act, slope);
}

ad::Var sage_layer(const std::shared_ptr<const CsrMatrix>& mean_op, ad::Var h, ad::Var w, Activation act,
                   ad::Var slope) {
  if (2 * h.cols() != w.rows()) {
    throw DimensionError("sage_layer: input " + shape_string(h.value()) + " needs a weight with " +
                         std::to_string(2 * h.cols()) + " rows, got " + shape_string(w.value()));
  }
  if (h.rows() != mean_op->rows) throw DimensionError("sage_layer: input rows differ from node count");
  const ad::Var parts[] = {h, ad::sparse_matmul(mean_op, h)};
  return activate(ad::matmul(ad::concat_cols(parts), w), act, slope);
}

namespace {

ad::Var slope_at(const std::vector<ad::Var>& slopes, std::size_t l) { return l < slopes.size() ? slopes[l] : ad::Var{}; }

}  // namespace

std::vector<ad::Var> encode(ad::Tape& tape, const GraphView& view, const EncoderVars& enc, bool include_aux) {
  if (enc.target.empty()) throw DimensionError("encode: no target layers");
  const Index in_rows = enc.kind == EncoderKind::sage ? 2 * view.masked_features.cols() : view.masked_features.cols();
  if (enc.target.front().rows() != in_rows) {
    throw DimensionError("encode: feature dimension " + std::to_string(view.masked_features.cols()) +
                         " does not match first layer " + shape_string(enc.target.front().value()));
  }

  std::vector<ad::Var> layers;
  ad::Var h;
  for (std::size_t l = 0; l < enc.target.size(); ++l) {
    const ad::Var w = enc.target[l];
    const ad::Var s = slope_at(enc.target_slopes, l);
    if (enc.kind == EncoderKind::gcn) {
      if (l == 0) {
        // Sparse features: X W first, then propagate.
        std::shared_ptr<const CsrMatrix> a(view.adj_target, &view.adj_target->matrix);
        h = activate(ad::sparse_matmul(a, ad::sparse_matmul(view.feature_csr, w)), enc.activation, s);
      } else {
        h = gcn_layer(view.adj_target, h, w, enc.activation, s);
      }
    } else {
      if (l == 0) h = tape.constant(view.masked_features);
      h = sage_layer(view.mean_target, h, w, enc.activation, s);
    }
    layers.push_back(h);
  }
  if (!include_aux || enc.aux.empty()) return layers;

  h = ad::mask_cols(h, view.aux_mask);
  for (std::size_t l = 0; l < enc.aux.size(); ++l) {
    const ad::Var s = slope_at(enc.aux_slopes, l);
    h = enc.kind == EncoderKind::gcn ? gcn_layer(view.adj_aux, h, enc.aux[l], enc.activation, s)
                                     : sage_layer(view.mean_aux, h, enc.aux[l], enc.activation, s);
    layers.push_back(h);
  }
  return layers;
}

std::vector<ad::Var> project(std::span<const ad::Var> embeddings, std::span<const HeadVars> heads) {
  if (heads.size() < embeddings.size()) {
    throw DimensionError("project: " + std::to_string(embeddings.size()) + " layers but only " +
                         std::to_string(heads.size()) + " projection heads");
  }
  std::vector<ad::Var> out;
  out.reserve(embeddings.size());
  for (std::size_t k = 0; k < embeddings.size(); ++k) {
    out.push_back(ad::matmul(ad::relu(ad::matmul(embeddings[k], heads[k].w1)), heads[k].w2));
  }
  return out;
}

}  // namespace amc
