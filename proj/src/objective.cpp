#include "amc/objective.hpp"

#include "amc/encoder.hpp"
#include "amc/kernels.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace amc {

std::string_view to_string(Similarity s) { return s == Similarity::cosine ? "cosine" : "dot"; }
std::string_view to_string(LayerMode m) { return m == LayerMode::multi ? "multi" : "last_only"; }
std::string_view to_string(AttentionMode m) { return m == AttentionMode::node_mean ? "node_mean" : "per_node"; }

Similarity parse_similarity(std::string_view s) {
  if (s == "cosine") return Similarity::cosine;
  if (s == "dot") return Similarity::dot;
  throw ConfigError("unknown similarity '" + std::string(s) + "' (expected cosine or dot)");
}

LayerMode parse_layer_mode(std::string_view s) {
  if (s == "multi") return LayerMode::multi;
  if (s == "last_only") return LayerMode::last_only;
  throw ConfigError("unknown layer_mode '" + std::string(s) + "' (expected multi or last_only)");
}

AttentionMode parse_attention_mode(std::string_view s) {
  if (s == "node_mean") return AttentionMode::node_mean;
  if (s == "per_node") return AttentionMode::per_node;
  throw ConfigError("unknown attention_mode '" + std::string(s) + "' (expected node_mean or per_node)");
}

void LossConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be positive");
  if (block_size < 0) throw ConfigError("block_size must be non-negative");
}

AttentionParams init_attention(int layers, Index proj_dim, Index attn_dim, Rng& rng) {
  AttentionParams p;
  for (int k = 0; k < layers; ++k) {
    p.q.push_back(glorot_uniform(attn_dim, 1, rng));
    p.w.push_back(glorot_uniform(proj_dim, attn_dim, rng));
  }
  p.bias = Matrix::Zero(1, attn_dim);
  return p;
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw NumericalError(std::string(what) + ": non-finite input");
}

// Log-sum-exp per row of [a | b], b's entry at column diag_offset + r
// excluded for row r (the self-similarity).
Vector lse_rows_excluding(const Matrix& a, Matrix& b, Index diag_offset) {
  const Index rows = a.rows();
  Vector out(rows);
  for (Index r = 0; r < rows; ++r) {
    const Index d = diag_offset + r;
    const double saved = b(r, d);
    b(r, d) = kNegInf;
    const double shift = std::max(a.row(r).maxCoeff(), b.row(r).maxCoeff());
    const double total = (a.row(r).array() - shift).exp().sum() + (b.row(r).array() - shift).exp().sum();
    out[r] = shift + std::log(total);
    b(r, d) = saved;
  }
  return out;
}

// Memory-bounded variant: similarities are rebuilt block by block.
struct BlockCache {
  Vector lse_u;
  Vector lse_v;
};

ad::Var contrastive_blocked(ad::Var zu, ad::Var zv, double tau, Index block) {
  const Matrix& u = zu.value();
  const Matrix& v = zv.value();
  const Index n = u.rows();
  const double inv_tau = 1.0 / tau;

  auto cache = std::make_shared<BlockCache>();
  cache->lse_u.resize(n);
  cache->lse_v.resize(n);
  for (Index r0 = 0; r0 < n; r0 += block) {
    const Index b = std::min(block, n - r0);
    Matrix uv = kernels::gemm_nt(u.middleRows(r0, b), v) * inv_tau;
    Matrix uu = kernels::gemm_nt(u.middleRows(r0, b), u) * inv_tau;
    cache->lse_u.segment(r0, b) = lse_rows_excluding(uv, uu, r0);
    Matrix vu = kernels::gemm_nt(v.middleRows(r0, b), u) * inv_tau;
    Matrix vv = kernels::gemm_nt(v.middleRows(r0, b), v) * inv_tau;
    cache->lse_v.segment(r0, b) = lse_rows_excluding(vu, vv, r0);
  }
  Matrix out(n, 1);
  for (Index i = 0; i < n; ++i) {
    const double pos = u.row(i).dot(v.row(i)) * inv_tau;
    out(i, 0) = 0.5 * (cache->lse_u[i] + cache->lse_v[i]) - pos;
  }

  ad::Tape& tape = *zu.tape();
  const std::size_t iu = zu.id(), iv = zv.id();
  return tape.record(
      "contrastive_node_losses", std::move(out), {iu, iv}, [cache, iu, iv, inv_tau, block](ad::Tape& t, std::size_t self) {
        const Matrix& u = t.node(iu).value;
        const Matrix& v = t.node(iv).value;
        const Index n = u.rows();
        const Vector c = t.node(self).grad.col(0) * 0.5;
        Matrix du = Matrix::Zero(n, u.cols());
        Matrix dv = Matrix::Zero(n, v.cols());
        // One side at a time: anchor rows `a`, cross partner `p`.
        auto side = [&](const Matrix& a, const Matrix& p, const Vector& lse, Matrix& da, Matrix& dp) {
          for (Index r0 = 0; r0 < n; r0 += block) {
            const Index b = std::min(block, n - r0);
            Matrix cross = kernels::gemm_nt(a.middleRows(r0, b), p) * inv_tau;
            Matrix self_sim = kernels::gemm_nt(a.middleRows(r0, b), a) * inv_tau;
            for (Index r = 0; r < b; ++r) {
              const double scale = c[r0 + r];
              const double shift = lse[r0 + r];
              cross.row(r) = scale * (cross.row(r).array() - shift).exp().matrix();
              self_sim.row(r) = scale * (self_sim.row(r).array() - shift).exp().matrix();
              cross(r, r0 + r) -= scale;
              self_sim(r, r0 + r) = 0.0;
            }
            da.middleRows(r0, b) += (kernels::gemm(cross, p) + kernels::gemm(self_sim, a)) * inv_tau;
            dp += kernels::gemm_tn(cross, a.middleRows(r0, b)) * inv_tau;
            da += kernels::gemm_tn(self_sim, a.middleRows(r0, b)) * inv_tau;
          }
        };
        side(u, v, cache->lse_u, du, dv);
        side(v, u, cache->lse_v, dv, du);
        t.accumulate(iu, du);
        t.accumulate(iv, dv);
      });
}

// Exponentials are taken once against a shift shared by the whole matrix.
// Past this spread between the shift and some row's own maximum the
// smallest rows could underflow, so the row-shifted kernel is used instead.
constexpr double kMaxShiftSpread = 600.0;

struct FullCache {
  Matrix e_uv;  // exp(u_i . v_j / tau - m_uv)
  Matrix e_uu;  // exp(u_i . u_j / tau - m_uu), zero diagonal
  Matrix e_vv;
  double m_uv = 0.0, m_uu = 0.0, m_vv = 0.0;
  Vector lse_u;
  Vector lse_v;
};

// Largest off-diagonal entry per row; the diagonal is overwritten with -inf.
Vector offdiag_row_max(Matrix& s) {
  s.diagonal().setConstant(kNegInf);
  return s.rowwise().maxCoeff();
}

ad::Var contrastive_full(ad::Var zu, ad::Var zv, double tau) {
  const Matrix& u = zu.value();
  const Matrix& v = zv.value();
  const Index n = u.rows();
  const double inv_tau = 1.0 / tau;

  auto cache = std::make_shared<FullCache>();
  const Matrix us = u * inv_tau;
  cache->e_uv = kernels::gemm_nt(us, v);
  cache->e_uu = kernels::gram(u, inv_tau);
  cache->e_vv = kernels::gram(v, inv_tau);
  const Vector positive = cache->e_uv.diagonal();

  // Each anchor's own largest logit bounds how far below the shift it sits.
  const Vector uv_row = cache->e_uv.rowwise().maxCoeff();
  const Vector uv_col = cache->e_uv.colwise().maxCoeff().transpose();
  const Vector uu_row = offdiag_row_max(cache->e_uu);
  const Vector vv_row = offdiag_row_max(cache->e_vv);
  cache->m_uv = uv_row.maxCoeff();
  cache->m_uu = n > 1 ? uu_row.maxCoeff() : 0.0;
  cache->m_vv = n > 1 ? vv_row.maxCoeff() : 0.0;
  const double top = std::max({cache->m_uv, cache->m_uu, cache->m_vv});
  const double floor = std::min(uv_row.minCoeff(), uv_col.minCoeff());
  if (top - floor > kMaxShiftSpread) return contrastive_blocked(zu, zv, tau, n);

  // In place; the -inf diagonals of the self blocks become exact zeros.
  cache->e_uv.array() = (cache->e_uv.array() - cache->m_uv).exp();
  cache->e_uu.array() = (cache->e_uu.array() - cache->m_uu).exp();
  cache->e_vv.array() = (cache->e_vv.array() - cache->m_vv).exp();

  // u side: row i of [uv | uu]; v side: column i of uv with row i of vv.
  const Vector su = cache->e_uv.rowwise().sum();
  const Vector sv = cache->e_uv.colwise().sum().transpose();
  const Vector suu = cache->e_uu.rowwise().sum();
  const Vector svv = cache->e_vv.rowwise().sum();
  cache->lse_u.resize(n);
  cache->lse_v.resize(n);
  Matrix out(n, 1);
  for (Index i = 0; i < n; ++i) {
    const double mu = std::max(cache->m_uv, cache->m_uu);
    const double mv = std::max(cache->m_uv, cache->m_vv);
    cache->lse_u[i] = mu + std::log(su[i] * std::exp(cache->m_uv - mu) + suu[i] * std::exp(cache->m_uu - mu));
    cache->lse_v[i] = mv + std::log(sv[i] * std::exp(cache->m_uv - mv) + svv[i] * std::exp(cache->m_vv - mv));
    out(i, 0) = 0.5 * (cache->lse_u[i] + cache->lse_v[i]) - positive[i];
  }

  ad::Tape& tape = *zu.tape();
  const std::size_t iu = zu.id(), iv = zv.id();
  return tape.record("contrastive_node_losses", std::move(out), {iu, iv},
                     [cache, iu, iv, inv_tau](ad::Tape& t, std::size_t self) {
                       const Matrix& u = t.node(iu).value;
                       const Matrix& v = t.node(iv).value;
                       const Index n = u.rows();
                       const Vector c = t.node(self).grad.col(0) * 0.5;
                       // softmax_u(i, j) = e_uv(i, j) * exp(m_uv - lse_u[i]), likewise
                       // for the v side along columns, so no exponential is recomputed.
                       const Vector a = c.array() * (cache->m_uv - cache->lse_u.array()).exp();
                       const RowVector b = (c.array() * (cache->m_uv - cache->lse_v.array()).exp()).transpose();
                       const Vector wu = c.array() * (cache->m_uu - cache->lse_u.array()).exp();
                       const Vector wv = c.array() * (cache->m_vv - cache->lse_v.array()).exp();

                       Matrix g_uv(n, n), g_uu(n, n), g_vv(n, n);
                       for (Index i = 0; i < n; ++i) {
                         g_uv.row(i) = cache->e_uv.row(i).cwiseProduct((b.array() + a[i]).matrix());
                         // e_uu is symmetric, so g_uu + g_uu^T has entries e_uu(i,j) * (w_i + w_j).
                         g_uu.row(i) = cache->e_uu.row(i).cwiseProduct((wu.transpose().array() + wu[i]).matrix());
                         g_vv.row(i) = cache->e_vv.row(i).cwiseProduct((wv.transpose().array() + wv[i]).matrix());
                         g_uv(i, i) -= 2.0 * c[i];
                       }
                       Matrix du = kernels::gemm(g_uv, v);
                       du.noalias() += kernels::gemm(g_uu, u);
                       Matrix dv = kernels::gemm_tn(g_uv, u);
                       dv.noalias() += kernels::gemm(g_vv, v);
                       t.accumulate(iu, du * inv_tau);
                       t.accumulate(iv, dv * inv_tau);
                     });
}

}  // namespace

ad::Var contrastive_node_losses(ad::Var zu, ad::Var zv, double tau, Index block_size) {
  if (zu.tape() != zv.tape()) throw std::invalid_argument("contrastive_node_losses: different tapes");
  if (zu.rows() != zv.rows() || zu.cols() != zv.cols()) {
    throw DimensionError("contrastive_node_losses: " + shape_string(zu.value()) + " vs " + shape_string(zv.value()));
  }
  if (zu.rows() < 1) throw DimensionError("contrastive_node_losses: no nodes");
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  check_finite(zu.value(), "contrastive_node_losses");
  check_finite(zv.value(), "contrastive_node_losses");
  const Index n = zu.rows();
  if (block_size <= 0 || block_size >= n) return contrastive_full(zu, zv, tau);
  return contrastive_blocked(zu, zv, tau, block_size);
}

LayerLoss layer_loss_terms(ad::Var zu, ad::Var zv, const LossConfig& cfg) {
  cfg.validate();
  if (cfg.similarity == Similarity::cosine) {
    zu = ad::row_l2_normalize(zu);
    zv = ad::row_l2_normalize(zv);
  }
  LayerLoss out;
  out.per_node = contrastive_node_losses(zu, zv, cfg.tau, cfg.block_size);
  out.mean = ad::mean_all(out.per_node);
  return out;
}

ad::Var layer_loss(ad::Var zu, ad::Var zv, const LossConfig& cfg) { return layer_loss_terms(zu, zv, cfg).mean; }

ad::Var attention_scores(std::span<const ad::Var> z, const AttentionVars& attn) {
  if (z.empty()) throw DimensionError("attention: no layers");
  if (attn.q.size() < z.size() || attn.w.size() < z.size()) {
    throw DimensionError("attention: " + std::to_string(z.size()) + " layers but parameters for " +
                         std::to_string(std::min(attn.q.size(), attn.w.size())));
  }
  std::vector<ad::Var> scores;
  scores.reserve(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) {
    const ad::Var hidden = ad::tanh(ad::add_row_bias(ad::matmul(z[k], attn.w[k]), attn.bias));
    scores.push_back(ad::matmul(hidden, attn.q[k]));
  }
  return ad::concat_cols(scores);
}

ad::Var attention_weights(std::span<const ad::Var> z, const AttentionVars& attn) {
  return ad::row_softmax(attention_scores(z, attn));
}

ad::Var total_loss(std::span<const LayerLoss> losses, ad::Var alpha, AttentionMode mode) {
  if (losses.empty()) throw DimensionError("total_loss: no layer losses");
  if (alpha.cols() != static_cast<Index>(losses.size())) {
    throw DimensionError("total_loss: alpha has " + std::to_string(alpha.cols()) + " columns for " +
                         std::to_string(losses.size()) + " layers");
  }
  std::vector<ad::Var> parts;
  parts.reserve(losses.size());
  for (const LayerLoss& l : losses) {
    const ad::Var v = mode == AttentionMode::node_mean ? l.mean : l.per_node;
    if (!v.value().allFinite()) throw NumericalError("total_loss: non-finite layer loss");
    parts.push_back(v);
  }
  if (!alpha.value().allFinite()) throw NumericalError("total_loss: non-finite attention weights");
  const ad::Var stacked = ad::concat_cols(parts);
  if (mode == AttentionMode::node_mean) return ad::sum_all(ad::mul(ad::col_mean(alpha), stacked));
  return ad::scale(ad::sum_all(ad::mul(alpha, stacked)), 1.0 / static_cast<double>(alpha.rows()));
}

ObjectiveTerms amc_objective(std::span<const ad::Var> zu, std::span<const ad::Var> zv, const AttentionVars& attn,
                             const LossConfig& cfg, int target_layers) {
  if (zu.size() != zv.size() || zu.empty()) throw DimensionError("amc_objective: view layer counts differ");
  ObjectiveTerms out;
  if (cfg.layer_mode == LayerMode::last_only) {
    if (target_layers < 1 || static_cast<std::size_t>(target_layers) > zu.size()) {
      throw DimensionError("amc_objective: target layer index out of range");
    }
    const std::size_t k = static_cast<std::size_t>(target_layers) - 1;
    out.layers.push_back(layer_loss_terms(zu[k], zv[k], cfg));
    out.layer_ids.push_back(target_layers);
    out.total = out.layers.back().mean;
    return out;
  }
  for (std::size_t k = 0; k < zu.size(); ++k) {
    out.layers.push_back(layer_loss_terms(zu[k], zv[k], cfg));
    out.layer_ids.push_back(static_cast<int>(k) + 1);
  }
  out.alpha = attention_weights(zu, attn);
  out.total = total_loss(out.layers, out.alpha, cfg.attention_mode);
  return out;
}

}  // namespace amc
