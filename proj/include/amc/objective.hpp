#pragma once

// Adaptive multi-layer contrastive objective.
//
// For each contrasted layer k a symmetric NT-Xent loss compares the two
// views' projections; inter-view and intra-view pairs are negatives. A
// small attention network scores every layer per node, softmax over layers
// gives alpha, and the total loss weighs the layer losses by alpha.

#include "amc/autodiff.hpp"
#include "amc/rng.hpp"

#include <span>
#include <string_view>
#include <vector>

namespace amc {

enum class Similarity { cosine, dot };
enum class LayerMode { multi, last_only };
/// node_mean: sum_k mean_i(alpha_ik) * L^k.
/// per_node:  mean_i sum_k alpha_ik * l_ik with l_ik the node's own loss.
enum class AttentionMode { node_mean, per_node };

std::string_view to_string(Similarity s);
std::string_view to_string(LayerMode m);
std::string_view to_string(AttentionMode m);
Similarity parse_similarity(std::string_view s);
LayerMode parse_layer_mode(std::string_view s);
AttentionMode parse_attention_mode(std::string_view s);

struct LossConfig {
  double tau = 0.9;
  Similarity similarity = Similarity::cosine;
  LayerMode layer_mode = LayerMode::multi;
  AttentionMode attention_mode = AttentionMode::node_mean;
  /// Rows per similarity block; 0 materializes the full N x N matrices.
  Index block_size = 0;

  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

/// Per layer k: q (d_a x 1) and W stored transposed (d_p x d_a) so the
/// score is tanh(z * W + b) * q. The bias b (1 x d_a) is shared.
struct AttentionParams {
  std::vector<Matrix> q;
  std::vector<Matrix> w;
  Matrix bias;
};

AttentionParams init_attention(int layers, Index proj_dim, Index attn_dim, Rng& rng);

struct AttentionVars {
  std::vector<ad::Var> q;
  std::vector<ad::Var> w;
  ad::Var bias;
};

/// Fused symmetric NT-Xent on raw dot products: returns the N x 1 column
/// of 0.5 * (l(u_i, v_i) + l(v_i, u_i)) with
///   l(u_i, v_i) = -log( e^{u_i.v_i/t} / (sum_j e^{u_i.v_j/t} + sum_{j!=i} e^{u_i.u_j/t}) ).
/// Log-sum-exp is max-shifted. block_size in (0, N) bounds memory to
/// block_size x N by recomputing similarities in the backward pass.
ad::Var contrastive_node_losses(ad::Var zu, ad::Var zv, double tau, Index block_size = 0);

struct LayerLoss {
  ad::Var per_node;  // N x 1
  ad::Var mean;      // 1 x 1, the layer loss L^k
};

/// Cosine mode L2-normalizes rows first; dot mode uses raw projections.
LayerLoss layer_loss_terms(ad::Var zu, ad::Var zv, const LossConfig& cfg);
ad::Var layer_loss(ad::Var zu, ad::Var zv, const LossConfig& cfg);

/// omega (N x M): omega_ik = q_k . tanh(W_k^T z_ik + b).
ad::Var attention_scores(std::span<const ad::Var> z, const AttentionVars& attn);
/// alpha = row softmax of the scores.
ad::Var attention_weights(std::span<const ad::Var> z, const AttentionVars& attn);

ad::Var total_loss(std::span<const LayerLoss> losses, ad::Var alpha, AttentionMode mode);

struct ObjectiveTerms {
  ad::Var total;
  std::vector<LayerLoss> layers;
  std::vector<int> layer_ids;  // 1-based encoder layer of each entry in `layers`
  ad::Var alpha;               // unset in last_only mode
};

/// The whole objective from both views' projections. `zu` / `zv` hold all
/// contrasted layers in encoder order; `target_layers` marks which one is
/// the target stage output (used by last_only mode).
ObjectiveTerms amc_objective(std::span<const ad::Var> zu, std::span<const ad::Var> zv, const AttentionVars& attn,
                             const LossConfig& cfg, int target_layers);

}  // namespace amc
