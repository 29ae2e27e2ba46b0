#pragma once

// Two-stage GNN encoder: a target stage of l1 layers on the target
// adjacency, then an auxiliary stage of l2 layers on the auxiliary
// adjacency fed with the (masked) target output. Every layer's output is
// kept so that each one can be contrasted. Only the target stage output
// is the learned representation.

#include "amc/augment.hpp"
#include "amc/autodiff.hpp"
#include "amc/rng.hpp"

#include <span>
#include <string_view>
#include <vector>

namespace amc {

enum class Activation { relu, prelu };
enum class EncoderKind { gcn, sage };

std::string_view to_string(Activation a);
std::string_view to_string(EncoderKind k);
Activation parse_activation(std::string_view s);
EncoderKind parse_encoder_kind(std::string_view s);

inline constexpr double kDefaultPreluSlope = 0.25;

struct EncoderShape {
  Index in_dim = 0;
  Index hidden_dim = 128;
  int target_layers = 2;
  int aux_layers = 2;
  Activation activation = Activation::relu;
  EncoderKind kind = EncoderKind::gcn;

  int num_layers() const { return target_layers + aux_layers; }
  /// Throws ConfigError on impossible shapes.
  void validate() const;
  bool operator==(const EncoderShape&) const = default;
};

/// Weights are stored input-major: a layer computes h * W.
/// Mean-aggregation layers stack [W_self; W_neighbour] as 2*d_in rows.
struct EncoderParams {
  std::vector<Matrix> target;
  std::vector<Matrix> aux;
  // 1x1 PReLU slopes, one per layer; empty for ReLU.
  std::vector<Matrix> target_slopes;
  std::vector<Matrix> aux_slopes;
};

/// z = relu(h * w1) * w2
struct ProjectionHead {
  Matrix w1;
  Matrix w2;
};

/// Glorot-uniform in [-a, a], a = sqrt(6 / (rows + cols)).
Matrix glorot_uniform(Index rows, Index cols, Rng& rng);

EncoderParams init_encoder(const EncoderShape& shape, Rng& rng);
ProjectionHead init_projection_head(Index in_dim, Index proj_dim, Rng& rng);

struct EncoderVars {
  std::vector<ad::Var> target;
  std::vector<ad::Var> aux;
  std::vector<ad::Var> target_slopes;
  std::vector<ad::Var> aux_slopes;
  Activation activation = Activation::relu;
  EncoderKind kind = EncoderKind::gcn;
};

struct HeadVars {
  ad::Var w1;
  ad::Var w2;
};

ad::Var activate(ad::Var x, Activation act, ad::Var slope);

/// act(adj * h * w). The cheaper association is chosen from the shapes.
ad::Var gcn_layer(const std::shared_ptr<const NormalizedAdjacency>& adj, ad::Var h, ad::Var w, Activation act,
                  ad::Var slope = {});

/// act(concat(h, mean_op * h) * w), mean_op the neighbour-mean operator.
ad::Var sage_layer(const std::shared_ptr<const CsrMatrix>& mean_op, ad::Var h, ad::Var w, Activation act,
                   ad::Var slope = {});

/// Per-layer embeddings h^1..h^M of one view. With include_aux = false only
/// the target stage runs.
std::vector<ad::Var> encode(ad::Tape& tape, const GraphView& view, const EncoderVars& enc, bool include_aux = true);

/// z^k = head_k(h^k). Throws DimensionError when a head is missing.
std::vector<ad::Var> project(std::span<const ad::Var> embeddings, std::span<const HeadVars> heads);

}  // namespace amc
