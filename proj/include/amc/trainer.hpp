#pragma once

#include "amc/augment.hpp"
#include "amc/model.hpp"
#include "amc/objective.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace amc {

struct TrainConfig {
  int epochs = 200;
  double learning_rate = 5e-4;
  double weight_decay = 1e-4;
  Index hidden_dim = 128;
  int target_layers = 2;
  int aux_layers = 2;
  bool aux_enabled = true;
  Activation activation = Activation::relu;
  EncoderKind encoder = EncoderKind::gcn;
  AugmentConfig augment;
  LossConfig loss;
  std::uint64_t seed = 0;
  /// Refuse full N x N similarity storage above this many MiB.
  double memory_budget_mb = 3072.0;

  EncoderShape encoder_shape(Index in_dim) const;
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;
};

/// One bias-corrected Adam step with coupled weight decay (g += wd * theta).
/// An empty gradient means the parameter took no part in this step and is
/// left untouched. Throws NumericalError naming the first non-finite
/// gradient; nothing is updated in that case.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& st, double lr, double wd,
               std::span<const std::string> names = {});

struct EpochRecord {
  int epoch = 0;  // 1-based
  double total_loss = 0.0;
  std::vector<double> layer_losses;
  std::vector<double> alpha_means;  // node-mean attention per contrasted layer
  /// max_i |sum_k alpha_ik - 1|; 0 when no attention is used.
  double alpha_row_error = 0.0;
};

struct TrainHistory {
  std::vector<int> layer_ids;  // 1-based encoder layers that were contrasted
  std::vector<EpochRecord> epochs;

  /// "epoch,total_loss,loss_k1..,alpha_k1.." with shortest round-trip reals.
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& file) const;
};

struct TrainResult {
  ModelParams model;
  TrainHistory history;
  double seconds = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Full-batch training: each epoch draws two fresh views, encodes, projects,
/// evaluates the objective and takes one Adam step on every parameter that
/// received a gradient. Throws NumericalError("epoch E: ...") on a
/// non-finite loss or gradient.
TrainResult train(const Dataset& d, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// One training step's graph: encodes both views, projects the contrasted
/// layers and evaluates the objective.
ObjectiveTerms view_objective(ad::Tape& tape, const ModelVars& vars, const GraphView& view1, const GraphView& view2,
                              const LossConfig& loss, int target_layers);

/// Bytes held by the full similarity cache of one epoch (ignoring blocks).
double similarity_memory_mb(Index nodes, int contrasted_layers);

/// Shortest decimal text that parses back to exactly `x`.
std::string format_real(double x);

}  // namespace amc
