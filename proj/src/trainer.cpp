#include "amc/trainer.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>

namespace amc {

EncoderShape TrainConfig::encoder_shape(Index in_dim) const {
  EncoderShape s;
  s.in_dim = in_dim;
  s.hidden_dim = hidden_dim;
  s.target_layers = target_layers;
  s.aux_layers = aux_enabled ? aux_layers : 0;
  s.activation = activation;
  s.kind = encoder;
  return s;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight_decay must be non-negative");
  if (!(memory_budget_mb > 0.0)) throw ConfigError("memory_budget_mb must be positive");
  augment.validate();
  loss.validate();
  encoder_shape(1).validate();
}

void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& st, double lr, double wd,
               std::span<const std::string> names) {
  if (params.size() != grads.size()) throw DimensionError("adam_step: parameter and gradient counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() == 0) continue;
    if (grads[i].rows() != params[i]->rows() || grads[i].cols() != params[i]->cols()) {
      throw DimensionError("adam_step: gradient " + shape_string(grads[i]) + " for parameter " +
                           shape_string(*params[i]));
    }
    if (!grads[i].allFinite()) {
      const std::string name = i < names.size() ? names[i] : "#" + std::to_string(i);
      throw NumericalError("non-finite gradient for parameter " + name);
    }
  }
  if (st.m.empty()) {
    for (Matrix* p : params) {
      st.m.push_back(Matrix::Zero(p->rows(), p->cols()));
      st.v.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  if (st.m.size() != params.size()) throw DimensionError("adam_step: state was built for a different parameter list");

  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() == 0) continue;
    Matrix& theta = *params[i];
    const Matrix g = grads[i] + wd * theta;
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g.cwiseProduct(g);
    theta.array() -= lr * (st.m[i].array() / c1) / ((st.v[i].array() / c2).sqrt() + st.eps);
  }
}

std::string format_real(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string TrainHistory::to_csv() const {
  std::string out = "epoch,total_loss";
  for (int k : layer_ids) out += ",loss_k" + std::to_string(k);
  for (int k : layer_ids) out += ",alpha_k" + std::to_string(k);
  out += '\n';
  for (const EpochRecord& r : epochs) {
    out += std::to_string(r.epoch) + ',' + format_real(r.total_loss);
    for (double x : r.layer_losses) out += ',' + format_real(x);
    for (double x : r.alpha_means) out += ',' + format_real(x);
    out += '\n';
  }
  return out;
}

void TrainHistory::write_csv(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DatasetError(file.string() + ": cannot open for writing");
  out << to_csv();
  if (!out) throw DatasetError(file.string() + ": write failed");
}

double similarity_memory_mb(Index nodes, int contrasted_layers) {
  // Three cached N x N blocks per layer plus five transient ones in backward.
  const double n2 = static_cast<double>(nodes) * static_cast<double>(nodes);
  return (3.0 * contrasted_layers + 5.0) * n2 * sizeof(double) / (1024.0 * 1024.0);
}

ObjectiveTerms view_objective(ad::Tape& tape, const ModelVars& vars, const GraphView& view1, const GraphView& view2,
                              const LossConfig& loss, int target_layers) {
  const bool multi = loss.layer_mode == LayerMode::multi;
  // Only the target stage matters when just its last layer is contrasted.
  const std::vector<ad::Var> h1 = encode(tape, view1, vars.encoder, multi);
  const std::vector<ad::Var> h2 = encode(tape, view2, vars.encoder, multi);
  std::vector<ad::Var> z1, z2;
  if (multi) {
    z1 = project(h1, vars.heads);
    z2 = project(h2, vars.heads);
  } else {
    // Placeholders keep layer indexing aligned; only index l1-1 is read.
    z1.assign(h1.size(), ad::Var{});
    z2.assign(h2.size(), ad::Var{});
    const std::size_t k = h1.size() - 1;
    const HeadVars& head = vars.heads.at(k);
    z1[k] = ad::matmul(ad::relu(ad::matmul(h1[k], head.w1)), head.w2);
    z2[k] = ad::matmul(ad::relu(ad::matmul(h2[k], head.w1)), head.w2);
  }
  return amc_objective(z1, z2, vars.attention, loss, target_layers);
}

TrainResult train(const Dataset& d, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  d.validate();
  const auto start = std::chrono::steady_clock::now();

  const EncoderShape shape = cfg.encoder_shape(d.num_features());
  const bool multi = cfg.loss.layer_mode == LayerMode::multi;
  const int contrasted = multi ? shape.num_layers() : 1;
  if (cfg.loss.block_size <= 0 || cfg.loss.block_size >= d.num_nodes()) {
    const double need = similarity_memory_mb(d.num_nodes(), contrasted);
    if (need > cfg.memory_budget_mb) {
      throw ConfigError("full similarity matrices need about " + std::to_string(static_cast<long>(need)) +
                        " MiB (budget " + std::to_string(static_cast<long>(cfg.memory_budget_mb)) +
                        " MiB); set [loss] block_size to a row count such as 1024");
    }
  }

  TrainResult result;
  result.model = init_model(shape, cfg.seed);
  ModelParams& model = result.model;

  std::vector<Matrix*> params;
  std::vector<std::string> names;
  for_each_param(model, [&](const std::string& name, Matrix& x) {
    params.push_back(&x);
    names.push_back(name);
  });

  AdamState adam;
  const Rng view_root = Rng(cfg.seed).derive(0x76696577);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto [view1, view2] = generate_views(d, cfg.augment, shape.hidden_dim, view_root.derive(epoch));

    ad::Tape tape;
    const ModelVars vars = bind(tape, model);
    ObjectiveTerms terms;
    try {
      terms = view_objective(tape, vars, view1, view2, cfg.loss, shape.target_layers);
    } catch (const NumericalError& e) {
      throw NumericalError("epoch " + std::to_string(epoch) + ": " + e.what());
    }
    const double total = terms.total.item();
    if (!std::isfinite(total)) throw NumericalError("epoch " + std::to_string(epoch) + ": non-finite total loss");

    EpochRecord rec;
    rec.epoch = epoch;
    rec.total_loss = total;
    for (const LayerLoss& l : terms.layers) rec.layer_losses.push_back(l.mean.item());
    if (terms.alpha.valid()) {
      const Matrix& alpha = terms.alpha.value();
      const RowVector a = alpha.colwise().mean();
      rec.alpha_means.assign(a.data(), a.data() + a.size());
      rec.alpha_row_error = (alpha.rowwise().sum().array() - 1.0).abs().maxCoeff();
    } else {
      rec.alpha_means.assign(terms.layers.size(), 1.0);
    }
    if (result.history.layer_ids.empty()) result.history.layer_ids = terms.layer_ids;

    tape.backward(terms.total);
    std::vector<Matrix> grads;
    grads.reserve(vars.leaves.size());
    for (const ad::Var& leaf : vars.leaves) grads.push_back(tape.node(leaf.id()).grad);
    try {
      adam_step(params, grads, adam, cfg.learning_rate, cfg.weight_decay, names);
    } catch (const NumericalError& e) {
      throw NumericalError("epoch " + std::to_string(epoch) + ": " + e.what());
    }

    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(result.history.epochs.back());
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace amc
