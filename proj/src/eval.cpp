#include "amc/eval.hpp"

#include "amc/kernels.hpp"
#include "amc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace amc {

LabeledNodes LabeledNodes::from_split(const std::vector<int>& labels, const std::vector<SplitTag>& split,
                                      SplitTag tag) {
  if (labels.size() != split.size()) throw DimensionError("labels and split differ in length");
  LabeledNodes out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (split[i] == tag && labels[i] >= 0) {
      out.nodes.push_back(static_cast<Index>(i));
      out.labels.push_back(labels[i]);
    }
  }
  return out;
}

namespace {

Matrix gather_rows(const Matrix& m, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = m.row(rows[r]);
  return out;
}

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
};

Evaluation evaluate(const Matrix& logits, const std::vector<int>& labels) {
  Evaluation e;
  if (labels.empty()) return e;
  const Vector lse = kernels::row_logsumexp(logits);
  int correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Index r = static_cast<Index>(i);
    Index arg = 0;
    logits.row(r).maxCoeff(&arg);
    correct += arg == labels[i];
    e.loss += lse[r] - logits(r, labels[i]);
  }
  e.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  e.loss /= static_cast<double>(labels.size());
  return e;
}

}  // namespace

Matrix LinearProbe::logits(const Matrix& emb) const {
  if (emb.cols() != weight.rows()) throw DimensionError("probe expects " + std::to_string(weight.rows()) + " columns");
  const Matrix z = (emb.rowwise() - mean).array().rowwise() * inv_std.array();
  Matrix out = kernels::gemm(z, weight);
  out.rowwise() += bias;
  return out;
}

std::vector<int> LinearProbe::predict(const Matrix& emb) const {
  const Matrix l = logits(emb);
  std::vector<int> out(static_cast<std::size_t>(l.rows()));
  for (Index i = 0; i < l.rows(); ++i) {
    Index arg = 0;
    l.row(i).maxCoeff(&arg);
    out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
  }
  return out;
}

LinearProbe fit_probe(const Matrix& emb, const LabeledNodes& train, const LabeledNodes& val, int num_classes,
                      const ProbeConfig& cfg) {
  if (train.nodes.empty()) throw DatasetError("linear probe: the train split has no labeled nodes");
  if (num_classes < 1) throw DimensionError("linear probe: num_classes must be positive");
  if (cfg.l2.empty()) throw ConfigError("linear probe: no L2 candidates");
  if (!emb.allFinite()) throw NumericalError("linear probe: non-finite embeddings");
  for (int y : train.labels) {
    if (y < 0 || y >= num_classes) throw DimensionError("linear probe: label out of range");
  }

  LinearProbe probe;
  std::vector<int> seen(static_cast<std::size_t>(num_classes), 0);
  for (int y : train.labels) seen[static_cast<std::size_t>(y)] = 1;
  for (int c = 0; c < num_classes; ++c) {
    if (!seen[static_cast<std::size_t>(c)]) probe.absent_classes.push_back(c);
  }

  const Index d = emb.cols();
  probe.mean = emb.colwise().mean();
  const RowVector var = (emb.rowwise() - probe.mean).array().square().colwise().mean();
  probe.inv_std = var.unaryExpr([](double v) { return v > 1e-24 ? 1.0 / std::sqrt(v) : 0.0; });

  const auto standardize = [&](const Matrix& x) -> Matrix {
    return (x.rowwise() - probe.mean).array().rowwise() * probe.inv_std.array();
  };
  const Matrix xt = standardize(gather_rows(emb, train.nodes));
  const Matrix xv = standardize(gather_rows(emb, val.nodes));
  const Index n = xt.rows();
  Matrix onehot = Matrix::Zero(n, num_classes);
  for (Index i = 0; i < n; ++i) onehot(i, train.labels[static_cast<std::size_t>(i)]) = 1.0;

  // Each candidate penalty gets its own run; the best validation step
  // across all of them is kept (ties: lower val loss, then the earlier one).
  double best_acc = -1.0, best_loss = std::numeric_limits<double>::infinity();
  for (double l2 : cfg.l2) {
    Matrix w = Matrix::Zero(d, num_classes);
    RowVector b = RowVector::Zero(num_classes);
    Matrix mw = Matrix::Zero(d, num_classes), vw = mw;
    RowVector mb = RowVector::Zero(num_classes), vb = mb;
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    for (int step = 1; step <= cfg.steps; ++step) {
      Matrix logits = kernels::gemm(xt, w);
      logits.rowwise() += b;
      const Matrix grad_logits = (kernels::row_softmax(logits) - onehot) / static_cast<double>(n);
      const Matrix gw = kernels::gemm_tn(xt, grad_logits) + l2 * w;
      const RowVector gb = grad_logits.colwise().sum();
      mw = beta1 * mw + (1 - beta1) * gw;
      vw = beta2 * vw + (1 - beta2) * gw.cwiseProduct(gw);
      mb = beta1 * mb + (1 - beta1) * gb;
      vb = beta2 * vb + (1 - beta2) * gb.cwiseProduct(gb);
      const double c1 = 1 - std::pow(beta1, step), c2 = 1 - std::pow(beta2, step);
      w.array() -= cfg.learning_rate * (mw.array() / c1) / ((vw.array() / c2).sqrt() + eps);
      b.array() -= cfg.learning_rate * (mb.array() / c1) / ((vb.array() / c2).sqrt() + eps);

      if (val.nodes.empty()) continue;
      Matrix val_logits = kernels::gemm(xv, w);
      val_logits.rowwise() += b;
      const Evaluation e = evaluate(val_logits, val.labels);
      if (e.accuracy > best_acc || (e.accuracy == best_acc && e.loss < best_loss)) {
        best_acc = e.accuracy;
        best_loss = e.loss;
        probe.weight = w;
        probe.bias = b;
        probe.best_step = step;
        probe.l2 = l2;
      }
    }
    if (val.nodes.empty()) {
      // Nothing to select on: the first candidate's last step.
      probe.weight = w;
      probe.bias = b;
      probe.best_step = cfg.steps;
      probe.l2 = l2;
      break;
    }
  }
  probe.best_val_accuracy = std::max(best_acc, 0.0);
  return probe;
}

ProbeResult score_predictions(const std::vector<int>& predicted, const std::vector<int>& truth, int num_classes) {
  if (predicted.size() != truth.size()) throw DimensionError("score: prediction and truth lengths differ");
  ProbeResult r;
  std::vector<double> tp(static_cast<std::size_t>(num_classes)), fp(tp), fn(tp);
  int correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto p = static_cast<std::size_t>(predicted[i]), t = static_cast<std::size_t>(truth[i]);
    if (p >= tp.size() || t >= tp.size()) throw DimensionError("score: class id out of range");
    if (p == t) {
      ++correct;
      tp[t] += 1;
    } else {
      fp[p] += 1;
      fn[t] += 1;
    }
  }
  double stp = 0, sfp = 0, sfn = 0;
  for (std::size_t c = 0; c < tp.size(); ++c) {
    const double denom = 2 * tp[c] + fp[c] + fn[c];
    r.per_class_f1.push_back(denom > 0 ? 2 * tp[c] / denom : 0.0);
    stp += tp[c];
    sfp += fp[c];
    sfn += fn[c];
  }
  r.accuracy = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
  r.micro_f1 = (2 * stp + sfp + sfn) > 0 ? 2 * stp / (2 * stp + sfp + sfn) : 0.0;
  return r;
}

ProbeResult linear_probe(const Matrix& emb, const std::vector<int>& labels, const std::vector<SplitTag>& split,
                         int num_classes, const ProbeConfig& cfg) {
  if (static_cast<Index>(labels.size()) != emb.rows()) throw DimensionError("linear probe: label count differs from rows");
  const LinearProbe probe = fit_probe(emb, LabeledNodes::from_split(labels, split, SplitTag::train),
                                     LabeledNodes::from_split(labels, split, SplitTag::val), num_classes, cfg);
  const LabeledNodes test = LabeledNodes::from_split(labels, split, SplitTag::test);
  ProbeResult r = score_predictions(probe.predict(gather_rows(emb, test.nodes)), test.labels, num_classes);
  r.val_accuracy = probe.best_val_accuracy;
  r.best_step = probe.best_step;
  r.l2 = probe.l2;
  r.absent_classes = probe.absent_classes;
  return r;
}

namespace {

double sq_dist(const Matrix& a, Index i, const Matrix& b, Index j) { return (a.row(i) - b.row(j)).squaredNorm(); }

}  // namespace

KMeansResult kmeans(const Matrix& emb, int k, std::uint64_t seed, int max_iter) {
  const Index n = emb.rows();
  if (k < 1 || k > n) throw std::invalid_argument("kmeans: k must lie in [1, N]");
  Rng rng(seed);
  KMeansResult r;
  r.centroids.resize(k, emb.cols());

  // k-means++ seeding.
  std::vector<double> closest(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  Index pick = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
  for (int c = 0; c < k; ++c) {
    r.centroids.row(c) = emb.row(pick);
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
      closest[i] = std::min(closest[i], sq_dist(emb, i, r.centroids, c));
      total += closest[i];
    }
    if (c + 1 == k) break;
    if (total <= 0.0) {
      pick = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
      continue;
    }
    double target = rng.uniform() * total;
    pick = n - 1;
    for (Index i = 0; i < n; ++i) {
      target -= closest[i];
      if (target < 0.0 && closest[i] > 0.0) {
        pick = i;
        break;
      }
    }
  }

  r.assignments.assign(static_cast<std::size_t>(n), -1);
  std::vector<double> dist(static_cast<std::size_t>(n));
  for (r.iterations = 1; r.iterations <= max_iter; ++r.iterations) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double dd = sq_dist(emb, i, r.centroids, c);
        if (dd < bd) {
          bd = dd;
          best = c;
        }
      }
      dist[i] = bd;
      if (r.assignments[i] != best) {
        r.assignments[i] = best;
        changed = true;
      }
    }
    Matrix sums = Matrix::Zero(k, emb.cols());
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(r.assignments[i]) += emb.row(i);
      ++counts[static_cast<std::size_t>(r.assignments[i])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        r.centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      // Empty cluster: move it onto the worst-served point.
      const Index far = static_cast<Index>(std::max_element(dist.begin(), dist.end()) - dist.begin());
      r.centroids.row(c) = emb.row(far);
      dist[far] = 0.0;
      changed = true;
    }
    if (!changed) break;
  }
  r.iterations = std::min(r.iterations, max_iter);
  r.inertia = 0.0;
  for (Index i = 0; i < n; ++i) r.inertia += sq_dist(emb, i, r.centroids, r.assignments[i]);
  return r;
}

ClusterReport clustering_indices(const Matrix& emb, const std::vector<int>& assignments) {
  const Index n = emb.rows();
  if (static_cast<Index>(assignments.size()) != n) throw DimensionError("clustering: assignment count differs from rows");
  int k = 0;
  for (int a : assignments) {
    if (a < 0) throw std::invalid_argument("clustering: negative cluster id");
    k = std::max(k, a + 1);
  }
  std::vector<Index> count(static_cast<std::size_t>(k), 0);
  for (int a : assignments) ++count[static_cast<std::size_t>(a)];
  // Relabel to the non-empty clusters only.
  std::vector<int> remap(static_cast<std::size_t>(k), -1);
  int used = 0;
  for (int c = 0; c < k; ++c) {
    if (count[static_cast<std::size_t>(c)] > 0) remap[static_cast<std::size_t>(c)] = used++;
  }
  if (used < 2) throw std::invalid_argument("clustering indices need at least 2 non-empty clusters");
  std::vector<int> lab(assignments.size());
  for (std::size_t i = 0; i < lab.size(); ++i) lab[i] = remap[static_cast<std::size_t>(assignments[i])];
  k = used;

  std::vector<double> size(static_cast<std::size_t>(k), 0.0);
  Matrix centroids = Matrix::Zero(k, emb.cols());
  for (Index i = 0; i < n; ++i) {
    centroids.row(lab[i]) += emb.row(i);
    size[static_cast<std::size_t>(lab[i])] += 1.0;
  }
  for (int c = 0; c < k; ++c) centroids.row(c) /= size[static_cast<std::size_t>(c)];
  const RowVector global = emb.colwise().mean();

  ClusterReport r;
  r.clusters = k;

  double within = 0.0, between = 0.0;
  std::vector<double> scatter(static_cast<std::size_t>(k), 0.0);
  for (Index i = 0; i < n; ++i) {
    within += (emb.row(i) - centroids.row(lab[i])).squaredNorm();
    scatter[static_cast<std::size_t>(lab[i])] += (emb.row(i) - centroids.row(lab[i])).norm();
  }
  for (int c = 0; c < k; ++c) {
    between += size[static_cast<std::size_t>(c)] * (centroids.row(c) - global).squaredNorm();
    scatter[static_cast<std::size_t>(c)] /= size[static_cast<std::size_t>(c)];
  }
  r.chi = within == 0.0 ? 1.0 : (between / (k - 1)) / (within / static_cast<double>(n - k));

  double dbi = 0.0;
  for (int a = 0; a < k; ++a) {
    double worst = 0.0;
    for (int b = 0; b < k; ++b) {
      if (a == b) continue;
      const double sep = (centroids.row(a) - centroids.row(b)).norm();
      const double s = scatter[static_cast<std::size_t>(a)] + scatter[static_cast<std::size_t>(b)];
      worst = std::max(worst, sep > 0.0 ? s / sep : (s > 0.0 ? std::numeric_limits<double>::infinity() : 0.0));
    }
    dbi += worst;
  }
  r.dbi = dbi / k;

  std::vector<double> sil(static_cast<std::size_t>(n), 0.0);
#pragma omp parallel for schedule(dynamic, 16) if (!kernels::deterministic())
  for (Index i = 0; i < n; ++i) {
    const auto own = static_cast<std::size_t>(lab[i]);
    if (size[own] <= 1.0) continue;
    std::vector<double> sums(static_cast<std::size_t>(k), 0.0);
    const Vector d = (emb.rowwise() - emb.row(i)).rowwise().norm();
    for (Index j = 0; j < n; ++j) sums[static_cast<std::size_t>(lab[j])] += d[j];
    const double a = sums[own] / (size[own] - 1.0);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < sums.size(); ++c) {
      if (c != own) b = std::min(b, sums[c] / size[c]);
    }
    const double m = std::max(a, b);
    sil[static_cast<std::size_t>(i)] = m > 0.0 ? (b - a) / m : 0.0;
  }
  double total = 0.0;
  for (double s : sil) total += s;
  r.sc = total / static_cast<double>(n);
  return r;
}

Matrix cosine_matrix(const Matrix& rows) {
  const Matrix unit = kernels::row_l2_normalize(rows);
  Matrix s = kernels::gemm_nt(unit, unit);
  for (Index i = 0; i < rows.rows(); ++i) {
    if (rows.row(i).squaredNorm() > 0.0) s(i, i) = 1.0;
  }
  // Symmetric by construction up to rounding; force it exactly.
  s = 0.5 * (s + s.transpose()).eval();
  return s;
}

StabilityMatrix stability_matrix(const ModelParams& model, const Dataset& d, Index node, double p, int trials,
                                 std::uint64_t seed) {
  if (node < 0 || node >= d.num_nodes()) throw std::invalid_argument("stability: node out of range");
  if (trials < 1) throw std::invalid_argument("stability: trials must be positive");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("stability: mask ratio must lie in [0, 1]");
  const Rng root(seed);
  Matrix h(trials, model.embedding_dim());
  StabilityMatrix out;
  for (int t = 0; t < trials; ++t) {
    Rng rng = root.derive(static_cast<std::uint64_t>(t));
    const MaskedFeatures masked = mask_features(d.features, p, rng);
    h.row(t) = embed(model, d.graph, masked.features).row(node);
    if (h.row(t).squaredNorm() == 0.0) out.zero_norm_trials.push_back(t);
  }
  out.s = cosine_matrix(h);
  double sum = 0.0;
  for (int i = 0; i < trials; ++i) {
    for (int j = 0; j < trials; ++j) {
      if (i != j) sum += out.s(i, j);
    }
  }
  out.mean_offdiag = trials > 1 ? sum / (static_cast<double>(trials) * (trials - 1)) : 1.0;
  return out;
}

std::vector<SweepPoint> sparsity_sweep(const TrainClosure& train_fn, const Dataset& d, const std::vector<double>& ratios,
                                       std::uint64_t seed, const ProbeConfig& probe) {
  std::vector<SweepPoint> out;
  const Rng root(seed);
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double ratio = ratios[i];
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("sweep ratios must lie in [0, 1]");
    Dataset polluted = d;
    Rng rng = root.derive(i);
    polluted.features = mask_features(d.features, ratio, rng).features;
    const ModelParams model = train_fn(polluted);
    const Matrix emb = embed(model, polluted.graph, polluted.features);
    out.push_back({ratio, linear_probe(emb, d.labels, d.split, d.num_classes, probe).accuracy});
  }
  return out;
}

void write_embeddings(const Matrix& emb, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DatasetError(file.string() + ": cannot open for writing");
  std::string text = std::to_string(emb.rows()) + ' ' + std::to_string(emb.cols()) + '\n';
  for (Index i = 0; i < emb.rows(); ++i) {
    for (Index j = 0; j < emb.cols(); ++j) {
      if (j) text += ' ';
      text += format_real(emb(i, j));
    }
    text += '\n';
  }
  out << text;
  if (!out) throw DatasetError(file.string() + ": write failed");
}

Matrix read_embeddings(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DatasetError(file.string() + ": cannot open embedding file");
  std::string line;
  if (!std::getline(in, line)) throw DatasetError(file.string() + ":1: missing header");
  std::istringstream header(line);
  long long n = -1, d = -1;
  if (!(header >> n >> d) || n < 0 || d < 0) throw DatasetError(file.string() + ":1: header must be \"N d\"");
  Matrix emb(n, d);
  for (long long i = 0; i < n; ++i) {
    const std::string where = file.string() + ":" + std::to_string(i + 2);
    if (!std::getline(in, line)) throw DatasetError(where + ": expected " + std::to_string(n) + " rows");
    std::istringstream row(line);
    for (long long j = 0; j < d; ++j) {
      if (!(row >> emb(i, j))) throw DatasetError(where + ": expected " + std::to_string(d) + " values");
    }
    std::string extra;
    if (row >> extra) throw DatasetError(where + ": more than " + std::to_string(d) + " values");
  }
  return emb;
}

}  // namespace amc
