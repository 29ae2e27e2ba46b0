#include "amc/synthetic.hpp"
#include "amc/trainer.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <charconv>
#include <cmath>
#include <limits>

namespace amc {
namespace {

TEST(Adam, FirstStepMatchesHandComputation) {
  Matrix p = Matrix::Constant(1, 1, 1.0);
  Matrix* params[] = {&p};
  const Matrix grads[] = {Matrix::Constant(1, 1, 0.5)};
  AdamState st;
  adam_step(params, grads, st, 0.1, 0.0, {});
  // Bias-corrected m and v give m_hat / sqrt(v_hat) = sign(g).
  EXPECT_NEAR(p(0, 0), 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
}

TEST(Adam, WeightDecayIsAddedToTheGradient) {
  Matrix a = Matrix::Constant(1, 1, 2.0), b = Matrix::Constant(1, 1, 2.0);
  Matrix* pa[] = {&a};
  Matrix* pb[] = {&b};
  AdamState sa, sb;
  for (int i = 0; i < 5; ++i) {
    const Matrix ga[] = {Matrix::Constant(1, 1, 0.3)};
    const Matrix gb[] = {Matrix::Constant(1, 1, 0.3 + 0.1 * b(0, 0))};
    adam_step(pa, ga, sa, 0.01, 0.1, {});
    adam_step(pb, gb, sb, 0.01, 0.0, {});
  }
  EXPECT_NEAR(a(0, 0), b(0, 0), 1e-15);
}

TEST(Adam, EmptyGradientLeavesParameterAlone) {
  Matrix p = Matrix::Ones(2, 2), q = Matrix::Ones(2, 2);
  Matrix* params[] = {&p, &q};
  const Matrix grads[] = {Matrix(), Matrix::Ones(2, 2)};
  AdamState st;
  adam_step(params, grads, st, 0.1, 0.5, {});
  EXPECT_EQ(p, Matrix::Ones(2, 2));
  EXPECT_LT(q(0, 0), 1.0);
}

TEST(Adam, NonFiniteGradientNamesParameterAndUpdatesNothing) {
  Matrix p = Matrix::Ones(1, 2), q = Matrix::Ones(1, 1);
  Matrix* params[] = {&p, &q};
  Matrix bad = Matrix::Ones(1, 1);
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  const Matrix grads[] = {Matrix::Ones(1, 2), bad};
  const std::string names[] = {"first", "second"};
  AdamState st;
  try {
    adam_step(params, grads, st, 0.1, 0.0, names);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("second"), std::string::npos);
  }
  EXPECT_EQ(p, Matrix::Ones(1, 2));
  EXPECT_EQ(st.step, 0);
}

TEST(FormatReal, RoundTripsExactly) {
  for (double x : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 8.54342001}) {
    const std::string s = format_real(x);
    double back = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    EXPECT_EQ(back, x) << s;
  }
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.epochs = 8;
  c.hidden_dim = 8;
  c.learning_rate = 0.01;
  c.seed = 3;
  return c;
}

TEST(Train, ConfigValidation) {
  TrainConfig c = tiny_config();
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.loss.tau = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.augment.p_A1 = 2.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Train, HistoryHasOneRowPerEpochWithNormalizedAttention) {
  const Dataset d = two_cluster_toy(15, 6, 1);
  const TrainConfig cfg = tiny_config();
  int callbacks = 0;
  const TrainResult r = train(d, cfg, [&](const EpochRecord&) { ++callbacks; });
  EXPECT_EQ(callbacks, cfg.epochs);
  ASSERT_EQ(r.history.epochs.size(), static_cast<std::size_t>(cfg.epochs));
  EXPECT_EQ(r.history.layer_ids, (std::vector<int>{1, 2, 3, 4}));
  for (const EpochRecord& e : r.history.epochs) {
    double s = 0.0;
    for (double a : e.alpha_means) s += a;
    EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_LT(e.alpha_row_error, 1e-12);
    double weighted = 0.0;
    for (std::size_t k = 0; k < e.alpha_means.size(); ++k) weighted += e.alpha_means[k] * e.layer_losses[k];
    EXPECT_NEAR(weighted, e.total_loss, 1e-12);
  }
  const std::string csv = r.history.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "epoch,total_loss,loss_k1,loss_k2,loss_k3,loss_k4,alpha_k1,alpha_k2,alpha_k3,alpha_k4");
}

TEST(Train, SameSeedSameResult) {
  const Dataset d = two_cluster_toy(12, 5, 2);
  const TrainResult a = train(d, tiny_config());
  const TrainResult b = train(d, tiny_config());
  EXPECT_EQ(a.history.to_csv(), b.history.to_csv());
  EXPECT_EQ(a.model.encoder.target[1], b.model.encoder.target[1]);
  TrainConfig other = tiny_config();
  other.seed = 4;
  EXPECT_NE(train(d, other).history.to_csv(), a.history.to_csv());
}

TEST(Train, LossDecreasesOnSeparableToy) {
  const Dataset d = two_cluster_toy(20, 8, 3);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 60;
  const TrainResult r = train(d, cfg);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 5; ++i) {
    first += r.history.epochs[i].total_loss;
    last += r.history.epochs[cfg.epochs - 1 - i].total_loss;
  }
  EXPECT_LT(last, first);
}

TEST(Train, LastOnlyContrastsTheTargetOutput) {
  const Dataset d = two_cluster_toy(10, 5, 4);
  TrainConfig cfg = tiny_config();
  cfg.loss.layer_mode = LayerMode::last_only;
  const TrainResult r = train(d, cfg);
  EXPECT_EQ(r.history.layer_ids, std::vector<int>{2});
  for (const EpochRecord& e : r.history.epochs) {
    EXPECT_EQ(e.alpha_means, std::vector<double>{1.0});
    EXPECT_DOUBLE_EQ(e.total_loss, e.layer_losses[0]);
  }
}

TEST(Train, WithoutAuxiliaryOnlyTargetLayersAreContrasted) {
  const Dataset d = two_cluster_toy(10, 5, 5);
  TrainConfig cfg = tiny_config();
  cfg.aux_enabled = false;
  const TrainResult r = train(d, cfg);
  EXPECT_EQ(r.history.layer_ids, (std::vector<int>{1, 2}));
  EXPECT_EQ(r.model.shape.aux_layers, 0);
}

TEST(ViewObjective, GradientMatchesFiniteDifferences) {
  const Dataset d = random_dataset(6, 4, 2, 0.6, 21);
  ModelParams m = init_model({4, 3, 2, 1, Activation::prelu, EncoderKind::gcn}, 22);
  for (auto& s : m.encoder.target_slopes) s.setConstant(0.3);
  for (auto& s : m.encoder.aux_slopes) s.setConstant(0.3);
  AugmentConfig aug;
  aug.q_A1 = 0.3;
  const auto views = generate_views(d, aug, 3, Rng(23));
  std::vector<Matrix> params;
  for_each_param(m, [&](const std::string&, const Matrix& p) { params.push_back(p); });
  for (LayerMode mode : {LayerMode::multi, LayerMode::last_only}) {
    LossConfig loss;
    loss.layer_mode = mode;
    const ad::ScalarFunction f = [&](ad::Tape& tape, std::span<const ad::Var> leaves) {
      return view_objective(tape, attach(m, leaves), views.first, views.second, loss, 2).total;
    };
    EXPECT_LT(ad::finite_diff_check(f, params).max_rel_error, 1e-6) << to_string(mode);
  }
}

TEST(Train, BlockedSimilaritiesGiveTheSameRun) {
  const Dataset d = two_cluster_toy(10, 5, 6);
  TrainConfig blocked = tiny_config();
  blocked.loss.block_size = 7;
  const TrainResult a = train(d, tiny_config());
  const TrainResult b = train(d, blocked);
  for (std::size_t e = 0; e < a.history.epochs.size(); ++e) {
    EXPECT_NEAR(a.history.epochs[e].total_loss, b.history.epochs[e].total_loss, 1e-9);
  }
}

TEST(Train, MemoryBudgetSuggestsBlocks) {
  const Dataset d = two_cluster_toy(10, 5, 7);
  TrainConfig cfg = tiny_config();
  cfg.memory_budget_mb = 1e-6;
  try {
    train(d, cfg);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("block_size"), std::string::npos);
  }
  cfg.loss.block_size = 4;
  EXPECT_NO_THROW(train(d, cfg));
}

TEST(Train, MemoryEstimate) {
  // (3L + 5) N x N doubles.
  EXPECT_NEAR(similarity_memory_mb(1024, 4), 17.0 * 1024 * 1024 * 8 / (1024.0 * 1024.0), 1e-9);
}

}  // namespace
}  // namespace amc
