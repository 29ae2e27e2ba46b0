#include "amc/encoder.hpp"
#include "amc/model.hpp"
#include "amc/synthetic.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace amc {
namespace {

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

TEST(Encoder, GlorotStaysInsideBound) {
  Rng rng(1);
  const Matrix w = glorot_uniform(40, 60, rng);
  const double a = std::sqrt(6.0 / 100.0);
  EXPECT_LE(w.cwiseAbs().maxCoeff(), a);
  EXPECT_GT(w.cwiseAbs().maxCoeff(), 0.9 * a);
  EXPECT_NEAR(w.mean(), 0.0, 0.02);
}

TEST(Encoder, GcnStackMatchesDenseFormula) {
  const Dataset d = random_dataset(12, 5, 2, 0.3, 2);
  EncoderShape shape{5, 4, 2, 2, Activation::relu, EncoderKind::gcn};
  const ModelParams m = init_model(shape, 3);
  const GraphView view = identity_view(d, 4);

  ad::Tape tape;
  const ModelVars vars = bind(tape, m);
  const auto layers = encode(tape, view, vars.encoder);
  ASSERT_EQ(layers.size(), 4u);

  const Matrix a = view.adj_target->matrix.to_dense();
  Matrix h = d.features;
  for (int l = 0; l < 2; ++l) {
    h = relu(a * h * m.encoder.target[l]);
    EXPECT_LT((layers[l].value() - h).cwiseAbs().maxCoeff(), 1e-12);
  }
  for (int l = 0; l < 2; ++l) {
    h = relu(a * h * m.encoder.aux[l]);
    EXPECT_LT((layers[2 + l].value() - h).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Encoder, SageLayerMatchesDenseFormula) {
  const Dataset d = random_dataset(10, 3, 2, 0.4, 4);
  EncoderShape shape{3, 4, 1, 0, Activation::relu, EncoderKind::sage};
  const ModelParams m = init_model(shape, 5);
  ad::Tape tape;
  const ModelVars vars = bind(tape, m);
  const auto layers = encode(tape, identity_view(d, 4), vars.encoder);
  ASSERT_EQ(layers.size(), 1u);
  const Matrix mean = mean_aggregation_operator(d.graph).to_dense();
  Matrix cat(10, 6);
  cat << d.features, mean * d.features;
  EXPECT_LT((layers[0].value() - relu(cat * m.encoder.target[0])).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Encoder, AuxMaskCutsColumnsIntoAuxStage) {
  const Dataset d = random_dataset(15, 6, 2, 0.3, 6);
  EncoderShape shape{6, 5, 1, 1, Activation::relu, EncoderKind::gcn};
  const ModelParams m = init_model(shape, 7);
  GraphView view = identity_view(d, 5);
  view.aux_mask = {1, 0, 1, 0, 0};

  ad::Tape tape;
  const ModelVars vars = bind(tape, m);
  const auto layers = encode(tape, view, vars.encoder);
  const Matrix a = view.adj_target->matrix.to_dense();
  Matrix h1 = layers[0].value();
  h1.col(1).setZero();
  h1.col(3).setZero();
  h1.col(4).setZero();
  EXPECT_LT((layers[1].value() - relu(a * h1 * m.encoder.aux[0])).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Encoder, TargetOnlySkipsAuxStage) {
  const Dataset d = random_dataset(10, 4, 2, 0.3, 8);
  const ModelParams m = init_model({4, 3, 2, 3, Activation::prelu, EncoderKind::gcn}, 9);
  ad::Tape tape;
  const ModelVars vars = bind(tape, m);
  EXPECT_EQ(encode(tape, identity_view(d, 3), vars.encoder, false).size(), 2u);
  EXPECT_EQ(encode(tape, identity_view(d, 3), vars.encoder, true).size(), 5u);
}

TEST(Encoder, PreluUsesLearnedSlope) {
  ad::Tape tape;
  Matrix x(1, 2);
  x << -2.0, 3.0;
  const ad::Var y = activate(tape.constant(x), Activation::prelu, tape.leaf(Matrix::Constant(1, 1, 0.25)));
  EXPECT_DOUBLE_EQ(y.value()(0, 0), -0.5);
  EXPECT_DOUBLE_EQ(y.value()(0, 1), 3.0);
  EXPECT_THROW(activate(tape.constant(x), Activation::prelu, {}), std::invalid_argument);
}

TEST(Encoder, FeatureWidthMismatchThrows) {
  const Dataset d = random_dataset(10, 4, 2, 0.3, 10);
  const ModelParams m = init_model({5, 3, 1, 1, Activation::relu, EncoderKind::gcn}, 11);
  ad::Tape tape;
  const ModelVars vars = bind(tape, m);
  EXPECT_THROW(encode(tape, identity_view(d, 3), vars.encoder), DimensionError);
}

TEST(Encoder, ProjectionHeadsNeedOnePerLayer) {
  const Dataset d = random_dataset(10, 4, 2, 0.3, 12);
  const ModelParams m = init_model({4, 3, 2, 2, Activation::relu, EncoderKind::gcn}, 13);
  ad::Tape tape;
  const ModelVars vars = bind(tape, m);
  const auto layers = encode(tape, identity_view(d, 3), vars.encoder);
  const auto z = project(layers, vars.heads);
  ASSERT_EQ(z.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    const Matrix want = relu(layers[k].value() * m.heads[k].w1) * m.heads[k].w2;
    EXPECT_LT((z[k].value() - want).cwiseAbs().maxCoeff(), 1e-13);
  }
  EXPECT_THROW(project(layers, std::span<const HeadVars>(vars.heads).first(2)), DimensionError);
}

TEST(Encoder, ShapeValidation) {
  EncoderShape s{4, 3, 0, 1, Activation::relu, EncoderKind::gcn};
  EXPECT_THROW(s.validate(), ConfigError);
  s.target_layers = 1;
  s.hidden_dim = 0;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Encoder, ParsesActivationNames) {
  EXPECT_EQ(parse_activation("PReLU"), Activation::prelu);
  EXPECT_EQ(parse_activation("relu"), Activation::relu);
  EXPECT_THROW(parse_activation("gelu"), ConfigError);
  EXPECT_EQ(parse_encoder_kind("sage"), EncoderKind::sage);
  EXPECT_THROW(parse_encoder_kind("gat"), ConfigError);
}

}  // namespace
}  // namespace amc
