#include "amc/autodiff.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace amc::ad {
namespace {

using test::random_matrix;

constexpr double kTol = 1e-7;

// Wraps a unary op into a scalar by a fixed random projection, so every
// output entry contributes a distinct weight to the gradient.
ScalarFunction unary(std::function<Var(Var)> op, Index r, Index c, unsigned seed) {
  const Matrix weights = random_matrix(r, c, seed);
  return [op, weights](Tape& t, std::span<const Var> p) { return sum_all(mul(op(p[0]), t.constant(weights))); };
}

TEST(Autodiff, MatmulGradient) {
  const Matrix w = random_matrix(3, 2, 1);
  const ScalarFunction f = [w](Tape& t, std::span<const Var> p) {
    return sum_all(mul(matmul(p[0], p[1]), t.constant(w)));
  };
  EXPECT_LT(finite_diff_check(f, {random_matrix(3, 4, 2), random_matrix(4, 2, 3)}).max_rel_error, kTol);
}

TEST(Autodiff, ElementwiseOpsGradients) {
  // Shift entries away from the relu kink so central differences are exact enough.
  Matrix x = random_matrix(4, 3, 5);
  for (Index i = 0; i < x.size(); ++i) {
    if (std::abs(x.data()[i]) < 0.05) x.data()[i] = 0.3;
  }
  EXPECT_LT(finite_diff_check(unary([](Var v) { return relu(v); }, 4, 3, 6), {x}).max_rel_error, kTol);
  EXPECT_LT(finite_diff_check(unary([](Var v) { return tanh(v); }, 4, 3, 7), {x}).max_rel_error, kTol);
  EXPECT_LT(finite_diff_check(unary([](Var v) { return exp(v); }, 4, 3, 8), {x}).max_rel_error, kTol);
  EXPECT_LT(finite_diff_check(unary([](Var v) { return scale(v, -2.5); }, 4, 3, 9), {x}).max_rel_error, kTol);
  const Matrix pos = x.cwiseAbs().array() + 0.5;
  EXPECT_LT(finite_diff_check(unary([](Var v) { return log(v); }, 4, 3, 10), {pos}).max_rel_error, kTol);
}

TEST(Autodiff, PreluGradientCoversSlope) {
  Matrix x = random_matrix(5, 3, 11);
  for (Index i = 0; i < x.size(); ++i) {
    if (std::abs(x.data()[i]) < 0.05) x.data()[i] = -0.4;
  }
  const Matrix w = random_matrix(5, 3, 12);
  const ScalarFunction f = [w](Tape& t, std::span<const Var> p) { return sum_all(mul(prelu(p[0], p[1]), t.constant(w))); };
  EXPECT_LT(finite_diff_check(f, {x, Matrix::Constant(1, 1, 0.25)}).max_rel_error, kTol);
}

TEST(Autodiff, RowOpsGradients) {
  const Matrix x = random_matrix(4, 5, 13);
  EXPECT_LT(finite_diff_check(unary([](Var v) { return row_softmax(v); }, 4, 5, 14), {x}).max_rel_error, kTol);
  EXPECT_LT(finite_diff_check(unary([](Var v) { return row_l2_normalize(v); }, 4, 5, 15), {x}).max_rel_error, kTol);
  EXPECT_LT(finite_diff_check(unary([](Var v) { return col_mean(v); }, 1, 5, 16), {x}).max_rel_error, kTol);
  EXPECT_LT(finite_diff_check(unary([](Var v) { return mean_all(v); }, 1, 1, 17), {x}).max_rel_error, kTol);
}

TEST(Autodiff, BinaryOpsGradients) {
  const Matrix w = random_matrix(4, 4, 18);
  const ScalarFunction f = [w](Tape& t, std::span<const Var> p) {
    const Var parts[] = {p[0], add(p[0], p[1])};
    const Var wide = concat_cols(parts);  // 4 x 4
    const Var sims = transpose_dot(wide, mul(wide, wide));
    return sum_all(mul(add_row_bias(sims, p[2]), t.constant(w)));
  };
  EXPECT_LT(finite_diff_check(f, {random_matrix(4, 2, 19), random_matrix(4, 2, 20), random_matrix(1, 4, 21)})
                .max_rel_error,
            kTol);
}

TEST(Autodiff, SparseMatmulAndMaskGradients) {
  Matrix a = random_matrix(5, 4, 22);
  a(0, 1) = a(2, 2) = a(4, 0) = 0.0;
  auto sparse = std::make_shared<const CsrMatrix>(CsrMatrix::from_dense(a));
  const std::vector<double> mask{1, 0, 1};
  const Matrix w = random_matrix(5, 3, 23);
  const ScalarFunction f = [&](Tape& t, std::span<const Var> p) {
    return sum_all(mul(mask_cols(sparse_matmul(sparse, p[0]), mask), t.constant(w)));
  };
  const Matrix x = random_matrix(4, 3, 24);
  EXPECT_LT(finite_diff_check(f, {x}).max_rel_error, kTol);

  Tape t;
  const Var leaf = t.leaf(x);
  t.backward(f(t, std::span<const Var>(&leaf, 1)));
  EXPECT_EQ(t.grad(leaf).col(1).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Autodiff, SharedSubexpressionAccumulates) {
  Tape t;
  const Var x = t.leaf(Matrix::Constant(1, 1, 3.0));
  const Var y = mul(x, x);
  t.backward(sum_all(add(y, x)));
  EXPECT_DOUBLE_EQ(t.grad(x)(0, 0), 7.0);
}

TEST(Autodiff, ConstantsAndUnreachedLeavesGetNoGradient) {
  Tape t;
  const Var c = t.constant(Matrix::Ones(2, 2));
  const Var p = t.leaf(Matrix::Ones(2, 2));
  const Var unused = t.leaf(Matrix::Ones(2, 2));
  t.backward(sum_all(mul(c, p)));
  EXPECT_EQ(t.node(c.id()).grad.size(), 0);
  EXPECT_EQ(t.node(unused.id()).grad.size(), 0);
  EXPECT_EQ(t.grad(unused), Matrix::Zero(2, 2));
  EXPECT_EQ(t.grad(p), Matrix::Ones(2, 2));
}

TEST(Autodiff, BackwardNeedsScalarRoot) {
  Tape t;
  const Var x = t.leaf(Matrix::Ones(2, 2));
  EXPECT_THROW(t.backward(x), DimensionError);
}

TEST(Autodiff, ShapeErrorsThrow) {
  Tape t;
  const Var a = t.leaf(Matrix::Ones(2, 3));
  const Var b = t.leaf(Matrix::Ones(2, 3));
  EXPECT_THROW(matmul(a, b), DimensionError);
  EXPECT_THROW(add(a, t.leaf(Matrix::Ones(3, 2))), DimensionError);
  EXPECT_THROW(add_row_bias(a, t.leaf(Matrix::Ones(1, 2))), DimensionError);
  EXPECT_THROW(mask_cols(a, {1.0, 0.0}), DimensionError);
}

TEST(Autodiff, LogOfNonPositiveThrows) {
  Tape t;
  EXPECT_THROW(log(t.leaf(Matrix::Zero(1, 1))), NumericalError);
}

TEST(Autodiff, SoftmaxIsShiftInvariantAndStable) {
  Tape t;
  Matrix x(1, 3);
  x << 1000.0, 1001.0, 1002.0;
  const Matrix s = row_softmax(t.constant(x)).value();
  const Matrix ref = row_softmax(t.constant(x.array() - 1000.0)).value();
  EXPECT_TRUE(s.allFinite());
  EXPECT_LT((s - ref).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_NEAR(s.sum(), 1.0, 1e-15);
}

TEST(Autodiff, FiniteDiffReportFlagsWrongGradient) {
  // relu at exactly zero: the analytic subgradient is 0 but the central
  // difference sees a slope of 1/2, so the checker has to notice.
  const ScalarFunction f = [](Tape&, std::span<const Var> p) { return sum_all(relu(p[0])); };
  const FiniteDiffReport r = finite_diff_check(f, {Matrix::Zero(1, 1)});
  EXPECT_NEAR(r.max_rel_error, 0.5, 1e-9);
}

}  // namespace
}  // namespace amc::ad
