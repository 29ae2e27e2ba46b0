#include "amc/kernels.hpp"
#include "amc/rng.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace amc {
namespace {

using test::random_matrix;

CsrMatrix random_sparse(Index r, Index c, double density, unsigned seed) {
  Matrix d = random_matrix(r, c, seed);
  Rng rng(seed);
  for (Index i = 0; i < d.size(); ++i) {
    if (rng.uniform() >= density) d.data()[i] = 0.0;
  }
  return CsrMatrix::from_dense(d);
}

double max_diff(const Matrix& a, const Matrix& b) {
  EXPECT_EQ(a.rows(), b.rows());
  EXPECT_EQ(a.cols(), b.cols());
  return (a - b).cwiseAbs().maxCoeff();
}

TEST(Kernels, SpmmMatchesSerialExactly) {
  const CsrMatrix a = random_sparse(200, 150, 0.05, 1);
  const Matrix x = random_matrix(150, 17, 2);
  EXPECT_EQ(kernels::spmm(a, x), kernels::serial::spmm(a, x));
  EXPECT_LT(max_diff(kernels::spmm_transposed(a, random_matrix(200, 5, 3)),
                     kernels::serial::spmm(a.transpose(), random_matrix(200, 5, 3))),
            1e-12);
}

TEST(Kernels, GemmsMatchSerial) {
  const Matrix a = random_matrix(70, 40, 4), b = random_matrix(40, 30, 5), c = random_matrix(50, 40, 6);
  EXPECT_LT(max_diff(kernels::gemm(a, b), kernels::serial::gemm(a, b)), 1e-12);
  EXPECT_LT(max_diff(kernels::gemm_nt(a, c), kernels::serial::gemm_nt(a, c)), 1e-12);
  const Matrix g = kernels::gram(a, 0.7);
  EXPECT_LT(max_diff(g, kernels::serial::gram(a, 0.7)), 1e-12);
  EXPECT_EQ(g, g.transpose());
  EXPECT_LT(max_diff(kernels::gemm_tn(a, random_matrix(70, 9, 7)),
                     kernels::serial::gemm(a.transpose(), random_matrix(70, 9, 7))),
            1e-12);
}

// Similarity-sized products, large enough to reach the blocked code paths.
TEST(Kernels, LargeProductsMatchSerial) {
  for (Index n : {199, 300, 517}) {
    const Matrix u = random_matrix(n, 128, 40 + static_cast<unsigned>(n)), v = random_matrix(n, 128, 41);
    EXPECT_LT(max_diff(kernels::gemm_nt(u, v), kernels::serial::gemm_nt(u, v)), 1e-10) << n;
    EXPECT_LT(max_diff(kernels::gram(u, 1.1), kernels::serial::gram(u, 1.1)), 1e-10) << n;
    EXPECT_LT(max_diff(kernels::gemm_tn(u, v), kernels::serial::gemm(u.transpose(), v)), 1e-10) << n;
  }
}

TEST(Kernels, EmptyInnerDimensionGivesZeros) {
  const Matrix a(4, 0), b(3, 0);
  EXPECT_EQ(kernels::gemm_nt(a, b), Matrix::Zero(4, 3));
  EXPECT_EQ(kernels::gemm_nt(Matrix(0, 2), Matrix(3, 2)).size(), 0);
  EXPECT_EQ(kernels::gram(a, 2.0), Matrix::Zero(4, 4));
}

TEST(Kernels, RowOpsMatchSerial) {
  Matrix x = random_matrix(64, 9, 8, 30.0);
  x.row(3).setZero();
  EXPECT_LT(max_diff(kernels::row_l2_normalize(x), kernels::serial::row_l2_normalize(x)), 1e-15);
  EXPECT_LT(max_diff(kernels::row_softmax(x), kernels::serial::row_softmax(x)), 1e-15);
  EXPECT_LT((kernels::row_logsumexp(x) - kernels::serial::row_logsumexp(x)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Kernels, LogSumExpIsStableForLargeInputs) {
  Matrix x(1, 3);
  x << 800.0, 800.0, -800.0;
  EXPECT_NEAR(kernels::row_logsumexp(x)(0), 800.0 + std::log(2.0), 1e-12);
  const Matrix s = kernels::row_softmax(x);
  EXPECT_NEAR(s(0, 0), 0.5, 1e-15);
  EXPECT_EQ(s(0, 2), 0.0);
}

TEST(Kernels, NormalizeLeavesZeroRowsZero) {
  Matrix x = Matrix::Zero(2, 3);
  x(1, 0) = 3.0;
  x(1, 1) = 4.0;
  const Matrix n = kernels::row_l2_normalize(x);
  EXPECT_EQ(n.row(0), RowVector::Zero(3));
  EXPECT_DOUBLE_EQ(n(1, 0), 0.6);
}

TEST(Kernels, SpmmRejectsShapeMismatch) {
  EXPECT_THROW(kernels::spmm(random_sparse(5, 4, 0.5, 9), Matrix::Ones(3, 2)), DimensionError);
}

}  // namespace
}  // namespace amc
