#include "amc/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace amc {

std::string shape_string(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

namespace kernels {
namespace {

std::atomic<bool> g_deterministic{false};

void require(bool ok, const char* what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace

void set_deterministic(bool on) {
  g_deterministic = on;
#if defined(_OPENMP)
  if (on) omp_set_num_threads(1);
#endif
  Eigen::setNbThreads(on ? 1 : 0);
}

bool deterministic() { return g_deterministic; }

int max_threads() {
#if defined(_OPENMP)
  return g_deterministic ? 1 : omp_get_max_threads();
#else
  return 1;
#endif
}

Matrix spmm(const CsrMatrix& a, const Matrix& dense) {
  require(a.cols == dense.rows(), "spmm: sparse column count must equal dense row count");
  const Index cols = dense.cols();
  Matrix out = Matrix::Zero(a.rows, cols);
  const int threads = max_threads();
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
  for (Index i = 0; i < a.rows; ++i) {
    auto row = out.row(i);
    for (Index k = a.row_offsets[i]; k < a.row_offsets[i + 1]; ++k) {
      row.noalias() += a.values[k] * dense.row(a.col_indices[k]);
    }
  }
  return out;
}

Matrix spmm_transposed(const CsrMatrix& a, const Matrix& dense) {
  require(a.rows == dense.rows(), "spmm_transposed: sparse row count must equal dense row count");
  // Transposing first keeps the product row-parallel and order-stable.
  return spmm(a.transpose(), dense);
}

Matrix gemm(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "gemm: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  out.noalias() = a * b;
  return out;
}

Matrix gemm_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "gemm_nt: column counts differ");
  Matrix out(a.rows(), b.rows());
  out.noalias() = a * b.transpose();
  return out;
}

void retain_freed_memory() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, std::numeric_limits<int>::max());
#endif
}

Matrix gram(const Matrix& a, double scale) {
  const Index n = a.rows();
  Matrix out = Matrix::Zero(n, n);
  out.selfadjointView<Eigen::Upper>().rankUpdate(a, scale);
  out.triangularView<Eigen::StrictlyLower>() = out.transpose();
  return out;
}

Matrix gemm_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "gemm_tn: row counts differ");
  Matrix out(a.cols(), b.cols());
  out.noalias() = a.transpose() * b;
  return out;
}

Matrix row_l2_normalize(const Matrix& x, double eps) {
  Matrix out(x.rows(), x.cols());
  const int threads = max_threads();
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
  for (Index i = 0; i < x.rows(); ++i) {
    const double norm = std::max(x.row(i).norm(), eps);
    out.row(i) = x.row(i) / norm;
  }
  return out;
}

Matrix row_softmax(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  const int threads = max_threads();
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
  for (Index i = 0; i < x.rows(); ++i) {
    const double shift = x.row(i).maxCoeff();
    out.row(i) = (x.row(i).array() - shift).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

Vector row_logsumexp(const Matrix& x) {
  Vector out(x.rows());
  const int threads = max_threads();
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
  for (Index i = 0; i < x.rows(); ++i) {
    const double shift = x.row(i).maxCoeff();
    out[i] = shift + std::log((x.row(i).array() - shift).exp().sum());
  }
  return out;
}

namespace serial {

Matrix spmm(const CsrMatrix& a, const Matrix& dense) {
  require(a.cols == dense.rows(), "spmm: sparse column count must equal dense row count");
  Matrix out = Matrix::Zero(a.rows, dense.cols());
  for (Index i = 0; i < a.rows; ++i) {
    for (Index k = a.row_offsets[i]; k < a.row_offsets[i + 1]; ++k) {
      const Index j = a.col_indices[k];
      for (Index c = 0; c < dense.cols(); ++c) out(i, c) += a.values[k] * dense(j, c);
    }
  }
  return out;
}

Matrix gemm(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "gemm: inner dimensions differ");
  Matrix out = Matrix::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index k = 0; k < a.cols(); ++k)
      for (Index j = 0; j < b.cols(); ++j) out(i, j) += a(i, k) * b(k, j);
  return out;
}

Matrix gemm_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "gemm_nt: column counts differ");
  Matrix out(a.rows(), b.rows());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
      out(i, j) = s;
    }
  return out;
}

Matrix gram(const Matrix& a, double scale) {
  Matrix out(a.rows(), a.rows());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.rows(); ++j) {
      double s = 0.0;
      for (Index k = 0; k < a.cols(); ++k) s += a(i, k) * a(j, k);
      out(i, j) = scale * s;
    }
  return out;
}

Matrix row_l2_normalize(const Matrix& x, double eps) {
  Matrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    double sq = 0.0;
    for (Index c = 0; c < x.cols(); ++c) sq += x(i, c) * x(i, c);
    const double norm = std::max(std::sqrt(sq), eps);
    for (Index c = 0; c < x.cols(); ++c) out(i, c) = x(i, c) / norm;
  }
  return out;
}

Matrix row_softmax(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    double shift = -std::numeric_limits<double>::infinity();
    for (Index c = 0; c < x.cols(); ++c) shift = std::max(shift, x(i, c));
    double total = 0.0;
    for (Index c = 0; c < x.cols(); ++c) {
      out(i, c) = std::exp(x(i, c) - shift);
      total += out(i, c);
    }
    for (Index c = 0; c < x.cols(); ++c) out(i, c) /= total;
  }
  return out;
}

Vector row_logsumexp(const Matrix& x) {
  Vector out(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    double shift = -std::numeric_limits<double>::infinity();
    for (Index c = 0; c < x.cols(); ++c) shift = std::max(shift, x(i, c));
    double total = 0.0;
    for (Index c = 0; c < x.cols(); ++c) total += std::exp(x(i, c) - shift);
    out[i] = shift + std::log(total);
  }
  return out;
}

}  // namespace serial
}  // namespace kernels
}  // namespace amc
