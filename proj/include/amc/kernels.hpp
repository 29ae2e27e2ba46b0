#pragma once

// Dense and sparse numeric kernels.
//
// The functions in amc::kernels are the production versions: OpenMP-parallel
// over rows, with GEMMs delegated to Eigen. amc::kernels::serial holds plain
// loop implementations kept as the reference for tests and benchmarks.
//
// Every parallel kernel writes each output row from exactly one thread with
// a fixed inner summation order, so results do not depend on thread count.

#include "amc/graph.hpp"
#include "amc/types.hpp"

#include <span>

namespace amc::kernels {

/// Single-threaded mode for bit-reproducible runs (also pins Eigen to 1 thread).
void set_deterministic(bool on);
bool deterministic();
int max_threads();

/// out = a * dense
Matrix spmm(const CsrMatrix& a, const Matrix& dense);
/// out = a^T * dense
Matrix spmm_transposed(const CsrMatrix& a, const Matrix& dense);

/// Asks glibc malloc to keep freed large blocks instead of unmapping them,
/// so the per-epoch N x N buffers are not page-faulted back in every
/// epoch. Process-wide; a no-op on other C libraries.
void retain_freed_memory();

Matrix gemm(const Matrix& a, const Matrix& b);     // a * b
Matrix gemm_nt(const Matrix& a, const Matrix& b);  // a * b^T
Matrix gram(const Matrix& a, double scale);         // scale * a * a^T, half the flops of gemm_nt
Matrix gemm_tn(const Matrix& a, const Matrix& b);  // a^T * b

/// Rows scaled to unit L2 norm; norms are clamped below at `eps`.
Matrix row_l2_normalize(const Matrix& x, double eps = 1e-12);
/// Max-shifted softmax along each row.
Matrix row_softmax(const Matrix& x);
/// log(sum(exp(row))) per row, max-shifted.
Vector row_logsumexp(const Matrix& x);

namespace serial {

Matrix spmm(const CsrMatrix& a, const Matrix& dense);
Matrix gemm(const Matrix& a, const Matrix& b);
Matrix gemm_nt(const Matrix& a, const Matrix& b);
Matrix gram(const Matrix& a, double scale);
Matrix row_l2_normalize(const Matrix& x, double eps = 1e-12);
Matrix row_softmax(const Matrix& x);
Vector row_logsumexp(const Matrix& x);

}  // namespace serial

}  // namespace amc::kernels
