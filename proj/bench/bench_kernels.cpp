// Serial reference kernels against the OpenMP/Eigen production kernels on
// Cora-sized operands (2708 nodes, 1433 sparse features, 128 hidden).

#include "amc/augment.hpp"
#include "amc/kernels.hpp"
#include "amc/objective.hpp"
#include "amc/synthetic.hpp"

#include <benchmark/benchmark.h>

namespace amc {
namespace {

constexpr Index kNodes = 2708;
constexpr Index kHidden = 128;

const Dataset& cora() {
  static const Dataset d = make_surrogate({});
  return d;
}

const NormalizedAdjacency& adjacency() {
  static const NormalizedAdjacency a = normalize_adjacency(cora().graph);
  return a;
}

Matrix random(Index r, Index c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

void BM_SpmmSerial(benchmark::State& s) {
  const Matrix h = random(kNodes, kHidden, 1);
  for (auto _ : s) benchmark::DoNotOptimize(kernels::serial::spmm(adjacency().matrix, h));
}

void BM_SpmmParallel(benchmark::State& s) {
  const Matrix h = random(kNodes, kHidden, 1);
  for (auto _ : s) benchmark::DoNotOptimize(kernels::spmm(adjacency().matrix, h));
}

void BM_FeatureSpmmSerial(benchmark::State& s) {
  static const CsrMatrix x = CsrMatrix::from_dense(cora().features);
  const Matrix w = random(cora().num_features(), kHidden, 2);
  for (auto _ : s) benchmark::DoNotOptimize(kernels::serial::spmm(x, w));
}

void BM_FeatureSpmmParallel(benchmark::State& s) {
  static const CsrMatrix x = CsrMatrix::from_dense(cora().features);
  const Matrix w = random(cora().num_features(), kHidden, 2);
  for (auto _ : s) benchmark::DoNotOptimize(kernels::spmm(x, w));
}

void BM_GemmSerial(benchmark::State& s) {
  const Matrix a = random(kNodes, kHidden, 3), b = random(kHidden, kHidden, 4);
  for (auto _ : s) benchmark::DoNotOptimize(kernels::serial::gemm(a, b));
}

void BM_GemmParallel(benchmark::State& s) {
  const Matrix a = random(kNodes, kHidden, 3), b = random(kHidden, kHidden, 4);
  for (auto _ : s) benchmark::DoNotOptimize(kernels::gemm(a, b));
}

// The N x N similarity product that dominates the contrastive loss.
void BM_SimilaritySerial(benchmark::State& s) {
  const Matrix u = random(kNodes, kHidden, 5), v = random(kNodes, kHidden, 6);
  for (auto _ : s) benchmark::DoNotOptimize(kernels::serial::gemm_nt(u, v));
}

void BM_SimilarityParallel(benchmark::State& s) {
  const Matrix u = random(kNodes, kHidden, 5), v = random(kNodes, kHidden, 6);
  for (auto _ : s) benchmark::DoNotOptimize(kernels::gemm_nt(u, v));
}

void BM_RowSoftmaxSerial(benchmark::State& s) {
  const Matrix x = random(kNodes, 512, 7);
  for (auto _ : s) benchmark::DoNotOptimize(kernels::serial::row_softmax(x));
}

void BM_RowSoftmaxParallel(benchmark::State& s) {
  const Matrix x = random(kNodes, 512, 7);
  for (auto _ : s) benchmark::DoNotOptimize(kernels::row_softmax(x));
}

// One layer's loss, forward and backward, with full or blocked similarities.
void BM_LayerLoss(benchmark::State& s) {
  const Matrix u = random(kNodes, kHidden, 8), v = random(kNodes, kHidden, 9);
  LossConfig cfg;
  cfg.block_size = s.range(0);
  for (auto _ : s) {
    ad::Tape tape;
    const ad::Var loss = layer_loss(tape.leaf(u), tape.leaf(v), cfg);
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
}

BENCHMARK(BM_SpmmSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SpmmParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FeatureSpmmSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FeatureSpmmParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GemmSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GemmParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SimilaritySerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SimilarityParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RowSoftmaxSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RowSoftmaxParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LayerLoss)->Arg(0)->Arg(512)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace amc

BENCHMARK_MAIN();
