// Serial reference vs OpenMP kernels. Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <vector>

#include "samihs/kernels.hpp"

using namespace samihs;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(rows, cols);
  for (auto& v : m.span()) v = u(rng);
  return m;
}

// Points on a noisy circle, like the boundary of a blob-shaped mask.
std::vector<kernels::Point2> ring(std::size_t n, double radius, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, 0.5);
  std::vector<kernels::Point2> pts(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n);
    pts[i] = {128.0 + radius * std::sin(t) + jitter(rng), 128.0 + radius * std::cos(t) + jitter(rng)};
  }
  return pts;
}

template <Matrix (*F)(const Matrix&, const Matrix&)>
void BM_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(F(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <std::vector<double> (*F)(std::span<const kernels::Point2>, std::span<const kernels::Point2>)>
void BM_directed(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto from = ring(n, 60.0, 3), to = ring(n, 64.0, 4);
  for (auto _ : state) benchmark::DoNotOptimize(F(from, to));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}

}  // namespace

BENCHMARK(BM_matmul<kernels::serial::matmul>)->Name("matmul/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_matmul<kernels::parallel::matmul>)->Name("matmul/parallel")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_matmul<kernels::serial::matmul_nt>)->Name("matmul_nt/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_matmul<kernels::parallel::matmul_nt>)->Name("matmul_nt/parallel")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_directed<kernels::serial::directed_distances>)->Name("directed/serial")->RangeMultiplier(4)->Range(64, 4096);
BENCHMARK(BM_directed<kernels::parallel::directed_distances>)->Name("directed/parallel")->RangeMultiplier(4)->Range(64, 4096);

BENCHMARK_MAIN();
