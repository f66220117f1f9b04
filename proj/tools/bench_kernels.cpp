// Serial reference kernels against their OpenMP versions.
//   ./bench_kernels --benchmark_counters_tabular=true

#include <benchmark/benchmark.h>

#include <random>

#include "covshift/kernels.hpp"

namespace {

using covshift::Matrix;
namespace k = covshift::kernels;

Matrix random_matrix(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

template <class Fn>
void run(benchmark::State& state, Fn fn) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const Matrix a = random_matrix(n, 36, 1), b = random_matrix(n, 36, 2);
  for (auto _ : state) benchmark::DoNotOptimize(fn(a, b));
  state.SetItemsProcessed(state.iterations() * n * n);
  state.counters["threads"] = k::thread_count();
}

void BM_GramSerial(benchmark::State& s) {
  run(s, [](const Matrix& a, const Matrix& b) { return k::serial::gaussian_gram(a, b, 6.0); });
}
void BM_GramParallel(benchmark::State& s) {
  run(s, [](const Matrix& a, const Matrix& b) { return k::parallel::gaussian_gram(a, b, 6.0); });
}
void BM_RowSumsSerial(benchmark::State& s) {
  run(s, [](const Matrix& a, const Matrix& b) { return k::serial::gaussian_row_sums(a, b, 6.0); });
}
void BM_RowSumsParallel(benchmark::State& s) {
  run(s, [](const Matrix& a, const Matrix& b) { return k::parallel::gaussian_row_sums(a, b, 6.0); });
}
void BM_DistancesSerial(benchmark::State& s) {
  run(s, [](const Matrix& a, const Matrix& b) { return k::serial::squared_distances(a, b); });
}
void BM_DistancesParallel(benchmark::State& s) {
  run(s, [](const Matrix& a, const Matrix& b) { return k::parallel::squared_distances(a, b); });
}

}  // namespace

BENCHMARK(BM_GramSerial)->Arg(256)->Arg(1024)->Arg(2048)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GramParallel)->Arg(256)->Arg(1024)->Arg(2048)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RowSumsSerial)->Arg(256)->Arg(1024)->Arg(2048)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RowSumsParallel)->Arg(256)->Arg(1024)->Arg(2048)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DistancesSerial)->Arg(256)->Arg(1024)->Arg(2048)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DistancesParallel)->Arg(256)->Arg(1024)->Arg(2048)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
