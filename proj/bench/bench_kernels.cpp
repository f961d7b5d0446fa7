#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "mmsev/kernels.hpp"

namespace {

namespace k = mmsev::kernels;

std::vector<double> filled(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

template <auto Kernel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = filled(n * n, 1), b = filled(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Kernel(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

template <auto Kernel>
void BM_Softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 128;
  const auto in = filled(rows * cols, 3);
  std::vector<double> out(rows * cols);
  for (auto _ : state) {
    Kernel(in, out, rows, cols);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rows * cols));
}

}  // namespace

BENCHMARK(BM_Gemm<k::serial::gemm>)->Name("gemm/serial")->RangeMultiplier(2)->Range(16, 256);
BENCHMARK(BM_Gemm<k::parallel::gemm>)->Name("gemm/parallel")->RangeMultiplier(2)->Range(16, 256);
BENCHMARK(BM_Gemm<k::serial::gemm_tn>)->Name("gemm_tn/serial")->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_Gemm<k::parallel::gemm_tn>)->Name("gemm_tn/parallel")->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_Gemm<k::serial::gemm_nt>)->Name("gemm_nt/serial")->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_Gemm<k::parallel::gemm_nt>)->Name("gemm_nt/parallel")->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_Softmax<k::serial::softmax_rows>)->Name("softmax/serial")->RangeMultiplier(8)->Range(64, 4096);
BENCHMARK(BM_Softmax<k::parallel::softmax_rows>)->Name("softmax/parallel")->RangeMultiplier(8)->Range(64, 4096);

BENCHMARK_MAIN();
