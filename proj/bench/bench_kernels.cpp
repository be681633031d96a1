// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <vector>

#include "capsroute/kernels.hpp"
#include "capsroute/rng.hpp"

using namespace capsroute;
namespace k = capsroute::kernels;

namespace {

std::vector<double> random(std::size_t n) {
  Rng rng(42);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <auto Gemm>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random(n * n), b = random(n * n);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Gemm(n, n, n, a.data(), b.data(), c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}

// Primary-capsule convolution of the small preset: 16 channels, 24x24, 9x9 kernel, stride 2.
k::ConvGeometry primary_geometry(std::size_t batch) { return {batch, 16, 24, 24, 9, 2, 0, 8, 8}; }

template <auto Im2col>
void BM_Im2col(benchmark::State& state) {
  const auto g = primary_geometry(static_cast<std::size_t>(state.range(0)));
  const auto x = random(g.batch * g.channels * g.height * g.width);
  std::vector<double> col(g.patch_size() * g.batch * g.positions());
  for (auto _ : state) {
    Im2col(g, x.data(), col.data());
    benchmark::DoNotOptimize(col.data());
  }
}

template <auto Col2im>
void BM_Col2im(benchmark::State& state) {
  const auto g = primary_geometry(static_cast<std::size_t>(state.range(0)));
  const auto col = random(g.patch_size() * g.batch * g.positions());
  std::vector<double> x(g.batch * g.channels * g.height * g.width);
  for (auto _ : state) {
    std::fill(x.begin(), x.end(), 0.0);
    Col2im(g, col.data(), x.data());
    benchmark::DoNotOptimize(x.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<k::serial::gemm_nn>)->Name("gemm_nn/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<k::parallel::gemm_nn>)->Name("gemm_nn/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<k::serial::gemm_tn>)->Name("gemm_tn/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<k::parallel::gemm_tn>)->Name("gemm_tn/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Im2col<k::serial::im2col>)->Name("im2col/serial")->Arg(8)->Arg(32);
BENCHMARK(BM_Im2col<k::parallel::im2col>)->Name("im2col/parallel")->Arg(8)->Arg(32);
BENCHMARK(BM_Col2im<k::serial::col2im>)->Name("col2im/serial")->Arg(8)->Arg(32);
BENCHMARK(BM_Col2im<k::parallel::col2im>)->Name("col2im/parallel")->Arg(8)->Arg(32);

BENCHMARK_MAIN();
