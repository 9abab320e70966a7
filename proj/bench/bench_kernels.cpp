// Serial reference kernels against their OpenMP twins on paper-scale shapes.

#include <benchmark/benchmark.h>

#include <vector>

#include "pcvae/kernels.hpp"
#include "pcvae/numerics.hpp"

namespace {

using namespace pcvae;

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.gaussian();
  return v;
}

enum Impl { kSerial = 0, kParallel = 1 };

// Visual bank of the latent-300 preset: 6 matrices of 150 x 512.
void BM_BankCompress(benchmark::State& state) {
  const std::size_t count = 6, rows = 150, cols = 512;
  const auto m = random_values(count * rows * cols, 1);
  const auto t = random_values(count * cols, 2);
  std::vector<double> out(rows);
  for (auto _ : state) {
    if (state.range(0) == kSerial)
      kernels::serial::bank_compress(count, rows, cols, m, t, out);
    else
      kernels::parallel::bank_compress(count, rows, cols, m, t, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(count * rows * cols));
}

// Batch of 64 latents through a 512 -> 2205 fully-connected layer.
void BM_Gemm(benchmark::State& state) {
  const kernels::GemmArgs g{64, 2205, 512, false, true};
  const auto a = random_values(g.m * g.k, 3);
  const auto b = random_values(g.n * g.k, 4);
  std::vector<double> c(g.m * g.n);
  for (auto _ : state) {
    if (state.range(0) == kSerial)
      kernels::serial::gemm(g, a, b, c);
    else
      kernels::parallel::gemm(g, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(g.m * g.n * g.k));
}

// Second layer of the paper visual decoder: 64 -> 64 channels, 8x8 -> 16x16.
kernels::ConvTransposeShape conv_shape() { return {16, 64, 64, 8, 8, 16, 16, 3, 2, 1}; }

void BM_ConvTransposeForward(benchmark::State& state) {
  const auto s = conv_shape();
  const auto x = random_values(s.batch * s.in_channels * s.in_h * s.in_w, 5);
  const auto w = random_values(s.in_channels * s.out_channels * s.kernel * s.kernel, 6);
  const auto bias = random_values(s.out_channels, 7);
  std::vector<double> y(s.batch * s.out_channels * s.out_h * s.out_w);
  for (auto _ : state) {
    if (state.range(0) == kSerial)
      kernels::serial::conv_transpose2d_forward(s, x, w, bias, y);
    else
      kernels::parallel::conv_transpose2d_forward(s, x, w, bias, y);
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_ConvTransposeBackwardWeight(benchmark::State& state) {
  const auto s = conv_shape();
  const auto x = random_values(s.batch * s.in_channels * s.in_h * s.in_w, 8);
  const auto dy = random_values(s.batch * s.out_channels * s.out_h * s.out_w, 9);
  std::vector<double> dw(s.in_channels * s.out_channels * s.kernel * s.kernel);
  for (auto _ : state) {
    if (state.range(0) == kSerial)
      kernels::serial::conv_transpose2d_backward_weight(s, x, dy, dw);
    else
      kernels::parallel::conv_transpose2d_backward_weight(s, x, dy, dw);
    benchmark::DoNotOptimize(dw.data());
  }
}

void impl_args(benchmark::internal::Benchmark* b) {
  b->ArgName("parallel")->Arg(kSerial)->Arg(kParallel)->UseRealTime()->Unit(benchmark::kMicrosecond);
}

}  // namespace

BENCHMARK(BM_BankCompress)->Apply(impl_args);
BENCHMARK(BM_Gemm)->Apply(impl_args);
BENCHMARK(BM_ConvTransposeForward)->Apply(impl_args);
BENCHMARK(BM_ConvTransposeBackwardWeight)->Apply(impl_args);

BENCHMARK_MAIN();
