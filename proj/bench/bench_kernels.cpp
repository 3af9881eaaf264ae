// Serial reference vs OpenMP kernels on model-sized shapes.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "tfunet/kernels.hpp"

namespace k = tfunet::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// args: channels, length
k::ConvDims conv_dims(const benchmark::State& s) {
  k::ConvDims d;
  d.batch = 2;
  d.in_channels = d.out_channels = static_cast<std::size_t>(s.range(0));
  d.in_len = d.out_len = static_cast<std::size_t>(s.range(1));
  d.kernel = 3;
  d.padding = 1;
  return d;
}

template <bool Parallel>
void BM_Conv1dForward(benchmark::State& state) {
  const auto d = conv_dims(state);
  const auto x = random_vec(d.batch * d.in_channels * d.in_len, 1);
  const auto w = random_vec(d.out_channels * d.in_channels * d.kernel, 2);
  const auto b = random_vec(d.out_channels, 3);
  std::vector<double> y(d.batch * d.out_channels * d.out_len);
  for (auto _ : state) {
    std::fill(y.begin(), y.end(), 0.0);
    if constexpr (Parallel)
      k::parallel::conv1d_forward(d, x.data(), w.data(), b.data(), y.data());
    else
      k::serial::conv1d_forward(d, x.data(), w.data(), b.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d.batch * d.out_channels * d.out_len *
                                                                         d.in_channels * d.kernel));
}

template <bool Parallel>
void BM_Conv1dBackwardWeight(benchmark::State& state) {
  const auto d = conv_dims(state);
  const auto x = random_vec(d.batch * d.in_channels * d.in_len, 1);
  const auto dy = random_vec(d.batch * d.out_channels * d.out_len, 2);
  std::vector<double> dw(d.out_channels * d.in_channels * d.kernel), db(d.out_channels);
  for (auto _ : state) {
    std::fill(dw.begin(), dw.end(), 0.0);
    std::fill(db.begin(), db.end(), 0.0);
    if constexpr (Parallel)
      k::parallel::conv1d_backward_weight(d, dy.data(), x.data(), dw.data(), db.data());
    else
      k::serial::conv1d_backward_weight(d, dy.data(), x.data(), dw.data(), db.data());
    benchmark::DoNotOptimize(dw.data());
  }
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0);
    if constexpr (Parallel)
      k::parallel::gemm(false, false, n, n, n, a.data(), b.data(), c.data());
    else
      k::serial::gemm(false, false, n, n, n, a.data(), b.data(), c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

}  // namespace

BENCHMARK(BM_Conv1dForward<false>)->Args({16, 3600})->Args({64, 900})->Args({256, 225});
BENCHMARK(BM_Conv1dForward<true>)->Args({16, 3600})->Args({64, 900})->Args({256, 225});
BENCHMARK(BM_Conv1dBackwardWeight<false>)->Args({16, 3600})->Args({64, 900});
BENCHMARK(BM_Conv1dBackwardWeight<true>)->Args({16, 3600})->Args({64, 900});
BENCHMARK(BM_Gemm<false>)->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Arg(64)->Arg(256);

BENCHMARK_MAIN();
