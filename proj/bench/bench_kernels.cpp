// SPDX-License-Identifier: Apache-2.0
//
// Serial reference kernels versus the OpenMP versions on FreqNet-sized layers.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "freqnet/kernels.hpp"

namespace k = freqnet::kernels;

namespace {

std::vector<double> filled(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

k::ConvShape layer(int channels, int size) { return {1, channels, size, size, channels, 3, 1, 1}; }

template <bool Omp>
void BM_Conv2dForward(benchmark::State& state) {
  const auto s = layer(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  const auto x = filled(static_cast<std::size_t>(s.in_channels) * s.height * s.width, 1);
  const auto w = filled(static_cast<std::size_t>(s.out_channels) * s.in_channels * 9, 2);
  const auto b = filled(s.out_channels, 3);
  std::vector<double> y(static_cast<std::size_t>(s.out_channels) * s.height * s.width);
  for (auto _ : state) {
    if constexpr (Omp)
      k::omp::conv2d_forward(s, x, w, b, y);
    else
      k::serial::conv2d_forward(s, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(y.size()) * s.in_channels * 9);
}

template <bool Omp>
void BM_Conv2dBackward(benchmark::State& state) {
  const auto s = layer(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  const std::size_t n = static_cast<std::size_t>(s.in_channels) * s.height * s.width;
  const auto x = filled(n, 1), gy = filled(n, 4);
  const auto w = filled(static_cast<std::size_t>(s.out_channels) * s.in_channels * 9, 2);
  std::vector<double> gx(n), gw(w.size()), gb(s.out_channels);
  for (auto _ : state) {
    if constexpr (Omp) {
      k::omp::conv2d_backward_input(s, gy, w, gx);
      k::omp::conv2d_backward_params(s, x, gy, gw, gb);
    } else {
      k::serial::conv2d_backward_input(s, gy, w, gx);
      k::serial::conv2d_backward_params(s, x, gy, gw, gb);
    }
    benchmark::DoNotOptimize(gx.data());
    benchmark::DoNotOptimize(gw.data());
  }
}

template <bool Omp>
void BM_DeformableForward(benchmark::State& state) {
  const auto s = layer(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  const auto x = filled(static_cast<std::size_t>(s.in_channels) * s.height * s.width, 1);
  const auto w = filled(static_cast<std::size_t>(s.out_channels) * s.in_channels * 9, 2);
  const auto b = filled(s.out_channels, 3);
  const auto off = filled(static_cast<std::size_t>(18) * s.height * s.width, 5);
  std::vector<double> y(static_cast<std::size_t>(s.out_channels) * s.height * s.width);
  for (auto _ : state) {
    if constexpr (Omp)
      k::omp::deformable_forward(s, x, w, b, off, y);
    else
      k::serial::deformable_forward(s, x, w, b, off, y);
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Omp>
void BM_DepthwiseForward(benchmark::State& state) {
  const auto s = layer(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  const auto x = filled(static_cast<std::size_t>(s.in_channels) * s.height * s.width, 1);
  const auto w = filled(static_cast<std::size_t>(s.in_channels) * 9, 2);
  const auto b = filled(s.in_channels, 3);
  std::vector<double> y(x.size());
  for (auto _ : state) {
    if constexpr (Omp)
      k::omp::depthwise_forward(s, x, w, b, y);
    else
      k::serial::depthwise_forward(s, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

// {channels, spatial size}: SEN trunk layers and FRN layers on the block grid.
#define FREQNET_ARGS ->Args({16, 64})->Args({64, 64})->Args({100, 8})
BENCHMARK(BM_Conv2dForward<false>) FREQNET_ARGS;
BENCHMARK(BM_Conv2dForward<true>) FREQNET_ARGS;
BENCHMARK(BM_Conv2dBackward<false>) FREQNET_ARGS;
BENCHMARK(BM_Conv2dBackward<true>) FREQNET_ARGS;
BENCHMARK(BM_DeformableForward<false>) FREQNET_ARGS;
BENCHMARK(BM_DeformableForward<true>) FREQNET_ARGS;
BENCHMARK(BM_DepthwiseForward<false>) FREQNET_ARGS;
BENCHMARK(BM_DepthwiseForward<true>) FREQNET_ARGS;

BENCHMARK_MAIN();
