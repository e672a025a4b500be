// Copyright 2026 The extmark Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// OpenMP kernels against the serial reference.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "extmark/kernels.hpp"

namespace k = extmark::kernels;

namespace {

std::vector<double> noise(std::size_t n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

// cnn-small second block at 16 px: 16 -> 32 channels, 8x8, batch 64.
k::ConvGeom geom() { return {16, 8, 8, 32, 3, 1, 1}; }
constexpr int kBatch = 64;

template <bool Parallel>
void BM_conv2d_forward(benchmark::State& state) {
  const auto g = geom();
  auto in = noise(std::size_t(kBatch) * g.in_size(), 1), w = noise(g.weight_size(), 2), b = noise(g.out_c, 3);
  std::vector<double> out(std::size_t(kBatch) * g.out_size());
  for (auto _ : state) {
    if constexpr (Parallel)
      k::conv2d_forward(g, kBatch, in, w, b, out);
    else
      k::reference::conv2d_forward(g, kBatch, in, w, b, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_conv2d_backward(benchmark::State& state) {
  const auto g = geom();
  auto in = noise(std::size_t(kBatch) * g.in_size(), 1), w = noise(g.weight_size(), 2);
  auto dout = noise(std::size_t(kBatch) * g.out_size(), 4);
  std::vector<double> dw(w.size()), db(g.out_c), din(in.size());
  for (auto _ : state) {
    if constexpr (Parallel)
      k::conv2d_backward(g, kBatch, in, w, dout, dw, db, din);
    else
      k::reference::conv2d_backward(g, kBatch, in, w, dout, dw, db, din);
    benchmark::DoNotOptimize(din.data());
  }
}

template <bool Parallel>
void BM_linear_forward(benchmark::State& state) {
  const int in_dim = 512, out_dim = 128;
  auto in = noise(std::size_t(kBatch) * in_dim, 1), w = noise(std::size_t(in_dim) * out_dim, 2), b = noise(out_dim, 3);
  std::vector<double> out(std::size_t(kBatch) * out_dim);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::linear_forward(in_dim, out_dim, kBatch, in, w, b, out);
    else
      k::reference::linear_forward(in_dim, out_dim, kBatch, in, w, b, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_linear_backward(benchmark::State& state) {
  const int in_dim = 512, out_dim = 128;
  auto in = noise(std::size_t(kBatch) * in_dim, 1), w = noise(std::size_t(in_dim) * out_dim, 2);
  auto dout = noise(std::size_t(kBatch) * out_dim, 4);
  std::vector<double> dw(w.size()), db(out_dim), din(in.size());
  for (auto _ : state) {
    if constexpr (Parallel)
      k::linear_backward(in_dim, out_dim, kBatch, in, w, dout, dw, db, din);
    else
      k::reference::linear_backward(in_dim, out_dim, kBatch, in, w, dout, dw, db, din);
    benchmark::DoNotOptimize(din.data());
  }
}

}  // namespace

BENCHMARK(BM_conv2d_forward<false>)->Name("conv2d_forward/reference");
BENCHMARK(BM_conv2d_forward<true>)->Name("conv2d_forward/openmp");
BENCHMARK(BM_conv2d_backward<false>)->Name("conv2d_backward/reference");
BENCHMARK(BM_conv2d_backward<true>)->Name("conv2d_backward/openmp");
BENCHMARK(BM_linear_forward<false>)->Name("linear_forward/reference");
BENCHMARK(BM_linear_forward<true>)->Name("linear_forward/openmp");
BENCHMARK(BM_linear_backward<false>)->Name("linear_backward/reference");
BENCHMARK(BM_linear_backward<true>)->Name("linear_backward/openmp");

BENCHMARK_MAIN();
