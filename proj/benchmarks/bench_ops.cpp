// Copyright 2026 The hires Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <benchmark/benchmark.h>

#include <vector>

#include "hires/blocks.hpp"
#include "hires/distance_transform.hpp"
#include "hires/random.hpp"
#include "hires/tensor.hpp"

using namespace hires;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(numel_of(shape)));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from(std::move(shape), std::move(v));
}

BinaryMask random_mask(int n, double density, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::uint8_t> cells(static_cast<std::size_t>(n * n));
  for (auto& c : cells) c = rng.uniform() < density ? 1 : 0;
  return BinaryMask(n, n, std::move(cells));
}

void BM_Conv3x3(benchmark::State& state) {
  const auto c = state.range(0), hw = state.range(1);
  const auto x = random_tensor({1, c, hw, hw}, 1);
  const auto w = random_tensor({c, c, 3, 3}, 2);
  const auto b = Tensor::zeros({c});
  const ConvSpec spec{c, 3, 3, 1, 1, 1, 1, 1};
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, spec));
  state.SetItemsProcessed(state.iterations() * c * c * 9 * hw * hw);
}
BENCHMARK(BM_Conv3x3)->Args({8, 16})->Args({16, 32})->Args({48, 56});

void BM_DepthwiseConv(benchmark::State& state) {
  const auto c = state.range(0), hw = state.range(1);
  const auto x = random_tensor({1, c, hw, hw}, 3);
  const auto w = random_tensor({c, 1, 5, 5}, 4);
  const auto b = Tensor::zeros({c});
  const ConvSpec spec{c, 5, 5, 1, 1, 2, 2, c};
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, spec));
}
BENCHMARK(BM_DepthwiseConv)->Args({16, 32})->Args({48, 56});

void BM_WindowAttention(benchmark::State& state) {
  const auto c = state.range(0), hw = state.range(1);
  ParamStore store(DType::F32, 5);
  WindowAttention attn(store, "attn", WindowSpec{static_cast<int>(state.range(2)), 2, 4});
  const auto x = random_tensor({1, c, hw, hw}, 6);
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(attn.forward(x));
}
BENCHMARK(BM_WindowAttention)->Args({16, 16, 4})->Args({48, 56, 7});

void BM_ExactDT(benchmark::State& state) {
  const auto mask = random_mask(static_cast<int>(state.range(0)), 0.8, 7);
  for (auto _ : state) benchmark::DoNotOptimize(exact_dt(mask, 20));
}
BENCHMARK(BM_ExactDT)->Arg(32)->Arg(64)->Arg(256);

void BM_CascadedDT(benchmark::State& state) {
  const auto mask = random_mask(static_cast<int>(state.range(0)), 0.8, 7);
  for (auto _ : state) benchmark::DoNotOptimize(cascaded_conv_dt(mask, 20));
}
BENCHMARK(BM_CascadedDT)->Arg(32)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
