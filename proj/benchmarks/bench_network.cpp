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

#include "hires/trainer.hpp"

using namespace hires;

namespace {

void BM_DeskForward(benchmark::State& state) {
  const auto cfg = NetworkConfig::desk();
  HiResNet net(cfg, 1);
  const auto data = synth_dataset(SynthSpec{});
  std::vector<std::size_t> idx(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto batch = make_batch(data, idx);
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(batch.images, false));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DeskForward)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

// One optimiser step: forward, combined loss, backward, AdamW.
void BM_DeskTrainStep(benchmark::State& state) {
  const auto cfg = NetworkConfig::desk();
  HiResNet net(cfg, 1);
  const auto data = synth_dataset(SynthSpec{});
  std::vector<std::size_t> idx(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto batch = make_batch(data, idx);
  const LossConfig lc;
  OptimState opt;
  Rng rng(2);
  const auto params = net.params().learnable();
  for (auto _ : state) {
    Tape::current().reset();
    const auto loss = combined_loss(net.forward(batch.images, true), batch.labels, lc, rng);
    backward(loss.total);
    adamw_step(params, opt);
    net.params().zero_grad();
  }
  Tape::current().reset();
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DeskTrainStep)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
