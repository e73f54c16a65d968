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

#include "hires/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hires/random.hpp"

namespace hires {

GradCheckResult check_gradients(const std::function<Tensor()>& loss,
                                const std::vector<Tensor>& inputs,
                                const std::vector<std::string>& names,
                                const GradCheckOptions& options) {
  for (const auto& t : inputs) {
    if (t.dtype() != DType::F64 || !t.requires_grad()) {
      throw std::invalid_argument("check_gradients: inputs must be f64 leaves requiring grad");
    }
  }
  auto& tape = Tape::current();
  tape.reset();
  for (const auto& t : inputs) t.impl()->grad.clear();
  const auto out = loss();
  backward(out);
  tape.reset();

  auto evaluate = [&] {
    NoGradGuard guard;
    return loss().item();
  };

  Rng rng(options.seed);
  GradCheckResult result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto t = inputs[i];
    const auto n = t.numel();
    std::vector<double> analytic = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                                : std::vector<double>(static_cast<std::size_t>(n), 0.0);
    std::vector<std::int64_t> probe(static_cast<std::size_t>(n));
    std::iota(probe.begin(), probe.end(), 0);
    if (options.max_entries > 0 && n > options.max_entries) {
      for (int j = 0; j < options.max_entries; ++j) {
        const auto k = j + rng.below(n - j);
        std::swap(probe[static_cast<std::size_t>(j)], probe[static_cast<std::size_t>(k)]);
      }
      probe.resize(static_cast<std::size_t>(options.max_entries));
    }
    double diff = 0.0, scale = 0.0;
    for (auto k : probe) {
      auto values = t.mutable_data();
      const double saved = values[static_cast<std::size_t>(k)];
      values[static_cast<std::size_t>(k)] = saved + options.step;
      const double up = evaluate();
      values[static_cast<std::size_t>(k)] = saved - options.step;
      const double down = evaluate();
      values[static_cast<std::size_t>(k)] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[static_cast<std::size_t>(k)];
      diff = std::max(diff, std::abs(a - numeric));
      scale = std::max({scale, std::abs(a), std::abs(numeric)});
    }
    result.entries_checked += static_cast<int>(probe.size());
    const double rel = diff / std::max(scale, options.abs_floor);
    if (rel >= result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_input = i < names.size() ? names[i] : "input" + std::to_string(i);
    }
  }
  return result;
}

}  // namespace hires
