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

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hires/gradcheck.hpp"
#include "hires/random.hpp"
#include "hires/tensor.hpp"

namespace hires::testing {

inline Tensor random_f64(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(numel_of(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), DType::F64);
}

inline Tensor leaf(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return random_f64(std::move(shape), rng, lo, hi).set_requires_grad(true);
}

/// Scalar probe of a non-scalar output: sum(y * r) for a fixed random r.
inline Tensor project(const Tensor& y, const Tensor& r) { return sum(mul(y, r)); }

/// Worst relative error of `trials` independent gradient checks. `make`
/// builds fresh inputs and the loss closure for one trial.
struct Trial {
  std::vector<Tensor> inputs;
  std::function<Tensor()> loss;
};

inline double worst_over_trials(int trials, std::uint64_t seed,
                                const std::function<Trial(Rng&)>& make,
                                const GradCheckOptions& options = {}) {
  Rng rng(seed);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    auto trial = make(rng);
    const auto r = check_gradients(trial.loss, trial.inputs, {}, options);
    worst = std::max(worst, r.max_rel_error);
  }
  return worst;
}

}  // namespace hires::testing
