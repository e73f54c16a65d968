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

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "hires/tensor.hpp"

namespace hires {

/// Non-finite values reached the optimizer or a loss.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OptimState {
  double lr = 1e-4;
  double weight_decay = 1e-8;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<Tensor> m;  // first moments, shaped like the parameters
  std::vector<Tensor> v;  // second moments
};

/// One AdamW update from the gradients held by `params`; moments are created
/// on first use. Parameters without a gradient count as zero gradient.
void adamw_step(const std::vector<Tensor>& params, OptimState& opt);

struct Schedule {
  double base_lr = 1e-4;
  int warmup_epochs = 3;
  int total_epochs = 10;
  int steps_per_epoch = 1;

  void validate() const;
  std::int64_t total_steps() const {
    return static_cast<std::int64_t>(total_epochs) * steps_per_epoch;
  }
};

/// Linear warmup from 0, then cosine decay to 0; clamps past the end.
double lr_at(const Schedule& schedule, std::int64_t step);

}  // namespace hires
