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

#include "hires/tensor.hpp"

namespace hires {

struct GradCheckOptions {
  double step = 1e-6;
  /// Entries probed per input tensor; 0 probes every entry.
  int max_entries = 0;
  std::uint64_t seed = 0;
  /// Lower bound on the error denominator. Central differences on a loss
  /// of order 1 carry up to ~1e-10 of rounding noise, so an analytically
  /// zero gradient would otherwise report error 1.
  double abs_floor = 1e-6;
};

struct GradCheckResult {
  /// Worst per-tensor error max|a - n| / max(|a|_inf, |n|_inf).
  double max_rel_error = 0.0;
  std::string worst_input;
  int entries_checked = 0;
};

/// Compares reverse-mode gradients of the scalar `loss` with central
/// differences. `inputs` must be f64 leaves with requires_grad set; `loss`
/// must not depend on anything else that changes between calls. Resets the
/// active tape.
GradCheckResult check_gradients(const std::function<Tensor()>& loss,
                                const std::vector<Tensor>& inputs,
                                const std::vector<std::string>& names = {},
                                const GradCheckOptions& options = {});

}  // namespace hires
