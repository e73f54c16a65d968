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

#include "hires/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace hires {

void adamw_step(const std::vector<Tensor>& params, OptimState& opt) {
  if (opt.m.empty()) {
    for (const auto& p : params) {
      opt.m.push_back(Tensor::zeros(p.shape(), p.dtype()));
      opt.v.push_back(Tensor::zeros(p.shape(), p.dtype()));
    }
  }
  if (opt.m.size() != params.size()) throw ShapeError("adamw: moment count does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (opt.m[i].shape() != params[i].shape()) {
      throw ShapeError("adamw: moment shape mismatch at parameter " + std::to_string(i));
    }
    for (double g : params[i].grad()) {
      if (!std::isfinite(g)) {
        throw NumericalError("adamw: non-finite gradient in parameter " + std::to_string(i));
      }
    }
  }
  ++opt.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i];
    const auto dtype = p.dtype();
    auto w = p.mutable_data();
    auto m = opt.m[i].mutable_data();
    auto v = opt.v[i].mutable_data();
    const auto g = p.grad();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j];
      m[j] = round_to(dtype, opt.beta1 * m[j] + (1.0 - opt.beta1) * gj);
      v[j] = round_to(dtype, opt.beta2 * v[j] + (1.0 - opt.beta2) * gj * gj);
      const double update = (m[j] / c1) / (std::sqrt(v[j] / c2) + opt.eps);
      w[j] = round_to(dtype, w[j] - opt.lr * (update + opt.weight_decay * w[j]));
    }
  }
}

void Schedule::validate() const {
  if (base_lr < 0) throw std::invalid_argument("schedule: base_lr must be >= 0");
  if (steps_per_epoch < 1) throw std::invalid_argument("schedule: steps_per_epoch must be >= 1");
  if (warmup_epochs < 0 || (total_epochs > 0 && warmup_epochs >= total_epochs)) {
    throw std::invalid_argument("schedule: warmup_epochs must be in [0, total_epochs)");
  }
}

double lr_at(const Schedule& s, std::int64_t step) {
  const auto warm = static_cast<std::int64_t>(s.warmup_epochs) * s.steps_per_epoch;
  const auto total = s.total_steps();
  if (step < 0) step = 0;
  if (step >= total) return 0.0;
  if (step < warm) return s.base_lr * static_cast<double>(step) / static_cast<double>(warm);
  const double t = static_cast<double>(step - warm) / static_cast<double>(total - warm);
  return 0.5 * s.base_lr * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace hires
