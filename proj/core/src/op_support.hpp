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

#include <initializer_list>
#include <string_view>
#include <vector>

#include "hires/tensor.hpp"

namespace hires::detail {

DType promote(std::initializer_list<const Tensor*> inputs);

/// Wraps a freshly computed buffer as a tensor, rounding to F32 when needed,
/// and records `fn` on the current tape if any input requires a gradient.
Tensor finish(std::string_view op, Shape shape, std::vector<double> data, DType dtype,
              const std::vector<const Tensor*>& inputs, Tape::BackwardFn fn);

inline bool wants_grad(const Tensor& t) { return t.defined() && t.requires_grad(); }

int normalize_axis(int axis, int rank);

/// For every position of `out`, the linear offset into a tensor of shape `in`
/// broadcast against it (size-1 and missing leading axes repeat).
std::vector<std::int64_t> broadcast_index(const Shape& in, const Shape& out);

void check_finite(std::string_view op, const std::vector<double>& data);

}  // namespace hires::detail
