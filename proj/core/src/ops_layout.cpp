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

// Reductions, softmax and data-movement ops.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hires/tensor.hpp"
#include "op_support.hpp"

namespace hires {
namespace {

using detail::finish;
using detail::normalize_axis;

struct AxisSplit {
  std::int64_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, int axis) {
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
  s.extent = shape[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  auto px = x.shared();
  auto fn = [px](const std::vector<double>& g) {
    auto& acc = grad_buffer(*px);
    for (auto& a : acc) a += g[0];
  };
  return finish("sum", {}, {total}, x.dtype(), {&x}, std::move(fn));
}

Tensor mean(const Tensor& x) {
  const auto n = x.numel();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scalar_mul(sum(x), 1.0 / static_cast<double>(n));
}

Tensor sum(const Tensor& x, const std::vector<int>& axes, bool keepdim) {
  const int rank = x.rank();
  std::vector<bool> reduced(static_cast<std::size_t>(rank), false);
  for (int a : axes) reduced[static_cast<std::size_t>(normalize_axis(a, rank))] = true;
  Shape kept, out_shape;
  for (int i = 0; i < rank; ++i) {
    const auto d = x.shape()[static_cast<std::size_t>(i)];
    kept.push_back(reduced[static_cast<std::size_t>(i)] ? 1 : d);
    if (!reduced[static_cast<std::size_t>(i)]) {
      out_shape.push_back(d);
    } else if (keepdim) {
      out_shape.push_back(1);
    }
  }
  auto index = detail::broadcast_index(kept, x.shape());
  std::vector<double> out(static_cast<std::size_t>(numel_of(kept)), 0.0);
  const auto& xd = x.impl()->data;
  for (std::size_t i = 0; i < xd.size(); ++i) out[static_cast<std::size_t>(index[i])] += xd[i];
  auto px = x.shared();
  auto fn = [px, index = std::move(index)](const std::vector<double>& g) {
    auto& acc = grad_buffer(*px);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[static_cast<std::size_t>(index[i])];
  };
  return finish("sum_axes", std::move(out_shape), std::move(out), x.dtype(), {&x}, std::move(fn));
}

Tensor softmax(const Tensor& x, int axis) {
  const int ax = normalize_axis(axis, x.rank());
  const auto s = split_at(x.shape(), ax);
  const auto& xd = x.impl()->data;
  std::vector<double> out(xd.size());
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t in = 0; in < s.inner; ++in) {
      const auto base = o * s.extent * s.inner + in;
      double mx = -INFINITY;
      for (std::int64_t k = 0; k < s.extent; ++k) mx = std::max(mx, xd[base + k * s.inner]);
      double z = 0.0;
      for (std::int64_t k = 0; k < s.extent; ++k) {
        const double e = std::exp(xd[base + k * s.inner] - mx);
        out[base + k * s.inner] = e;
        z += e;
      }
      for (std::int64_t k = 0; k < s.extent; ++k) out[base + k * s.inner] /= z;
    }
  }
  auto px = x.shared();
  auto probs = out;
  auto fn = [px, probs = std::move(probs), s](const std::vector<double>& g) {
    auto& acc = grad_buffer(*px);
    for (std::int64_t o = 0; o < s.outer; ++o) {
      for (std::int64_t in = 0; in < s.inner; ++in) {
        const auto base = o * s.extent * s.inner + in;
        double dot = 0.0;
        for (std::int64_t k = 0; k < s.extent; ++k) {
          dot += g[base + k * s.inner] * probs[base + k * s.inner];
        }
        for (std::int64_t k = 0; k < s.extent; ++k) {
          const auto i = base + k * s.inner;
          acc[i] += probs[i] * (g[i] - dot);
        }
      }
    }
  };
  return finish("softmax", x.shape(), std::move(out), x.dtype(), {&x}, std::move(fn));
}

Tensor log_softmax(const Tensor& x, int axis) {
  const int ax = normalize_axis(axis, x.rank());
  const auto s = split_at(x.shape(), ax);
  const auto& xd = x.impl()->data;
  std::vector<double> out(xd.size());
  std::vector<double> probs(xd.size());
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t in = 0; in < s.inner; ++in) {
      const auto base = o * s.extent * s.inner + in;
      double mx = -INFINITY;
      for (std::int64_t k = 0; k < s.extent; ++k) mx = std::max(mx, xd[base + k * s.inner]);
      double z = 0.0;
      for (std::int64_t k = 0; k < s.extent; ++k) z += std::exp(xd[base + k * s.inner] - mx);
      const double lse = mx + std::log(z);
      for (std::int64_t k = 0; k < s.extent; ++k) {
        const auto i = base + k * s.inner;
        out[i] = xd[i] - lse;
        probs[i] = std::exp(out[i]);
      }
    }
  }
  auto px = x.shared();
  auto fn = [px, probs = std::move(probs), s](const std::vector<double>& g) {
    auto& acc = grad_buffer(*px);
    for (std::int64_t o = 0; o < s.outer; ++o) {
      for (std::int64_t in = 0; in < s.inner; ++in) {
        const auto base = o * s.extent * s.inner + in;
        double gsum = 0.0;
        for (std::int64_t k = 0; k < s.extent; ++k) gsum += g[base + k * s.inner];
        for (std::int64_t k = 0; k < s.extent; ++k) {
          const auto i = base + k * s.inner;
          acc[i] += g[i] - probs[i] * gsum;
        }
      }
    }
  };
  return finish("log_softmax", x.shape(), std::move(out), x.dtype(), {&x}, std::move(fn));
}

Tensor reshape(const Tensor& x, Shape shape) {
  std::int64_t known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw ShapeError("reshape: more than one -1 extent");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0) {
    if (known == 0 || x.numel() % known != 0) {
      throw ShapeError("reshape: cannot infer extent for " + shape_str(shape));
    }
    shape[static_cast<std::size_t>(infer)] = x.numel() / known;
  }
  if (numel_of(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                     " changes element count");
  }
  auto px = x.shared();
  auto fn = [px](const std::vector<double>& g) {
    auto& acc = grad_buffer(*px);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
  };
  return finish("reshape", std::move(shape), x.impl()->data, x.dtype(), {&x}, std::move(fn));
}

Tensor permute(const Tensor& x, const std::vector<int>& order) {
  const int rank = x.rank();
  if (static_cast<int>(order.size()) != rank) throw ShapeError("permute: order rank mismatch");
  std::vector<bool> seen(static_cast<std::size_t>(rank), false);
  for (int a : order) {
    if (a < 0 || a >= rank || seen[static_cast<std::size_t>(a)]) {
      throw ShapeError("permute: invalid axis order");
    }
    seen[static_cast<std::size_t>(a)] = true;
  }
  const auto& in_shape = x.shape();
  std::vector<std::int64_t> in_stride(static_cast<std::size_t>(rank), 1);
  for (int i = rank - 2; i >= 0; --i) {
    in_stride[static_cast<std::size_t>(i)] =
        in_stride[static_cast<std::size_t>(i) + 1] * in_shape[static_cast<std::size_t>(i) + 1];
  }
  Shape out_shape(static_cast<std::size_t>(rank));
  std::vector<std::int64_t> stride(static_cast<std::size_t>(rank));
  for (int i = 0; i < rank; ++i) {
    out_shape[static_cast<std::size_t>(i)] = in_shape[static_cast<std::size_t>(order[i])];
    stride[static_cast<std::size_t>(i)] = in_stride[static_cast<std::size_t>(order[i])];
  }
  const auto n = x.numel();
  std::vector<std::int64_t> src(static_cast<std::size_t>(n));
  std::vector<std::int64_t> counter(static_cast<std::size_t>(rank), 0);
  std::int64_t pos = 0;
  for (std::int64_t k = 0; k < n; ++k) {
    src[static_cast<std::size_t>(k)] = pos;
    for (int d = rank - 1; d >= 0; --d) {
      const auto du = static_cast<std::size_t>(d);
      ++counter[du];
      pos += stride[du];
      if (counter[du] < out_shape[du]) break;
      pos -= stride[du] * counter[du];
      counter[du] = 0;
    }
  }
  const auto& xd = x.impl()->data;
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t k = 0; k < n; ++k) out[k] = xd[src[k]];
  auto px = x.shared();
  auto fn = [px, src = std::move(src)](const std::vector<double>& g) {
    auto& acc = grad_buffer(*px);
    for (std::size_t k = 0; k < g.size(); ++k) acc[src[k]] += g[k];
  };
  return finish("permute", std::move(out_shape), std::move(out), x.dtype(), {&x}, std::move(fn));
}

Tensor transpose(const Tensor& x, int a, int b) {
  std::vector<int> order(static_cast<std::size_t>(x.rank()));
  std::iota(order.begin(), order.end(), 0);
  std::swap(order[static_cast<std::size_t>(normalize_axis(a, x.rank()))],
            order[static_cast<std::size_t>(normalize_axis(b, x.rank()))]);
  return permute(x, order);
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const int rank = parts.front().rank();
  const int ax = normalize_axis(axis, rank);
  Shape out_shape = parts.front().shape();
  out_shape[static_cast<std::size_t>(ax)] = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank) throw ShapeError("concat: rank mismatch");
    for (int i = 0; i < rank; ++i) {
      if (i != ax && p.shape()[static_cast<std::size_t>(i)] !=
                         parts.front().shape()[static_cast<std::size_t>(i)]) {
        throw ShapeError("concat: shapes " + shape_str(p.shape()) + " and " +
                         shape_str(parts.front().shape()) + " disagree off-axis");
      }
    }
    out_shape[static_cast<std::size_t>(ax)] += p.shape()[static_cast<std::size_t>(ax)];
  }
  const auto s = split_at(out_shape, ax);
  std::vector<double> out(static_cast<std::size_t>(numel_of(out_shape)));
  std::vector<std::int64_t> offsets;
  std::int64_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const auto ext = p.shape()[static_cast<std::size_t>(ax)];
    const auto& pd = p.impl()->data;
    for (std::int64_t o = 0; o < s.outer; ++o) {
      std::copy_n(pd.begin() + o * ext * s.inner, ext * s.inner,
                  out.begin() + (o * s.extent + off) * s.inner);
    }
    off += ext;
  }
  std::vector<std::shared_ptr<TensorImpl>> impls;
  std::vector<const Tensor*> inputs;
  for (const auto& p : parts) {
    impls.push_back(p.shared());
    inputs.push_back(&p);
  }
  auto fn = [impls, offsets, s, ax](const std::vector<double>& g) {
    for (std::size_t j = 0; j < impls.size(); ++j) {
      auto& p = *impls[j];
      if (!p.requires_grad) continue;
      auto& acc = grad_buffer(p);
      const auto ext = p.shape[static_cast<std::size_t>(ax)];
      for (std::int64_t o = 0; o < s.outer; ++o) {
        for (std::int64_t i = 0; i < ext * s.inner; ++i) {
          acc[o * ext * s.inner + i] += g[(o * s.extent + offsets[j]) * s.inner + i];
        }
      }
    }
  };
  DType dtype = DType::F32;
  for (const auto& p : parts) {
    if (p.dtype() == DType::F64) dtype = DType::F64;
  }
  return finish("concat", std::move(out_shape), std::move(out), dtype, inputs, std::move(fn));
}

Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t length) {
  const int ax = normalize_axis(axis, x.rank());
  const auto s = split_at(x.shape(), ax);
  if (start < 0 || length < 0 || start + length > s.extent) {
    throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") out of range for extent " + std::to_string(s.extent));
  }
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(ax)] = length;
  const auto& xd = x.impl()->data;
  std::vector<double> out(static_cast<std::size_t>(s.outer * length * s.inner));
  for (std::int64_t o = 0; o < s.outer; ++o) {
    std::copy_n(xd.begin() + (o * s.extent + start) * s.inner, length * s.inner,
                out.begin() + o * length * s.inner);
  }
  auto px = x.shared();
  auto fn = [px, s, start, length](const std::vector<double>& g) {
    auto& acc = grad_buffer(*px);
    for (std::int64_t o = 0; o < s.outer; ++o) {
      for (std::int64_t i = 0; i < length * s.inner; ++i) {
        acc[(o * s.extent + start) * s.inner + i] += g[o * length * s.inner + i];
      }
    }
  };
  return finish("slice", std::move(out_shape), std::move(out), x.dtype(), {&x}, std::move(fn));
}

}  // namespace hires
