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

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hires/tensor.hpp"
#include "op_support.hpp"

namespace hires {
namespace {

using detail::finish;
using detail::wants_grad;
using detail::broadcast_index;

// Index maps from output positions into each operand under broadcasting.
struct Broadcast {
  Shape out;
  bool same = false;
  std::vector<std::int64_t> ia, ib;
};

Broadcast make_broadcast(const Shape& a, const Shape& b) {
  Broadcast bc;
  if (a == b) {
    bc.out = a;
    bc.same = true;
    return bc;
  }
  const auto rank = std::max(a.size(), b.size());
  bc.out.assign(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const auto da = i + a.size() >= rank ? a[i + a.size() - rank] : 1;
    const auto db = i + b.size() >= rank ? b[i + b.size() - rank] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("incompatible shapes " + shape_str(a) + " and " + shape_str(b));
    }
    bc.out[i] = da == 1 ? db : da;
  }
  bc.ia = broadcast_index(a, bc.out);
  bc.ib = broadcast_index(b, bc.out);
  return bc;
}

// f(x, y) is the forward map; ga/gb return d f / d x and d f / d y.
template <class F, class GA, class GB>
Tensor binary(std::string_view op, const Tensor& a, const Tensor& b, F f, GA ga, GB gb) {
  auto bc = make_broadcast(a.shape(), b.shape());
  const auto n = numel_of(bc.out);
  const auto& da = a.impl()->data;
  const auto& db = b.impl()->data;
  std::vector<double> out(static_cast<std::size_t>(n));
  if (bc.same) {
    for (std::int64_t i = 0; i < n; ++i) out[i] = f(da[i], db[i]);
  } else {
    for (std::int64_t i = 0; i < n; ++i) out[i] = f(da[bc.ia[i]], db[bc.ib[i]]);
  }
  auto shape = bc.out;
  auto pa = a.shared();
  auto pb = b.shared();
  auto fn = [pa, pb, bc = std::move(bc), ga, gb](const std::vector<double>& g) {
    const auto n = static_cast<std::int64_t>(g.size());
    const auto& xa = pa->data;
    const auto& xb = pb->data;
    if (pa->requires_grad) {
      auto& acc = grad_buffer(*pa);
      for (std::int64_t i = 0; i < n; ++i) {
        const auto ia = bc.same ? i : bc.ia[i];
        const auto ib = bc.same ? i : bc.ib[i];
        acc[ia] += g[i] * ga(xa[ia], xb[ib]);
      }
    }
    if (pb->requires_grad) {
      auto& acc = grad_buffer(*pb);
      for (std::int64_t i = 0; i < n; ++i) {
        const auto ia = bc.same ? i : bc.ia[i];
        const auto ib = bc.same ? i : bc.ib[i];
        acc[ib] += g[i] * gb(xa[ia], xb[ib]);
      }
    }
  };
  return finish(op, std::move(shape), std::move(out), detail::promote({&a, &b}), {&a, &b},
                std::move(fn));
}

template <class F, class G>
Tensor unary(std::string_view op, const Tensor& x, F f, G dfdx) {
  const auto& dx = x.impl()->data;
  std::vector<double> out(dx.size());
  for (std::size_t i = 0; i < dx.size(); ++i) out[i] = f(dx[i]);
  auto px = x.shared();
  auto fn = [px, dfdx](const std::vector<double>& g) {
    auto& acc = grad_buffer(*px);
    const auto& v = px->data;
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * dfdx(v[i]);
  };
  return finish(op, x.shape(), std::move(out), x.dtype(), {&x}, std::move(fn));
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(
      "add_scalar", a, [s](double x) { return x + s; }, [](double) { return 1.0; });
}

Tensor scalar_mul(const Tensor& a, double s) {
  return unary(
      "scalar_mul", a, [s](double x) { return x * s; }, [s](double) { return s; });
}

Tensor neg(const Tensor& a) { return scalar_mul(a, -1.0); }

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); });
}

Tensor log(const Tensor& x) {
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double v) { return 0.5 / std::sqrt(v); });
}

Tensor square(const Tensor& x) {
  return unary(
      "square", x, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  return unary(
      "gelu", x,
      [](double v) { return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v))); },
      [](double v) {
        const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
        const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
        return 0.5 * (1.0 + t) + 0.5 * v * dt;
      });
}

namespace {
double logistic(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}
}  // namespace

Tensor silu(const Tensor& x) {
  return unary(
      "silu", x, [](double v) { return v * logistic(v); },
      [](double v) {
        const double s = logistic(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x, [](double v) { return logistic(v); },
      [](double v) {
        const double s = logistic(v);
        return s * (1.0 - s);
      });
}

namespace detail {

std::vector<std::int64_t> broadcast_index(const Shape& in, const Shape& out) {
  const auto n = numel_of(out);
  const auto rank = out.size();
  const auto offset = rank - in.size();
  std::vector<std::int64_t> stride(rank, 0);
  std::int64_t s = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    stride[i + offset] = in[i] == 1 ? 0 : s;
    s *= in[i];
  }
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  std::vector<std::int64_t> counter(rank, 0);
  std::int64_t pos = 0;
  for (std::int64_t k = 0; k < n; ++k) {
    idx[static_cast<std::size_t>(k)] = pos;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      pos += stride[d];
      if (counter[d] < out[d]) break;
      pos -= stride[d] * counter[d];
      counter[d] = 0;
    }
  }
  return idx;
}

}  // namespace detail
}  // namespace hires
