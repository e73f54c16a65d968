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

#include "hires/tensor.hpp"
#include "op_support.hpp"

namespace hires {
namespace {

void require_nchw(const Tensor& x, const char* op) {
  if (x.rank() != 4) {
    throw ShapeError(std::string(op) + ": expected [N,C,H,W], got " + shape_str(x.shape()));
  }
}

}  // namespace

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   BatchNormState& stats, bool training, double eps, double momentum) {
  require_nchw(x, "batchnorm2d");
  if (!(eps > 0.0)) throw std::invalid_argument("batchnorm2d: eps must be positive");
  const auto n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  const Shape cshape{c};
  if (gamma.shape() != cshape || beta.shape() != cshape ||
      stats.running_mean.shape() != cshape || stats.running_var.shape() != cshape) {
    throw ShapeError("batchnorm2d: parameters do not match " + std::to_string(c) + " channels");
  }
  const auto count = n * plane;
  const auto& xd = x.impl()->data;
  std::vector<double> mu(static_cast<std::size_t>(c)), inv_std(static_cast<std::size_t>(c));
  if (training) {
    if (count == 0) throw ShapeError("batchnorm2d: empty batch");
    auto rm = stats.running_mean.mutable_data();
    auto rv = stats.running_var.mutable_data();
    const auto rdtype = stats.running_mean.dtype();
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::int64_t b = 0; b < n; ++b) {
        const double* p = xd.data() + (b * c + ch) * plane;
        for (std::int64_t i = 0; i < plane; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(count);
      double v = 0.0;
      for (std::int64_t b = 0; b < n; ++b) {
        const double* p = xd.data() + (b * c + ch) * plane;
        for (std::int64_t i = 0; i < plane; ++i) v += (p[i] - m) * (p[i] - m);
      }
      const double biased = v / static_cast<double>(count);
      const double unbiased = count > 1 ? v / static_cast<double>(count - 1) : biased;
      mu[ch] = m;
      inv_std[ch] = 1.0 / std::sqrt(biased + eps);
      rm[ch] = round_to(rdtype, (1.0 - momentum) * rm[ch] + momentum * m);
      rv[ch] = round_to(rdtype, (1.0 - momentum) * rv[ch] + momentum * unbiased);
    }
  } else {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      mu[ch] = stats.running_mean.data()[ch];
      inv_std[ch] = 1.0 / std::sqrt(stats.running_var.data()[ch] + eps);
    }
  }

  std::vector<double> xhat(xd.size()), out(xd.size());
  const auto& gd = gamma.impl()->data;
  const auto& bd = beta.impl()->data;
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const auto base = (b * c + ch) * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        xhat[base + i] = (xd[base + i] - mu[ch]) * inv_std[ch];
        out[base + i] = gd[ch] * xhat[base + i] + bd[ch];
      }
    }
  }

  auto px = x.shared();
  auto pg = gamma.shared();
  auto pbeta = beta.shared();
  auto fn = [px, pg, pbeta, xhat = std::move(xhat), inv_std, training, n, c, plane,
             count](const std::vector<double>& g) {
    const auto& gam = pg->data;
    if (pg->requires_grad || pbeta->requires_grad) {
      for (std::int64_t ch = 0; ch < c; ++ch) {
        double dg = 0.0, db = 0.0;
        for (std::int64_t b = 0; b < n; ++b) {
          const auto base = (b * c + ch) * plane;
          for (std::int64_t i = 0; i < plane; ++i) {
            dg += g[base + i] * xhat[base + i];
            db += g[base + i];
          }
        }
        if (pg->requires_grad) grad_buffer(*pg)[ch] += dg;
        if (pbeta->requires_grad) grad_buffer(*pbeta)[ch] += db;
      }
    }
    if (!px->requires_grad) return;
    auto& acc = grad_buffer(*px);
    for (std::int64_t ch = 0; ch < c; ++ch) {
      if (!training) {
        for (std::int64_t b = 0; b < n; ++b) {
          const auto base = (b * c + ch) * plane;
          for (std::int64_t i = 0; i < plane; ++i) acc[base + i] += g[base + i] * gam[ch] * inv_std[ch];
        }
        continue;
      }
      // dx = inv_std / M * (M * dxhat - sum(dxhat) - xhat * sum(dxhat * xhat))
      double sum_d = 0.0, sum_dx = 0.0;
      for (std::int64_t b = 0; b < n; ++b) {
        const auto base = (b * c + ch) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          const double d = g[base + i] * gam[ch];
          sum_d += d;
          sum_dx += d * xhat[base + i];
        }
      }
      const double m = static_cast<double>(count);
      for (std::int64_t b = 0; b < n; ++b) {
        const auto base = (b * c + ch) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          const double d = g[base + i] * gam[ch];
          acc[base + i] += inv_std[ch] / m * (m * d - sum_d - xhat[base + i] * sum_dx);
        }
      }
    }
  };
  return detail::finish("batchnorm2d", x.shape(), std::move(out),
                        detail::promote({&x, &gamma, &beta}), {&x, &gamma, &beta}, std::move(fn));
}

namespace {

// Source taps for one output coordinate of half-pixel bilinear resampling.
struct Tap {
  std::int64_t i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<Tap> bilinear_taps(std::int64_t in, int scale) {
  std::vector<Tap> taps(static_cast<std::size_t>(in * scale));
  for (std::int64_t o = 0; o < in * scale; ++o) {
    double src = (static_cast<double>(o) + 0.5) / scale - 0.5;
    src = std::max(src, 0.0);
    auto i0 = static_cast<std::int64_t>(std::floor(src));
    i0 = std::min(i0, in - 1);
    const auto i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

Tensor bilinear_upsample(const Tensor& x, int scale) {
  require_nchw(x, "bilinear_upsample");
  if (scale < 1) throw std::invalid_argument("bilinear_upsample: scale must be >= 1");
  const auto planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto oh = h * scale, ow = w * scale;
  const auto ty = bilinear_taps(h, scale);
  const auto tx = bilinear_taps(w, scale);
  const auto& xd = x.impl()->data;
  std::vector<double> out(static_cast<std::size_t>(planes * oh * ow));
  for (std::int64_t p = 0; p < planes; ++p) {
    const double* src = xd.data() + p * h * w;
    double* dst = out.data() + p * oh * ow;
    for (std::int64_t oy = 0; oy < oh; ++oy) {
      const auto& a = ty[oy];
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        const auto& b = tx[ox];
        const double top = src[a.i0 * w + b.i0] * (1.0 - b.w1) + src[a.i0 * w + b.i1] * b.w1;
        const double bot = src[a.i1 * w + b.i0] * (1.0 - b.w1) + src[a.i1 * w + b.i1] * b.w1;
        dst[oy * ow + ox] = top * (1.0 - a.w1) + bot * a.w1;
      }
    }
  }
  auto px = x.shared();
  auto fn = [px, ty, tx, planes, h, w, oh, ow](const std::vector<double>& g) {
    auto& acc = grad_buffer(*px);
    for (std::int64_t p = 0; p < planes; ++p) {
      double* dsrc = acc.data() + p * h * w;
      const double* gp = g.data() + p * oh * ow;
      for (std::int64_t oy = 0; oy < oh; ++oy) {
        const auto& a = ty[oy];
        for (std::int64_t ox = 0; ox < ow; ++ox) {
          const auto& b = tx[ox];
          const double v = gp[oy * ow + ox];
          dsrc[a.i0 * w + b.i0] += v * (1.0 - a.w1) * (1.0 - b.w1);
          dsrc[a.i0 * w + b.i1] += v * (1.0 - a.w1) * b.w1;
          dsrc[a.i1 * w + b.i0] += v * a.w1 * (1.0 - b.w1);
          dsrc[a.i1 * w + b.i1] += v * a.w1 * b.w1;
        }
      }
    }
  };
  return detail::finish("bilinear_upsample", {x.dim(0), x.dim(1), oh, ow}, std::move(out),
                        x.dtype(), {&x}, std::move(fn));
}

Tensor global_avg_pool(const Tensor& x) {
  require_nchw(x, "global_avg_pool");
  const auto planes = x.dim(0) * x.dim(1), plane = x.dim(2) * x.dim(3);
  if (plane == 0) throw ShapeError("global_avg_pool: empty spatial extent");
  const auto& xd = x.impl()->data;
  std::vector<double> out(static_cast<std::size_t>(planes));
  for (std::int64_t p = 0; p < planes; ++p) {
    double s = 0.0;
    for (std::int64_t i = 0; i < plane; ++i) s += xd[p * plane + i];
    out[p] = s / static_cast<double>(plane);
  }
  auto px = x.shared();
  auto fn = [px, planes, plane](const std::vector<double>& g) {
    auto& acc = grad_buffer(*px);
    const double inv = 1.0 / static_cast<double>(plane);
    for (std::int64_t p = 0; p < planes; ++p) {
      for (std::int64_t i = 0; i < plane; ++i) acc[p * plane + i] += g[p] * inv;
    }
  };
  return detail::finish("global_avg_pool", {x.dim(0), x.dim(1)}, std::move(out), x.dtype(), {&x},
                        std::move(fn));
}

}  // namespace hires
