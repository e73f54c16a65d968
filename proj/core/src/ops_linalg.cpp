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

#include "hires/tensor.hpp"
#include "op_support.hpp"

namespace hires {

void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          const double* a, const double* b, double* c, bool accumulate) {
  if (!accumulate) std::fill_n(c, m * n, 0.0);
  if (!trans_a && !trans_b) {
    for (std::int64_t i = 0; i < m; ++i) {
      double* crow = c + i * n;
      for (std::int64_t p = 0; p < k; ++p) {
        const double av = a[i * k + p];
        if (av == 0.0) continue;
        const double* brow = b + p * n;
        for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (trans_a && !trans_b) {
    // a is stored [k, m]
    for (std::int64_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      for (std::int64_t i = 0; i < m; ++i) {
        const double av = a[p * m + i];
        if (av == 0.0) continue;
        double* crow = c + i * n;
        for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!trans_a && trans_b) {
    // b is stored [n, k]
    for (std::int64_t i = 0; i < m; ++i) {
      const double* arow = a + i * k;
      for (std::int64_t j = 0; j < n; ++j) {
        const double* brow = b + j * k;
        double acc = 0.0;
        for (std::int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        c[i * n + j] += acc;
      }
    }
  } else {
    for (std::int64_t i = 0; i < m; ++i) {
      for (std::int64_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::int64_t p = 0; p < k; ++p) acc += a[p * m + i] * b[j * k + p];
        c[i * n + j] += acc;
      }
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<std::size_t>(m * n));
  gemm(false, false, m, n, k, a.data().data(), b.data().data(), out.data(), false);
  auto pa = a.shared();
  auto pb = b.shared();
  auto fn = [pa, pb, m, n, k](const std::vector<double>& g) {
    if (pa->requires_grad) {
      gemm(false, true, m, k, n, g.data(), pb->data.data(), grad_buffer(*pa).data(), true);
    }
    if (pb->requires_grad) {
      gemm(true, false, k, n, m, pa->data.data(), g.data(), grad_buffer(*pb).data(), true);
    }
  };
  return detail::finish("matmul", {m, n}, std::move(out), detail::promote({&a, &b}), {&a, &b},
                        std::move(fn));
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    throw ShapeError("bmm: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const auto batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<double> out(static_cast<std::size_t>(batch * m * n));
  for (std::int64_t t = 0; t < batch; ++t) {
    gemm(false, false, m, n, k, a.data().data() + t * m * k, b.data().data() + t * k * n,
         out.data() + t * m * n, false);
  }
  auto pa = a.shared();
  auto pb = b.shared();
  auto fn = [pa, pb, batch, m, n, k](const std::vector<double>& g) {
    for (std::int64_t t = 0; t < batch; ++t) {
      const double* gt = g.data() + t * m * n;
      if (pa->requires_grad) {
        gemm(false, true, m, k, n, gt, pb->data.data() + t * k * n,
             grad_buffer(*pa).data() + t * m * k, true);
      }
      if (pb->requires_grad) {
        gemm(true, false, k, n, m, pa->data.data() + t * m * k, gt,
             grad_buffer(*pb).data() + t * k * n, true);
      }
    }
  };
  return detail::finish("bmm", {batch, m, n}, std::move(out), detail::promote({&a, &b}), {&a, &b},
                        std::move(fn));
}

namespace {

struct ConvGeometry {
  std::int64_t n, c, h, w;
  std::int64_t cout, ho, wo;
  std::int64_t cin_g, cout_g, patch;  // patch = cin_g * kh * kw
  ConvSpec spec;
};

// Patch matrix for image `img` ([C,H,W]) restricted to group g: [patch, ho*wo].
void im2col(const ConvGeometry& geo, const double* img, std::int64_t g, double* cols) {
  const auto& s = geo.spec;
  const auto plane = geo.ho * geo.wo;
  for (std::int64_t ci = 0; ci < geo.cin_g; ++ci) {
    const double* chan = img + (g * geo.cin_g + ci) * geo.h * geo.w;
    for (std::int64_t ky = 0; ky < s.kernel_h; ++ky) {
      for (std::int64_t kx = 0; kx < s.kernel_w; ++kx) {
        double* row = cols + ((ci * s.kernel_h + ky) * s.kernel_w + kx) * plane;
        for (std::int64_t oy = 0; oy < geo.ho; ++oy) {
          const auto iy = oy * s.stride_h - s.pad_h + ky;
          for (std::int64_t ox = 0; ox < geo.wo; ++ox) {
            const auto ix = ox * s.stride_w - s.pad_w + kx;
            row[oy * geo.wo + ox] =
                (iy >= 0 && iy < geo.h && ix >= 0 && ix < geo.w) ? chan[iy * geo.w + ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& geo, const double* cols, std::int64_t g, double* img) {
  const auto& s = geo.spec;
  const auto plane = geo.ho * geo.wo;
  for (std::int64_t ci = 0; ci < geo.cin_g; ++ci) {
    double* chan = img + (g * geo.cin_g + ci) * geo.h * geo.w;
    for (std::int64_t ky = 0; ky < s.kernel_h; ++ky) {
      for (std::int64_t kx = 0; kx < s.kernel_w; ++kx) {
        const double* row = cols + ((ci * s.kernel_h + ky) * s.kernel_w + kx) * plane;
        for (std::int64_t oy = 0; oy < geo.ho; ++oy) {
          const auto iy = oy * s.stride_h - s.pad_h + ky;
          if (iy < 0 || iy >= geo.h) continue;
          for (std::int64_t ox = 0; ox < geo.wo; ++ox) {
            const auto ix = ox * s.stride_w - s.pad_w + kx;
            if (ix >= 0 && ix < geo.w) chan[iy * geo.w + ix] += row[oy * geo.wo + ox];
          }
        }
      }
    }
  }
}

std::int64_t out_extent(std::int64_t in, std::int64_t k, std::int64_t stride, std::int64_t pad,
                        const char* axis) {
  const auto span = in + 2 * pad - k;
  // Windows that do not fit are dropped; that may only discard padding.
  if (stride < 1 || span < 0 || span % stride > pad) {
    throw ShapeError(std::string("conv2d: non-integral output ") + axis + " for input " +
                     std::to_string(in) + ", kernel " + std::to_string(k) + ", stride " +
                     std::to_string(stride) + ", pad " + std::to_string(pad));
  }
  return span / stride + 1;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvSpec& spec) {
  if (x.rank() != 4) throw ShapeError("conv2d: input must be [N,C,H,W], got " + shape_str(x.shape()));
  ConvGeometry geo{};
  geo.spec = spec;
  geo.n = x.dim(0);
  geo.c = x.dim(1);
  geo.h = x.dim(2);
  geo.w = x.dim(3);
  geo.cout = spec.out_channels;
  if (spec.groups < 1 || geo.c % spec.groups != 0 || geo.cout % spec.groups != 0) {
    throw ShapeError("conv2d: channels " + std::to_string(geo.c) + "->" + std::to_string(geo.cout) +
                     " not divisible by groups " + std::to_string(spec.groups));
  }
  geo.cin_g = geo.c / spec.groups;
  geo.cout_g = geo.cout / spec.groups;
  const Shape wshape{geo.cout, geo.cin_g, spec.kernel_h, spec.kernel_w};
  if (weight.shape() != wshape) {
    throw ShapeError("conv2d: weight shape " + shape_str(weight.shape()) + ", expected " +
                     shape_str(wshape));
  }
  if (bias.defined() && bias.shape() != Shape{geo.cout}) {
    throw ShapeError("conv2d: bias shape " + shape_str(bias.shape()));
  }
  geo.ho = out_extent(geo.h, spec.kernel_h, spec.stride_h, spec.pad_h, "height");
  geo.wo = out_extent(geo.w, spec.kernel_w, spec.stride_w, spec.pad_w, "width");
  geo.patch = geo.cin_g * spec.kernel_h * spec.kernel_w;

  const auto plane = geo.ho * geo.wo;
  std::vector<double> out(static_cast<std::size_t>(geo.n * geo.cout * plane));
  std::vector<double> cols(static_cast<std::size_t>(geo.patch * plane));
  const double* xd = x.data().data();
  const double* wd = weight.data().data();
  for (std::int64_t b = 0; b < geo.n; ++b) {
    for (std::int64_t g = 0; g < spec.groups; ++g) {
      im2col(geo, xd + b * geo.c * geo.h * geo.w, g, cols.data());
      double* dst = out.data() + (b * geo.cout + g * geo.cout_g) * plane;
      gemm(false, false, geo.cout_g, plane, geo.patch, wd + g * geo.cout_g * geo.patch, cols.data(),
           dst, false);
    }
    if (bias.defined()) {
      for (std::int64_t co = 0; co < geo.cout; ++co) {
        double* dst = out.data() + (b * geo.cout + co) * plane;
        const double bv = bias.data()[static_cast<std::size_t>(co)];
        for (std::int64_t i = 0; i < plane; ++i) dst[i] += bv;
      }
    }
  }

  auto px = x.shared();
  auto pw = weight.shared();
  auto pb = bias.defined() ? bias.shared() : nullptr;
  auto fn = [px, pw, pb, geo](const std::vector<double>& g) {
    const auto plane = geo.ho * geo.wo;
    std::vector<double> cols(static_cast<std::size_t>(geo.patch * plane));
    std::vector<double> dcols(cols.size());
    for (std::int64_t b = 0; b < geo.n; ++b) {
      for (std::int64_t gr = 0; gr < geo.spec.groups; ++gr) {
        const double* gout = g.data() + (b * geo.cout + gr * geo.cout_g) * plane;
        if (pw->requires_grad) {
          im2col(geo, px->data.data() + b * geo.c * geo.h * geo.w, gr, cols.data());
          gemm(false, true, geo.cout_g, geo.patch, plane, gout, cols.data(),
               grad_buffer(*pw).data() + gr * geo.cout_g * geo.patch, true);
        }
        if (px->requires_grad) {
          gemm(true, false, geo.patch, plane, geo.cout_g, pw->data.data() + gr * geo.cout_g * geo.patch,
               gout, dcols.data(), false);
          col2im(geo, dcols.data(), gr, grad_buffer(*px).data() + b * geo.c * geo.h * geo.w);
        }
      }
      if (pb && pb->requires_grad) {
        auto& acc = grad_buffer(*pb);
        for (std::int64_t co = 0; co < geo.cout; ++co) {
          const double* gout = g.data() + (b * geo.cout + co) * plane;
          double s = 0.0;
          for (std::int64_t i = 0; i < plane; ++i) s += gout[i];
          acc[static_cast<std::size_t>(co)] += s;
        }
      }
    }
  };
  return detail::finish("conv2d", {geo.n, geo.cout, geo.ho, geo.wo}, std::move(out),
                        detail::promote({&x, &weight, &bias}), {&x, &weight, &bias},
                        std::move(fn));
}

}  // namespace hires
