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

#include "hires/losses.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "hires/distance_transform.hpp"

namespace hires {
namespace {

void check_probs_labels(const char* op, const Tensor& t, const LabelMap& labels) {
  if (t.rank() != 4 || t.dim(0) != labels.n || t.dim(2) != labels.h || t.dim(3) != labels.w) {
    throw ShapeError(std::string(op) + ": prediction " + shape_str(t.shape()) +
                     " does not match labels [" + std::to_string(labels.n) + "," +
                     std::to_string(labels.h) + "," + std::to_string(labels.w) + "]");
  }
  if (labels.pixels() == 0) throw std::invalid_argument(std::string(op) + ": empty batch");
  const auto k = t.dim(1);
  for (auto v : labels.values) {
    if (v < 0 || v >= k) {
      throw std::out_of_range(std::string(op) + ": label " + std::to_string(v) + " outside [0, " +
                              std::to_string(k) + ")");
    }
  }
}

Tensor constant(Shape shape, std::vector<double> values, DType dtype) {
  return Tensor::from(std::move(shape), std::move(values), dtype);
}

}  // namespace

LabelMap::LabelMap(std::int64_t n_, std::int64_t h_, std::int64_t w_, std::vector<std::int32_t> v)
    : n(n_), h(h_), w(w_), values(std::move(v)) {
  if (n < 0 || h < 0 || w < 0 || static_cast<std::int64_t>(values.size()) != n * h * w) {
    throw ShapeError("LabelMap: value count does not match N*H*W");
  }
}

std::vector<int> LabelMap::classes_present() const {
  std::set<int> seen(values.begin(), values.end());
  return {seen.begin(), seen.end()};
}

void LossConfig::validate() const {
  if (!(alpha > 0 && beta_w > 0 && gamma > 0)) {
    throw std::invalid_argument("LossConfig: alpha, beta_w and gamma must be positive");
  }
  if (coarse_ratio < 0 || refined_ratio < 0) {
    throw std::invalid_argument("LossConfig: output ratios must be non-negative");
  }
  if (!(epsilon >= 0 && epsilon < 1)) throw std::invalid_argument("LossConfig: epsilon must be in [0, 1)");
  if (dt_cap < 0) throw std::invalid_argument("LossConfig: dt_cap must be >= 0");
}

std::array<double, 3> LossConfig::softmax_weights(double a, double b, double c) {
  const double m = std::max({a, b, c});
  const double ea = std::exp(a - m), eb = std::exp(b - m), ec = std::exp(c - m);
  const double z = ea + eb + ec;
  return {ea / z, eb / z, ec / z};
}

Tensor gd_loss(const Tensor& probs, const LabelMap& labels) {
  check_probs_labels("gd_loss", probs, labels);
  const auto k = static_cast<int>(probs.dim(1));
  const auto r = onehot(labels.values, static_cast<int>(labels.n), static_cast<int>(labels.h),
                        static_cast<int>(labels.w), k);
  std::vector<double> count(static_cast<std::size_t>(k), 0.0);
  for (auto v : labels.values) count[static_cast<std::size_t>(v)] += 1.0;
  std::vector<double> weight(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    // r is binary, so sum of r^2 is the pixel count
    weight[static_cast<std::size_t>(c)] = count[static_cast<std::size_t>(c)] > 0 ? 1.0 / count[static_cast<std::size_t>(c)] : 0.0;
  }
  const auto dtype = probs.dtype();
  const auto rt = constant(probs.shape(), r, dtype);
  const auto wt = constant({1, k, 1, 1}, weight, dtype);
  const auto num = sum(mul(mul(rt, probs), wt));
  const auto den = sum(mul(add(rt, probs), wt));
  return add_scalar(scalar_mul(div(num, den), -2.0), 1.0);
}

std::vector<double> lsce_targets(int label, int num_classes, double epsilon) {
  if (num_classes < 2) throw std::invalid_argument("lsce: need at least 2 classes");
  if (!(epsilon >= 0 && epsilon < 1)) throw std::invalid_argument("lsce: epsilon must be in [0, 1)");
  if (label < 0 || label >= num_classes) throw std::out_of_range("lsce: label out of range");
  std::vector<double> y(static_cast<std::size_t>(num_classes), epsilon / (num_classes - 1));
  y[static_cast<std::size_t>(label)] = 1.0 - epsilon;
  return y;
}

double lsce_floor(int num_classes, double epsilon) {
  double h = 0.0;
  for (double y : lsce_targets(0, num_classes, epsilon)) {
    if (y > 0) h -= y * std::log(y);
  }
  return h;
}

Tensor lsce_loss(const Tensor& logits, const LabelMap& labels, double epsilon) {
  check_probs_labels("lsce_loss", logits, labels);
  const auto k = logits.dim(1);
  const auto plane = labels.h * labels.w;
  std::vector<double> y(static_cast<std::size_t>(logits.numel()));
  if (k < 2) throw std::invalid_argument("lsce: need at least 2 classes");
  if (!(epsilon >= 0 && epsilon < 1)) throw std::invalid_argument("lsce: epsilon must be in [0, 1)");
  const double off = epsilon / static_cast<double>(k - 1);
  for (std::int64_t b = 0; b < labels.n; ++b) {
    for (std::int64_t c = 0; c < k; ++c) {
      for (std::int64_t p = 0; p < plane; ++p) {
        const auto label = labels.values[static_cast<std::size_t>(b * plane + p)];
        y[static_cast<std::size_t>((b * k + c) * plane + p)] = label == c ? 1.0 - epsilon : off;
      }
    }
  }
  const auto yt = constant(logits.shape(), std::move(y), logits.dtype());
  const auto ce = sum(mul(yt, log_softmax(logits, 1)));
  return scalar_mul(ce, -1.0 / static_cast<double>(labels.pixels()));
}

Tensor cea_loss(const Tensor& probs, const LabelMap& labels, int cls, const LossConfig& config) {
  check_probs_labels("cea_loss", probs, labels);
  const auto k = probs.dim(1);
  if (cls < 0 || cls >= k) throw std::out_of_range("cea_loss: class out of range");
  const auto h = static_cast<int>(labels.h), w = static_cast<int>(labels.w);
  const auto plane = labels.h * labels.w;
  std::vector<double> target(static_cast<std::size_t>(labels.pixels()));
  std::vector<double> weight(target.size());
  const auto p = probs.data();
  for (std::int64_t b = 0; b < labels.n; ++b) {
    std::vector<std::uint8_t> gt(static_cast<std::size_t>(plane)), pred(gt.size());
    for (std::int64_t i = 0; i < plane; ++i) {
      gt[static_cast<std::size_t>(i)] = labels.values[static_cast<std::size_t>(b * plane + i)] == cls;
      pred[static_cast<std::size_t>(i)] = p[static_cast<std::size_t>((b * k + cls) * plane + i)] >= 0.5;
    }
    const auto dg = cascaded_conv_dt(BinaryMask(h, w, gt), config.dt_cap);
    const auto ds = cascaded_conv_dt(BinaryMask(h, w, std::move(pred)), config.dt_cap);
    for (std::int64_t i = 0; i < plane; ++i) {
      const auto s = static_cast<std::size_t>(i);
      target[static_cast<std::size_t>(b * plane + i)] = gt[s];
      weight[static_cast<std::size_t>(b * plane + i)] =
          std::pow(static_cast<double>(dg.cells[s]), config.hd_beta) +
          std::pow(static_cast<double>(ds.cells[s]), config.hd_beta);
    }
  }
  const Shape shape{labels.n, 1, labels.h, labels.w};
  const auto pc = slice(probs, 1, cls, 1);
  const auto residual = sub(constant(shape, std::move(target), probs.dtype()), pc);
  return mean(mul(square(residual), constant(shape, std::move(weight), probs.dtype())));
}

namespace {

int sample_class(const LabelMap& labels, const LossConfig& config, Rng& rng) {
  auto present = labels.classes_present();
  if (config.cea_exclude_background) {
    std::erase(present, config.background_class);
  }
  if (present.empty()) return -1;
  return present[static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(present.size())))];
}

}  // namespace

Tensor cea_loss(const Tensor& probs, const LabelMap& labels, const LossConfig& config, Rng& rng,
                CeaInfo* info) {
  const int cls = sample_class(labels, config, rng);
  if (info != nullptr) *info = CeaInfo{cls, cls < 0};
  if (cls < 0) return Tensor::scalar(0.0, probs.dtype());
  return cea_loss(probs, labels, cls, config);
}

CombinedLoss combined_loss(const SegOutput& out, const LabelMap& labels, const LossConfig& config,
                           Rng& rng, int cls) {
  config.validate();
  CombinedLoss result;
  result.cea.cls = cls >= 0 ? cls : sample_class(labels, config, rng);
  result.cea.skipped = result.cea.cls < 0;

  auto head = [&](const Tensor& logits, LossTerms& terms) {
    const auto probs = softmax(logits, 1);
    const auto gd = gd_loss(probs, labels);
    const auto ls = lsce_loss(logits, labels, config.epsilon);
    auto total = add(scalar_mul(gd, config.alpha), scalar_mul(ls, config.beta_w));
    terms.gd = gd.item();
    terms.lsce = ls.item();
    if (!result.cea.skipped) {
      const auto cea = cea_loss(probs, labels, result.cea.cls, config);
      terms.cea = cea.item();
      total = add(total, scalar_mul(cea, config.gamma));
    }
    terms.weighted = total.item();
    return total;
  };
  const auto coarse = head(out.coarse, result.coarse);
  const auto refined = head(out.refined, result.refined);
  result.total = add(scalar_mul(coarse, config.coarse_ratio), scalar_mul(refined, config.refined_ratio));
  return result;
}

}  // namespace hires
