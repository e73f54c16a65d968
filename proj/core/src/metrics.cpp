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

#include "hires/metrics.hpp"

#include <numeric>
#include <stdexcept>
#include <string>

namespace hires {

ConfusionMatrix::ConfusionMatrix(int k)
    : num_classes(k), counts(static_cast<std::size_t>(k) * static_cast<std::size_t>(k), 0) {
  if (k < 0) throw std::invalid_argument("confusion: class count must be >= 0");
}

std::int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

void update_confusion(ConfusionMatrix& cm, const std::vector<std::int32_t>& pred,
                      const std::vector<std::int32_t>& gt) {
  if (pred.size() != gt.size()) throw std::invalid_argument("confusion: prediction/label size mismatch");
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] < 0 || gt[i] >= cm.num_classes || pred[i] < 0 || pred[i] >= cm.num_classes) {
      throw std::out_of_range("confusion: label outside [0, " + std::to_string(cm.num_classes) + ")");
    }
  }
  for (std::size_t i = 0; i < gt.size(); ++i) {
    ++cm.counts[static_cast<std::size_t>(gt[i] * cm.num_classes + pred[i])];
  }
}

std::vector<std::int32_t> argmax_labels(const Tensor& scores) {
  if (scores.rank() != 4) throw ShapeError("argmax_labels: expected [N,K,H,W]");
  const auto n = scores.dim(0), k = scores.dim(1), plane = scores.dim(2) * scores.dim(3);
  const auto d = scores.data();
  std::vector<std::int32_t> out(static_cast<std::size_t>(n * plane));
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t p = 0; p < plane; ++p) {
      std::int32_t best = 0;
      double best_v = d[static_cast<std::size_t>(b * k * plane + p)];
      for (std::int64_t c = 1; c < k; ++c) {
        const double v = d[static_cast<std::size_t>((b * k + c) * plane + p)];
        if (v > best_v) {
          best_v = v;
          best = static_cast<std::int32_t>(c);
        }
      }
      out[static_cast<std::size_t>(b * plane + p)] = best;
    }
  }
  return out;
}

SegMetrics metrics(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw std::invalid_argument("metrics: empty confusion matrix");
  const int k = cm.num_classes;
  SegMetrics m;
  m.iou.assign(static_cast<std::size_t>(k), 0.0);
  m.f1.assign(static_cast<std::size_t>(k), 0.0);
  m.counted.assign(static_cast<std::size_t>(k), false);
  std::int64_t trace = 0;
  int used = 0;
  for (int c = 0; c < k; ++c) {
    std::int64_t row = 0, col = 0;
    for (int j = 0; j < k; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const auto tp = cm.at(c, c);
    trace += tp;
    const auto fn = row - tp, fp = col - tp;
    if (row + col == 0) continue;
    m.iou[static_cast<std::size_t>(c)] = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    m.f1[static_cast<std::size_t>(c)] = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    m.counted[static_cast<std::size_t>(c)] = true;
    m.miou += m.iou[static_cast<std::size_t>(c)];
    m.mean_f1 += m.f1[static_cast<std::size_t>(c)];
    ++used;
  }
  m.miou /= used;
  m.mean_f1 /= used;
  m.oa = static_cast<double>(trace) / static_cast<double>(total);
  return m;
}

}  // namespace hires
