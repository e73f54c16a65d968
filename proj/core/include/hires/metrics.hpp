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
#include <vector>

#include "hires/tensor.hpp"

namespace hires {

/// K x K pixel counts; rows are ground truth, columns prediction.
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<std::int64_t> counts;

  explicit ConfusionMatrix(int k = 0);
  std::int64_t at(int gt, int pred) const {
    return counts[static_cast<std::size_t>(gt * num_classes + pred)];
  }
  std::int64_t total() const;
};

void update_confusion(ConfusionMatrix& cm, const std::vector<std::int32_t>& pred,
                      const std::vector<std::int32_t>& gt);

/// Per-pixel argmax over axis 1 of [N, K, H, W] scores, flattened [N*H*W].
std::vector<std::int32_t> argmax_labels(const Tensor& scores);

struct SegMetrics {
  std::vector<double> iou;   // per class
  std::vector<double> f1;    // per class
  std::vector<bool> counted; // false for classes with no GT and no prediction
  double miou = 0.0;
  double mean_f1 = 0.0;
  double oa = 0.0;
};

SegMetrics metrics(const ConfusionMatrix& cm);

}  // namespace hires
