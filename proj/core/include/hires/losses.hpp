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

#include <array>
#include <cstdint>
#include <vector>

#include "hires/network.hpp"
#include "hires/random.hpp"
#include "hires/tensor.hpp"

namespace hires {

/// Integer class map [N, H, W], row-major.
struct LabelMap {
  std::int64_t n = 0, h = 0, w = 0;
  std::vector<std::int32_t> values;

  LabelMap() = default;
  LabelMap(std::int64_t n_, std::int64_t h_, std::int64_t w_, std::vector<std::int32_t> v);

  std::int64_t pixels() const { return n * h * w; }
  std::int32_t at(std::int64_t b, std::int64_t y, std::int64_t x) const {
    return values[static_cast<std::size_t>((b * h + y) * w + x)];
  }
  /// Sorted distinct class ids.
  std::vector<int> classes_present() const;
};

struct LossConfig {
  double alpha = 0.3923;
  double beta_w = 0.3923;
  double gamma = 0.2153;
  double coarse_ratio = 1.0;
  double refined_ratio = 1.0;
  double epsilon = 0.1;
  double hd_beta = 2.0;
  int dt_cap = 20;
  /// When set, the CEA term never samples `background_class`.
  bool cea_exclude_background = false;
  int background_class = 0;

  void validate() const;
  /// Weights (alpha, beta_w, gamma) as the softmax of three logits.
  static std::array<double, 3> softmax_weights(double a, double b, double c);
};

/// Generalised Dice over all K classes; absent classes get weight 0.
Tensor gd_loss(const Tensor& probs, const LabelMap& labels);

/// Smoothed target distribution for one pixel of class `label`.
std::vector<double> lsce_targets(int label, int num_classes, double epsilon);
/// Entropy of the smoothed targets, the minimum of lsce_loss.
double lsce_floor(int num_classes, double epsilon);
Tensor lsce_loss(const Tensor& logits, const LabelMap& labels, double epsilon);

struct CeaInfo {
  int cls = -1;
  bool skipped = false;
};

/// Edge-aware term for one class against constant distance maps.
Tensor cea_loss(const Tensor& probs, const LabelMap& labels, int cls, const LossConfig& config);
/// Samples the class uniformly from those present; returns 0 with
/// `info->skipped` when no class qualifies.
Tensor cea_loss(const Tensor& probs, const LabelMap& labels, const LossConfig& config, Rng& rng,
                CeaInfo* info = nullptr);

struct LossTerms {
  double gd = 0.0, lsce = 0.0, cea = 0.0;
  double weighted = 0.0;  // alpha*gd + beta_w*lsce + gamma*cea
};

struct CombinedLoss {
  Tensor total;
  LossTerms coarse;
  LossTerms refined;
  CeaInfo cea;
};

/// Both heads share one sampled CEA class. `cls` >= 0 fixes the class.
CombinedLoss combined_loss(const SegOutput& out, const LabelMap& labels, const LossConfig& config,
                           Rng& rng, int cls = -1);

}  // namespace hires
