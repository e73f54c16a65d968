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

#include "hires/losses.hpp"
#include "hires/random.hpp"
#include "hires/tensor.hpp"

namespace hires {

/// Generator settings for the synthetic segmentation set. Class 0 is
/// textured background; 1 rectangles, 2 discs, 3 two-pixel roads.
struct SynthSpec {
  std::uint64_t seed = 7;
  int count = 8;
  int height = 64;
  int width = 64;
  int num_classes = 4;
  double density = 1.0;  // scales the number of shapes per image
  double noise = 0.05;
  /// Road centre lines snap to the middle of this pixel lattice; 1 places
  /// them freely. The default matches the 4x output stride of the network,
  /// whose bilinearly upsampled logits cannot resolve a 2-pixel line at an
  /// arbitrary sub-cell offset.
  int road_grid = 4;

  void validate() const;
};

struct SegSample {
  std::vector<double> image;        // [3, H, W] in [0, 1]
  std::vector<std::int32_t> label;  // [H, W]
};

struct Dataset {
  int height = 0, width = 0, num_classes = 0;
  std::vector<SegSample> samples;
  std::vector<std::int64_t> class_counts;  // pixels per class over the set
};

struct SegBatch {
  Tensor images;  // [N, 3, H, W]
  LabelMap labels;
};

Dataset synth_dataset(const SynthSpec& spec);

/// Stacks `indices` of `data` into one batch.
SegBatch make_batch(const Dataset& data, const std::vector<std::size_t>& indices,
                    DType dtype = DType::F32);

struct SegAugmentOptions {
  bool flips = true;
  std::vector<double> scales{0.5, 0.75, 1.0, 1.25, 1.5};
};

/// Random flips and rescale (nearest neighbour) with crop or pad back to
/// the original size. Padding uses black pixels and class 0.
SegSample augment(const SegSample& sample, int height, int width, Rng& rng,
                  const SegAugmentOptions& options = {});

/// Deterministic pieces of `augment`, exposed for tests.
SegSample flip(const SegSample& sample, int height, int width, bool horizontal);
SegSample rescale(const SegSample& sample, int height, int width, double scale, double offset_y,
                  double offset_x);

}  // namespace hires
