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

namespace hires {

/// H x W grid of {0, 1}; 1 marks foreground.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> cells;

  BinaryMask() = default;
  BinaryMask(int h, int w, std::vector<std::uint8_t> values);
  static BinaryMask filled(int h, int w, std::uint8_t value);

  std::uint8_t at(int y, int x) const { return cells[static_cast<std::size_t>(y * width + x)]; }
};

/// Truncated Manhattan distance of every cell to the nearest background cell.
/// Cells outside the grid count as background.
struct DistanceMap {
  int height = 0;
  int width = 0;
  int cap = 0;
  std::vector<std::int32_t> cells;

  std::int32_t at(int y, int x) const { return cells[static_cast<std::size_t>(y * width + x)]; }
  bool operator==(const DistanceMap&) const = default;
};

/// Multi-source breadth-first search from every background cell and the
/// grid exterior, clipped at `cap`.
DistanceMap exact_dt(const BinaryMask& mask, int cap);

/// Sum of the mask and its first cap - 1 erosions by the 3x3 cross; each
/// erosion is a minimum over the 4-neighbourhood with zero padding. Equals
/// exact_dt for the same cap.
DistanceMap cascaded_conv_dt(const BinaryMask& mask, int cap);

/// Labels [N, H, W] (row-major) to K one-hot planes [N, K, H, W] in {0, 1}.
std::vector<double> onehot(const std::vector<std::int32_t>& labels, int n, int h, int w, int k);

}  // namespace hires
