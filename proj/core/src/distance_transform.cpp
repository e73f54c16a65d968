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

#include "hires/distance_transform.hpp"

#include <algorithm>
#include <deque>
#include <stdexcept>
#include <string>

namespace hires {

BinaryMask::BinaryMask(int h, int w, std::vector<std::uint8_t> values)
    : height(h), width(w), cells(std::move(values)) {
  if (h < 0 || w < 0 || cells.size() != static_cast<std::size_t>(h) * static_cast<std::size_t>(w)) {
    throw std::invalid_argument("BinaryMask: size mismatch");
  }
  for (auto v : cells) {
    if (v > 1) throw std::invalid_argument("BinaryMask: values must be 0 or 1");
  }
}

BinaryMask BinaryMask::filled(int h, int w, std::uint8_t value) {
  return BinaryMask(h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h * w), value));
}

DistanceMap exact_dt(const BinaryMask& mask, int cap) {
  const int h = mask.height, w = mask.width;
  DistanceMap out{h, w, std::max(cap, 0), std::vector<std::int32_t>(static_cast<std::size_t>(h * w), -1)};
  std::deque<int> frontier;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int i = y * w + x;
      if (mask.cells[i] == 0) {
        out.cells[i] = 0;
        frontier.push_back(i);
      } else if (y == 0 || x == 0 || y == h - 1 || x == w - 1) {
        // adjacent to the exterior background
        out.cells[i] = 1;
        frontier.push_back(i);
      }
    }
  }
  // Seeds carry distance 0 or 1; process level by level to keep BFS order.
  std::stable_sort(frontier.begin(), frontier.end(),
                   [&](int a, int b) { return out.cells[a] < out.cells[b]; });
  while (!frontier.empty()) {
    const int i = frontier.front();
    frontier.pop_front();
    const int y = i / w, x = i % w;
    const int next = out.cells[i] + 1;
    const int ny[4] = {y - 1, y + 1, y, y};
    const int nx[4] = {x, x, x - 1, x + 1};
    for (int k = 0; k < 4; ++k) {
      if (ny[k] < 0 || ny[k] >= h || nx[k] < 0 || nx[k] >= w) continue;
      const int j = ny[k] * w + nx[k];
      if (out.cells[j] >= 0) continue;
      out.cells[j] = next;
      frontier.push_back(j);
    }
  }
  for (auto& d : out.cells) d = std::min(d, out.cap);
  return out;
}

DistanceMap cascaded_conv_dt(const BinaryMask& mask, int cap) {
  const int h = mask.height, w = mask.width;
  DistanceMap out{h, w, std::max(cap, 0), std::vector<std::int32_t>(static_cast<std::size_t>(h * w), 0)};
  std::vector<std::uint8_t> cur(mask.cells.begin(), mask.cells.end());
  std::vector<std::uint8_t> next(cur.size());
  auto value = [&](int y, int x) -> std::uint8_t {
    return (y < 0 || y >= h || x < 0 || x >= w) ? 0 : cur[static_cast<std::size_t>(y * w + x)];
  };
  for (int step = 0; step < out.cap; ++step) {
    bool any = false;
    for (std::size_t i = 0; i < cur.size(); ++i) {
      out.cells[i] += cur[i];
      any = any || cur[i] != 0;
    }
    if (!any) break;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        next[static_cast<std::size_t>(y * w + x)] =
            std::min({value(y, x), value(y - 1, x), value(y + 1, x), value(y, x - 1), value(y, x + 1)});
      }
    }
    std::swap(cur, next);
  }
  return out;
}

std::vector<double> onehot(const std::vector<std::int32_t>& labels, int n, int h, int w, int k) {
  const auto plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  if (labels.size() != static_cast<std::size_t>(n) * plane) {
    throw std::invalid_argument("onehot: label count does not match N*H*W");
  }
  std::vector<double> out(static_cast<std::size_t>(n) * static_cast<std::size_t>(k) * plane, 0.0);
  for (int b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < plane; ++p) {
      const auto label = labels[static_cast<std::size_t>(b) * plane + p];
      if (label < 0 || label >= k) {
        throw std::out_of_range("onehot: label " + std::to_string(label) + " outside [0, " +
                                std::to_string(k) + ")");
      }
      out[(static_cast<std::size_t>(b) * static_cast<std::size_t>(k) + static_cast<std::size_t>(label)) *
              plane + p] = 1.0;
    }
  }
  return out;
}

}  // namespace hires
