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

#include "hires/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace hires {
namespace {

using Color = std::array<double, 3>;

struct Canvas {
  int h, w;
  SegSample& s;

  void paint(int y, int x, const Color& c, std::int32_t cls) {
    if (y < 0 || y >= h || x < 0 || x >= w) return;
    const auto plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    const auto p = static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
    for (std::size_t ch = 0; ch < 3; ++ch) s.image[ch * plane + p] = c[ch];
    s.label[p] = cls;
  }
};

Color jittered(Color base, Rng& rng, double amount) {
  for (auto& v : base) v += rng.uniform(-amount, amount);
  return base;
}

int count_for(double density, double mean) {
  return std::max(1, static_cast<int>(std::lround(density * mean)));
}

}  // namespace

void SynthSpec::validate() const {
  if (num_classes < 2 || num_classes > 4) {
    throw std::invalid_argument("synth: num_classes must be in [2, 4] (background plus up to 3 shape kinds)");
  }
  if (count < 1) throw std::invalid_argument("synth: count must be >= 1");
  if (height < 8 || width < 8) throw std::invalid_argument("synth: images must be at least 8x8");
  if (density <= 0) throw std::invalid_argument("synth: density must be positive");
  if (noise < 0) throw std::invalid_argument("synth: noise must be >= 0");
  if (road_grid < 1 || road_grid > std::min(height, width) / 2) {
    throw std::invalid_argument("synth: road_grid must be in [1, min(H, W) / 2]");
  }
}

Dataset synth_dataset(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int h = spec.height, w = spec.width;
  const auto plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  const double unit = std::min(h, w) / 64.0;
  Dataset data{h, w, spec.num_classes, {}, std::vector<std::int64_t>(static_cast<std::size_t>(spec.num_classes), 0)};

  for (int i = 0; i < spec.count; ++i) {
    SegSample s{std::vector<double>(3 * plane), std::vector<std::int32_t>(plane, 0)};
    Canvas canvas{h, w, s};

    // Textured background: two random low-frequency waves over a green base.
    const double f1 = rng.uniform(0.1, 0.3), f2 = rng.uniform(0.1, 0.3);
    const double p1 = rng.uniform(0.0, 6.28), p2 = rng.uniform(0.0, 6.28);
    const Color ground{0.35, 0.5, 0.3};
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double t = 0.06 * std::sin(f1 * x + p1) + 0.06 * std::sin(f2 * y + p2);
        canvas.paint(y, x, {ground[0] + t, ground[1] + t, ground[2] + t}, 0);
      }
    }

    if (spec.num_classes > 1) {
      const int n = count_for(spec.density, 2.0);
      for (int r = 0; r < n; ++r) {
        const int rh = static_cast<int>(rng.uniform(8 * unit, 20 * unit));
        const int rw = static_cast<int>(rng.uniform(8 * unit, 20 * unit));
        const int y0 = static_cast<int>(rng.below(std::max(1, h - rh)));
        const int x0 = static_cast<int>(rng.below(std::max(1, w - rw)));
        const auto c = jittered({0.75, 0.45, 0.4}, rng, 0.05);
        for (int y = y0; y < y0 + rh; ++y) {
          for (int x = x0; x < x0 + rw; ++x) canvas.paint(y, x, c, 1);
        }
      }
    }
    if (spec.num_classes > 2) {
      const int n = count_for(spec.density, 1.5);
      for (int d = 0; d < n; ++d) {
        const double radius = rng.uniform(5 * unit, 10 * unit);
        const double cy = rng.uniform(radius, h - radius), cx = rng.uniform(radius, w - radius);
        const auto c = jittered({0.2, 0.3, 0.75}, rng, 0.05);
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
            if (dy * dy + dx * dx <= radius * radius) canvas.paint(y, x, c, 2);
          }
        }
      }
    }
    if (spec.num_classes > 3) {
      const int n = count_for(spec.density, 1.0);
      const int g = spec.road_grid;
      // first row/column of a 2-pixel run centred in its lattice cell
      auto snap = [g](int v, int extent) {
        if (g <= 1) return v;
        const int s = (v / g) * g + (g - 2) / 2;
        return s + 1 < extent ? s : s - g;
      };
      for (int r = 0; r < n; ++r) {
        // L-shaped polyline: horizontal run then vertical run, two pixels wide.
        const int y = snap(static_cast<int>(rng.below(h - 1)), h);
        const int xa = static_cast<int>(rng.below(w / 2));
        const int xb = snap(w / 2 + static_cast<int>(rng.below(w / 2 - 1)), w);
        const int yb = snap(static_cast<int>(rng.below(h - 1)), h);
        const auto c = jittered({0.85, 0.85, 0.8}, rng, 0.03);
        for (int x = xa; x <= xb; ++x) {
          canvas.paint(y, x, c, 3);
          canvas.paint(y + 1, x, c, 3);
        }
        for (int yy = std::min(y, yb); yy <= std::max(y, yb) + 1; ++yy) {
          canvas.paint(yy, xb, c, 3);
          canvas.paint(yy, xb + 1, c, 3);
        }
      }
    }

    for (auto& v : s.image) v = std::clamp(v + rng.uniform(-spec.noise, spec.noise), 0.0, 1.0);
    for (auto l : s.label) ++data.class_counts[static_cast<std::size_t>(l)];
    data.samples.push_back(std::move(s));
  }
  for (int c = 0; c < spec.num_classes; ++c) {
    if (data.class_counts[static_cast<std::size_t>(c)] == 0) {
      throw std::runtime_error("synth: class " + std::to_string(c) + " never drawn; raise density or count");
    }
  }
  return data;
}

SegBatch make_batch(const Dataset& data, const std::vector<std::size_t>& indices, DType dtype) {
  const auto plane = static_cast<std::size_t>(data.height) * static_cast<std::size_t>(data.width);
  std::vector<double> images;
  std::vector<std::int32_t> labels;
  images.reserve(indices.size() * 3 * plane);
  labels.reserve(indices.size() * plane);
  for (auto i : indices) {
    const auto& s = data.samples.at(i);
    images.insert(images.end(), s.image.begin(), s.image.end());
    labels.insert(labels.end(), s.label.begin(), s.label.end());
  }
  const auto n = static_cast<std::int64_t>(indices.size());
  return {Tensor::from({n, 3, data.height, data.width}, std::move(images), dtype),
          LabelMap(n, data.height, data.width, std::move(labels))};
}

SegSample flip(const SegSample& sample, int height, int width, bool horizontal) {
  SegSample out = sample;
  const auto plane = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int sy = horizontal ? y : height - 1 - y;
      const int sx = horizontal ? width - 1 - x : x;
      const auto d = static_cast<std::size_t>(y * width + x), s = static_cast<std::size_t>(sy * width + sx);
      out.label[d] = sample.label[s];
      for (std::size_t c = 0; c < 3; ++c) out.image[c * plane + d] = sample.image[c * plane + s];
    }
  }
  return out;
}

SegSample rescale(const SegSample& sample, int height, int width, double scale, double offset_y,
                  double offset_x) {
  if (scale == 1.0) return sample;
  const auto plane = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  const int nh = std::max(1, static_cast<int>(std::lround(height * scale)));
  const int nw = std::max(1, static_cast<int>(std::lround(width * scale)));
  // Placement of the resized image inside the output frame; negative means crop.
  const int py = nh >= height ? -static_cast<int>(offset_y * (nh - height)) : static_cast<int>(offset_y * (height - nh));
  const int px = nw >= width ? -static_cast<int>(offset_x * (nw - width)) : static_cast<int>(offset_x * (width - nw));
  SegSample out{std::vector<double>(3 * plane, 0.0), std::vector<std::int32_t>(plane, 0)};
  for (int y = 0; y < height; ++y) {
    const int ry = y - py;
    if (ry < 0 || ry >= nh) continue;
    const int sy = std::min(height - 1, static_cast<int>((ry + 0.5) * height / nh));
    for (int x = 0; x < width; ++x) {
      const int rx = x - px;
      if (rx < 0 || rx >= nw) continue;
      const int sx = std::min(width - 1, static_cast<int>((rx + 0.5) * width / nw));
      const auto d = static_cast<std::size_t>(y * width + x), s = static_cast<std::size_t>(sy * width + sx);
      out.label[d] = sample.label[s];
      for (std::size_t c = 0; c < 3; ++c) out.image[c * plane + d] = sample.image[c * plane + s];
    }
  }
  return out;
}

SegSample augment(const SegSample& sample, int height, int width, Rng& rng,
                  const SegAugmentOptions& options) {
  SegSample out = sample;
  if (options.flips) {
    if (rng.coin()) out = flip(out, height, width, true);
    if (rng.coin()) out = flip(out, height, width, false);
  }
  if (!options.scales.empty()) {
    const double s = options.scales[static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(options.scales.size())))];
    const double oy = rng.uniform(), ox = rng.uniform();
    out = rescale(out, height, width, s, oy, ox);
  }
  return out;
}

}  // namespace hires
