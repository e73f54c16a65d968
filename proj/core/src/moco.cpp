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

#include "hires/moco.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace hires {

AugmentOptions AugmentOptions::identity() {
  AugmentOptions o;
  o.flips = false;
  o.crop_resize = false;
  o.jitter = false;
  return o;
}

Tensor augment_view(const Tensor& image, Rng& rng, const AugmentOptions& options) {
  if (image.rank() != 3) throw ShapeError("augment: expected [C,H,W], got " + shape_str(image.shape()));
  const auto c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const bool flip_h = options.flips && rng.coin();
  const bool flip_v = options.flips && rng.coin();
  double scale = 1.0;
  if (options.crop_resize && !options.scales.empty()) {
    scale = options.scales[static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(options.scales.size())))];
  }
  // Source window of extent H/s; for s < 1 it overhangs and edges repeat.
  const double span_h = static_cast<double>(h) / scale, span_w = static_cast<double>(w) / scale;
  const double oy = rng.uniform() * (static_cast<double>(h) - span_h);
  const double ox = rng.uniform() * (static_cast<double>(w) - span_w);
  std::vector<double> gain(static_cast<std::size_t>(c), 1.0), offset(static_cast<std::size_t>(c), 0.0);
  if (options.jitter) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      gain[static_cast<std::size_t>(ch)] = 1.0 + rng.uniform(-options.jitter_amplitude, options.jitter_amplitude);
      offset[static_cast<std::size_t>(ch)] = rng.uniform(-options.jitter_amplitude, options.jitter_amplitude);
    }
  }
  auto source = [](double origin, std::int64_t i, double s, std::int64_t extent) {
    if (s == 1.0) return i;
    const auto v = static_cast<std::int64_t>(std::floor(origin + (static_cast<double>(i) + 0.5) / s));
    return std::clamp<std::int64_t>(v, 0, extent - 1);
  };
  const auto src = image.data();
  std::vector<double> out(src.size());
  for (std::int64_t y = 0; y < h; ++y) {
    const auto yy = source(oy, flip_v ? h - 1 - y : y, scale, h);
    for (std::int64_t x = 0; x < w; ++x) {
      const auto xx = source(ox, flip_h ? w - 1 - x : x, scale, w);
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const double v = src[static_cast<std::size_t>((ch * h + yy) * w + xx)];
        out[static_cast<std::size_t>((ch * h + y) * w + x)] =
            options.jitter ? v * gain[static_cast<std::size_t>(ch)] + offset[static_cast<std::size_t>(ch)] : v;
      }
    }
  }
  return Tensor::from(image.shape(), std::move(out), image.dtype());
}

AugmentedPair augment_pair(const Tensor& image, Rng& rng, const AugmentOptions& options) {
  auto a = augment_view(image, rng, options);
  auto b = augment_view(image, rng, options);
  return {std::move(a), std::move(b)};
}

Tensor l2_normalize(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("l2_normalize: expected [B,D]");
  const auto norm = sqrt(add_scalar(sum(square(x), {1}, true), 1e-12));
  return div(x, norm);
}

Tensor infonce(const Tensor& q, const Tensor& k_pos, const Tensor& queue, double tau) {
  if (!(tau > 0)) throw std::invalid_argument("infonce: tau must be positive");
  if (q.rank() != 2 || k_pos.shape() != q.shape()) {
    throw ShapeError("infonce: q and k_pos must both be [B,D]");
  }
  if (queue.rank() != 2 || queue.dim(0) != q.dim(1)) {
    throw ShapeError("infonce: queue must be [D,Q] with D = " + std::to_string(q.dim(1)));
  }
  const auto b = q.dim(0);
  const auto pos = sum(mul(q, k_pos.detach()), {1}, true);  // [B,1]
  auto logits = pos;
  if (queue.dim(1) > 0) logits = concat({pos, matmul(q, queue.detach())}, 1);
  const auto ls = log_softmax(scalar_mul(logits, 1.0 / tau), 1);
  return scalar_mul(sum(slice(ls, 1, 0, 1)), -1.0 / static_cast<double>(b));
}

void momentum_update(const std::vector<Tensor>& theta_k, const std::vector<Tensor>& theta_q,
                     double m) {
  if (!(m >= 0 && m < 1)) throw std::invalid_argument("momentum_update: m must be in [0, 1)");
  if (theta_k.size() != theta_q.size()) throw ShapeError("momentum_update: parameter count mismatch");
  for (std::size_t i = 0; i < theta_k.size(); ++i) {
    if (theta_k[i].shape() != theta_q[i].shape()) {
      throw ShapeError("momentum_update: shape mismatch at parameter " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < theta_k.size(); ++i) {
    auto k = theta_k[i];
    auto dst = k.mutable_data();
    const auto src = theta_q[i].data();
    for (std::size_t j = 0; j < dst.size(); ++j) {
      dst[j] = round_to(k.dtype(), m * dst[j] + (1.0 - m) * src[j]);
    }
  }
}

ToyEncoder::ToyEncoder(int channels, int ib_blocks, int feature_dim, std::uint64_t seed, DType dtype)
    : store_(dtype, seed), feature_dim_(feature_dim) {
  bn1_ = BatchNorm::make(store_, "funnel.stem1.bn", 3);
  stem1_ = Conv::make(store_, "funnel.stem1.conv", 3, channels, 3, 2);
  bn2_ = BatchNorm::make(store_, "funnel.stem2.bn", channels);
  stem2_ = Conv::make(store_, "funnel.stem2.conv", channels, channels, 3, 2);
  for (int i = 0; i < ib_blocks; ++i) {
    blocks_.emplace_back(store_, "funnel.ib" + std::to_string(i), channels);
  }
  fc1_ = Linear::make(store_, "head.fc1", channels, channels);
  fc2_ = Linear::make(store_, "head.fc2", channels, feature_dim);
}

Tensor ToyEncoder::forward(const Tensor& images, bool training) {
  auto h = gelu(stem1_(bn1_(images, training)));
  h = gelu(stem2_(bn2_(h, training)));
  for (auto& blk : blocks_) h = blk.forward(h, training);
  const auto pooled = reshape(global_avg_pool(h), {h.dim(0), h.dim(1)});
  return fc2_(relu(fc1_(pooled)));
}

void init_key_encoder(ToyEncoder& key, const ToyEncoder& query) {
  key.params().copy_values_from(query.params());
  for (auto& t : key.params().learnable()) t.set_requires_grad(false);
}

MoCoState MoCoState::create(const MoCoConfig& config, int feature_dim, Rng& rng) {
  if (config.queue_size < 0) throw std::invalid_argument("moco: queue size must be >= 0");
  if (!(config.tau > 0)) throw std::invalid_argument("moco: tau must be positive");
  if (!(config.momentum >= 0 && config.momentum < 1)) {
    throw std::invalid_argument("moco: momentum must be in [0, 1)");
  }
  MoCoState s;
  s.config = config;
  const auto d = static_cast<std::int64_t>(feature_dim), q = static_cast<std::int64_t>(config.queue_size);
  std::vector<double> v(static_cast<std::size_t>(d * q));
  for (auto& x : v) x = rng.normal();
  for (std::int64_t col = 0; col < q; ++col) {
    double n2 = 0.0;
    for (std::int64_t r = 0; r < d; ++r) n2 += v[static_cast<std::size_t>(r * q + col)] * v[static_cast<std::size_t>(r * q + col)];
    const double inv = 1.0 / std::sqrt(n2);
    for (std::int64_t r = 0; r < d; ++r) v[static_cast<std::size_t>(r * q + col)] *= inv;
  }
  s.queue = Tensor::from({d, q}, std::move(v), DType::F32);
  return s;
}

void queue_push(MoCoState& state, const Tensor& keys) {
  const auto d = state.queue.dim(0), q = state.queue.dim(1);
  if (keys.rank() != 2 || keys.dim(1) != d) {
    throw ShapeError("queue_push: keys " + shape_str(keys.shape()) + " do not have feature dim " +
                     std::to_string(d));
  }
  if (q == 0) return;
  auto dst = state.queue.mutable_data();
  const auto src = keys.data();
  for (std::int64_t b = 0; b < keys.dim(0); ++b) {
    for (std::int64_t r = 0; r < d; ++r) {
      dst[static_cast<std::size_t>(r * q + state.ptr)] = round_to(state.queue.dtype(), src[static_cast<std::size_t>(b * d + r)]);
    }
    state.ptr = (state.ptr + 1) % q;
  }
}

MoCoStepResult moco_step(MoCoState& state, ToyEncoder& query, ToyEncoder& key, const Tensor& batch,
                         Rng& rng) {
  if (batch.rank() != 4) throw ShapeError("moco_step: expected [N,3,H,W]");
  const auto n = batch.dim(0);
  const Shape image_shape{batch.dim(1), batch.dim(2), batch.dim(3)};
  const auto per_image = numel_of(image_shape);
  std::vector<double> va, vb;
  va.reserve(static_cast<std::size_t>(batch.numel()));
  vb.reserve(va.capacity());
  for (std::int64_t i = 0; i < n; ++i) {
    const auto first = batch.data().begin() + i * per_image;
    const auto img = Tensor::from(image_shape, std::vector<double>(first, first + per_image), batch.dtype());
    const auto pair = augment_pair(img, rng, state.config.augment);
    va.insert(va.end(), pair.view_a.data().begin(), pair.view_a.data().end());
    vb.insert(vb.end(), pair.view_b.data().begin(), pair.view_b.data().end());
  }
  const auto view_a = Tensor::from(batch.shape(), std::move(va), batch.dtype());
  const auto view_b = Tensor::from(batch.shape(), std::move(vb), batch.dtype());

  auto& tape = Tape::current();
  tape.reset();
  Tensor keys;
  {
    NoGradGuard guard;
    keys = l2_normalize(key.forward(view_b, true));
  }
  const auto q = l2_normalize(query.forward(view_a, true));
  const auto loss = infonce(q, keys, state.queue, state.config.tau);
  backward(loss);
  tape.reset();

  const auto params = query.params().learnable();
  if (state.velocity.empty()) {
    for (const auto& p : params) state.velocity.push_back(Tensor::zeros(p.shape(), DType::F64));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i];
    auto data = p.mutable_data();
    auto vel = state.velocity[i].mutable_data();
    const auto grad = p.grad();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = (grad.empty() ? 0.0 : grad[j]) + state.config.weight_decay * data[j];
      vel[j] = state.config.sgd_momentum * vel[j] + g;
      data[j] = round_to(p.dtype(), data[j] - state.config.lr * vel[j]);
    }
  }
  query.params().zero_grad();
  momentum_update(key.params().learnable(), params, state.config.momentum);
  queue_push(state, keys);
  ++state.steps;
  return {loss.item(), keys};
}

ClusterSet two_cluster_images(int count, int size, std::uint64_t seed) {
  Rng rng(seed);
  ClusterSet set;
  const auto s = static_cast<std::int64_t>(size);
  std::vector<double> data(static_cast<std::size_t>(count) * 3 * static_cast<std::size_t>(s * s));
  for (int i = 0; i < count; ++i) {
    const int cluster = i % 2;
    set.cluster.push_back(cluster);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double freq = rng.uniform(0.6, 0.9);
    const double bright = rng.uniform(-0.1, 0.1);
    for (std::int64_t y = 0; y < s; ++y) {
      for (std::int64_t x = 0; x < s; ++x) {
        // cluster 0: warm horizontal stripes; cluster 1: cool checkerboard
        const double wave = cluster == 0
                                ? std::sin(freq * static_cast<double>(y) + phase)
                                : std::sin(freq * static_cast<double>(x) + phase) *
                                      std::sin(freq * static_cast<double>(y) + phase);
        const double base = 0.5 + 0.4 * wave + bright;
        const double tint[3] = {cluster == 0 ? 0.25 : -0.2, 0.0, cluster == 0 ? -0.2 : 0.25};
        for (int c = 0; c < 3; ++c) {
          const double v = base + tint[c] + rng.uniform(-0.05, 0.05);
          data[static_cast<std::size_t>(((i * 3 + c) * s + y) * s + x)] = std::clamp(v, 0.0, 1.0);
        }
      }
    }
  }
  set.images = Tensor::from({count, 3, s, s}, std::move(data), DType::F32);
  return set;
}

}  // namespace hires
