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

#include "hires/blocks.hpp"

#include <cmath>

namespace hires {

InvertedBottleneck::InvertedBottleneck(ParamStore& store, const std::string& name,
                                       std::int64_t channels)
    : channels_(channels) {
  bn1_ = BatchNorm::make(store, name + ".bn1", channels);
  conv3x3 = Conv::make(store, name + ".conv3x3", channels, channels, 3);
  bn2_ = BatchNorm::make(store, name + ".bn2", channels);
  expand = Conv::make(store, name + ".expand", channels, 4 * channels, 1);
  bn3_ = BatchNorm::make(store, name + ".bn3", 4 * channels);
  project = Conv::make(store, name + ".project", 4 * channels, channels, 1);
}

Tensor InvertedBottleneck::forward(const Tensor& x, bool training) {
  if (x.rank() != 4 || x.dim(1) != channels_) {
    throw ShapeError("ib_block: expected " + std::to_string(channels_) + " channels, got " +
                     shape_str(x.shape()));
  }
  auto h = gelu(conv3x3(bn1_(x, training)));
  h = gelu(expand(bn2_(h, training)));
  h = project(bn3_(h, training));
  return add(x, h);
}

SqueezeExcite::SqueezeExcite(ParamStore& store, const std::string& name, std::int64_t channels,
                             int ratio) {
  if (ratio < 1 || channels % ratio != 0) {
    throw ShapeError("se_attention: channels " + std::to_string(channels) +
                     " not divisible by ratio " + std::to_string(ratio));
  }
  reduce = Linear::make(store, name + ".reduce", channels, channels / ratio);
  expand = Linear::make(store, name + ".expand", channels / ratio, channels);
}

Tensor SqueezeExcite::gate(const Tensor& x) const {
  return sigmoid(expand(relu(reduce(global_avg_pool(x)))));
}

Tensor SqueezeExcite::forward(const Tensor& x) const {
  const auto s = gate(x);
  return mul(x, reshape(s, {x.dim(0), x.dim(1), 1, 1}));
}

Tensor window_partition(const Tensor& x, int window) {
  if (x.rank() != 4) throw ShapeError("window_partition: expected [N,C,H,W]");
  const std::int64_t L = window;
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (L < 1 || h % L != 0 || w % L != 0) {
    throw ShapeError("window size " + std::to_string(L) + " does not divide " +
                     std::to_string(h) + "x" + std::to_string(w));
  }
  auto t = reshape(x, {n, c, h / L, L, w / L, L});
  t = permute(t, {0, 1, 2, 4, 3, 5});
  return reshape(t, {n * c * (h / L) * (w / L), L, L});
}

Tensor window_merge(const Tensor& windows, const Shape& original, int window) {
  const std::int64_t L = window;
  const auto n = original[0], c = original[1], h = original[2], w = original[3];
  auto t = reshape(windows, {n, c, h / L, w / L, L, L});
  t = permute(t, {0, 1, 2, 4, 3, 5});
  return reshape(t, {n, c, h, w});
}

WindowAttention::WindowAttention(ParamStore& store, const std::string& name, WindowSpec s)
    : spec(s) {
  if (s.heads < 1 || s.head_dim < 1 || s.window < 1) {
    throw std::invalid_argument("wmhsa: heads, head_dim and window must be >= 1");
  }
  const std::int64_t width = static_cast<std::int64_t>(s.heads) * s.head_dim;
  wq = store.add(name + ".wq", {1, width}, Init::FanInUniform, 1);
  bq = store.add(name + ".bq", {width}, Init::Zeros);
  wk = store.add(name + ".wk", {1, width}, Init::FanInUniform, 1);
  wv = store.add(name + ".wv", {1, width}, Init::FanInUniform, 1);
  bv = store.add(name + ".bv", {width}, Init::Zeros);
  wo = store.add(name + ".wo", {width, 1}, Init::FanInUniform, width);
  bo = store.add(name + ".bo", {1}, Init::Zeros);
}

Tensor WindowAttention::forward(const Tensor& x, Tensor* attention) const {
  const std::int64_t L = spec.window;
  const std::int64_t heads = spec.heads, dim = spec.head_dim;
  const auto windows = window_partition(x, spec.window);
  const auto count = windows.dim(0);
  const auto tokens = L * L;
  const auto flat = reshape(windows, {count * tokens, 1});

  // [count*tokens, heads*dim] -> [count*heads, tokens, dim]
  auto split_heads = [&](const Tensor& t) {
    auto r = reshape(t, {count, tokens, heads, dim});
    return reshape(permute(r, {0, 2, 1, 3}), {count * heads, tokens, dim});
  };
  const auto q = split_heads(add(matmul(flat, wq), bq));
  // No key bias: it shifts each score row uniformly and softmax cancels it.
  const auto k = split_heads(matmul(flat, wk));
  const auto v = split_heads(add(matmul(flat, wv), bv));

  const auto scores = scalar_mul(bmm(q, transpose(k, 1, 2)), 1.0 / std::sqrt(static_cast<double>(dim)));
  const auto weights = softmax(scores, 2);
  if (attention != nullptr) *attention = weights;
  auto o = bmm(weights, v);
  o = reshape(permute(reshape(o, {count, heads, tokens, dim}), {0, 2, 1, 3}),
              {count * tokens, heads * dim});
  const auto projected = add(matmul(o, wo), bo);
  return add(x, window_merge(reshape(projected, {count, L, L}), x.shape(), spec.window));
}

InformationAggregation::InformationAggregation(ParamStore& store, const std::string& name,
                                               std::int64_t channels, const IAOptions& options)
    : attention(store, name + ".attn", options.window),
      se(store, name + ".se", channels, options.se_ratio),
      order_(options.order) {
  if (options.dw_kernel < 1 || options.dw_kernel % 2 == 0) {
    throw std::invalid_argument("ia_block: depth-wise kernel must be odd");
  }
  dw_bn_ = BatchNorm::make(store, name + ".dw_bn", channels);
  depthwise = Conv::make(store, name + ".dw", channels, channels, options.dw_kernel, 1, channels);
  pointwise = Conv::make(store, name + ".pw", channels, channels, 1);
}

Tensor InformationAggregation::forward(const Tensor& x, bool training) {
  const bool gelu_first = order_ == ActivationOrder::GeluThenSilu;
  auto a = attention.forward(x);
  a = gelu_first ? gelu(a) : silu(a);
  const auto b = se.forward(a);
  auto c = add(b, depthwise(dw_bn_(b, training)));
  c = gelu_first ? silu(c) : gelu(c);
  return add(x, pointwise(c));
}

BasicBlock::BasicBlock(ParamStore& store, const std::string& name, std::int64_t channels) {
  bn1_ = BatchNorm::make(store, name + ".bn1", channels);
  conv1 = Conv::make(store, name + ".conv1", channels, channels, 3);
  bn2_ = BatchNorm::make(store, name + ".bn2", channels);
  conv2 = Conv::make(store, name + ".conv2", channels, channels, 3);
}

Tensor BasicBlock::forward(const Tensor& x, bool training) {
  auto h = gelu(conv1(bn1_(x, training)));
  return add(x, conv2(bn2_(h, training)));
}

}  // namespace hires
