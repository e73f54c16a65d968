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

#include <string>

#include "hires/layers.hpp"

namespace hires {

/// Residual block with a 4x channel expansion in the middle and a linear
/// (activation-free) projection back to the input width.
class InvertedBottleneck {
 public:
  InvertedBottleneck(ParamStore& store, const std::string& name, std::int64_t channels);
  Tensor forward(const Tensor& x, bool training);

  Conv conv3x3, expand, project;

 private:
  BatchNorm bn1_, bn2_, bn3_;
  std::int64_t channels_;
};

/// Squeeze-and-excitation channel gate.
class SqueezeExcite {
 public:
  SqueezeExcite(ParamStore& store, const std::string& name, std::int64_t channels, int ratio);
  Tensor forward(const Tensor& x) const;
  /// The per-channel gate in (0,1), shape [N, C].
  Tensor gate(const Tensor& x) const;

  Linear reduce, expand;
};

struct WindowSpec {
  int window = 4;  // L
  int heads = 2;
  int head_dim = 4;
};

/// [N,C,H,W] -> [N*C*(H/L)*(W/L), L, L]; each row holds one window of one channel.
Tensor window_partition(const Tensor& x, int window);
/// Inverse of window_partition for the given original shape.
Tensor window_merge(const Tensor& windows, const Shape& original, int window);

/// Window multi-head self-attention over scalar tokens.
///
/// Every channel of every L x L window is treated independently: its L^2
/// pixels are scalar tokens lifted to `heads * head_dim` features by learned
/// projections shared across channels and windows. Attention output is
/// projected back to one scalar per pixel and added to the input.
class WindowAttention {
 public:
  WindowAttention(ParamStore& store, const std::string& name, WindowSpec spec);
  /// If `attention` is non-null it receives the softmax weights,
  /// shape [windows * heads, L^2, L^2].
  Tensor forward(const Tensor& x, Tensor* attention = nullptr) const;

  Tensor wq, bq, wk, wv, bv, wo, bo;
  WindowSpec spec;
};

enum class ActivationOrder { GeluThenSilu, SiluThenGelu };

struct IAOptions {
  WindowSpec window;
  int dw_kernel = 5;
  int se_ratio = 4;
  ActivationOrder order = ActivationOrder::GeluThenSilu;
};

/// Information aggregation block:
///   a = act1(x + WMHSA(x)); b = SE(a); c = act2(b + DWConv(BN(b)));
///   out = x + Conv1x1(c)
class InformationAggregation {
 public:
  InformationAggregation(ParamStore& store, const std::string& name, std::int64_t channels,
                         const IAOptions& options);
  Tensor forward(const Tensor& x, bool training);

  WindowAttention attention;
  SqueezeExcite se;
  Conv depthwise, pointwise;

 private:
  BatchNorm dw_bn_;
  ActivationOrder order_;
};

/// Two 3x3 convolutions with a residual; the comparison baseline for
/// parameter counts.
class BasicBlock {
 public:
  BasicBlock(ParamStore& store, const std::string& name, std::int64_t channels);
  Tensor forward(const Tensor& x, bool training);

  Conv conv1, conv2;

 private:
  BatchNorm bn1_, bn2_;
};

}  // namespace hires
