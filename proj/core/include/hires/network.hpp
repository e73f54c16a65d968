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
#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "hires/blocks.hpp"

namespace hires {

enum class BlockKind { InformationAggregation, Basic };

struct NetworkConfig {
  std::array<int, 3> channels{8, 16, 32};
  std::array<int, 3> blocks{2, 2, 3};
  std::array<int, 2> modules{1, 2};
  int window = 4;
  int heads = 2;
  int head_dim = 4;
  int dw_kernel = 5;
  int se_ratio = 4;
  int num_classes = 4;
  int input_h = 64;
  int input_w = 64;
  int ocr_dim = 0;  // 0 selects (C1 + C2 + C3) / 2
  BlockKind block_kind = BlockKind::InformationAggregation;
  ActivationOrder activation_order = ActivationOrder::GeluThenSilu;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;

  /// Desk-scale default: trains in minutes on one core.
  static NetworkConfig desk();
  /// Channel/block/module counts of the full-size network, 224x224 input, L = 7.
  static NetworkConfig full();

  void validate() const;
  int effective_ocr_dim() const;
  IAOptions ia_options() const;

  /// Flat key=value representation, stable key order.
  std::map<std::string, std::string> to_kv() const;
  /// Applies recognised keys; unknown keys throw.
  void apply_kv(const std::string& key, const std::string& value);
};

/// Feature maps at 1/4, 1/8 and 1/16 of the input resolution.
using BranchSet = std::vector<Tensor>;

struct SegOutput {
  Tensor coarse;   // [N, K, H, W] logits
  Tensor refined;  // [N, K, H, W] logits
};

/// Intermediate values of the refinement head, for inspection in tests.
struct RefineTrace {
  Tensor coarse_low;        // [N, K, H/4, W/4]
  Tensor region_features;   // [N, K, C1+C2+C3]
  Tensor affinity;          // [N, P, K], rows sum to 1
};

class HiResNet {
 public:
  HiResNet(const NetworkConfig& config, std::uint64_t seed, DType dtype = DType::F32);
  ~HiResNet();
  HiResNet(const HiResNet&) = delete;
  HiResNet& operator=(const HiResNet&) = delete;

  Tensor funnel_forward(const Tensor& image, bool training);
  /// Spawns branch s+1 from branch s: BN then a stride-2 3x3 convolution.
  Tensor new_branch(int layer, const Tensor& x, bool training);
  /// Cross-resolution exchange for module `module` of `layer` (1 or 2).
  BranchSet fuse(int layer, int module, const BranchSet& branches, bool training);
  BranchSet multi_branch_forward(const Tensor& x, bool training);
  SegOutput refine(const BranchSet& branches, bool training, RefineTrace* trace = nullptr);
  SegOutput forward(const Tensor& image, bool training);

  /// Inference rule: 0.5 * softmax(coarse) + 0.5 * softmax(refined), [N,K,H,W].
  static Tensor fuse_prediction(const SegOutput& out);

  const NetworkConfig& config() const { return config_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

 private:
  struct Impl;
  NetworkConfig config_;
  ParamStore store_;
  std::unique_ptr<Impl> impl_;
};

/// Exact learnable parameter total (BN running statistics excluded).
std::int64_t param_count(const NetworkConfig& config);

}  // namespace hires
