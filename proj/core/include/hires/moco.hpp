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

#include <vector>

#include "hires/blocks.hpp"
#include "hires/layers.hpp"
#include "hires/random.hpp"
#include "hires/tensor.hpp"

namespace hires {

struct AugmentOptions {
  bool flips = true;
  bool crop_resize = true;
  bool jitter = true;
  double jitter_amplitude = 0.1;
  std::vector<double> scales{0.5, 0.75, 1.0, 1.25, 1.5};

  /// Every transform off; views equal the source.
  static AugmentOptions identity();
};

struct AugmentedPair {
  Tensor view_a;
  Tensor view_b;
};

/// One random view of a [C, H, W] image: flips, nearest-neighbour
/// crop-resize at a drawn scale, per-channel gain and offset.
Tensor augment_view(const Tensor& image, Rng& rng, const AugmentOptions& options = {});
AugmentedPair augment_pair(const Tensor& image, Rng& rng, const AugmentOptions& options = {});

/// Rows of [B, D] scaled to unit L2 norm.
Tensor l2_normalize(const Tensor& x);

/// Contrastive loss of queries q [B, D] against positives k_pos [B, D] and
/// negatives queue [D, Q], mean over the batch. Only q carries gradient.
Tensor infonce(const Tensor& q, const Tensor& k_pos, const Tensor& queue, double tau);

/// theta_k <- m * theta_k + (1 - m) * theta_q, in place.
void momentum_update(const std::vector<Tensor>& theta_k, const std::vector<Tensor>& theta_q,
                     double m);

/// Funnel stem (two stride-2 convolutions and inverted bottlenecks), global
/// average pool and a two-layer projection head. Parameter names under
/// "funnel." match the segmentation network.
class ToyEncoder {
 public:
  ToyEncoder(int channels, int ib_blocks, int feature_dim, std::uint64_t seed,
             DType dtype = DType::F32);

  /// [N, 3, H, W] -> [N, feature_dim], not normalised.
  Tensor forward(const Tensor& images, bool training);
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  int feature_dim() const { return feature_dim_; }

 private:
  ParamStore store_;
  int feature_dim_;
  BatchNorm bn1_, bn2_;
  Conv stem1_, stem2_;
  std::vector<InvertedBottleneck> blocks_;
  Linear fc1_, fc2_;
};

struct MoCoConfig {
  int queue_size = 256;
  double momentum = 0.999;
  double tau = 0.2;
  double lr = 0.03;
  double sgd_momentum = 0.9;
  double weight_decay = 1e-4;
  AugmentOptions augment;
};

struct MoCoState {
  MoCoConfig config;
  Tensor queue;  // [D, Q], unit-norm columns
  std::int64_t ptr = 0;
  std::int64_t steps = 0;
  std::vector<Tensor> velocity;

  /// Queue filled with random unit columns.
  static MoCoState create(const MoCoConfig& config, int feature_dim, Rng& rng);
};

/// Writes keys [B, D] into the ring at ptr and advances ptr modulo Q.
void queue_push(MoCoState& state, const Tensor& keys);

struct MoCoStepResult {
  double loss = 0.0;
  Tensor keys;  // [B, D], the normalised keys pushed this step
};

/// augment -> encode -> normalise -> infonce -> SGD on the query encoder ->
/// momentum update of the key encoder -> enqueue keys. `batch` is [N,3,H,W].
MoCoStepResult moco_step(MoCoState& state, ToyEncoder& query, ToyEncoder& key, const Tensor& batch,
                         Rng& rng);

/// Key encoder initialised as a frozen copy of `query`.
void init_key_encoder(ToyEncoder& key, const ToyEncoder& query);

/// Two visually distinct image families for pretraining checks.
struct ClusterSet {
  Tensor images;  // [N, 3, H, W] in [0, 1]
  std::vector<int> cluster;
};
ClusterSet two_cluster_images(int count, int size, std::uint64_t seed);

}  // namespace hires
