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
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hires/checkpoint.hpp"
#include "hires/data.hpp"
#include "hires/losses.hpp"
#include "hires/metrics.hpp"
#include "hires/moco.hpp"
#include "hires/network.hpp"
#include "hires/optim.hpp"

namespace hires {

struct TrainConfig {
  NetworkConfig net = NetworkConfig::desk();
  LossConfig loss;
  int epochs = 10;
  int batch_size = 4;
  double lr = 2e-3;
  double weight_decay = 1e-8;
  int warmup_epochs = 3;
  std::uint64_t data_seed = 7;
  std::uint64_t model_seed = 1;
  int train_count = 8;
  int val_count = 8;
  int road_grid = 4;  // see SynthSpec::road_grid
  bool augment = true;
  bool validate_each_epoch = true;

  /// Flat key=value pairs covering training, loss and network settings.
  std::map<std::string, std::string> to_kv() const;
  void apply_kv(const std::string& key, const std::string& value);
  void validate() const;
};

/// Parses "key=value" lines; blank lines and lines starting with '#' are
/// skipped. Unknown keys throw.
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});

SynthSpec train_spec(const TrainConfig& config);
/// Held-out set drawn from a seed derived from data_seed.
SynthSpec val_spec(const TrainConfig& config);

struct LogRow {
  std::int64_t step = 0;
  double lr = 0.0;
  double loss_total = 0.0, loss_gd = 0.0, loss_lsce = 0.0, loss_cea = 0.0;
  std::string split;  // "train" or "val"
  std::optional<double> miou, mean_f1, oa;
};

/// Header line and one row per entry, floats with 9 significant digits.
std::string tsv_header();
std::string tsv_row(const LogRow& row);
LogRow parse_tsv_row(const std::string& line);

struct EvalResult {
  SegMetrics metrics;
  ConfusionMatrix confusion;
  LossTerms coarse, refined;
  double loss_total = 0.0;
  std::vector<std::int32_t> predictions;  // [N*H*W] fused argmax
};

/// Eval-mode pass over `data` with the fused coarse+refined prediction.
EvalResult evaluate(HiResNet& net, const Dataset& data, const LossConfig& loss, int batch_size);

struct TrainResult {
  std::vector<LogRow> log;
  double first_loss = 0.0;
  double last_loss = 0.0;
  std::optional<EvalResult> last_val;
};

/// Runs the full loop on `net`. Rows are also streamed to `log` when given.
TrainResult train(HiResNet& net, OptimState& opt, const TrainConfig& config, std::ostream* log = nullptr);

/// Training-set pass used by the overfit check.
EvalResult evaluate_train_set(HiResNet& net, const TrainConfig& config);

/// Checkpoint metadata for a trained network.
std::vector<std::pair<std::string, std::string>> checkpoint_meta(const TrainConfig& config,
                                                                 const std::string& kind,
                                                                 std::int64_t step);
/// Rebuilds the training configuration stored in checkpoint metadata.
TrainConfig config_from_meta(const Checkpoint& ckpt);

struct PretrainConfig {
  MoCoConfig moco;
  int steps = 300;
  int batch_size = 8;
  int image_count = 16;
  int image_size = 32;
  int channels = 8;
  int ib_blocks = 1;
  int feature_dim = 16;
  std::uint64_t data_seed = 7;
  std::uint64_t model_seed = 1;
};

struct PretrainResult {
  std::vector<double> losses;
  /// Mean cosine similarity within clusters minus across clusters.
  double separation = 0.0;
};

/// MoCo loop on synthetic two-cluster images with the toy encoder.
PretrainResult pretrain(ToyEncoder& query, const PretrainConfig& config, std::ostream* log = nullptr);
double cluster_separation(ToyEncoder& encoder, const ClusterSet& set);

}  // namespace hires
