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

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hires/layers.hpp"
#include "hires/optim.hpp"

namespace hires {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

/// Binary container: magic "HIRES1", u32 metadata count and length-prefixed
/// key/value strings, u32 tensor count, then per tensor a u32 name length,
/// the UTF-8 name, u32 rank, u32 extents and an f32 payload. Little-endian.
struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<NamedTensor> tensors;

  const std::string* meta_value(const std::string& key) const;
  const NamedTensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Every store entry (buffers included) and, when given, the AdamW moments
/// as "opt.m.<name>" / "opt.v.<name>" with the step count in metadata.
Checkpoint snapshot(const ParamStore& store, const OptimState* opt,
                    std::vector<std::pair<std::string, std::string>> meta);

/// Copies tensors into `store` (and `opt` when given). Every store entry
/// must be present with the same shape; the first mismatch is reported by
/// name. With `allow_missing`, store entries absent from the checkpoint are
/// left untouched (loading encoder-only weights).
void restore(const Checkpoint& ckpt, ParamStore& store, OptimState* opt, bool allow_missing = false);

}  // namespace hires
