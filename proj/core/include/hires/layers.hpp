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
#include <unordered_map>
#include <vector>

#include "hires/random.hpp"
#include "hires/tensor.hpp"

namespace hires {

enum class Init { Zeros, Ones, FanInUniform };

/// Named parameter and buffer registry for one network instance.
///
/// Names are hierarchical ("layer1.m0.b2.blk1.attn.wq") and unique. Buffers
/// (batch-norm running statistics) are stored alongside parameters but are
/// not learnable and never require gradients.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool learnable = true;
  };

  explicit ParamStore(DType dtype = DType::F32, std::uint64_t seed = 0)
      : dtype_(dtype), rng_(seed) {}

  Tensor add(const std::string& name, Shape shape, Init init, std::int64_t fan_in = 1);
  Tensor add_buffer(const std::string& name, Shape shape, double value);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Tensor> learnable() const;
  const Entry* find(const std::string& name) const;
  std::int64_t learnable_count() const;
  DType dtype() const { return dtype_; }

  void zero_grad();
  /// Copies values (not identities) from `other`; names and shapes must match.
  void copy_values_from(const ParamStore& other);

 private:
  Tensor insert(const std::string& name, Tensor t, bool learnable);

  DType dtype_;
  Rng rng_;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Convolution with "same" padding for odd kernels.
struct Conv {
  Tensor weight, bias;
  ConvSpec spec;

  static Conv make(ParamStore& store, const std::string& name, std::int64_t in, std::int64_t out,
                   std::int64_t kernel, std::int64_t stride = 1, std::int64_t groups = 1);
  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, spec); }
};

struct BatchNorm {
  Tensor gamma, beta;
  BatchNormState stats;
  double eps = 1e-5;
  double momentum = 0.1;

  static BatchNorm make(ParamStore& store, const std::string& name, std::int64_t channels);
  Tensor operator()(const Tensor& x, bool training) {
    return batchnorm2d(x, gamma, beta, stats, training, eps, momentum);
  }
};

/// Fully connected layer on [N, in] inputs; weight is stored [in, out].
struct Linear {
  Tensor weight, bias;

  static Linear make(ParamStore& store, const std::string& name, std::int64_t in,
                     std::int64_t out);
  Tensor operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }
};

}  // namespace hires
