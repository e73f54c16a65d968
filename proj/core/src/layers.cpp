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

#include "hires/layers.hpp"

#include <algorithm>
#include <cmath>

namespace hires {

Tensor ParamStore::insert(const std::string& name, Tensor t, bool learnable) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  index_.emplace(name, entries_.size());
  entries_.push_back({name, t, learnable});
  return t;
}

Tensor ParamStore::add(const std::string& name, Shape shape, Init init, std::int64_t fan_in) {
  const auto n = numel_of(shape);
  std::vector<double> values(static_cast<std::size_t>(n), init == Init::Ones ? 1.0 : 0.0);
  if (init == Init::FanInUniform) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::int64_t>(fan_in, 1)));
    for (auto& v : values) v = rng_.uniform(-bound, bound);
  }
  auto t = Tensor::from(std::move(shape), std::move(values), dtype_);
  t.set_requires_grad(true);
  return insert(name, t, true);
}

Tensor ParamStore::add_buffer(const std::string& name, Shape shape, double value) {
  return insert(name, Tensor::full(std::move(shape), value, dtype_), false);
}

std::vector<Tensor> ParamStore::learnable() const {
  std::vector<Tensor> out;
  for (const auto& e : entries_) {
    if (e.learnable) out.push_back(e.tensor);
  }
  return out;
}

const ParamStore::Entry* ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

std::int64_t ParamStore::learnable_count() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) {
    if (e.learnable) n += e.tensor.numel();
  }
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

void ParamStore::copy_values_from(const ParamStore& other) {
  if (other.entries_.size() != entries_.size()) {
    throw std::invalid_argument("copy_values_from: parameter sets differ in size");
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& dst = entries_[i];
    const auto& src = other.entries_[i];
    if (dst.name != src.name || dst.tensor.shape() != src.tensor.shape()) {
      throw std::invalid_argument("copy_values_from: mismatch at " + dst.name);
    }
    auto out = dst.tensor.mutable_data();
    std::copy(src.tensor.data().begin(), src.tensor.data().end(), out.begin());
  }
}

Conv Conv::make(ParamStore& store, const std::string& name, std::int64_t in, std::int64_t out,
                std::int64_t kernel, std::int64_t stride, std::int64_t groups) {
  Conv c;
  c.spec.out_channels = out;
  c.spec.kernel_h = c.spec.kernel_w = kernel;
  c.spec.stride_h = c.spec.stride_w = stride;
  c.spec.pad_h = c.spec.pad_w = kernel / 2;
  c.spec.groups = groups;
  const auto fan_in = (in / groups) * kernel * kernel;
  c.weight = store.add(name + ".weight", {out, in / groups, kernel, kernel}, Init::FanInUniform,
                       fan_in);
  c.bias = store.add(name + ".bias", {out}, Init::Zeros);
  return c;
}

BatchNorm BatchNorm::make(ParamStore& store, const std::string& name, std::int64_t channels) {
  BatchNorm bn;
  bn.gamma = store.add(name + ".gamma", {channels}, Init::Ones);
  bn.beta = store.add(name + ".beta", {channels}, Init::Zeros);
  bn.stats.running_mean = store.add_buffer(name + ".running_mean", {channels}, 0.0);
  bn.stats.running_var = store.add_buffer(name + ".running_var", {channels}, 1.0);
  return bn;
}

Linear Linear::make(ParamStore& store, const std::string& name, std::int64_t in,
                    std::int64_t out) {
  Linear l;
  l.weight = store.add(name + ".weight", {in, out}, Init::FanInUniform, in);
  l.bias = store.add(name + ".bias", {out}, Init::Zeros);
  return l;
}

}  // namespace hires
