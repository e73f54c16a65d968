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

#include "hires/tensor.hpp"

#include <cmath>
#include <sstream>

#include "op_support.hpp"

namespace hires {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::int64_t numel_of(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor Tensor::from(Shape shape, std::vector<double> values, DType dtype) {
  const auto n = numel_of(shape);
  if (n != static_cast<std::int64_t>(values.size())) {
    throw ShapeError("tensor_from: shape " + shape_str(shape) + " holds " + std::to_string(n) +
                     " values, got " + std::to_string(values.size()));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->dtype = dtype;
  if (dtype == DType::F32) {
    for (auto& v : impl->data) v = static_cast<float>(v);
  }
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, DType dtype) { return full(std::move(shape), 0.0, dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  const auto n = numel_of(shape);
  return from(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value), dtype);
}

Tensor Tensor::scalar(double value, DType dtype) { return from({}, {value}, dtype); }

std::int64_t Tensor::dim(int axis) const {
  return impl_->shape[static_cast<std::size_t>(detail::normalize_axis(axis, rank()))];
}

std::span<double> Tensor::mutable_data() {
  if (impl_->node >= 0) throw AutodiffError("mutable_data on a non-leaf tensor");
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::int64_t> index) const {
  if (index.size() != impl_->shape.size()) throw ShapeError("at(): rank mismatch");
  std::int64_t off = 0;
  std::size_t i = 0;
  for (auto v : index) {
    const auto extent = impl_->shape[i++];
    if (v < 0 || v >= extent) throw ShapeError("at(): index out of range");
    off = off * extent + v;
  }
  return impl_->data[static_cast<std::size_t>(off)];
}

Tensor& Tensor::set_requires_grad(bool on) {
  if (impl_->node >= 0 && !on) throw AutodiffError("cannot clear requires_grad on a non-leaf");
  impl_->requires_grad = on;
  return *this;
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  impl->dtype = impl_->dtype;
  return Tensor(std::move(impl));
}

Tensor Tensor::to(DType dtype) const { return from(impl_->shape, impl_->data, dtype); }

// ---------------------------------------------------------------------------
// Tape

Tape& Tape::current() {
  thread_local Tape tape;
  return tape;
}

std::int64_t Tape::record(std::string_view op, const std::vector<const TensorImpl*>& inputs,
                          std::shared_ptr<TensorImpl> output, BackwardFn fn) {
  if (consumed_) throw AutodiffError("tape already consumed by backward(); call reset()");
  Node node;
  node.op = op;
  for (const auto* in : inputs) {
    if (in != nullptr && in->node >= 0 && in->epoch == epoch_) node.parents.push_back(in->node);
  }
  const auto index = static_cast<std::int64_t>(nodes_.size());
  output->node = index;
  output->epoch = epoch_;
  node.output = std::move(output);
  node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return index;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw AutodiffError("backward() needs a scalar loss");
  }
  auto* impl = loss.impl();
  if (!impl->requires_grad) throw AutodiffError("backward(): loss does not require grad");
  if (impl->node < 0 || impl->epoch != epoch_ ||
      static_cast<std::size_t>(impl->node) >= nodes_.size() ||
      nodes_[static_cast<std::size_t>(impl->node)].output.get() != impl) {
    throw AutodiffError("backward(): loss is detached from the active tape");
  }
  if (consumed_) throw AutodiffError("backward(): tape already consumed; call reset()");
  consumed_ = true;
  grad_buffer(*impl)[0] += 1.0;
  visited_ = 0;
  for (auto i = impl->node; i >= 0; --i) {
    auto& node = nodes_[static_cast<std::size_t>(i)];
    if (node.output->grad.empty()) continue;
    node.backward(node.output->grad);
    ++visited_;
  }
}

void Tape::reset() {
  nodes_.clear();
  ++epoch_;
  consumed_ = false;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

std::vector<double>& grad_buffer(TensorImpl& t) {
  if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
  return t.grad;
}

void backward(const Tensor& loss) { Tape::current().backward(loss); }

namespace detail {

DType promote(std::initializer_list<const Tensor*> inputs) {
  for (const auto* t : inputs) {
    if (t->defined() && t->dtype() == DType::F64) return DType::F64;
  }
  return DType::F32;
}

int normalize_axis(int axis, int rank) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  }
  return a;
}

void check_finite(std::string_view op, const std::vector<double>& data) {
  for (double v : data) {
    if (!std::isfinite(v)) throw std::runtime_error("non-finite value produced by " + std::string(op));
  }
}

Tensor finish(std::string_view op, Shape shape, std::vector<double> data, DType dtype,
              const std::vector<const Tensor*>& inputs, Tape::BackwardFn fn) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->dtype = dtype;
  if (dtype == DType::F32) {
    for (auto& v : impl->data) v = static_cast<float>(v);
  }
#ifndef NDEBUG
  bool finite_inputs = true;
  for (const auto* t : inputs) {
    if (!t->defined()) continue;
    for (double v : t->data()) finite_inputs = finite_inputs && std::isfinite(v);
  }
  if (finite_inputs) check_finite(op, impl->data);
#endif
  bool needs = false;
  if (grad_enabled()) {
    for (const auto* t : inputs) needs = needs || wants_grad(*t);
  }
  if (needs) {
    impl->requires_grad = true;
    std::vector<const TensorImpl*> parents;
    parents.reserve(inputs.size());
    for (const auto* t : inputs) parents.push_back(t->defined() ? t->impl() : nullptr);
    Tape::current().record(op, parents, impl, std::move(fn));
  }
  return Tensor(std::move(impl));
}

}  // namespace detail
}  // namespace hires
