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
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hires {

using Shape = std::vector<std::int64_t>;

/// Storage precision of a tensor.
///
/// Values always live in a double buffer. F32 tensors round every produced
/// value to the nearest float, so an F32 tensor only ever holds values that
/// are exactly representable in 32 bits. F64 exists for gradient checking.
enum class DType { F32, F64 };

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class AutodiffError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::int64_t numel_of(const Shape& shape);

/// Rounds `v` to the precision stored by `dtype`.
inline double round_to(DType dtype, double v) {
  return dtype == DType::F32 ? static_cast<double>(static_cast<float>(v)) : v;
}
std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until backward reaches this tensor
  DType dtype = DType::F32;
  bool requires_grad = false;
  std::int64_t node = -1;  // index on the tape that produced it, -1 for leaves
  std::uint64_t epoch = 0;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor from(Shape shape, std::vector<double> values, DType dtype = DType::F32);
  static Tensor zeros(Shape shape, DType dtype = DType::F32);
  static Tensor full(Shape shape, double value, DType dtype = DType::F32);
  static Tensor scalar(double value, DType dtype = DType::F32);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t dim(int axis) const;
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }
  DType dtype() const { return impl_->dtype; }

  std::span<const double> data() const { return impl_->data; }
  /// Direct write access. Only valid on leaves (optimizer updates, test setup).
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::int64_t> index) const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  void zero_grad() { impl_->grad.clear(); }

  /// Deep copy with no tape history.
  Tensor detach() const;
  /// Deep copy converted to `dtype`.
  Tensor to(DType dtype) const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& shared() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Append-only record of differentiable operations for one thread.
///
/// Node i only ever references parents with index < i, so the reverse
/// traversal in backward() is a valid reverse topological order.
class Tape {
 public:
  using BackwardFn = std::function<void(const std::vector<double>& grad_out)>;

  struct Node {
    std::string_view op;
    std::vector<std::int64_t> parents;
    std::shared_ptr<TensorImpl> output;
    BackwardFn backward;
  };

  static Tape& current();

  std::int64_t record(std::string_view op, const std::vector<const TensorImpl*>& inputs,
                      std::shared_ptr<TensorImpl> output, BackwardFn fn);
  void backward(const Tensor& loss);
  void reset();

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_[i]; }
  std::uint64_t epoch() const { return epoch_; }
  bool consumed() const { return consumed_; }
  /// Number of nodes whose backward ran in the last backward() call.
  std::size_t visited() const { return visited_; }

 private:
  std::vector<Node> nodes_;
  std::uint64_t epoch_ = 1;
  bool consumed_ = false;
  std::size_t visited_ = 0;
};

bool grad_enabled();

/// Disables recording for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Returns the gradient buffer of `t`, allocating zeros on first use.
std::vector<double>& grad_buffer(TensorImpl& t);

void backward(const Tensor& loss);

// Elementwise arithmetic with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor scalar_mul(const Tensor& a, double s);
Tensor neg(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scalar_mul(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scalar_mul(a, s); }

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);  // tanh approximation
Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum(const Tensor& x, const std::vector<int>& axes, bool keepdim);

Tensor softmax(const Tensor& x, int axis);
Tensor log_softmax(const Tensor& x, int axis);

Tensor matmul(const Tensor& a, const Tensor& b);
/// Batched product: [B,M,K] x [B,K,N] -> [B,M,N].
Tensor bmm(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);  // one extent may be -1
Tensor permute(const Tensor& x, const std::vector<int>& order);
Tensor transpose(const Tensor& x, int a, int b);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t length);

struct ConvSpec {
  std::int64_t out_channels = 1;
  std::int64_t kernel_h = 3, kernel_w = 3;
  std::int64_t stride_h = 1, stride_w = 1;
  std::int64_t pad_h = 0, pad_w = 0;
  std::int64_t groups = 1;
};

/// Grouped cross-correlation with zero padding. `weight` is
/// [Cout, Cin/groups, kh, kw]; `bias` may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvSpec& spec);

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
};

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   BatchNormState& stats, bool training, double eps = 1e-5,
                   double momentum = 0.1);

/// Half-pixel (align_corners = false) bilinear upsampling by an integer factor.
Tensor bilinear_upsample(const Tensor& x, int scale);
Tensor global_avg_pool(const Tensor& x);

/// Dense row-major GEMM: C (+)= op(A) * op(B), with op = optional transpose.
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          const double* a, const double* b, double* c, bool accumulate);

}  // namespace hires
