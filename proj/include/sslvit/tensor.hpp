// Copyright 2026 The sslvit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sslvit {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  // Leaves: accumulated gradient. Interior nodes: scratch space that only
  // lives for the duration of a backward pass.
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(TensorNode&)> backward_fn;
};

}  // namespace detail

/// Dense row-major f64 array that records operations for reverse-mode
/// differentiation.
///
/// Tensor is a handle: copies share the same storage, like torch.Tensor.
/// Use clone() for a deep copy. Values are immutable after construction;
/// mutable_data() exists for optimizers and initializers that update leaf
/// parameters in place between graphs.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::initializer_list<double> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  std::vector<double> to_vector() const;
  /// Value of a single-element tensor.
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool is_leaf() const;

  bool has_grad() const;
  /// Empty span when no gradient has been accumulated.
  std::span<const double> grad() const;
  /// Clears the accumulated gradient to zeros (keeps the buffer).
  void zero_grad();

  /// Reverse pass from this scalar. Leaf gradients accumulate (+=) across
  /// calls until zero_grad().
  void backward() const;

  /// Same values, no history, no gradient.
  Tensor detach() const;
  /// Deep copy as a new leaf.
  Tensor clone(bool requires_grad = false) const;

  /// Internal: wraps an op result.
  static Tensor make(Shape shape, std::vector<double> data,
                     std::vector<Tensor> inputs,
                     std::function<void(detail::TensorNode&)> backward_fn);
  detail::TensorNode& node() const;

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::TensorNode> node_;
};

/// True unless a NoGradGuard is active on this thread.
bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Elementwise binary ops. Shapes must be equal, or one operand must be a
// single element, or one operand's shape must be a suffix of the other's
// (bias-add along leading axes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Throws DomainError if any divisor is zero.
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
/// Throws DomainError on nonpositive input.
Tensor log(const Tensor& a);
/// Throws DomainError on negative input. The derivative at 0 is taken as 0.
Tensor sqrt(const Tensor& a);
Tensor relu(const Tensor& a);
/// Exact (erf) GELU.
Tensor gelu(const Tensor& a);

/// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// 2-D transpose.
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
/// Elements [begin, end) along `axis`.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
/// Rows of a 2-D tensor, in the given order (repeats allowed).
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);

Tensor softmax(const Tensor& a, std::size_t axis);
Tensor log_softmax(const Tensor& a, std::size_t axis);
/// Normalizes over the last axis: (x - mean) / sqrt(var + eps), biased var.
Tensor layer_norm(const Tensor& a, double eps = 1e-6);
/// Scales each slice along the last axis to unit Euclidean norm. A zero
/// slice is a DomainError.
Tensor l2_normalize(const Tensor& a);

/// Sum of all elements, rank-0 result.
Tensor sum(const Tensor& a);
/// Sum along one axis; the axis is removed.
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, std::size_t axis);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

}  // namespace sslvit
