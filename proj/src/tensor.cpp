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

#include "sslvit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "sslvit/errors.hpp"
#include "sslvit/kernels.hpp"

namespace sslvit {

using detail::TensorNode;

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

thread_local bool t_grad_enabled = true;

void check_shape(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  }
}

std::vector<double>& grad_buffer(TensorNode& node) {
  if (node.grad.size() != node.data.size()) node.grad.assign(node.data.size(), 0.0);
  return node.grad;
}

// outer x axis x inner decomposition of a shape around `axis`.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Shape broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa == sb) return sa;
  if (b.numel() == 1 || is_suffix(sb, sa)) return sa;
  if (a.numel() == 1 || is_suffix(sa, sb)) return sb;
  throw ShapeError(std::string(op) + ": shapes " + shape_str(sa) + " and " + shape_str(sb) +
                   " do not broadcast");
}

template <typename Fwd, typename GradA, typename GradB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, GradA ga, GradB gb) {
  Shape out_shape = broadcast_shape(a, b, name);
  const std::size_t n = shape_numel(out_shape);
  const std::size_t na = a.numel();
  const std::size_t nb = b.numel();
  auto da = a.data();
  auto db = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(da[i % na], db[i % nb]);
  return Tensor::make(std::move(out_shape), std::move(out), {a, b},
                      [ga, gb](TensorNode& self) {
                        TensorNode& pa = *self.parents[0];
                        TensorNode& pb = *self.parents[1];
                        const std::size_t n = self.data.size();
                        const std::size_t na = pa.data.size();
                        const std::size_t nb = pb.data.size();
                        if (pa.requires_grad) {
                          auto& g = grad_buffer(pa);
                          for (std::size_t i = 0; i < n; ++i)
                            g[i % na] += self.grad[i] *
                                         ga(pa.data[i % na], pb.data[i % nb], self.data[i]);
                        }
                        if (pb.requires_grad) {
                          auto& g = grad_buffer(pb);
                          for (std::size_t i = 0; i < n; ++i)
                            g[i % nb] += self.grad[i] *
                                         gb(pa.data[i % na], pb.data[i % nb], self.data[i]);
                        }
                      });
}

// dy/dx expressed through (x, y).
template <typename Fwd, typename Deriv>
Tensor unary_op(const Tensor& a, Fwd fwd, Deriv deriv) {
  auto da = a.data();
  std::vector<double> out(da.size());
  for (std::size_t i = 0; i < da.size(); ++i) out[i] = fwd(da[i]);
  return Tensor::make(a.shape(), std::move(out), {a}, [deriv](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_buffer(p);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(p.data[i], self.data[i]);
  });
}

std::vector<TensorNode*> topo_order(TensorNode* root) {
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // parents before children
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  const std::size_t n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape));
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

Tensor Tensor::vector(std::initializer_list<double> values, bool requires_grad) {
  return from_data({values.size()}, std::vector<double>(values), requires_grad);
}

Tensor Tensor::make(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                    std::function<void(TensorNode&)> backward_fn) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (any && grad_enabled()) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (auto& t : inputs) node->parents.push_back(t.node_);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

TensorNode& Tensor::node() const {
  if (!node_) throw InvalidArgument("use of an undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) throw ShapeError("axis out of range for shape " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return node().data.size(); }

std::span<const double> Tensor::data() const { return node().data; }

std::span<double> Tensor::mutable_data() { return node().data; }

std::vector<double> Tensor::to_vector() const { return node().data; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node().data[0];
}

bool Tensor::requires_grad() const { return node().requires_grad; }

void Tensor::set_requires_grad(bool value) {
  if (!is_leaf()) throw InvalidArgument("requires_grad can only be changed on leaf tensors");
  node().requires_grad = value;
  if (!value) node().grad.clear();
}

bool Tensor::is_leaf() const { return !node().backward_fn; }

bool Tensor::has_grad() const { return !node().grad.empty(); }

std::span<const double> Tensor::grad() const { return node().grad; }

void Tensor::zero_grad() { std::fill(node().grad.begin(), node().grad.end(), 0.0); }

void Tensor::backward() const {
  TensorNode& root = node();
  if (root.data.size() != 1) {
    throw ShapeError("backward() requires a scalar loss, got shape " + shape_str(root.shape));
  }
  if (!root.requires_grad) throw InvalidArgument("backward() on a tensor that does not require grad");
  const auto order = topo_order(&root);
  for (TensorNode* n : order) {
    if (n->backward_fn) n->grad.assign(n->data.size(), 0.0);
  }
  grad_buffer(root)[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn) {
      n->backward_fn(*n);
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

Tensor Tensor::detach() const { return from_data(shape(), node().data, false); }

Tensor Tensor::clone(bool requires_grad) const {
  return from_data(shape(), node().data, requires_grad);
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.data()) {
    if (v == 0.0) throw DomainError("div: division by zero");
  }
  return binary_op(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

Tensor scale(const Tensor& a, double s) {
  return unary_op(
      a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary_op(
      a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) {
  return unary_op(
      a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    if (!(v > 0.0)) throw DomainError("log: nonpositive input " + std::to_string(v));
  }
  return unary_op(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  for (double v : a.data()) {
    if (v < 0.0 || std::isnan(v)) throw DomainError("sqrt: negative input " + std::to_string(v));
  }
  return unary_op(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  constexpr double kInvSqrt2Pi = 0.3989422804014326779;
  return unary_op(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
      });
}

// ---------------------------------------------------------------------------
// Structural

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " do not conform");
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  kernels::gemm_nn(m, k, n, a.data(), b.data(), out, false);
  return Tensor::make({m, n}, std::move(out), {a, b}, [m, k, n](TensorNode& self) {
    TensorNode& pa = *self.parents[0];
    TensorNode& pb = *self.parents[1];
    if (pa.requires_grad) kernels::gemm_nt(m, n, k, self.grad, pb.data, grad_buffer(pa), true);
    if (pb.requires_grad) kernels::gemm_tn(k, m, n, pa.data, self.grad, grad_buffer(pb), true);
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  auto d = a.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = d[i * c + j];
  return Tensor::make({c, r}, std::move(out), {a}, [r, c](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_buffer(p);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  check_shape(shape);
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  return Tensor::make(std::move(shape), a.to_vector(), {a}, [](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_buffer(p);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw InvalidArgument("concat: no inputs");
  const Shape& first = parts[0].shape();
  const AxisSplit base = split_at(first, axis, "concat");
  std::vector<std::size_t> lens;
  std::size_t total = 0;
  for (const auto& t : parts) {
    const Shape& s = t.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) {
      throw ShapeError("concat: shapes " + shape_str(first) + " and " + shape_str(s) +
                       " differ off axis " + std::to_string(axis));
    }
    lens.push_back(s[axis]);
    total += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  const std::size_t outer = base.outer, inner = base.inner;
  std::vector<double> out(outer * total * inner);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto d = parts[p].data();
    const std::size_t chunk = lens[p] * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.begin() + static_cast<std::ptrdiff_t>(o * total * inner + offset * inner));
    offset += lens[p];
  }
  return Tensor::make(std::move(out_shape), std::move(out), parts,
                      [lens, outer, inner, total](TensorNode& self) {
                        std::size_t offset = 0;
                        for (std::size_t p = 0; p < lens.size(); ++p) {
                          TensorNode& parent = *self.parents[p];
                          const std::size_t chunk = lens[p] * inner;
                          if (parent.requires_grad) {
                            auto& g = grad_buffer(parent);
                            for (std::size_t o = 0; o < outer; ++o)
                              for (std::size_t t = 0; t < chunk; ++t)
                                g[o * chunk + t] += self.grad[o * total * inner + offset * inner + t];
                          }
                          offset += lens[p];
                        }
                      });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisSplit s = split_at(a.shape(), axis, "slice");
  if (begin >= end || end > s.len) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for axis of length " + std::to_string(s.len));
  }
  Shape out_shape = a.shape();
  out_shape[axis] = end - begin;
  const std::size_t width = (end - begin) * s.inner;
  auto d = a.data();
  std::vector<double> out(s.outer * width);
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(o * s.len * s.inner + begin * s.inner),
                width, out.begin() + static_cast<std::ptrdiff_t>(o * width));
  return Tensor::make(std::move(out_shape), std::move(out), {a}, [s, begin, width](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_buffer(p);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t t = 0; t < width; ++t)
        g[o * s.len * s.inner + begin * s.inner + t] += self.grad[o * width + t];
  });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  if (a.rank() != 2) throw ShapeError("gather_rows: expected rank 2, got " + shape_str(a.shape()));
  if (rows.empty()) throw InvalidArgument("gather_rows: empty index list");
  const std::size_t n = a.dim(0), d = a.dim(1);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  auto src = a.data();
  std::vector<double> out(idx.size() * d);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= n) throw ShapeError("gather_rows: row index out of range");
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(idx[r] * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  const std::size_t m = idx.size();
  return Tensor::make({m, d}, std::move(out), {a}, [idx = std::move(idx), d](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_buffer(p);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t t = 0; t < d; ++t) g[idx[r] * d + t] += self.grad[r * d + t];
  });
}

// ---------------------------------------------------------------------------
// Normalizations

Tensor softmax(const Tensor& a, std::size_t axis) {
  const AxisSplit s = split_at(a.shape(), axis, "softmax");
  auto d = a.data();
  std::vector<double> out(d.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mx = d[base];
      for (std::size_t j = 1; j < s.len; ++j) mx = std::max(mx, d[base + j * s.inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < s.len; ++j) {
        const double e = std::exp(d[base + j * s.inner] - mx);
        out[base + j * s.inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < s.len; ++j) out[base + j * s.inner] /= z;
    }
  }
  return Tensor::make(a.shape(), std::move(out), {a}, [s](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_buffer(p);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.len * s.inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < s.len; ++j) {
          const std::size_t i = base + j * s.inner;
          dot += self.grad[i] * self.data[i];
        }
        for (std::size_t j = 0; j < s.len; ++j) {
          const std::size_t i = base + j * s.inner;
          g[i] += self.data[i] * (self.grad[i] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& a, std::size_t axis) {
  const AxisSplit s = split_at(a.shape(), axis, "log_softmax");
  auto d = a.data();
  std::vector<double> out(d.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mx = d[base];
      for (std::size_t j = 1; j < s.len; ++j) mx = std::max(mx, d[base + j * s.inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < s.len; ++j) z += std::exp(d[base + j * s.inner] - mx);
      const double lse = mx + std::log(z);
      for (std::size_t j = 0; j < s.len; ++j) out[base + j * s.inner] = d[base + j * s.inner] - lse;
    }
  }
  return Tensor::make(a.shape(), std::move(out), {a}, [s](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_buffer(p);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.len * s.inner + in;
        double total = 0.0;
        for (std::size_t j = 0; j < s.len; ++j) total += self.grad[base + j * s.inner];
        for (std::size_t j = 0; j < s.len; ++j) {
          const std::size_t i = base + j * s.inner;
          g[i] += self.grad[i] - std::exp(self.data[i]) * total;
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& a, double eps) {
  if (a.rank() == 0) throw ShapeError("layer_norm: rank-0 input");
  const std::size_t dim = a.shape().back();
  const std::size_t rows = a.numel() / dim;
  auto d = a.data();
  std::vector<double> out(d.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = d.data() + r * dim;
    double mu = 0.0;
    for (std::size_t j = 0; j < dim; ++j) mu += x[j];
    mu /= static_cast<double>(dim);
    double var = 0.0;
    for (std::size_t j = 0; j < dim; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(dim);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < dim; ++j) out[r * dim + j] = (x[j] - mu) * inv_std[r];
  }
  return Tensor::make(a.shape(), std::move(out), {a},
                      [dim, rows, inv_std = std::move(inv_std)](TensorNode& self) {
                        TensorNode& p = *self.parents[0];
                        if (!p.requires_grad) return;
                        auto& g = grad_buffer(p);
                        const double inv_d = 1.0 / static_cast<double>(dim);
                        for (std::size_t r = 0; r < rows; ++r) {
                          const double* dy = self.grad.data() + r * dim;
                          const double* y = self.data.data() + r * dim;
                          double mean_dy = 0.0, mean_dy_y = 0.0;
                          for (std::size_t j = 0; j < dim; ++j) {
                            mean_dy += dy[j];
                            mean_dy_y += dy[j] * y[j];
                          }
                          mean_dy *= inv_d;
                          mean_dy_y *= inv_d;
                          for (std::size_t j = 0; j < dim; ++j)
                            g[r * dim + j] += inv_std[r] * (dy[j] - mean_dy - y[j] * mean_dy_y);
                        }
                      });
}

Tensor l2_normalize(const Tensor& a) {
  if (a.rank() == 0) throw ShapeError("l2_normalize: rank-0 input");
  const std::size_t dim = a.shape().back();
  const std::size_t rows = a.numel() / dim;
  auto d = a.data();
  std::vector<double> out(d.size());
  std::vector<double> inv_norm(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < dim; ++j) s += d[r * dim + j] * d[r * dim + j];
    if (s == 0.0) throw DomainError("l2_normalize: zero-norm row " + std::to_string(r));
    inv_norm[r] = 1.0 / std::sqrt(s);
    for (std::size_t j = 0; j < dim; ++j) out[r * dim + j] = d[r * dim + j] * inv_norm[r];
  }
  return Tensor::make(a.shape(), std::move(out), {a},
                      [dim, rows, inv_norm = std::move(inv_norm)](TensorNode& self) {
                        TensorNode& p = *self.parents[0];
                        if (!p.requires_grad) return;
                        auto& g = grad_buffer(p);
                        for (std::size_t r = 0; r < rows; ++r) {
                          const double* dy = self.grad.data() + r * dim;
                          const double* y = self.data.data() + r * dim;
                          double dot = 0.0;
                          for (std::size_t j = 0; j < dim; ++j) dot += dy[j] * y[j];
                          for (std::size_t j = 0; j < dim; ++j)
                            g[r * dim + j] += inv_norm[r] * (dy[j] - y[j] * dot);
                        }
                      });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::make({}, {s}, {a}, [](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_buffer(p);
    for (double& v : g) v += self.grad[0];
  });
}

Tensor sum(const Tensor& a, std::size_t axis) {
  const AxisSplit s = split_at(a.shape(), axis, "sum");
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  auto d = a.data();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.len; ++j)
      for (std::size_t in = 0; in < s.inner; ++in)
        out[o * s.inner + in] += d[(o * s.len + j) * s.inner + in];
  return Tensor::make(std::move(out_shape), std::move(out), {a}, [s](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_buffer(p);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t j = 0; j < s.len; ++j)
        for (std::size_t in = 0; in < s.inner; ++in)
          g[(o * s.len + j) * s.inner + in] += self.grad[o * s.inner + in];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor mean(const Tensor& a, std::size_t axis) {
  const double len = static_cast<double>(a.dim(axis));
  return scale(sum(a, axis), 1.0 / len);
}

}  // namespace sslvit
