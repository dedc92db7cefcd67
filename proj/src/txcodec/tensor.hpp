// Copyright 2026 The txcodec Authors
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

// Dense tensors and a define-by-run reverse-mode autodiff graph.
//
// Every layer of the codec networks and every training loss is expressed with
// the ops declared here. A DiffNode is a shared handle to one graph vertex:
// copying it aliases the same value and gradient slot. Leaves created with
// DiffNode::parameter() persist across steps; everything else is rebuilt per
// step and released when the last handle goes away.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace txc {

// Storage precision of forward values. Values are always held as double; in
// f32 mode every op result is rounded through float, which reproduces 32-bit
// storage semantics with a single code path.
enum class Precision { f32, f64 };

Precision precision() noexcept;
void set_precision(Precision p) noexcept;

class PrecisionScope {
 public:
  explicit PrecisionScope(Precision p) : saved_(precision()) { set_precision(p); }
  ~PrecisionScope() { set_precision(saved_); }
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  Precision saved_;
};

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& vec() const noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  // Row-major 2-D access.
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_.back() + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_.back() + c]; }

  double item() const;
  bool all_finite() const noexcept;
  Tensor reshaped(Shape shape) const;
  void fill(double v);

  // Rounds through float when the thread precision is f32.
  void round_to_precision() noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

namespace detail {
struct Node;
}

class DiffNode;

// Backward rule: receives d(loss)/d(output) and the forward output value, and
// accumulates into the parents that require gradients.
using BackwardFn = std::function<void(const Tensor& out_grad, const Tensor& out_value,
                                      std::span<DiffNode> parents)>;

class DiffNode {
 public:
  DiffNode() = default;

  static DiffNode constant(Tensor value);
  static DiffNode parameter(Tensor value);

  // Op authoring entry point. `op` names the operation in diagnostics. If no
  // parent requires gradients the result is a constant and `backward` is dropped.
  static DiffNode make(Tensor value, std::vector<DiffNode> parents, BackwardFn backward,
                       const char* op);

  bool valid() const noexcept { return static_cast<bool>(node_); }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }

  // Zero tensor of value shape if this node never received a gradient.
  Tensor grad() const;
  // Lazily allocated gradient slot; ops accumulate into it.
  Tensor& grad_buffer() const;
  void zero_grad() const;

  bool requires_grad() const;
  bool is_leaf() const;

  // Leaf-only mutation, used by optimizers and for freezing parameter sets.
  Tensor& mutable_value() const;
  void set_requires_grad(bool on) const;

  const void* id() const noexcept { return node_.get(); }

 private:
  friend void backward(const DiffNode& loss);
  [[noreturn]] static void throw_invalid();
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

struct Node {
  Tensor value;
  std::unique_ptr<Tensor> grad;
  std::vector<DiffNode> parents;
  BackwardFn backward;
  bool requires_grad = false;
  bool leaf = true;
  const char* op = "leaf";
};

}  // namespace detail

inline const Tensor& DiffNode::value() const {
  if (!node_) [[unlikely]] throw_invalid();
  return node_->value;
}

// Accumulates d(loss)/d(node) into every node reachable from `loss`. Repeated
// calls without zero_grad() accumulate. Throws UsageError on non-scalar loss.
void backward(const DiffNode& loss);

// Forward value identical to x; contributes nothing to x in backward.
DiffNode stop_gradient(const DiffNode& x);

// Elementwise binary ops on equal shapes.
DiffNode add(const DiffNode& a, const DiffNode& b);
DiffNode sub(const DiffNode& a, const DiffNode& b);
DiffNode mul(const DiffNode& a, const DiffNode& b);
DiffNode scale(const DiffNode& a, double factor);
DiffNode add_scalar(const DiffNode& a, double c);

// Elementwise unary ops. Kinks (abs, relu, leaky_relu at 0) use subgradient 0.
DiffNode relu(const DiffNode& x);
DiffNode leaky_relu(const DiffNode& x, double alpha);
DiffNode elu(const DiffNode& x, double alpha = 1.0);
DiffNode tanh(const DiffNode& x);
DiffNode abs(const DiffNode& x);
DiffNode square(const DiffNode& x);
DiffNode log(const DiffNode& x);   // UsageError on non-positive input
DiffNode sqrt(const DiffNode& x);  // UsageError on negative input
DiffNode clamp_min(const DiffNode& x, double lo);

// Reductions to shape {1}.
DiffNode sum(const DiffNode& x);
DiffNode mean(const DiffNode& x);
DiffNode l1_norm(const DiffNode& x);
// sum |a - b| as one node.
DiffNode l1_distance(const DiffNode& a, const DiffNode& b);
DiffNode l2_norm(const DiffNode& x);  // subgradient 0 at the origin
// [rows x cols] -> [rows], Euclidean norm of each row.
DiffNode row_l2_norms(const DiffNode& x);
// Row norms of log(max(a, floor)) - log(max(b, floor)); equal to the composed
// clamp_min/log/sub/row_l2_norms chain, including its subgradients.
DiffNode row_log_distance(const DiffNode& a, const DiffNode& b, double floor);

// 2-D matrix ops.
DiffNode matmul(const DiffNode& a, const DiffNode& b);
// x[N x Din] * w[Din x Dout] + b[Dout]
DiffNode linear(const DiffNode& x, const DiffNode& w, const DiffNode& b);
DiffNode transpose(const DiffNode& x);
DiffNode reshape(const DiffNode& x, Shape shape);
// Concatenates 2-D tensors along axis 0 (rows) or 1 (columns).
DiffNode concat(std::span<const DiffNode> parts, std::size_t axis);
// Half-open slice of a 2-D tensor along `axis`.
DiffNode slice(const DiffNode& x, std::size_t axis, std::size_t begin, std::size_t end);
// Each row repeated `factor` times consecutively.
DiffNode repeat_rows(const DiffNode& x, std::size_t factor);
// table[K x D] rows picked by `rows`; backward scatter-adds into the table.
DiffNode gather_rows(const DiffNode& table, std::span<const std::size_t> rows);

// x[C x T] -> [C x T/factor], mean of each non-overlapping window.
DiffNode avg_pool1d(const DiffNode& x, std::size_t factor);

// Cross-correlation. x[C x T], kernel[Cout x C x K], bias[Cout] or invalid.
// Output length floor((T + 2 padding - K) / stride) + 1.
DiffNode conv1d(const DiffNode& x, const DiffNode& kernel, const DiffNode& bias,
                std::size_t stride, std::size_t padding);
DiffNode conv1d(const DiffNode& x, const DiffNode& kernel, std::size_t stride,
                std::size_t padding);

// Adjoint of conv1d (padding 0) with the same kernel: x[Cout x T],
// kernel[Cout x C x K] -> [C x (T-1) stride + K]; bias is [C] or invalid.
DiffNode conv1d_transposed(const DiffNode& x, const DiffNode& kernel, const DiffNode& bias,
                           std::size_t stride);
DiffNode conv1d_transposed(const DiffNode& x, const DiffNode& kernel, std::size_t stride);

struct Conv2dGeometry {
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;
};

// x[C x H x W], kernel[Cout x C x KH x KW], bias[Cout] or invalid.
DiffNode conv2d(const DiffNode& x, const DiffNode& kernel, const DiffNode& bias,
                const Conv2dGeometry& geom);

}  // namespace txc
