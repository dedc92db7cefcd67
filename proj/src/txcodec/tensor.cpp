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

#include "txcodec/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "txcodec/errors.hpp"

namespace txc {

namespace {

thread_local Precision g_precision = Precision::f64;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap as_mat(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.data().data(), static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(cols));
}

MatMap as_mat(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require(bool cond, const char* msg) {
  if (!cond) throw UsageError(msg);
}

void require_rank(const DiffNode& x, std::size_t rank, const char* op) {
  if (!x.valid()) throw UsageError(std::string(op) + ": invalid input node");
  if (x.value().rank() != rank) {
    throw UsageError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     shape_string(x.shape()));
  }
}

void require_same_shape(const DiffNode& a, const DiffNode& b, const char* op) {
  if (!a.valid() || !b.valid()) throw UsageError(std::string(op) + ": invalid input node");
  if (a.shape() != b.shape()) {
    throw UsageError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

template <class F, class G>
DiffNode unary(const DiffNode& x, const char* op, F forward, G derivative) {
  if (!x.valid()) throw UsageError(std::string(op) + ": invalid input node");
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  const std::size_t n = xv.size();
  const double* src = xv.data().data();
  double* dst = out.data().data();
  for (std::size_t i = 0; i < n; ++i) dst[i] = forward(src[i]);
  return DiffNode::make(
      std::move(out), {x},
      [derivative, n](const Tensor& g, const Tensor& y, std::span<DiffNode> p) {
        if (!p[0].requires_grad()) return;
        const double* xv = p[0].value().data().data();
        const double* yv = y.data().data();
        const double* gv = g.data().data();
        double* gx = p[0].grad_buffer().data().data();
        for (std::size_t i = 0; i < n; ++i) gx[i] += gv[i] * derivative(xv[i], yv[i]);
      },
      op);
}

// Output positions t in [lo, hi) read input index t*stride + k - pad inside [0, length).
std::pair<std::size_t, std::size_t> valid_range(std::size_t length, std::size_t k, std::size_t stride,
                                                std::size_t pad, std::size_t t_out) {
  const std::size_t lo = k >= pad ? 0 : (pad - k + stride - 1) / stride;
  if (length + pad <= k) return {0, 0};
  const std::size_t hi = std::min(t_out, (length + pad - k - 1) / stride + 1);
  return {std::min(lo, hi), hi};
}

// cols[j * (C*K) + c*K + k] = x[c, (t0+j)*stride + k - pad], zero outside; j in [0, n).
void im2col1d(const double* x, std::size_t channels, std::size_t length, std::size_t ksize,
              std::size_t stride, std::size_t pad, std::size_t t0, std::size_t n, double* cols) {
  const std::size_t ck = channels * ksize;
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t start = (t0 + j) * stride;  // padded coordinate of tap 0
    const std::size_t k_lo = start >= pad ? 0 : std::min(ksize, pad - start);
    const std::size_t k_hi = std::max(k_lo, std::min(ksize, length + pad > start ? length + pad - start : 0));
    double* row = cols + j * ck;
    for (std::size_t c = 0; c < channels; ++c) {
      double* dst = row + c * ksize;
      const double* src = x + c * length + (start + k_lo - pad);
      std::fill(dst, dst + k_lo, 0.0);
      std::copy(src, src + (k_hi - k_lo), dst + k_lo);
      std::fill(dst + k_hi, dst + ksize, 0.0);
    }
  }
}

// Adjoint of im2col1d: scatter-adds the chunk back into x.
void col2im1d(const double* cols, std::size_t channels, std::size_t length, std::size_t ksize,
              std::size_t stride, std::size_t pad, std::size_t t0, std::size_t n, double* x) {
  const std::size_t ck = channels * ksize;
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t start = (t0 + j) * stride;
    const std::size_t k_lo = start >= pad ? 0 : std::min(ksize, pad - start);
    const std::size_t k_hi = std::max(k_lo, std::min(ksize, length + pad > start ? length + pad - start : 0));
    const double* row = cols + j * ck;
    for (std::size_t c = 0; c < channels; ++c) {
      const double* src = row + c * ksize;
      double* dst = x + c * length + (start + k_lo - pad);
      for (std::size_t k = k_lo; k < k_hi; ++k) dst[k - k_lo] += src[k];
    }
  }
}

Eigen::Map<Eigen::VectorXd> vec(double* p, std::size_t n) {
  return Eigen::Map<Eigen::VectorXd>(p, static_cast<Eigen::Index>(n));
}

Eigen::Map<const Eigen::VectorXd> cvec(const double* p, std::size_t n) {
  return Eigen::Map<const Eigen::VectorXd>(p, static_cast<Eigen::Index>(n));
}

// Stride-1 convolution by shifted axpy passes; faster than im2col + GEMM when
// the channel product is small.
bool use_direct_conv(std::size_t c_in, std::size_t c_out, std::size_t stride) {
  return stride == 1 && c_in * c_out <= 16;
}

// Output positions t with 0 <= t + k - pad < length.
std::pair<std::size_t, std::size_t> direct_range(std::size_t length, std::size_t k, std::size_t pad,
                                                 std::size_t t_out) {
  const std::size_t lo = k >= pad ? 0 : pad - k;
  const std::size_t hi = std::min(t_out, length + pad > k ? length + pad - k : 0);
  return {std::min(lo, hi), hi};
}

void direct_conv_forward(const double* x, const double* w, double* out, std::size_t c_in,
                         std::size_t c_out, std::size_t length, std::size_t ksize, std::size_t pad,
                         std::size_t t_out) {
  for (std::size_t o = 0; o < c_out; ++o) {
    double* dst = out + o * t_out;
    for (std::size_t c = 0; c < c_in; ++c) {
      for (std::size_t k = 0; k < ksize; ++k) {
        const double wk = w[(o * c_in + c) * ksize + k];
        const auto [lo, hi] = direct_range(length, k, pad, t_out);
        const double* src = x + c * length + k - pad;
        if (hi > lo) vec(dst + lo, hi - lo) += wk * cvec(src + lo, hi - lo);
      }
    }
  }
}

void direct_conv_backward(const double* x, const double* w, const double* g, double* dx,
                          double* dw, std::size_t c_in, std::size_t c_out, std::size_t length,
                          std::size_t ksize, std::size_t pad, std::size_t t_out) {
  for (std::size_t o = 0; o < c_out; ++o) {
    const double* go = g + o * t_out;
    for (std::size_t c = 0; c < c_in; ++c) {
      for (std::size_t k = 0; k < ksize; ++k) {
        const auto [lo, hi] = direct_range(length, k, pad, t_out);
        const std::size_t wi = (o * c_in + c) * ksize + k;
        if (dw) {
          const double* src = x + c * length + k - pad;
          if (hi > lo) dw[wi] += cvec(go + lo, hi - lo).dot(cvec(src + lo, hi - lo));
        }
        if (dx) {
          double* dst = dx + c * length + k - pad;
          if (hi > lo) vec(dst + lo, hi - lo) += w[wi] * cvec(go + lo, hi - lo);
        }
      }
    }
  }
}

// Column blocks sized to keep the im2col buffer cache resident.
std::size_t chunk_columns(std::size_t rows) {
  constexpr std::size_t kTargetDoubles = 16384;
  return std::max<std::size_t>(64, kTargetDoubles / std::max<std::size_t>(rows, 1));
}

using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

StridedMap block_cols(double* base, std::size_t rows, std::size_t total_cols, std::size_t c0,
                      std::size_t n) {
  return StridedMap(base + c0, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n),
                    Eigen::OuterStride<>(static_cast<Eigen::Index>(total_cols)));
}

ConstStridedMap block_cols(const double* base, std::size_t rows, std::size_t total_cols,
                           std::size_t c0, std::size_t n) {
  return ConstStridedMap(base + c0, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n),
                         Eigen::OuterStride<>(static_cast<Eigen::Index>(total_cols)));
}

// Uninitialized work buffer; every element is written before it is read.
class Scratch {
 public:
  explicit Scratch(std::size_t n) : p_(new double[n]) {}
  double* data() noexcept { return p_.get(); }
  const double* data() const noexcept { return p_.get(); }

 private:
  std::unique_ptr<double[]> p_;
};

struct Geom2d {
  std::size_t c, h, w, kh, kw, sh, sw, ph, pw, ho, wo;
};

// Output rows [oh0, oh1); cols is (C*KH*KW) x ((oh1-oh0)*WO).
void im2col2d(const double* x, const Geom2d& g, std::size_t oh0, std::size_t oh1, double* cols) {
  const std::size_t plane = (oh1 - oh0) * g.wo;
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* row = cols + ((c * g.kh + i) * g.kw + j) * plane - oh0 * g.wo;
        for (std::size_t oh = oh0; oh < oh1; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.sh + i) -
                                    static_cast<std::ptrdiff_t>(g.ph);
          double* out = row + oh * g.wo;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(out, out + g.wo, 0.0);
            continue;
          }
          const double* xr = x + (c * g.h + static_cast<std::size_t>(ih)) * g.w;
          const auto [lo, hi] = valid_range(g.w, j, g.sw, g.pw, g.wo);
          std::fill(out, out + lo, 0.0);
          for (std::size_t ow = lo; ow < hi; ++ow) out[ow] = xr[ow * g.sw + j - g.pw];
          std::fill(out + hi, out + g.wo, 0.0);
        }
      }
    }
  }
}

void col2im2d(const double* cols, const Geom2d& g, std::size_t oh0, std::size_t oh1, double* x) {
  const std::size_t plane = (oh1 - oh0) * g.wo;
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* row = cols + ((c * g.kh + i) * g.kw + j) * plane - oh0 * g.wo;
        for (std::size_t oh = oh0; oh < oh1; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.sh + i) -
                                    static_cast<std::ptrdiff_t>(g.ph);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
          double* xr = x + (c * g.h + static_cast<std::size_t>(ih)) * g.w;
          const double* in = row + oh * g.wo;
          const auto [lo, hi] = valid_range(g.w, j, g.sw, g.pw, g.wo);
          for (std::size_t ow = lo; ow < hi; ++ow) xr[ow * g.sw + j - g.pw] += in[ow];
        }
      }
    }
  }
}

void add_channel_bias(Tensor& out, const Tensor& bias, std::size_t channels, std::size_t plane) {
  for (std::size_t c = 0; c < channels; ++c) {
    double* o = out.data().data() + c * plane;
    const double b = bias[c];
    for (std::size_t i = 0; i < plane; ++i) o[i] += b;
  }
}

void accumulate_channel_bias_grad(const Tensor& g, DiffNode& bias, std::size_t channels,
                                  std::size_t plane) {
  if (!bias.valid() || !bias.requires_grad()) return;
  Tensor& gb = bias.grad_buffer();
  for (std::size_t c = 0; c < channels; ++c) {
    const double* gc = g.data().data() + c * plane;
    gb[c] += std::accumulate(gc, gc + plane, 0.0);
  }
}

}  // namespace

Precision precision() noexcept { return g_precision; }
void set_precision(Precision p) noexcept { g_precision = p; }

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw UsageError("tensor: shape " + shape_string(shape_) + " does not match " +
                     std::to_string(data_.size()) + " values");
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw UsageError("tensor: axis out of range");
  return shape_[axis];
}

double Tensor::item() const {
  if (data_.size() != 1) throw UsageError("tensor: item() on shape " + shape_string(shape_));
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw UsageError("reshape: " + shape_string(shape_) + " -> " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::round_to_precision() noexcept {
  if (g_precision != Precision::f32) return;
  for (double& v : data_) v = static_cast<double>(static_cast<float>(v));
}

DiffNode DiffNode::constant(Tensor value) {
  DiffNode n;
  n.node_ = std::make_shared<detail::Node>();
  n.node_->value = std::move(value);
  return n;
}

DiffNode DiffNode::parameter(Tensor value) {
  DiffNode n = constant(std::move(value));
  n.node_->requires_grad = true;
  return n;
}

DiffNode DiffNode::make(Tensor value, std::vector<DiffNode> parents, BackwardFn backward,
                        const char* op) {
  value.round_to_precision();
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  DiffNode n;
  n.node_ = std::make_shared<detail::Node>();
  n.node_->value = std::move(value);
  n.node_->op = op;
  n.node_->leaf = false;
  const bool any = std::any_of(parents.begin(), parents.end(),
                               [](const DiffNode& p) { return p.valid() && p.requires_grad(); });
  if (any) {
    n.node_->requires_grad = true;
    n.node_->parents = std::move(parents);
    n.node_->backward = std::move(backward);
  }
  return n;
}

void DiffNode::throw_invalid() { throw UsageError("use of an invalid DiffNode"); }

Tensor DiffNode::grad() const {
  if (node_->grad) return *node_->grad;
  return Tensor(node_->value.shape());
}

Tensor& DiffNode::grad_buffer() const {
  if (!node_->grad) node_->grad = std::make_unique<Tensor>(node_->value.shape());
  return *node_->grad;
}

void DiffNode::zero_grad() const { node_->grad.reset(); }

bool DiffNode::requires_grad() const { return node_ && node_->requires_grad; }
bool DiffNode::is_leaf() const { return node_->leaf; }

Tensor& DiffNode::mutable_value() const {
  if (!node_->leaf) throw UsageError("mutable_value() on a non-leaf node");
  return node_->value;
}

void DiffNode::set_requires_grad(bool on) const {
  if (!node_->leaf) throw UsageError("set_requires_grad() on a non-leaf node");
  node_->requires_grad = on;
}

void backward(const DiffNode& loss) {
  if (!loss.valid()) throw UsageError("backward: invalid loss node");
  if (loss.size() != 1) {
    throw UsageError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node_.get(), 0);
  seen.insert(loss.node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].node_.get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients hold only this pass; leaves accumulate across passes.
  for (detail::Node* n : order) {
    if (!n->leaf) n->grad.reset();
  }
  if (!loss.node_->grad) loss.node_->grad = std::make_unique<Tensor>(loss.shape());
  (*loss.node_->grad)[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->leaf || !n->grad || !n->backward) continue;
    n->grad->round_to_precision();
    n->backward(*n->grad, n->value, n->parents);
  }
}

DiffNode stop_gradient(const DiffNode& x) {
  require(x.valid(), "stop_gradient: invalid input node");
  return DiffNode::constant(x.value());
}

DiffNode add(const DiffNode& a, const DiffNode& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return DiffNode::make(
      std::move(out), {a, b},
      [](const Tensor& g, const Tensor&, std::span<DiffNode> p) {
        for (auto& parent : p) {
          if (!parent.requires_grad()) continue;
          Tensor& gp = parent.grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
        }
      },
      "add");
}

DiffNode sub(const DiffNode& a, const DiffNode& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return DiffNode::make(
      std::move(out), {a, b},
      [](const Tensor& g, const Tensor&, std::span<DiffNode> p) {
        for (std::size_t k = 0; k < 2; ++k) {
          if (!p[k].requires_grad()) continue;
          const double sign = k == 0 ? 1.0 : -1.0;
          Tensor& gp = p[k].grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) gp[i] += sign * g[i];
        }
      },
      "sub");
}

DiffNode mul(const DiffNode& a, const DiffNode& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return DiffNode::make(
      std::move(out), {a, b},
      [](const Tensor& g, const Tensor&, std::span<DiffNode> p) {
        for (std::size_t k = 0; k < 2; ++k) {
          if (!p[k].requires_grad()) continue;
          const Tensor& other = p[1 - k].value();
          Tensor& gp = p[k].grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i] * other[i];
        }
      },
      "mul");
}

DiffNode scale(const DiffNode& a, double factor) {
  return unary(
      a, "scale", [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

DiffNode add_scalar(const DiffNode& a, double c) {
  return unary(
      a, "add_scalar", [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

DiffNode relu(const DiffNode& x) { return leaky_relu(x, 0.0); }

DiffNode leaky_relu(const DiffNode& x, double alpha) {
  return unary(
      x, "leaky_relu", [alpha](double v) { return v > 0.0 ? v : alpha * v; },
      [alpha](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? alpha : 0.0); });
}

DiffNode elu(const DiffNode& x, double alpha) {
  return unary(
      x, "elu", [alpha](double v) { return v > 0.0 ? v : alpha * std::expm1(v); },
      [alpha](double v, double y) { return v > 0.0 ? 1.0 : y + alpha; });
}

DiffNode tanh(const DiffNode& x) {
  return unary(
      x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

DiffNode abs(const DiffNode& x) {
  return unary(
      x, "abs", [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

DiffNode square(const DiffNode& x) {
  return unary(
      x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

DiffNode log(const DiffNode& x) {
  require(x.valid(), "log: invalid input node");
  for (double v : x.value().data()) {
    if (!(v > 0.0)) throw UsageError("log: non-positive input " + std::to_string(v));
  }
  return unary(
      x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

DiffNode sqrt(const DiffNode& x) {
  require(x.valid(), "sqrt: invalid input node");
  for (double v : x.value().data()) {
    if (v < 0.0) throw UsageError("sqrt: negative input " + std::to_string(v));
  }
  return unary(
      x, "sqrt", [](double v) { return std::sqrt(v); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

DiffNode clamp_min(const DiffNode& x, double lo) {
  return unary(
      x, "clamp_min", [lo](double v) { return v > lo ? v : lo; },
      [lo](double v, double) { return v > lo ? 1.0 : 0.0; });
}

DiffNode sum(const DiffNode& x) {
  require(x.valid(), "sum: invalid input node");
  const auto d = x.value().data();
  return DiffNode::make(
      Tensor::scalar(std::accumulate(d.begin(), d.end(), 0.0)), {x},
      [](const Tensor& g, const Tensor&, std::span<DiffNode> p) {
        if (!p[0].requires_grad()) return;
        Tensor& gx = p[0].grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
      },
      "sum");
}

DiffNode mean(const DiffNode& x) {
  require(x.valid() && x.size() > 0, "mean: empty input");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

DiffNode l1_norm(const DiffNode& x) {
  require(x.valid(), "l1_norm: invalid input node");
  const auto d = x.value().data();
  double acc = 0.0;
  for (double v : d) acc += std::fabs(v);
  return DiffNode::make(
      Tensor::scalar(acc), {x},
      [](const Tensor& g, const Tensor&, std::span<DiffNode> p) {
        if (!p[0].requires_grad()) return;
        const double* xv = p[0].value().data().data();
        double* gx = p[0].grad_buffer().data().data();
        const std::size_t n = p[0].size();
        for (std::size_t i = 0; i < n; ++i) gx[i] += xv[i] > 0.0 ? g[0] : (xv[i] < 0.0 ? -g[0] : 0.0);
      },
      "l1_norm");
}

DiffNode l1_distance(const DiffNode& a, const DiffNode& b) {
  require_same_shape(a, b, "l1_distance");
  const double* av = a.value().data().data();
  const double* bv = b.value().data().data();
  const std::size_t n = a.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::fabs(av[i] - bv[i]);
  return DiffNode::make(
      Tensor::scalar(acc), {a, b},
      [n](const Tensor& g, const Tensor&, std::span<DiffNode> p) {
        const double* av = p[0].value().data().data();
        const double* bv = p[1].value().data().data();
        for (std::size_t k = 0; k < 2; ++k) {
          if (!p[k].requires_grad()) continue;
          const double s = k == 0 ? g[0] : -g[0];
          double* gp = p[k].grad_buffer().data().data();
          for (std::size_t i = 0; i < n; ++i) {
            const double d = av[i] - bv[i];
            gp[i] += d > 0.0 ? s : (d < 0.0 ? -s : 0.0);
          }
        }
      },
      "l1_distance");
}

DiffNode l2_norm(const DiffNode& x) {
  require(x.valid(), "l2_norm: invalid input node");
  return row_l2_norms(reshape(x, {1, x.size()}));
}

DiffNode row_log_distance(const DiffNode& a, const DiffNode& b, double floor) {
  require_same_shape(a, b, "row_log_distance");
  require_rank(a, 2, "row_log_distance");
  require(floor > 0.0, "row_log_distance: floor must be positive");
  const std::size_t rows = a.shape()[0], cols = a.shape()[1];
  const double* av = a.value().data().data();
  const double* bv = b.value().data().data();
  Tensor out({rows});
  auto diff = std::make_shared<std::vector<double>>(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      const double d = std::log(std::max(av[i], floor)) - std::log(std::max(bv[i], floor));
      (*diff)[i] = d;
      acc += d * d;
    }
    out[r] = std::sqrt(acc);
  }
  return DiffNode::make(
      std::move(out), {a, b},
      [rows, cols, floor, diff](const Tensor& g, const Tensor& y, std::span<DiffNode> p) {
        const double* av = p[0].value().data().data();
        const double* bv = p[1].value().data().data();
        double* ga = p[0].requires_grad() ? p[0].grad_buffer().data().data() : nullptr;
        double* gb = p[1].requires_grad() ? p[1].grad_buffer().data().data() : nullptr;
        for (std::size_t r = 0; r < rows; ++r) {
          if (y[r] == 0.0) continue;
          const double k = g[r] / y[r];
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            const double d = k * (*diff)[i];
            if (ga && av[i] > floor) ga[i] += d / av[i];
            if (gb && bv[i] > floor) gb[i] -= d / bv[i];
          }
        }
      },
      "row_log_distance");
}

DiffNode row_l2_norms(const DiffNode& x) {
  require_rank(x, 2, "row_l2_norms");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  Tensor out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += x.value().at(r, c) * x.value().at(r, c);
    out[r] = std::sqrt(acc);
  }
  return DiffNode::make(
      std::move(out), {x},
      [rows, cols](const Tensor& g, const Tensor& y, std::span<DiffNode> p) {
        if (!p[0].requires_grad()) return;
        const Tensor& xv = p[0].value();
        Tensor& gx = p[0].grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          if (y[r] == 0.0) continue;
          const double k = g[r] / y[r];
          for (std::size_t c = 0; c < cols; ++c) gx.at(r, c) += k * xv.at(r, c);
        }
      },
      "row_l2_norms");
}

DiffNode matmul(const DiffNode& a, const DiffNode& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  if (b.shape()[0] != k) {
    throw UsageError("matmul: shape mismatch " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  Tensor out({n, m});
  as_mat(out, n, m).noalias() = as_mat(a.value(), n, k) * as_mat(b.value(), k, m);
  return DiffNode::make(
      std::move(out), {a, b},
      [n, k, m](const Tensor& g, const Tensor&, std::span<DiffNode> p) {
        const auto gm = as_mat(g, n, m);
        if (p[0].requires_grad()) {
          as_mat(p[0].grad_buffer(), n, k).noalias() += gm * as_mat(p[1].value(), k, m).transpose();
        }
        if (p[1].requires_grad()) {
          as_mat(p[1].grad_buffer(), k, m).noalias() += as_mat(p[0].value(), n, k).transpose() * gm;
        }
      },
      "matmul");
}

DiffNode linear(const DiffNode& x, const DiffNode& w, const DiffNode& b) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  require_rank(b, 1, "linear");
  const std::size_t n = x.shape()[0], din = x.shape()[1], dout = w.shape()[1];
  if (w.shape()[0] != din || b.shape()[0] != dout) {
    throw UsageError("linear: shape mismatch x" + shape_string(x.shape()) + " w" +
                     shape_string(w.shape()) + " b" + shape_string(b.shape()));
  }
  Tensor out({n, dout});
  auto om = as_mat(out, n, dout);
  om.noalias() = as_mat(x.value(), n, din) * as_mat(w.value(), din, dout);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < dout; ++c) out.at(r, c) += b.value()[c];
  }
  return DiffNode::make(
      std::move(out), {x, w, b},
      [n, din, dout](const Tensor& g, const Tensor&, std::span<DiffNode> p) {
        const auto gm = as_mat(g, n, dout);
        if (p[0].requires_grad()) {
          as_mat(p[0].grad_buffer(), n, din).noalias() +=
              gm * as_mat(p[1].value(), din, dout).transpose();
        }
        if (p[1].requires_grad()) {
          as_mat(p[1].grad_buffer(), din, dout).noalias() +=
              as_mat(p[0].value(), n, din).transpose() * gm;
        }
        if (p[2].requires_grad()) {
          Tensor& gb = p[2].grad_buffer();
          for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < dout; ++c) gb[c] += g.at(r, c);
          }
        }
      },
      "linear");
}

DiffNode transpose(const DiffNode& x) {
  require_rank(x, 2, "transpose");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  Tensor out({cols, rows});
  as_mat(out, cols, rows) = as_mat(x.value(), rows, cols).transpose();
  return DiffNode::make(
      std::move(out), {x},
      [rows, cols](const Tensor& g, const Tensor&, std::span<DiffNode> p) {
        if (!p[0].requires_grad()) return;
        as_mat(p[0].grad_buffer(), rows, cols) += as_mat(g, cols, rows).transpose();
      },
      "transpose");
}

DiffNode reshape(const DiffNode& x, Shape shape) {
  require(x.valid(), "reshape: invalid input node");
  return DiffNode::make(
      x.value().reshaped(std::move(shape)), {x},
      [](const Tensor& g, const Tensor&, std::span<DiffNode> p) {
        if (!p[0].requires_grad()) return;
        Tensor& gx = p[0].grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      },
      "reshape");
}

DiffNode concat(std::span<const DiffNode> parts, std::size_t axis) {
  require(!parts.empty(), "concat: no inputs");
  require(axis < 2, "concat: axis must be 0 or 1");
  for (const auto& part : parts) require_rank(part, 2, "concat");
  const std::size_t keep = parts[0].shape()[1 - axis];
  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (const auto& part : parts) {
    if (part.shape()[1 - axis] != keep) {
      throw UsageError("concat: mismatched extent " + shape_string(part.shape()) + " vs " +
                       shape_string(parts[0].shape()));
    }
    extents.push_back(part.shape()[axis]);
    total += part.shape()[axis];
  }
  const std::size_t rows = axis == 0 ? total : keep;
  const std::size_t cols = axis == 0 ? keep : total;
  Tensor out({rows, cols});
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& v = parts[i].value();
    const std::size_t r_n = v.shape()[0], c_n = v.shape()[1];
    for (std::size_t r = 0; r < r_n; ++r) {
      for (std::size_t c = 0; c < c_n; ++c) {
        out.at(axis == 0 ? r + offset : r, axis == 0 ? c : c + offset) = v.at(r, c);
      }
    }
    offset += extents[i];
  }
  std::vector<DiffNode> parents(parts.begin(), parts.end());
  return DiffNode::make(
      std::move(out), std::move(parents),
      [axis, extents](const Tensor& g, const Tensor&, std::span<DiffNode> p) {
        std::size_t offset = 0;
        for (std::size_t i = 0; i < p.size(); ++i) {
          if (p[i].requires_grad()) {
            Tensor& gp = p[i].grad_buffer();
            const std::size_t r_n = gp.shape()[0], c_n = gp.shape()[1];
            for (std::size_t r = 0; r < r_n; ++r) {
              for (std::size_t c = 0; c < c_n; ++c) {
                gp.at(r, c) += g.at(axis == 0 ? r + offset : r, axis == 0 ? c : c + offset);
              }
            }
          }
          offset += extents[i];
        }
      },
      "concat");
}

DiffNode slice(const DiffNode& x, std::size_t axis, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice");
  require(axis < 2, "slice: axis must be 0 or 1");
  require(begin <= end && end <= x.shape()[axis], "slice: range out of bounds");
  const std::size_t rows = axis == 0 ? end - begin : x.shape()[0];
  const std::size_t cols = axis == 1 ? end - begin : x.shape()[1];
  const std::size_t r0 = axis == 0 ? begin : 0, c0 = axis == 1 ? begin : 0;
  const std::size_t stride = x.shape()[1];
  Tensor out({rows, cols});
  const double* src = x.value().data().data() + r0 * stride + c0;
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(src + r * stride, cols, out.data().data() + r * cols);
  }
  return DiffNode::make(
      std::move(out), {x},
      [rows, cols, r0, c0, stride](const Tensor& g, const Tensor&, std::span<DiffNode> p) {
        if (!p[0].requires_grad()) return;
        double* gx = p[0].grad_buffer().data().data() + r0 * stride + c0;
        const double* gs = g.data().data();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) gx[r * stride + c] += gs[r * cols + c];
        }
      },
      "slice");
}

DiffNode repeat_rows(const DiffNode& x, std::size_t factor) {
  require_rank(x, 2, "repeat_rows");
  require(factor >= 1, "repeat_rows: factor must be >= 1");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  Tensor out({rows * factor, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t f = 0; f < factor; ++f) {
      for (std::size_t c = 0; c < cols; ++c) out.at(r * factor + f, c) = x.value().at(r, c);
    }
  }
  return DiffNode::make(
      std::move(out), {x},
      [rows, cols, factor](const Tensor& g, const Tensor&, std::span<DiffNode> p) {
        if (!p[0].requires_grad()) return;
        Tensor& gx = p[0].grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t f = 0; f < factor; ++f) {
            for (std::size_t c = 0; c < cols; ++c) gx.at(r, c) += g.at(r * factor + f, c);
          }
        }
      },
      "repeat_rows");
}

DiffNode gather_rows(const DiffNode& table, std::span<const std::size_t> rows) {
  require_rank(table, 2, "gather_rows");
  const std::size_t k = table.shape()[0], d = table.shape()[1];
  Tensor out({rows.size(), d});
  for (std::size_t n = 0; n < rows.size(); ++n) {
    if (rows[n] >= k) throw UsageError("gather_rows: row index " + std::to_string(rows[n]) + " >= " + std::to_string(k));
    for (std::size_t c = 0; c < d; ++c) out.at(n, c) = table.value().at(rows[n], c);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return DiffNode::make(
      std::move(out), {table},
      [idx = std::move(idx), d](const Tensor& g, const Tensor&, std::span<DiffNode> p) {
        if (!p[0].requires_grad()) return;
        Tensor& gt = p[0].grad_buffer();
        for (std::size_t n = 0; n < idx.size(); ++n) {
          for (std::size_t c = 0; c < d; ++c) gt.at(idx[n], c) += g.at(n, c);
        }
      },
      "gather_rows");
}

DiffNode avg_pool1d(const DiffNode& x, std::size_t factor) {
  require_rank(x, 2, "avg_pool1d");
  require(factor >= 1, "avg_pool1d: factor must be >= 1");
  const std::size_t channels = x.shape()[0], length = x.shape()[1];
  const std::size_t out_len = length / factor;
  require(out_len >= 1, "avg_pool1d: input shorter than the pooling factor");
  const double inv = 1.0 / static_cast<double>(factor);
  Tensor out({channels, out_len});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t t = 0; t < out_len; ++t) {
      double acc = 0.0;
      for (std::size_t f = 0; f < factor; ++f) acc += x.value().at(c, t * factor + f);
      out.at(c, t) = acc * inv;
    }
  }
  return DiffNode::make(
      std::move(out), {x},
      [channels, out_len, factor, inv](const Tensor& g, const Tensor&, std::span<DiffNode> p) {
        if (!p[0].requires_grad()) return;
        Tensor& gx = p[0].grad_buffer();
        for (std::size_t c = 0; c < channels; ++c) {
          for (std::size_t t = 0; t < out_len; ++t) {
            for (std::size_t f = 0; f < factor; ++f) gx.at(c, t * factor + f) += g.at(c, t) * inv;
          }
        }
      },
      "avg_pool1d");
}

DiffNode conv1d(const DiffNode& x, const DiffNode& kernel, std::size_t stride, std::size_t padding) {
  return conv1d(x, kernel, DiffNode(), stride, padding);
}

DiffNode conv1d(const DiffNode& x, const DiffNode& kernel, const DiffNode& bias, std::size_t stride,
                std::size_t padding) {
  require_rank(x, 2, "conv1d");
  require_rank(kernel, 3, "conv1d");
  require(stride >= 1, "conv1d: stride must be positive");
  const std::size_t c_in = x.shape()[0], length = x.shape()[1];
  const std::size_t c_out = kernel.shape()[0], ksize = kernel.shape()[2];
  if (kernel.shape()[1] != c_in) {
    throw UsageError("conv1d: kernel " + shape_string(kernel.shape()) + " does not match input " +
                     shape_string(x.shape()));
  }
  if (ksize > length + 2 * padding) {
    throw UsageError("conv1d: kernel size " + std::to_string(ksize) + " exceeds padded input " +
                     std::to_string(length + 2 * padding));
  }
  if (bias.valid() && bias.shape() != Shape{c_out}) throw UsageError("conv1d: bias shape mismatch");
  const std::size_t t_out = (length + 2 * padding - ksize) / stride + 1;
  const std::size_t ck = c_in * ksize;
  const std::size_t chunk = chunk_columns(ck);

  const bool direct = use_direct_conv(c_in, c_out, stride);
  Tensor out({c_out, t_out});
  if (direct) {
    direct_conv_forward(x.value().data().data(), kernel.value().data().data(), out.data().data(), c_in,
                        c_out, length, ksize, padding, t_out);
  }
  Scratch cols(direct ? 0 : ck * std::min(chunk, t_out));
  const auto w = as_mat(kernel.value(), c_out, ck);
  for (std::size_t t0 = 0; !direct && t0 < t_out; t0 += chunk) {
    const std::size_t n = std::min(chunk, t_out - t0);
    im2col1d(x.value().data().data(), c_in, length, ksize, stride, padding, t0, n, cols.data());
    block_cols(out.data().data(), c_out, t_out, t0, n).noalias() =
        w * ConstMatMap(cols.data(), n, ck).transpose();
  }
  if (bias.valid()) add_channel_bias(out, bias.value(), c_out, t_out);

  std::vector<DiffNode> parents{x, kernel};
  if (bias.valid()) parents.push_back(bias);
  return DiffNode::make(
      std::move(out), std::move(parents),
      [=](const Tensor& g, const Tensor&, std::span<DiffNode> p) {
        const bool dk = p[1].requires_grad(), dx = p[0].requires_grad();
        if (direct && (dk || dx)) {
          direct_conv_backward(p[0].value().data().data(), p[1].value().data().data(), g.data().data(),
                               dx ? p[0].grad_buffer().data().data() : nullptr,
                               dk ? p[1].grad_buffer().data().data() : nullptr, c_in, c_out, length,
                               ksize, padding, t_out);
        } else if (dk || dx) {
          Scratch cols(ck * std::min(chunk, t_out));
          const auto w = as_mat(p[1].value(), c_out, ck);
          for (std::size_t t0 = 0; t0 < t_out; t0 += chunk) {
            const std::size_t n = std::min(chunk, t_out - t0);
            const auto gm = block_cols(g.data().data(), c_out, t_out, t0, n);
            if (dk) {
              im2col1d(p[0].value().data().data(), c_in, length, ksize, stride, padding, t0, n,
                       cols.data());
              as_mat(p[1].grad_buffer(), c_out, ck).noalias() += gm * ConstMatMap(cols.data(), n, ck);
            }
            if (dx) {
              MatMap(cols.data(), n, ck).noalias() = gm.transpose() * w;
              col2im1d(cols.data(), c_in, length, ksize, stride, padding, t0, n,
                       p[0].grad_buffer().data().data());
            }
          }
        }
        if (p.size() > 2) accumulate_channel_bias_grad(g, p[2], c_out, t_out);
      },
      "conv1d");
}

DiffNode conv1d_transposed(const DiffNode& x, const DiffNode& kernel, std::size_t stride) {
  return conv1d_transposed(x, kernel, DiffNode(), stride);
}

DiffNode conv1d_transposed(const DiffNode& x, const DiffNode& kernel, const DiffNode& bias,
                           std::size_t stride) {
  require_rank(x, 2, "conv1d_transposed");
  require_rank(kernel, 3, "conv1d_transposed");
  require(stride >= 1, "conv1d_transposed: stride must be positive");
  const std::size_t c_in = x.shape()[0], t_in = x.shape()[1];
  const std::size_t c_out = kernel.shape()[1], ksize = kernel.shape()[2];
  if (kernel.shape()[0] != c_in) {
    throw UsageError("conv1d_transposed: kernel " + shape_string(kernel.shape()) +
                     " does not match input " + shape_string(x.shape()));
  }
  require(t_in >= 1, "conv1d_transposed: empty input");
  if (bias.valid() && bias.shape() != Shape{c_out}) {
    throw UsageError("conv1d_transposed: bias shape mismatch");
  }
  const std::size_t length = (t_in - 1) * stride + ksize;
  const std::size_t ck = c_out * ksize;
  const std::size_t chunk = chunk_columns(ck);

  Scratch cols(ck * std::min(chunk, t_in));
  Tensor out({c_out, length});
  const auto w = as_mat(kernel.value(), c_in, ck);
  for (std::size_t t0 = 0; t0 < t_in; t0 += chunk) {
    const std::size_t n = std::min(chunk, t_in - t0);
    MatMap(cols.data(), n, ck).noalias() = block_cols(x.value().data().data(), c_in, t_in, t0, n).transpose() * w;
    col2im1d(cols.data(), c_out, length, ksize, stride, 0, t0, n, out.data().data());
  }
  if (bias.valid()) add_channel_bias(out, bias.value(), c_out, length);

  std::vector<DiffNode> parents{x, kernel};
  if (bias.valid()) parents.push_back(bias);
  return DiffNode::make(
      std::move(out), std::move(parents),
      [=](const Tensor& g, const Tensor&, std::span<DiffNode> p) {
        const bool dx = p[0].requires_grad(), dk = p[1].requires_grad();
        if (dx || dk) {
          Scratch gcols(ck * std::min(chunk, t_in));
          for (std::size_t t0 = 0; t0 < t_in; t0 += chunk) {
            const std::size_t n = std::min(chunk, t_in - t0);
            im2col1d(g.data().data(), c_out, length, ksize, stride, 0, t0, n, gcols.data());
            const ConstMatMap gc(gcols.data(), n, ck);
            if (dx) {
              block_cols(p[0].grad_buffer().data().data(), c_in, t_in, t0, n).noalias() +=
                  as_mat(p[1].value(), c_in, ck) * gc.transpose();
            }
            if (dk) {
              as_mat(p[1].grad_buffer(), c_in, ck).noalias() +=
                  block_cols(p[0].value().data().data(), c_in, t_in, t0, n) * gc;
            }
          }
        }
        if (p.size() > 2) accumulate_channel_bias_grad(g, p[2], c_out, length);
      },
      "conv1d_transposed");
}

DiffNode conv2d(const DiffNode& x, const DiffNode& kernel, const DiffNode& bias,
                const Conv2dGeometry& geom) {
  require_rank(x, 3, "conv2d");
  require_rank(kernel, 4, "conv2d");
  require(geom.stride_h >= 1 && geom.stride_w >= 1, "conv2d: stride must be positive");
  Geom2d g{};
  g.c = x.shape()[0];
  g.h = x.shape()[1];
  g.w = x.shape()[2];
  const std::size_t c_out = kernel.shape()[0];
  g.kh = kernel.shape()[2];
  g.kw = kernel.shape()[3];
  g.sh = geom.stride_h;
  g.sw = geom.stride_w;
  g.ph = geom.pad_h;
  g.pw = geom.pad_w;
  if (kernel.shape()[1] != g.c) {
    throw UsageError("conv2d: kernel " + shape_string(kernel.shape()) + " does not match input " +
                     shape_string(x.shape()));
  }
  if (g.kh > g.h + 2 * g.ph || g.kw > g.w + 2 * g.pw) {
    throw UsageError("conv2d: kernel larger than padded input " + shape_string(x.shape()));
  }
  if (bias.valid() && bias.shape() != Shape{c_out}) throw UsageError("conv2d: bias shape mismatch");
  g.ho = (g.h + 2 * g.ph - g.kh) / g.sh + 1;
  g.wo = (g.w + 2 * g.pw - g.kw) / g.sw + 1;
  const std::size_t ck = g.c * g.kh * g.kw, plane = g.ho * g.wo;
  const std::size_t rows_per_chunk = std::max<std::size_t>(1, chunk_columns(ck) / g.wo);

  Scratch cols(ck * std::min(rows_per_chunk, g.ho) * g.wo);
  Tensor out({c_out, g.ho, g.wo});
  const auto w = as_mat(kernel.value(), c_out, ck);
  for (std::size_t r0 = 0; r0 < g.ho; r0 += rows_per_chunk) {
    const std::size_t r1 = std::min(g.ho, r0 + rows_per_chunk), n = (r1 - r0) * g.wo;
    im2col2d(x.value().data().data(), g, r0, r1, cols.data());
    block_cols(out.data().data(), c_out, plane, r0 * g.wo, n).noalias() = w * ConstMatMap(cols.data(), ck, n);
  }
  if (bias.valid()) add_channel_bias(out, bias.value(), c_out, plane);

  std::vector<DiffNode> parents{x, kernel};
  if (bias.valid()) parents.push_back(bias);
  return DiffNode::make(
      std::move(out), std::move(parents),
      [=](const Tensor& grad, const Tensor&, std::span<DiffNode> p) {
        const bool dk = p[1].requires_grad(), dx = p[0].requires_grad();
        if (dk || dx) {
          const std::size_t cap = ck * std::min(rows_per_chunk, g.ho) * g.wo;
          Scratch cols(cap), dcols(cap);
          const auto w = as_mat(p[1].value(), c_out, ck);
          for (std::size_t r0 = 0; r0 < g.ho; r0 += rows_per_chunk) {
            const std::size_t r1 = std::min(g.ho, r0 + rows_per_chunk), n = (r1 - r0) * g.wo;
            const auto gm = block_cols(grad.data().data(), c_out, plane, r0 * g.wo, n);
            if (dk) {
              im2col2d(p[0].value().data().data(), g, r0, r1, cols.data());
              as_mat(p[1].grad_buffer(), c_out, ck).noalias() +=
                  gm * ConstMatMap(cols.data(), ck, n).transpose();
            }
            if (dx) {
              MatMap(dcols.data(), static_cast<Eigen::Index>(ck), static_cast<Eigen::Index>(n)).noalias() =
                  w.transpose() * gm;
              col2im2d(dcols.data(), g, r0, r1, p[0].grad_buffer().data().data());
            }
          }
        }
        if (p.size() > 2) accumulate_channel_bias_grad(grad, p[2], c_out, plane);
      },
      "conv2d");
}

}  // namespace txc
