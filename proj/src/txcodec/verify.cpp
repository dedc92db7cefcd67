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

#include "txcodec/verify.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <string>
#include <utility>

#include "txcodec/bitstream.hpp"
#include "txcodec/codec.hpp"
#include "txcodec/codecnet.hpp"
#include "txcodec/errors.hpp"
#include "txcodec/gradcheck.hpp"
#include "txcodec/losses.hpp"
#include "txcodec/quantizer.hpp"
#include "txcodec/random.hpp"
#include "txcodec/signal.hpp"
#include "txcodec/tensor.hpp"

namespace txc {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Tensor random_tensor(Rng& rng, Shape shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Values at least `margin` away from `kink`, within `margin + spread` of it.
Tensor away_from(Rng& rng, Shape shape, double kink, double margin, double spread) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) {
    const double mag = margin + spread * rng.uniform();
    v = rng.uniform() < 0.5 ? kink - mag : kink + mag;
  }
  return t;
}

double abs_sum(const Tensor& t) {
  double acc = 0.0;
  for (double v : t.data()) acc += std::fabs(v);
  return acc;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); }

// sum(y * R) with R drawn from a fixed seed, so every evaluation of the
// builder sees the same projection.
DiffNode project(const DiffNode& y, std::uint64_t seed) {
  Rng rng(seed);
  Tensor r(y.shape());
  for (double& v : r.data()) v = rng.uniform(-1.0, 1.0);
  return sum(mul(y, DiffNode::constant(std::move(r))));
}

struct GradInstance {
  LossBuilder build;
  std::vector<Tensor> inputs;
};

struct GradCase {
  const char* op;
  const char* family;
  double tolerance;
  std::size_t max_coordinates;  // 0 checks every coordinate
  std::function<GradInstance(Rng&, std::uint64_t)> make;
};

std::array<DiscriminatorOutput, kDiscriminatorCount> outputs_from(std::span<const DiffNode> logits,
                                                                  std::span<const DiffNode> maps,
                                                                  std::size_t layers) {
  std::array<DiscriminatorOutput, kDiscriminatorCount> out;
  for (std::size_t k = 0; k < kDiscriminatorCount; ++k) {
    out[k].logits = logits[k];
    if (maps.empty()) {
      out[k].feature_maps = {logits[k]};
    } else {
      for (std::size_t l = 0; l < layers; ++l) out[k].feature_maps.push_back(maps[k * layers + l]);
    }
  }
  return out;
}

GradCase unary_case(const char* op, DiffNode (*fn)(const DiffNode&), double kink, double margin,
                    double lo, double hi) {
  return {op, "elementwise", kGradTolerance, 0, [=](Rng& rng, std::uint64_t seed) {
            const Shape s{pick(rng, 1, 4), pick(rng, 1, 6)};
            Tensor x = std::isnan(kink) ? random_tensor(rng, s, lo, hi) : away_from(rng, s, kink, margin, hi);
            return GradInstance{[fn, seed](std::span<const DiffNode> in) { return project(fn(in[0]), seed); },
                                {std::move(x)}};
          }};
}

GradCase binary_case(const char* op, DiffNode (*fn)(const DiffNode&, const DiffNode&)) {
  return {op, "elementwise", kGradTolerance, 0, [=](Rng& rng, std::uint64_t seed) {
            const Shape s{pick(rng, 1, 4), pick(rng, 1, 6)};
            return GradInstance{
                [fn, seed](std::span<const DiffNode> in) { return project(fn(in[0], in[1]), seed); },
                {random_tensor(rng, s, -2.0, 2.0), random_tensor(rng, s, -2.0, 2.0)}};
          }};
}

DiffNode relu_op(const DiffNode& x) { return relu(x); }
DiffNode leaky_op(const DiffNode& x) { return leaky_relu(x, 0.2); }
DiffNode elu_op(const DiffNode& x) { return elu(x); }
DiffNode tanh_op(const DiffNode& x) { return tanh(x); }
DiffNode abs_op(const DiffNode& x) { return abs(x); }
DiffNode square_op(const DiffNode& x) { return square(x); }
DiffNode log_op(const DiffNode& x) { return log(x); }
DiffNode sqrt_op(const DiffNode& x) { return sqrt(x); }
DiffNode clamp_op(const DiffNode& x) { return clamp_min(x, 0.3); }
DiffNode add_op(const DiffNode& a, const DiffNode& b) { return add(a, b); }
DiffNode sub_op(const DiffNode& a, const DiffNode& b) { return sub(a, b); }
DiffNode mul_op(const DiffNode& a, const DiffNode& b) { return mul(a, b); }

std::vector<GradCase> gradient_cases() {
  constexpr double kNone = std::numeric_limits<double>::quiet_NaN();
  std::vector<GradCase> cases;

  // Elementwise.
  cases.push_back(binary_case("add", add_op));
  cases.push_back(binary_case("sub", sub_op));
  cases.push_back(binary_case("mul", mul_op));
  cases.push_back({"scale", "elementwise", kGradTolerance, 0, [](Rng& rng, std::uint64_t seed) {
                     const double c = rng.uniform(-3.0, 3.0);
                     return GradInstance{[c, seed](std::span<const DiffNode> in) { return project(scale(in[0], c), seed); },
                                         {random_tensor(rng, {pick(rng, 1, 4), pick(rng, 1, 6)}, -2.0, 2.0)}};
                   }});
  cases.push_back({"add_scalar", "elementwise", kGradTolerance, 0, [](Rng& rng, std::uint64_t seed) {
                     const double c = rng.uniform(-3.0, 3.0);
                     return GradInstance{
                         [c, seed](std::span<const DiffNode> in) { return project(add_scalar(in[0], c), seed); },
                         {random_tensor(rng, {pick(rng, 1, 4), pick(rng, 1, 6)}, -2.0, 2.0)}};
                   }});
  cases.push_back(unary_case("relu", relu_op, 0.0, 0.05, 0.0, 2.0));
  cases.push_back(unary_case("leaky_relu", leaky_op, 0.0, 0.05, 0.0, 2.0));
  cases.push_back(unary_case("elu", elu_op, 0.0, 0.05, 0.0, 2.0));
  cases.push_back(unary_case("tanh", tanh_op, kNone, 0.0, -2.0, 2.0));
  cases.push_back(unary_case("abs", abs_op, 0.0, 0.05, 0.0, 2.0));
  cases.push_back(unary_case("square", square_op, kNone, 0.0, -2.0, 2.0));
  cases.push_back(unary_case("log", log_op, kNone, 0.0, 0.1, 3.0));
  cases.push_back(unary_case("sqrt", sqrt_op, kNone, 0.0, 0.1, 3.0));
  cases.push_back(unary_case("clamp_min", clamp_op, 0.3, 0.05, 0.0, 2.0));

  // Reductions.
  auto reduction = [](const char* op, DiffNode (*fn)(const DiffNode&), double kink) {
    return GradCase{op, "reduction", kGradTolerance, 0, [=](Rng& rng, std::uint64_t) {
                      const Shape s{pick(rng, 1, 4), pick(rng, 2, 6)};
                      Tensor x = std::isnan(kink) ? random_tensor(rng, s, -2.0, 2.0) : away_from(rng, s, kink, 0.05, 2.0);
                      return GradInstance{[fn](std::span<const DiffNode> in) { return fn(in[0]); }, {std::move(x)}};
                    }};
  };
  cases.push_back(reduction("sum", [](const DiffNode& x) { return scale(sum(x), 0.7); }, kNone));
  cases.push_back(reduction("mean", [](const DiffNode& x) { return scale(mean(x), 1.3); }, kNone));
  cases.push_back(reduction("l1_norm", [](const DiffNode& x) { return l1_norm(x); }, 0.0));
  cases.push_back(reduction("l2_norm", [](const DiffNode& x) { return l2_norm(x); }, kNone));
  cases.push_back({"l1_distance", "reduction", kGradTolerance, 0, [](Rng& rng, std::uint64_t) {
                     const Shape s{pick(rng, 1, 4), pick(rng, 2, 6)};
                     Tensor a = random_tensor(rng, s, -2.0, 2.0);
                     Tensor b = away_from(rng, s, 0.0, 0.05, 1.0);
                     for (std::size_t i = 0; i < b.size(); ++i) b[i] += a[i];
                     return GradInstance{[](std::span<const DiffNode> in) { return l1_distance(in[0], in[1]); },
                                         {std::move(a), std::move(b)}};
                   }});
  cases.push_back({"row_l2_norms", "reduction", kGradTolerance, 0, [](Rng& rng, std::uint64_t seed) {
                     return GradInstance{
                         [seed](std::span<const DiffNode> in) { return project(row_l2_norms(in[0]), seed); },
                         {random_tensor(rng, {pick(rng, 1, 5), pick(rng, 1, 6)}, -2.0, 2.0)}};
                   }});
  cases.push_back({"row_log_distance", "reduction", kGradTolerance, 0, [](Rng& rng, std::uint64_t seed) {
                     // Entries on both sides of the floor, none within 20% of it.
                     const double floor = 0.1;
                     const Shape s{pick(rng, 1, 5), pick(rng, 2, 6)};
                     auto side = [&](Tensor& t) {
                       for (double& v : t.data()) {
                         v = rng.uniform() < 0.2 ? rng.uniform(0.01, 0.08) : rng.uniform(0.12, 3.0);
                       }
                     };
                     Tensor a(s), b(s);
                     side(a);
                     side(b);
                     return GradInstance{[seed, floor](std::span<const DiffNode> in) {
                                           return project(row_log_distance(in[0], in[1], floor), seed);
                                         },
                                         {std::move(a), std::move(b)}};
                   }});

  // Linear and structural.
  auto linear_case = [](const char* op, std::function<GradInstance(Rng&, std::uint64_t)> make) {
    return GradCase{op, "linear", kLinearGradTolerance, 0, std::move(make)};
  };
  cases.push_back(linear_case("matmul", [](Rng& rng, std::uint64_t seed) {
    const std::size_t n = pick(rng, 1, 5), k = pick(rng, 1, 5), m = pick(rng, 1, 5);
    return GradInstance{[seed](std::span<const DiffNode> in) { return project(matmul(in[0], in[1]), seed); },
                        {random_tensor(rng, {n, k}, -1, 1), random_tensor(rng, {k, m}, -1, 1)}};
  }));
  cases.push_back(linear_case("linear", [](Rng& rng, std::uint64_t seed) {
    const std::size_t n = pick(rng, 1, 5), k = pick(rng, 1, 5), m = pick(rng, 1, 5);
    return GradInstance{
        [seed](std::span<const DiffNode> in) { return project(linear(in[0], in[1], in[2]), seed); },
        {random_tensor(rng, {n, k}, -1, 1), random_tensor(rng, {k, m}, -1, 1), random_tensor(rng, {m}, -1, 1)}};
  }));
  cases.push_back(linear_case("reduce_dim", [](Rng& rng, std::uint64_t seed) {
    const std::size_t n = pick(rng, 1, 3);
    return GradInstance{[seed](std::span<const DiffNode> in) { return project(reduce_dim(in[0], in[1]), seed); },
                        {random_tensor(rng, {n, 16}, -1, 1), random_tensor(rng, {16, 4}, -1, 1)}};
  }));
  cases.push_back(linear_case("transpose", [](Rng& rng, std::uint64_t seed) {
    return GradInstance{[seed](std::span<const DiffNode> in) { return project(transpose(in[0]), seed); },
                        {random_tensor(rng, {pick(rng, 1, 5), pick(rng, 1, 5)}, -1, 1)}};
  }));
  cases.push_back(linear_case("reshape", [](Rng& rng, std::uint64_t seed) {
    const std::size_t r = pick(rng, 1, 4), c = pick(rng, 1, 4);
    return GradInstance{[seed, r, c](std::span<const DiffNode> in) { return project(reshape(in[0], {c, r}), seed); },
                        {random_tensor(rng, {r, c}, -1, 1)}};
  }));
  cases.push_back(linear_case("concat", [](Rng& rng, std::uint64_t seed) {
    const std::size_t axis = rng.index(2);
    const std::size_t r = pick(rng, 1, 4), c = pick(rng, 1, 4), extra = pick(rng, 1, 3);
    const Shape s2 = axis == 0 ? Shape{extra, c} : Shape{r, extra};
    return GradInstance{[seed, axis](std::span<const DiffNode> in) {
                          const std::array<DiffNode, 2> parts{in[0], in[1]};
                          return project(concat(parts, axis), seed);
                        },
                        {random_tensor(rng, {r, c}, -1, 1), random_tensor(rng, s2, -1, 1)}};
  }));
  cases.push_back(linear_case("slice", [](Rng& rng, std::uint64_t seed) {
    const std::size_t axis = rng.index(2);
    const Shape s{pick(rng, 2, 5), pick(rng, 2, 5)};
    const std::size_t b = rng.index(s[axis] - 1), e = b + 1 + rng.index(s[axis] - b - 1);
    return GradInstance{
        [seed, axis, b, e](std::span<const DiffNode> in) { return project(slice(in[0], axis, b, e), seed); },
        {random_tensor(rng, s, -1, 1)}};
  }));
  cases.push_back(linear_case("repeat_rows", [](Rng& rng, std::uint64_t seed) {
    const std::size_t f = pick(rng, 1, 3);
    return GradInstance{[seed, f](std::span<const DiffNode> in) { return project(repeat_rows(in[0], f), seed); },
                        {random_tensor(rng, {pick(rng, 1, 4), pick(rng, 1, 4)}, -1, 1)}};
  }));
  cases.push_back(linear_case("gather_rows", [](Rng& rng, std::uint64_t seed) {
    const std::size_t k = pick(rng, 2, 5);
    std::vector<std::size_t> rows(pick(rng, 1, 6));
    for (auto& r : rows) r = rng.index(k);
    return GradInstance{
        [seed, rows](std::span<const DiffNode> in) { return project(gather_rows(in[0], rows), seed); },
        {random_tensor(rng, {k, pick(rng, 1, 4)}, -1, 1)}};
  }));
  cases.push_back(linear_case("avg_pool1d", [](Rng& rng, std::uint64_t seed) {
    const std::size_t f = pick(rng, 1, 4);
    return GradInstance{[seed, f](std::span<const DiffNode> in) { return project(avg_pool1d(in[0], f), seed); },
                        {random_tensor(rng, {pick(rng, 1, 3), f * pick(rng, 1, 5) + rng.index(f)}, -1, 1)}};
  }));
  cases.push_back(linear_case("conv1d", [](Rng& rng, std::uint64_t seed) {
    // Channel product > 16 selects the im2col path.
    const std::size_t ci = pick(rng, 3, 5), co = pick(rng, 6, 8), k = pick(rng, 1, 5);
    const std::size_t stride = pick(rng, 1, 4), pad = rng.index(k);
    const std::size_t len = k + pick(rng, 0, 12);
    return GradInstance{[seed, stride, pad](std::span<const DiffNode> in) {
                          return project(conv1d(in[0], in[1], in[2], stride, pad), seed);
                        },
                        {random_tensor(rng, {ci, len}, -1, 1), random_tensor(rng, {co, ci, k}, -1, 1),
                         random_tensor(rng, {co}, -1, 1)}};
  }));
  cases.push_back(linear_case("conv1d_direct", [](Rng& rng, std::uint64_t seed) {
    // Stride 1 with a small channel product selects the direct path.
    const std::size_t ci = pick(rng, 1, 2), co = pick(rng, 1, 4), k = pick(rng, 1, 7);
    const std::size_t pad = rng.index(k);
    const std::size_t len = k + pick(rng, 0, 20);
    return GradInstance{[seed, pad](std::span<const DiffNode> in) {
                          return project(conv1d(in[0], in[1], in[2], 1, pad), seed);
                        },
                        {random_tensor(rng, {ci, len}, -1, 1), random_tensor(rng, {co, ci, k}, -1, 1),
                         random_tensor(rng, {co}, -1, 1)}};
  }));
  cases.push_back(linear_case("conv1d_transposed", [](Rng& rng, std::uint64_t seed) {
    const std::size_t ci = pick(rng, 1, 4), co = pick(rng, 1, 4), k = pick(rng, 1, 6);
    const std::size_t stride = pick(rng, 1, 4);
    return GradInstance{[seed, stride](std::span<const DiffNode> in) {
                          return project(conv1d_transposed(in[0], in[1], in[2], stride), seed);
                        },
                        {random_tensor(rng, {ci, pick(rng, 1, 6)}, -1, 1), random_tensor(rng, {ci, co, k}, -1, 1),
                         random_tensor(rng, {co}, -1, 1)}};
  }));
  cases.push_back(linear_case("conv2d", [](Rng& rng, std::uint64_t seed) {
    const std::size_t ci = pick(rng, 1, 3), co = pick(rng, 1, 3), kh = pick(rng, 1, 3), kw = pick(rng, 1, 4);
    Conv2dGeometry g;
    g.stride_h = pick(rng, 1, 2);
    g.stride_w = pick(rng, 1, 3);
    g.pad_h = rng.index(kh);
    g.pad_w = rng.index(kw);
    const std::size_t h = kh + pick(rng, 0, 4), w = kw + pick(rng, 0, 6);
    return GradInstance{
        [seed, g](std::span<const DiffNode> in) { return project(conv2d(in[0], in[1], in[2], g), seed); },
        {random_tensor(rng, {ci, h, w}, -1, 1), random_tensor(rng, {co, ci, kh, kw}, -1, 1),
         random_tensor(rng, {co}, -1, 1)}};
  }));

  // Spectral.
  auto spectral = [](const char* op, std::function<GradInstance(Rng&, std::uint64_t)> make) {
    return GradCase{op, "spectral", kGradTolerance, 0, std::move(make)};
  };
  cases.push_back(spectral("stft", [](Rng& rng, std::uint64_t seed) {
    const std::size_t hop = pick(rng, 8, 40);
    return GradInstance{[seed, hop](std::span<const DiffNode> in) { return project(stft(in[0], 64, hop), seed); },
                        {random_tensor(rng, {64 + pick(rng, 0, 96)}, -1, 1)}};
  }));
  cases.push_back(spectral("power_spectrum", [](Rng& rng, std::uint64_t seed) {
    return GradInstance{[seed](std::span<const DiffNode> in) { return project(power_spectrum(in[0]), seed); },
                        {random_tensor(rng, {2, pick(rng, 1, 4), pick(rng, 1, 9)}, -1, 1)}};
  }));
  cases.push_back(spectral("mel_project", [](Rng& rng, std::uint64_t seed) {
    return GradInstance{[seed](std::span<const DiffNode> in) { return project(mel_project(in[0], 64), seed); },
                        {random_tensor(rng, {pick(rng, 1, 4), 33}, 0, 2)}};
  }));
  cases.push_back(spectral("mel_power", [](Rng& rng, std::uint64_t seed) {
    const std::size_t s = rng.uniform() < 0.5 ? 64 : 128;
    return GradInstance{[seed, s](std::span<const DiffNode> in) { return project(mel_power(in[0], s), seed); },
                        {random_tensor(rng, {s + pick(rng, 0, 3 * s / 4)}, -1, 1)}};
  }));

  // Losses.
  auto loss = [](const char* op, std::size_t coords, std::function<GradInstance(Rng&, std::uint64_t)> make) {
    return GradCase{op, "loss", kGradTolerance, coords, std::move(make)};
  };
  cases.push_back(loss("adv_generator_loss", 0, [](Rng& rng, std::uint64_t) {
    std::vector<Tensor> in;
    for (std::size_t k = 0; k < kDiscriminatorCount; ++k) in.push_back(away_from(rng, {pick(rng, 1, 6)}, 1.0, 0.05, 1.5));
    return GradInstance{[](std::span<const DiffNode> n) { return adv_generator_loss(outputs_from(n, {}, 0)); },
                        std::move(in)};
  }));
  cases.push_back(loss("adv_discriminator_loss", 0, [](Rng& rng, std::uint64_t) {
    std::vector<Tensor> in;
    for (std::size_t k = 0; k < kDiscriminatorCount; ++k) in.push_back(away_from(rng, {pick(rng, 1, 6)}, 1.0, 0.05, 1.5));
    for (std::size_t k = 0; k < kDiscriminatorCount; ++k) in.push_back(away_from(rng, {pick(rng, 1, 6)}, -1.0, 0.05, 1.5));
    return GradInstance{[](std::span<const DiffNode> n) {
                          return adv_discriminator_loss(outputs_from(n.subspan(0, 4), {}, 0),
                                                        outputs_from(n.subspan(4, 4), {}, 0));
                        },
                        std::move(in)};
  }));
  cases.push_back(loss("feature_matching_loss", 0, [](Rng& rng, std::uint64_t) {
    const std::size_t layers = pick(rng, 1, 3);
    std::vector<Shape> shapes;
    for (std::size_t i = 0; i < kDiscriminatorCount * layers; ++i) shapes.push_back({pick(rng, 1, 3), pick(rng, 1, 5)});
    std::vector<Tensor> in;
    for (const auto& s : shapes) in.push_back(random_tensor(rng, s, -1, 1));
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      Tensor f = away_from(rng, shapes[i], 0.0, 0.05, 1.0);
      for (std::size_t j = 0; j < f.size(); ++j) f[j] += in[i][j];
      in.push_back(std::move(f));
    }
    const std::size_t n_maps = shapes.size();
    return GradInstance{[layers, n_maps](std::span<const DiffNode> n) {
                          const auto real = n.subspan(0, n_maps), fake = n.subspan(n_maps, n_maps);
                          return feature_matching_loss(outputs_from(real.subspan(0, 4), real, layers),
                                                       outputs_from(fake.subspan(0, 4), fake, layers));
                        },
                        std::move(in)};
  }));
  cases.push_back(loss("reconstruction_loss", 48, [](Rng& rng, std::uint64_t) {
    const std::size_t len = 2048 + pick(rng, 0, 256);
    return GradInstance{[](std::span<const DiffNode> n) { return reconstruction_loss(n[0], n[1]); },
                        {random_tensor(rng, {len}, -0.5, 0.5), random_tensor(rng, {len}, -0.5, 0.5)}};
  }));
  // Stop-gradients make the combined quantization loss non-conservative, so
  // each term is checked on the side it differentiates with the other held fixed.
  cases.push_back(loss("quantization_terms", 0, [](Rng& rng, std::uint64_t) {
    const Shape s{pick(rng, 1, 4), pick(rng, 1, 6)};
    const Tensor fixed = random_tensor(rng, s, -1, 1);
    const bool enc_side = rng.uniform() < 0.5;
    return GradInstance{[fixed, enc_side](std::span<const DiffNode> n) {
                          const DiffNode other = DiffNode::constant(fixed);
                          return enc_side ? quantization_terms(n[0], other).commitment
                                          : quantization_terms(other, n[0]).codebook;
                        },
                        {random_tensor(rng, s, -1, 1)}};
  }));
  cases.push_back(loss("rvq_quantization_terms", 0, [](Rng& rng, std::uint64_t) {
    const std::size_t frames = pick(rng, 1, 6), d = pick(rng, 1, 4), k = pick(rng, 2, 4);
    Tensor f = random_tensor(rng, {frames, d}, -1, 1);
    const Tensor t0 = random_tensor(rng, {k, d}, -1, 1);
    Tensor t1 = random_tensor(rng, {k, d}, -0.3, 0.3);
    const RvqState books({Codebook::from_tensor(t0, 0), Codebook::from_tensor(t1, 1)});
    const IndexMatrix idx = rvq_quantize(books, FeatureSequence{f, 50.0}).indices;
    // Encoder side: commitment wrt f. Codebook side: the last stage's table,
    // whose entries feed no later residual.
    if (rng.uniform() < 0.5) {
      return GradInstance{[idx, t0, t1](std::span<const DiffNode> n) {
                            const RvqState state({Codebook{DiffNode::constant(t0), 0},
                                                  Codebook{DiffNode::constant(t1), 1}});
                            return rvq_quantization_terms(n[0], state, idx).commitment;
                          },
                          {std::move(f)}};
    }
    return GradInstance{[idx, t0, f](std::span<const DiffNode> n) {
                          const RvqState state({Codebook{DiffNode::constant(t0), 0}, Codebook{n[0], 1}});
                          return rvq_quantization_terms(DiffNode::constant(f), state, idx).codebook;
                        },
                        {std::move(t1)}};
  }));
  cases.push_back(loss("total_generator_loss", 0, [](Rng& rng, std::uint64_t) {
    LossWeights w;
    w.adv = rng.uniform(0, 2);
    w.feat = rng.uniform(0, 200);
    w.recon = rng.uniform(0, 2);
    w.quant = rng.uniform(0, 1);
    std::vector<Tensor> in;
    for (int i = 0; i < 4; ++i) in.push_back(random_tensor(rng, {1}, -1, 1));
    return GradInstance{[w](std::span<const DiffNode> n) {
                          return total_generator_loss({square(n[0]), square(n[1]), square(n[2]), square(n[3])}, w);
                        },
                        std::move(in)};
  }));
  return cases;
}

template <typename F>
PropertyResult timed(const char* name, F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  PropertyResult r;
  r.name = name;
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

PropertyResult grad_family(const char* name, const std::vector<GradOpReport>& reports,
                           std::initializer_list<const char*> families, double seconds) {
  PropertyResult r;
  r.name = name;
  r.passed = true;
  r.seconds = seconds;
  std::size_t ops = 0;
  double worst = 0.0;
  std::string worst_op, failures;
  for (const auto& rep : reports) {
    if (std::find_if(families.begin(), families.end(),
                     [&](const char* f) { return rep.family == f; }) == families.end()) {
      continue;
    }
    ++ops;
    if (rep.worst_rel_error >= worst) {
      worst = rep.worst_rel_error;
      worst_op = rep.op;
    }
    if (!rep.passed()) {
      r.passed = false;
      failures += " " + rep.op + fmt("=%.3g", rep.worst_rel_error);
    }
  }
  r.detail = std::to_string(ops) + " ops, worst rel " + fmt("%.3g", worst) + " (" + worst_op + ")";
  if (!failures.empty()) r.detail += "; failing:" + failures;
  if (ops == 0) r.passed = false;
  return r;
}

FeatureSequence random_frames(Rng& rng, std::size_t n, std::size_t d) {
  Tensor t({n, d});
  for (double& v : t.data()) v = rng.normal();
  return {std::move(t), 50.0};
}

double mean_squared_error(const FeatureSequence& a, const FeatureSequence& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    const double d = a.frames[i] - b.frames[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.count());
}

struct SupportedPlan {
  std::uint32_t bps;
  AllocationSplit split;
};

std::vector<BitrateAllocation> supported_allocations() {
  std::vector<BitrateAllocation> out;
  for (std::uint32_t bps : {600u, 900u, 1800u}) {
    for (auto split : {AllocationSplit::even, AllocationSplit::one_third_transformer,
                       AllocationSplit::transformer_only, AllocationSplit::cnn_only}) {
      try {
        out.push_back(plan_allocation(bps, split));
      } catch (const UsageError&) {
      }
    }
  }
  return out;
}

}  // namespace

std::vector<GradOpReport> run_gradient_suite(std::size_t instances, std::uint64_t seed) {
  PrecisionScope scope(Precision::f64);
  std::vector<GradOpReport> reports;
  const auto cases = gradient_cases();
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const auto& gc = cases[c];
    GradOpReport rep;
    rep.op = gc.op;
    rep.family = gc.family;
    rep.tolerance = gc.tolerance;
    Rng rng(derive_seed(seed, c));
    for (std::size_t i = 0; i < instances; ++i) {
      GradInstance inst = gc.make(rng, rng.bits());
      GradCheckOptions opt;
      opt.max_coordinates = gc.max_coordinates;
      opt.seed = rng.bits();
      const auto res = check_gradients(inst.build, inst.inputs, opt);
      rep.worst_rel_error = std::max(rep.worst_rel_error, res.max_rel_error);
      ++rep.instances;
    }
    reports.push_back(std::move(rep));
  }
  return reports;
}

PropertyResult verify_straight_through(std::uint64_t seed) {
  return timed("straight_through.identity", [&](PropertyResult& r) {
    PrecisionScope scope(Precision::f64);
    Rng rng(seed);
    // 32 frames x 64 dims flattened into a 2048-sample signal for a mel loss.
    const std::size_t frames = 32, d = 64;
    Tensor target({frames * d});
    for (double& v : target.data()) v = rng.uniform(-0.5, 0.5);
    std::vector<Codebook> books;
    for (std::uint32_t s = 0; s < 2; ++s) {
      books.push_back(Codebook::from_tensor(random_frames(rng, 64, d).frames, s));
    }
    const RvqState state(books);
    const DiffNode f = DiffNode::parameter(random_frames(rng, frames, d).frames);
    auto mel_loss = [&](const DiffNode& z) {
      return reconstruction_loss(DiffNode::constant(target), reshape(z, {frames * d}));
    };
    const DiffNode q = straight_through(f, state);
    backward(mel_loss(q));
    const DiffNode z = DiffNode::parameter(q.value());
    backward(mel_loss(z));
    const Tensor gf = f.grad(), gz = z.grad();
    const bool equal = gf.data().size() == gz.data().size() &&
                       std::equal(gf.data().begin(), gf.data().end(), gz.data().begin());
    bool books_clean = true;
    for (const auto& cb : state.stages) {
      books_clean = books_clean && abs_sum(cb.entries.grad()) == 0.0;
    }
    double norm = 0.0;
    for (double v : gf.data()) norm += v * v;
    const bool forward_ok = [&] {
      const auto codes = rvq_quantize(state, FeatureSequence{f.value(), 50.0});
      const auto a = codes.reconstruction.frames.data(), b = q.value().data();
      return std::equal(a.begin(), a.end(), b.begin(), b.end());
    }();
    r.passed = equal && books_clean && forward_ok && norm > 0.0;
    r.detail = std::string(equal ? "gradient bit-identical to identity substitution" : "gradients differ") +
               (books_clean ? ", codebooks untouched" : ", codebooks received gradient") +
               (forward_ok ? "" : ", forward differs from rvq_quantize");
  });
}

PropertyResult verify_stop_gradient(std::uint64_t seed) {
  return timed("quant_loss.stop_gradient", [&](PropertyResult& r) {
    PrecisionScope scope(Precision::f64);
    Rng rng(seed);
    const std::size_t frames = 16, d = 8;
    std::vector<Codebook> books{Codebook::from_tensor(random_frames(rng, 8, d).frames, 0),
                                Codebook::from_tensor(random_frames(rng, 8, d).frames, 1)};
    const RvqState state(books);
    const DiffNode f = DiffNode::parameter(random_frames(rng, frames, d).frames);
    const IndexMatrix idx = rvq_quantize(state, FeatureSequence{f.value(), 50.0}).indices;

    auto grads = [&](double w_codebook, double w_commit) {
      f.zero_grad();
      for (const auto& cb : state.stages) cb.entries.zero_grad();
      const auto t = rvq_quantization_terms(f, state, idx);
      backward(add(scale(t.codebook, w_codebook), scale(t.commitment, w_commit)));
      double enc = 0.0, book = 0.0;
      enc += abs_sum(f.grad());
      for (const auto& cb : state.stages) {
        book += abs_sum(cb.entries.grad());
      }
      return std::pair{enc, book};
    };
    const auto [enc_cb_only, book_cb_only] = grads(1.0, 0.0);
    const auto [enc_commit_only, book_commit_only] = grads(0.0, 0.25);
    const bool ok = enc_cb_only == 0.0 && book_cb_only > 0.0 && book_commit_only == 0.0 && enc_commit_only > 0.0;
    r.passed = ok;
    r.detail = "commitment zeroed: |d enc| = " + fmt("%g", enc_cb_only) +
               "; codebook term zeroed: |d codebooks| = " + fmt("%g", book_commit_only);
  });
}

PropertyResult verify_rvq_monotone(std::uint64_t seed) {
  return timed("rvq.monotone_stages", [&](PropertyResult& r) {
    Rng rng(seed);
    const FeatureSequence batch = random_frames(rng, 1024, 8);
    const RvqState state = train_rvq(batch, 6, kCodebookSize, 10, seed);
    std::vector<double> mse;
    for (std::size_t k = 1; k <= 6; ++k) {
      mse.push_back(mean_squared_error(batch, rvq_quantize(state.prefix(k), batch).reconstruction));
    }
    r.passed = std::is_sorted(mse.begin(), mse.end(), std::greater<>());
    r.detail = "mse by stages:";
    for (double v : mse) r.detail += fmt(" %.4g", v);
  });
}

PropertyResult verify_kmeans_monotone(std::uint64_t seed) {
  return timed("kmeans.monotone", [&](PropertyResult& r) {
    r.passed = true;
    std::size_t runs = 0;
    for (std::uint64_t s = 0; s < 5; ++s) {
      Rng rng(derive_seed(seed, s));
      const auto res = kmeans(random_frames(rng, 400, 4), 16, 10, s);
      for (std::size_t i = 1; i < res.distortion.size(); ++i) {
        if (res.distortion[i] > res.distortion[i - 1]) r.passed = false;
      }
      ++runs;
    }
    r.detail = std::to_string(runs) + " runs x 10 Lloyd iterations";
  });
}

PropertyResult verify_kmeans_deterministic(std::uint64_t seed) {
  return timed("kmeans.deterministic", [&](PropertyResult& r) {
    Rng rng(seed);
    const FeatureSequence batch = random_frames(rng, 300, 6);
    const RvqState a = train_rvq(batch, 3, kCodebookSize, 10, seed);
    const RvqState b = train_rvq(batch, 3, kCodebookSize, 10, seed);
    bool same = true;
    for (std::size_t s = 0; s < 3; ++s) {
      const auto x = a.stages[s].table().data(), y = b.stages[s].table().data();
      same = same && std::equal(x.begin(), x.end(), y.begin(), y.end());
    }
    const bool idx_same = rvq_quantize(a, batch).indices == rvq_quantize(b, batch).indices;
    r.passed = same && idx_same;
    r.detail = std::string(same ? "codebooks bit-identical" : "codebooks differ") +
               (idx_same ? ", indices identical" : ", indices differ");
  });
}

PropertyResult verify_rvq_roundtrip(std::uint64_t seed) {
  return timed("rvq.dequantize_roundtrip", [&](PropertyResult& r) {
    Rng rng(seed);
    std::vector<Codebook> books;
    for (std::uint32_t s = 0; s < 3; ++s) books.push_back(Codebook::from_tensor(random_frames(rng, 64, 5).frames, s));
    const RvqState state(books);
    const FeatureSequence f = random_frames(rng, 1000, 5);
    const auto q = rvq_quantize(state, f);
    const auto back = rvq_dequantize(state, q.indices);
    const auto a = q.reconstruction.frames.data(), b = back.frames.data();
    const bool exact = std::equal(a.begin(), a.end(), b.begin(), b.end());
    const bool in_range = std::all_of(q.indices.values.begin(), q.indices.values.end(),
                                      [](std::uint32_t v) { return v < kCodebookSize; });
    r.passed = exact && in_range;
    r.detail = std::string("1000 frames, 3 stages: ") + (exact ? "bit-exact" : "mismatch") +
               (in_range ? ", indices < 64" : ", index out of range");
  });
}

PropertyResult verify_pack_byte_example() {
  return timed("bitstream.byte_example", [&](PropertyResult& r) {
    const std::vector<std::uint32_t> v{5, 63, 0};
    const auto bytes = pack_indices(v);
    const std::vector<std::uint8_t> want{0x17, 0xF0, 0x00};
    const bool packed = bytes == want;
    const bool unpacked = unpack_indices(want, 3) == v;
    r.passed = packed && unpacked;
    char buf[64];
    std::snprintf(buf, sizeof buf, "[5,63,0] -> %02X %02X %02X", bytes.size() > 0 ? bytes[0] : 0,
                  bytes.size() > 1 ? bytes[1] : 0, bytes.size() > 2 ? bytes[2] : 0);
    r.detail = buf;
    if (bytes.size() != 3) r.detail += " (" + std::to_string(bytes.size()) + " bytes)";
  });
}

PropertyResult verify_pack_roundtrip(std::size_t trials, std::uint64_t seed) {
  return timed("bitstream.roundtrip", [&](PropertyResult& r) {
    Rng rng(seed);
    const auto plans = supported_allocations();
    std::size_t bad = 0;
    std::string first;
    for (std::size_t t = 0; t < trials; ++t) {
      EncodedStream s;
      s.allocation = plans[rng.index(plans.size())];
      s.superframes = static_cast<std::uint32_t>(pick(rng, 1, 64));
      s.sample_count = static_cast<std::uint32_t>(pick(rng, (s.superframes - 1) * kSuperframeSamples + 1,
                                                       s.superframes * kSuperframeSamples));
      s.codebook_hash = rng.bits();
      s.t_indices = IndexMatrix(s.superframes, s.allocation.t_stages);
      s.c_indices = IndexMatrix(2 * s.superframes, s.allocation.c_stages);
      for (auto& v : s.t_indices.values) v = static_cast<std::uint32_t>(rng.index(kCodebookSize));
      for (auto& v : s.c_indices.values) v = static_cast<std::uint32_t>(rng.index(kCodebookSize));
      bool ok = false;
      try {
        const EncodedStream back = parse_stream(serialize_stream(s));
        ok = back.allocation == s.allocation && back.superframes == s.superframes &&
             back.sample_count == s.sample_count && back.codebook_hash == s.codebook_hash &&
             back.t_indices == s.t_indices && back.c_indices == s.c_indices;
        if (!ok && first.empty()) first = "trial " + std::to_string(t) + ": field mismatch";
      } catch (const std::exception& e) {
        if (first.empty()) first = "trial " + std::to_string(t) + ": " + e.what();
      }
      if (!ok) ++bad;
    }
    r.passed = bad == 0;
    r.detail = std::to_string(trials - bad) + "/" + std::to_string(trials) + " streams index-exact";
    if (!first.empty()) r.detail += "; first failure " + first;
  });
}

PropertyResult verify_allocation_table() {
  return timed("allocation.table", [&](PropertyResult& r) {
    struct Row {
      std::uint32_t bps;
      AllocationSplit split;
      std::size_t t, c;
    };
    const std::array<Row, 3> rows{{{600, AllocationSplit::even, 2, 1},
                                   {900, AllocationSplit::one_third_transformer, 2, 2},
                                   {1800, AllocationSplit::even, 6, 3}}};
    r.passed = true;
    for (const auto& row : rows) {
      const auto a = plan_allocation(row.bps, row.split);
      const bool ok = a.t_stages == row.t && a.c_stages == row.c;
      r.passed = r.passed && ok;
      r.detail += std::to_string(row.bps) + "/" + split_name(row.split) + "->(" + std::to_string(a.t_stages) +
                  "," + std::to_string(a.c_stages) + ") ";
    }
    bool rejected = false;
    try {
      plan_allocation(700, AllocationSplit::even);
    } catch (const UsageError&) {
      rejected = true;
    }
    r.passed = r.passed && rejected;
    r.detail += rejected ? "700 rejected" : "700 accepted";
  });
}

PropertyResult verify_exact_bitrate() {
  return timed("bitstream.exact_bitrate", [&](PropertyResult& r) {
    r.passed = true;
    std::size_t checked = 0;
    for (const auto& a : supported_allocations()) {
      for (std::uint32_t segments : {1u, 3u, 10u}) {
        EncodedStream s;
        s.allocation = a;
        s.superframes = segments * static_cast<std::uint32_t>(kSegmentSamples / kSuperframeSamples);
        const std::uint64_t samples = std::uint64_t{s.superframes} * kSuperframeSamples;
        // Exact rational check: bits / (samples / rate) == bps.
        const bool exact = std::uint64_t{s.payload_bits()} * kSampleRate == std::uint64_t{a.total_bps} * samples;
        const double measured =
            measured_bitrate(s, static_cast<double>(samples) / static_cast<double>(kSampleRate));
        const bool close = std::fabs(measured - a.total_bps) <= 1e-9 * a.total_bps;
        if (!exact || !close || a.payload_bps() != a.total_bps) {
          r.passed = false;
          r.detail += std::to_string(a.total_bps) + "(" + std::to_string(a.t_stages) + "," +
                      std::to_string(a.c_stages) + ")" + fmt(" measured %.12g; ", measured);
        }
        ++checked;
      }
    }
    r.detail = std::to_string(checked) + " plan/length pairs" + (r.passed ? ", all exact" : "; " + r.detail);
  });
}

PropertyResult verify_hash_mismatch(std::uint64_t seed) {
  return timed("bitstream.hash_mismatch", [&](PropertyResult& r) {
    PrecisionScope scope(Precision::f64);
    const CodecModel a(ModelConfig{2, 1, seed});
    const CodecModel b(ModelConfig{2, 1, seed + 1});
    Rng rng(seed);
    Waveform x;
    x.samples.resize(kSegmentSamples);
    for (double& v : x.samples) v = rng.uniform(-0.3, 0.3);
    Tensor emb({kSegmentSamples / kEmbeddingHop, kEmbeddingDim});
    for (double& v : emb.data()) v = rng.uniform(-1, 1);
    const auto stream = encode_waveform(a, x, emb, plan_allocation(600, AllocationSplit::even));
    const auto bytes = serialize_stream(stream);
    bool rejected = false;
    std::string msg;
    try {
      decode_stream(b, parse_stream(bytes));
    } catch (const DataError& e) {
      rejected = true;
      msg = e.what();
    }
    bool magic_rejected = false;
    auto corrupt = bytes;
    corrupt[0] ^= 0x01;
    try {
      parse_stream(corrupt);
    } catch (const DataError&) {
      magic_rejected = true;
    }
    const auto same = decode_stream(a, parse_stream(bytes));
    r.passed = rejected && magic_rejected && same.samples.size() == x.samples.size();
    r.detail = rejected ? msg : "foreign codebooks accepted";
    if (!magic_rejected) r.detail += "; corrupted magic accepted";
  });
}

PropertyResult verify_shape_identity(std::uint64_t seed) {
  return timed("codec.shape_identity", [&](PropertyResult& r) {
    const CodecModel model(ModelConfig{2, 1, seed});
    r.passed = true;
    for (std::size_t segments : {1, 2}) {
      const std::size_t n = segments * kSegmentSamples;
      Rng rng(seed + segments);
      Tensor x({n});
      for (double& v : x.data()) v = rng.uniform(-0.3, 0.3);
      Tensor emb({n / kEmbeddingHop, kEmbeddingDim});
      for (double& v : emb.data()) v = rng.uniform(-1, 1);
      const auto out = run_codec(model, DiffNode::constant(x), DiffNode::constant(emb));
      const bool ok = out.waveform.size() == n && out.c_features.shape()[0] == n / kHopSamples &&
                      out.t_features.shape()[0] == n / kEmbeddingHop;
      r.passed = r.passed && ok;
      r.detail += std::to_string(n) + " -> " + std::to_string(out.waveform.size()) + " samples; ";
    }
    r.detail.pop_back();
    r.detail.pop_back();
  });
}

PropertyResult verify_loss_values() {
  return timed("losses.hand_values", [&](PropertyResult& r) {
    PrecisionScope scope(Precision::f64);
    auto c = [](std::vector<double> v) {
      const std::size_t n = v.size();
      return DiffNode::constant(Tensor({n}, std::move(v)));
    };
    auto outs = [&](std::vector<std::vector<double>> logits) {
      std::array<DiscriminatorOutput, kDiscriminatorCount> o;
      for (std::size_t k = 0; k < kDiscriminatorCount; ++k) {
        o[k].logits = c(logits[k]);
        o[k].feature_maps = {o[k].logits};
      }
      return o;
    };
    struct Check {
      const char* what;
      double got, want;
    };
    std::vector<Check> checks;
    checks.push_back({"adv_g", adv_generator_loss(outs({{0.5, 2.0}, {1.0}, {3.0}, {1.5, 1.0}})).value().item(), 0.0625});
    checks.push_back({"adv_d zero logits", adv_discriminator_loss(outs({{0}, {0}, {0}, {0}}), outs({{0}, {0}, {0}, {0}})).value().item(), 2.0});
    checks.push_back({"adv_d mixed", adv_discriminator_loss(outs({{2}, {1}, {1}, {1}}), outs({{0.5}, {-1}, {-1}, {-1}})).value().item(), 0.375});
    {
      auto real = outs({{1}, {1}, {1}, {1}}), fake = outs({{1}, {1}, {1}, {1}});
      real[0].feature_maps = {c({1, 2})};
      fake[0].feature_maps = {c({2, 2})};
      checks.push_back({"feature matching", feature_matching_loss(real, fake).value().item(), 0.125});
    }
    checks.push_back({"quantization", quantization_loss(DiffNode::constant(Tensor({1, 2}, {1, 0})),
                                                        DiffNode::constant(Tensor({1, 2}, {0, 0})), 0.25)
                                          .value()
                                          .item(),
                      1.25});
    checks.push_back({"log weight s=64", log_term_weight(64), std::sqrt(32.0)});
    checks.push_back({"total", total_generator_loss({c({1}), c({0.01}), c({2}), c({5})}, LossWeights{}).value().item(), 6.0});
    r.passed = true;
    for (const auto& ch : checks) {
      const bool ok = std::fabs(ch.got - ch.want) <= 1e-9;
      r.passed = r.passed && ok;
      if (!ok) r.detail += std::string(ch.what) + fmt(" = %.12g", ch.got) + fmt(" (want %.12g); ", ch.want);
    }
    if (r.passed) r.detail = std::to_string(checks.size()) + " hand-computed values within 1e-9";
  });
}

std::vector<PropertyResult> run_verification(const VerifyOptions& options, const PropertyCallback& on_result) {
  struct FaultScope {
    bool saved;
    explicit FaultScope(bool on) : saved(pack_fault_injection()) { set_pack_fault_injection(on); }
    ~FaultScope() { set_pack_fault_injection(saved); }
  } fault(options.inject_pack_fault);

  std::vector<PropertyResult> results;
  auto emit = [&](PropertyResult r) {
    if (on_result) on_result(r);
    results.push_back(std::move(r));
  };

  const auto t0 = std::chrono::steady_clock::now();
  const auto reports = run_gradient_suite(options.grad_instances, options.seed);
  const double grad_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  // Gradient time is shared across the five family properties.
  emit(grad_family("grad.elementwise", reports, {"elementwise"}, grad_seconds / 5));
  emit(grad_family("grad.reductions", reports, {"reduction"}, grad_seconds / 5));
  emit(grad_family("grad.linear_conv", reports, {"linear"}, grad_seconds / 5));
  emit(grad_family("grad.spectral", reports, {"spectral"}, grad_seconds / 5));
  emit(grad_family("grad.losses", reports, {"loss"}, grad_seconds / 5));
  emit(verify_straight_through(derive_seed(options.seed, 101)));
  emit(verify_stop_gradient(derive_seed(options.seed, 102)));
  emit(verify_rvq_monotone(derive_seed(options.seed, 103)));
  emit(verify_kmeans_monotone(derive_seed(options.seed, 104)));
  emit(verify_kmeans_deterministic(derive_seed(options.seed, 105)));
  emit(verify_rvq_roundtrip(derive_seed(options.seed, 106)));
  emit(verify_pack_byte_example());
  emit(verify_pack_roundtrip(options.bitstream_trials, derive_seed(options.seed, 107)));
  emit(verify_allocation_table());
  emit(verify_exact_bitrate());
  emit(verify_hash_mismatch(derive_seed(options.seed, 108)));
  emit(verify_shape_identity(derive_seed(options.seed, 109)));
  emit(verify_loss_values());
  return results;
}

}  // namespace txc
