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

#include <cmath>
#include <limits>

#include "doctest.h"
#include "test_util.hpp"
#include "txcodec/errors.hpp"
#include "txcodec/gradcheck.hpp"
#include "txcodec/tensor.hpp"

using namespace txc;
using txc::testing::c;
using txc::testing::p;
using txc::testing::random_tensor;

namespace {

// Direct loops over the cross-correlation definition.
Tensor naive_conv1d(const Tensor& x, const Tensor& k, std::size_t stride, std::size_t pad) {
  const std::size_t ci = x.shape()[0], t = x.shape()[1], co = k.shape()[0], kk = k.shape()[2];
  const std::size_t out = (t + 2 * pad - kk) / stride + 1;
  Tensor y({co, out});
  for (std::size_t o = 0; o < co; ++o) {
    for (std::size_t j = 0; j < out; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < ci; ++i) {
        for (std::size_t m = 0; m < kk; ++m) {
          const long pos = static_cast<long>(j * stride + m) - static_cast<long>(pad);
          if (pos < 0 || pos >= static_cast<long>(t)) continue;
          acc += k[(o * ci + i) * kk + m] * x[i * t + static_cast<std::size_t>(pos)];
        }
      }
      y[o * out + j] = acc;
    }
  }
  return y;
}

Tensor naive_conv2d(const Tensor& x, const Tensor& k, const Conv2dGeometry& g) {
  const std::size_t ci = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const std::size_t co = k.shape()[0], kh = k.shape()[2], kw = k.shape()[3];
  const std::size_t oh = (h + 2 * g.pad_h - kh) / g.stride_h + 1, ow = (w + 2 * g.pad_w - kw) / g.stride_w + 1;
  Tensor y({co, oh, ow});
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t q = 0; q < ow; ++q) {
        double acc = 0.0;
        for (std::size_t i = 0; i < ci; ++i)
          for (std::size_t a = 0; a < kh; ++a)
            for (std::size_t b = 0; b < kw; ++b) {
              const long rr = static_cast<long>(r * g.stride_h + a) - static_cast<long>(g.pad_h);
              const long qq = static_cast<long>(q * g.stride_w + b) - static_cast<long>(g.pad_w);
              if (rr < 0 || qq < 0 || rr >= static_cast<long>(h) || qq >= static_cast<long>(w)) continue;
              acc += k[((o * ci + i) * kh + a) * kw + b] * x[(i * h + static_cast<std::size_t>(rr)) * w + static_cast<std::size_t>(qq)];
            }
        y[(o * oh + r) * ow + q] = acc;
      }
  return y;
}

}  // namespace

TEST_CASE("linear hand examples") {
  const auto y = linear(c({1, 2}, {1, 2}), c({2, 2}, {1, 0, 0, 1}), c({2}, {0, 0}));
  CHECK(y.value().vec() == std::vector<double>{1, 2});
  const auto z = linear(c({1, 2}, {1, 1}), c({2, 1}, {2, 3}), c({1}, {1}));
  CHECK(z.value().item() == 6.0);
  CHECK_THROWS_AS(linear(c({1, 3}, {1, 1, 1}), c({2, 1}, {2, 3}), c({1}, {1})), UsageError);
}

TEST_CASE("linear gradient wrt w matches finite differences") {
  PrecisionScope scope(Precision::f64);
  Rng rng(3);
  const Tensor x = random_tensor(rng, {4, 3}), b = random_tensor(rng, {5});
  const auto r = check_gradients(
      [&](std::span<const DiffNode> in) { return sum(linear(DiffNode::constant(x), in[0], DiffNode::constant(b))); },
      {random_tensor(rng, {3, 5})});
  CHECK(r.max_rel_error <= 1e-6);
}

TEST_CASE("conv1d hand examples") {
  CHECK(conv1d(c({1, 3}, {1, 2, 3}), c({1, 1, 1}, {1}), 1, 0).value().vec() == std::vector<double>{1, 2, 3});
  CHECK(conv1d(c({1, 4}, {1, 2, 3, 4}), c({1, 1, 2}, {1, 1}), 2, 0).value().vec() == std::vector<double>{3, 7});
  CHECK_THROWS_AS(conv1d(c({1, 2}, {1, 2}), c({1, 1, 5}, {1, 1, 1, 1, 1}), 1, 1), UsageError);
}

TEST_CASE("conv1d matches direct loops on both internal paths") {
  PrecisionScope scope(Precision::f64);
  Rng rng(11);
  struct Geo {
    std::size_t ci, co, k, stride, pad, t;
  };
  // Small channel products take the direct path, larger ones the GEMM path.
  for (const Geo g : {Geo{1, 1, 7, 1, 3, 40}, Geo{2, 8, 3, 1, 1, 33}, Geo{4, 6, 5, 3, 2, 50}, Geo{16, 32, 8, 4, 2, 97},
                      Geo{1, 4, 15, 1, 7, 200}}) {
    const Tensor x = random_tensor(rng, {g.ci, g.t}), k = random_tensor(rng, {g.co, g.ci, g.k});
    const Tensor y = conv1d(DiffNode::constant(x), DiffNode::constant(k), g.stride, g.pad).value();
    const Tensor want = naive_conv1d(x, k, g.stride, g.pad);
    REQUIRE(y.shape() == want.shape());
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv1d_transposed is the adjoint of conv1d") {
  PrecisionScope scope(Precision::f64);
  Rng rng(5);
  for (std::size_t stride : {1, 2, 5, 8}) {
    const std::size_t ci = 3, co = 4, k = stride + 2, t = 6;
    const Tensor kern = random_tensor(rng, {co, ci, k});
    const Tensor y = random_tensor(rng, {co, t});
    const Tensor up = conv1d_transposed(DiffNode::constant(y), DiffNode::constant(kern), stride).value();
    REQUIRE(up.shape() == Shape{ci, (t - 1) * stride + k});
    const Tensor x = random_tensor(rng, up.shape());
    const Tensor down = conv1d(DiffNode::constant(x), DiffNode::constant(kern), stride, 0).value();
    REQUIRE(down.shape() == y.shape());
    CHECK(std::fabs(txc::testing::dot(down, y) - txc::testing::dot(x, up)) <= 1e-10);
  }
  const auto id = conv1d_transposed(c({1, 3}, {1, 2, 3}), c({1, 1, 1}, {1}), 1);
  CHECK(id.value().vec() == std::vector<double>{1, 2, 3});
}

TEST_CASE("conv2d matches direct loops") {
  PrecisionScope scope(Precision::f64);
  Rng rng(8);
  Conv2dGeometry g;
  g.stride_h = 2;
  g.stride_w = 1;
  g.pad_h = 1;
  g.pad_w = 2;
  const Tensor x = random_tensor(rng, {2, 9, 7}), k = random_tensor(rng, {3, 2, 3, 4}), b = random_tensor(rng, {3});
  const Tensor y = conv2d(DiffNode::constant(x), DiffNode::constant(k), DiffNode::constant(b), g).value();
  Tensor want = naive_conv2d(x, k, g);
  const std::size_t plane = want.size() / 3;
  for (std::size_t i = 0; i < want.size(); ++i) want[i] += b[i / plane];
  REQUIRE(y.shape() == want.shape());
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("conv gradients match finite differences") {
  PrecisionScope scope(Precision::f64);
  Rng rng(21);
  const auto r1 = check_gradients(
      [](std::span<const DiffNode> in) { return sum(square(conv1d(in[0], in[1], in[2], 2, 1))); },
      {random_tensor(rng, {3, 12}), random_tensor(rng, {6, 3, 4}), random_tensor(rng, {6})});
  CHECK(r1.max_rel_error <= 1e-6);
  const auto r2 = check_gradients(
      [](std::span<const DiffNode> in) { return sum(square(conv1d_transposed(in[0], in[1], in[2], 3))); },
      {random_tensor(rng, {2, 5}), random_tensor(rng, {2, 3, 4}), random_tensor(rng, {3})});
  CHECK(r2.max_rel_error <= 1e-6);
}

TEST_CASE("elementwise and reduction values") {
  CHECK(l1_norm(c({2}, {3, -4})).value().item() == 7.0);
  CHECK(l2_norm(c({2}, {3, 4})).value().item() == 5.0);
  CHECK(mean(c({4}, {1, 2, 3, 6})).value().item() == 3.0);
  CHECK(leaky_relu(c({2}, {-1, 2}), 0.2).value().vec() == std::vector<double>{-0.2, 2});
  CHECK(elu(c({1}, {-1})).value().item() == doctest::Approx(std::expm1(-1.0)));
  CHECK(row_l2_norms(c({2, 2}, {3, 4, 0, 2})).value().vec() == std::vector<double>{5, 2});
  CHECK(l1_distance(c({3}, {1, 2, 3}), c({3}, {3, 2, 0})).value().item() == 5.0);
  CHECK_THROWS_AS(log(c({2}, {1, 0})), UsageError);
  CHECK_THROWS_AS(sqrt(c({1}, {-1})), UsageError);
}

TEST_CASE("mean of elu gradient matches finite differences") {
  PrecisionScope scope(Precision::f64);
  Rng rng(9);
  Tensor x({3, 5});
  for (double& v : x.data()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.05, 2.0);
  const auto r = check_gradients([](std::span<const DiffNode> in) { return mean(elu(in[0])); }, {x});
  CHECK(r.max_rel_error <= 1e-6);
}

TEST_CASE("row_log_distance equals the composed chain") {
  PrecisionScope scope(Precision::f64);
  Rng rng(4);
  const double floor = 0.1;
  Tensor a = random_tensor(rng, {3, 5}, 0.01, 2.0), b = random_tensor(rng, {3, 5}, 0.01, 2.0);
  a[0] = 0.1;  // exactly at the floor
  const DiffNode pa1 = DiffNode::parameter(a), pb1 = DiffNode::parameter(b);
  const DiffNode pa2 = DiffNode::parameter(a), pb2 = DiffNode::parameter(b);
  const DiffNode fused = row_log_distance(pa1, pb1, floor);
  const DiffNode chain = row_l2_norms(sub(log(clamp_min(pa2, floor)), log(clamp_min(pb2, floor))));
  for (std::size_t i = 0; i < 3; ++i) CHECK(fused.value()[i] == doctest::Approx(chain.value()[i]).epsilon(1e-14));
  backward(sum(fused));
  backward(sum(chain));
  const Tensor ga1 = pa1.grad(), ga2 = pa2.grad(), gb1 = pb1.grad(), gb2 = pb2.grad();
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(ga1[i] == doctest::Approx(ga2[i]).epsilon(1e-12));
    CHECK(gb1[i] == doctest::Approx(gb2[i]).epsilon(1e-12));
  }
}

TEST_CASE("backward examples") {
  const DiffNode x = p({3}, {1, 2, 3});
  backward(sum(x));
  CHECK(x.grad().vec() == std::vector<double>{1, 1, 1});

  const DiffNode y = p({2}, {1, 2});
  backward(sum(mul(y, y)));
  CHECK(y.grad().vec() == std::vector<double>{2, 4});

  // Repeated calls accumulate.
  backward(sum(mul(y, y)));
  CHECK(y.grad().vec() == std::vector<double>{4, 8});
  y.zero_grad();
  CHECK(y.grad().vec() == std::vector<double>{0, 0});

  CHECK_THROWS_AS(backward(x), UsageError);
}

TEST_CASE("stop_gradient forward is identical and backward is zero") {
  const DiffNode x = p({3}, {0.1, -2.5, 7.0});
  const DiffNode s = stop_gradient(x);
  CHECK(s.value() == x.value());
  const DiffNode other = p({3}, {1, 1, 1});
  backward(sum(mul(s, other)));
  CHECK(x.grad().vec() == std::vector<double>{0, 0, 0});
  CHECK(other.grad().vec() == x.value().vec());
}

TEST_CASE("unreachable nodes keep a zero gradient") {
  const DiffNode a = p({2}, {1, 2});
  const DiffNode b = p({2}, {3, 4});
  const DiffNode unused = square(b);
  backward(sum(square(a)));
  CHECK(b.grad().vec() == std::vector<double>{0, 0});
  CHECK(unused.grad().vec() == std::vector<double>{0, 0});
}

TEST_CASE("structural ops") {
  const DiffNode m = c({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(transpose(m).value().vec() == std::vector<double>{1, 4, 2, 5, 3, 6});
  CHECK(slice(m, 1, 1, 3).value().vec() == std::vector<double>{2, 3, 5, 6});
  CHECK(repeat_rows(c({2, 1}, {7, 8}), 2).value().vec() == std::vector<double>{7, 7, 8, 8});
  const std::array<DiffNode, 2> parts{m, c({2, 1}, {9, 9})};
  CHECK(concat(parts, 1).value().vec() == std::vector<double>{1, 2, 3, 9, 4, 5, 6, 9});
  const std::vector<std::size_t> rows{1, 1, 0};
  CHECK(gather_rows(m, rows).value().vec() == std::vector<double>{4, 5, 6, 4, 5, 6, 1, 2, 3});
  CHECK(avg_pool1d(c({1, 5}, {1, 3, 5, 7, 100}), 2).value().vec() == std::vector<double>{2, 6});
}

TEST_CASE("gather_rows scatters gradient into the table") {
  const DiffNode table = p({3, 2}, {0, 0, 0, 0, 0, 0});
  const std::vector<std::size_t> rows{2, 0, 2};
  backward(sum(gather_rows(table, rows)));
  CHECK(table.grad().vec() == std::vector<double>{1, 1, 0, 0, 2, 2});
}

TEST_CASE("non-finite forward values are rejected") {
  const double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(scale(c({1}, {1e308}), 10.0), NumericError);
  CHECK_THROWS_AS(add(c({1}, {inf}), c({1}, {1})), NumericError);
}

TEST_CASE("f32 precision rounds every op result") {
  const DiffNode x = c({1}, {1.0 / 3.0});
  {
    PrecisionScope scope(Precision::f32);
    CHECK(scale(x, 1.0).value().item() == static_cast<double>(static_cast<float>(1.0 / 3.0)));
  }
  PrecisionScope scope(Precision::f64);
  CHECK(scale(x, 1.0).value().item() == 1.0 / 3.0);
}

TEST_CASE("tensor shape contract") {
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), UsageError);
  CHECK(Tensor({2, 3}).size() == 6);
  CHECK_THROWS_AS(reshape(c({2, 2}, {1, 2, 3, 4}), {3}), UsageError);
}
