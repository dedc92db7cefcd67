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

#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "test_util.hpp"
#include "txcodec/errors.hpp"
#include "txcodec/losses.hpp"

using namespace txc;
using txc::testing::abs_sum;
using txc::testing::c;
using txc::testing::p;
using txc::testing::random_tensor;

namespace {

DiscriminatorOutput disc(std::vector<double> logits, std::vector<std::vector<double>> maps = {{0.0}}) {
  DiscriminatorOutput d;
  d.logits = c({logits.size()}, logits);
  for (auto& m : maps) d.feature_maps.push_back(c({m.size()}, m));
  return d;
}

std::vector<DiscriminatorOutput> four(DiscriminatorOutput first, const DiscriminatorOutput& rest) {
  return {std::move(first), rest, rest, rest};
}

DiffNode tone(std::size_t n, double freq, double amp) {
  Tensor t({n});
  for (std::size_t i = 0; i < n; ++i) t[i] = amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / 16000.0);
  return DiffNode::constant(t);
}

}  // namespace

TEST_CASE("generator hinge loss") {
  const auto perfect = disc({1.0, 3.0});
  CHECK(adv_generator_loss(four(perfect, perfect)).value().item() == 0.0);
  const auto zero = disc({0.0, 0.0, 0.0});
  CHECK(adv_generator_loss(four(zero, zero)).value().item() == doctest::Approx(1.0));
  CHECK(adv_generator_loss(four(disc({0.5, 2.0}), perfect)).value().item() == doctest::Approx(0.0625));
  const std::vector<DiscriminatorOutput> three{perfect, perfect, perfect};
  CHECK_THROWS_AS(adv_generator_loss(three), UsageError);
  CHECK_THROWS_AS(adv_generator_loss(four(disc({}), perfect)), UsageError);
}

TEST_CASE("discriminator hinge loss") {
  const auto real = disc({1.0, 4.0}), fake = disc({-1.0, -2.0});
  CHECK(adv_discriminator_loss(four(real, real), four(fake, fake)).value().item() == 0.0);
  const auto zero = disc({0.0});
  CHECK(adv_discriminator_loss(four(zero, zero), four(zero, zero)).value().item() == doctest::Approx(2.0));
  CHECK(adv_discriminator_loss(four(disc({2.0}), real), four(disc({0.5}), fake)).value().item() == doctest::Approx(0.375));

  // A fake that fools the generator loss costs the discriminator at least 2 per logit.
  const auto fooled = disc({1.0, 1.5});
  CHECK(adv_generator_loss(four(fooled, fooled)).value().item() == 0.0);
  CHECK(adv_discriminator_loss(four(real, real), four(fooled, fooled)).value().item() >= 2.0);
}

TEST_CASE("feature matching loss") {
  const auto a = disc({0.0}, {{1.0, 2.0}}), b = disc({0.0}, {{2.0, 2.0}});
  const auto same = disc({0.0}, {{5.0}});
  CHECK(feature_matching_loss(four(a, same), four(a, same)).value().item() == 0.0);
  CHECK(feature_matching_loss(four(a, same), four(b, same)).value().item() == doctest::Approx(0.125));
  CHECK(feature_matching_loss(four(b, same), four(a, same)).value().item() == doctest::Approx(0.125));

  Rng rng(1);
  std::vector<DiscriminatorOutput> r, f;
  for (int k = 0; k < 4; ++k) {
    DiscriminatorOutput x, y;
    x.logits = y.logits = c({1}, {0.0});
    for (int l = 0; l < 3; ++l) {
      x.feature_maps.push_back(DiffNode::constant(random_tensor(rng, {2, 5})));
      y.feature_maps.push_back(DiffNode::constant(random_tensor(rng, {2, 5})));
    }
    r.push_back(x);
    f.push_back(y);
  }
  CHECK(feature_matching_loss(r, f).value().item() == feature_matching_loss(f, r).value().item());

  const auto wide = disc({0.0}, {{1.0, 2.0, 3.0}});
  CHECK_THROWS_AS(feature_matching_loss(four(a, same), four(wide, same)), UsageError);
  const auto deep = disc({0.0}, {{1.0, 2.0}, {1.0}});
  CHECK_THROWS_AS(feature_matching_loss(four(a, same), four(deep, same)), UsageError);
}

TEST_CASE("reconstruction loss") {
  CHECK(log_term_weight(64) == doctest::Approx(std::sqrt(32.0)));
  CHECK(log_term_weight(64) == doctest::Approx(5.6569).epsilon(1e-4));
  CHECK(reconstruction_scales() == std::array<std::size_t, 6>{64, 128, 256, 512, 1024, 2048});

  const DiffNode x = tone(4096, 440.0, 0.5);
  CHECK(reconstruction_loss(x, x).value().item() == 0.0);
  const DiffNode silence = DiffNode::constant(Tensor({4096}));
  const double l = reconstruction_loss(x, silence).value().item();
  CHECK(l > 0.0);
  CHECK(std::isfinite(l));
  CHECK_THROWS_AS(reconstruction_loss(tone(2047, 440, 0.5), tone(2047, 440, 0.5)), UsageError);
  CHECK_THROWS_AS(reconstruction_loss(x, tone(4000, 440, 0.5)), UsageError);

  // Mel terms recomputed from the signal module.
  Waveform wx, wy;
  wx.samples = x.value().vec();
  wy.samples = tone(4096, 300.0, 0.3).value().vec();
  double want = 0.0;
  for (std::size_t s : reconstruction_scales()) {
    const auto mx = mel_spectrogram(wx, s), my = mel_spectrogram(wy, s);
    for (std::size_t t = 0; t < mx.count(); ++t) {
      double l2 = 0.0;
      for (std::size_t m = 0; m < mx.dim(); ++m) {
        want += std::fabs(mx.frames.at(t, m) - my.frames.at(t, m));
        l2 += std::pow(std::log(std::max(mx.frames.at(t, m), kLogMelFloor)) -
                        std::log(std::max(my.frames.at(t, m), kLogMelFloor)), 2);
      }
      want += std::sqrt(static_cast<double>(s) / 2.0) * std::sqrt(l2);
    }
  }
  const DiffNode y = DiffNode::constant(Tensor({4096}, wy.samples));
  CHECK(reconstruction_loss(x, y).value().item() == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("quantization loss values and stop-gradient routing") {
  CHECK(quantization_loss(c({1, 2}, {1, 0}), c({1, 2}, {1, 0}), 0.25).value().item() == 0.0);
  CHECK(quantization_loss(c({1, 2}, {1, 0}), c({1, 2}, {0, 0}), 0.25).value().item() == doctest::Approx(1.25));

  Rng rng(3);
  const Tensor ev = random_tensor(rng, {1, 4}), qv = random_tensor(rng, {1, 4});
  const DiffNode enc = DiffNode::parameter(ev), e = DiffNode::parameter(qv);
  backward(quantization_loss(enc, e, 0.25));
  const Tensor ge = e.grad(), genc = enc.grad();
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(ge[i] == doctest::Approx(2.0 * (qv[i] - ev[i])).epsilon(1e-14));
    CHECK(genc[i] == doctest::Approx(2.0 * 0.25 * (ev[i] - qv[i])).epsilon(1e-14));
  }

  // Dropping one term zeroes exactly one side's gradient.
  enc.zero_grad();
  e.zero_grad();
  backward(quantization_terms(enc, e).codebook);
  CHECK(abs_sum(enc.grad()) == 0.0);
  CHECK(abs_sum(e.grad()) > 0.0);
  enc.zero_grad();
  e.zero_grad();
  backward(quantization_terms(enc, e).commitment);
  CHECK(abs_sum(enc.grad()) > 0.0);
  CHECK(abs_sum(e.grad()) == 0.0);

  // Frames are averaged.
  const DiffNode two_enc = c({2, 2}, {1, 0, 1, 0}), two_e = c({2, 2}, {0, 0, 0, 0});
  CHECK(quantization_loss(two_enc, two_e, 0.25).value().item() == doctest::Approx(1.25));
  CHECK_THROWS_AS(quantization_loss(c({1, 2}, {1, 0}), c({1, 3}, {0, 0, 0}), 0.25), UsageError);
}

TEST_CASE("cascade quantization terms reach each codebook only through its own term") {
  Rng rng(5);
  const RvqState state({Codebook::from_tensor(random_tensor(rng, {4, 3}), 0),
                        Codebook::from_tensor(random_tensor(rng, {4, 3}, -0.3, 0.3), 1)});
  const DiffNode f = DiffNode::parameter(random_tensor(rng, {6, 3}));
  const auto codes = rvq_quantize(state, FeatureSequence{f.value(), 50.0});
  const auto terms = rvq_quantization_terms(f, state, codes.indices);
  backward(terms.commitment);
  for (const auto& cb : state.stages) CHECK(abs_sum(cb.entries.grad()) == 0.0);
  CHECK(abs_sum(f.grad()) > 0.0);
  f.zero_grad();
  backward(terms.codebook);
  CHECK(abs_sum(f.grad()) == 0.0);
  for (const auto& cb : state.stages) CHECK(abs_sum(cb.entries.grad()) > 0.0);
}

TEST_CASE("total generator loss") {
  const GeneratorLossParts parts{c({1}, {1.0}), c({1}, {0.01}), c({1}, {2.0}), c({1}, {5.0})};
  CHECK(total_generator_loss(parts, LossWeights{}).value().item() == doctest::Approx(6.0));
  const GeneratorLossParts zero{c({1}, {0.0}), c({1}, {0.0}), c({1}, {0.0}), c({1}, {0.0})};
  CHECK(total_generator_loss(zero, LossWeights{}).value().item() == 0.0);

  const DiffNode a = p({1}, {0.3}), b = p({1}, {-0.7});
  const GeneratorLossParts dep{square(a), mul(a, b), square(b), a};
  backward(total_generator_loss(dep, LossWeights{}));
  CHECK(a.grad().item() == doctest::Approx(2 * 0.3 + 100.0 * -0.7 + 0.4));
  CHECK(b.grad().item() == doctest::Approx(100.0 * 0.3 + 2 * -0.7));
}
