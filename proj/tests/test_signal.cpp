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
#include <complex>
#include <numbers>

#include "doctest.h"
#include "test_util.hpp"
#include "txcodec/errors.hpp"
#include "txcodec/signal.hpp"

using namespace txc;
using txc::testing::TempDir;

namespace {

Waveform random_wave(Rng& rng, std::size_t n, double amp = 0.5) {
  Waveform w;
  w.samples.resize(n);
  for (double& v : w.samples) v = rng.uniform(-amp, amp);
  return w;
}

// O(N^2) DFT of one Hann-windowed frame.
std::vector<std::complex<double>> brute_dft(std::span<const double> frame, bool hann) {
  const std::size_t n = frame.size();
  const auto w = hann_window(n);
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(n);
      acc += (hann ? w[t] : 1.0) * frame[t] * std::polar(1.0, ang);
    }
    out[k] = acc;
  }
  return out;
}

}  // namespace

TEST_CASE("mel scale conversions") {
  CHECK(hz_to_mel(0.0) == 0.0);
  CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
  CHECK(mel_to_hz(hz_to_mel(1234.5)) == doctest::Approx(1234.5).epsilon(1e-12));
}

TEST_CASE("periodic Hann window") {
  const auto w = hann_window(64);
  CHECK(w[0] == 0.0);
  CHECK(w[32] == doctest::Approx(1.0));
  CHECK(w[16] == doctest::Approx(0.5));
  CHECK(w[1] == doctest::Approx(w[63]));
}

TEST_CASE("stft frame count and errors") {
  CHECK(stft_frame_count(20480, 2048, 512) == 37);
  CHECK(stft_frame_count(64, 64, 16) == 1);
  CHECK_THROWS_AS(stft_frame_count(63, 64, 16), UsageError);
  Waveform x;
  x.samples.assign(200, 0.0);
  CHECK_THROWS_AS(stft(x, 100, 25), UsageError);
}

TEST_CASE("stft of zeros is zero") {
  Waveform x;
  x.samples.assign(512, 0.0);
  const auto s = stft(x, 128, 32);
  for (double v : s.re) CHECK(v == 0.0);
  for (double v : s.im) CHECK(v == 0.0);
}

TEST_CASE("impulse at the window center has a flat spectrum") {
  Waveform x;
  x.samples.assign(64, 0.0);
  x.samples[32] = 1.0;
  const auto s = stft(x, 64, 16);
  REQUIRE(s.frames == 1);
  const double w_center = hann_window(64)[32];
  for (std::size_t k = 0; k < s.bins; ++k) CHECK(std::hypot(s.re[k], s.im[k]) == doctest::Approx(w_center).epsilon(1e-12));
}

TEST_CASE("stft matches a brute-force DFT") {
  Rng rng(2);
  // Cosine at exact bin 5 plus noise; several frames.
  const std::size_t n = 128, hop = 32;
  Waveform x = random_wave(rng, 512, 0.1);
  for (std::size_t t = 0; t < x.samples.size(); ++t) {
    x.samples[t] += std::cos(2.0 * std::numbers::pi * 5.0 * static_cast<double>(t) / static_cast<double>(n));
  }
  const auto s = stft(x, n, hop);
  for (std::size_t f = 0; f < s.frames; ++f) {
    const auto want = brute_dft(std::span(x.samples).subspan(f * hop, n), true);
    for (std::size_t k = 0; k < s.bins; ++k) {
      CHECK(std::fabs(s.re[f * s.bins + k] - want[k].real()) <= 1e-8);
      CHECK(std::fabs(s.im[f * s.bins + k] - want[k].imag()) <= 1e-8);
    }
  }
}

TEST_CASE("stft satisfies Parseval per frame") {
  Rng rng(3);
  const Waveform x = random_wave(rng, 1024);
  const std::size_t n = 256, hop = 64;
  const auto s = stft(x, n, hop);
  const auto w = hann_window(n);
  for (std::size_t f = 0; f < s.frames; ++f) {
    double time = 0.0;
    for (std::size_t t = 0; t < n; ++t) time += std::pow(w[t] * x.samples[f * hop + t], 2);
    double freq = 0.0;
    for (std::size_t k = 0; k < s.bins; ++k) {
      const double m = std::pow(s.re[f * s.bins + k], 2) + std::pow(s.im[f * s.bins + k], 2);
      freq += (k == 0 || k == n / 2) ? m : 2.0 * m;
    }
    CHECK(freq / static_cast<double>(n) == doctest::Approx(time).epsilon(1e-8));
  }
}

TEST_CASE("stft is linear") {
  Rng rng(4);
  const Waveform x = random_wave(rng, 700), y = random_wave(rng, 700);
  Waveform z;
  for (std::size_t i = 0; i < 700; ++i) z.samples.push_back(2.0 * x.samples[i] - 0.5 * y.samples[i]);
  const auto sx = stft(x, 64, 16), sy = stft(y, 64, 16), sz = stft(z, 64, 16);
  for (std::size_t i = 0; i < sz.re.size(); ++i) {
    CHECK(std::fabs(sz.re[i] - (2.0 * sx.re[i] - 0.5 * sy.re[i])) <= 1e-8);
    CHECK(std::fabs(sz.im[i] - (2.0 * sx.im[i] - 0.5 * sy.im[i])) <= 1e-8);
  }
}

TEST_CASE("mel filterbank shape") {
  for (std::size_t n : {64, 256, 2048}) {
    const auto& fb = mel_filterbank(n);
    REQUIRE(fb.matrix.shape() == Shape{kMelBins, n / 2 + 1});
    for (std::size_t m = 0; m < kMelBins; ++m) {
      double row = 0.0;
      std::size_t peak = 0;
      for (std::size_t k = 0; k <= n / 2; ++k) {
        const double v = fb.matrix.at(m, k);
        CHECK(v >= 0.0);
        row += v;
        if (v > fb.matrix.at(m, peak)) peak = k;
      }
      CHECK(row > 0.0);
      // Single peak: non-decreasing up to it, non-increasing after.
      for (std::size_t k = 1; k <= peak; ++k) CHECK(fb.matrix.at(m, k) >= fb.matrix.at(m, k - 1));
      for (std::size_t k = peak + 1; k <= n / 2; ++k) CHECK(fb.matrix.at(m, k) <= fb.matrix.at(m, k - 1));
      for (std::size_t k = 0; k <= n / 2; ++k) {
        if (k < fb.band_begin[m] || k >= fb.band_end[m]) CHECK(fb.matrix.at(m, k) == 0.0);
      }
    }
  }
  // At 2048 points every filter spans several bins and neighbours overlap.
  const auto& fb = mel_filterbank(2048);
  for (std::size_t m = 0; m + 1 < kMelBins; ++m) {
    bool overlap = false;
    for (std::size_t k = 0; k <= 1024; ++k) overlap = overlap || (fb.matrix.at(m, k) > 0 && fb.matrix.at(m + 1, k) > 0);
    CHECK(overlap);
  }
}

TEST_CASE("mel spectrogram examples") {
  Waveform zero;
  zero.samples.assign(2048, 0.0);
  const auto silent = mel_spectrogram(zero, 256);
  for (double v : silent.frames.data()) CHECK(v == 0.0);

  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    Rng rng(100 + trial);
    const auto m = mel_spectrogram(random_wave(rng, 4096), 512);
    for (double v : m.frames.data()) CHECK(v > 0.0);
  }

  Rng rng(7);
  const Waveform x = random_wave(rng, 4096);
  Waveform x2 = x;
  for (double& v : x2.samples) v *= 2.0;
  const auto a = mel_spectrogram(x, 1024), b = mel_spectrogram(x2, 1024);
  CHECK(a.count() == stft_frame_count(4096, 1024, 256));
  CHECK(a.dim() == 64);
  for (std::size_t i = 0; i < a.frames.size(); ++i) CHECK(b.frames[i] == doctest::Approx(4.0 * a.frames[i]).epsilon(1e-6));
}

TEST_CASE("differentiable stft and mel power agree with the plain versions") {
  Rng rng(12);
  const Waveform x = random_wave(rng, 2500);
  const DiffNode xn = DiffNode::constant(Tensor({x.samples.size()}, x.samples));
  const auto s = stft(x, 256, 64);
  const Tensor sn = stft(xn, 256, 64).value();
  REQUIRE(sn.shape() == Shape{2, s.frames, s.bins});
  for (std::size_t i = 0; i < s.re.size(); ++i) {
    CHECK(sn[i] == doctest::Approx(s.re[i]).epsilon(1e-12));
    CHECK(sn[s.re.size() + i] == doctest::Approx(s.im[i]).epsilon(1e-12));
  }
  const auto m = mel_spectrogram(x, 256);
  const Tensor mn = mel_power(xn, 256).value();
  REQUIRE(mn.shape() == m.frames.shape());
  for (std::size_t i = 0; i < mn.size(); ++i) CHECK(mn[i] == doctest::Approx(m.frames[i]).epsilon(1e-10));
}

TEST_CASE("replicate_frames") {
  FeatureSequence f{Tensor({2, 1}, {1.5, -2.0}), 25.0};
  const auto r = replicate_frames(f, 2);
  CHECK(r.frames.vec() == std::vector<double>{1.5, 1.5, -2.0, -2.0});
  CHECK(r.frame_rate == 50.0);
  CHECK(replicate_frames(f, 1).frames == f.frames);
  FeatureSequence seg{Tensor({32, 64}), 25.0};
  CHECK(replicate_frames(seg, 2).count() == 64);
}

TEST_CASE("WAV round trip is sample-exact for 16-bit content") {
  TempDir dir("wav");
  Rng rng(1);
  Waveform x;
  for (int i = 0; i < 1000; ++i) x.samples.push_back(static_cast<double>(static_cast<int>(rng.index(65536)) - 32768) / 32768.0);
  write_wav(dir / "a.wav", x);
  const Waveform y = read_wav(dir / "a.wav");
  CHECK(y.sample_rate == 16000);
  CHECK(y.samples == x.samples);
  CHECK_THROWS_AS(read_wav(dir / "missing.wav"), DataError);
}
