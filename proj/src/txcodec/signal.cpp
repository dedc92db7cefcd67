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

#include "txcodec/signal.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "txcodec/errors.hpp"

namespace txc {

namespace {

void check_window(std::size_t n) {
  if (n < 64 || n > 2048 || !std::has_single_bit(n)) {
    throw UsageError("stft: window length must be a power of two in [64, 2048], got " +
                     std::to_string(n));
  }
}

// FFTW plans are created once per size under a lock; execution uses the
// new-array interface on per-call buffers, which FFTW documents as thread-safe.
struct FftPlans {
  fftw_plan forward = nullptr;   // r2c, n real -> n/2+1 complex
  fftw_plan backward = nullptr;  // c2r inverse (unnormalized), n/2+1 complex -> n real
  std::vector<double> window;
};

std::mutex g_plan_mutex;

const FftPlans& plans_for(std::size_t n) {
  static std::map<std::size_t, FftPlans> cache;
  std::lock_guard lock(g_plan_mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  const int ni = static_cast<int>(n);
  double* in = fftw_alloc_real(n);
  fftw_complex* spec = fftw_alloc_complex(n / 2 + 1);
  FftPlans p;
  p.forward = fftw_plan_dft_r2c_1d(ni, in, spec, FFTW_ESTIMATE);
  p.backward = fftw_plan_dft_c2r_1d(ni, spec, in, FFTW_ESTIMATE);
  p.window = hann_window(n);
  fftw_free(in);
  fftw_free(spec);
  return cache.emplace(n, p).first->second;
}

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};
using RealBuf = std::unique_ptr<double, FftwDeleter>;
using ComplexBuf = std::unique_ptr<fftw_complex, FftwDeleter>;

// Writes frames x bins real/imag planes of the windowed frames of x.
void stft_into(std::span<const double> x, std::size_t n, std::size_t hop, std::size_t frames,
               double* re, double* im) {
  const FftPlans& plans = plans_for(n);
  const auto& window = plans.window;
  const std::size_t bins = n / 2 + 1;
  RealBuf in(fftw_alloc_real(n));
  ComplexBuf out(fftw_alloc_complex(bins));
  for (std::size_t f = 0; f < frames; ++f) {
    const double* src = x.data() + f * hop;
    for (std::size_t i = 0; i < n; ++i) in.get()[i] = src[i] * window[i];
    fftw_execute_dft_r2c(plans.forward, in.get(), out.get());
    for (std::size_t k = 0; k < bins; ++k) {
      re[f * bins + k] = out.get()[k][0];
      im[f * bins + k] = out.get()[k][1];
    }
  }
}

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

std::size_t stft_frame_count(std::size_t length, std::size_t window_length, std::size_t hop) {
  if (hop == 0) throw UsageError("stft: hop must be >= 1");
  if (length < window_length) {
    throw UsageError("stft: signal of " + std::to_string(length) +
                     " samples is shorter than one window of " + std::to_string(window_length));
  }
  return (length - window_length) / hop + 1;
}

Spectrogram stft(const Waveform& x, std::size_t window_length, std::size_t hop) {
  check_window(window_length);
  Spectrogram s;
  s.window_length = window_length;
  s.hop = hop;
  s.frames = stft_frame_count(x.samples.size(), window_length, hop);
  s.bins = window_length / 2 + 1;
  s.re.resize(s.frames * s.bins);
  s.im.resize(s.frames * s.bins);
  stft_into(x.samples, window_length, hop, s.frames, s.re.data(), s.im.data());
  return s;
}

const MelFilterbank& mel_filterbank(std::size_t n_fft) {
  check_window(n_fft);
  static std::map<std::size_t, MelFilterbank> cache;
  static std::mutex mutex;
  std::lock_guard lock(mutex);
  if (auto it = cache.find(n_fft); it != cache.end()) return it->second;

  const std::size_t bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(kMelFMin), mel_hi = hz_to_mel(kMelFMax);
  std::vector<double> edges(kMelBins + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(kMelBins + 1));
  }
  const double bin_hz = static_cast<double>(kSampleRate) / static_cast<double>(n_fft);

  MelFilterbank fb;
  fb.n_fft = n_fft;
  fb.matrix = Tensor({kMelBins, bins});
  for (std::size_t m = 0; m < kMelBins; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    double mass = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      const double w = std::max(0.0, std::min((f - lo) / (center - lo), (hi - f) / (hi - center)));
      fb.matrix.at(m, k) = w;
      mass += w;
    }
    if (mass == 0.0) {
      const auto k = static_cast<std::size_t>(std::lround(center / bin_hz));
      fb.matrix.at(m, std::min(k, bins - 1)) = 1.0;
    }
  }
  fb.band_begin.assign(kMelBins, 0);
  fb.band_end.assign(kMelBins, 0);
  for (std::size_t m = 0; m < kMelBins; ++m) {
    std::size_t lo = bins, hi = 0;
    for (std::size_t k = 0; k < bins; ++k) {
      if (fb.matrix.at(m, k) != 0.0) {
        lo = std::min(lo, k);
        hi = k + 1;
      }
    }
    fb.band_begin[m] = std::min(lo, hi);
    fb.band_end[m] = hi;
  }
  return cache.emplace(n_fft, std::move(fb)).first->second;
}

FeatureSequence mel_spectrogram(const Waveform& x, std::size_t s) {
  const Spectrogram spec = stft(x, s, s / 4);
  const MelFilterbank& fb = mel_filterbank(s);
  FeatureSequence out;
  out.frame_rate = static_cast<double>(x.sample_rate) / static_cast<double>(s / 4);
  out.frames = Tensor({spec.frames, kMelBins});
  std::vector<double> power(spec.bins);
  for (std::size_t f = 0; f < spec.frames; ++f) {
    for (std::size_t k = 0; k < spec.bins; ++k) {
      const double re = spec.re[f * spec.bins + k], im = spec.im[f * spec.bins + k];
      power[k] = re * re + im * im;
    }
    for (std::size_t m = 0; m < kMelBins; ++m) {
      double acc = 0.0;
      for (std::size_t k = fb.band_begin[m]; k < fb.band_end[m]; ++k) acc += fb.matrix.at(m, k) * power[k];
      out.frames.at(f, m) = acc;
    }
  }
  return out;
}

FeatureSequence replicate_frames(const FeatureSequence& f, std::size_t factor) {
  if (factor < 1) throw UsageError("replicate_frames: factor must be >= 1");
  FeatureSequence out;
  out.frame_rate = f.frame_rate * static_cast<double>(factor);
  out.frames = Tensor({f.count() * factor, f.dim()});
  for (std::size_t r = 0; r < f.count(); ++r) {
    for (std::size_t k = 0; k < factor; ++k) {
      std::copy_n(f.row(r).begin(), f.dim(), out.frames.data().begin() + (r * factor + k) * f.dim());
    }
  }
  return out;
}

DiffNode stft(const DiffNode& x, std::size_t window_length, std::size_t hop) {
  check_window(window_length);
  if (!x.valid() || x.value().rank() != 1) throw UsageError("stft: expected a rank-1 waveform node");
  const std::size_t length = x.size();
  const std::size_t frames = stft_frame_count(length, window_length, hop);
  const std::size_t bins = window_length / 2 + 1;
  Tensor out({2, frames, bins});
  stft_into(x.value().data(), window_length, hop, frames, out.data().data(),
            out.data().data() + frames * bins);

  // d/dx[f*hop + n] = w[n] * Re(sum_k G_k e^{+j 2 pi k n / N}) over the half
  // spectrum k = 0..N/2. A c2r transform doubles the interior bins, so they
  // are halved going in.
  return DiffNode::make(
      std::move(out), {x},
      [=](const Tensor& g, const Tensor&, std::span<DiffNode> p) {
        if (!p[0].requires_grad()) return;
        const std::size_t n = window_length;
        const FftPlans& plans = plans_for(n);
        const auto& window = plans.window;
        ComplexBuf spec(fftw_alloc_complex(bins));
        RealBuf time(fftw_alloc_real(n));
        Tensor& gx = p[0].grad_buffer();
        const double* g_re = g.data().data();
        const double* g_im = g_re + frames * bins;
        for (std::size_t f = 0; f < frames; ++f) {
          for (std::size_t k = 0; k < bins; ++k) {
            const double h = (k == 0 || k == bins - 1) ? 1.0 : 0.5;
            spec.get()[k][0] = h * g_re[f * bins + k];
            spec.get()[k][1] = h * g_im[f * bins + k];
          }
          fftw_execute_dft_c2r(plans.backward, spec.get(), time.get());
          double* dst = gx.data().data() + f * hop;
          for (std::size_t i = 0; i < n; ++i) dst[i] += window[i] * time.get()[i];
        }
      },
      "stft");
}

DiffNode power_spectrum(const DiffNode& spec) {
  if (!spec.valid() || spec.value().rank() != 3 || spec.shape()[0] != 2) {
    throw UsageError("power_spectrum: expected [2 x frames x bins]");
  }
  const std::size_t plane = spec.shape()[1] * spec.shape()[2];
  Tensor out({spec.shape()[1], spec.shape()[2]});
  const double* re = spec.value().data().data();
  const double* im = re + plane;
  for (std::size_t i = 0; i < plane; ++i) out[i] = re[i] * re[i] + im[i] * im[i];
  return DiffNode::make(
      std::move(out), {spec},
      [plane](const Tensor& g, const Tensor&, std::span<DiffNode> p) {
        if (!p[0].requires_grad()) return;
        const double* re = p[0].value().data().data();
        const double* im = re + plane;
        double* gre = p[0].grad_buffer().data().data();
        double* gim = gre + plane;
        for (std::size_t i = 0; i < plane; ++i) {
          gre[i] += 2.0 * g[i] * re[i];
          gim[i] += 2.0 * g[i] * im[i];
        }
      },
      "power_spectrum");
}

DiffNode mel_project(const DiffNode& power, std::size_t n_fft) {
  const MelFilterbank& fb = mel_filterbank(n_fft);
  const std::size_t bins = n_fft / 2 + 1;
  if (!power.valid() || power.value().rank() != 2 || power.shape()[1] != bins) {
    throw UsageError("mel_project: expected [frames x " + std::to_string(bins) + "]");
  }
  const std::size_t frames = power.shape()[0];
  Tensor out({frames, kMelBins});
  const double* pw = power.value().data().data();
  const double* w = fb.matrix.data().data();
  for (std::size_t f = 0; f < frames; ++f) {
    const double* row = pw + f * bins;
    for (std::size_t m = 0; m < kMelBins; ++m) {
      double acc = 0.0;
      for (std::size_t k = fb.band_begin[m]; k < fb.band_end[m]; ++k) acc += w[m * bins + k] * row[k];
      out[f * kMelBins + m] = acc;
    }
  }
  return DiffNode::make(
      std::move(out), {power},
      [&fb, frames, bins](const Tensor& g, const Tensor&, std::span<DiffNode> p) {
        if (!p[0].requires_grad()) return;
        double* gp = p[0].grad_buffer().data().data();
        const double* w = fb.matrix.data().data();
        for (std::size_t f = 0; f < frames; ++f) {
          double* row = gp + f * bins;
          for (std::size_t m = 0; m < kMelBins; ++m) {
            const double gm = g[f * kMelBins + m];
            for (std::size_t k = fb.band_begin[m]; k < fb.band_end[m]; ++k) row[k] += gm * w[m * bins + k];
          }
        }
      },
      "mel_project");
}

DiffNode mel_power(const DiffNode& x, std::size_t s) {
  return mel_project(power_spectrum(stft(x, s, s / 4)), s);
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::string(bytes.begin(), bytes.begin() + 4) != "RIFF" ||
      std::string(bytes.begin() + 8, bytes.begin() + 12) != "WAVE") {
    throw DataError(path.string() + ": not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  Waveform w;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                         bytes.begin() + static_cast<std::ptrdiff_t>(pos + 4));
    const std::size_t size = read_u32(&bytes[pos + 4]);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw DataError(path.string() + ": truncated chunk " + id);
    if (id == "fmt ") {
      if (size < 16) throw DataError(path.string() + ": short fmt chunk");
      const auto format = read_u16(&bytes[body]);
      const auto channels = read_u16(&bytes[body + 2]);
      const auto rate = read_u32(&bytes[body + 4]);
      const auto bits = read_u16(&bytes[body + 14]);
      if (format != 1 || channels != 1 || bits != 16 || rate != kSampleRate) {
        throw DataError(path.string() + ": expected 16-bit PCM mono 16 kHz (format " +
                        std::to_string(format) + ", " + std::to_string(channels) + " ch, " +
                        std::to_string(rate) + " Hz, " + std::to_string(bits) + " bit)");
      }
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw DataError(path.string() + ": data chunk before fmt chunk");
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto raw = static_cast<std::int16_t>(read_u16(&bytes[body + 2 * i]));
        w.samples[i] = static_cast<double>(raw) / 32768.0;
      }
      return w;
    }
    pos = body + size + (size & 1);
  }
  throw DataError(path.string() + ": no data chunk");
}

void write_wav(const std::filesystem::path& path, const Waveform& x) {
  if (x.sample_rate != kSampleRate) throw UsageError("write_wav: sample rate must be 16000");
  const auto data_bytes = static_cast<std::uint32_t>(x.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, kSampleRate);
  put_u32(out, kSampleRate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (double v : x.samples) {
    const long q = std::clamp(std::lround(v * 32768.0), -32768L, 32767L);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write WAV file " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("failed writing WAV file " + path.string());
}

}  // namespace txc
