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

// Waveforms, STFT, mel filterbanks and WAV I/O.

#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "txcodec/tensor.hpp"

namespace txc {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kMelBins = 64;
inline constexpr double kMelFMin = 0.0;
inline constexpr double kMelFMax = 8000.0;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

// frames x dim matrix tagged with its frame rate.
struct FeatureSequence {
  Tensor frames;
  double frame_rate = 0.0;

  std::size_t count() const { return frames.rank() == 2 ? frames.shape()[0] : 0; }
  std::size_t dim() const { return frames.rank() == 2 ? frames.shape()[1] : 0; }
  std::span<const double> row(std::size_t i) const { return frames.data().subspan(i * dim(), dim()); }
};

struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::size_t window_length = 0;
  std::size_t hop = 0;
  std::vector<double> re;  // frames x bins
  std::vector<double> im;
};

struct MelFilterbank {
  std::size_t n_fft = 0;
  double f_min = kMelFMin;
  double f_max = kMelFMax;
  Tensor matrix;  // n_mels x (n_fft/2 + 1)
  // Nonzero support of row m is [band_begin[m], band_end[m]).
  std::vector<std::size_t> band_begin;
  std::vector<std::size_t> band_end;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

// Frame count of an unpadded STFT; UsageError if the signal is shorter than one window.
std::size_t stft_frame_count(std::size_t length, std::size_t window_length, std::size_t hop);

// Hann-windowed STFT without centering. window_length must be a power of two
// in [64, 2048].
Spectrogram stft(const Waveform& x, std::size_t window_length, std::size_t hop);

// HTK mel filterbank with 64 triangular filters over [0, 8000] Hz, cached per
// FFT size. A filter narrower than the bin spacing collapses onto the bin
// nearest its center so that every row keeps positive mass.
const MelFilterbank& mel_filterbank(std::size_t n_fft);

// Mel power spectrogram with window s and hop s/4, s a power of two in [64, 2048].
FeatureSequence mel_spectrogram(const Waveform& x, std::size_t s);

// Every frame repeated `factor` times; frame rate scales accordingly.
FeatureSequence replicate_frames(const FeatureSequence& f, std::size_t factor);

// Differentiable counterparts. Waveform nodes are rank 1 [T].
// stft -> [2 x frames x bins] (real plane, imaginary plane).
DiffNode stft(const DiffNode& x, std::size_t window_length, std::size_t hop);
// [2 x frames x bins] -> [frames x bins] squared magnitude.
DiffNode power_spectrum(const DiffNode& spec);
// [frames x (n_fft/2+1)] -> [frames x 64] through the mel filterbank.
DiffNode mel_project(const DiffNode& power, std::size_t n_fft);
// [T] -> [frames x 64] mel power, window s, hop s/4.
DiffNode mel_power(const DiffNode& x, std::size_t s);

// 16-bit PCM mono 16 kHz RIFF/WAVE. Samples are scaled by 1/32768.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& x);

}  // namespace txc
