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

// Desk-scale codec networks: CNN encoder, generator, and the four
// discriminators (one STFT, three waveform at decimations 1, 2, 4).
//
// Shapes for a 1.28 s segment (20480 samples at 16 kHz):
//   waveform [20480] -> encoder -> [64 frames x 64]     (50 Hz)
//   embeddings [32 x 1024] -> reduce_dim -> [32 x 64]   (25 Hz)
//   both quantized, embeddings replicated to 50 Hz, concatenated -> [64 x 128]
//   generator [64 x 128] -> [20480]

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "txcodec/losses.hpp"
#include "txcodec/quantizer.hpp"
#include "txcodec/random.hpp"
#include "txcodec/tensor.hpp"

namespace txc {

inline constexpr std::size_t kHopSamples = 320;         // 16 kHz -> 50 Hz
inline constexpr std::size_t kEmbeddingHop = 640;       // 16 kHz -> 25 Hz
inline constexpr std::size_t kSegmentSamples = 20480;   // 1.28 s
inline constexpr std::size_t kGeneratorInput = 2 * kFeatureDim;

// Named parameter leaves in registration order.
class ParameterSet {
 public:
  DiffNode add(const std::string& name, Tensor init);
  void adopt(const std::string& name, const DiffNode& leaf);
  const DiffNode& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.contains(name); }

  const std::vector<std::pair<std::string, DiffNode>>& items() const { return items_; }
  void set_trainable(bool on) const;
  void zero_grad() const;
  std::size_t scalar_count() const;

 private:
  std::vector<std::pair<std::string, DiffNode>> items_;
  std::map<std::string, std::size_t> index_;
};

struct ConvLayer {
  DiffNode weight;
  DiffNode bias;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// Four strided blocks, strides (2, 4, 5, 8), widths (16, 32, 32, 64), ELU
// between blocks. Total stride 320.
struct EncoderNet {
  std::vector<ConvLayer> blocks;

  EncoderNet() = default;
  EncoderNet(ParameterSet& params, Rng& rng);
};

// Input conv 128 -> 64, transposed blocks with strides (8, 5, 4, 2), output
// conv to one channel and tanh. 320 samples per input frame.
struct GeneratorNet {
  ConvLayer input;
  std::vector<ConvLayer> up;
  ConvLayer output;

  GeneratorNet() = default;
  GeneratorNet(ParameterSet& params, Rng& rng);
};

struct WaveDiscriminator {
  std::size_t decimation = 1;
  std::vector<ConvLayer> layers;  // last layer emits logits

  WaveDiscriminator() = default;
  WaveDiscriminator(ParameterSet& params, const std::string& prefix, std::size_t decimation, Rng& rng);
};

struct StftDiscriminator {
  static constexpr std::size_t kWindow = 1024;
  static constexpr std::size_t kHop = 256;
  struct Layer {
    DiffNode weight;
    DiffNode bias;
    Conv2dGeometry geom;
  };
  std::vector<Layer> layers;  // last layer emits logits

  StftDiscriminator() = default;
  StftDiscriminator(ParameterSet& params, const std::string& prefix, Rng& rng);
};

// x [T], T a positive multiple of 320 -> [T/320 x 64]
DiffNode encode_cnn(const EncoderNet& net, const DiffNode& x);
// features [frames x 128] -> [320 * frames]
DiffNode decode(const GeneratorNet& net, const DiffNode& features);
// t [N x 64] @25 Hz, c [2N x 64] @50 Hz -> [2N x 128], embedding channels first.
DiffNode concatenate_streams(const DiffNode& t_quantized, const DiffNode& c_quantized);

DiscriminatorOutput discriminate(const WaveDiscriminator& disc, const DiffNode& x);
DiscriminatorOutput discriminate(const StftDiscriminator& disc, const DiffNode& x);

struct ModelConfig {
  std::size_t t_stages = 2;
  std::size_t c_stages = 1;
  std::uint64_t seed = 0;
};

// Full codec: theta (encoder, reducer, codebooks, generator) and phi
// (discriminators). A stream with zero stages is absent and contributes zeros
// to the generator input.
class CodecModel {
 public:
  explicit CodecModel(const ModelConfig& config);
  // Copies would alias the parameter leaves.
  CodecModel(const CodecModel&) = delete;
  CodecModel& operator=(const CodecModel&) = delete;
  CodecModel(CodecModel&&) = default;
  CodecModel& operator=(CodecModel&&) = default;

  const ModelConfig& config() const { return config_; }
  bool uses_embeddings() const { return config_.t_stages > 0; }
  bool uses_cnn() const { return config_.c_stages > 0; }

  ParameterSet theta;
  ParameterSet phi;
  EncoderNet encoder;
  DiffNode reducer;  // [1024 x 64]
  GeneratorNet generator;
  RvqState t_rvq;
  RvqState c_rvq;
  StftDiscriminator d0;
  std::array<WaveDiscriminator, 3> wave;
  bool codebooks_initialized = false;

 private:
  ModelConfig config_;
};

struct CodecForward {
  DiffNode t_features;  // reduced embeddings [N x 64] (pre-quantization)
  DiffNode c_features;  // CNN features [2N x 64]
  StraightThrough t_quant;
  StraightThrough c_quant;
  DiffNode waveform;  // [T]
};

// Encoder, straight-through quantizers and generator. `emb` is [T/640 x 1024].
CodecForward run_codec(const CodecModel& model, const DiffNode& x, const DiffNode& emb);
// Pre-quantization features only.
DiffNode transformer_features(const CodecModel& model, const DiffNode& emb);

std::array<DiscriminatorOutput, kDiscriminatorCount> discriminate_all(const CodecModel& model,
                                                                      const DiffNode& x);

// "TXCK" checkpoint: named float32 tensors for theta and phi plus key/value
// metadata (stage counts, seed, codebook state).
void save_checkpoint(const std::filesystem::path& path, const CodecModel& model);
CodecModel load_checkpoint(const std::filesystem::path& path);

}  // namespace txc
