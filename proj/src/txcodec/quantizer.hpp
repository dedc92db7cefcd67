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

// Vector quantization: codebooks, k-means initialization, the residual cascade
// and its straight-through gradient.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "txcodec/signal.hpp"
#include "txcodec/tensor.hpp"

namespace txc {

inline constexpr std::size_t kCodebookSize = 64;
inline constexpr std::size_t kEmbeddingDim = 1024;
inline constexpr std::size_t kFeatureDim = 64;

// K x D table of code vectors. `entries` is a parameter leaf so the codebook
// term of the quantization loss can train it.
struct Codebook {
  DiffNode entries;
  std::uint32_t id = 0;

  static Codebook from_tensor(Tensor table, std::uint32_t id);
  const Tensor& table() const { return entries.value(); }
  std::size_t size() const { return table().shape()[0]; }
  std::size_t dim() const { return table().shape()[1]; }
  std::span<const double> row(std::size_t k) const { return table().data().subspan(k * dim(), dim()); }
};

// Ordered cascade; stage i quantizes the residual left by stages 0..i-1.
struct RvqState {
  std::vector<Codebook> stages;

  explicit RvqState(std::vector<Codebook> stages = {});
  std::size_t dim() const { return stages.empty() ? 0 : stages[0].dim(); }
  std::size_t stage_count() const { return stages.size(); }
  // Shares the first `n` stages.
  RvqState prefix(std::size_t n) const;
};

// frames x stages code indices.
struct IndexMatrix {
  std::size_t frames = 0;
  std::size_t stages = 0;
  std::vector<std::uint32_t> values;

  IndexMatrix() = default;
  IndexMatrix(std::size_t frames, std::size_t stages) : frames(frames), stages(stages), values(frames * stages) {}
  std::uint32_t at(std::size_t f, std::size_t s) const { return values[f * stages + s]; }
  std::uint32_t& at(std::size_t f, std::size_t s) { return values[f * stages + s]; }
  friend bool operator==(const IndexMatrix&, const IndexMatrix&) = default;
};

struct QuantizedFrames {
  IndexMatrix indices;
  FeatureSequence reconstruction;
};

struct NearestEntry {
  std::size_t index = 0;
  std::span<const double> entry;
  double distance = 0.0;  // squared Euclidean
};

// Squared-Euclidean nearest row; ties go to the lowest index.
NearestEntry nearest(const Codebook& codebook, std::span<const double> v);

struct KMeansResult {
  Codebook codebook;
  // Mean squared distortion after each assignment step; iterations + 1 values.
  std::vector<double> distortion;
};

// Lloyd's algorithm from D^2-seeded batch frames. Empty clusters are reseeded
// with the frame farthest from its centroid. Deterministic given `seed`.
KMeansResult kmeans(const FeatureSequence& batch, std::size_t k, std::size_t iterations,
                    std::uint64_t seed);
Codebook kmeans_init(const FeatureSequence& batch, std::size_t k, std::size_t iterations,
                     std::uint64_t seed);

// Residual cascade fit: stage s runs k-means (seed derive_seed(seed, s)) on the
// residual left by stages 0..s-1.
RvqState train_rvq(const FeatureSequence& batch, std::size_t stages, std::size_t k,
                   std::size_t iterations, std::uint64_t seed);

QuantizedFrames rvq_quantize(const RvqState& state, const FeatureSequence& f);
FeatureSequence rvq_dequantize(const RvqState& state, const IndexMatrix& indices);

struct StraightThrough {
  DiffNode quantized;      // forward: RVQ reconstruction
  QuantizedFrames codes;
};

// Forward value is the RVQ reconstruction of f[frames x D]; backward hands the
// upstream gradient to f unchanged and nothing to the codebooks.
StraightThrough quantize_straight_through(const DiffNode& f, const RvqState& state);
DiffNode straight_through(const DiffNode& f, const RvqState& state);

// emb[N x 1024] * w[1024 x 64], no bias.
DiffNode reduce_dim(const DiffNode& emb, const DiffNode& w);

// FNV-1a over the float32 little-endian entries and the cascade geometry.
std::uint64_t codebook_hash(const RvqState& state);

// "RVQC" container: magic, u32 version, u32 D, u32 K, u32 stage count, then
// row-major float32 entries per stage, all little-endian.
void write_codebooks(const std::filesystem::path& path, const RvqState& state);
RvqState read_codebooks(const std::filesystem::path& path);

}  // namespace txc
