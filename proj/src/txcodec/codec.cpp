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

#include "txcodec/codec.hpp"

#include <cstdio>

#include "txcodec/errors.hpp"

namespace txc {

namespace {

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Clears requires_grad on theta for the lifetime of the guard.
class FrozenTheta {
 public:
  explicit FrozenTheta(const CodecModel& m) : m_(m) { m_.theta.set_trainable(false); }
  ~FrozenTheta() { m_.theta.set_trainable(true); }
  FrozenTheta(const FrozenTheta&) = delete;
  FrozenTheta& operator=(const FrozenTheta&) = delete;

 private:
  const CodecModel& m_;
};

FeatureSequence as_sequence(const DiffNode& n, double rate) { return {n.value(), rate}; }

}  // namespace

Tensor align_embeddings(const Tensor& emb, std::size_t frames) {
  if (emb.rank() != 2 || emb.shape()[1] != kEmbeddingDim) {
    throw UsageError("embeddings must be [frames x 1024], got " + shape_string(emb.shape()));
  }
  const std::size_t have = emb.shape()[0];
  if (have + 1 < frames || have > frames + 1 || have == 0) {
    throw UsageError("embedding/wav frame mismatch: " + std::to_string(have) +
                     " embedding frames for " + std::to_string(frames) + " 25 Hz frames");
  }
  Tensor out({frames, kEmbeddingDim});
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t src = std::min(f, have - 1);
    std::copy_n(emb.data().begin() + static_cast<std::ptrdiff_t>(src * kEmbeddingDim), kEmbeddingDim,
                out.data().begin() + static_cast<std::ptrdiff_t>(f * kEmbeddingDim));
  }
  return out;
}

EncodedStream encode_waveform(const CodecModel& model, const Waveform& x, const Tensor& emb,
                              const BitrateAllocation& allocation) {
  if (x.sample_rate != kSampleRate) throw UsageError("encode: input must be 16 kHz");
  if (x.samples.empty()) throw UsageError("encode: empty input");
  if (allocation.t_stages > model.t_rvq.stage_count() || allocation.c_stages > model.c_rvq.stage_count()) {
    throw UsageError("encode: allocation needs " + std::to_string(allocation.t_stages) + " + " +
                     std::to_string(allocation.c_stages) + " stages, checkpoint has " +
                     std::to_string(model.t_rvq.stage_count()) + " + " +
                     std::to_string(model.c_rvq.stage_count()));
  }
  const std::size_t superframes = (x.samples.size() + kSuperframeSamples - 1) / kSuperframeSamples;
  FrozenTheta frozen(model);

  EncodedStream s;
  s.allocation = allocation;
  s.superframes = static_cast<std::uint32_t>(superframes);
  s.sample_count = static_cast<std::uint32_t>(x.samples.size());
  const RvqState t_rvq = model.t_rvq.prefix(allocation.t_stages);
  const RvqState c_rvq = model.c_rvq.prefix(allocation.c_stages);
  s.codebook_hash = stream_codebook_hash(t_rvq, c_rvq);

  s.t_indices = IndexMatrix(superframes, allocation.t_stages);
  if (allocation.t_stages > 0) {
    const DiffNode e = DiffNode::constant(align_embeddings(emb, superframes));
    s.t_indices = rvq_quantize(t_rvq, as_sequence(transformer_features(model, e), kTransformerFrameRate)).indices;
  }
  s.c_indices = IndexMatrix(2 * superframes, allocation.c_stages);
  if (allocation.c_stages > 0) {
    Tensor padded({superframes * kSuperframeSamples});
    std::copy(x.samples.begin(), x.samples.end(), padded.data().begin());
    const DiffNode c = encode_cnn(model.encoder, DiffNode::constant(std::move(padded)));
    s.c_indices = rvq_quantize(c_rvq, as_sequence(c, kCnnFrameRate)).indices;
  }
  return s;
}

Waveform decode_stream(const CodecModel& model, const EncodedStream& stream) {
  const auto& a = stream.allocation;
  if (a.t_stages > model.t_rvq.stage_count() || a.c_stages > model.c_rvq.stage_count()) {
    throw DataError("decode: stream uses " + std::to_string(a.t_stages) + " + " +
                    std::to_string(a.c_stages) + " stages, checkpoint has " +
                    std::to_string(model.t_rvq.stage_count()) + " + " +
                    std::to_string(model.c_rvq.stage_count()));
  }
  const RvqState t_rvq = model.t_rvq.prefix(a.t_stages);
  const RvqState c_rvq = model.c_rvq.prefix(a.c_stages);
  const std::uint64_t expected = stream_codebook_hash(t_rvq, c_rvq);
  if (expected != stream.codebook_hash) {
    throw DataError("decode: codebook hash mismatch (stream " + hex64(stream.codebook_hash) +
                    ", checkpoint " + hex64(expected) + ")");
  }
  if (stream.superframes == 0) return Waveform{};
  FrozenTheta frozen(model);
  const std::size_t n = stream.superframes;
  const DiffNode tq = DiffNode::constant(
      a.t_stages > 0 ? rvq_dequantize(t_rvq, stream.t_indices).frames : Tensor({n, kFeatureDim}));
  const DiffNode cq = DiffNode::constant(
      a.c_stages > 0 ? rvq_dequantize(c_rvq, stream.c_indices).frames : Tensor({2 * n, kFeatureDim}));
  const DiffNode y = decode(model.generator, concatenate_streams(tq, cq));
  Waveform out;
  out.samples.assign(y.value().data().begin(), y.value().data().begin() + stream.sample_count);
  return out;
}

}  // namespace txc
