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

#include "txcodec/codecnet.hpp"

#include <cmath>

#include "txcodec/binio.hpp"
#include "txcodec/errors.hpp"
#include "txcodec/signal.hpp"

namespace txc {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr double kDiscSlope = 0.2;
constexpr std::array<std::size_t, 4> kEncoderStrides{2, 4, 5, 8};
constexpr std::array<std::size_t, 5> kEncoderWidths{1, 16, 32, 32, 64};
constexpr std::array<std::size_t, 4> kGeneratorStrides{8, 5, 4, 2};
constexpr std::array<std::size_t, 5> kGeneratorWidths{64, 32, 16, 16, 8};
constexpr std::size_t kMinWaveDiscLength = 64;

Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

ConvLayer make_conv(ParameterSet& params, const std::string& name, std::size_t c_in,
                    std::size_t c_out, std::size_t ksize, std::size_t stride, std::size_t padding,
                    Rng& rng) {
  ConvLayer l;
  l.weight = params.add(name + ".w", uniform_init({c_out, c_in, ksize}, c_in * ksize, rng));
  l.bias = params.add(name + ".b", uniform_init({c_out}, c_in * ksize, rng));
  l.stride = stride;
  l.padding = padding;
  return l;
}

DiffNode apply(const ConvLayer& l, const DiffNode& x) {
  return conv1d(x, l.weight, l.bias, l.stride, l.padding);
}


}  // namespace

DiffNode ParameterSet::add(const std::string& name, Tensor init) {
  DiffNode leaf = DiffNode::parameter(std::move(init));
  adopt(name, leaf);
  return leaf;
}

void ParameterSet::adopt(const std::string& name, const DiffNode& leaf) {
  if (index_.contains(name)) throw UsageError("parameter registered twice: " + name);
  index_.emplace(name, items_.size());
  items_.emplace_back(name, leaf);
}

const DiffNode& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("unknown parameter " + name);
  return items_[it->second].second;
}

void ParameterSet::set_trainable(bool on) const {
  for (const auto& [_, p] : items_) p.set_requires_grad(on);
}

void ParameterSet::zero_grad() const {
  for (const auto& [_, p] : items_) p.zero_grad();
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : items_) n += p.size();
  return n;
}

EncoderNet::EncoderNet(ParameterSet& params, Rng& rng) {
  for (std::size_t i = 0; i < kEncoderStrides.size(); ++i) {
    const std::size_t s = kEncoderStrides[i];
    // Output length is exactly T / s for T divisible by s.
    const std::size_t ksize = s % 2 == 0 ? 2 * s : 2 * s - 1;
    const std::size_t pad = s % 2 == 0 ? s / 2 : (s - 1) / 2;
    blocks.push_back(make_conv(params, "enc." + std::to_string(i), kEncoderWidths[i],
                               kEncoderWidths[i + 1], ksize, s, pad, rng));
  }
}

GeneratorNet::GeneratorNet(ParameterSet& params, Rng& rng) {
  input = make_conv(params, "gen.in", kGeneratorInput, kGeneratorWidths[0], 7, 1, 3, rng);
  for (std::size_t i = 0; i < kGeneratorStrides.size(); ++i) {
    const std::size_t s = kGeneratorStrides[i];
    const std::size_t c_in = kGeneratorWidths[i], c_out = kGeneratorWidths[i + 1];
    ConvLayer l;
    const std::string name = "gen.up" + std::to_string(i);
    l.weight = params.add(name + ".w", uniform_init({c_in, c_out, 2 * s}, c_in * 2 * s, rng));
    l.bias = params.add(name + ".b", uniform_init({c_out}, c_in * 2 * s, rng));
    l.stride = s;
    up.push_back(l);
  }
  output = make_conv(params, "gen.out", kGeneratorWidths.back(), 1, 7, 1, 3, rng);
}

WaveDiscriminator::WaveDiscriminator(ParameterSet& params, const std::string& prefix,
                                     std::size_t decim, Rng& rng)
    : decimation(decim) {
  layers.push_back(make_conv(params, prefix + ".0", 1, 4, 15, 1, 7, rng));
  layers.push_back(make_conv(params, prefix + ".1", 4, 8, 9, 4, 4, rng));
  layers.push_back(make_conv(params, prefix + ".2", 8, 16, 9, 4, 4, rng));
  layers.push_back(make_conv(params, prefix + ".3", 16, 1, 3, 1, 1, rng));
}

StftDiscriminator::StftDiscriminator(ParameterSet& params, const std::string& prefix, Rng& rng) {
  struct Spec {
    std::size_t c_in, c_out, kh, kw;
    Conv2dGeometry geom;
  };
  // Frequency axis: 513 -> 128 -> 32 -> 8 -> 1.
  const std::array<Spec, 4> specs{{
      {2, 4, 3, 8, {1, 4, 1, 2}},
      {4, 8, 3, 8, {2, 4, 1, 2}},
      {8, 8, 3, 8, {2, 4, 1, 2}},
      {8, 1, 1, 8, {1, 1, 0, 0}},
  }};
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    const std::size_t fan_in = s.c_in * s.kh * s.kw;
    const std::string name = prefix + "." + std::to_string(i);
    layers.push_back({params.add(name + ".w", uniform_init({s.c_out, s.c_in, s.kh, s.kw}, fan_in, rng)),
                      params.add(name + ".b", uniform_init({s.c_out}, fan_in, rng)), s.geom});
  }
}

DiffNode encode_cnn(const EncoderNet& net, const DiffNode& x) {
  if (!x.valid() || x.value().rank() != 1) throw UsageError("encode_cnn: expected a rank-1 waveform");
  const std::size_t length = x.size();
  if (length == 0 || length % kHopSamples != 0) {
    throw UsageError("encode_cnn: segment length " + std::to_string(length) +
                     " is not a positive multiple of 320");
  }
  DiffNode h = reshape(x, {1, length});
  for (std::size_t i = 0; i < net.blocks.size(); ++i) {
    h = apply(net.blocks[i], h);
    if (i + 1 < net.blocks.size()) h = elu(h);
  }
  return transpose(h);
}

DiffNode decode(const GeneratorNet& net, const DiffNode& features) {
  if (!features.valid() || features.value().rank() != 2 || features.shape()[1] != kGeneratorInput) {
    throw UsageError("decode: expected [frames x 128] features, got " +
                     shape_string(features.shape()));
  }
  DiffNode h = elu(apply(net.input, transpose(features)));
  for (const auto& l : net.up) {
    h = conv1d_transposed(h, l.weight, l.bias, l.stride);
    // (T-1)s + 2s samples; trim s to land on T*s.
    const std::size_t extra = l.stride;
    const std::size_t front = extra / 2;
    h = slice(h, 1, front, h.shape()[1] - (extra - front));
    h = elu(h);
  }
  h = tanh(apply(net.output, h));
  return reshape(h, {h.size()});
}

DiffNode concatenate_streams(const DiffNode& t_quantized, const DiffNode& c_quantized) {
  if (!t_quantized.valid() || !c_quantized.valid() || t_quantized.value().rank() != 2 ||
      c_quantized.value().rank() != 2) {
    throw UsageError("concatenate_streams: expected two frames x dim inputs");
  }
  if (t_quantized.shape()[0] * 2 != c_quantized.shape()[0]) {
    throw UsageError("concatenate_streams: frame-rate mismatch (" +
                     std::to_string(t_quantized.shape()[0]) + " embedding frames vs " +
                     std::to_string(c_quantized.shape()[0]) + " CNN frames)");
  }
  const std::array<DiffNode, 2> parts{repeat_rows(t_quantized, 2), c_quantized};
  return concat(parts, 1);
}

DiscriminatorOutput discriminate(const WaveDiscriminator& disc, const DiffNode& x) {
  if (!x.valid() || x.value().rank() != 1) throw UsageError("discriminate: expected a rank-1 waveform");
  if (x.size() / disc.decimation < kMinWaveDiscLength) {
    throw UsageError("discriminate: input of " + std::to_string(x.size()) +
                     " samples too short for decimation " + std::to_string(disc.decimation));
  }
  DiffNode h = reshape(x, {1, x.size()});
  if (disc.decimation > 1) h = avg_pool1d(h, disc.decimation);
  DiscriminatorOutput out;
  for (std::size_t i = 0; i + 1 < disc.layers.size(); ++i) {
    h = leaky_relu(apply(disc.layers[i], h), kDiscSlope);
    out.feature_maps.push_back(h);
  }
  out.logits = apply(disc.layers.back(), h);
  return out;
}

DiscriminatorOutput discriminate(const StftDiscriminator& disc, const DiffNode& x) {
  if (!x.valid() || x.value().rank() != 1 || x.size() < StftDiscriminator::kWindow) {
    throw UsageError("discriminate: STFT discriminator needs at least 1024 samples");
  }
  DiffNode h = scale(stft(x, StftDiscriminator::kWindow, StftDiscriminator::kHop),
                     1.0 / std::sqrt(static_cast<double>(StftDiscriminator::kWindow)));
  DiscriminatorOutput out;
  for (std::size_t i = 0; i + 1 < disc.layers.size(); ++i) {
    const auto& l = disc.layers[i];
    h = leaky_relu(conv2d(h, l.weight, l.bias, l.geom), kDiscSlope);
    out.feature_maps.push_back(h);
  }
  const auto& last = disc.layers.back();
  out.logits = conv2d(h, last.weight, last.bias, last.geom);
  return out;
}

CodecModel::CodecModel(const ModelConfig& config) : config_(config) {
  if (config.t_stages == 0 && config.c_stages == 0) {
    throw UsageError("model: at least one stream needs a quantizer stage");
  }
  Rng rng(config.seed);
  encoder = EncoderNet(theta, rng);
  reducer = theta.add("reduce.w", uniform_init({kEmbeddingDim, kFeatureDim}, kEmbeddingDim, rng));
  generator = GeneratorNet(theta, rng);
  auto make_rvq = [&](const char* tag, std::size_t stages) {
    std::vector<Codebook> cbs;
    for (std::size_t s = 0; s < stages; ++s) {
      Tensor t({kCodebookSize, kFeatureDim});
      for (auto& v : t.data()) v = 0.1 * rng.normal();
      cbs.push_back(Codebook::from_tensor(std::move(t), static_cast<std::uint32_t>(s)));
      theta.adopt(std::string("rvq.") + tag + "." + std::to_string(s), cbs.back().entries);
    }
    return RvqState(std::move(cbs));
  };
  t_rvq = make_rvq("t", config.t_stages);
  c_rvq = make_rvq("c", config.c_stages);
  d0 = StftDiscriminator(phi, "disc0", rng);
  for (std::size_t i = 0; i < wave.size(); ++i) {
    wave[i] = WaveDiscriminator(phi, "disc" + std::to_string(i + 1), std::size_t{1} << i, rng);
  }
}

DiffNode transformer_features(const CodecModel& model, const DiffNode& emb) {
  return reduce_dim(emb, model.reducer);
}

CodecForward run_codec(const CodecModel& model, const DiffNode& x, const DiffNode& emb) {
  if (!x.valid() || x.value().rank() != 1 || x.size() == 0 || x.size() % kEmbeddingHop != 0) {
    throw UsageError("run_codec: waveform length must be a positive multiple of 640");
  }
  const std::size_t t_frames = x.size() / kEmbeddingHop;
  CodecForward out;
  DiffNode tq, cq;
  if (model.uses_embeddings()) {
    if (!emb.valid() || emb.value().rank() != 2 || emb.shape()[0] != t_frames ||
        emb.shape()[1] != kEmbeddingDim) {
      throw UsageError("run_codec: embeddings must be [" + std::to_string(t_frames) +
                       " x 1024], got " + (emb.valid() ? shape_string(emb.shape()) : "none"));
    }
    out.t_features = transformer_features(model, emb);
    out.t_quant = quantize_straight_through(out.t_features, model.t_rvq);
    tq = out.t_quant.quantized;
  } else {
    tq = DiffNode::constant(Tensor({t_frames, kFeatureDim}));
  }
  if (model.uses_cnn()) {
    out.c_features = encode_cnn(model.encoder, x);
    out.c_quant = quantize_straight_through(out.c_features, model.c_rvq);
    cq = out.c_quant.quantized;
  } else {
    cq = DiffNode::constant(Tensor({2 * t_frames, kFeatureDim}));
  }
  out.waveform = decode(model.generator, concatenate_streams(tq, cq));
  return out;
}

std::array<DiscriminatorOutput, kDiscriminatorCount> discriminate_all(const CodecModel& model,
                                                                      const DiffNode& x) {
  return {discriminate(model.d0, x), discriminate(model.wave[0], x), discriminate(model.wave[1], x),
          discriminate(model.wave[2], x)};
}

void save_checkpoint(const std::filesystem::path& path, const CodecModel& model) {
  ByteWriter w;
  w.bytes("TXCK", 4);
  w.u32(kCheckpointVersion);
  const std::vector<std::pair<std::string, std::string>> meta{
      {"t_stages", std::to_string(model.config().t_stages)},
      {"c_stages", std::to_string(model.config().c_stages)},
      {"seed", std::to_string(model.config().seed)},
      {"codebooks_initialized", model.codebooks_initialized ? "1" : "0"},
  };
  w.u32(static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    w.str(k);
    w.str(v);
  }
  const std::size_t count = model.theta.items().size() + model.phi.items().size();
  w.u32(static_cast<std::uint32_t>(count));
  for (const ParameterSet* set : {&model.theta, &model.phi}) {
    for (const auto& [name, p] : set->items()) {
      w.str(name);
      w.u32(static_cast<std::uint32_t>(p.value().rank()));
      for (std::size_t d : p.shape()) w.u32(static_cast<std::uint32_t>(d));
      for (double v : p.value().data()) w.f32(static_cast<float>(v));
    }
  }
  write_file_bytes(path, w.data());
}

CodecModel load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes.data(), bytes.size(), path.string());
  if (r.fixed(4) != "TXCK") throw DataError(path.string() + ": bad checkpoint magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  std::map<std::string, std::string> meta;
  const std::uint32_t meta_count = r.u32();
  for (std::uint32_t i = 0; i < meta_count; ++i) {
    std::string k = r.str();
    meta[k] = r.str();
  }
  auto meta_u64 = [&](const char* key) -> std::uint64_t {
    auto it = meta.find(key);
    if (it == meta.end()) throw DataError(path.string() + ": checkpoint lacks '" + key + "'");
    try {
      return std::stoull(it->second);
    } catch (const std::exception&) {
      throw DataError(path.string() + ": bad value for '" + key + "'");
    }
  };
  ModelConfig cfg;
  cfg.t_stages = meta_u64("t_stages");
  cfg.c_stages = meta_u64("c_stages");
  cfg.seed = meta_u64("seed");
  CodecModel model(cfg);
  model.codebooks_initialized = meta_u64("codebooks_initialized") != 0;

  const std::uint32_t count = r.u32();
  std::size_t loaded = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    const ParameterSet* set = model.theta.contains(name) ? &model.theta
                              : model.phi.contains(name) ? &model.phi
                                                         : nullptr;
    if (set == nullptr) throw DataError(path.string() + ": unknown tensor " + name);
    Tensor& dst = set->get(name).mutable_value();
    if (dst.shape() != shape) {
      throw DataError(path.string() + ": tensor " + name + " has shape " + shape_string(shape) +
                      ", model expects " + shape_string(dst.shape()));
    }
    for (auto& v : dst.data()) v = static_cast<double>(r.f32());
    ++loaded;
  }
  if (loaded != model.theta.items().size() + model.phi.items().size()) {
    throw DataError(path.string() + ": checkpoint is missing tensors");
  }
  return model;
}

}  // namespace txc
