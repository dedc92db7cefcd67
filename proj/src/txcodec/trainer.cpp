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

#include "txcodec/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "txcodec/binio.hpp"
#include "txcodec/embeddings.hpp"
#include "txcodec/errors.hpp"

namespace txc {

namespace {

constexpr std::size_t kSegmentFrames = kSegmentSamples / kEmbeddingHop;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& v, const std::string& where) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc{} || res.ptr != end) throw UsageError(where + ": bad value '" + v + "'");
  return out;
}

std::vector<DiffNode> leaves(const ParameterSet& set) {
  std::vector<DiffNode> out;
  for (const auto& [_, p] : set.items()) out.push_back(p);
  return out;
}

void apply_update(const ParameterSet& set, AdamState& adam, const TrainConfig& config) {
  const auto params = leaves(set);
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.push_back(p.grad());
  clip_global_norm(grads, config.clip_norm);
  adam_step(params, grads, adam, {config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps});
  set.zero_grad();
}

double checked(const DiffNode& loss, const char* name, std::size_t element) {
  const double v = loss.value().item();
  if (!std::isfinite(v)) {
    throw NumericError(std::string("non-finite ") + name + " loss on batch element " + std::to_string(element));
  }
  return v;
}

DiffNode quantization_objective(const CodecModel& model, const CodecForward& f, double beta) {
  DiffNode q;
  if (model.uses_embeddings()) {
    q = rvq_quantization_loss(f.t_features, model.t_rvq, f.t_quant.codes.indices, beta);
  }
  if (model.uses_cnn()) {
    const DiffNode c = rvq_quantization_loss(f.c_features, model.c_rvq, f.c_quant.codes.indices, beta);
    q = q.valid() ? add(q, c) : c;
  }
  return q;
}

// Overwrites the codebook values in place so the model's parameter leaves survive.
void fit_cascade(RvqState& rvq, Tensor features, std::size_t iterations, std::uint64_t seed) {
  const RvqState fitted = train_rvq(FeatureSequence{std::move(features), 0.0}, rvq.stage_count(),
                                    kCodebookSize, iterations, seed);
  for (std::size_t s = 0; s < rvq.stage_count(); ++s) {
    rvq.stages[s].entries.mutable_value() = fitted.stages[s].table();
  }
}

Tensor stack_rows(const std::vector<Tensor>& parts) {
  std::size_t rows = 0;
  for (const auto& p : parts) rows += p.shape()[0];
  Tensor out({rows, parts.front().shape()[1]});
  auto it = out.data().begin();
  for (const auto& p : parts) it = std::copy(p.data().begin(), p.data().end(), it);
  return out;
}

}  // namespace

void validate(const TrainConfig& c) {
  if (!(c.lr > 0.0) || !std::isfinite(c.lr)) throw UsageError("config: lr must be positive");
  if (c.steps == 0) throw UsageError("config: steps must be positive");
  if (c.batch == 0) throw UsageError("config: batch must be positive");
  if (std::lround(c.segment_seconds * kSampleRate) != static_cast<long>(kSegmentSamples) ||
      std::fabs(c.segment_seconds * kSampleRate - static_cast<double>(kSegmentSamples)) > 1e-6) {
    throw UsageError("config: segment_seconds must be 1.28 (20480 samples)");
  }
  if (c.segments_per_file == 0 || c.segments_per_file > 10) {
    throw UsageError("config: segments_per_file must be in 1..10");
  }
  if (!(c.clip_norm > 0.0)) throw UsageError("config: clip_norm must be positive");
  if (c.t_stages == 0 && c.c_stages == 0) throw UsageError("config: need at least one quantizer stage");
  if (c.weights.adv < 0 || c.weights.feat < 0 || c.weights.recon < 0 || c.weights.quant < 0 ||
      c.weights.beta < 0) {
    throw UsageError("config: loss weights must be non-negative");
  }
  if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0 && c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0 &&
        c.adam_eps > 0.0)) {
    throw UsageError("config: invalid Adam hyperparameters");
  }
}

TrainConfig parse_train_config(std::string_view text, const std::string& what) {
  TrainConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = what + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw UsageError(where + ": expected key=value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    auto num = [&] { return parse_number<double>(value, where); };
    auto count = [&] { return parse_number<std::size_t>(value, where); };
    if (key == "lr") c.lr = num();
    else if (key == "steps") c.steps = count();
    else if (key == "batch") c.batch = count();
    else if (key == "segment_seconds") c.segment_seconds = num();
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(value, where);
    else if (key == "segments_per_file") c.segments_per_file = count();
    else if (key == "clip_norm") c.clip_norm = num();
    else if (key == "t_stages") c.t_stages = count();
    else if (key == "c_stages") c.c_stages = count();
    else if (key == "kmeans_iterations") c.kmeans_iterations = count();
    else if (key == "weight_adv") c.weights.adv = num();
    else if (key == "weight_feat") c.weights.feat = num();
    else if (key == "weight_recon") c.weights.recon = num();
    else if (key == "weight_quant") c.weights.quant = num();
    else if (key == "beta") c.weights.beta = num();
    else if (key == "adam_beta1") c.adam_beta1 = num();
    else if (key == "adam_beta2") c.adam_beta2 = num();
    else if (key == "adam_eps") c.adam_eps = num();
    else if (key == "precision") {
      if (value == "f32") c.precision = Precision::f32;
      else if (value == "f64") c.precision = Precision::f64;
      else throw UsageError(where + ": precision must be f32 or f64");
    } else {
      throw UsageError(where + ": unknown key '" + key + "'");
    }
  }
  validate(c);
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw UsageError("config file not found: " + path.string());
  const auto bytes = read_file_bytes(path);
  return parse_train_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                            path.string());
}

std::vector<CorpusItem> load_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("corpus directory not found: " + dir.string());
  std::vector<std::filesystem::path> wavs;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav") wavs.push_back(entry.path());
  }
  std::sort(wavs.begin(), wavs.end());
  if (wavs.empty()) throw DataError("corpus has no .wav files: " + dir.string());
  std::vector<CorpusItem> corpus;
  for (const auto& wav : wavs) {
    const auto emb_path = embedding_path_for(wav);
    if (!std::filesystem::exists(emb_path)) {
      throw DataError("missing embedding file " + emb_path.string() + " for " + wav.string());
    }
    CorpusItem item{wav, read_wav(wav), read_embedding_file(emb_path).values};
    if (item.embeddings.shape()[1] != kEmbeddingDim) {
      throw DataError(emb_path.string() + ": expected 1024-dim embeddings");
    }
    corpus.push_back(std::move(item));
  }
  return corpus;
}

std::vector<SegmentRef> plan_epoch(const std::vector<CorpusItem>& corpus, std::size_t segments_per_file,
                                   Rng& rng) {
  std::vector<SegmentRef> plan;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const std::size_t len = corpus[i].audio.samples.size();
    if (len < kSegmentSamples) continue;
    const std::size_t positions = (len - kSegmentSamples) / kEmbeddingHop + 1;
    std::vector<std::size_t> slots(positions);
    for (std::size_t p = 0; p < positions; ++p) slots[p] = p;
    const std::size_t take = std::min(segments_per_file, positions);
    for (std::size_t k = 0; k < take; ++k) {
      std::swap(slots[k], slots[k + rng.index(positions - k)]);
      plan.push_back({i, slots[k] * kEmbeddingHop});
    }
  }
  for (std::size_t k = plan.size(); k > 1; --k) std::swap(plan[k - 1], plan[rng.index(k)]);
  return plan;
}

BatchStream::BatchStream(std::vector<CorpusItem> corpus, std::size_t batch, std::size_t segments_per_file,
                         std::uint64_t seed)
    : corpus_(std::move(corpus)), batch_(batch), segments_per_file_(segments_per_file), rng_(seed) {
  if (batch_ == 0) throw UsageError("batch size must be positive");
  plan_ = plan_epoch(corpus_, segments_per_file_, rng_);
  if (plan_.empty()) throw DataError("corpus has no file of at least 1.28 s");
}

Batch BatchStream::make(std::span<const SegmentRef> refs) const {
  Batch b;
  for (const auto& r : refs) {
    const auto& item = corpus_.at(r.item);
    Tensor seg({kSegmentSamples});
    std::copy_n(item.audio.samples.begin() + static_cast<std::ptrdiff_t>(r.start), kSegmentSamples,
                seg.data().begin());
    const std::size_t first = r.start / kEmbeddingHop;
    const std::size_t have = item.embeddings.shape()[0];
    if (have == 0 || first + kSegmentFrames > have + 1) {
      throw DataError(item.wav.string() + ": embedding file has " + std::to_string(have) +
                      " frames, segment needs " + std::to_string(first + kSegmentFrames));
    }
    Tensor emb({kSegmentFrames, kEmbeddingDim});
    for (std::size_t f = 0; f < kSegmentFrames; ++f) {
      const std::size_t src = std::min(first + f, have - 1);
      std::copy_n(item.embeddings.data().begin() + static_cast<std::ptrdiff_t>(src * kEmbeddingDim),
                  kEmbeddingDim, emb.data().begin() + static_cast<std::ptrdiff_t>(f * kEmbeddingDim));
    }
    b.segments.push_back(std::move(seg));
    b.embeddings.push_back(std::move(emb));
  }
  return b;
}

Batch BatchStream::next() {
  std::vector<SegmentRef> refs;
  while (refs.size() < batch_) {
    if (cursor_ == plan_.size()) {
      plan_ = plan_epoch(corpus_, segments_per_file_, rng_);
      cursor_ = 0;
      ++epoch_;
    }
    refs.push_back(plan_[cursor_++]);
  }
  return make(refs);
}

BatchStream make_batches(const std::filesystem::path& corpus_dir, std::size_t batch,
                         std::size_t segments_per_file, std::uint64_t seed) {
  return BatchStream(load_corpus(corpus_dir), batch, segments_per_file, derive_seed(seed, 7));
}

void adam_step(std::span<const DiffNode> params, std::span<const Tensor> grads, AdamState& state,
               const AdamConfig& config) {
  if (params.size() != grads.size()) throw UsageError("adam_step: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.shape());
      state.v.emplace_back(p.shape());
    }
  }
  if (state.m.size() != params.size()) throw UsageError("adam_step: state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].shape() || state.m[i].shape() != params[i].shape()) {
      throw UsageError("adam_step: shape mismatch for parameter " + std::to_string(i) + ": " +
                       shape_string(params[i].shape()) + " vs gradient " + shape_string(grads[i].shape()));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = params[i].mutable_value();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    const auto g = grads[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      w[j] -= config.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config.eps);
    }
    w.round_to_precision();
  }
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double v : g.data()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& g : grads) {
      for (auto& v : g.data()) v *= f;
    }
  }
  return norm;
}

std::string metrics_csv_header() { return "step,adv_g,adv_d,feat,recon,quant,total"; }

std::string metrics_csv_row(const StepMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", m.step, m.adv_g, m.adv_d,
                m.feat, m.recon, m.quant, m.total);
  return buf;
}

void init_codebooks(CodecModel& model, const Batch& batch, std::size_t iterations, std::uint64_t seed) {
  model.theta.set_trainable(false);
  std::vector<Tensor> t_parts, c_parts;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (model.uses_embeddings()) {
      t_parts.push_back(transformer_features(model, DiffNode::constant(batch.embeddings[i])).value());
    }
    if (model.uses_cnn()) {
      c_parts.push_back(encode_cnn(model.encoder, DiffNode::constant(batch.segments[i])).value());
    }
  }
  model.theta.set_trainable(true);
  if (model.uses_embeddings()) fit_cascade(model.t_rvq, stack_rows(t_parts), iterations, derive_seed(seed, 1));
  if (model.uses_cnn()) fit_cascade(model.c_rvq, stack_rows(c_parts), iterations, derive_seed(seed, 2));
  model.codebooks_initialized = true;
}

std::vector<CodecForward> forward_batch(const CodecModel& model, const Batch& batch) {
  model.theta.set_trainable(true);
  std::vector<CodecForward> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.push_back(run_codec(model, DiffNode::constant(batch.segments[i]),
                            DiffNode::constant(batch.embeddings[i])));
  }
  return out;
}

double discriminator_update(CodecModel& model, AdamState& adam, const Batch& batch,
                            std::span<const CodecForward> fwd, const TrainConfig& config) {
  if (fwd.size() != batch.size()) throw UsageError("discriminator_update: forward/batch size mismatch");
  model.phi.set_trainable(true);
  model.phi.zero_grad();
  const double inv = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto real = discriminate_all(model, DiffNode::constant(batch.segments[i]));
    const auto fake = discriminate_all(model, DiffNode::constant(fwd[i].waveform.value()));
    const DiffNode loss = adv_discriminator_loss(real, fake);
    total += checked(loss, "discriminator", i);
    backward(scale(loss, inv));
  }
  apply_update(model.phi, adam, config);
  return total * inv;
}

StepMetrics generator_update(CodecModel& model, AdamState& adam, const Batch& batch,
                             std::span<const CodecForward> fwd, const TrainConfig& config) {
  if (fwd.size() != batch.size()) throw UsageError("generator_update: forward/batch size mismatch");
  model.phi.set_trainable(false);
  model.theta.zero_grad();
  const double inv = 1.0 / static_cast<double>(batch.size());
  StepMetrics m;
  try {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const DiffNode real = DiffNode::constant(batch.segments[i]);
      const auto real_out = discriminate_all(model, real);
      const auto fake_out = discriminate_all(model, fwd[i].waveform);
      GeneratorLossParts parts{adv_generator_loss(fake_out), feature_matching_loss(real_out, fake_out),
                               reconstruction_loss(real, fwd[i].waveform),
                               quantization_objective(model, fwd[i], config.weights.beta)};
      const DiffNode total = total_generator_loss(parts, config.weights);
      m.adv_g += checked(parts.adv, "adversarial", i) * inv;
      m.feat += checked(parts.feat, "feature-matching", i) * inv;
      m.recon += checked(parts.recon, "reconstruction", i) * inv;
      m.quant += checked(parts.quant, "quantization", i) * inv;
      m.total += checked(total, "generator", i) * inv;
      backward(scale(total, inv));
    }
  } catch (...) {
    model.phi.set_trainable(true);
    throw;
  }
  model.phi.set_trainable(true);
  apply_update(model.theta, adam, config);
  return m;
}

StepMetrics train_step(CodecModel& model, TrainerState& state, const Batch& batch,
                       const TrainConfig& config) {
  PrecisionScope scope(config.precision);
  if (!model.codebooks_initialized) {
    init_codebooks(model, batch, config.kmeans_iterations, derive_seed(config.seed, 3));
  }
  const auto fwd = forward_batch(model, batch);
  const double adv_d = discriminator_update(model, state.phi, batch, fwd, config);
  StepMetrics m = generator_update(model, state.theta, batch, fwd, config);
  m.adv_d = adv_d;
  m.step = ++state.step;
  return m;
}

StepMetrics evaluate_losses(const CodecModel& model, const Batch& batch, const TrainConfig& config) {
  PrecisionScope scope(config.precision);
  model.theta.set_trainable(false);
  model.phi.set_trainable(false);
  const double inv = 1.0 / static_cast<double>(batch.size());
  StepMetrics m;
  try {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const DiffNode real = DiffNode::constant(batch.segments[i]);
      const auto f = run_codec(model, real, DiffNode::constant(batch.embeddings[i]));
      const auto real_out = discriminate_all(model, real);
      const auto fake_out = discriminate_all(model, f.waveform);
      GeneratorLossParts parts{adv_generator_loss(fake_out), feature_matching_loss(real_out, fake_out),
                               reconstruction_loss(real, f.waveform),
                               quantization_objective(model, f, config.weights.beta)};
      m.adv_g += parts.adv.value().item() * inv;
      m.adv_d += adv_discriminator_loss(real_out, fake_out).value().item() * inv;
      m.feat += parts.feat.value().item() * inv;
      m.recon += parts.recon.value().item() * inv;
      m.quant += parts.quant.value().item() * inv;
      m.total += total_generator_loss(parts, config.weights).value().item() * inv;
    }
  } catch (...) {
    model.theta.set_trainable(true);
    model.phi.set_trainable(true);
    throw;
  }
  model.theta.set_trainable(true);
  model.phi.set_trainable(true);
  return m;
}

CodecModel train(const TrainConfig& config, BatchStream& batches, const StepCallback& on_step) {
  validate(config);
  CodecModel model(ModelConfig{config.t_stages, config.c_stages, config.seed});
  TrainerState state;
  for (std::size_t s = 0; s < config.steps; ++s) {
    const Batch batch = batches.next();
    StepMetrics m;
    try {
      m = train_step(model, state, batch, config);
    } catch (const NumericError& e) {
      throw NumericError("training step " + std::to_string(s + 1) + ": " + e.what());
    }
    if (on_step) on_step(m, model);
  }
  return model;
}

CodecModel train_corpus(const TrainConfig& config, const std::filesystem::path& corpus_dir,
                        const std::filesystem::path& checkpoint, const std::filesystem::path& metrics_csv,
                        const StepCallback& on_step) {
  validate(config);
  BatchStream batches = make_batches(corpus_dir, config.batch, config.segments_per_file, config.seed);
  std::ofstream csv(metrics_csv);
  if (!csv) throw DataError("cannot write metrics file " + metrics_csv.string());
  csv << metrics_csv_header() << '\n';
  CodecModel model = train(config, batches, [&](const StepMetrics& m, const CodecModel& mdl) {
    csv << metrics_csv_row(m) << '\n';
    csv.flush();
    if (on_step) on_step(m, mdl);
  });
  if (!csv) throw DataError("failed writing metrics file " + metrics_csv.string());
  save_checkpoint(checkpoint, model);
  return model;
}

Waveform synth_toy_utterance(Rng& rng, double seconds) {
  const auto n = static_cast<std::size_t>(std::lround(seconds * kSampleRate));
  std::vector<double> y(n, 0.0);
  const double fs = kSampleRate;
  const std::size_t syllables = 2 + rng.index(3);
  for (std::size_t k = 0; k < syllables; ++k) {
    const double dur = rng.uniform(0.25, 0.7);
    const auto len = static_cast<std::size_t>(dur * fs);
    if (len >= n) continue;
    const std::size_t start = rng.index(n - len);
    const double f0 = rng.uniform(100.0, 280.0);
    const double glide = rng.uniform(-0.3, 0.3);
    const double amp = rng.uniform(0.3, 1.0);
    const std::size_t harmonics = 3 + rng.index(4);
    double phase = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double u = static_cast<double>(i) / static_cast<double>(len);
      const double env = std::sin(std::numbers::pi * u);
      phase += 2.0 * std::numbers::pi * f0 * (1.0 + glide * u) / fs;
      double v = 0.0;
      for (std::size_t h = 1; h <= harmonics; ++h) v += std::sin(static_cast<double>(h) * phase) / static_cast<double>(h);
      y[start + i] += amp * env * env * v;
    }
  }
  const std::size_t bursts = 1 + rng.index(3);
  for (std::size_t k = 0; k < bursts; ++k) {
    const auto len = static_cast<std::size_t>(rng.uniform(0.05, 0.25) * fs);
    if (len >= n) continue;
    const std::size_t start = rng.index(n - len);
    // Two-pole resonator over white noise.
    const double fc = rng.uniform(1000.0, 6000.0);
    const double r = 0.97;
    const double a1 = 2.0 * r * std::cos(2.0 * std::numbers::pi * fc / fs), a2 = -r * r;
    const double amp = rng.uniform(0.05, 0.2);
    double z1 = 0.0, z2 = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double u = static_cast<double>(i) / static_cast<double>(len);
      const double out = rng.uniform(-1.0, 1.0) + a1 * z1 + a2 * z2;
      z2 = z1;
      z1 = out;
      y[start + i] += amp * std::sin(std::numbers::pi * u) * out * (1.0 - r);
    }
  }
  double peak = 0.0;
  for (double v : y) peak = std::max(peak, std::fabs(v));
  if (peak > 0.0) {
    for (auto& v : y) v *= 0.5 / peak;
  }
  return Waveform{std::move(y), kSampleRate};
}

Tensor toy_embeddings(const Waveform& x, std::uint64_t projection_seed) {
  constexpr std::size_t kWindow = 1024;
  constexpr std::size_t kOffset = (kWindow - kEmbeddingHop) / 2;
  const std::size_t frames = (x.samples.size() + kEmbeddingHop - 1) / kEmbeddingHop;
  Rng rng(projection_seed);
  Tensor proj({kMelBins, kEmbeddingDim});
  for (auto& v : proj.data()) v = rng.normal() / std::sqrt(static_cast<double>(kMelBins));
  const auto& fb = mel_filterbank(kWindow);
  const std::size_t bins = kWindow / 2 + 1;
  Tensor out({frames, kEmbeddingDim});
  std::vector<double> logmel(kMelBins);
  for (std::size_t f = 0; f < frames; ++f) {
    Waveform w{std::vector<double>(kWindow, 0.0), kSampleRate};
    for (std::size_t i = 0; i < kWindow; ++i) {
      const auto src = static_cast<std::ptrdiff_t>(f * kEmbeddingHop + i) - static_cast<std::ptrdiff_t>(kOffset);
      if (src >= 0 && static_cast<std::size_t>(src) < x.samples.size()) w.samples[i] = x.samples[static_cast<std::size_t>(src)];
    }
    const Spectrogram s = stft(w, kWindow, kWindow);
    for (std::size_t m = 0; m < kMelBins; ++m) {
      double acc = 0.0;
      for (std::size_t b = 0; b < bins; ++b) acc += fb.matrix.at(m, b) * (s.re[b] * s.re[b] + s.im[b] * s.im[b]);
      logmel[m] = (std::log(acc + kLogMelFloor) + 2.0) / 5.0;
    }
    for (std::size_t d = 0; d < kEmbeddingDim; ++d) {
      double acc = 0.0;
      for (std::size_t m = 0; m < kMelBins; ++m) acc += logmel[m] * proj.at(m, d);
      out.at(f, d) = static_cast<double>(static_cast<float>(acc));
    }
  }
  return out;
}

std::vector<std::filesystem::path> make_toy_corpus(const std::filesystem::path& dir,
                                                   const ToyCorpusOptions& options) {
  if (options.utterances == 0) throw UsageError("toy corpus: need at least one utterance");
  if (!(options.min_seconds > 0.0) || options.max_seconds < options.min_seconds) {
    throw UsageError("toy corpus: bad duration range");
  }
  std::filesystem::create_directories(dir);
  Rng rng(options.seed);
  const std::uint64_t projection_seed = derive_seed(options.seed, 11);
  std::vector<std::filesystem::path> out;
  for (std::size_t u = 0; u < options.utterances; ++u) {
    const Waveform synth = synth_toy_utterance(rng, rng.uniform(options.min_seconds, options.max_seconds));
    char name[32];
    std::snprintf(name, sizeof name, "utt_%02zu.wav", u);
    const auto wav = dir / name;
    write_wav(wav, synth);
    // Embed the 16-bit signal the trainer will actually read.
    EmbeddingFile emb{"toy-logmel-projection", 0, 25.0F,
                      toy_embeddings(read_wav(wav), projection_seed)};
    write_embedding_file(embedding_path_for(wav), emb);
    out.push_back(wav);
  }
  return out;
}

}  // namespace txc
