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

// Alternating adversarial training of the codec on (segment, embedding) pairs.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "txcodec/codecnet.hpp"
#include "txcodec/losses.hpp"
#include "txcodec/signal.hpp"

namespace txc {

struct TrainConfig {
  double lr = 1e-4;
  std::size_t steps = 2000;
  std::size_t batch = 8;
  double segment_seconds = 1.28;
  std::uint64_t seed = 0;
  LossWeights weights;
  std::size_t segments_per_file = 10;
  double clip_norm = 10.0;
  std::size_t t_stages = 2;
  std::size_t c_stages = 1;
  std::size_t kmeans_iterations = 10;
  Precision precision = Precision::f64;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

// key=value lines; '#' starts a comment. Unknown keys and invalid values are
// UsageErrors naming `what` and the line.
TrainConfig parse_train_config(std::string_view text, const std::string& what = "config");
TrainConfig load_train_config(const std::filesystem::path& path);
void validate(const TrainConfig& config);

// One WAV with its embedding matrix.
struct CorpusItem {
  std::filesystem::path wav;
  Waveform audio;
  Tensor embeddings;  // frames x 1024 at 25 Hz
};

// Every *.wav in `dir` (sorted) with its .temb sibling. DataError names the
// missing directory or embedding file.
std::vector<CorpusItem> load_corpus(const std::filesystem::path& dir);

struct Batch {
  std::vector<Tensor> segments;    // B x [20480]
  std::vector<Tensor> embeddings;  // B x [32 x 1024]
  std::size_t size() const { return segments.size(); }
};

struct SegmentRef {
  std::size_t item = 0;
  std::size_t start = 0;  // sample offset, multiple of 640
  friend bool operator==(const SegmentRef&, const SegmentRef&) = default;
};

// Up to `segments_per_file` distinct 640-aligned segment starts per file,
// shuffled. Files shorter than one segment contribute nothing.
std::vector<SegmentRef> plan_epoch(const std::vector<CorpusItem>& corpus, std::size_t segments_per_file,
                                   Rng& rng);

// Endless deterministic batch sequence; epochs are re-planned as they run out.
class BatchStream {
 public:
  BatchStream(std::vector<CorpusItem> corpus, std::size_t batch, std::size_t segments_per_file,
              std::uint64_t seed);

  Batch next();
  Batch make(std::span<const SegmentRef> refs) const;
  std::size_t epoch() const { return epoch_; }
  const std::vector<CorpusItem>& corpus() const { return corpus_; }

 private:
  std::vector<CorpusItem> corpus_;
  std::size_t batch_;
  std::size_t segments_per_file_;
  Rng rng_;
  std::vector<SegmentRef> plan_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

BatchStream make_batches(const std::filesystem::path& corpus_dir, std::size_t batch,
                         std::size_t segments_per_file, std::uint64_t seed);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::size_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

// Bias-corrected Adam. `grads[i]` must match `params[i]` in shape.
void adam_step(std::span<const DiffNode> params, std::span<const Tensor> grads, AdamState& state,
               const AdamConfig& config);

// Scales `grads` so their joint L2 norm is at most `max_norm`; returns the norm
// before scaling.
double clip_global_norm(std::vector<Tensor>& grads, double max_norm);

struct StepMetrics {
  std::size_t step = 0;
  double adv_g = 0.0;
  double adv_d = 0.0;
  double feat = 0.0;
  double recon = 0.0;
  double quant = 0.0;
  double total = 0.0;  // weighted generator objective
};

std::string metrics_csv_header();
std::string metrics_csv_row(const StepMetrics& m);

struct TrainerState {
  AdamState theta;
  AdamState phi;
  std::size_t step = 0;
};

// k-means over the batch features, one cascade stage at a time on the
// residual of the stages before it.
void init_codebooks(CodecModel& model, const Batch& batch, std::size_t iterations, std::uint64_t seed);

// Codec forward for every batch element, theta trainable.
std::vector<CodecForward> forward_batch(const CodecModel& model, const Batch& batch);

// Hinge discriminator update on the detached reconstructions; theta untouched.
double discriminator_update(CodecModel& model, AdamState& adam, const Batch& batch,
                            std::span<const CodecForward> fwd, const TrainConfig& config);

// Weighted generator objective; phi untouched. Fills all but adv_d.
StepMetrics generator_update(CodecModel& model, AdamState& adam, const Batch& batch,
                             std::span<const CodecForward> fwd, const TrainConfig& config);

// Codebook init on first use, one discriminator update, one generator update.
// NumericError on a non-finite loss.
StepMetrics train_step(CodecModel& model, TrainerState& state, const Batch& batch,
                       const TrainConfig& config);

// Generator-side losses without updating anything.
StepMetrics evaluate_losses(const CodecModel& model, const Batch& batch, const TrainConfig& config);

using StepCallback = std::function<void(const StepMetrics&, const CodecModel&)>;

CodecModel train(const TrainConfig& config, BatchStream& batches, const StepCallback& on_step = {});

// Trains on `corpus_dir`, writes the checkpoint to `checkpoint` and one CSV
// row per step to `metrics_csv`.
CodecModel train_corpus(const TrainConfig& config, const std::filesystem::path& corpus_dir,
                        const std::filesystem::path& checkpoint, const std::filesystem::path& metrics_csv,
                        const StepCallback& on_step = {});

struct ToyCorpusOptions {
  std::size_t utterances = 20;
  std::uint64_t seed = 0;
  double min_seconds = 2.0;
  double max_seconds = 3.2;
};

// Harmonic tones with glides plus resonant-filtered noise bursts.
Waveform synth_toy_utterance(Rng& rng, double seconds);
// Framewise log-mel (1024-point window centered on each 640-sample frame)
// through a fixed Gaussian projection to 1024 dims; ceil(len/640) frames.
Tensor toy_embeddings(const Waveform& x, std::uint64_t projection_seed);
// Writes utt_NN.wav / utt_NN.temb pairs; returns the WAV paths.
std::vector<std::filesystem::path> make_toy_corpus(const std::filesystem::path& dir,
                                                   const ToyCorpusOptions& options);

}  // namespace txc
