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

// Objective evaluation: per-utterance SNR and multi-scale mel distance,
// t-distribution confidence intervals, WAV pair export, encoder ablations.

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "txcodec/bitstream.hpp"
#include "txcodec/codecnet.hpp"
#include "txcodec/trainer.hpp"

namespace txc {

inline constexpr double kSnrCapDb = 99.0;

struct PairMetrics {
  double snr_db = 0.0;
  double mel_distance = 0.0;
  double bitrate = 0.0;  // measured payload bps, 0 when not coded
};

// `synthesized` is trimmed or zero-padded to the reference length. DataError
// on a zero-energy reference; UsageError below 2048 samples.
PairMetrics eval_pair(const Waveform& reference, const Waveform& synthesized);

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double ci_low = 0.0;   // 95% two-sided, Student t with n-1 degrees of freedom
  double ci_high = 0.0;  // NaN bounds when n < 2
};

Summary summarize(std::span<const double> values);

struct EvalRow {
  std::string name;
  PairMetrics metrics;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  Summary snr_db;
  Summary mel_distance;
  Summary bitrate;
};

EvalReport make_report(std::vector<EvalRow> rows);
// One row per utterance, then mean / ci_low / ci_high rows.
std::string report_csv(const EvalReport& report);
void write_report_csv(const std::filesystem::path& path, const EvalReport& report);

using WavePair = std::pair<Waveform, Waveform>;  // (reference, synthesized)

// ref_i.wav / syn_i.wav plus manifest.csv (index,reference,synthesized).
void export_pairs(const std::filesystem::path& dir, std::span<const WavePair> pairs);

// Encodes, serializes, parses and decodes every item, then scores it. The
// decoded pairs are appended to `pairs` when given.
EvalReport evaluate_model(const CodecModel& model, const std::vector<CorpusItem>& items,
                          const BitrateAllocation& allocation, std::vector<WavePair>* pairs = nullptr);

struct AblationEntry {
  std::string name;
  BitrateAllocation allocation;
  EvalReport report;
  StepMetrics last;
};

struct AblationResult {
  std::vector<AblationEntry> entries;
  std::vector<std::string> ordering;  // best first: mean mel distance, then SNR
};

// Trains embeddings-only, CNN-only and combined (even split) codecs at the
// same bitrate with `base` and evaluates each on `eval`.
AblationResult run_ablation(const std::vector<CorpusItem>& train_items, const std::vector<CorpusItem>& eval,
                            const TrainConfig& base, std::uint32_t bitrate,
                            const StepCallback& on_step = {});
std::string ablation_report(const AblationResult& result);

}  // namespace txc
