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

#include "txcodec/evalharness.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "txcodec/codec.hpp"
#include "txcodec/errors.hpp"
#include "txcodec/losses.hpp"

namespace txc {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

PairMetrics eval_pair(const Waveform& reference, const Waveform& synthesized) {
  const std::size_t n = reference.samples.size();
  std::vector<double> syn(n, 0.0);
  std::copy_n(synthesized.samples.begin(), std::min(n, synthesized.samples.size()), syn.begin());
  double ref_energy = 0.0, err_energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ref_energy += reference.samples[i] * reference.samples[i];
    const double d = reference.samples[i] - syn[i];
    err_energy += d * d;
  }
  if (!(ref_energy > 0.0)) throw DataError("eval_pair: reference has zero energy");
  PairMetrics m;
  m.snr_db = err_energy == 0.0 ? kSnrCapDb : std::min(kSnrCapDb, 10.0 * std::log10(ref_energy / err_energy));
  PrecisionScope scope(Precision::f64);
  m.mel_distance = reconstruction_loss(DiffNode::constant(Tensor({n}, reference.samples)),
                                       DiffNode::constant(Tensor({n}, std::move(syn))))
                       .value()
                       .item();
  return m;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  s.n = values.size();
  if (s.n == 0) {
    s.mean = s.ci_low = s.ci_high = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n < 2) {
    s.ci_low = s.ci_high = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  const double sd = std::sqrt(ss / static_cast<double>(s.n - 1));
  const boost::math::students_t dist(static_cast<double>(s.n - 1));
  const double half = boost::math::quantile(dist, 0.975) * sd / std::sqrt(static_cast<double>(s.n));
  s.ci_low = s.mean - half;
  s.ci_high = s.mean + half;
  return s;
}

EvalReport make_report(std::vector<EvalRow> rows) {
  EvalReport r;
  r.rows = std::move(rows);
  std::vector<double> snr, mel, bps;
  for (const auto& row : r.rows) {
    snr.push_back(row.metrics.snr_db);
    mel.push_back(row.metrics.mel_distance);
    bps.push_back(row.metrics.bitrate);
  }
  r.snr_db = summarize(snr);
  r.mel_distance = summarize(mel);
  r.bitrate = summarize(bps);
  return r;
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "utterance,snr_db,mel_distance,bitrate_bps\n";
  for (const auto& row : report.rows) {
    out << row.name << ',' << fmt(row.metrics.snr_db) << ',' << fmt(row.metrics.mel_distance) << ','
        << fmt(row.metrics.bitrate) << '\n';
  }
  out << "mean," << fmt(report.snr_db.mean) << ',' << fmt(report.mel_distance.mean) << ','
      << fmt(report.bitrate.mean) << '\n';
  out << "ci95_low," << fmt(report.snr_db.ci_low) << ',' << fmt(report.mel_distance.ci_low) << ','
      << fmt(report.bitrate.ci_low) << '\n';
  out << "ci95_high," << fmt(report.snr_db.ci_high) << ',' << fmt(report.mel_distance.ci_high) << ','
      << fmt(report.bitrate.ci_high) << '\n';
  return out.str();
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  out << report_csv(report);
  if (!out) throw DataError("cannot write report " + path.string());
}

void export_pairs(const std::filesystem::path& dir, std::span<const WavePair> pairs) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw DataError("cannot write " + (dir / "manifest.csv").string());
  manifest << "index,reference,synthesized\n";
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::string ref = "ref_" + std::to_string(i) + ".wav";
    const std::string syn = "syn_" + std::to_string(i) + ".wav";
    write_wav(dir / ref, pairs[i].first);
    write_wav(dir / syn, pairs[i].second);
    manifest << i << ',' << ref << ',' << syn << '\n';
  }
  if (!manifest) throw DataError("failed writing " + (dir / "manifest.csv").string());
}

EvalReport evaluate_model(const CodecModel& model, const std::vector<CorpusItem>& items,
                          const BitrateAllocation& allocation, std::vector<WavePair>* pairs) {
  std::vector<EvalRow> rows;
  for (const auto& item : items) {
    const EncodedStream coded = encode_waveform(model, item.audio, item.embeddings, allocation);
    const EncodedStream received = parse_stream(serialize_stream(coded));
    Waveform syn = decode_stream(model, received);
    PairMetrics m = eval_pair(item.audio, syn);
    m.bitrate = measured_bitrate(received, item.audio.duration_seconds());
    rows.push_back({item.wav.stem().string(), m});
    if (pairs != nullptr) pairs->emplace_back(item.audio, std::move(syn));
  }
  return make_report(std::move(rows));
}

AblationResult run_ablation(const std::vector<CorpusItem>& train_items, const std::vector<CorpusItem>& eval,
                            const TrainConfig& base, std::uint32_t bitrate, const StepCallback& on_step) {
  const std::array<std::pair<const char*, AllocationSplit>, 3> variants{{
      {"embeddings-only", AllocationSplit::transformer_only},
      {"cnn-only", AllocationSplit::cnn_only},
      {"combined", AllocationSplit::even},
  }};
  AblationResult result;
  for (const auto& [name, split] : variants) {
    AblationEntry entry;
    entry.name = name;
    entry.allocation = plan_allocation(bitrate, split);
    TrainConfig cfg = base;
    cfg.t_stages = entry.allocation.t_stages;
    cfg.c_stages = entry.allocation.c_stages;
    BatchStream batches(train_items, cfg.batch, cfg.segments_per_file, cfg.seed);
    const CodecModel model = train(cfg, batches, [&](const StepMetrics& m, const CodecModel& mdl) {
      entry.last = m;
      if (on_step) on_step(m, mdl);
    });
    entry.report = evaluate_model(model, eval, entry.allocation);
    result.entries.push_back(std::move(entry));
  }
  std::vector<const AblationEntry*> order;
  for (const auto& e : result.entries) order.push_back(&e);
  std::stable_sort(order.begin(), order.end(), [](const AblationEntry* a, const AblationEntry* b) {
    if (a->report.mel_distance.mean != b->report.mel_distance.mean) {
      return a->report.mel_distance.mean < b->report.mel_distance.mean;
    }
    return a->report.snr_db.mean > b->report.snr_db.mean;
  });
  for (const auto* e : order) result.ordering.push_back(e->name);
  return result;
}

std::string ablation_report(const AblationResult& result) {
  std::ostringstream out;
  out << "variant,t_stages,c_stages,bitrate_bps,snr_db_mean,snr_db_ci_low,snr_db_ci_high,"
         "mel_distance_mean,mel_distance_ci_low,mel_distance_ci_high,final_recon\n";
  for (const auto& e : result.entries) {
    out << e.name << ',' << e.allocation.t_stages << ',' << e.allocation.c_stages << ','
        << e.allocation.total_bps << ',' << fmt(e.report.snr_db.mean) << ',' << fmt(e.report.snr_db.ci_low)
        << ',' << fmt(e.report.snr_db.ci_high) << ',' << fmt(e.report.mel_distance.mean) << ','
        << fmt(e.report.mel_distance.ci_low) << ',' << fmt(e.report.mel_distance.ci_high) << ','
        << fmt(e.last.recon) << '\n';
  }
  out << "ordering";
  for (std::size_t i = 0; i < result.ordering.size(); ++i) out << (i == 0 ? "," : " > ") << result.ordering[i];
  out << '\n';
  return out.str();
}

}  // namespace txc
