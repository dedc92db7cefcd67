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

#include "txcodec/txcodec.h"

#include <algorithm>
#include <cstring>
#include <exception>
#include <fstream>
#include <new>
#include <string>
#include <vector>

#include "txcodec/binio.hpp"
#include "txcodec/bitstream.hpp"
#include "txcodec/codec.hpp"
#include "txcodec/codecnet.hpp"
#include "txcodec/embeddings.hpp"
#include "txcodec/errors.hpp"
#include "txcodec/evalharness.hpp"
#include "txcodec/trainer.hpp"
#include "txcodec/verify.hpp"

struct txc_model {
  txc::CodecModel model;
};

namespace {

thread_local std::string g_last_error;

txc_status fail(txc_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

// Runs `body` and maps exceptions onto status codes.
template <typename F>
txc_status guarded(F&& body) {
  try {
    body();
    return TXC_OK;
  } catch (const txc::Error& e) {
    return fail(static_cast<txc_status>(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(TXC_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(TXC_ERR_INTERNAL, e.what());
  }
}

void require_arg(const void* p, const char* name) {
  if (p == nullptr) throw txc::UsageError(std::string("missing argument: ") + name);
}

txc_step_metrics to_c(const txc::StepMetrics& m) {
  return {m.step, m.adv_g, m.adv_d, m.feat, m.recon, m.quant, m.total};
}

txc::TrainConfig resolve_config(const txc_train_options* options) {
  txc::TrainConfig config;
  if (options != nullptr && options->config_path != nullptr) config = txc::load_train_config(options->config_path);
  if (options != nullptr && options->has_seed) config.seed = options->seed;
  if (options != nullptr && options->steps != 0) config.steps = options->steps;
  txc::validate(config);
  return config;
}

txc::StepCallback step_callback(txc_step_fn on_step, void* user) {
  if (on_step == nullptr) return {};
  return [on_step, user](const txc::StepMetrics& m, const txc::CodecModel&) {
    const txc_step_metrics c = to_c(m);
    on_step(&c, user);
  };
}

void fill_info(const txc::EncodedStream& s, std::size_t file_bytes, txc_stream_info* info) {
  if (info == nullptr) return;
  info->superframes = s.superframes;
  info->samples = s.sample_count;
  info->payload_bits = s.payload_bits();
  info->file_bytes = file_bytes;
  const double duration = static_cast<double>(s.superframes) * txc::kSuperframeSamples / txc::kSampleRate;
  info->measured_bps = txc::measured_bitrate(s, duration);
  info->codebook_hash = s.codebook_hash;
}

}  // namespace

extern "C" {

const char* txc_version(void) { return "1.0.0"; }

const char* txc_last_error(void) { return g_last_error.c_str(); }

txc_status txc_train(const char* corpus_dir, const char* checkpoint_path, const txc_train_options* options,
                     txc_step_fn on_step, void* user) {
  return guarded([&] {
    require_arg(corpus_dir, "corpus_dir");
    require_arg(checkpoint_path, "checkpoint_path");
    const txc::TrainConfig config = resolve_config(options);
    const std::string csv = options != nullptr && options->metrics_csv != nullptr
                                ? std::string(options->metrics_csv)
                                : std::string(checkpoint_path) + ".metrics.csv";
    txc::train_corpus(config, corpus_dir, checkpoint_path, csv, step_callback(on_step, user));
  });
}

txc_status txc_make_toy_corpus(const char* dir, size_t utterances, uint64_t seed) {
  return guarded([&] {
    require_arg(dir, "dir");
    if (utterances == 0) throw txc::UsageError("toy corpus needs at least one utterance");
    txc::ToyCorpusOptions opt;
    opt.utterances = utterances;
    opt.seed = seed;
    txc::make_toy_corpus(dir, opt);
  });
}

txc_status txc_model_load(const char* checkpoint_path, txc_model** out) {
  return guarded([&] {
    require_arg(checkpoint_path, "checkpoint_path");
    require_arg(out, "out");
    *out = nullptr;
    *out = new txc_model{txc::load_checkpoint(checkpoint_path)};
  });
}

void txc_model_free(txc_model* model) { delete model; }

txc_status txc_model_stages(const txc_model* model, size_t* t_stages, size_t* c_stages) {
  return guarded([&] {
    require_arg(model, "model");
    if (t_stages != nullptr) *t_stages = model->model.t_rvq.stage_count();
    if (c_stages != nullptr) *c_stages = model->model.c_rvq.stage_count();
  });
}

txc_status txc_model_export_codebooks(const txc_model* model, const char* t_path, const char* c_path) {
  return guarded([&] {
    require_arg(model, "model");
    if (t_path != nullptr && model->model.t_rvq.stage_count() > 0) txc::write_codebooks(t_path, model->model.t_rvq);
    if (c_path != nullptr && model->model.c_rvq.stage_count() > 0) txc::write_codebooks(c_path, model->model.c_rvq);
  });
}

txc_status txc_plan_allocation(uint32_t total_bps, const char* split, size_t* t_stages, size_t* c_stages) {
  return guarded([&] {
    require_arg(split, "split");
    const auto a = txc::plan_allocation(total_bps, txc::parse_split(split));
    if (t_stages != nullptr) *t_stages = a.t_stages;
    if (c_stages != nullptr) *c_stages = a.c_stages;
  });
}

txc_status txc_encode_file(const txc_model* model, const char* wav_path, const char* emb_path, uint32_t total_bps,
                           const char* split, const char* stream_path, txc_stream_info* info) {
  return guarded([&] {
    require_arg(model, "model");
    require_arg(wav_path, "wav_path");
    require_arg(emb_path, "emb_path");
    require_arg(split, "split");
    require_arg(stream_path, "stream_path");
    const auto allocation = txc::plan_allocation(total_bps, txc::parse_split(split));
    const txc::Waveform x = txc::read_wav(wav_path);
    const txc::EmbeddingFile emb = txc::read_embedding_file(emb_path);
    const auto stream = txc::encode_waveform(model->model, x, emb.values, allocation);
    const auto bytes = txc::serialize_stream(stream);
    txc::write_file_bytes(stream_path, bytes);
    fill_info(stream, bytes.size(), info);
  });
}

txc_status txc_decode_file(const txc_model* model, const char* stream_path, const char* wav_path,
                           txc_stream_info* info) {
  return guarded([&] {
    require_arg(model, "model");
    require_arg(stream_path, "stream_path");
    require_arg(wav_path, "wav_path");
    const auto bytes = txc::read_file_bytes(stream_path);
    const auto stream = txc::parse_stream(bytes);
    const txc::Waveform y = txc::decode_stream(model->model, stream);
    txc::write_wav(wav_path, y);
    fill_info(stream, bytes.size(), info);
  });
}

txc_status txc_pack_indices(const uint32_t* indices, size_t count, uint8_t* out, size_t capacity,
                            size_t* written) {
  return guarded([&] {
    if (count > 0) require_arg(indices, "indices");
    const auto bytes = txc::pack_indices({indices, count});
    if (written != nullptr) *written = bytes.size();
    if (bytes.size() > capacity) {
      throw txc::UsageError("pack: output needs " + std::to_string(bytes.size()) + " bytes, capacity " +
                            std::to_string(capacity));
    }
    if (!bytes.empty()) std::memcpy(out, bytes.data(), bytes.size());
  });
}

txc_status txc_unpack_indices(const uint8_t* bytes, size_t size, size_t count, uint32_t* out) {
  return guarded([&] {
    if (size > 0) require_arg(bytes, "bytes");
    if (count > 0) require_arg(out, "out");
    const auto values = txc::unpack_indices({bytes, size}, count);
    std::copy(values.begin(), values.end(), out);
  });
}

txc_status txc_evaluate(const txc_model* model, const char* corpus_dir, uint32_t total_bps, const char* split,
                        const char* report_csv, const char* pairs_dir, txc_eval_summary* summary) {
  return guarded([&] {
    require_arg(model, "model");
    require_arg(corpus_dir, "corpus_dir");
    require_arg(split, "split");
    const auto allocation = txc::plan_allocation(total_bps, txc::parse_split(split));
    const auto items = txc::load_corpus(corpus_dir);
    std::vector<txc::WavePair> pairs;
    const auto report = txc::evaluate_model(model->model, items, allocation, pairs_dir ? &pairs : nullptr);
    if (report_csv != nullptr) txc::write_report_csv(report_csv, report);
    if (pairs_dir != nullptr) txc::export_pairs(pairs_dir, pairs);
    if (summary != nullptr) {
      summary->utterances = report.rows.size();
      summary->snr_db_mean = report.snr_db.mean;
      summary->snr_db_ci_low = report.snr_db.ci_low;
      summary->snr_db_ci_high = report.snr_db.ci_high;
      summary->mel_mean = report.mel_distance.mean;
      summary->mel_ci_low = report.mel_distance.ci_low;
      summary->mel_ci_high = report.mel_distance.ci_high;
      summary->bitrate_mean = report.bitrate.mean;
    }
  });
}

txc_status txc_ablation(const char* train_dir, const char* eval_dir, uint32_t total_bps,
                        const txc_train_options* options, const char* report_path, char* ordering,
                        size_t ordering_capacity, txc_step_fn on_step, void* user) {
  return guarded([&] {
    require_arg(train_dir, "train_dir");
    require_arg(eval_dir, "eval_dir");
    const txc::TrainConfig config = resolve_config(options);
    const auto result = txc::run_ablation(txc::load_corpus(train_dir), txc::load_corpus(eval_dir), config,
                                          total_bps, step_callback(on_step, user));
    if (report_path != nullptr) {
      std::ofstream out(report_path);
      out << txc::ablation_report(result);
      if (!out) throw txc::DataError(std::string("cannot write ") + report_path);
    }
    if (ordering != nullptr && ordering_capacity > 0) {
      std::string joined;
      for (const auto& name : result.ordering) joined += (joined.empty() ? "" : ",") + name;
      const std::size_t n = std::min(joined.size(), ordering_capacity - 1);
      std::memcpy(ordering, joined.data(), n);
      ordering[n] = '\0';
    }
  });
}

txc_status txc_verify(uint64_t seed, int inject_pack_fault, txc_property_fn on_property, void* user,
                      size_t* total, size_t* failed) {
  std::size_t n_failed = 0;
  std::size_t n_total = 0;
  const txc_status status = guarded([&] {
    txc::VerifyOptions opt;
    opt.seed = seed;
    opt.inject_pack_fault = inject_pack_fault != 0;
    txc::run_verification(opt, [&](const txc::PropertyResult& r) {
      ++n_total;
      if (!r.passed) ++n_failed;
      if (on_property != nullptr) {
        const txc_property p{r.name.c_str(), r.passed ? 1 : 0, r.detail.c_str(), r.seconds};
        on_property(&p, user);
      }
    });
  });
  if (total != nullptr) *total = n_total;
  if (failed != nullptr) *failed = n_failed;
  if (status != TXC_OK) return status;
  if (n_failed > 0) return fail(TXC_ERR_VERIFY, std::to_string(n_failed) + " of " + std::to_string(n_total) +
                                                    " properties failed");
  return TXC_OK;
}

}  // extern "C"
