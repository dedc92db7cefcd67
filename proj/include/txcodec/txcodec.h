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

// C interface to the txcodec speech codec.
//
// Every call returns a txc_status. On failure the message is available from
// txc_last_error() on the same thread until the next failing call. Handles
// are opaque; free them with the matching *_free function.

#ifndef TXCODEC_TXCODEC_H_
#define TXCODEC_TXCODEC_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define TXC_API __declspec(dllexport)
#else
#define TXC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum txc_status {
  TXC_OK = 0,
  TXC_ERR_USAGE = 1,   // bad argument, flag or configuration
  TXC_ERR_DATA = 2,    // malformed or inconsistent file or stream
  TXC_ERR_VERIFY = 3,  // an invariant property failed
  TXC_ERR_NUMERIC = 4, // non-finite value during training
  TXC_ERR_INTERNAL = 5
} txc_status;

typedef struct txc_model txc_model;

TXC_API const char* txc_version(void);
TXC_API const char* txc_last_error(void);

// ---- training ---------------------------------------------------------------

typedef struct txc_step_metrics {
  uint64_t step;
  double adv_g;
  double adv_d;
  double feat;
  double recon;
  double quant;
  double total;
} txc_step_metrics;

typedef void (*txc_step_fn)(const txc_step_metrics* metrics, void* user);

typedef struct txc_train_options {
  const char* config_path;  // key=value file, or NULL for defaults
  int has_seed;             // when nonzero, `seed` overrides the config
  uint64_t seed;
  uint64_t steps;           // 0 keeps the configured step count
  const char* metrics_csv;  // NULL writes <checkpoint>.metrics.csv
} txc_train_options;

// Trains on every WAV/TEMB pair in `corpus_dir` and writes a checkpoint.
TXC_API txc_status txc_train(const char* corpus_dir, const char* checkpoint_path,
                             const txc_train_options* options, txc_step_fn on_step, void* user);

// Synthetic corpus of tones and filtered noise with random-projection embeddings.
TXC_API txc_status txc_make_toy_corpus(const char* dir, size_t utterances, uint64_t seed);

// ---- models -----------------------------------------------------------------

TXC_API txc_status txc_model_load(const char* checkpoint_path, txc_model** out);
TXC_API void txc_model_free(txc_model* model);
TXC_API txc_status txc_model_stages(const txc_model* model, size_t* t_stages, size_t* c_stages);
// Writes the embedding-stream and CNN-stream codebooks as RVQC files.
TXC_API txc_status txc_model_export_codebooks(const txc_model* model, const char* t_path,
                                              const char* c_path);

// ---- coding -----------------------------------------------------------------

// `split` is "even", "third", "transformer-only" or "cnn-only".
TXC_API txc_status txc_plan_allocation(uint32_t total_bps, const char* split, size_t* t_stages,
                                       size_t* c_stages);

typedef struct txc_stream_info {
  uint32_t superframes;
  uint32_t samples;
  uint64_t payload_bits;
  uint64_t file_bytes;
  double measured_bps;
  uint64_t codebook_hash;
} txc_stream_info;

TXC_API txc_status txc_encode_file(const txc_model* model, const char* wav_path, const char* emb_path,
                                   uint32_t total_bps, const char* split, const char* stream_path,
                                   txc_stream_info* info);
TXC_API txc_status txc_decode_file(const txc_model* model, const char* stream_path, const char* wav_path,
                                   txc_stream_info* info);

// 6-bit MSB-first packing. `out` needs ceil(6 count / 8) bytes.
TXC_API txc_status txc_pack_indices(const uint32_t* indices, size_t count, uint8_t* out, size_t capacity,
                                    size_t* written);
TXC_API txc_status txc_unpack_indices(const uint8_t* bytes, size_t size, size_t count, uint32_t* out);

// ---- evaluation ---------------------------------------------------------------

typedef struct txc_eval_summary {
  size_t utterances;
  double snr_db_mean, snr_db_ci_low, snr_db_ci_high;
  double mel_mean, mel_ci_low, mel_ci_high;
  double bitrate_mean;
} txc_eval_summary;

// Codes every corpus item, writes the CSV report and, when `pairs_dir` is not
// NULL, the reference/synthesized WAV pairs.
TXC_API txc_status txc_evaluate(const txc_model* model, const char* corpus_dir, uint32_t total_bps,
                                const char* split, const char* report_csv, const char* pairs_dir,
                                txc_eval_summary* summary);

// Trains embeddings-only, CNN-only and combined codecs at `total_bps` and
// writes the comparison to `report_path`. `ordering` receives the ranking,
// best first, comma separated and NUL terminated.
TXC_API txc_status txc_ablation(const char* train_dir, const char* eval_dir, uint32_t total_bps,
                                const txc_train_options* options, const char* report_path,
                                char* ordering, size_t ordering_capacity, txc_step_fn on_step,
                                void* user);

// ---- verification -------------------------------------------------------------

typedef struct txc_property {
  const char* name;
  int passed;
  const char* detail;
  double seconds;
} txc_property;

typedef void (*txc_property_fn)(const txc_property* property, void* user);

// Runs the invariant suite. Returns TXC_ERR_VERIFY if any property fails;
// `failed` receives the count. `inject_pack_fault` flips a bit in every
// packed stream for the duration of the run.
TXC_API txc_status txc_verify(uint64_t seed, int inject_pack_fault, txc_property_fn on_property,
                              void* user, size_t* total, size_t* failed);

#ifdef __cplusplus
}
#endif

#endif  // TXCODEC_TXCODEC_H_
