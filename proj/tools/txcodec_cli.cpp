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

// txcodec command-line front end over the C API.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 verification failure.

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "txcodec/txcodec.h"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

int exit_code(txc_status s) {
  switch (s) {
    case TXC_OK:
      return 0;
    case TXC_ERR_USAGE:
      return kExitUsage;
    case TXC_ERR_VERIFY:
      return 3;
    default:
      return kExitData;
  }
}

int report(txc_status s, const char* cmd) {
  if (s != TXC_OK) std::fprintf(stderr, "txcodec %s: %s\n", cmd, txc_last_error());
  return exit_code(s);
}

// --seed wins; RVQ_SEED is the fallback.
std::optional<std::uint64_t> resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return flag;
  const char* env = std::getenv("RVQ_SEED");
  if (env == nullptr || *env == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (*end != '\0') throw CLI::ValidationError("RVQ_SEED", std::string("not an unsigned integer: ") + env);
  return v;
}

txc_train_options train_options(const std::string& config, const std::optional<std::uint64_t>& seed,
                                std::uint64_t steps, const std::string& metrics) {
  txc_train_options o{};
  o.config_path = config.empty() ? nullptr : config.c_str();
  o.has_seed = seed.has_value();
  o.seed = seed.value_or(0);
  o.steps = steps;
  o.metrics_csv = metrics.empty() ? nullptr : metrics.c_str();
  return o;
}

void print_step(const txc_step_metrics* m, void* user) {
  const auto every = *static_cast<const std::uint64_t*>(user);
  if (every == 0 || m->step % every != 0) return;
  std::printf("step %" PRIu64 " recon %.6g adv_g %.4g adv_d %.4g feat %.4g quant %.4g total %.6g\n", m->step,
              m->recon, m->adv_g, m->adv_d, m->feat, m->quant, m->total);
  std::fflush(stdout);
}

void print_property(const txc_property* p, void*) {
  std::printf("%s %-28s %s (%.2f s)\n", p->passed ? "PASS" : "FAIL", p->name, p->detail, p->seconds);
  std::fflush(stdout);
}

struct ModelHandle {
  txc_model* model = nullptr;
  ~ModelHandle() { txc_model_free(model); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"txcodec: low-bitrate neural speech codec"};
  app.require_subcommand(1);

  std::string config, corpus, out, ckpt, in, emb, split = "even", report_path, pairs, metrics;
  std::string train_dir, eval_dir, t_out, c_out;
  std::optional<std::uint64_t> seed;
  std::uint64_t steps = 0, log_every = 50;
  std::uint32_t bitrate = 600;
  std::size_t utterances = 20;
  bool inject_fault = false;

  auto* train = app.add_subcommand("train", "Train a codec on a WAV/TEMB corpus");
  train->add_option("--config", config, "key=value training config")->check(CLI::ExistingFile);
  train->add_option("--corpus", corpus, "corpus directory")->required();
  train->add_option("--out", out, "checkpoint path")->required();
  train->add_option("--metrics", metrics, "per-step CSV (default <out>.metrics.csv)");
  train->add_option("--steps", steps, "override the configured step count");
  train->add_option("--seed", seed, "run seed (fallback: RVQ_SEED)");
  train->add_option("--log-every", log_every, "print metrics every N steps, 0 silences");

  auto* encode = app.add_subcommand("encode", "Encode a WAV file to a bitstream");
  encode->add_option("--ckpt", ckpt, "checkpoint")->required();
  encode->add_option("--bitrate", bitrate, "total bitrate")->required();
  encode->add_option("--split", split, "bit split")->check(CLI::IsMember({"even", "third"}));
  encode->add_option("--in", in, "input WAV")->required();
  encode->add_option("--emb", emb, "embedding file")->required();
  encode->add_option("--out", out, "output stream")->required();

  auto* decode = app.add_subcommand("decode", "Decode a bitstream to a WAV file");
  decode->add_option("--ckpt", ckpt, "checkpoint")->required();
  decode->add_option("--in", in, "input stream")->required();
  decode->add_option("--out", out, "output WAV")->required();

  auto* eval = app.add_subcommand("eval", "Code a corpus and report SNR and mel distance");
  eval->add_option("--ckpt", ckpt, "checkpoint")->required();
  eval->add_option("--corpus", corpus, "corpus directory")->required();
  eval->add_option("--bitrate", bitrate, "total bitrate");
  eval->add_option("--split", split, "bit split")->check(CLI::IsMember({"even", "third"}));
  eval->add_option("--report", report_path, "CSV report")->required();
  eval->add_option("--pairs", pairs, "directory for reference/synthesized WAV pairs");

  auto* ablation = app.add_subcommand("ablation", "Compare embeddings-only, CNN-only and combined codecs");
  ablation->add_option("--train", train_dir, "training corpus")->required();
  ablation->add_option("--eval", eval_dir, "evaluation corpus")->required();
  ablation->add_option("--bitrate", bitrate, "total bitrate");
  ablation->add_option("--config", config, "key=value training config")->check(CLI::ExistingFile);
  ablation->add_option("--steps", steps, "training steps per codec");
  ablation->add_option("--seed", seed, "run seed (fallback: RVQ_SEED)");
  ablation->add_option("--report", report_path, "report path")->required();
  ablation->add_option("--log-every", log_every, "print metrics every N steps, 0 silences");

  auto* verify = app.add_subcommand("verify", "Run the gradient, quantizer and bitstream invariant suite");
  verify->add_option("--seed", seed, "suite seed (fallback: RVQ_SEED)");
  verify->add_flag("--inject-pack-fault", inject_fault, "flip a bit in every packed stream");

  auto* codebooks = app.add_subcommand("codebooks", "Export the codebooks of a checkpoint");
  codebooks->add_option("--ckpt", ckpt, "checkpoint")->required();
  codebooks->add_option("--t-out", t_out, "embedding-stream codebooks (RVQC)");
  codebooks->add_option("--c-out", c_out, "CNN-stream codebooks (RVQC)");

  auto* corpus_cmd = app.add_subcommand("make-corpus", "Write a synthetic tone/noise corpus with embeddings");
  corpus_cmd->add_option("--out", out, "output directory")->required();
  corpus_cmd->add_option("--utterances", utterances, "utterance count")->check(CLI::PositiveNumber);
  corpus_cmd->add_option("--seed", seed, "corpus seed (fallback: RVQ_SEED)");

  try {
    app.parse(argc, argv);
    seed = resolve_seed(seed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "txcodec: %s\n", e.what());
    return kExitUsage;
  }

  if (*train) {
    const auto opt = train_options(config, seed, steps, metrics);
    return report(txc_train(corpus.c_str(), out.c_str(), &opt, print_step, &log_every), "train");
  }
  if (*encode || *decode || *eval || *codebooks) {
    ModelHandle h;
    if (const auto s = txc_model_load(ckpt.c_str(), &h.model); s != TXC_OK) return report(s, "load");
    if (*encode) {
      txc_stream_info info{};
      const auto s = txc_encode_file(h.model, in.c_str(), emb.c_str(), bitrate, split.c_str(), out.c_str(), &info);
      if (s != TXC_OK) return report(s, "encode");
      std::printf("%s: %" PRIu32 " super-frames, %" PRIu64 " payload bits, %" PRIu64
                  " bytes, measured %.6g bps\n",
                  out.c_str(), info.superframes, info.payload_bits, info.file_bytes, info.measured_bps);
      return 0;
    }
    if (*decode) {
      txc_stream_info info{};
      const auto s = txc_decode_file(h.model, in.c_str(), out.c_str(), &info);
      if (s != TXC_OK) return report(s, "decode");
      std::printf("%s: %" PRIu32 " samples\n", out.c_str(), info.samples);
      return 0;
    }
    if (*eval) {
      txc_eval_summary sum{};
      const auto s = txc_evaluate(h.model, corpus.c_str(), bitrate, split.c_str(), report_path.c_str(),
                                  pairs.empty() ? nullptr : pairs.c_str(), &sum);
      if (s != TXC_OK) return report(s, "eval");
      std::printf("%zu utterances: snr %.3f dB [%.3f, %.3f], mel %.6g [%.6g, %.6g], %.6g bps\n", sum.utterances,
                  sum.snr_db_mean, sum.snr_db_ci_low, sum.snr_db_ci_high, sum.mel_mean, sum.mel_ci_low,
                  sum.mel_ci_high, sum.bitrate_mean);
      return 0;
    }
    return report(txc_model_export_codebooks(h.model, t_out.empty() ? nullptr : t_out.c_str(),
                                             c_out.empty() ? nullptr : c_out.c_str()),
                  "codebooks");
  }
  if (*ablation) {
    const auto opt = train_options(config, seed, steps, "");
    char ordering[256];
    const auto s = txc_ablation(train_dir.c_str(), eval_dir.c_str(), bitrate, &opt, report_path.c_str(), ordering,
                                sizeof ordering, print_step, &log_every);
    if (s != TXC_OK) return report(s, "ablation");
    std::printf("ordering (best first): %s\n", ordering);
    return 0;
  }
  if (*verify) {
    std::size_t total = 0, failed = 0;
    const auto s = txc_verify(seed.value_or(0), inject_fault ? 1 : 0, print_property, nullptr, &total, &failed);
    if (s == TXC_OK || s == TXC_ERR_VERIFY) std::printf("%zu/%zu properties passed\n", total - failed, total);
    return report(s, "verify");
  }
  const auto s = txc_make_toy_corpus(out.c_str(), utterances, seed.value_or(0));
  if (s == TXC_OK) std::printf("%zu utterances written to %s\n", utterances, out.c_str());
  return report(s, "make-corpus");
}
