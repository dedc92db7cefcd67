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

#include <cmath>
#include <fstream>
#include <set>

#include "doctest.h"
#include "test_util.hpp"
#include "txcodec/embeddings.hpp"
#include "txcodec/errors.hpp"
#include "txcodec/trainer.hpp"

using namespace txc;
using txc::testing::random_tensor;
using txc::testing::TempDir;

namespace {

CorpusItem item(std::size_t samples, Rng& rng) {
  CorpusItem it;
  for (std::size_t i = 0; i < samples; ++i) it.audio.samples.push_back(rng.uniform(-0.5, 0.5));
  it.embeddings = random_tensor(rng, {(samples + 639) / 640, kEmbeddingDim});
  return it;
}

std::vector<Tensor> snapshot(const ParameterSet& set) {
  std::vector<Tensor> out;
  for (const auto& [_, p] : set.items()) out.push_back(p.value());
  return out;
}

bool same(const std::vector<Tensor>& a, const ParameterSet& set) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i] == set.items()[i].second.value())) return false;
  }
  return true;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.batch = 1;
  c.steps = 4;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("Adam update") {
  const DiffNode w = DiffNode::parameter(Tensor({3}, {1.0, -2.0, 0.5}));
  const std::vector<DiffNode> params{w};
  AdamState state;
  AdamConfig cfg;
  cfg.lr = 0.01;

  adam_step(params, std::vector<Tensor>{Tensor({3})}, state, cfg);
  CHECK(w.value().vec() == std::vector<double>{1.0, -2.0, 0.5});
  CHECK(state.step == 1);
  for (double v : state.m[0].data()) CHECK(v == 0.0);
  for (double v : state.v[0].data()) CHECK(v == 0.0);

  const DiffNode s = DiffNode::parameter(Tensor({1}, {0.0}));
  const std::vector<DiffNode> sp{s};
  AdamState st;
  adam_step(sp, std::vector<Tensor>{Tensor({1}, {1.0})}, st, cfg);
  CHECK(s.value()[0] == doctest::Approx(-0.01).epsilon(1e-6));
  const double after_one = s.value()[0];
  adam_step(sp, std::vector<Tensor>{Tensor({1}, {1.0})}, st, cfg);
  CHECK(std::fabs(s.value()[0] - after_one) <= 0.01);

  CHECK_THROWS_AS(adam_step(sp, std::vector<Tensor>{Tensor({2})}, st, cfg), UsageError);
}

TEST_CASE("global norm clipping") {
  std::vector<Tensor> g{Tensor({2}, {3.0, 0.0}), Tensor({1}, {4.0})};
  CHECK(clip_global_norm(g, 10.0) == doctest::Approx(5.0));
  CHECK(g[0][0] == 3.0);
  CHECK(clip_global_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(g[0][0] == doctest::Approx(0.6));
  CHECK(g[1][0] == doctest::Approx(0.8));
}

TEST_CASE("config parsing") {
  const auto c = parse_train_config("# toy\nlr = 0.001\nsteps=50\nbatch = 4  # small\nprecision=f32\nweight_feat=0\n");
  CHECK(c.lr == 0.001);
  CHECK(c.steps == 50);
  CHECK(c.batch == 4);
  CHECK(c.precision == Precision::f32);
  CHECK(c.weights.feat == 0.0);
  CHECK(c.weights.quant == 0.4);
  const TrainConfig d;
  CHECK(d.lr == 1e-4);
  CHECK(d.segment_seconds * 16000 == 20480);
  CHECK_THROWS_WITH_AS(parse_train_config("lr=1\nbogus=3\n"), doctest::Contains("config:2"), UsageError);
  CHECK_THROWS_AS(parse_train_config("lr=abc\n"), UsageError);
  CHECK_THROWS_AS(parse_train_config("lr=-1\n"), UsageError);
  CHECK_THROWS_AS(parse_train_config("segment_seconds=1.0\n"), UsageError);
  CHECK_THROWS_AS(parse_train_config("precision=f16\n"), UsageError);
  CHECK_THROWS_AS(parse_train_config("steps\n"), UsageError);
  CHECK_THROWS_AS(load_train_config("/nonexistent/txcodec.cfg"), Error);
}

TEST_CASE("epoch planning") {
  Rng rng(1);
  std::vector<CorpusItem> corpus;
  corpus.push_back(item(48000, rng));
  corpus.push_back(item(16000, rng));
  corpus.push_back(item(20480, rng));
  const auto plan = plan_epoch(corpus, 10, rng);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::size_t from_first = 0;
  for (const auto& r : plan) {
    CHECK(r.item != 1);
    CHECK(r.start % 640 == 0);
    CHECK(r.start + 20480 <= corpus[r.item].audio.samples.size());
    seen.insert({r.item, r.start});
    if (r.item == 0) ++from_first;
  }
  CHECK(seen.size() == plan.size());
  CHECK(from_first == 10);
  CHECK(plan.size() == 11);
}

TEST_CASE("batch streams are deterministic") {
  Rng rng(2);
  std::vector<CorpusItem> corpus;
  for (int i = 0; i < 3; ++i) corpus.push_back(item(30000, rng));
  BatchStream a(corpus, 4, 10, 7), b(corpus, 4, 10, 7), c(corpus, 4, 10, 8);
  bool differs = false;
  for (int i = 0; i < 12; ++i) {
    const Batch x = a.next(), y = b.next(), z = c.next();
    REQUIRE(x.size() == 4);
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(x.segments[j] == y.segments[j]);
      CHECK(x.embeddings[j] == y.embeddings[j]);
      CHECK(x.segments[j].shape() == Shape{20480});
      CHECK(x.embeddings[j].shape() == Shape{32, kEmbeddingDim});
      differs = differs || !(x.segments[j] == z.segments[j]);
    }
  }
  CHECK(a.epoch() > 0);
  CHECK(differs);
}

TEST_CASE("corpus loading") {
  TempDir dir("corpus");
  CHECK_THROWS_WITH_AS(load_corpus(dir / "nope"), doctest::Contains("not found"), DataError);
  Rng rng(3);
  const CorpusItem it = item(24000, rng);
  write_wav(dir / "a.wav", it.audio);
  CHECK_THROWS_AS(load_corpus(dir.path()), DataError);
  EmbeddingFile ef;
  ef.model_id = "test";
  ef.values = it.embeddings;
  write_embedding_file(dir / "a.temb", ef);
  const auto corpus = load_corpus(dir.path());
  REQUIRE(corpus.size() == 1);
  CHECK(corpus[0].embeddings.shape() == it.embeddings.shape());
}

TEST_CASE("parameter partition across the two updates") {
  Rng rng(4);
  std::vector<CorpusItem> corpus{item(24000, rng)};
  BatchStream stream(corpus, 1, 10, 1);
  const Batch batch = stream.next();
  TrainConfig cfg = tiny_config();
  CodecModel model(ModelConfig{cfg.t_stages, cfg.c_stages, cfg.seed});
  init_codebooks(model, batch, cfg.kmeans_iterations, cfg.seed);
  TrainerState state;

  const auto theta0 = snapshot(model.theta), phi0 = snapshot(model.phi);
  const auto fwd = forward_batch(model, batch);
  discriminator_update(model, state.phi, batch, fwd, cfg);
  CHECK(same(theta0, model.theta));
  CHECK_FALSE(same(phi0, model.phi));

  const auto phi1 = snapshot(model.phi);
  const StepMetrics m = generator_update(model, state.theta, batch, fwd, cfg);
  CHECK(same(phi1, model.phi));
  CHECK_FALSE(same(theta0, model.theta));
  for (double v : {m.adv_g, m.feat, m.recon, m.quant, m.total}) CHECK(std::isfinite(v));
}

TEST_CASE("reconstruction-only steps reduce the reconstruction loss on a fixed batch") {
  Rng rng(5);
  std::vector<CorpusItem> corpus{item(24000, rng)};
  BatchStream stream(corpus, 1, 10, 2);
  const Batch batch = stream.next();
  TrainConfig cfg = tiny_config();
  cfg.weights.adv = 0.0;
  cfg.weights.feat = 0.0;
  CodecModel model(ModelConfig{cfg.t_stages, cfg.c_stages, cfg.seed});
  TrainerState state;
  const StepMetrics first = train_step(model, state, batch, cfg);
  for (int i = 1; i < 50; ++i) train_step(model, state, batch, cfg);
  const StepMetrics after = evaluate_losses(model, batch, cfg);
  MESSAGE("recon " << first.recon << " -> " << after.recon);
  CHECK(after.recon < first.recon);
}

TEST_CASE("fixed seed gives bit-identical metrics and models") {
  TempDir dir("repro");
  ToyCorpusOptions opt;
  opt.utterances = 2;
  opt.seed = 9;
  make_toy_corpus(dir.path(), opt);
  TrainConfig cfg = tiny_config();
  cfg.batch = 2;
  cfg.steps = 3;
  auto run = [&] {
    std::vector<StepMetrics> metrics;
    BatchStream s = make_batches(dir.path(), cfg.batch, cfg.segments_per_file, cfg.seed);
    const CodecModel m = train(cfg, s, [&](const StepMetrics& x, const CodecModel&) { metrics.push_back(x); });
    return std::pair{metrics, snapshot(m.theta)};
  };
  const auto [ma, ta] = run();
  const auto [mb, tb] = run();
  REQUIRE(ma.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(ma[i].step == i + 1);
    CHECK(metrics_csv_row(ma[i]) == metrics_csv_row(mb[i]));
    CHECK(ma[i].recon == mb[i].recon);
    CHECK(ma[i].adv_d == mb[i].adv_d);
  }
  CHECK(ta == tb);
  CHECK(metrics_csv_header().find("recon") != std::string::npos);
}

TEST_CASE("toy corpus") {
  TempDir dir("toy");
  ToyCorpusOptions opt;
  opt.utterances = 3;
  opt.seed = 4;
  const auto wavs = make_toy_corpus(dir.path(), opt);
  REQUIRE(wavs.size() == 3);
  const auto corpus = load_corpus(dir.path());
  REQUIRE(corpus.size() == 3);
  for (const auto& it : corpus) {
    const double secs = it.audio.duration_seconds();
    CHECK(secs >= 2.0);
    CHECK(secs <= 3.2);
    CHECK(it.embeddings.shape()[0] == (it.audio.samples.size() + 639) / 640);
    double peak = 0.0;
    for (double v : it.audio.samples) peak = std::max(peak, std::fabs(v));
    CHECK(peak > 0.01);
    CHECK(peak <= 1.0);
  }
  TempDir again("toy");
  make_toy_corpus(again.path(), opt);
  CHECK(read_wav(again / "utt_00.wav").samples == corpus[0].audio.samples);
}
