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

#include "doctest.h"
#include "test_util.hpp"
#include "txcodec/binio.hpp"
#include "txcodec/codecnet.hpp"
#include "txcodec/errors.hpp"

using namespace txc;
using txc::testing::abs_sum;
using txc::testing::random_tensor;
using txc::testing::TempDir;

namespace {

bool all_finite(const Tensor& t) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("encoder frame counts") {
  const CodecModel model(ModelConfig{});
  Rng rng(1);
  CHECK(encode_cnn(model.encoder, DiffNode::constant(random_tensor(rng, {20480}))).shape() == Shape{64, 64});
  CHECK(encode_cnn(model.encoder, DiffNode::constant(random_tensor(rng, {40960}))).shape() == Shape{128, 64});
  const Tensor z = encode_cnn(model.encoder, DiffNode::constant(Tensor({20480}))).value();
  CHECK(all_finite(z));
  CHECK_THROWS_AS(encode_cnn(model.encoder, DiffNode::constant(Tensor({1000}))), UsageError);
}

TEST_CASE("generator sample counts") {
  const CodecModel model(ModelConfig{});
  Rng rng(2);
  const Tensor y = decode(model.generator, DiffNode::constant(random_tensor(rng, {64, 128}))).value();
  CHECK(y.shape() == Shape{20480});
  CHECK(all_finite(y));
  CHECK(decode(model.generator, DiffNode::constant(random_tensor(rng, {128, 128}))).size() == 40960);
  CHECK_THROWS_AS(decode(model.generator, DiffNode::constant(Tensor({64, 64}))), UsageError);
}

TEST_CASE("stream concatenation") {
  Rng rng(3);
  const DiffNode t = DiffNode::constant(random_tensor(rng, {32, 64}));
  const Tensor out = concatenate_streams(t, DiffNode::constant(Tensor({64, 64}))).value();
  REQUIRE(out.shape() == Shape{64, 128});
  for (std::size_t r = 0; r < 64; ++r) {
    for (std::size_t ch = 0; ch < 64; ++ch) CHECK(out.at(r, ch) == t.value().at(r / 2, ch));
    for (std::size_t ch = 64; ch < 128; ++ch) CHECK(out.at(r, ch) == 0.0);
  }
  CHECK_THROWS_AS(concatenate_streams(t, DiffNode::constant(Tensor({63, 64}))), UsageError);
}

TEST_CASE("discriminator outputs") {
  const CodecModel model(ModelConfig{});
  Rng rng(4);
  const DiffNode x = DiffNode::constant(random_tensor(rng, {20480}));
  const auto outs = discriminate_all(model, x);
  for (const auto& o : outs) {
    CHECK_FALSE(o.feature_maps.empty());
    CHECK(o.logits.size() > 0);
  }
  CHECK(outs[0].feature_maps.size() == model.d0.layers.size() - 1);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(model.wave[i].decimation == (std::size_t{1} << i));
    CHECK(outs[i + 1].feature_maps.size() == model.wave[i].layers.size() - 1);
    // The first layer keeps the (decimated) length.
    CHECK(outs[i + 1].feature_maps[0].shape()[1] == 20480 >> i);
  }
  CHECK(outs[2].logits.size() < outs[1].logits.size());
  CHECK(outs[3].logits.size() < outs[2].logits.size());
  // The STFT discriminator sees real and imaginary planes as two channels.
  CHECK(model.d0.layers[0].weight.shape()[1] == 2);
  // Feature matching is computable directly.
  CHECK(feature_matching_loss(outs, outs).value().item() == 0.0);
}

TEST_CASE("end-to-end shape identity and ablation variants") {
  Rng rng(5);
  const DiffNode x = DiffNode::constant(random_tensor(rng, {20480}, -0.5, 0.5));
  const DiffNode emb = DiffNode::constant(random_tensor(rng, {32, kEmbeddingDim}));
  for (auto [t, cst] : {std::pair<std::size_t, std::size_t>{2, 1}, {3, 0}, {0, 3}}) {
    const CodecModel model(ModelConfig{t, cst, 7});
    const auto fw = run_codec(model, x, emb);
    CHECK(fw.waveform.shape() == Shape{20480});
    CHECK(all_finite(fw.waveform.value()));
  }
  CHECK_THROWS_AS(CodecModel(ModelConfig{0, 0, 0}), UsageError);
  const CodecModel model(ModelConfig{});
  CHECK_THROWS_AS(run_codec(model, x, DiffNode::constant(Tensor({31, kEmbeddingDim}))), UsageError);
  CHECK_THROWS_AS(run_codec(model, DiffNode::constant(Tensor({20000})), emb), UsageError);
}

TEST_CASE("gradients reach encoder, reducer and generator; codebooks only via the codebook term") {
  const CodecModel model(ModelConfig{});
  Rng rng(6);
  const DiffNode x = DiffNode::constant(random_tensor(rng, {20480}, -0.5, 0.5));
  const DiffNode emb = DiffNode::constant(random_tensor(rng, {32, kEmbeddingDim}));
  model.phi.set_trainable(false);
  auto forward = [&] {
    const auto fw = run_codec(model, x, emb);
    const auto fake = discriminate_all(model, fw.waveform);
    const auto real = discriminate_all(model, x);
    GeneratorLossParts parts{adv_generator_loss(fake), feature_matching_loss(real, fake),
                             reconstruction_loss(x, fw.waveform), DiffNode{}};
    return std::pair{fw, parts};
  };
  auto [fw, parts] = forward();
  parts.quant = DiffNode::constant(Tensor(Shape{1}));
  backward(total_generator_loss(parts, LossWeights{}));
  for (const auto& [name, p] : model.theta.items()) {
    if (name.rfind("rvq.", 0) == 0) {
      CHECK_MESSAGE(abs_sum(p.grad()) == 0.0, name);
    } else if (name.rfind("enc.", 0) == 0 || name.rfind("gen.", 0) == 0 || name == "reduce.w") {
      CHECK_MESSAGE(abs_sum(p.grad()) > 0.0, name);
    }
  }
  for (const auto& [name, p] : model.phi.items()) CHECK_MESSAGE(abs_sum(p.grad()) == 0.0, name);

  model.theta.zero_grad();
  const auto tq = rvq_quantization_terms(fw.t_features, model.t_rvq, fw.t_quant.codes.indices);
  const auto cq = rvq_quantization_terms(fw.c_features, model.c_rvq, fw.c_quant.codes.indices);
  backward(add(tq.codebook, cq.codebook));
  for (const auto& [name, p] : model.theta.items()) {
    if (name.rfind("rvq.", 0) == 0) {
      CHECK_MESSAGE(abs_sum(p.grad()) > 0.0, name);
    } else {
      CHECK_MESSAGE(abs_sum(p.grad()) == 0.0, name);
    }
  }
}

TEST_CASE("checkpoint round trip") {
  TempDir dir("ckpt");
  CodecModel model(ModelConfig{3, 2, 42});
  model.codebooks_initialized = true;
  save_checkpoint(dir / "m.txck", model);
  const CodecModel back = load_checkpoint(dir / "m.txck");
  CHECK(back.config().t_stages == 3);
  CHECK(back.config().c_stages == 2);
  CHECK(back.config().seed == 42);
  CHECK(back.codebooks_initialized);
  REQUIRE(back.theta.items().size() == model.theta.items().size());
  REQUIRE(back.phi.items().size() == model.phi.items().size());
  for (const ParameterSet* set : {&model.theta, &model.phi}) {
    const ParameterSet& other = set == &model.theta ? back.theta : back.phi;
    for (const auto& [name, p] : set->items()) {
      const Tensor& a = p.value();
      const Tensor& b = other.get(name).value();
      REQUIRE(a.shape() == b.shape());
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == static_cast<double>(static_cast<float>(a[i])));
    }
  }
  // Codebooks are shared with the cascade state.
  CHECK(back.t_rvq.stages[2].entries.id() == back.theta.get("rvq.t.2").id());
  save_checkpoint(dir / "again.txck", back);
  CHECK(read_file_bytes(dir / "m.txck") == read_file_bytes(dir / "again.txck"));

  auto bytes = read_file_bytes(dir / "m.txck");
  bytes[0] = 'X';
  write_file_bytes(dir / "bad.txck", bytes);
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.txck"), DataError);
  bytes = read_file_bytes(dir / "m.txck");
  bytes.resize(bytes.size() / 2);
  write_file_bytes(dir / "short.txck", bytes);
  CHECK_THROWS_AS(load_checkpoint(dir / "short.txck"), DataError);
}
