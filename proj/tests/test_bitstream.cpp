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

#include "doctest.h"
#include "test_util.hpp"
#include "txcodec/bitstream.hpp"
#include "txcodec/codec.hpp"
#include "txcodec/errors.hpp"

using namespace txc;
using txc::testing::random_tensor;

namespace {

// Reference packer: one bit at a time, MSB first.
std::vector<std::uint8_t> naive_pack(const std::vector<std::uint32_t>& v) {
  std::vector<std::uint8_t> out((v.size() * 6 + 7) / 8, 0);
  std::size_t bit = 0;
  for (std::uint32_t x : v) {
    for (int b = 5; b >= 0; --b, ++bit) {
      if ((x >> b) & 1U) out[bit / 8] |= static_cast<std::uint8_t>(0x80U >> (bit % 8));
    }
  }
  return out;
}

EncodedStream random_stream(Rng& rng, const BitrateAllocation& a, std::uint32_t superframes) {
  EncodedStream s;
  s.allocation = a;
  s.superframes = superframes;
  s.sample_count = superframes * 640 - static_cast<std::uint32_t>(rng.index(640));
  s.codebook_hash = rng.bits();
  s.t_indices = IndexMatrix(superframes, a.t_stages);
  s.c_indices = IndexMatrix(2 * superframes, a.c_stages);
  for (auto& v : s.t_indices.values) v = static_cast<std::uint32_t>(rng.index(64));
  for (auto& v : s.c_indices.values) v = static_cast<std::uint32_t>(rng.index(64));
  return s;
}

}  // namespace

TEST_CASE("allocation table") {
  CHECK(plan_allocation(600, AllocationSplit::even) == BitrateAllocation{600, 2, 1});
  CHECK(plan_allocation(900, AllocationSplit::one_third_transformer) == BitrateAllocation{900, 2, 2});
  CHECK(plan_allocation(1800, AllocationSplit::even) == BitrateAllocation{1800, 6, 3});
  CHECK(plan_allocation(600, AllocationSplit::transformer_only) == BitrateAllocation{600, 4, 0});
  CHECK(plan_allocation(600, AllocationSplit::cnn_only) == BitrateAllocation{600, 0, 2});
  CHECK(plan_allocation(1800, AllocationSplit::one_third_transformer) == BitrateAllocation{1800, 4, 4});
  for (auto [bps, split] : {std::pair{600U, AllocationSplit::even}, {900U, AllocationSplit::one_third_transformer},
                            {1800U, AllocationSplit::even}, {1800U, AllocationSplit::one_third_transformer}}) {
    CHECK(plan_allocation(bps, split).payload_bps() == bps);
  }
  // 450 bps on the CNN side and 200 bps on the embedding side are fractional.
  CHECK_THROWS_AS(plan_allocation(900, AllocationSplit::even), UsageError);
  CHECK_THROWS_AS(plan_allocation(600, AllocationSplit::one_third_transformer), UsageError);
  CHECK_THROWS_WITH_AS(plan_allocation(700, AllocationSplit::even), doctest::Contains("unrealizable allocation"),
                       UsageError);
  CHECK(parse_split("third") == AllocationSplit::one_third_transformer);
  CHECK(split_name(parse_split("cnn-only")) == "cnn-only");
  CHECK_THROWS_AS(parse_split("half"), UsageError);
}

TEST_CASE("6-bit packing examples") {
  const std::vector<std::uint32_t> v{5, 63, 0};
  CHECK(pack_indices(v) == std::vector<std::uint8_t>{0x17, 0xF0, 0x00});
  CHECK(unpack_indices(std::vector<std::uint8_t>{0x17, 0xF0, 0x00}, 3) == v);
  CHECK(pack_indices(std::vector<std::uint32_t>{}).empty());
  CHECK(pack_indices(std::vector<std::uint32_t>(4, 0)) == std::vector<std::uint8_t>(3, 0));
  CHECK(unpack_indices(std::vector<std::uint8_t>{}, 0).empty());
  CHECK_THROWS_AS(pack_indices(std::vector<std::uint32_t>{64}), UsageError);
  CHECK_THROWS_AS(unpack_indices(std::vector<std::uint8_t>{0x17}, 2), DataError);
}

TEST_CASE("packing matches the bitwise reference and round-trips") {
  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::uint32_t> v(rng.index(40));
    for (auto& x : v) x = static_cast<std::uint32_t>(rng.index(64));
    const auto bytes = pack_indices(v);
    CHECK(bytes == naive_pack(v));
    CHECK(unpack_indices(bytes, v.size()) == v);
  }
}

TEST_CASE("fault injection flips the first payload bit") {
  const std::vector<std::uint32_t> v{5, 63, 0};
  set_pack_fault_injection(true);
  const auto bad = pack_indices(v);
  set_pack_fault_injection(false);
  CHECK(bad[0] == (0x17 ^ 0x80));
  CHECK_FALSE(pack_fault_injection());
}

TEST_CASE("stream serialization round trip") {
  Rng rng(2);
  for (auto a : {plan_allocation(600, AllocationSplit::even), plan_allocation(900, AllocationSplit::one_third_transformer),
                 plan_allocation(1800, AllocationSplit::even), plan_allocation(600, AllocationSplit::cnn_only)}) {
    const EncodedStream s = random_stream(rng, a, 1 + static_cast<std::uint32_t>(rng.index(50)));
    const auto bytes = serialize_stream(s);
    CHECK(bytes.size() == kStreamHeaderBytes + (s.payload_bits() + 7) / 8);
    const EncodedStream back = parse_stream(bytes);
    CHECK(back.allocation == s.allocation);
    CHECK(back.superframes == s.superframes);
    CHECK(back.sample_count == s.sample_count);
    CHECK(back.codebook_hash == s.codebook_hash);
    CHECK(back.t_indices == s.t_indices);
    CHECK(back.c_indices == s.c_indices);
  }
}

TEST_CASE("interleaving order") {
  EncodedStream s;
  s.allocation = plan_allocation(900, AllocationSplit::one_third_transformer);  // t=2, c=2
  s.superframes = 2;
  s.t_indices = IndexMatrix(2, 2);
  s.c_indices = IndexMatrix(4, 2);
  s.t_indices.values = {1, 2, 3, 4};
  s.c_indices.values = {10, 11, 12, 13, 14, 15, 16, 17};
  CHECK(interleave(s) == std::vector<std::uint32_t>{1, 2, 10, 11, 12, 13, 3, 4, 14, 15, 16, 17});
}

TEST_CASE("parse errors") {
  Rng rng(3);
  const auto bytes = serialize_stream(random_stream(rng, plan_allocation(600, AllocationSplit::even), 4));
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_WITH_AS(parse_stream(bad), doctest::Contains("magic"), DataError);
  bad = bytes;
  bad[4] = 9;
  CHECK_THROWS_AS(parse_stream(bad), DataError);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(parse_stream(bad), DataError);
  CHECK_THROWS_AS(parse_stream(std::vector<std::uint8_t>(10, 0)), DataError);
}

TEST_CASE("measured bitrate") {
  Rng rng(4);
  // 1.28 s at 1800 bps: 32 super-frames of 72 bits.
  const auto s1800 = random_stream(rng, plan_allocation(1800, AllocationSplit::even), 32);
  CHECK(s1800.payload_bits() == 2304);
  CHECK(measured_bitrate(s1800, 1.28) == 1800.0);
  // 10 s at 600 bps: 250 super-frames of 24 bits.
  const auto s600 = random_stream(rng, plan_allocation(600, AllocationSplit::even), 250);
  CHECK(s600.payload_bits() == 6000);
  CHECK(measured_bitrate(s600, 10.0) == 600.0);
  const auto s4 = random_stream(rng, plan_allocation(600, AllocationSplit::even), 100);
  CHECK(s4.payload_bits() == 2400);
  EncodedStream empty;
  empty.allocation = plan_allocation(600, AllocationSplit::even);
  CHECK(measured_bitrate(empty, 1.0) == 0.0);
  CHECK_THROWS_AS(measured_bitrate(s600, 0.0), UsageError);
}

TEST_CASE("embedding alignment tolerates one frame of slack") {
  Rng rng(5);
  const Tensor e = random_tensor(rng, {10, kEmbeddingDim});
  CHECK(align_embeddings(e, 10) == e);
  const Tensor longer = align_embeddings(e, 11);
  REQUIRE(longer.shape() == Shape{11, kEmbeddingDim});
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) CHECK(longer.at(10, i) == e.at(9, i));
  const Tensor shorter = align_embeddings(e, 9);
  REQUIRE(shorter.shape() == Shape{9, kEmbeddingDim});
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) CHECK(shorter.at(8, i) == e.at(8, i));
  CHECK_THROWS_AS(align_embeddings(e, 12), UsageError);
  CHECK_THROWS_AS(align_embeddings(e, 8), UsageError);
}

TEST_CASE("waveform encode/decode through the stream") {
  CodecModel model(ModelConfig{6, 3, 1});
  Rng rng(6);
  Waveform x;
  for (int i = 0; i < 16000; ++i) x.samples.push_back(rng.uniform(-0.5, 0.5));
  const Tensor emb = random_tensor(rng, {25, kEmbeddingDim});
  for (std::uint32_t bps : {600U, 1800U}) {
    const auto a = plan_allocation(bps, AllocationSplit::even);
    const EncodedStream s = encode_waveform(model, x, emb, a);
    CHECK(s.superframes == 25);
    CHECK(s.sample_count == 16000);
    CHECK(measured_bitrate(s, 1.0) == static_cast<double>(bps));
    const EncodedStream back = parse_stream(serialize_stream(s));
    CHECK(back.t_indices == s.t_indices);
    CHECK(back.c_indices == s.c_indices);
    const Waveform y = decode_stream(model, back);
    CHECK(y.samples.size() == 16000);
    CHECK(y.samples == decode_stream(model, s).samples);
  }

  // Different codebooks: the hash check rejects the stream.
  const EncodedStream s = encode_waveform(model, x, emb, plan_allocation(600, AllocationSplit::even));
  const CodecModel other(ModelConfig{6, 3, 2});
  CHECK_THROWS_WITH_AS(decode_stream(other, s), doctest::Contains("hash"), DataError);
  CHECK_THROWS_AS(encode_waveform(model, x, emb, plan_allocation(1800, AllocationSplit::one_third_transformer)),
                  UsageError);
}
