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

#include "txcodec/bitstream.hpp"

#include <atomic>

#include "txcodec/binio.hpp"
#include "txcodec/errors.hpp"

namespace txc {

namespace {

std::atomic<bool> g_fault{false};

constexpr std::uint32_t kIndexLimit = 1U << kBitsPerIndex;

void check_geometry(const EncodedStream& s) {
  if (s.t_indices.frames != s.superframes || s.t_indices.stages != s.allocation.t_stages ||
      s.c_indices.frames != 2 * static_cast<std::size_t>(s.superframes) ||
      s.c_indices.stages != s.allocation.c_stages) {
    throw UsageError("encoded stream: index matrices do not match the allocation");
  }
}

}  // namespace

AllocationSplit parse_split(const std::string& name) {
  if (name == "even") return AllocationSplit::even;
  if (name == "third" || name == "one-third-transformer") return AllocationSplit::one_third_transformer;
  if (name == "transformer-only") return AllocationSplit::transformer_only;
  if (name == "cnn-only") return AllocationSplit::cnn_only;
  throw UsageError("unknown split '" + name + "' (expected even, third, transformer-only, cnn-only)");
}

std::string split_name(AllocationSplit split) {
  switch (split) {
    case AllocationSplit::even: return "even";
    case AllocationSplit::one_third_transformer: return "third";
    case AllocationSplit::transformer_only: return "transformer-only";
    case AllocationSplit::cnn_only: return "cnn-only";
  }
  return "?";
}

BitrateAllocation plan_allocation(std::uint32_t total_bps, AllocationSplit split) {
  const auto fail = [&] {
    return UsageError("unrealizable allocation: " + std::to_string(total_bps) + " bps with " +
                      split_name(split) + " split");
  };
  std::uint32_t t_bps = 0;
  switch (split) {
    case AllocationSplit::even:
      if (total_bps % 2 != 0) throw fail();
      t_bps = total_bps / 2;
      break;
    case AllocationSplit::one_third_transformer:
      if (total_bps % 3 != 0) throw fail();
      t_bps = total_bps / 3;
      break;
    case AllocationSplit::transformer_only: t_bps = total_bps; break;
    case AllocationSplit::cnn_only: t_bps = 0; break;
  }
  const std::uint32_t c_bps = total_bps - t_bps;
  constexpr std::uint32_t t_unit = 25 * kBitsPerIndex, c_unit = 50 * kBitsPerIndex;
  if (total_bps == 0 || total_bps > 0xFFFF || t_bps % t_unit != 0 || c_bps % c_unit != 0) throw fail();
  BitrateAllocation a;
  a.total_bps = total_bps;
  a.t_stages = t_bps / t_unit;
  a.c_stages = c_bps / c_unit;
  if (a.t_stages > 0xFF || a.c_stages > 0xFF) throw fail();
  return a;
}

void set_pack_fault_injection(bool on) noexcept { g_fault.store(on); }
bool pack_fault_injection() noexcept { return g_fault.load(); }

std::vector<std::uint8_t> pack_indices(std::span<const std::uint32_t> indices) {
  std::vector<std::uint8_t> out((indices.size() * kBitsPerIndex + 7) / 8, 0);
  std::size_t bit = 0;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::uint32_t v = indices[i];
    if (v >= kIndexLimit) {
      throw UsageError("pack_indices: index " + std::to_string(v) + " at position " +
                       std::to_string(i) + " does not fit in 6 bits");
    }
    for (int b = static_cast<int>(kBitsPerIndex) - 1; b >= 0; --b, ++bit) {
      if ((v >> b) & 1U) out[bit / 8] |= static_cast<std::uint8_t>(0x80U >> (bit % 8));
    }
  }
  if (g_fault.load() && !out.empty()) out[0] ^= 0x80;
  return out;
}

std::vector<std::uint32_t> unpack_indices(std::span<const std::uint8_t> bytes, std::size_t count) {
  if (bytes.size() * 8 < count * kBitsPerIndex) {
    throw DataError("unpack_indices: truncated payload (" + std::to_string(bytes.size()) +
                    " bytes for " + std::to_string(count) + " indices)");
  }
  std::vector<std::uint32_t> out(count);
  std::size_t bit = 0;
  for (auto& v : out) {
    for (std::size_t b = 0; b < kBitsPerIndex; ++b, ++bit) {
      v = (v << 1) | ((bytes[bit / 8] >> (7 - bit % 8)) & 1U);
    }
  }
  return out;
}

std::vector<std::uint32_t> interleave(const EncodedStream& stream) {
  check_geometry(stream);
  std::vector<std::uint32_t> order;
  order.reserve(stream.superframes * (stream.allocation.t_stages + 2 * stream.allocation.c_stages));
  for (std::size_t f = 0; f < stream.superframes; ++f) {
    for (std::size_t s = 0; s < stream.allocation.t_stages; ++s) order.push_back(stream.t_indices.at(f, s));
    for (std::size_t half = 0; half < 2; ++half) {
      for (std::size_t s = 0; s < stream.allocation.c_stages; ++s) {
        order.push_back(stream.c_indices.at(2 * f + half, s));
      }
    }
  }
  return order;
}

std::vector<std::uint8_t> serialize_stream(const EncodedStream& stream) {
  const auto payload = pack_indices(interleave(stream));
  ByteWriter w;
  w.bytes("TXRV", 4);
  w.u8(kStreamVersion);
  w.u16(static_cast<std::uint16_t>(stream.allocation.total_bps));
  w.u8(static_cast<std::uint8_t>(stream.allocation.t_stages));
  w.u8(static_cast<std::uint8_t>(stream.allocation.c_stages));
  w.u8(static_cast<std::uint8_t>(stream.allocation.bits_per_index));
  w.u32(stream.superframes);
  w.u32(stream.sample_count);
  w.u64(stream.codebook_hash);
  w.bytes(payload.data(), payload.size());
  return w.take();
}

EncodedStream parse_stream(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes.data(), bytes.size(), "stream");
  if (r.fixed(4) != "TXRV") throw DataError("stream: bad magic (not a TXRV stream)");
  const std::uint8_t version = r.u8();
  if (version != kStreamVersion) throw DataError("stream: unsupported version " + std::to_string(version));
  EncodedStream s;
  s.allocation.total_bps = r.u16();
  s.allocation.t_stages = r.u8();
  s.allocation.c_stages = r.u8();
  s.allocation.bits_per_index = r.u8();
  if (s.allocation.bits_per_index != kBitsPerIndex) {
    throw DataError("stream: unsupported index width " + std::to_string(s.allocation.bits_per_index));
  }
  if (s.allocation.payload_bps() != s.allocation.total_bps) {
    throw DataError("stream: stage counts (" + std::to_string(s.allocation.t_stages) + ", " +
                    std::to_string(s.allocation.c_stages) + ") do not carry " +
                    std::to_string(s.allocation.total_bps) + " bps");
  }
  s.superframes = r.u32();
  s.sample_count = r.u32();
  s.codebook_hash = r.u64();
  if (s.sample_count > static_cast<std::uint64_t>(s.superframes) * kSuperframeSamples) {
    throw DataError("stream: sample count exceeds the coded super-frames");
  }
  const std::size_t count = s.payload_bits() / kBitsPerIndex;
  const std::size_t need = (s.payload_bits() + 7) / 8;
  if (r.remaining() != need) {
    throw DataError("stream: payload is " + std::to_string(r.remaining()) + " bytes, header implies " +
                    std::to_string(need));
  }
  const auto flat = unpack_indices({r.take(need), need}, count);
  s.t_indices = IndexMatrix(s.superframes, s.allocation.t_stages);
  s.c_indices = IndexMatrix(2 * static_cast<std::size_t>(s.superframes), s.allocation.c_stages);
  std::size_t i = 0;
  for (std::size_t f = 0; f < s.superframes; ++f) {
    for (std::size_t st = 0; st < s.allocation.t_stages; ++st) s.t_indices.at(f, st) = flat[i++];
    for (std::size_t half = 0; half < 2; ++half) {
      for (std::size_t st = 0; st < s.allocation.c_stages; ++st) s.c_indices.at(2 * f + half, st) = flat[i++];
    }
  }
  return s;
}

double measured_bitrate(const EncodedStream& stream, double duration_s) {
  if (!(duration_s > 0.0)) throw UsageError("measured_bitrate: duration must be positive");
  return static_cast<double>(stream.payload_bits()) / duration_s;
}

std::uint64_t stream_codebook_hash(const RvqState& t_rvq, const RvqState& c_rvq) {
  return (codebook_hash(t_rvq) * 0x100000001b3ULL) ^ codebook_hash(c_rvq);
}

}  // namespace txc
