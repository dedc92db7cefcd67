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

// Bitrate planning and the packed "TXRV" stream container.
//
// Layout (little-endian header, 26 bytes):
//   "TXRV" | u8 version | u16 total_bps | u8 t_stages | u8 c_stages |
//   u8 bits_per_index | u32 superframes | u32 sample_count | u64 codebook_hash
// followed by 6-bit indices, MSB-first, zero-padded to a byte. Each 40 ms
// super-frame carries the t-stream indices of its 25 Hz frame, then the
// c-stream indices of its two 50 Hz frames.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "txcodec/quantizer.hpp"

namespace txc {

inline constexpr std::size_t kBitsPerIndex = 6;
inline constexpr double kTransformerFrameRate = 25.0;
inline constexpr double kCnnFrameRate = 50.0;
inline constexpr std::size_t kSuperframeSamples = 640;
inline constexpr std::size_t kStreamHeaderBytes = 26;
inline constexpr std::uint8_t kStreamVersion = 1;

enum class AllocationSplit {
  even,                   // half the bits per stream
  one_third_transformer,  // 1/3 embeddings, 2/3 CNN
  transformer_only,
  cnn_only,
};

// Accepts "even", "third", "transformer-only", "cnn-only".
AllocationSplit parse_split(const std::string& name);
std::string split_name(AllocationSplit split);

struct BitrateAllocation {
  std::uint32_t total_bps = 0;
  std::size_t t_stages = 0;
  std::size_t c_stages = 0;
  std::size_t bits_per_index = kBitsPerIndex;

  // Bits carried by one 40 ms super-frame.
  std::size_t superframe_bits() const { return bits_per_index * (t_stages + 2 * c_stages); }
  std::uint32_t payload_bps() const {
    return static_cast<std::uint32_t>(25 * bits_per_index * t_stages + 50 * bits_per_index * c_stages);
  }
  friend bool operator==(const BitrateAllocation&, const BitrateAllocation&) = default;
};

// Stage counts with 25*6*t = t-stream bps and 50*6*c = c-stream bps.
// UsageError "unrealizable allocation" when either count is fractional.
BitrateAllocation plan_allocation(std::uint32_t total_bps, AllocationSplit split);

// Test hook: while set, pack_indices flips the first payload bit.
void set_pack_fault_injection(bool on) noexcept;
bool pack_fault_injection() noexcept;

std::vector<std::uint8_t> pack_indices(std::span<const std::uint32_t> indices);
std::vector<std::uint32_t> unpack_indices(std::span<const std::uint8_t> bytes, std::size_t count);

struct EncodedStream {
  BitrateAllocation allocation;
  std::uint32_t superframes = 0;
  std::uint32_t sample_count = 0;  // original length before super-frame padding
  std::uint64_t codebook_hash = 0;
  IndexMatrix t_indices;  // superframes x t_stages
  IndexMatrix c_indices;  // 2 superframes x c_stages

  std::size_t payload_bits() const { return superframes * allocation.superframe_bits(); }
};

// Indices in transmission order.
std::vector<std::uint32_t> interleave(const EncodedStream& stream);

std::vector<std::uint8_t> serialize_stream(const EncodedStream& stream);
// DataError on bad magic, version, geometry or truncation.
EncodedStream parse_stream(std::span<const std::uint8_t> bytes);

// Payload bits over duration; header and byte padding excluded.
double measured_bitrate(const EncodedStream& stream, double duration_s);

// Hash identifying the stage prefixes a stream was coded with.
std::uint64_t stream_codebook_hash(const RvqState& t_rvq, const RvqState& c_rvq);

}  // namespace txc
