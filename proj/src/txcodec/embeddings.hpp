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

// "TEMB" embedding files written by the offline extractor.
//
//   "TEMB" | u32 version | str model_id | u32 layer | f32 frame_rate |
//   u32 dim | u32 frames | frames x dim f32, row-major
//
// Strings are u32 length + bytes; everything little-endian.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "txcodec/tensor.hpp"

namespace txc {

inline constexpr std::uint32_t kEmbeddingFileVersion = 1;

struct EmbeddingFile {
  std::string model_id;
  std::uint32_t layer = 0;
  float frame_rate = 25.0F;
  Tensor values;  // frames x dim

  std::size_t frames() const { return values.rank() == 2 ? values.shape()[0] : 0; }
  std::size_t dim() const { return values.rank() == 2 ? values.shape()[1] : 0; }
};

std::vector<std::uint8_t> serialize_embeddings(const EmbeddingFile& file);
EmbeddingFile parse_embeddings(std::span<const std::uint8_t> bytes, const std::string& what = "embeddings");

void write_embedding_file(const std::filesystem::path& path, const EmbeddingFile& file);
EmbeddingFile read_embedding_file(const std::filesystem::path& path);

// `<stem>.temb` next to a WAV file.
std::filesystem::path embedding_path_for(const std::filesystem::path& wav);

}  // namespace txc
