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

#include "txcodec/embeddings.hpp"

#include <cmath>

#include "txcodec/binio.hpp"
#include "txcodec/errors.hpp"

namespace txc {

std::vector<std::uint8_t> serialize_embeddings(const EmbeddingFile& file) {
  if (file.values.rank() != 2) throw UsageError("embeddings: values must be frames x dim");
  ByteWriter w;
  w.bytes("TEMB", 4);
  w.u32(kEmbeddingFileVersion);
  w.str(file.model_id);
  w.u32(file.layer);
  w.f32(file.frame_rate);
  w.u32(static_cast<std::uint32_t>(file.dim()));
  w.u32(static_cast<std::uint32_t>(file.frames()));
  for (double v : file.values.data()) w.f32(static_cast<float>(v));
  return w.take();
}

EmbeddingFile parse_embeddings(std::span<const std::uint8_t> bytes, const std::string& what) {
  ByteReader r(bytes.data(), bytes.size(), what);
  if (r.fixed(4) != "TEMB") throw DataError(what + ": bad magic (not a TEMB file)");
  const std::uint32_t version = r.u32();
  if (version != kEmbeddingFileVersion) {
    throw DataError(what + ": unsupported version " + std::to_string(version));
  }
  EmbeddingFile f;
  f.model_id = r.str();
  f.layer = r.u32();
  f.frame_rate = r.f32();
  if (!std::isfinite(f.frame_rate) || f.frame_rate <= 0.0F) throw DataError(what + ": bad frame rate");
  const std::uint32_t dim = r.u32();
  const std::uint32_t frames = r.u32();
  if (dim == 0) throw DataError(what + ": zero dimension");
  if (r.remaining() != static_cast<std::uint64_t>(dim) * frames * 4) {
    throw DataError(what + ": payload holds " + std::to_string(r.remaining()) + " bytes, header implies " +
                    std::to_string(static_cast<std::uint64_t>(dim) * frames * 4));
  }
  f.values = Tensor({frames, dim});
  for (auto& v : f.values.data()) {
    const float x = r.f32();
    if (!std::isfinite(x)) throw DataError(what + ": non-finite embedding value");
    v = static_cast<double>(x);
  }
  return f;
}

void write_embedding_file(const std::filesystem::path& path, const EmbeddingFile& file) {
  write_file_bytes(path, serialize_embeddings(file));
}

EmbeddingFile read_embedding_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_embeddings(bytes, path.string());
}

std::filesystem::path embedding_path_for(const std::filesystem::path& wav) {
  auto p = wav;
  p.replace_extension(".temb");
  return p;
}

}  // namespace txc
