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

// Waveform <-> stream with a trained model.

#pragma once

#include "txcodec/bitstream.hpp"
#include "txcodec/codecnet.hpp"
#include "txcodec/signal.hpp"

namespace txc {

// Matches an embedding matrix to `frames` 25 Hz frames. Up to one frame of
// slack is absorbed by repeating or dropping the last row; anything larger is
// a UsageError.
Tensor align_embeddings(const Tensor& emb, std::size_t frames);

// Pads `x` with zeros to whole 40 ms super-frames, quantizes both streams with
// the first t_stages / c_stages codebooks of the model, and records the
// original length. `emb` is [~len/640 x 1024].
EncodedStream encode_waveform(const CodecModel& model, const Waveform& x, const Tensor& emb,
                              const BitrateAllocation& allocation);

// DataError if the stream was coded with different codebooks.
Waveform decode_stream(const CodecModel& model, const EncodedStream& stream);

}  // namespace txc
