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

#include "txcodec/quantizer.hpp"

#include <algorithm>
#include <limits>

#include "txcodec/binio.hpp"
#include "txcodec/errors.hpp"
#include "txcodec/random.hpp"

namespace txc {

namespace {

constexpr std::uint32_t kCodebookVersion = 1;

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    d += t * t;
  }
  return d;
}

// D^2 seeding over distinct frame values. Falls back to duplicates only when
// the batch holds fewer than k distinct vectors.
std::vector<std::size_t> seed_centroids(const FeatureSequence& batch, std::size_t k, Rng& rng) {
  const std::size_t n = batch.count();
  std::vector<std::size_t> chosen{rng.index(n)};
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(batch.row(i), batch.row(chosen[0]));
  while (chosen.size() < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] == 0.0) continue;
        acc += d2[i];
        pick = i;
        if (acc > target) break;
      }
    } else {
      pick = rng.index(n);
    }
    chosen.push_back(pick);
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(batch.row(i), batch.row(pick)));
    }
  }
  return chosen;
}

void check_state(const RvqState& state) {
  if (state.stages.empty()) throw UsageError("rvq: cascade has no stages");
}

}  // namespace

Codebook Codebook::from_tensor(Tensor table, std::uint32_t id) {
  if (table.rank() != 2 || table.shape()[0] == 0 || table.shape()[1] == 0) {
    throw UsageError("codebook: expected a non-empty K x D table, got " + shape_string(table.shape()));
  }
  return Codebook{DiffNode::parameter(std::move(table)), id};
}

RvqState::RvqState(std::vector<Codebook> s) : stages(std::move(s)) {
  for (const auto& cb : stages) {
    if (cb.dim() != stages[0].dim()) {
      throw UsageError("rvq: stage dimensions differ (" + std::to_string(cb.dim()) + " vs " +
                       std::to_string(stages[0].dim()) + ")");
    }
  }
}

RvqState RvqState::prefix(std::size_t n) const {
  if (n > stages.size()) {
    throw UsageError("rvq: requested " + std::to_string(n) + " stages, cascade has " +
                     std::to_string(stages.size()));
  }
  return RvqState(std::vector<Codebook>(stages.begin(), stages.begin() + static_cast<std::ptrdiff_t>(n)));
}

NearestEntry nearest(const Codebook& codebook, std::span<const double> v) {
  if (v.size() != codebook.dim()) {
    throw UsageError("nearest: vector of dim " + std::to_string(v.size()) + " vs codebook dim " +
                     std::to_string(codebook.dim()));
  }
  NearestEntry best;
  best.distance = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < codebook.size(); ++k) {
    const double d = squared_distance(v, codebook.row(k));
    if (d < best.distance) {
      best.distance = d;
      best.index = k;
    }
  }
  best.entry = codebook.row(best.index);
  return best;
}

KMeansResult kmeans(const FeatureSequence& batch, std::size_t k, std::size_t iterations,
                    std::uint64_t seed) {
  const std::size_t n = batch.count(), d = batch.dim();
  if (n == 0) throw UsageError("kmeans: empty batch");
  if (k == 0) throw UsageError("kmeans: k must be >= 1");
  Rng rng(seed);
  Tensor centroids({k, d});
  const auto seeds = seed_centroids(batch, k, rng);
  for (std::size_t c = 0; c < k; ++c) {
    std::copy_n(batch.row(seeds[c]).begin(), d, centroids.data().begin() + c * d);
  }

  KMeansResult result;
  std::vector<std::size_t> assign(n);
  std::vector<double> dist(n);
  auto assign_all = [&] {
    const Codebook view{DiffNode::constant(centroids), 0};
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto hit = nearest(view, batch.row(i));
      assign[i] = hit.index;
      dist[i] = hit.distance;
      total += hit.distance;
    }
    result.distortion.push_back(total / static_cast<double>(n));
  };

  assign_all();
  for (std::size_t it = 0; it < iterations; ++it) {
    Tensor sums({k, d});
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (std::size_t j = 0; j < d; ++j) sums.at(assign[i], j) += batch.row(i)[j];
    }
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < d; ++j) {
          centroids.at(c, j) = sums.at(c, j) / static_cast<double>(counts[c]);
        }
        continue;
      }
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i] && dist[i] > far_d) {
          far_d = dist[i];
          far = i;
        }
      }
      taken[far] = true;
      std::copy_n(batch.row(far).begin(), d, centroids.data().begin() + c * d);
    }
    assign_all();
  }
  result.codebook = Codebook::from_tensor(std::move(centroids), static_cast<std::uint32_t>(seed));
  return result;
}

Codebook kmeans_init(const FeatureSequence& batch, std::size_t k, std::size_t iterations,
                     std::uint64_t seed) {
  return kmeans(batch, k, iterations, seed).codebook;
}

RvqState train_rvq(const FeatureSequence& batch, std::size_t stages, std::size_t k,
                   std::size_t iterations, std::uint64_t seed) {
  if (stages == 0) throw UsageError("train_rvq: stage count must be >= 1");
  FeatureSequence residual = batch;
  std::vector<Codebook> fitted;
  for (std::size_t s = 0; s < stages; ++s) {
    Codebook cb = kmeans_init(residual, k, iterations, derive_seed(seed, s));
    cb.id = static_cast<std::uint32_t>(s);
    for (std::size_t i = 0; i < residual.count(); ++i) {
      const auto hit = nearest(cb, residual.row(i));
      for (std::size_t d = 0; d < residual.dim(); ++d) residual.frames.at(i, d) -= hit.entry[d];
    }
    fitted.push_back(std::move(cb));
  }
  return RvqState(std::move(fitted));
}

QuantizedFrames rvq_quantize(const RvqState& state, const FeatureSequence& f) {
  check_state(state);
  if (f.dim() != state.dim()) {
    throw UsageError("rvq_quantize: feature dim " + std::to_string(f.dim()) + " vs cascade dim " +
                     std::to_string(state.dim()));
  }
  const std::size_t frames = f.count(), d = f.dim();
  QuantizedFrames q;
  q.indices = IndexMatrix(frames, state.stage_count());
  q.reconstruction.frame_rate = f.frame_rate;
  q.reconstruction.frames = Tensor({frames, d});
  std::vector<double> residual(d);
  for (std::size_t t = 0; t < frames; ++t) {
    std::copy_n(f.row(t).begin(), d, residual.begin());
    double* recon = q.reconstruction.frames.data().data() + t * d;
    for (std::size_t s = 0; s < state.stage_count(); ++s) {
      const auto hit = nearest(state.stages[s], residual);
      q.indices.at(t, s) = static_cast<std::uint32_t>(hit.index);
      for (std::size_t j = 0; j < d; ++j) {
        recon[j] += hit.entry[j];
        residual[j] -= hit.entry[j];
      }
    }
  }
  return q;
}

FeatureSequence rvq_dequantize(const RvqState& state, const IndexMatrix& indices) {
  check_state(state);
  if (indices.stages != state.stage_count()) {
    throw UsageError("rvq_dequantize: " + std::to_string(indices.stages) + " index columns for " +
                     std::to_string(state.stage_count()) + " stages");
  }
  const std::size_t d = state.dim();
  FeatureSequence out;
  out.frames = Tensor({indices.frames, d});
  for (std::size_t t = 0; t < indices.frames; ++t) {
    double* row = out.frames.data().data() + t * d;
    for (std::size_t s = 0; s < indices.stages; ++s) {
      const std::uint32_t idx = indices.at(t, s);
      if (idx >= state.stages[s].size()) {
        throw DataError("rvq_dequantize: index " + std::to_string(idx) + " out of range for stage " +
                        std::to_string(s) + " (K=" + std::to_string(state.stages[s].size()) + ")");
      }
      const auto entry = state.stages[s].row(idx);
      for (std::size_t j = 0; j < d; ++j) row[j] += entry[j];
    }
  }
  return out;
}

StraightThrough quantize_straight_through(const DiffNode& f, const RvqState& state) {
  if (!f.valid() || f.value().rank() != 2) throw UsageError("straight_through: expected frames x D");
  FeatureSequence fs{f.value(), 0.0};
  StraightThrough out;
  out.codes = rvq_quantize(state, fs);
  out.quantized = DiffNode::make(
      out.codes.reconstruction.frames, {f},
      [](const Tensor& g, const Tensor&, std::span<DiffNode> p) {
        if (!p[0].requires_grad()) return;
        Tensor& gf = p[0].grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gf[i] += g[i];
      },
      "straight_through");
  return out;
}

DiffNode straight_through(const DiffNode& f, const RvqState& state) {
  return quantize_straight_through(f, state).quantized;
}

DiffNode reduce_dim(const DiffNode& emb, const DiffNode& w) {
  if (!emb.valid() || !w.valid() || emb.value().rank() != 2 || w.value().rank() != 2 ||
      emb.shape()[1] != w.shape()[0]) {
    throw UsageError("reduce_dim: shape mismatch emb" + shape_string(emb.shape()) + " w" +
                     shape_string(w.shape()));
  }
  return matmul(emb, w);
}

std::uint64_t codebook_hash(const RvqState& state) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint32_t word) {
    for (int i = 0; i < 4; ++i) {
      h ^= (word >> (8 * i)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  };
  mix(static_cast<std::uint32_t>(state.stage_count()));
  for (const auto& cb : state.stages) {
    mix(static_cast<std::uint32_t>(cb.size()));
    mix(static_cast<std::uint32_t>(cb.dim()));
    for (double v : cb.table().data()) mix(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return h;
}

void write_codebooks(const std::filesystem::path& path, const RvqState& state) {
  check_state(state);
  ByteWriter w;
  w.bytes("RVQC", 4);
  w.u32(kCodebookVersion);
  w.u32(static_cast<std::uint32_t>(state.dim()));
  w.u32(static_cast<std::uint32_t>(state.stages[0].size()));
  w.u32(static_cast<std::uint32_t>(state.stage_count()));
  for (const auto& cb : state.stages) {
    if (cb.size() != state.stages[0].size()) throw UsageError("write_codebooks: stages differ in K");
    for (double v : cb.table().data()) w.f32(static_cast<float>(v));
  }
  write_file_bytes(path, w.data());
}

RvqState read_codebooks(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes.data(), bytes.size(), path.string());
  if (r.fixed(4) != "RVQC") throw DataError(path.string() + ": bad codebook magic");
  const std::uint32_t version = r.u32();
  if (version != kCodebookVersion) {
    throw DataError(path.string() + ": unsupported codebook version " + std::to_string(version));
  }
  const std::uint32_t d = r.u32(), k = r.u32(), stages = r.u32();
  if (d == 0 || k == 0 || stages == 0) throw DataError(path.string() + ": empty codebook geometry");
  std::vector<Codebook> cbs;
  for (std::uint32_t s = 0; s < stages; ++s) {
    Tensor t({k, d});
    for (auto& v : t.data()) v = static_cast<double>(r.f32());
    cbs.push_back(Codebook::from_tensor(std::move(t), s));
  }
  if (r.remaining() != 0) throw DataError(path.string() + ": trailing bytes after codebooks");
  return RvqState(std::move(cbs));
}

}  // namespace txc
