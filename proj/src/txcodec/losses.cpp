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

#include "txcodec/losses.hpp"

#include <cmath>

#include "txcodec/errors.hpp"
#include "txcodec/signal.hpp"

namespace txc {

namespace {

void check_count(std::span<const DiscriminatorOutput> outs, const char* what) {
  if (outs.size() != kDiscriminatorCount) {
    throw UsageError(std::string(what) + ": expected " + std::to_string(kDiscriminatorCount) +
                     " discriminator outputs, got " + std::to_string(outs.size()));
  }
  for (const auto& o : outs) {
    if (!o.logits.valid() || o.logits.size() == 0) throw UsageError(std::string(what) + ": empty logits");
  }
}

// mean_t max(0, 1 + sign * logit)
DiffNode hinge_mean(const DiffNode& logits, double sign) {
  return mean(relu(add_scalar(scale(logits, sign), 1.0)));
}

DiffNode hinge_average(std::span<const DiscriminatorOutput> outs, double sign) {
  DiffNode acc = hinge_mean(outs[0].logits, sign);
  for (std::size_t k = 1; k < outs.size(); ++k) acc = add(acc, hinge_mean(outs[k].logits, sign));
  return scale(acc, 1.0 / static_cast<double>(outs.size()));
}

DiffNode squared_error_per_frame(const DiffNode& a, const DiffNode& b) {
  const DiffNode diff = sub(a, b);
  const double rows = a.value().rank() == 2 ? static_cast<double>(a.shape()[0]) : 1.0;
  return scale(sum(square(diff)), 1.0 / rows);
}

}  // namespace

DiffNode adv_generator_loss(std::span<const DiscriminatorOutput> fake) {
  check_count(fake, "adv_generator_loss");
  return hinge_average(fake, -1.0);
}

DiffNode adv_discriminator_loss(std::span<const DiscriminatorOutput> real,
                                std::span<const DiscriminatorOutput> fake) {
  check_count(real, "adv_discriminator_loss");
  check_count(fake, "adv_discriminator_loss");
  return add(hinge_average(real, -1.0), hinge_average(fake, 1.0));
}

DiffNode feature_matching_loss(std::span<const DiscriminatorOutput> real,
                               std::span<const DiscriminatorOutput> fake) {
  check_count(real, "feature_matching_loss");
  check_count(fake, "feature_matching_loss");
  DiffNode acc;
  for (std::size_t k = 0; k < kDiscriminatorCount; ++k) {
    const auto& rm = real[k].feature_maps;
    const auto& fm = fake[k].feature_maps;
    if (rm.empty() || rm.size() != fm.size()) {
      throw UsageError("feature_matching_loss: discriminator " + std::to_string(k) +
                       " has mismatched layer counts " + std::to_string(rm.size()) + " vs " +
                       std::to_string(fm.size()));
    }
    const double layers = static_cast<double>(rm.size());
    for (std::size_t l = 0; l < rm.size(); ++l) {
      if (rm[l].shape() != fm[l].shape()) {
        throw UsageError("feature_matching_loss: feature map shape mismatch at D" + std::to_string(k) +
                         " layer " + std::to_string(l) + ": " + shape_string(rm[l].shape()) + " vs " +
                         shape_string(fm[l].shape()));
      }
      const double norm = 4.0 * layers * static_cast<double>(rm[l].size());
      DiffNode term = scale(l1_distance(rm[l], fm[l]), 1.0 / norm);
      acc = acc.valid() ? add(acc, term) : term;
    }
  }
  return acc;
}

std::array<std::size_t, 6> reconstruction_scales() { return {64, 128, 256, 512, 1024, 2048}; }

double log_term_weight(std::size_t s) { return std::sqrt(static_cast<double>(s) / 2.0); }

DiffNode reconstruction_loss(const DiffNode& x, const DiffNode& x_hat) {
  if (!x.valid() || !x_hat.valid() || x.value().rank() != 1 || x_hat.value().rank() != 1) {
    throw UsageError("reconstruction_loss: expected rank-1 waveform nodes");
  }
  if (x.size() != x_hat.size()) {
    throw UsageError("reconstruction_loss: length mismatch " + std::to_string(x.size()) + " vs " +
                     std::to_string(x_hat.size()));
  }
  if (x.size() < 2048) {
    throw UsageError("reconstruction_loss: signal of " + std::to_string(x.size()) +
                     " samples is shorter than 2048");
  }
  DiffNode acc;
  for (std::size_t s : reconstruction_scales()) {
    const DiffNode mx = mel_power(x, s);
    const DiffNode my = mel_power(x_hat, s);
    const DiffNode lin = l1_distance(mx, my);
    const DiffNode logs = sum(row_log_distance(mx, my, kLogMelFloor));
    const DiffNode term = add(lin, scale(logs, log_term_weight(s)));
    acc = acc.valid() ? add(acc, term) : term;
  }
  return acc;
}

QuantizationTerms quantization_terms(const DiffNode& enc, const DiffNode& e) {
  if (!enc.valid() || !e.valid() || enc.shape() != e.shape()) {
    throw UsageError("quantization_loss: shape mismatch " + shape_string(enc.shape()) + " vs " +
                     shape_string(e.shape()));
  }
  return {squared_error_per_frame(stop_gradient(enc), e),
          squared_error_per_frame(stop_gradient(e), enc)};
}

DiffNode quantization_loss(const DiffNode& enc, const DiffNode& e, double beta) {
  const auto t = quantization_terms(enc, e);
  return add(t.codebook, scale(t.commitment, beta));
}

QuantizationTerms rvq_quantization_terms(const DiffNode& f, const RvqState& state,
                                         const IndexMatrix& indices) {
  if (indices.stages != state.stage_count() || indices.frames != f.shape()[0]) {
    throw UsageError("rvq_quantization_terms: index matrix does not match cascade/frames");
  }
  QuantizationTerms total;
  DiffNode residual = f;
  std::vector<std::size_t> rows(indices.frames);
  for (std::size_t s = 0; s < state.stage_count(); ++s) {
    for (std::size_t t = 0; t < indices.frames; ++t) rows[t] = indices.at(t, s);
    const DiffNode e = gather_rows(state.stages[s].entries, rows);
    const auto terms = quantization_terms(residual, e);
    total.codebook = total.codebook.valid() ? add(total.codebook, terms.codebook) : terms.codebook;
    total.commitment =
        total.commitment.valid() ? add(total.commitment, terms.commitment) : terms.commitment;
    residual = sub(residual, stop_gradient(e));
  }
  return total;
}

DiffNode rvq_quantization_loss(const DiffNode& f, const RvqState& state, const IndexMatrix& indices,
                               double beta) {
  const auto t = rvq_quantization_terms(f, state, indices);
  return add(t.codebook, scale(t.commitment, beta));
}

DiffNode total_generator_loss(const GeneratorLossParts& parts, const LossWeights& w) {
  if (w.adv < 0 || w.feat < 0 || w.recon < 0 || w.quant < 0 || w.beta < 0) {
    throw UsageError("total_generator_loss: loss weights must be nonnegative");
  }
  DiffNode acc = scale(parts.adv, w.adv);
  acc = add(acc, scale(parts.feat, w.feat));
  acc = add(acc, scale(parts.recon, w.recon));
  return add(acc, scale(parts.quant, w.quant));
}

}  // namespace txc
