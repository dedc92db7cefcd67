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

// Training objectives: hinge adversarial losses, discriminator feature
// matching, multi-scale mel reconstruction, and the VQ codebook/commitment loss.

#pragma once

#include <array>
#include <span>
#include <vector>

#include "txcodec/quantizer.hpp"
#include "txcodec/tensor.hpp"

namespace txc {

inline constexpr std::size_t kDiscriminatorCount = 4;
inline constexpr double kLogMelFloor = 1e-5;

struct DiscriminatorOutput {
  DiffNode logits;                     // any shape; T_k = element count
  std::vector<DiffNode> feature_maps;  // intermediate activations, L >= 1
};

struct LossWeights {
  double adv = 1.0;
  double feat = 100.0;
  double recon = 1.0;
  double quant = 0.4;
  double beta = 0.25;
};

// (1/4) sum_k mean_t max(0, 1 - D_k(x_hat))
DiffNode adv_generator_loss(std::span<const DiscriminatorOutput> fake);

// (1/4) sum_k mean_t max(0, 1 - D_k(x)) + (1/4) sum_k mean_t max(0, 1 + D_k(x_hat))
DiffNode adv_discriminator_loss(std::span<const DiscriminatorOutput> real,
                                std::span<const DiscriminatorOutput> fake);

// sum_k sum_l ||D_k^l(x) - D_k^l(x_hat)||_1 / (4 L_k T_kl), T_kl the element
// count of layer l of discriminator k.
DiffNode feature_matching_loss(std::span<const DiscriminatorOutput> real,
                               std::span<const DiscriminatorOutput> fake);

// Window lengths 2^6 .. 2^11.
std::array<std::size_t, 6> reconstruction_scales();
// sqrt(s / 2)
double log_term_weight(std::size_t s);

// sum_s [ sum_t |S_t^s(x) - S_t^s(x_hat)|_1 + sqrt(s/2) sum_t |log S_t^s(x) - log S_t^s(x_hat)|_2 ]
// over 64-bin mel power spectrograms with hop s/4 and a 1e-5 floor inside the
// log. Waveforms are rank-1 nodes of equal length >= 2048.
DiffNode reconstruction_loss(const DiffNode& x, const DiffNode& x_hat);

// The two halves of the quantization loss for encoder output `enc` and
// selected code vectors `e` (both frames x D). Squared norms are summed over
// D and averaged over frames.
struct QuantizationTerms {
  DiffNode codebook;    // ||sg[enc] - e||^2, reaches e only
  DiffNode commitment;  // ||sg[e] - enc||^2, reaches enc only
};

QuantizationTerms quantization_terms(const DiffNode& enc, const DiffNode& e);
DiffNode quantization_loss(const DiffNode& enc, const DiffNode& e, double beta);

// Quantization terms summed over the stages of a cascade. Stage s sees the
// residual f - sum_{j<s} sg[e_j], so codebooks are reached only through their
// own codebook term.
QuantizationTerms rvq_quantization_terms(const DiffNode& f, const RvqState& state,
                                         const IndexMatrix& indices);
DiffNode rvq_quantization_loss(const DiffNode& f, const RvqState& state, const IndexMatrix& indices,
                               double beta);

struct GeneratorLossParts {
  DiffNode adv;
  DiffNode feat;
  DiffNode recon;
  DiffNode quant;
};

DiffNode total_generator_loss(const GeneratorLossParts& parts, const LossWeights& weights);

}  // namespace txc
