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

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "txcodec/tensor.hpp"

namespace txc {

struct GradCheckResult {
  // Worst norm-wise relative error ||analytic - numeric|| / max(||analytic||, ||numeric||)
  // over the checked inputs.
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t coordinates = 0;
};

using LossBuilder = std::function<DiffNode(std::span<const DiffNode> inputs)>;

struct GradCheckOptions {
  double step = 1e-6;
  // Per-input cap on checked coordinates, sampled without replacement; 0 checks all.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
};

// Compares backward() against central finite differences of `build` at
// `inputs`. The builder is re-run for every perturbation, so it must be a pure
// function of its inputs. Runs at 64-bit precision regardless of the caller's.
GradCheckResult check_gradients(const LossBuilder& build, const std::vector<Tensor>& inputs,
                                const GradCheckOptions& options);
GradCheckResult check_gradients(const LossBuilder& build, const std::vector<Tensor>& inputs,
                                double step = 1e-6);

}  // namespace txc
