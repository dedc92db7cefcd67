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

#include "txcodec/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "txcodec/random.hpp"

namespace txc {

GradCheckResult check_gradients(const LossBuilder& build, const std::vector<Tensor>& inputs,
                                double step) {
  GradCheckOptions options;
  options.step = step;
  return check_gradients(build, inputs, options);
}

GradCheckResult check_gradients(const LossBuilder& build, const std::vector<Tensor>& inputs,
                                const GradCheckOptions& options) {
  const double step = options.step;
  Rng rng(options.seed);
  PrecisionScope scope(Precision::f64);
  auto evaluate = [&](const std::vector<Tensor>& values) {
    std::vector<DiffNode> nodes;
    for (const auto& v : values) nodes.push_back(DiffNode::constant(v));
    return build(nodes).value().item();
  };

  std::vector<DiffNode> params;
  for (const auto& v : inputs) params.push_back(DiffNode::parameter(v));
  backward(build(params));

  GradCheckResult result;
  std::vector<Tensor> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor analytic = params[i].grad();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    std::vector<std::size_t> coords(inputs[i].size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coordinates > 0 && coords.size() > options.max_coordinates) {
      for (std::size_t k = 0; k < options.max_coordinates; ++k) {
        std::swap(coords[k], coords[k + rng.index(coords.size() - k)]);
      }
      coords.resize(options.max_coordinates);
    }
    for (std::size_t j : coords) {
      const double orig = inputs[i][j];
      probe[i][j] = orig + step;
      const double up = evaluate(probe);
      probe[i][j] = orig - step;
      const double down = evaluate(probe);
      probe[i][j] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double d = analytic[j] - numeric;
      diff2 += d * d;
      a2 += analytic[j] * analytic[j];
      n2 += numeric * numeric;
      result.max_abs_error = std::max(result.max_abs_error, std::fabs(d));
      ++result.coordinates;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-300});
    const double rel = (a2 == 0.0 && n2 == 0.0) ? 0.0 : std::sqrt(diff2) / denom;
    result.max_rel_error = std::max(result.max_rel_error, rel);
  }
  return result;
}

}  // namespace txc
