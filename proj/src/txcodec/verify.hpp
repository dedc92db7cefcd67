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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace txc {

// Invariant suite behind `txcodec verify`. Each property is self-contained and
// reports a one-line detail string.

struct PropertyResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

// Worst finite-difference error of one op over its random instances.
struct GradOpReport {
  std::string op;
  std::string family;  // elementwise, linear, spectral, reduction, loss
  std::size_t instances = 0;
  double worst_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return instances > 0 && worst_rel_error <= tolerance; }
};

inline constexpr double kGradTolerance = 1e-4;
inline constexpr double kLinearGradTolerance = 1e-6;

std::vector<GradOpReport> run_gradient_suite(std::size_t instances, std::uint64_t seed);

struct VerifyOptions {
  std::uint64_t seed = 0;
  std::size_t grad_instances = 20;
  std::size_t bitstream_trials = 1000;
  // Flips a bit inside pack_indices for the duration of the run.
  bool inject_pack_fault = false;
};

using PropertyCallback = std::function<void(const PropertyResult&)>;

// Runs every property in a fixed order; `on_result` sees each as it finishes.
std::vector<PropertyResult> run_verification(const VerifyOptions& options,
                                             const PropertyCallback& on_result = {});

// Individual properties, exposed for tests.
PropertyResult verify_straight_through(std::uint64_t seed);
PropertyResult verify_stop_gradient(std::uint64_t seed);
PropertyResult verify_rvq_monotone(std::uint64_t seed);
PropertyResult verify_kmeans_monotone(std::uint64_t seed);
PropertyResult verify_kmeans_deterministic(std::uint64_t seed);
PropertyResult verify_rvq_roundtrip(std::uint64_t seed);
PropertyResult verify_pack_byte_example();
PropertyResult verify_pack_roundtrip(std::size_t trials, std::uint64_t seed);
PropertyResult verify_allocation_table();
PropertyResult verify_exact_bitrate();
PropertyResult verify_hash_mismatch(std::uint64_t seed);
PropertyResult verify_shape_identity(std::uint64_t seed);
PropertyResult verify_loss_values();

}  // namespace txc
