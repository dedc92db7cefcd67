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

#include <set>

#include "doctest.h"
#include "txcodec/bitstream.hpp"
#include "txcodec/verify.hpp"

using namespace txc;

TEST_CASE("gradient suite covers every family within tolerance") {
  const auto reports = run_gradient_suite(3, 11);
  std::set<std::string> families;
  for (const auto& r : reports) {
    families.insert(r.family);
    CHECK_MESSAGE(r.passed(), r.op << " worst " << r.worst_rel_error);
    CHECK(r.tolerance == (r.family == "linear" ? kLinearGradTolerance : kGradTolerance));
  }
  CHECK(families == std::set<std::string>{"elementwise", "linear", "spectral", "reduction", "loss"});
  CHECK(reports.size() >= 30);
}

TEST_CASE("full suite passes for several seeds") {
  for (std::uint64_t seed : {0ULL, 1ULL, 12345ULL}) {
    VerifyOptions opt;
    opt.seed = seed;
    opt.grad_instances = 2;
    opt.bitstream_trials = 200;
    std::vector<std::string> streamed;
    const auto results = run_verification(opt, [&](const PropertyResult& r) { streamed.push_back(r.name); });
    CHECK(results.size() >= 12);
    CHECK(streamed.size() == results.size());
    std::set<std::string> names;
    for (const auto& r : results) {
      CHECK_MESSAGE(r.passed, r.name << ": " << r.detail);
      names.insert(r.name);
    }
    CHECK(names.size() == results.size());
  }
}

TEST_CASE("injected packing fault is caught and then cleared") {
  VerifyOptions opt;
  opt.grad_instances = 1;
  opt.bitstream_trials = 50;
  opt.inject_pack_fault = true;
  std::set<std::string> failed;
  for (const auto& r : run_verification(opt)) {
    if (!r.passed) failed.insert(r.name);
  }
  CHECK(failed.count("bitstream.byte_example") == 1);
  CHECK(failed.count("bitstream.roundtrip") == 1);
  CHECK_FALSE(pack_fault_injection());
  CHECK(verify_pack_byte_example().passed);
}

TEST_CASE("individual properties") {
  CHECK(verify_straight_through(3).passed);
  CHECK(verify_stop_gradient(3).passed);
  CHECK(verify_allocation_table().passed);
  CHECK(verify_exact_bitrate().passed);
  CHECK(verify_hash_mismatch(3).passed);
  CHECK(verify_loss_values().passed);
}
