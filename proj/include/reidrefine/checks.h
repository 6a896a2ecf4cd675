// Copyright 2026 The reidrefine Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef REIDREFINE_CHECKS_H_
#define REIDREFINE_CHECKS_H_

#include <cstdint>
#include <string>
#include <vector>

namespace reidrefine {

inline constexpr double kGradStep = 1e-3;
inline constexpr double kGradFloor = 1e-6;
inline constexpr double kRoiGradTolerance = 1e-3;
inline constexpr double kChainGradTolerance = 1e-2;
inline constexpr double kAffineTolerance = 1e-12;

// Worst-case error of one randomized check against its tolerance.
struct CheckReport {
  std::string name;
  int cases = 0;
  std::size_t compared = 0;
  double max_error = 0.0;
  int worst_case = -1;
  double tolerance = 0.0;

  bool passed() const { return max_error < tolerance; }
};

// Crop of a random image at a random box with L = sum(w * V) for random w:
// analytic dL/d(m1, n1, m2, n2) and dL/dU against central differences.
// Error is relative, over components above kGradFloor.
CheckReport check_roi_gradients(int cases, std::uint64_t seed);

// Two boxes of distinct identities in a random scene, random frozen net and
// a fully filled proxy table: analytic box gradient of the cls+tri loss
// against central differences. Error is relative.
CheckReport check_chain_gradients(int cases, std::uint64_t seed);

// Random valid boxes: the box affine must send (-1, -1) and (1, 1) to the
// corners. Error is absolute.
CheckReport check_affine_corners(int cases, std::uint64_t seed);

// {"checks": [{"name", "cases", "compared", "max_error", "worst_case",
// "tolerance", "passed"}...], "passed"}.
std::string checks_json(const std::vector<CheckReport>& reports);

}  // namespace reidrefine

#endif  // REIDREFINE_CHECKS_H_
