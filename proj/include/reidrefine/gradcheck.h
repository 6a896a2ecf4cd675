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

#ifndef REIDREFINE_GRADCHECK_H_
#define REIDREFINE_GRADCHECK_H_

#include <functional>
#include <span>
#include <vector>

namespace reidrefine {

using ScalarFn = std::function<double(std::span<const double>)>;

// Central finite differences: (f(x + h e_i) - f(x - h e_i)) / 2h for every i.
// Throws std::domain_error if f is non-finite at any probe.
std::vector<double> central_diff(const ScalarFn& fn,
                                 std::span<const double> point, double step);

// Same, restricted to the listed coordinates; result[k] is the derivative
// along coords[k].
std::vector<double> central_diff(const ScalarFn& fn,
                                 std::span<const double> point, double step,
                                 std::span<const std::size_t> coords);

struct GradCompare {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t compared = 0;  // components above the magnitude floor
};

// Relative error |a - n| / max(|a|, |n|) over components where either side
// exceeds `floor` in magnitude.
GradCompare compare_gradients(std::span<const double> analytic,
                              std::span<const double> numeric,
                              double floor = 1e-6);

}  // namespace reidrefine

#endif  // REIDREFINE_GRADCHECK_H_
