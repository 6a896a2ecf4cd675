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

#include "reidrefine/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace reidrefine {

std::vector<double> central_diff(const ScalarFn& fn,
                                 std::span<const double> point, double step,
                                 std::span<const std::size_t> coords) {
  if (!(step > 0.0)) throw std::invalid_argument("central_diff: step <= 0");
  std::vector<double> x(point.begin(), point.end());
  std::vector<double> out;
  out.reserve(coords.size());
  for (std::size_t i : coords) {
    if (i >= x.size()) throw std::out_of_range("central_diff: coordinate");
    const double orig = x[i];
    x[i] = orig + step;
    const double fp = fn(x);
    x[i] = orig - step;
    const double fm = fn(x);
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::domain_error("central_diff: non-finite function value");
    }
    out.push_back((fp - fm) / (2.0 * step));
  }
  return out;
}

std::vector<double> central_diff(const ScalarFn& fn,
                                 std::span<const double> point, double step) {
  std::vector<std::size_t> all(point.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return central_diff(fn, point, step, all);
}

GradCompare compare_gradients(std::span<const double> analytic,
                              std::span<const double> numeric, double floor) {
  if (analytic.size() != numeric.size()) {
    throw std::invalid_argument("compare_gradients: length mismatch");
  }
  GradCompare r;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double scale = std::max(std::abs(analytic[i]), std::abs(numeric[i]));
    if (scale <= floor) continue;
    ++r.compared;
    const double rel = std::abs(analytic[i] - numeric[i]) / scale;
    if (rel > r.max_rel_error) {
      r.max_rel_error = rel;
      r.worst_index = i;
    }
  }
  return r;
}

}  // namespace reidrefine
