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

#include "reidrefine/grid.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace reidrefine {

Grid2D::Grid2D(int rows, int cols, int channels, double fill)
    : rows_(rows), cols_(cols), channels_(channels) {
  if (rows < 0 || cols < 0 || channels <= 0) {
    throw std::invalid_argument("Grid2D: invalid shape");
  }
  data_.assign(static_cast<std::size_t>(rows) * cols * channels, fill);
}

Grid2D::Grid2D(int rows, int cols, int channels, std::vector<double> data)
    : rows_(rows), cols_(cols), channels_(channels), data_(std::move(data)) {
  if (rows < 0 || cols < 0 || channels <= 0 ||
      data_.size() != static_cast<std::size_t>(rows) * cols * channels) {
    throw std::invalid_argument("Grid2D: data length does not match shape");
  }
}

Grid2D::Coord Grid2D::unflatten(std::size_t flat) const {
  const int ch = static_cast<int>(flat % channels_);
  const std::size_t pix = flat / channels_;
  return {static_cast<int>(pix / cols_), static_cast<int>(pix % cols_), ch};
}

double Grid2D::get(int row, int col, int ch, BorderMode mode) const {
  if (ch < 0 || ch >= channels_) {
    throw std::out_of_range("Grid2D::get: channel " + std::to_string(ch) +
                            " out of range");
  }
  if (in_bounds(row, col)) return data_[index(row, col, ch)];
  switch (mode) {
    case BorderMode::kZeroPad:
      return 0.0;
  }
  return 0.0;
}

bool Grid2D::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Grid2D::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

}  // namespace reidrefine
