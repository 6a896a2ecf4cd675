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

#ifndef REIDREFINE_GRID_H_
#define REIDREFINE_GRID_H_

#include <cstddef>
#include <span>
#include <vector>

namespace reidrefine {

enum class BorderMode { kZeroPad };

// Dense row-major image, channel-interleaved: index = (row * cols + col) *
// channels + ch. Pixel centers sit at integer coordinates, x = col, y = row.
class Grid2D {
 public:
  Grid2D() = default;
  Grid2D(int rows, int cols, int channels, double fill = 0.0);
  Grid2D(int rows, int cols, int channels, std::vector<double> data);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(int row, int col, int ch) const {
    return (static_cast<std::size_t>(row) * cols_ + col) * channels_ + ch;
  }
  // Inverse of index(); returns {row, col, ch}.
  struct Coord {
    int row, col, ch;
  };
  Coord unflatten(std::size_t flat) const;

  bool in_bounds(int row, int col) const {
    return row >= 0 && row < rows_ && col >= 0 && col < cols_;
  }
  bool same_shape(const Grid2D& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ &&
           channels_ == other.channels_;
  }

  double& at(int row, int col, int ch) { return data_[index(row, col, ch)]; }
  double at(int row, int col, int ch) const {
    return data_[index(row, col, ch)];
  }

  // Stored value when (row, col) is inside the grid, otherwise the border
  // value. Throws std::out_of_range on a bad channel.
  double get(int row, int col, int ch,
             BorderMode mode = BorderMode::kZeroPad) const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool all_finite() const;
  void fill(double v);

  friend bool operator==(const Grid2D&, const Grid2D&) = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

}  // namespace reidrefine

#endif  // REIDREFINE_GRID_H_
