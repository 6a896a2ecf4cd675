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

#ifndef REIDREFINE_ROI_TRANSFORM_H_
#define REIDREFINE_ROI_TRANSFORM_H_

#include <array>
#include <vector>

#include "reidrefine/grid.h"

namespace reidrefine {

inline constexpr int kDefaultCropRows = 65;
inline constexpr int kDefaultCropCols = 33;
inline constexpr double kMinBoxSide = 2.0;

// Box corners in continuous pixel coordinates: (m1, n1) top-left,
// (m2, n2) bottom-right, x along columns, y along rows.
struct BBox {
  double m1 = 0.0, n1 = 0.0, m2 = 0.0, n2 = 0.0;

  double width() const { return m2 - m1; }
  double height() const { return n2 - n1; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (m1 + m2); }
  double center_y() const { return 0.5 * (n1 + n2); }
  std::array<double, 4> as_array() const { return {m1, n1, m2, n2}; }
  static BBox from_array(const std::array<double, 4>& a) {
    return {a[0], a[1], a[2], a[3]};
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

// True when both sides are at least kMinBoxSide and all corners are finite.
bool is_valid_box(const BBox& b);
// Throws std::invalid_argument for an invalid box.
void check_box(const BBox& b);

struct Point2 {
  double x = 0.0, y = 0.0;
};

// 2x3 matrix [[a11 a12 a13], [a21 a22 a23]] mapping normalized target
// coordinates (x, y, 1) to source pixels.
struct AffineMatrix {
  std::array<double, 6> a{};

  double a11() const { return a[0]; }
  double a12() const { return a[1]; }
  double a13() const { return a[2]; }
  double a21() const { return a[3]; }
  double a22() const { return a[4]; }
  double a23() const { return a[5]; }

  Point2 apply(Point2 t) const {
    return {a[0] * t.x + a[1] * t.y + a[2], a[3] * t.x + a[4] * t.y + a[5]};
  }
};

AffineMatrix affine_from_box(const BBox& b);

// Regular rows x cols lattice covering [-1, 1]^2 with both ends included.
// Point i sits at row i / cols, column i % cols.
struct TargetGrid {
  int rows = 0;
  int cols = 0;
  std::vector<Point2> points;
};

struct SourceGrid {
  int rows = 0;
  int cols = 0;
  std::vector<Point2> points;
};

TargetGrid make_target_grid(int rows, int cols);
SourceGrid map_grid(const AffineMatrix& affine, const TargetGrid& target);

// Everything the backward pass needs from the forward sample.
struct CropResult {
  Grid2D crop;
  SourceGrid source;
  // Top-left corner of each sample's interpolation cell and the fractional
  // offsets inside it.
  std::vector<int> cell_x, cell_y;
  std::vector<double> frac_x, frac_y;
  // dV/dx and dV/dy per sample and channel, laid out like `crop`.
  std::vector<double> dv_dx, dv_dy;
  int image_rows = 0;
  int image_cols = 0;
};

// Bilinear sampling of `image` at every source point, zero outside.
CropResult sample_crop(const Grid2D& image, const SourceGrid& source);

// affine_from_box -> make_target_grid -> map_grid -> sample_crop.
CropResult roi_crop(const Grid2D& image, const BBox& box,
                    int rows = kDefaultCropRows, int cols = kDefaultCropCols);

struct CropGradients {
  Grid2D d_image;  // empty when not requested
  std::array<double, 4> d_box{};  // dL/d(m1, n1, m2, n2)
};

CropGradients crop_backward(const CropResult& cache, const Grid2D& d_crop,
                            const BBox& box, bool want_image_grad = true);

}  // namespace reidrefine

#endif  // REIDREFINE_ROI_TRANSFORM_H_
