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

#include "reidrefine/roi_transform.h"

#include <cmath>
#include <stdexcept>

namespace reidrefine {

bool is_valid_box(const BBox& b) {
  return std::isfinite(b.m1) && std::isfinite(b.n1) && std::isfinite(b.m2) &&
         std::isfinite(b.n2) && b.width() >= kMinBoxSide &&
         b.height() >= kMinBoxSide;
}

void check_box(const BBox& b) {
  if (!is_valid_box(b)) {
    throw std::invalid_argument("degenerate box: sides must be >= 2 px");
  }
}

AffineMatrix affine_from_box(const BBox& b) {
  check_box(b);
  return {{0.5 * (b.m2 - b.m1), 0.0, 0.5 * (b.m2 + b.m1),  //
           0.0, 0.5 * (b.n2 - b.n1), 0.5 * (b.n2 + b.n1)}};
}

TargetGrid make_target_grid(int rows, int cols) {
  if (rows < 2 || cols < 2) {
    throw std::invalid_argument("make_target_grid: need at least 2x2");
  }
  TargetGrid t{rows, cols, {}};
  t.points.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    const double y = -1.0 + 2.0 * r / (rows - 1);
    for (int c = 0; c < cols; ++c) {
      t.points.push_back({-1.0 + 2.0 * c / (cols - 1), y});
    }
  }
  return t;
}

SourceGrid map_grid(const AffineMatrix& affine, const TargetGrid& target) {
  SourceGrid s{target.rows, target.cols, {}};
  s.points.reserve(target.points.size());
  for (const Point2& p : target.points) s.points.push_back(affine.apply(p));
  return s;
}

CropResult sample_crop(const Grid2D& image, const SourceGrid& source) {
  if (image.empty()) throw std::invalid_argument("sample_crop: empty image");
  const int ch = image.channels();
  const std::size_t n = source.points.size();
  if (n != static_cast<std::size_t>(source.rows) * source.cols) {
    throw std::invalid_argument("sample_crop: grid size mismatch");
  }
  CropResult r;
  r.crop = Grid2D(source.rows, source.cols, ch);
  r.source = source;
  r.cell_x.resize(n);
  r.cell_y.resize(n);
  r.frac_x.resize(n);
  r.frac_y.resize(n);
  r.dv_dx.assign(n * ch, 0.0);
  r.dv_dy.assign(n * ch, 0.0);
  r.image_rows = image.rows();
  r.image_cols = image.cols();

  auto out = r.crop.data();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 p = source.points[i];
    const double fx0 = std::floor(p.x);
    const double fy0 = std::floor(p.y);
    const int x0 = static_cast<int>(fx0);
    const int y0 = static_cast<int>(fy0);
    const double fx = p.x - fx0;
    const double fy = p.y - fy0;
    r.cell_x[i] = x0;
    r.cell_y[i] = y0;
    r.frac_x[i] = fx;
    r.frac_y[i] = fy;
    for (int k = 0; k < ch; ++k) {
      const double u00 = image.get(y0, x0, k);
      const double u01 = image.get(y0, x0 + 1, k);
      const double u10 = image.get(y0 + 1, x0, k);
      const double u11 = image.get(y0 + 1, x0 + 1, k);
      const std::size_t o = i * ch + k;
      out[o] = (1 - fx) * (1 - fy) * u00 + fx * (1 - fy) * u01 +
               (1 - fx) * fy * u10 + fx * fy * u11;
      r.dv_dx[o] = (1 - fy) * (u01 - u00) + fy * (u11 - u10);
      r.dv_dy[o] = (1 - fx) * (u10 - u00) + fx * (u11 - u01);
    }
  }
  return r;
}

CropResult roi_crop(const Grid2D& image, const BBox& box, int rows, int cols) {
  return sample_crop(image,
                     map_grid(affine_from_box(box), make_target_grid(rows, cols)));
}

CropGradients crop_backward(const CropResult& cache, const Grid2D& d_crop,
                            const BBox& box, bool want_image_grad) {
  if (!cache.crop.same_shape(d_crop)) {
    throw std::invalid_argument("crop_backward: upstream gradient shape");
  }
  check_box(box);
  const auto& pts = cache.source.points;
  if (pts.empty()) throw std::invalid_argument("crop_backward: empty cache");
  const Point2 first = pts.front();
  const Point2 last = pts.back();
  const double tol = 1e-9 * (1.0 + std::abs(box.m2) + std::abs(box.n2));
  if (std::abs(first.x - box.m1) > tol || std::abs(first.y - box.n1) > tol ||
      std::abs(last.x - box.m2) > tol || std::abs(last.y - box.n2) > tol) {
    throw std::invalid_argument("crop_backward: box does not match cache");
  }

  const int rows = cache.source.rows;
  const int cols = cache.source.cols;
  const int ch = d_crop.channels();
  const auto g = d_crop.data();

  CropGradients out;
  if (want_image_grad) {
    out.d_image = Grid2D(cache.image_rows, cache.image_cols, ch);
  }
  double dm1 = 0, dm2 = 0, dn1 = 0, dn2 = 0;
  for (int r = 0; r < rows; ++r) {
    const double yt = -1.0 + 2.0 * r / (rows - 1);
    double row_dx_lo = 0, row_dx_hi = 0;
    for (int c = 0; c < cols; ++c) {
      const double xt = -1.0 + 2.0 * c / (cols - 1);
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      double gx = 0, gy = 0;
      for (int k = 0; k < ch; ++k) {
        gx += g[i * ch + k] * cache.dv_dx[i * ch + k];
        gy += g[i * ch + k] * cache.dv_dy[i * ch + k];
      }
      // dx/dm1 = (1 - xt) / 2, dx/dm2 = (1 + xt) / 2; same for y and n.
      row_dx_lo += gx * 0.5 * (1.0 - xt);
      row_dx_hi += gx * 0.5 * (1.0 + xt);
      dn1 += gy * 0.5 * (1.0 - yt);
      dn2 += gy * 0.5 * (1.0 + yt);

      if (want_image_grad) {
        const int x0 = cache.cell_x[i];
        const int y0 = cache.cell_y[i];
        const double fx = cache.frac_x[i];
        const double fy = cache.frac_y[i];
        const double w[4] = {(1 - fx) * (1 - fy), fx * (1 - fy),
                             (1 - fx) * fy, fx * fy};
        const int dx[4] = {0, 1, 0, 1};
        const int dy[4] = {0, 0, 1, 1};
        for (int q = 0; q < 4; ++q) {
          const int yy = y0 + dy[q];
          const int xx = x0 + dx[q];
          if (!out.d_image.in_bounds(yy, xx)) continue;
          for (int k = 0; k < ch; ++k) {
            out.d_image.at(yy, xx, k) += w[q] * g[i * ch + k];
          }
        }
      }
    }
    dm1 += row_dx_lo;
    dm2 += row_dx_hi;
  }
  out.d_box = {dm1, dn1, dm2, dn2};
  return out;
}

}  // namespace reidrefine
