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

#ifndef REIDREFINE_PPM_H_
#define REIDREFINE_PPM_H_

#include <iosfwd>
#include <string>

#include "reidrefine/grid.h"

namespace reidrefine {

enum class PpmFormat { kAscii /* P3 */, kBinary /* P6 */ };

// Reads P3 or P6 into a 3-channel grid with intensities v / maxval.
Grid2D read_ppm(std::istream& in);
Grid2D read_ppm(const std::string& path);

// Writes a 1- or 3-channel grid with maxval 255; values are clamped to [0,1]
// and rounded. Single-channel grids are written as gray RGB.
void write_ppm(std::ostream& out, const Grid2D& image,
               PpmFormat format = PpmFormat::kBinary);
void write_ppm(const std::string& path, const Grid2D& image,
               PpmFormat format = PpmFormat::kBinary);

// Rounds every value to the nearest k/255 in [0,1], the set of values a PPM
// round trip preserves exactly.
void quantize_to_8bit(Grid2D& image);

}  // namespace reidrefine

#endif  // REIDREFINE_PPM_H_
