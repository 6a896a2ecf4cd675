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

#include "reidrefine/ppm.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace reidrefine {
namespace {

void skip_space_and_comments(std::istream& in) {
  while (true) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (c != EOF && std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

int read_header_int(std::istream& in) {
  skip_space_and_comments(in);
  int v = -1;
  if (!(in >> v) || v < 0) throw std::runtime_error("ppm: malformed header");
  return v;
}

int to_byte(double v) {
  return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Grid2D read_ppm(std::istream& in) {
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '3' && magic[1] != '6')) {
    throw std::runtime_error("ppm: expected P3 or P6 magic");
  }
  const bool binary = magic[1] == '6';
  const int cols = read_header_int(in);
  const int rows = read_header_int(in);
  const int maxval = read_header_int(in);
  if (cols == 0 || rows == 0 || maxval == 0 || maxval > 255) {
    throw std::runtime_error("ppm: unsupported dimensions or maxval");
  }
  const double scale = static_cast<double>(maxval);
  Grid2D g(rows, cols, 3);
  auto data = g.data();
  if (binary) {
    in.get();  // single whitespace byte after maxval
    std::vector<unsigned char> bytes(data.size());
    in.read(reinterpret_cast<char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!in) throw std::runtime_error("ppm: truncated pixel data");
    for (std::size_t i = 0; i < bytes.size(); ++i) {
      data[i] = bytes[i] / scale;
    }
  } else {
    for (double& v : data) {
      int x = -1;
      skip_space_and_comments(in);
      if (!(in >> x) || x < 0 || x > maxval) {
        throw std::runtime_error("ppm: bad ASCII sample");
      }
      v = x / scale;
    }
  }
  return g;
}

Grid2D read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("ppm: cannot open " + path);
  return read_ppm(in);
}

void write_ppm(std::ostream& out, const Grid2D& image, PpmFormat format) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw std::invalid_argument("ppm: need 1 or 3 channels");
  }
  const bool binary = format == PpmFormat::kBinary;
  out << (binary ? "P6" : "P3") << '\n'
      << image.cols() << ' ' << image.rows() << '\n'
      << 255 << '\n';
  const int ch = image.channels();
  std::vector<unsigned char> row_bytes(static_cast<std::size_t>(image.cols()) *
                                       3);
  for (int r = 0; r < image.rows(); ++r) {
    for (int c = 0; c < image.cols(); ++c) {
      for (int k = 0; k < 3; ++k) {
        row_bytes[static_cast<std::size_t>(c) * 3 + k] = static_cast<
            unsigned char>(to_byte(image.at(r, c, ch == 3 ? k : 0)));
      }
    }
    if (binary) {
      out.write(reinterpret_cast<const char*>(row_bytes.data()),
                static_cast<std::streamsize>(row_bytes.size()));
    } else {
      for (std::size_t i = 0; i < row_bytes.size(); ++i) {
        out << static_cast<int>(row_bytes[i])
            << (i + 1 == row_bytes.size() ? '\n' : ' ');
      }
    }
  }
  if (!out) throw std::runtime_error("ppm: write failed");
}

void write_ppm(const std::string& path, const Grid2D& image,
               PpmFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("ppm: cannot create " + path);
  write_ppm(out, image, format);
}

void quantize_to_8bit(Grid2D& image) {
  for (double& v : image.data()) v = to_byte(v) / 255.0;
}

}  // namespace reidrefine
