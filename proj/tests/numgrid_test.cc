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

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "reidrefine/gradcheck.h"
#include "reidrefine/grid.h"
#include "reidrefine/ppm.h"
#include "reidrefine/rng.h"

namespace reidrefine {
namespace {

Grid2D two_by_two() { return Grid2D(2, 2, 1, std::vector<double>{0, 1, 2, 3}); }

TEST(GridTest, GetInBounds) { EXPECT_EQ(two_by_two().get(0, 1, 0), 1.0); }

TEST(GridTest, GetOutOfBoundsIsZero) {
  const Grid2D g = two_by_two();
  EXPECT_EQ(g.get(-1, 0, 0, BorderMode::kZeroPad), 0.0);
  EXPECT_EQ(g.get(5, 5, 0, BorderMode::kZeroPad), 0.0);
}

TEST(GridTest, GetBadChannelThrows) {
  EXPECT_THROW(two_by_two().get(0, 0, 1), std::out_of_range);
  EXPECT_THROW(two_by_two().get(0, 0, -1), std::out_of_range);
}

TEST(GridTest, DataLengthMatchesShape) {
  EXPECT_EQ(Grid2D(3, 5, 2).size(), 30u);
  EXPECT_THROW(Grid2D(2, 2, 1, std::vector<double>{1, 2, 3}), std::invalid_argument);
}

TEST(GridTest, FlattenUnflattenRoundTrip) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Grid2D g(rng.uniform_int(1, 9), rng.uniform_int(1, 9), rng.uniform_int(1, 4));
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Grid2D::Coord c = g.unflatten(i);
      ASSERT_EQ(g.index(c.row, c.col, c.ch), i);
    }
  }
}

TEST(GridTest, AllFinite) {
  Grid2D g = two_by_two();
  EXPECT_TRUE(g.all_finite());
  g.at(1, 1, 0) = std::nan("");
  EXPECT_FALSE(g.all_finite());
}

TEST(RngTest, EqualSeedsGiveEqualStreams) {
  Rng a(42), b(42);
  for (int i = 0; i < 10000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  Rng c(42), d(42);
  for (int i = 0; i < 10000; ++i) {
    ASSERT_EQ(c.uniform(), d.uniform());
    ASSERT_EQ(c.normal(), d.normal());
  }
}

TEST(RngTest, DifferentSeedsDiffer) {
  Rng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 100; ++i) same += a.next_u64() == b.next_u64();
  EXPECT_EQ(same, 0);
}

TEST(RngTest, UniformIntStaysInRange) {
  Rng rng(5);
  std::vector<int> seen(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const int v = rng.uniform_int(-3, 3);
    ASSERT_GE(v, -3);
    ASSERT_LE(v, 3);
    ++seen[v + 3];
  }
  for (int count : seen) EXPECT_GT(count, 800);
}

TEST(RngTest, DeriveIsDeterministicAndDistinct) {
  const Rng root(9);
  Rng a = root.derive(1), b = root.derive(1), c = root.derive(2);
  const auto x = a.next_u64();
  EXPECT_EQ(x, b.next_u64());
  EXPECT_NE(x, c.next_u64());
}

TEST(CentralDiffTest, Square) {
  const std::vector<double> x = {3.0};
  const auto g = central_diff([](std::span<const double> p) { return p[0] * p[0]; }, x, 1e-4);
  EXPECT_NEAR(g[0], 6.0, 1e-6);
}

TEST(CentralDiffTest, ConstantGivesZero) {
  const std::vector<double> x = {1.0, -2.0, 0.5};
  const auto g = central_diff([](std::span<const double>) { return 4.2; }, x, 1e-3);
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(CentralDiffTest, ExactOnQuadratics) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = rng.uniform_int(1, 5);
    // f(x) = x'Qx + b'x + c with analytic gradient (Q + Q')x + b.
    std::vector<double> q(n * n), b(n), x(n);
    for (double& v : q) v = rng.uniform(-2, 2);
    for (double& v : b) v = rng.uniform(-2, 2);
    for (double& v : x) v = rng.uniform(-3, 3);
    const double c = rng.uniform(-1, 1);
    auto f = [&](std::span<const double> p) {
      double s = c;
      for (int i = 0; i < n; ++i) {
        s += b[i] * p[i];
        for (int j = 0; j < n; ++j) s += p[i] * q[i * n + j] * p[j];
      }
      return s;
    };
    const double h = std::pow(10.0, rng.uniform(-5, -3));
    const auto g = central_diff(f, x, h);
    for (int i = 0; i < n; ++i) {
      double expected = b[i];
      for (int j = 0; j < n; ++j) expected += (q[i * n + j] + q[j * n + i]) * x[j];
      ASSERT_NEAR(g[i], expected, 1e-8 * std::max(1.0, std::abs(expected)));
    }
  }
}

TEST(CentralDiffTest, SelectedCoordinates) {
  const std::vector<double> x = {1.0, 2.0, 3.0};
  const std::vector<std::size_t> coords = {2, 0};
  const auto g = central_diff(
      [](std::span<const double> p) { return p[0] * 10 + p[1] * p[1] + p[2] * 7; }, x, 1e-3,
      coords);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_NEAR(g[0], 7.0, 1e-9);
  EXPECT_NEAR(g[1], 10.0, 1e-9);
}

TEST(CentralDiffTest, NonFiniteThrows) {
  const std::vector<double> x = {0.0};
  EXPECT_THROW(central_diff([](std::span<const double> p) { return std::log(p[0]); }, x, 1e-3),
               std::domain_error);
}

TEST(CompareGradientsTest, FloorAndRelativeError) {
  const std::vector<double> a = {1.0, 1e-8, -2.0};
  const std::vector<double> n = {1.1, 5e-7, -2.0};
  const GradCompare cmp = compare_gradients(a, n, 1e-6);
  EXPECT_EQ(cmp.compared, 2u);
  EXPECT_NEAR(cmp.max_rel_error, 0.1 / 1.1, 1e-12);
  EXPECT_EQ(cmp.worst_index, 0u);
}

TEST(PpmTest, BinaryRoundTripIsExactOnQuantizedImages) {
  Rng rng(8);
  Grid2D img(5, 7, 3);
  for (double& v : img.data()) v = rng.uniform();
  quantize_to_8bit(img);
  for (PpmFormat format : {PpmFormat::kBinary, PpmFormat::kAscii}) {
    std::stringstream ss;
    write_ppm(ss, img, format);
    EXPECT_EQ(read_ppm(ss), img);
  }
}

TEST(PpmTest, ReadsHandWrittenAscii) {
  std::istringstream in("P3\n# comment\n2 1\n255\n255 0 0  0 0 51\n");
  const Grid2D g = read_ppm(in);
  ASSERT_EQ(g.rows(), 1);
  ASSERT_EQ(g.cols(), 2);
  EXPECT_EQ(g.at(0, 0, 0), 1.0);
  EXPECT_EQ(g.at(0, 1, 2), 0.2);
}

TEST(PpmTest, RejectsGarbage) {
  std::istringstream in("P9\n1 1\n255\n0 0 0\n");
  EXPECT_THROW(read_ppm(in), std::runtime_error);
}

}  // namespace
}  // namespace reidrefine
