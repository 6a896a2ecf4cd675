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

#include "reidrefine/checks.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

#include "reidrefine/embed_net.h"
#include "reidrefine/gradcheck.h"
#include "reidrefine/proxy_triplet.h"
#include "reidrefine/refine.h"
#include "reidrefine/roi_transform.h"
#include "reidrefine/scene_synth.h"

namespace reidrefine {
namespace {

constexpr int kMaxAttempts = 1000;

Grid2D random_image(int rows, int cols, int channels, Rng& rng) {
  Grid2D img(rows, cols, channels);
  for (double& v : img.data()) v = rng.uniform();
  return img;
}

// Sum of random low-frequency sinusoids per channel.
Grid2D random_scene(int rows, int cols, Rng& rng) {
  constexpr double kPi = 3.14159265358979323846;
  Grid2D img(rows, cols, 3);
  for (int k = 0; k < 3; ++k) {
    for (int wave = 0; wave < 4; ++wave) {
      const double angle = rng.uniform(0.0, 2.0 * kPi);
      const double freq = 2.0 * kPi / rng.uniform(8.0, 40.0);
      const double fx = freq * std::cos(angle), fy = freq * std::sin(angle);
      const double phase = rng.uniform(0.0, 2.0 * kPi);
      const double amp = rng.uniform(0.05, 0.15);
      for (int y = 0; y < rows; ++y) {
        for (int x = 0; x < cols; ++x) img.at(y, x, k) += amp * std::sin(fx * x + fy * y + phase);
      }
    }
    for (int y = 0; y < rows; ++y) {
      for (int x = 0; x < cols; ++x) img.at(y, x, k) += 0.5;
    }
  }
  return img;
}

// Bilinear sampling is not differentiable where a sample coordinate is an
// integer and ReLU where a pre-activation is zero, so finite differences are
// only an oracle for probes that stay on one piece.
bool clear_of_kinks(const BBox& box, int rows, int cols, double margin) {
  const SourceGrid src = map_grid(affine_from_box(box), make_target_grid(rows, cols));
  auto clear = [&](double v) { return std::abs(v - std::round(v)) > margin; };
  return std::all_of(src.points.begin(), src.points.end(),
                     [&](const Point2& p) { return clear(p.x) && clear(p.y); });
}

// Box with sides in [lo, hi] placed inside [0, cols - 1] x [0, rows - 1].
BBox random_box(int rows, int cols, double lo, double hi, Rng& rng) {
  const double w = rng.uniform(lo, std::min(hi, cols - 1.0));
  const double h = rng.uniform(lo, std::min(hi, rows - 1.0));
  const double m1 = rng.uniform(0.0, cols - 1.0 - w);
  const double n1 = rng.uniform(0.0, rows - 1.0 - h);
  return {m1, n1, m1 + w, n1 + h};
}

std::vector<char> relu_pattern(const NetCache& cache) {
  std::vector<char> active;
  active.reserve(cache.act1.size() + cache.act2.size());
  for (double v : cache.act1) active.push_back(v > 0.0);
  for (double v : cache.act2) active.push_back(v > 0.0);
  return active;
}

struct ChainState {
  std::vector<std::vector<char>> relu;
  std::vector<MinedTriplet> mined;
};

ChainState chain_state(const SceneSet& set, std::span<const BoxItem> items,
                       const EmbedNet& net, const ProxyTable& table,
                       const RefineConfig& cfg) {
  ChainState state;
  std::vector<TripletAnchor> anchors;
  for (const BoxItem& it : items) {
    const NetOutput out = forward(net, roi_crop(set.scenes[it.scene], it.box, cfg.crop_rows,
                                                cfg.crop_cols).crop);
    state.relu.push_back(relu_pattern(out.cache));
    anchors.push_back({out.embedding, it.identity});
  }
  state.mined = mine_and_loss(table, anchors, cfg.margin, cfg.negatives).mined;
  return state;
}

bool same_pieces(const ChainState& a, const ChainState& b) {
  if (a.relu != b.relu || a.mined.size() != b.mined.size()) return false;
  for (std::size_t i = 0; i < a.mined.size(); ++i) {
    const MinedTriplet& x = a.mined[i];
    const MinedTriplet& y = b.mined[i];
    if (x.status != y.status || x.pos_row != y.pos_row || x.pos_slot != y.pos_slot ||
        x.neg_row != y.neg_row || x.neg_slot != y.neg_slot) {
      return false;
    }
  }
  return true;
}

// True when every +-kGradStep probe of every box coordinate keeps the ReLU
// activation pattern and the mined triplets of the centre point.
bool chain_smooth(const SceneSet& set, const std::vector<BoxItem>& items,
                  const EmbedNet& net, const ProxyTable& table, const RefineConfig& cfg) {
  const ChainState centre = chain_state(set, items, net, table, cfg);
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (int k = 0; k < 4; ++k) {
      for (double sign : {-1.0, 1.0}) {
        std::vector<BoxItem> moved = items;
        auto corners = moved[i].box.as_array();
        corners[k] += sign * kGradStep;
        moved[i].box = BBox::from_array(corners);
        if (!same_pieces(centre, chain_state(set, moved, net, table, cfg))) return false;
      }
    }
  }
  return true;
}

void record(CheckReport& report, int index, const GradCompare& cmp) {
  report.compared += cmp.compared;
  if (cmp.max_rel_error > report.max_error || report.worst_case < 0) {
    report.max_error = std::max(report.max_error, cmp.max_rel_error);
    report.worst_case = index;
  }
}

std::vector<double> unit_vector(int dim, Rng& rng) {
  std::vector<double> v(dim);
  double norm = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

}  // namespace

CheckReport check_roi_gradients(int cases, std::uint64_t seed) {
  CheckReport report{"roi_gradients", cases, 0, 0.0, -1, kRoiGradTolerance};
  for (int c = 0; c < cases; ++c) {
    Rng rng(mix_seed(seed, c));
    const int rows = rng.uniform_int(8, 16), cols = rng.uniform_int(8, 16);
    const int channels = rng.uniform_int(1, 3);
    const Grid2D image = random_image(rows, cols, channels, rng);
    const int out_rows = rng.uniform_int(2, 9), out_cols = rng.uniform_int(2, 9);
    BBox box = random_box(rows, cols, kMinBoxSide, 12.0, rng);
    for (int attempt = 0; !clear_of_kinks(box, out_rows, out_cols, 10.0 * kGradStep);
         ++attempt) {
      if (attempt == kMaxAttempts) throw std::runtime_error("roi check: no smooth box");
      box = random_box(rows, cols, kMinBoxSide, 12.0, rng);
    }
    Grid2D weights(out_rows, out_cols, channels);
    for (double& w : weights.data()) w = rng.uniform(-1.0, 1.0);

    auto objective = [&](const Grid2D& img, const BBox& b) {
      const CropResult crop = roi_crop(img, b, out_rows, out_cols);
      double total = 0.0;
      for (std::size_t i = 0; i < weights.size(); ++i) {
        total += weights.data()[i] * crop.crop.data()[i];
      }
      return total;
    };
    const CropResult cache = roi_crop(image, box, out_rows, out_cols);
    const CropGradients grads = crop_backward(cache, weights, box, true);

    const std::array<double, 4> corners = box.as_array();
    const auto d_box_fd = central_diff(
        [&](std::span<const double> p) {
          return objective(image, BBox{p[0], p[1], p[2], p[3]});
        },
        corners, kGradStep);
    const auto d_image_fd = central_diff(
        [&](std::span<const double> p) {
          Grid2D img(rows, cols, channels, std::vector<double>(p.begin(), p.end()));
          return objective(img, box);
        },
        image.data(), kGradStep);

    std::vector<double> analytic(grads.d_box.begin(), grads.d_box.end());
    analytic.insert(analytic.end(), grads.d_image.data().begin(),
                    grads.d_image.data().end());
    std::vector<double> numeric = d_box_fd;
    numeric.insert(numeric.end(), d_image_fd.begin(), d_image_fd.end());
    record(report, c, compare_gradients(analytic, numeric, kGradFloor));
  }
  return report;
}

CheckReport check_chain_gradients(int cases, std::uint64_t seed) {
  CheckReport report{"chain_gradients", cases, 0, 0.0, -1, kChainGradTolerance};
  constexpr int kIds = 4;
  for (int c = 0; c < cases; ++c) {
    Rng rng(mix_seed(seed, c));
    SceneSet set;
    set.num_ids = kIds;
    set.scenes.push_back(random_scene(96, 72, rng));
    set.annotations.emplace_back();

    EmbedNetShape shape;
    shape.num_ids = kIds;
    EmbedNet net(shape, rng);
    net.freeze();

    ProxyTable table(kIds, kDefaultProxyVolume, shape.embed_dim);
    std::vector<std::vector<double>> fill;
    std::vector<ProxyTable::Entry> entries;
    for (int id = 0; id < kIds; ++id) {
      for (int k = 0; k < kDefaultProxyVolume; ++k) fill.push_back(unit_vector(shape.embed_dim, rng));
    }
    for (std::size_t i = 0; i < fill.size(); ++i) {
      entries.push_back({fill[i], static_cast<int>(i) / kDefaultProxyVolume});
    }
    table.update(entries);

    RefineConfig cfg;
    cfg.loss = LossMode::kClsTri;
    // A margin this large keeps every anchor active.
    cfg.margin = 8.0;
    const int first = rng.uniform_int(0, kIds - 1);
    const int second = (first + rng.uniform_int(1, kIds - 1)) % kIds;
    auto draw_box = [&] {
      BBox box = random_box(96, 72, 16.0, 60.0, rng);
      for (int attempt = 0; !clear_of_kinks(box, shape.in_rows, shape.in_cols, 2.0 * kGradStep);
           ++attempt) {
        if (attempt == kMaxAttempts) throw std::runtime_error("chain check: no smooth box");
        box = random_box(96, 72, 16.0, 60.0, rng);
      }
      return box;
    };
    std::vector<BoxItem> items;
    for (int attempt = 0;; ++attempt) {
      if (attempt == kMaxAttempts) throw std::runtime_error("chain check: no smooth case");
      const BBox box_a = draw_box();
      const BBox box_b = draw_box();
      items = {{0, box_a, first}, {0, box_b, second}};
      if (chain_smooth(set, items, net, table, cfg)) break;
    }

    const BatchObjective obj = evaluate_batch(set, items, net, table, cfg);
    std::vector<double> analytic, point;
    for (std::size_t i = 0; i < items.size(); ++i) {
      analytic.insert(analytic.end(), obj.d_box[i].begin(), obj.d_box[i].end());
      const auto a = items[i].box.as_array();
      point.insert(point.end(), a.begin(), a.end());
    }
    const auto numeric = central_diff(
        [&](std::span<const double> p) {
          std::vector<BoxItem> moved = items;
          for (std::size_t i = 0; i < moved.size(); ++i) {
            moved[i].box = {p[4 * i], p[4 * i + 1], p[4 * i + 2], p[4 * i + 3]};
          }
          return evaluate_batch(set, moved, net, table, cfg).loss;
        },
        point, kGradStep);
    record(report, c, compare_gradients(analytic, numeric, kGradFloor));
  }
  return report;
}

CheckReport check_affine_corners(int cases, std::uint64_t seed) {
  CheckReport report{"affine_corners", cases, 0, 0.0, -1, kAffineTolerance};
  Rng rng(seed);
  for (int c = 0; c < cases; ++c) {
    const double m1 = rng.uniform(-500.0, 500.0), n1 = rng.uniform(-500.0, 500.0);
    const BBox box{m1, n1, m1 + rng.uniform(kMinBoxSide, 400.0),
                   n1 + rng.uniform(kMinBoxSide, 400.0)};
    const AffineMatrix a = affine_from_box(box);
    const Point2 lo = a.apply({-1.0, -1.0});
    const Point2 hi = a.apply({1.0, 1.0});
    const double err = std::max({std::abs(lo.x - box.m1), std::abs(lo.y - box.n1),
                                 std::abs(hi.x - box.m2), std::abs(hi.y - box.n2)});
    report.compared += 4;
    if (err > report.max_error || report.worst_case < 0) {
      report.max_error = std::max(report.max_error, err);
      report.worst_case = c;
    }
  }
  return report;
}

std::string checks_json(const std::vector<CheckReport>& reports) {
  nlohmann::ordered_json out;
  out["checks"] = nlohmann::ordered_json::array();
  bool all = true;
  for (const CheckReport& r : reports) {
    out["checks"].push_back({{"name", r.name},
                             {"cases", r.cases},
                             {"compared", r.compared},
                             {"max_error", r.max_error},
                             {"worst_case", r.worst_case},
                             {"tolerance", r.tolerance},
                             {"passed", r.passed()}});
    all = all && r.passed();
  }
  out["passed"] = all;
  return out.dump(2) + "\n";
}

}  // namespace reidrefine
