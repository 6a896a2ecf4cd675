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

#include "reidrefine/refine.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "reidrefine/eval.h"
#include "text_util.h"

namespace reidrefine {
namespace {

constexpr int kHeadFeatures = 7;

// Bias, mean color inside the box, mean color of the 1.5x context window.
std::array<double, kHeadFeatures> head_features(const Grid2D& scene, const BBox& box) {
  std::array<double, kHeadFeatures> f{};
  f[0] = 1.0;
  const BBox ctx{box.center_x() - 0.75 * box.width(), box.center_y() - 0.75 * box.height(),
                 box.center_x() + 0.75 * box.width(), box.center_y() + 0.75 * box.height()};
  const BBox regions[2] = {box, ctx};
  for (int r = 0; r < 2; ++r) {
    const auto crop = roi_crop(scene, regions[r], 16, 8).crop;
    const int ch = std::min(crop.channels(), 3);
    const auto d = crop.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const int k = static_cast<int>(i % crop.channels());
      if (k < ch) f[1 + 3 * r + k] += d[i];
    }
    const double n = static_cast<double>(crop.rows()) * crop.cols();
    for (int k = 0; k < 3; ++k) f[1 + 3 * r + k] /= n;
  }
  return f;
}

void clamp_log_size(BoxParam& p) {
  // Slightly above the minimum so rounding in to_box() cannot undercut it.
  const double lo = std::log(kMinBoxSide) + 1e-9;
  p.log_w = std::max(p.log_w, lo);
  p.log_h = std::max(p.log_h, lo);
}

}  // namespace

const char* loss_mode_name(LossMode m) {
  switch (m) {
    case LossMode::kCls: return "cls";
    case LossMode::kTri: return "tri";
    case LossMode::kClsTri: return "cls+tri";
  }
  return "cls+tri";
}

LossMode parse_loss_mode(const std::string& s) {
  if (s == "cls") return LossMode::kCls;
  if (s == "tri") return LossMode::kTri;
  if (s == "cls+tri") return LossMode::kClsTri;
  throw std::invalid_argument("unknown loss mode: " + s + " (cls|tri|cls+tri)");
}

const char* box_mode_name(BoxMode m) {
  return m == BoxMode::kCoordinates ? "coords" : "head";
}

BoxMode parse_box_mode(const std::string& s) {
  if (s == "coords") return BoxMode::kCoordinates;
  if (s == "head") return BoxMode::kRefinerHead;
  throw std::invalid_argument("unknown box mode: " + s + " (coords|head)");
}

void check_refine_config(const RefineConfig& c) {
  if (c.iterations < 1) throw std::invalid_argument("refine: iterations must be >= 1");
  if (c.batch_size < 1) throw std::invalid_argument("refine: batch_size must be >= 1");
  if (!(c.peak_lr > c.final_lr && c.final_lr > 0.0)) {
    throw std::invalid_argument("refine: need peak_lr > final_lr > 0");
  }
  if (c.warmup_iters < 0 || c.decay_iter < c.warmup_iters) {
    throw std::invalid_argument("refine: need 0 <= warmup_iters <= decay_iter");
  }
  if (c.lr_scale < 0.0 || c.momentum < 0.0 || c.momentum >= 1.0 || c.weight_decay < 0.0) {
    throw std::invalid_argument("refine: bad optimizer constants");
  }
  if (c.proxy_volume < 1) throw std::invalid_argument("refine: proxy_volume must be >= 1");
  if (c.crop_rows < 2 || c.crop_cols < 2) throw std::invalid_argument("refine: crop too small");
}

double lr_at(int iteration, const RefineConfig& cfg) {
  if (iteration < 0) throw std::invalid_argument("lr_at: negative iteration");
  if (iteration < cfg.warmup_iters) {
    return cfg.peak_lr * static_cast<double>(iteration) / cfg.warmup_iters;
  }
  if (iteration < cfg.decay_iter) return cfg.peak_lr;
  return cfg.final_lr;
}

BoxParam BoxParam::from_box(const BBox& b) {
  check_box(b);
  return {b.center_x(), b.center_y(), std::log(b.width()), std::log(b.height())};
}

BBox BoxParam::to_box() const {
  const double w = std::exp(log_w);
  const double h = std::exp(log_h);
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

std::array<double, 4> BoxParam::chain(const std::array<double, 4>& g) const {
  const double w = std::exp(log_w);
  const double h = std::exp(log_h);
  return {g[0] + g[2], g[1] + g[3], 0.5 * w * (g[2] - g[0]), 0.5 * h * (g[3] - g[1])};
}

BatchObjective evaluate_batch(const SceneSet& set, std::span<const BoxItem> items,
                              const EmbedNet& net, const ProxyTable& table,
                              const RefineConfig& cfg) {
  const bool use_cls = cfg.loss != LossMode::kTri;
  const bool use_tri = cfg.loss != LossMode::kCls;
  const std::size_t n = items.size();

  std::vector<CropResult> crops;
  std::vector<NetOutput> outs;
  crops.reserve(n);
  outs.reserve(n);
  BatchObjective obj;
  for (const BoxItem& it : items) {
    if (it.scene < 0 || static_cast<std::size_t>(it.scene) >= set.scenes.size()) {
      throw std::invalid_argument("evaluate_batch: scene index out of range");
    }
    crops.push_back(roi_crop(set.scenes[it.scene], it.box, cfg.crop_rows, cfg.crop_cols));
    outs.push_back(forward(net, crops.back().crop));
    obj.anchors.push_back({outs.back().embedding, it.identity});
  }

  std::vector<std::vector<double>> d_logits(n), d_emb(n);
  if (use_cls) {
    for (std::size_t i = 0; i < n; ++i) {
      ClassLoss cl = classification_loss(outs[i].logits, items[i].identity);
      obj.cls_loss += cl.loss;
      d_logits[i] = std::move(cl.d_logits);
    }
  }
  if (use_tri) {
    try {
      TripletLoss tl = mine_and_loss(table, obj.anchors, cfg.margin, cfg.negatives);
      obj.tri_loss = tl.loss;
      obj.skipped_anchors = tl.skipped;
      d_emb = std::move(tl.grads);
    } catch (const NoNegativeError&) {
      obj.triplet_available = false;
    }
  }
  obj.loss = obj.cls_loss + obj.tri_loss;

  obj.d_box.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Grid2D d_crop = backward_to_input(net, outs[i].cache, d_emb[i], d_logits[i]);
    obj.d_box[i] = crop_backward(crops[i], d_crop, items[i].box, false).d_box;
  }
  return obj;
}

RefineRecord refine_boxes(const SceneSet& set, std::span<const RefineTarget> targets,
                          const EmbedNet& net, ProxyTable& table, const RefineConfig& cfg) {
  check_refine_config(cfg);
  if (!net.frozen()) throw std::invalid_argument("refine_boxes: re-ID net must be frozen");
  if (targets.empty()) throw std::invalid_argument("refine_boxes: no boxes");
  if (table.dim() != net.shape().embed_dim || table.num_ids() != net.shape().num_ids) {
    throw std::invalid_argument("refine_boxes: proxy table does not match the net");
  }
  for (const RefineTarget& t : targets) {
    check_box(t.init);
    if (t.scene < 0 || static_cast<std::size_t>(t.scene) >= set.scenes.size()) {
      throw std::invalid_argument("refine_boxes: scene index out of range");
    }
    if (t.identity < 0 || t.identity >= net.shape().num_ids) {
      throw std::invalid_argument("refine_boxes: identity out of range");
    }
  }

  const std::size_t n = targets.size();
  const bool head = cfg.box_mode == BoxMode::kRefinerHead;
  std::vector<BoxParam> params(n);
  std::vector<std::array<double, 4>> velocity(n, {0, 0, 0, 0});
  std::vector<BoxParam> base(n);
  // Boxes are re-derived from their parameters only after a parameter moves,
  // so a stationary box keeps its exact input coordinates.
  std::vector<BBox> boxes(n);
  std::vector<std::array<double, kHeadFeatures>> features(n);
  std::array<std::array<double, kHeadFeatures>, 4> head_w{};
  std::array<std::array<double, kHeadFeatures>, 4> head_v{};
  for (std::size_t i = 0; i < n; ++i) {
    params[i] = base[i] = BoxParam::from_box(targets[i].init);
    boxes[i] = targets[i].init;
    if (head) features[i] = head_features(set.scenes[targets[i].scene], targets[i].init);
  }
  auto head_param = [&](std::size_t i) {
    const double w0 = std::exp(base[i].log_w), h0 = std::exp(base[i].log_h);
    std::array<double, 4> delta{};
    for (int r = 0; r < 4; ++r) {
      for (int f = 0; f < kHeadFeatures; ++f) delta[r] += head_w[r][f] * features[i][f];
    }
    BoxParam p{base[i].cx + delta[0] * w0, base[i].cy + delta[1] * h0,
               base[i].log_w + delta[2], base[i].log_h + delta[3]};
    clamp_log_size(p);
    return p;
  };

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = n;

  RefineRecord rec;
  rec.loss.reserve(cfg.iterations);
  rec.mean_iou.reserve(cfg.iterations);
  rec.lr.reserve(cfg.iterations);
  rec.box_iou.reserve(cfg.iterations);

  const std::size_t batch = std::min<std::size_t>(cfg.batch_size, n);
  for (int it = 0; it < cfg.iterations; ++it) {
    const double lr = lr_at(it, cfg) * cfg.lr_scale;
    std::vector<std::size_t> idx;
    std::vector<BoxItem> items;
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == n) {
        rng.shuffle(order);
        cursor = 0;
      }
      const std::size_t i = order[cursor++];
      idx.push_back(i);
      items.push_back({targets[i].scene, boxes[i], targets[i].identity});
    }

    const BatchObjective obj = evaluate_batch(set, items, net, table, cfg);
    if (!std::isfinite(obj.loss)) {
      throw std::runtime_error("refine_boxes: non-finite loss at iteration " +
                               std::to_string(it));
    }
    rec.skipped_anchors += obj.skipped_anchors;
    if (!obj.triplet_available) ++rec.iterations_without_triplet;

    if (head) {
      std::array<std::array<double, kHeadFeatures>, 4> grad{};
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t i = idx[b];
        const auto g = params[i].chain(obj.d_box[b]);
        const double scale[4] = {std::exp(base[i].log_w), std::exp(base[i].log_h), 1.0, 1.0};
        for (int r = 0; r < 4; ++r) {
          for (int f = 0; f < kHeadFeatures; ++f) grad[r][f] += g[r] * scale[r] * features[i][f];
        }
      }
      for (int r = 0; r < 4; ++r) {
        for (int f = 0; f < kHeadFeatures; ++f) {
          double& v = head_v[r][f];
          v = cfg.momentum * v + grad[r][f] + cfg.weight_decay * head_w[r][f];
          head_w[r][f] -= lr * v;
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        const BoxParam p = head_param(i);
        if (p != params[i]) boxes[i] = p.to_box();
        params[i] = p;
      }
    } else {
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t i = idx[b];
        BoxParam& p = params[i];
        const BoxParam before = p;
        // Centers move in units of the initial box size: cx = cx0 + w0 * u.
        const double w0 = std::exp(base[i].log_w), h0 = std::exp(base[i].log_h);
        auto g = p.chain(obj.d_box[b]);
        g[0] *= w0;
        g[1] *= h0;
        g[2] += cfg.weight_decay * p.log_w;
        g[3] += cfg.weight_decay * p.log_h;
        auto& v = velocity[i];
        for (int k = 0; k < 4; ++k) v[k] = cfg.momentum * v[k] + g[k];
        p.cx -= lr * v[0] * w0;
        p.cy -= lr * v[1] * h0;
        p.log_w -= lr * v[2];
        p.log_h -= lr * v[3];
        clamp_log_size(p);
        if (p != before) boxes[i] = p.to_box();
      }
    }
    table_update(table, obj.anchors);

    std::vector<double> ious(n);
    for (std::size_t i = 0; i < n; ++i) ious[i] = iou(boxes[i], targets[i].ground_truth);
    rec.loss.push_back(obj.loss / static_cast<double>(batch));
    rec.mean_iou.push_back(std::accumulate(ious.begin(), ious.end(), 0.0) / static_cast<double>(n));
    rec.lr.push_back(lr);
    rec.box_iou.push_back(std::move(ious));
  }
  rec.final_boxes = std::move(boxes);
  return rec;
}

std::vector<BBox> perturb_boxes(std::span<const BBox> ground_truth, double iou_lo,
                                double iou_hi, Rng& rng) {
  if (!(iou_lo > 0.0 && iou_lo <= iou_hi && iou_hi <= 1.0)) {
    throw std::invalid_argument("perturb_boxes: need 0 < lo <= hi <= 1");
  }
  std::vector<BBox> out;
  out.reserve(ground_truth.size());
  for (const BBox& gt : ground_truth) {
    check_box(gt);
    if (iou_lo >= 1.0) {
      out.push_back(gt);
      continue;
    }
    const BoxParam p0 = BoxParam::from_box(gt);
    bool done = false;
    for (int attempt = 0; attempt < 10000 && !done; ++attempt) {
      const double s = rng.uniform(0.02, 0.5);
      BoxParam p = p0;
      p.cx += s * gt.width() * rng.normal();
      p.cy += s * gt.height() * rng.normal();
      p.log_w += s * rng.normal();
      p.log_h += s * rng.normal();
      const BBox b = p.to_box();
      if (!is_valid_box(b)) continue;
      const double v = iou(b, gt);
      if (v >= iou_lo && v <= iou_hi) {
        out.push_back(b);
        done = true;
      }
    }
    if (!done) throw std::runtime_error("perturb_boxes: rejection sampling failed");
  }
  return out;
}

void write_trace_csv(const std::string& path, const RefineRecord& record) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot create " + path);
  using internal::format_real;
  out << "iter,loss,mean_iou,lr\n";
  for (std::size_t i = 0; i < record.loss.size(); ++i) {
    out << i << ',' << format_real(record.loss[i]) << ',' << format_real(record.mean_iou[i])
        << ',' << format_real(record.lr[i]) << '\n';
  }
}

void write_boxes_csv(const std::string& path, std::span<const BoxItem> boxes) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot create " + path);
  using internal::format_real;
  out << "scene,x1,y1,x2,y2,id\n";
  for (const BoxItem& b : boxes) {
    out << b.scene << ',' << format_real(b.box.m1) << ',' << format_real(b.box.n1) << ','
        << format_real(b.box.m2) << ',' << format_real(b.box.n2) << ',' << b.identity << '\n';
  }
}

std::vector<BoxItem> read_boxes_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != "scene,x1,y1,x2,y2,id") throw std::runtime_error(path + ": unexpected header");
  std::vector<BoxItem> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = internal::split_csv_line(line);
    if (f.size() != 6) throw std::runtime_error(path + ": bad row: " + line);
    out.push_back({internal::parse_int(f[0]),
                   {internal::parse_real(f[1]), internal::parse_real(f[2]),
                    internal::parse_real(f[3]), internal::parse_real(f[4])},
                   internal::parse_int(f[5])});
  }
  return out;
}

}  // namespace reidrefine
