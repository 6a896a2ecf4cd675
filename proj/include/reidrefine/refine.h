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

#ifndef REIDREFINE_REFINE_H_
#define REIDREFINE_REFINE_H_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "reidrefine/embed_net.h"
#include "reidrefine/proxy_triplet.h"
#include "reidrefine/rng.h"
#include "reidrefine/roi_transform.h"
#include "reidrefine/scene_synth.h"

namespace reidrefine {

enum class LossMode { kCls, kTri, kClsTri };
const char* loss_mode_name(LossMode m);
LossMode parse_loss_mode(const std::string& s);

// What the optimizer moves: the box coordinates themselves, or the weights
// of a linear head predicting offsets from each initial box.
enum class BoxMode { kCoordinates, kRefinerHead };
const char* box_mode_name(BoxMode m);
BoxMode parse_box_mode(const std::string& s);

struct RefineConfig {
  int iterations = 2000;
  int batch_size = 4;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  // Warm-up: linear 0 -> peak over [0, warmup_iters), peak until decay_iter,
  // final_lr afterwards.
  double peak_lr = 5e-5;
  int warmup_iters = 500;
  int decay_iter = 10000;
  double final_lr = 5e-6;
  // Step multiplier from the schedule to box space (initial box sizes for
  // centres, log-pixels for sizes).
  double lr_scale = 3.0;
  double margin = kDefaultMargin;
  int proxy_volume = kDefaultProxyVolume;
  LossMode loss = LossMode::kClsTri;
  BoxMode box_mode = BoxMode::kCoordinates;
  NegativeSet negatives = NegativeSet::kAllOtherRows;
  std::uint64_t seed = 0;
  int crop_rows = kDefaultCropRows;
  int crop_cols = kDefaultCropCols;
};

// Throws std::invalid_argument when the schedule or sizes are inconsistent.
void check_refine_config(const RefineConfig& cfg);

double lr_at(int iteration, const RefineConfig& cfg);

// Center / log-size form of a box; keeps width and height positive under
// unconstrained updates.
struct BoxParam {
  double cx = 0.0, cy = 0.0, log_w = 0.0, log_h = 0.0;

  static BoxParam from_box(const BBox& b);
  BBox to_box() const;
  // dL/d(cx, cy, log_w, log_h) from dL/d(m1, n1, m2, n2).
  std::array<double, 4> chain(const std::array<double, 4>& d_box) const;

  friend bool operator==(const BoxParam&, const BoxParam&) = default;
};

// One box in a refinement batch.
struct BoxItem {
  int scene = 0;
  BBox box;
  int identity = 0;
};

struct BatchObjective {
  double loss = 0.0;
  double cls_loss = 0.0;
  double tri_loss = 0.0;
  std::vector<std::array<double, 4>> d_box;  // dL/d(m1, n1, m2, n2)
  std::vector<TripletAnchor> anchors;        // embeddings for the table update
  bool triplet_available = true;             // false on NoNegativeError
  int skipped_anchors = 0;
};

// Re-ID loss of a batch of boxes: crop each box, run the frozen net, add the
// classification and/or proxy-triplet loss, and backpropagate to the box
// corners. The table is read only.
BatchObjective evaluate_batch(const SceneSet& set, std::span<const BoxItem> items,
                              const EmbedNet& net, const ProxyTable& table,
                              const RefineConfig& cfg);

struct RefineTarget {
  int scene = 0;
  BBox init;
  int identity = 0;
  BBox ground_truth;
};

struct RefineRecord {
  std::vector<double> loss;      // mean loss per box in the batch
  std::vector<double> mean_iou;  // over all boxes after the update
  std::vector<double> lr;
  std::vector<std::vector<double>> box_iou;  // [iteration][box]
  std::vector<BBox> final_boxes;
  int skipped_anchors = 0;
  int iterations_without_triplet = 0;
};

// Frozen-net localization refinement. `table` is updated in place (FIFO)
// each iteration. Throws std::invalid_argument on an unfrozen net or a bad
// target, std::runtime_error on a non-finite loss.
RefineRecord refine_boxes(const SceneSet& set, std::span<const RefineTarget> targets,
                          const EmbedNet& net, ProxyTable& table,
                          const RefineConfig& cfg);

// Detector surrogate: jitter each box until its IoU with the original lies in
// [iou_lo, iou_hi]. Throws std::runtime_error after 10^4 failed attempts.
std::vector<BBox> perturb_boxes(std::span<const BBox> ground_truth, double iou_lo,
                                double iou_hi, Rng& rng);

// Trace CSV (iter,loss,mean_iou,lr) and boxes CSV (scene,x1,y1,x2,y2,id).
void write_trace_csv(const std::string& path, const RefineRecord& record);
void write_boxes_csv(const std::string& path, std::span<const BoxItem> boxes);
std::vector<BoxItem> read_boxes_csv(const std::string& path);

}  // namespace reidrefine

#endif  // REIDREFINE_REFINE_H_
