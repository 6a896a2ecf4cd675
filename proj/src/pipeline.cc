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

#include "reidrefine/pipeline.h"

#include <cstdio>
#include <map>
#include <stdexcept>

namespace reidrefine {

std::uint64_t stage_seed(const RunConfig& cfg, Stage stage) {
  return mix_seed(cfg.seed, static_cast<std::uint64_t>(stage));
}

SceneSet synthesize(const RunConfig& cfg) {
  Rng rng(stage_seed(cfg, Stage::kSynth));
  return synth(cfg.synth, rng).set;
}

EmbedNet pretrain_net(const SceneSet& set, const RunConfig& cfg, PretrainReport* report) {
  std::vector<LabeledCrop> crops =
      ground_truth_crops(set, Split::kTrain, cfg.refine.crop_rows, cfg.refine.crop_cols);
  std::map<int, int> count;
  for (const LabeledCrop& c : crops) ++count[c.identity];
  const std::size_t n = crops.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (count[crops[i].identity] == 1) crops.push_back(crops[i]);
  }
  EmbedNetShape shape;
  shape.in_rows = cfg.refine.crop_rows;
  shape.in_cols = cfg.refine.crop_cols;
  shape.num_ids = set.num_ids;
  Rng init_rng(stage_seed(cfg, Stage::kNetInit));
  const EmbedNet init(shape, init_rng);
  PretrainConfig pc = cfg.pretrain;
  pc.seed = stage_seed(cfg, Stage::kPretrain);
  return pretrain(init, crops, pc, report);
}

std::vector<BoxItem> ground_truth_items(const SceneSet& set) {
  std::vector<BoxItem> out;
  for (std::size_t s = 0; s < set.annotations.size(); ++s) {
    for (const Annotation& a : set.annotations[s]) {
      out.push_back({static_cast<int>(s), a.box, a.identity});
    }
  }
  return out;
}

std::vector<BoxItem> perturb_items(const SceneSet& set, const RunConfig& cfg) {
  std::vector<BoxItem> items = ground_truth_items(set);
  std::vector<BBox> gt;
  for (const BoxItem& it : items) gt.push_back(it.box);
  Rng rng(stage_seed(cfg, Stage::kPerturb));
  const std::vector<BBox> boxes = perturb_boxes(gt, cfg.iou_lo, cfg.iou_hi, rng);
  for (std::size_t i = 0; i < items.size(); ++i) items[i].box = boxes[i];
  return items;
}

std::vector<RefineTarget> make_targets(const SceneSet& set, std::span<const BoxItem> boxes) {
  const std::vector<BoxItem> truth = ground_truth_items(set);
  if (boxes.size() != truth.size()) {
    throw std::invalid_argument("box list does not match the scene annotations");
  }
  std::vector<RefineTarget> out;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (boxes[i].scene != truth[i].scene || boxes[i].identity != truth[i].identity) {
      throw std::invalid_argument("box " + std::to_string(i) +
                                  " does not match its annotation (scene/id)");
    }
    out.push_back({truth[i].scene, boxes[i].box, truth[i].identity, truth[i].box});
  }
  return out;
}

std::vector<std::vector<BBox>> boxes_by_scene(const SceneSet& set,
                                              std::span<const BoxItem> boxes) {
  std::vector<std::vector<BBox>> out(set.scenes.size());
  for (const BoxItem& b : boxes) {
    if (b.scene < 0 || static_cast<std::size_t>(b.scene) >= out.size()) {
      throw std::invalid_argument("box scene index out of range");
    }
    out[b.scene].push_back(b.box);
  }
  return out;
}

std::vector<std::size_t> held_out_indices(const SceneSet& set) {
  std::vector<std::size_t> out;
  std::size_t i = 0;
  for (const auto& scene : set.annotations) {
    for (const Annotation& a : scene) {
      if (a.split != Split::kTrain) out.push_back(i);
      ++i;
    }
  }
  return out;
}

double mean_iou(std::span<const BoxItem> boxes, std::span<const BoxItem> truth,
                std::span<const std::size_t> indices) {
  if (boxes.size() != truth.size() || indices.empty()) {
    throw std::invalid_argument("mean_iou: size mismatch");
  }
  double sum = 0.0;
  for (std::size_t i : indices) {
    if (i >= boxes.size()) throw std::out_of_range("mean_iou: index out of range");
    sum += iou(boxes[i].box, truth[i].box);
  }
  return sum / static_cast<double>(indices.size());
}

EvalConfig eval_config(const RunConfig& cfg) {
  EvalConfig ec;
  ec.gallery_size = cfg.gallery_size;
  ec.seed = stage_seed(cfg, Stage::kEval);
  ec.crop_rows = cfg.refine.crop_rows;
  ec.crop_cols = cfg.refine.crop_cols;
  return ec;
}

RetrievalResult evaluate_boxes(const SceneSet& set, std::span<const BoxItem> boxes,
                               const EmbedNet& net, const RunConfig& cfg) {
  return evaluate(set, boxes_by_scene(set, boxes), net, eval_config(cfg));
}

RefineOutcome run_refinement(const SceneSet& set, std::span<const BoxItem> init,
                             const EmbedNet& net, const RunConfig& cfg) {
  const std::vector<RefineTarget> all = make_targets(set, init);
  const std::vector<std::size_t> picked = held_out_indices(set);
  std::vector<RefineTarget> targets;
  for (std::size_t i : picked) targets.push_back(all[i]);
  RefineConfig rc = cfg.refine;
  rc.seed = stage_seed(cfg, Stage::kRefine);
  RefineOutcome out;
  out.table = ProxyTable(set.num_ids, rc.proxy_volume, net.shape().embed_dim);
  out.record = refine_boxes(set, targets, net, out.table, rc);
  out.refined.assign(init.begin(), init.end());
  for (std::size_t k = 0; k < picked.size(); ++k) {
    out.refined[picked[k]].box = out.record.final_boxes[k];
  }
  return out;
}

Experiment run_experiment(const RunConfig& cfg) {
  validate_config(cfg);
  Experiment e;
  e.set = synthesize(cfg);
  e.net = pretrain_net(e.set, cfg, &e.pretrain);
  e.net.freeze();
  e.truth = ground_truth_items(e.set);
  e.init = perturb_items(e.set, cfg);
  e.baseline = evaluate_boxes(e.set, e.init, e.net, cfg);
  e.outcome = run_refinement(e.set, e.init, e.net, cfg);
  e.refined = evaluate_boxes(e.set, e.outcome.refined, e.net, cfg);
  const std::vector<std::size_t> held = held_out_indices(e.set);
  e.init_iou = mean_iou(e.init, e.truth, held);
  e.final_iou = mean_iou(e.outcome.refined, e.truth, held);
  return e;
}

std::vector<AblationRow> run_ablation(const RunConfig& cfg) {
  validate_config(cfg);
  const SceneSet set = synthesize(cfg);
  EmbedNet net = pretrain_net(set, cfg);
  net.freeze();
  const std::vector<BoxItem> truth = ground_truth_items(set);
  const std::vector<BoxItem> init = perturb_items(set, cfg);
  const std::vector<std::size_t> held = held_out_indices(set);

  std::vector<AblationRow> rows;
  const RetrievalResult base = evaluate_boxes(set, init, net, cfg);
  rows.push_back({"baseline", base.map, base.rank(1), mean_iou(init, truth, held)});
  for (LossMode mode : {LossMode::kCls, LossMode::kTri, LossMode::kClsTri}) {
    RunConfig c = cfg;
    c.refine.loss = mode;
    const RefineOutcome o = run_refinement(set, init, net, c);
    const RetrievalResult r = evaluate_boxes(set, o.refined, net, c);
    rows.push_back({loss_mode_name(mode), r.map, r.rank(1), mean_iou(o.refined, truth, held)});
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::string out = "method,map,rank1,mean_iou\n";
  char buf[128];
  for (const AblationRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f\n", r.name.c_str(), r.map, r.rank1,
                  r.mean_iou);
    out += buf;
  }
  return out;
}

}  // namespace reidrefine
