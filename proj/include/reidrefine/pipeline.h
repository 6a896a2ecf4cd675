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

#ifndef REIDREFINE_PIPELINE_H_
#define REIDREFINE_PIPELINE_H_

#include <string>
#include <vector>

#include "reidrefine/config.h"
#include "reidrefine/embed_net.h"
#include "reidrefine/eval.h"
#include "reidrefine/proxy_triplet.h"
#include "reidrefine/refine.h"
#include "reidrefine/scene_synth.h"

namespace reidrefine {

// Stage seeds, all derived from RunConfig::seed.
enum class Stage : std::uint64_t {
  kSynth = 1, kNetInit, kPretrain, kPerturb, kRefine, kEval
};
std::uint64_t stage_seed(const RunConfig& cfg, Stage stage);

SceneSet synthesize(const RunConfig& cfg);

// Pretrains a fresh net on the train-split ground-truth crops. An identity
// seen only once in training gets its crop duplicated so it still counts as
// a class.
EmbedNet pretrain_net(const SceneSet& set, const RunConfig& cfg,
                      PretrainReport* report = nullptr);

// One entry per annotation, scenes in order, annotations in file order.
std::vector<BoxItem> ground_truth_items(const SceneSet& set);
std::vector<BoxItem> perturb_items(const SceneSet& set, const RunConfig& cfg);

// Pairs each box with the annotation it came from; the lists must follow
// ground_truth_items order.
std::vector<RefineTarget> make_targets(const SceneSet& set, std::span<const BoxItem> boxes);
std::vector<std::vector<BBox>> boxes_by_scene(const SceneSet& set,
                                              std::span<const BoxItem> boxes);

// Positions (in ground_truth_items order) of annotations in held-out scenes.
std::vector<std::size_t> held_out_indices(const SceneSet& set);

// Mean IoU of boxes[i] with truth[i] over the given positions.
double mean_iou(std::span<const BoxItem> boxes, std::span<const BoxItem> truth,
                std::span<const std::size_t> indices);

EvalConfig eval_config(const RunConfig& cfg);
RetrievalResult evaluate_boxes(const SceneSet& set, std::span<const BoxItem> boxes,
                               const EmbedNet& net, const RunConfig& cfg);

struct RefineOutcome {
  RefineRecord record;
  ProxyTable table;
  std::vector<BoxItem> refined;
};

// Refines the held-out boxes of `init` with a fresh proxy table; train-scene
// boxes are returned unchanged. `net` must be frozen.
RefineOutcome run_refinement(const SceneSet& set, std::span<const BoxItem> init,
                             const EmbedNet& net, const RunConfig& cfg);

// synth -> pretrain -> freeze -> perturb -> baseline eval -> refine -> eval.
struct Experiment {
  SceneSet set;
  EmbedNet net;
  PretrainReport pretrain;
  std::vector<BoxItem> truth;
  std::vector<BoxItem> init;
  RetrievalResult baseline;
  RefineOutcome outcome;
  RetrievalResult refined;
  double init_iou = 0.0;   // held-out boxes
  double final_iou = 0.0;
};
Experiment run_experiment(const RunConfig& cfg);

struct AblationRow {
  std::string name;
  double map = 0.0;
  double rank1 = 0.0;
  double mean_iou = 0.0;
};

// baseline, cls, tri, cls+tri on one shared scene set, net and perturbation.
std::vector<AblationRow> run_ablation(const RunConfig& cfg);
std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace reidrefine

#endif  // REIDREFINE_PIPELINE_H_
