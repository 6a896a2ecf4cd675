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

#ifndef REIDREFINE_EVAL_H_
#define REIDREFINE_EVAL_H_

#include <cstdint>
#include <string>
#include <vector>

#include "reidrefine/embed_net.h"
#include "reidrefine/roi_transform.h"
#include "reidrefine/scene_synth.h"

namespace reidrefine {

inline constexpr double kMatchIou = 0.5;

double iou(const BBox& a, const BBox& b);

struct Candidate {
  int scene = 0;
  BBox box;
  double similarity = 0.0;
};

struct GroundTruth {
  int scene = 0;
  BBox box;
};

// One query against its gallery: candidates in gallery order and the
// query identity's ground-truth boxes inside that gallery.
struct QueryInstance {
  std::vector<Candidate> candidates;
  std::vector<GroundTruth> ground_truth;
};

struct QueryResult {
  std::vector<int> ranking;  // candidate indices, best first
  std::vector<char> true_positive;  // per rank
  double ap = 0.0;
  int first_hit = -1;  // 0-based rank of the first true positive
};

// Ranks by similarity (ties by gallery index), matches each candidate to the
// unmatched same-scene ground truth of highest IoU when that IoU >= 0.5,
// and averages precision over true-positive ranks with recall normalized by
// the ground-truth count. Throws std::invalid_argument with no ground truth.
QueryResult evaluate_query(const QueryInstance& query,
                           double match_iou = kMatchIou);

struct RetrievalResult {
  std::vector<QueryResult> queries;
  double map = 0.0;
  std::vector<double> cmc;  // cmc[k] = fraction with a hit within top k+1
  int gallery_size = 0;
  std::uint64_t seed = 0;

  double rank(int k) const {
    return cmc.empty() ? 0.0 : cmc[std::min<std::size_t>(k, cmc.size()) - 1];
  }
};

RetrievalResult aggregate(std::vector<QueryResult> queries, int max_rank);

struct EvalConfig {
  // Gallery scenes per query, 0 = every held-out scene but the query's own.
  int gallery_size = 0;
  int max_rank = 20;
  std::uint64_t seed = 0;
  int crop_rows = kDefaultCropRows;
  int crop_cols = kDefaultCropCols;
};

// Person-search retrieval: every query-tagged annotation is cropped from its
// scene with the ground-truth box, and candidates are the predicted boxes in
// the other held-out scenes. `predicted[s]` lists the boxes for scene s.
// The assembled query instances are returned through `instances` when set.
RetrievalResult evaluate(const SceneSet& set,
                         const std::vector<std::vector<BBox>>& predicted,
                         const EmbedNet& net, const EvalConfig& config,
                         std::vector<QueryInstance>* instances = nullptr);

// {"map","rank1","rank5","cmc","gallery_size","seed"}.
std::string metrics_json(const RetrievalResult& r);
void write_metrics_json(const std::string& path, const RetrievalResult& r);

// rank,candidate,scene,similarity,tp,precision,recall per ranked candidate.
void write_pr_csv(const std::string& path, const QueryInstance& query,
                  const QueryResult& result);

}  // namespace reidrefine

#endif  // REIDREFINE_EVAL_H_
