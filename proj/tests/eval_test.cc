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

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "reidrefine/eval.h"
#include "reidrefine/rng.h"
#include "reidrefine/scene_synth.h"

namespace reidrefine {
namespace {

double iou_oracle(const BBox& a, const BBox& b) {
  const double w = std::max(0.0, std::min(a.m2, b.m2) - std::max(a.m1, b.m1));
  const double h = std::max(0.0, std::min(a.n2, b.n2) - std::max(a.n1, b.n1));
  const double inter = w * h;
  return inter / ((a.m2 - a.m1) * (a.n2 - a.n1) + (b.m2 - b.m1) * (b.n2 - b.n1) - inter);
}

struct PrOracle {
  std::vector<int> ranking;
  std::vector<char> tp;
  double ap = 0.0;
  int first_hit = -1;
};

// Rank by selection (highest similarity, lowest index first), match greedily
// in rank order, then integrate precision over recall increments of the full
// precision-recall enumeration.
PrOracle pr_oracle(const QueryInstance& q) {
  PrOracle out;
  const std::size_t n = q.candidates.size();
  std::vector<char> taken(n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    int pick = -1;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      if (pick < 0 || q.candidates[i].similarity > q.candidates[pick].similarity) pick = int(i);
    }
    taken[pick] = 1;
    out.ranking.push_back(pick);
  }
  std::vector<char> used(q.ground_truth.size(), 0);
  for (int idx : out.ranking) {
    const Candidate& c = q.candidates[idx];
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < q.ground_truth.size(); ++g) {
      if (used[g] || q.ground_truth[g].scene != c.scene) continue;
      const double v = iou_oracle(c.box, q.ground_truth[g].box);
      if (v >= 0.5 && v > best_iou) {
        best = int(g);
        best_iou = v;
      }
    }
    if (best >= 0) used[best] = 1;
    out.tp.push_back(best >= 0);
  }
  double prev_recall = 0.0;
  int hits = 0;
  for (std::size_t k = 0; k < n; ++k) {
    hits += out.tp[k];
    const double precision = double(hits) / double(k + 1);
    const double recall = double(hits) / double(q.ground_truth.size());
    out.ap += precision * (recall - prev_recall);
    prev_recall = recall;
    if (out.tp[k] && out.first_hit < 0) out.first_hit = int(k);
  }
  return out;
}

BBox random_box(Rng& rng) {
  const double m1 = rng.uniform(0, 20), n1 = rng.uniform(0, 20);
  return {m1, n1, m1 + rng.uniform(2, 12), n1 + rng.uniform(2, 12)};
}

// Box whose IoU with `b` is either high (a near copy) or zero.
BBox near_or_far(const BBox& b, Rng& rng) {
  if (rng.bernoulli(0.5)) {
    const double j = 0.05 * b.width();
    return {b.m1 + rng.uniform(-j, j), b.n1 + rng.uniform(-j, j), b.m2 + rng.uniform(-j, j),
            b.n2 + rng.uniform(-j, j)};
  }
  return {b.m1 + 100, b.n1, b.m2 + 100, b.n2};
}

QueryInstance random_instance(Rng& rng) {
  QueryInstance q;
  const int scenes = rng.uniform_int(1, 4);
  for (int s = 0; s < scenes; ++s) {
    const int gts = rng.uniform_int(0, 2);
    for (int g = 0; g < gts; ++g) q.ground_truth.push_back({s, random_box(rng)});
  }
  if (q.ground_truth.empty()) q.ground_truth.push_back({0, random_box(rng)});
  const int cands = rng.uniform_int(1, 8);
  for (int c = 0; c < cands; ++c) {
    const GroundTruth& g = q.ground_truth[rng.uniform_int(0, int(q.ground_truth.size()) - 1)];
    // Coarse similarities make ties common.
    q.candidates.push_back({rng.bernoulli(0.8) ? g.scene : rng.uniform_int(0, scenes - 1),
                            near_or_far(g.box, rng), double(rng.uniform_int(0, 4))});
  }
  return q;
}

TEST(IouTest, HandExamples) {
  EXPECT_EQ(iou({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0);
  EXPECT_EQ(iou({0, 0, 10, 10}, {20, 20, 30, 30}), 0.0);
  EXPECT_EQ(iou({0, 0, 10, 10}, {10, 0, 20, 10}), 0.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {5, 0, 15, 10}), 1.0 / 3.0);
}

TEST(IouTest, MatchesOracleAndIsSymmetric) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const BBox a = random_box(rng), b = random_box(rng);
    const double v = iou(a, b);
    ASSERT_NEAR(v, iou_oracle(a, b), 1e-12);
    ASSERT_EQ(v, iou(b, a));
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
}

TEST(EvaluateQueryTest, PerfectRetrieval) {
  QueryInstance q;
  q.ground_truth = {{0, {0, 0, 10, 20}}};
  q.candidates = {{0, {0, 0, 10, 20}, 0.9}, {1, {0, 0, 10, 20}, 0.5}, {2, {0, 0, 10, 20}, 0.1}};
  const QueryResult r = evaluate_query(q);
  EXPECT_EQ(r.ap, 1.0);
  EXPECT_EQ(r.first_hit, 0);
  const RetrievalResult agg = aggregate({r}, 5);
  EXPECT_EQ(agg.rank(1), 1.0);
}

TEST(EvaluateQueryTest, SinglePositiveAtRankTwo) {
  QueryInstance q;
  q.ground_truth = {{1, {0, 0, 10, 20}}};
  q.candidates = {{0, {0, 0, 10, 20}, 0.9}, {1, {0, 0, 10, 20}, 0.5}};
  const QueryResult r = evaluate_query(q);
  EXPECT_EQ(r.ap, 0.5);
  const RetrievalResult agg = aggregate({r}, 5);
  EXPECT_EQ(agg.rank(1), 0.0);
  EXPECT_EQ(agg.rank(2), 1.0);
}

TEST(EvaluateQueryTest, EachGroundTruthMatchedOnce) {
  QueryInstance q;
  q.ground_truth = {{0, {0, 0, 10, 20}}};
  q.candidates = {{0, {0, 0, 10, 20}, 0.9}, {0, {0.5, 0, 10.5, 20}, 0.8}};
  const QueryResult r = evaluate_query(q);
  EXPECT_EQ(r.true_positive, (std::vector<char>{1, 0}));
}

TEST(EvaluateQueryTest, LowIouIsFalsePositive) {
  QueryInstance q;
  q.ground_truth = {{0, {0, 0, 10, 20}}};
  q.candidates = {{0, {5, 0, 15, 20}, 0.9}};
  EXPECT_EQ(evaluate_query(q).ap, 0.0);
}

TEST(EvaluateQueryTest, MissingGroundTruthThrows) {
  QueryInstance q;
  q.candidates = {{0, {0, 0, 10, 20}, 0.9}};
  EXPECT_THROW(evaluate_query(q), std::invalid_argument);
}

TEST(EvaluateQueryTest, MatchesPrOracle) {
  Rng rng(2);
  std::vector<QueryResult> results;
  std::vector<PrOracle> oracles;
  for (int trial = 0; trial < 50; ++trial) {
    const QueryInstance q = random_instance(rng);
    const QueryResult r = evaluate_query(q);
    const PrOracle o = pr_oracle(q);
    ASSERT_EQ(r.ranking, o.ranking) << "trial " << trial;
    ASSERT_EQ(r.true_positive, o.tp);
    ASSERT_EQ(r.first_hit, o.first_hit);
    ASSERT_NEAR(r.ap, o.ap, 1e-12);
    results.push_back(r);
    oracles.push_back(o);
  }
  const RetrievalResult agg = aggregate(results, 8);
  double map = 0;
  for (const PrOracle& o : oracles) map += o.ap;
  EXPECT_NEAR(agg.map, map / 50, 1e-12);
  for (int k = 1; k <= 8; ++k) {
    int within = 0;
    for (const PrOracle& o : oracles) within += o.first_hit >= 0 && o.first_hit < k;
    EXPECT_EQ(agg.rank(k), within / 50.0);
  }
}

TEST(EvaluateQueryTest, MonotoneTransformInvariance) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    QueryInstance q = random_instance(rng);
    const QueryResult before = evaluate_query(q);
    for (Candidate& c : q.candidates) c.similarity = std::exp(3 * c.similarity) - 7;
    const QueryResult after = evaluate_query(q);
    ASSERT_EQ(before.ranking, after.ranking);
    ASSERT_EQ(before.ap, after.ap);
    ASSERT_EQ(before.first_hit, after.first_hit);
  }
}

TEST(EvaluateQueryTest, PromotingTruePositiveNeverLowersAp) {
  Rng rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    QueryInstance q = random_instance(rng);
    for (std::size_t i = 0; i < q.candidates.size(); ++i) q.candidates[i].similarity = -double(i);
    const QueryResult r = evaluate_query(q);
    for (std::size_t k = 1; k < r.ranking.size(); ++k) {
      if (!r.true_positive[k] || r.true_positive[k - 1]) continue;
      QueryInstance swapped = q;
      std::swap(swapped.candidates[r.ranking[k]].similarity,
                swapped.candidates[r.ranking[k - 1]].similarity);
      ASSERT_GE(evaluate_query(swapped).ap, r.ap - 1e-15);
    }
  }
}

TEST(AggregateTest, CmcMonotoneAndMapInRange) {
  Rng rng(5);
  std::vector<QueryResult> results;
  for (int trial = 0; trial < 40; ++trial) results.push_back(evaluate_query(random_instance(rng)));
  const RetrievalResult agg = aggregate(results, 10);
  EXPECT_GE(agg.map, 0.0);
  EXPECT_LE(agg.map, 1.0);
  for (std::size_t k = 1; k < agg.cmc.size(); ++k) EXPECT_GE(agg.cmc[k], agg.cmc[k - 1]);
}

class EvaluateSetTest : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(6);
    SynthConfig cfg;
    cfg.num_scenes = 24;
    set_ = synth(cfg, rng).set;
    Rng net_rng(7);
    net_ = EmbedNet(EmbedNetShape{}, net_rng);
    for (const auto& ann : set_.annotations) {
      truth_.emplace_back();
      for (const Annotation& a : ann) truth_.back().push_back(a.box);
    }
  }
  SceneSet set_;
  EmbedNet net_;
  std::vector<std::vector<BBox>> truth_;
};

TEST_F(EvaluateSetTest, GalleryHoldsEveryPositiveScene) {
  EvalConfig cfg;
  cfg.gallery_size = 3;
  cfg.seed = 9;
  std::vector<QueryInstance> instances;
  const RetrievalResult r = evaluate(set_, truth_, net_, cfg, &instances);
  ASSERT_FALSE(instances.empty());
  EXPECT_EQ(r.gallery_size, 3);
  EXPECT_EQ(r.queries.size(), instances.size());
  for (const QueryInstance& q : instances) {
    std::vector<int> scenes;
    for (const Candidate& c : q.candidates) scenes.push_back(c.scene);
    std::sort(scenes.begin(), scenes.end());
    scenes.erase(std::unique(scenes.begin(), scenes.end()), scenes.end());
    for (const GroundTruth& g : q.ground_truth) {
      EXPECT_TRUE(std::binary_search(scenes.begin(), scenes.end(), g.scene));
    }
    std::vector<int> gt_scenes;
    for (const GroundTruth& g : q.ground_truth) gt_scenes.push_back(g.scene);
    std::sort(gt_scenes.begin(), gt_scenes.end());
    gt_scenes.erase(std::unique(gt_scenes.begin(), gt_scenes.end()), gt_scenes.end());
    EXPECT_EQ(scenes.size(), std::max<std::size_t>(3, gt_scenes.size()));
  }
}

TEST_F(EvaluateSetTest, DeterministicAndPerfectBoxesHitEveryQuery) {
  EvalConfig cfg;
  const RetrievalResult a = evaluate(set_, truth_, net_, cfg);
  const RetrievalResult b = evaluate(set_, truth_, net_, cfg);
  EXPECT_EQ(metrics_json(a), metrics_json(b));
  // Ground-truth boxes as predictions: every query has a match somewhere.
  EXPECT_EQ(a.cmc.back(), 1.0);
}

TEST_F(EvaluateSetTest, MismatchedPredictionsThrow) {
  std::vector<std::vector<BBox>> bad(truth_.begin(), truth_.end() - 1);
  EXPECT_THROW(evaluate(set_, bad, net_, EvalConfig{}), std::invalid_argument);
}

TEST(MetricsJsonTest, Fields) {
  QueryInstance q;
  q.ground_truth = {{1, {0, 0, 10, 20}}};
  q.candidates = {{0, {0, 0, 10, 20}, 0.9}, {1, {0, 0, 10, 20}, 0.5}};
  RetrievalResult r = aggregate({evaluate_query(q)}, 5);
  r.seed = 4;
  r.gallery_size = 2;
  const std::string j = metrics_json(r);
  for (const char* key : {"\"map\"", "\"rank1\"", "\"rank5\"", "\"cmc\"", "\"gallery_size\"",
                          "\"seed\""}) {
    EXPECT_NE(j.find(key), std::string::npos) << key;
  }
}

}  // namespace
}  // namespace reidrefine
