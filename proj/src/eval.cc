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

#include "reidrefine/eval.h"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include "json.hpp"
#include "reidrefine/proxy_triplet.h"
#include "reidrefine/rng.h"
#include "text_util.h"

namespace reidrefine {

double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.m2, b.m2) - std::max(a.m1, b.m1);
  const double ih = std::min(a.n2, b.n2) - std::max(a.n1, b.n1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

QueryResult evaluate_query(const QueryInstance& query, double match_iou) {
  if (query.ground_truth.empty()) {
    throw std::invalid_argument("evaluate_query: query identity absent from gallery");
  }
  QueryResult r;
  const auto& cand = query.candidates;
  r.ranking.resize(cand.size());
  std::iota(r.ranking.begin(), r.ranking.end(), 0);
  std::stable_sort(r.ranking.begin(), r.ranking.end(), [&](int a, int b) {
    return cand[a].similarity > cand[b].similarity;
  });

  std::vector<char> used(query.ground_truth.size(), 0);
  r.true_positive.assign(cand.size(), 0);
  int hits = 0;
  double precision_sum = 0.0;
  for (std::size_t k = 0; k < r.ranking.size(); ++k) {
    const Candidate& c = cand[r.ranking[k]];
    int best = -1;
    double best_iou = match_iou;
    for (std::size_t g = 0; g < query.ground_truth.size(); ++g) {
      const GroundTruth& gt = query.ground_truth[g];
      if (used[g] || gt.scene != c.scene) continue;
      const double v = iou(c.box, gt.box);
      if (v >= best_iou && (best < 0 || v > best_iou)) {
        best = static_cast<int>(g);
        best_iou = v;
      }
    }
    if (best < 0) continue;
    used[best] = 1;
    r.true_positive[k] = 1;
    ++hits;
    precision_sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    if (r.first_hit < 0) r.first_hit = static_cast<int>(k);
  }
  r.ap = precision_sum / static_cast<double>(query.ground_truth.size());
  return r;
}

RetrievalResult aggregate(std::vector<QueryResult> queries, int max_rank) {
  if (max_rank < 1) throw std::invalid_argument("aggregate: max_rank < 1");
  RetrievalResult out;
  out.cmc.assign(max_rank, 0.0);
  if (queries.empty()) return out;
  double ap_sum = 0.0;
  for (const QueryResult& q : queries) {
    ap_sum += q.ap;
    if (q.first_hit < 0) continue;
    for (int k = q.first_hit; k < max_rank; ++k) out.cmc[k] += 1.0;
  }
  const double n = static_cast<double>(queries.size());
  out.map = ap_sum / n;
  for (double& v : out.cmc) v /= n;
  out.queries = std::move(queries);
  return out;
}

RetrievalResult evaluate(const SceneSet& set,
                         const std::vector<std::vector<BBox>>& predicted,
                         const EmbedNet& net, const EvalConfig& config,
                         std::vector<QueryInstance>* instances) {
  if (predicted.size() != set.scenes.size()) {
    throw std::invalid_argument("evaluate: predicted boxes per scene mismatch");
  }
  std::vector<int> held_out;
  for (std::size_t s = 0; s < set.scenes.size(); ++s) {
    const auto& ann = set.annotations[s];
    if (std::any_of(ann.begin(), ann.end(),
                    [](const Annotation& a) { return a.split != Split::kTrain; })) {
      held_out.push_back(static_cast<int>(s));
    }
  }

  // Candidate embeddings are computed once per held-out box.
  std::vector<std::vector<std::vector<double>>> emb(set.scenes.size());
  for (int s : held_out) {
    for (const BBox& b : predicted[s]) {
      const auto crop = roi_crop(set.scenes[s], b, config.crop_rows, config.crop_cols);
      emb[s].push_back(forward(net, crop.crop).embedding);
    }
  }

  Rng rng(config.seed);
  std::vector<QueryResult> results;
  if (instances) instances->clear();
  for (int qs : held_out) {
    for (const Annotation& qa : set.annotations[qs]) {
      if (qa.split != Split::kQuery) continue;
      const auto qcrop = roi_crop(set.scenes[qs], qa.box, config.crop_rows, config.crop_cols);
      const auto qemb = forward(net, qcrop.crop).embedding;

      std::vector<int> positives, others;
      for (int s : held_out) {
        if (s == qs) continue;
        const auto& ann = set.annotations[s];
        const bool has = std::any_of(ann.begin(), ann.end(), [&](const Annotation& a) {
          return a.identity == qa.identity;
        });
        (has ? positives : others).push_back(s);
      }
      std::vector<int> gallery = positives;
      if (config.gallery_size > 0) {
        Rng qrng = rng.derive(results.size());
        qrng.shuffle(others);
        const int extra = std::max(0, config.gallery_size - static_cast<int>(positives.size()));
        others.resize(std::min<std::size_t>(others.size(), extra));
      }
      gallery.insert(gallery.end(), others.begin(), others.end());
      std::sort(gallery.begin(), gallery.end());

      QueryInstance inst;
      for (int s : gallery) {
        for (std::size_t b = 0; b < predicted[s].size(); ++b) {
          inst.candidates.push_back({s, predicted[s][b], -squared_distance(qemb, emb[s][b])});
        }
        for (const Annotation& a : set.annotations[s]) {
          if (a.identity == qa.identity) inst.ground_truth.push_back({s, a.box});
        }
      }
      results.push_back(evaluate_query(inst));
      if (instances) instances->push_back(std::move(inst));
    }
  }
  RetrievalResult out = aggregate(std::move(results), config.max_rank);
  out.seed = config.seed;
  out.gallery_size = config.gallery_size > 0
                         ? config.gallery_size
                         : std::max(0, static_cast<int>(held_out.size()) - 1);
  return out;
}

std::string metrics_json(const RetrievalResult& r) {
  nlohmann::ordered_json j;
  j["map"] = r.map;
  j["rank1"] = r.rank(1);
  j["rank5"] = r.rank(5);
  j["cmc"] = r.cmc;
  j["gallery_size"] = r.gallery_size;
  j["seed"] = r.seed;
  j["num_queries"] = r.queries.size();
  return j.dump(2) + "\n";
}

void write_metrics_json(const std::string& path, const RetrievalResult& r) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot create " + path);
  out << metrics_json(r);
}

void write_pr_csv(const std::string& path, const QueryInstance& query,
                  const QueryResult& result) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot create " + path);
  out << "rank,candidate,scene,similarity,tp,precision,recall\n";
  int hits = 0;
  const double g = static_cast<double>(query.ground_truth.size());
  for (std::size_t k = 0; k < result.ranking.size(); ++k) {
    const Candidate& c = query.candidates[result.ranking[k]];
    hits += result.true_positive[k];
    out << k + 1 << ',' << result.ranking[k] << ',' << c.scene << ','
        << internal::format_real(c.similarity) << ',' << int(result.true_positive[k]) << ','
        << internal::format_real(hits / double(k + 1)) << ','
        << internal::format_real(hits / g) << '\n';
  }
}

}  // namespace reidrefine
