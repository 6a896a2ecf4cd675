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
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "reidrefine/embed_net.h"
#include "reidrefine/gradcheck.h"
#include "reidrefine/proxy_triplet.h"
#include "reidrefine/rng.h"
#include "reidrefine/scene_synth.h"

namespace reidrefine {
namespace {

EmbedNetShape small_shape() {
  EmbedNetShape s;
  s.in_rows = 17;
  s.in_cols = 9;
  s.num_ids = 5;
  return s;
}

Grid2D random_crop(const EmbedNetShape& s, Rng& rng) {
  Grid2D g(s.in_rows, s.in_cols, s.in_channels);
  for (double& v : g.data()) v = rng.uniform();
  return g;
}

std::vector<double> random_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1, 1);
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Eight identities, ten ground-truth crops each, from a default scene set.
std::vector<LabeledCrop> eight_by_ten() {
  Rng rng(2024);
  const SynthResult r = synth(SynthConfig{}, rng);
  std::vector<LabeledCrop> crops;
  std::map<int, int> taken;
  for (Split split : {Split::kTrain, Split::kQuery, Split::kGallery}) {
    for (LabeledCrop& c : ground_truth_crops(r.set, split)) {
      if (taken[c.identity] < 10) {
        ++taken[c.identity];
        crops.push_back(std::move(c));
      }
    }
  }
  return crops;
}

TEST(EmbedNetTest, ForwardShapesAndUnitNorm) {
  Rng rng(1);
  const EmbedNet net(small_shape(), rng);
  for (int trial = 0; trial < 20; ++trial) {
    const NetOutput out = forward(net, random_crop(net.shape(), rng));
    ASSERT_EQ(out.embedding.size(), 32u);
    ASSERT_EQ(out.logits.size(), 5u);
    EXPECT_NEAR(std::sqrt(dot(out.embedding, out.embedding)), 1.0, 1e-9);
  }
}

TEST(EmbedNetTest, ZeroImageIsDeterministic) {
  Rng rng(2);
  const EmbedNet net(small_shape(), rng);
  const Grid2D zero(17, 9, 3);
  const NetOutput a = forward(net, zero), b = forward(net, zero);
  EXPECT_EQ(a.embedding, b.embedding);
  EXPECT_EQ(a.logits, b.logits);
  EXPECT_NEAR(std::sqrt(dot(a.embedding, a.embedding)), 1.0, 1e-9);
}

TEST(EmbedNetTest, WrongCropShapeThrows) {
  Rng rng(3);
  const EmbedNet net(small_shape(), rng);
  EXPECT_THROW(forward(net, Grid2D(16, 9, 3)), std::invalid_argument);
}

TEST(EmbedNetTest, ZeroUpstreamGivesZeroInputGradient) {
  Rng rng(4);
  const EmbedNet net(small_shape(), rng);
  const NetOutput out = forward(net, random_crop(net.shape(), rng));
  const Grid2D g = backward_to_input(net, out.cache, std::vector<double>(32, 0.0),
                                     std::vector<double>(5, 0.0));
  for (double v : g.data()) EXPECT_EQ(v, 0.0);
  const Grid2D h = backward_to_input(net, out.cache, {}, {});
  for (double v : h.data()) EXPECT_EQ(v, 0.0);
}

TEST(EmbedNetTest, MissingCacheThrows) {
  Rng rng(5);
  const EmbedNet net(small_shape(), rng);
  EXPECT_THROW(backward_to_input(net, NetCache{}, {}, {}), std::invalid_argument);
}

// L = cls(logits, y) + <r, embedding> against central differences at 20
// random input pixels.
TEST(EmbedNetTest, InputGradientMatchesFiniteDifferences) {
  for (int seed = 0; seed < 5; ++seed) {
    Rng rng(100 + seed);
    const EmbedNet net(small_shape(), rng);
    const Grid2D crop = random_crop(net.shape(), rng);
    const std::vector<double> r = random_vector(32, rng);
    const int y = rng.uniform_int(0, 4);
    auto loss = [&](std::span<const double> p) {
      const Grid2D c(17, 9, 3, std::vector<double>(p.begin(), p.end()));
      const NetOutput o = forward(net, c);
      return classification_loss(o.logits, y).loss + dot(r, o.embedding);
    };
    const NetOutput out = forward(net, crop);
    const ClassLoss cl = classification_loss(out.logits, y);
    const Grid2D g = backward_to_input(net, out.cache, r, cl.d_logits);
    std::vector<std::size_t> coords;
    for (int k = 0; k < 20; ++k) {
      coords.push_back(static_cast<std::size_t>(rng.uniform_int(0, int(crop.size()) - 1)));
    }
    const auto fd = central_diff(loss, crop.data(), 1e-5, coords);
    std::vector<double> analytic;
    for (std::size_t c : coords) analytic.push_back(g.data()[c]);
    EXPECT_LT(compare_gradients(analytic, fd).max_rel_error, 1e-3) << "seed " << seed;
  }
}

TEST(EmbedNetTest, ParameterGradientMatchesFiniteDifferences) {
  for (int seed = 0; seed < 5; ++seed) {
    Rng rng(200 + seed);
    EmbedNet net(small_shape(), rng);
    const Grid2D crop = random_crop(net.shape(), rng);
    const std::vector<double> r = random_vector(32, rng);
    const int y = rng.uniform_int(0, 4);
    const NetOutput out = forward(net, crop);
    const ClassLoss cl = classification_loss(out.logits, y);
    const std::vector<Tensor> grads = backward_params(net, out.cache, r, cl.d_logits);

    std::vector<double> analytic, numeric;
    for (int k = 0; k < 10; ++k) {
      const int p = rng.uniform_int(0, EmbedNet::kNumParams - 1);
      const int i = rng.uniform_int(0, int(net.params()[p].values.size()) - 1);
      analytic.push_back(grads[p].values[i]);
      const double saved = net.params()[p].values[i];
      auto at = [&](double v) {
        net.mutable_params()[p].values[i] = v;
        const NetOutput o = forward(net, crop);
        return classification_loss(o.logits, y).loss + dot(r, o.embedding);
      };
      const double h = 1e-5;
      numeric.push_back((at(saved + h) - at(saved - h)) / (2 * h));
      net.mutable_params()[p].values[i] = saved;
    }
    EXPECT_LT(compare_gradients(analytic, numeric).max_rel_error, 1e-3) << "seed " << seed;
  }
}

TEST(EmbedNetTest, FrozenNetIsUntouched) {
  Rng rng(6);
  EmbedNet net(small_shape(), rng);
  net.freeze();
  const EmbedNet before = net;
  for (int k = 0; k < 10; ++k) {
    const NetOutput out = forward(net, random_crop(net.shape(), rng));
    backward_to_input(net, out.cache, random_vector(32, rng), random_vector(5, rng));
    EXPECT_THROW(backward_params(net, out.cache, random_vector(32, rng), {}), std::logic_error);
  }
  EXPECT_THROW(net.mutable_params(), std::logic_error);
  EXPECT_EQ(net, before);
}

TEST(EmbedNetTest, CheckpointRoundTrip) {
  Rng rng(7);
  const EmbedNet net(small_shape(), rng);
  std::stringstream ss;
  save_embed_net(ss, net);
  EXPECT_EQ(ss.str().substr(0, 4), "EMB1");
  const EmbedNet back = load_embed_net(ss);
  EXPECT_EQ(back.shape(), net.shape());
  EXPECT_EQ(back.params(), net.params());
}

TEST(EmbedNetTest, CheckpointRejectsBadMagic) {
  std::istringstream in("EMB2xxxxxxxxxxxx");
  EXPECT_THROW(load_embed_net(in), std::runtime_error);
}

TEST(PretrainTest, OneIdentityThrows) {
  Rng rng(8);
  const EmbedNet net(small_shape(), rng);
  std::vector<LabeledCrop> crops;
  for (int k = 0; k < 4; ++k) crops.push_back({random_crop(net.shape(), rng), 0});
  EXPECT_THROW(pretrain(net, crops, PretrainConfig{}), std::invalid_argument);
}

TEST(PretrainTest, SingleCropIdentityThrows) {
  Rng rng(9);
  const EmbedNet net(small_shape(), rng);
  std::vector<LabeledCrop> crops = {{random_crop(net.shape(), rng), 0},
                                    {random_crop(net.shape(), rng), 0},
                                    {random_crop(net.shape(), rng), 1}};
  EXPECT_THROW(pretrain(net, crops, PretrainConfig{}), std::invalid_argument);
}

TEST(PretrainTest, EightIdentitiesReachNinetyFivePercent) {
  const std::vector<LabeledCrop> crops = eight_by_ten();
  ASSERT_EQ(crops.size(), 80u);
  Rng rng(10);
  EmbedNetShape shape;
  const EmbedNet init(shape, rng);
  PretrainConfig cfg;
  cfg.steps = 2000;
  PretrainReport report;
  const EmbedNet net = pretrain(init, crops, cfg, &report);
  EXPECT_GE(report.train_accuracy, 0.95);
  EXPECT_EQ(classification_accuracy(net, crops), report.train_accuracy);
  EXPECT_FALSE(net.frozen());
}

TEST(PretrainTest, LossDropsByStepTwoHundred) {
  const std::vector<LabeledCrop> crops = eight_by_ten();
  double first = 0, later = 0;
  for (int seed = 0; seed < 5; ++seed) {
    Rng rng(300 + seed);
    const EmbedNet init(EmbedNetShape{}, rng);
    PretrainConfig cfg;
    cfg.steps = 201;
    cfg.seed = seed;
    PretrainReport report;
    pretrain(init, crops, cfg, &report);
    ASSERT_EQ(report.loss_trace.size(), 201u);
    first += report.loss_trace[0];
    later += report.loss_trace[200];
  }
  EXPECT_LT(later, first);
}

TEST(PretrainTest, Deterministic) {
  const std::vector<LabeledCrop> crops = eight_by_ten();
  Rng a(11), b(11);
  PretrainConfig cfg;
  cfg.steps = 50;
  EXPECT_EQ(pretrain(EmbedNet(EmbedNetShape{}, a), crops, cfg),
            pretrain(EmbedNet(EmbedNetShape{}, b), crops, cfg));
}

}  // namespace
}  // namespace reidrefine
