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

#ifndef REIDREFINE_EMBED_NET_H_
#define REIDREFINE_EMBED_NET_H_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "reidrefine/grid.h"
#include "reidrefine/rng.h"
#include "reidrefine/roi_transform.h"

namespace reidrefine {

struct EmbedNetShape {
  int in_rows = kDefaultCropRows;
  int in_cols = kDefaultCropCols;
  int in_channels = 3;
  int conv1_channels = 8;
  int conv2_channels = 16;
  int embed_dim = 32;
  int num_ids = 8;

  friend bool operator==(const EmbedNetShape&, const EmbedNetShape&) = default;
};

struct Tensor {
  std::vector<int> shape;
  std::vector<double> values;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

// conv3x3/s2 -> ReLU -> conv3x3/s2 -> ReLU -> global average pool ->
// linear -> L2 normalize (embedding) -> classifier matrix (logits).
//
// Parameters, in declaration order:
//   conv1.weight [c1, 3, 3, C]   conv1.bias [c1]
//   conv2.weight [c2, 3, 3, c1]  conv2.bias [c2]
//   proj.weight  [d, c2]         proj.bias  [d]
//   classifier   [d, num_ids]
class EmbedNet {
 public:
  enum Param {
    kConv1W, kConv1B, kConv2W, kConv2B, kProjW, kProjB, kClassifier,
    kNumParams
  };

  EmbedNet() = default;
  // He-normal weights, zero conv biases, small random projection bias.
  EmbedNet(const EmbedNetShape& shape, Rng& rng);
  EmbedNet(const EmbedNetShape& shape, std::vector<Tensor> params);

  const EmbedNetShape& shape() const { return shape_; }
  const std::vector<Tensor>& params() const { return params_; }
  std::vector<Tensor>& mutable_params();
  const Tensor& param(Param p) const { return params_[p]; }

  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }
  void unfreeze() { frozen_ = false; }

  std::size_t num_scalars() const;

  friend bool operator==(const EmbedNet&, const EmbedNet&) = default;

 private:
  EmbedNetShape shape_;
  std::vector<Tensor> params_;
  bool frozen_ = false;
};

struct NetCache {
  Grid2D input;
  std::vector<double> act1;  // post-ReLU conv1, HWC
  std::vector<double> act2;  // post-ReLU conv2, HWC
  std::vector<double> pooled;
  std::vector<double> pre_norm;
  double norm = 0.0;
  std::vector<double> embedding;
  int rows1 = 0, cols1 = 0, rows2 = 0, cols2 = 0;
  bool valid = false;
};

struct NetOutput {
  std::vector<double> embedding;  // unit L2 norm
  std::vector<double> logits;
  NetCache cache;
};

NetOutput forward(const EmbedNet& net, const Grid2D& crop);

// Gradient of the loss w.r.t. the input crop given upstream gradients on the
// embedding and logits (either may be empty, meaning zero). Parameters are
// never touched.
Grid2D backward_to_input(const EmbedNet& net, const NetCache& cache,
                         std::span<const double> d_embedding,
                         std::span<const double> d_logits);

// Parameter gradients, same layout as net.params(). Throws std::logic_error
// on a frozen net.
std::vector<Tensor> backward_params(const EmbedNet& net, const NetCache& cache,
                                    std::span<const double> d_embedding,
                                    std::span<const double> d_logits);

struct LabeledCrop {
  Grid2D crop;
  int identity = 0;
};

struct PretrainConfig {
  int steps = 2000;
  int batch_size = 8;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct PretrainReport {
  std::vector<double> loss_trace;  // mean batch loss per step
  double train_accuracy = 0.0;     // over all crops, after training
};

// SGD with momentum on softmax cross-entropy. Needs >= 2 identities with
// >= 2 crops each. The returned net is unfrozen.
EmbedNet pretrain(const EmbedNet& init, std::span<const LabeledCrop> crops,
                  const PretrainConfig& config,
                  PretrainReport* report = nullptr);

// Fraction of crops whose arg-max logit equals the label.
double classification_accuracy(const EmbedNet& net,
                               std::span<const LabeledCrop> crops);

// "EMB1" | int32 record count | per record: int32 rank, int32 dims... |
// float64 payload. Record 0 is the input shape (rows, cols, channels) and
// has no payload; the rest are the parameters in declaration order. All
// integers and floats little-endian.
void save_embed_net(std::ostream& out, const EmbedNet& net);
void save_embed_net(const std::string& path, const EmbedNet& net);
EmbedNet load_embed_net(std::istream& in);
EmbedNet load_embed_net(const std::string& path);

}  // namespace reidrefine

#endif  // REIDREFINE_EMBED_NET_H_
