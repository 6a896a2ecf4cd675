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

#include "reidrefine/embed_net.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "binary_io.h"
#include "reidrefine/proxy_triplet.h"

namespace reidrefine {
namespace {

int conv_out(int n) { return (n - 1) / 2 + 1; }  // k=3, stride 2, pad 1

std::size_t product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::vector<std::vector<int>> param_shapes(const EmbedNetShape& s) {
  return {{s.conv1_channels, 3, 3, s.in_channels},
          {s.conv1_channels},
          {s.conv2_channels, 3, 3, s.conv1_channels},
          {s.conv2_channels},
          {s.embed_dim, s.conv2_channels},
          {s.embed_dim},
          {s.embed_dim, s.num_ids}};
}

void check_shape(const EmbedNetShape& s) {
  if (s.in_rows < 1 || s.in_cols < 1 || s.in_channels < 1 ||
      s.conv1_channels < 1 || s.conv2_channels < 1 || s.embed_dim < 1 ||
      s.num_ids < 1) {
    throw std::invalid_argument("EmbedNetShape: non-positive dimension");
  }
}

// 3x3 stride-2 convolution with zero padding 1 followed by ReLU. HWC in/out,
// weights [out][ky][kx][in].
void conv_relu_forward(std::span<const double> in, int rows, int cols,
                       int cin, std::span<const double> w,
                       std::span<const double> b, int cout,
                       std::vector<double>& out) {
  const int orows = conv_out(rows), ocols = conv_out(cols);
  out.assign(static_cast<std::size_t>(orows) * ocols * cout, 0.0);
  for (int oy = 0; oy < orows; ++oy) {
    for (int ox = 0; ox < ocols; ++ox) {
      double* o = &out[(static_cast<std::size_t>(oy) * ocols + ox) * cout];
      for (int oc = 0; oc < cout; ++oc) o[oc] = b[oc];
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = 2 * oy + ky - 1;
        if (iy < 0 || iy >= rows) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = 2 * ox + kx - 1;
          if (ix < 0 || ix >= cols) continue;
          const double* px = &in[(static_cast<std::size_t>(iy) * cols + ix) * cin];
          for (int oc = 0; oc < cout; ++oc) {
            const double* wk = &w[((static_cast<std::size_t>(oc) * 3 + ky) * 3 + kx) * cin];
            double acc = 0.0;
            for (int ic = 0; ic < cin; ++ic) acc += wk[ic] * px[ic];
            o[oc] += acc;
          }
        }
      }
      for (int oc = 0; oc < cout; ++oc) o[oc] = std::max(o[oc], 0.0);
    }
  }
}

// d_out is the gradient w.r.t. the conv output *before* ReLU. Any of d_in,
// d_w, d_b may be null.
void conv_backward(std::span<const double> in, int rows, int cols, int cin,
                   std::span<const double> w, int cout,
                   std::span<const double> d_out, double* d_in, double* d_w,
                   double* d_b) {
  const int orows = conv_out(rows), ocols = conv_out(cols);
  for (int oy = 0; oy < orows; ++oy) {
    for (int ox = 0; ox < ocols; ++ox) {
      const double* g = &d_out[(static_cast<std::size_t>(oy) * ocols + ox) * cout];
      if (d_b) {
        for (int oc = 0; oc < cout; ++oc) d_b[oc] += g[oc];
      }
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = 2 * oy + ky - 1;
        if (iy < 0 || iy >= rows) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = 2 * ox + kx - 1;
          if (ix < 0 || ix >= cols) continue;
          const std::size_t pix = (static_cast<std::size_t>(iy) * cols + ix) * cin;
          for (int oc = 0; oc < cout; ++oc) {
            const double go = g[oc];
            if (go == 0.0) continue;
            const std::size_t wo = ((static_cast<std::size_t>(oc) * 3 + ky) * 3 + kx) * cin;
            if (d_in) {
              for (int ic = 0; ic < cin; ++ic) d_in[pix + ic] += w[wo + ic] * go;
            }
            if (d_w) {
              for (int ic = 0; ic < cin; ++ic) d_w[wo + ic] += in[pix + ic] * go;
            }
          }
        }
      }
    }
  }
}

struct Upstream {
  std::vector<double> d_act2;  // pre-ReLU gradient at conv2 output
  std::vector<double> d_pre_norm;
  std::vector<double> d_pooled;
};

// Shared head of both backward passes: classifier, normalization, projection
// and pooling. Fills the parameter gradients of those layers when `grads` is
// non-null.
Upstream head_backward(const EmbedNet& net, const NetCache& cache,
                       std::span<const double> d_embedding,
                       std::span<const double> d_logits,
                       std::vector<Tensor>* grads) {
  if (!cache.valid) throw std::invalid_argument("backward: missing cache");
  const EmbedNetShape& s = net.shape();
  const int d = s.embed_dim;
  const int c2 = s.conv2_channels;
  if (!d_embedding.empty() && d_embedding.size() != static_cast<std::size_t>(d)) {
    throw std::invalid_argument("backward: embedding gradient length");
  }
  if (!d_logits.empty() && d_logits.size() != static_cast<std::size_t>(s.num_ids)) {
    throw std::invalid_argument("backward: logit gradient length");
  }
  const auto& e = cache.embedding;
  std::vector<double> de(d, 0.0);
  if (!d_embedding.empty()) std::copy(d_embedding.begin(), d_embedding.end(), de.begin());
  if (!d_logits.empty()) {
    const auto& wc = net.param(EmbedNet::kClassifier).values;
    for (int j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int k = 0; k < s.num_ids; ++k) {
        acc += wc[static_cast<std::size_t>(j) * s.num_ids + k] * d_logits[k];
      }
      de[j] += acc;
    }
    if (grads) {
      auto& gwc = (*grads)[EmbedNet::kClassifier].values;
      for (int j = 0; j < d; ++j) {
        for (int k = 0; k < s.num_ids; ++k) {
          gwc[static_cast<std::size_t>(j) * s.num_ids + k] += e[j] * d_logits[k];
        }
      }
    }
  }

  Upstream up;
  up.d_pre_norm.assign(d, 0.0);
  if (cache.norm > 0.0) {
    double dot = 0.0;
    for (int j = 0; j < d; ++j) dot += e[j] * de[j];
    for (int j = 0; j < d; ++j) up.d_pre_norm[j] = (de[j] - e[j] * dot) / cache.norm;
  }

  const auto& pw = net.param(EmbedNet::kProjW).values;
  up.d_pooled.assign(c2, 0.0);
  for (int j = 0; j < d; ++j) {
    const double g = up.d_pre_norm[j];
    for (int c = 0; c < c2; ++c) {
      up.d_pooled[c] += pw[static_cast<std::size_t>(j) * c2 + c] * g;
    }
  }
  if (grads) {
    auto& gpw = (*grads)[EmbedNet::kProjW].values;
    auto& gpb = (*grads)[EmbedNet::kProjB].values;
    for (int j = 0; j < d; ++j) {
      gpb[j] += up.d_pre_norm[j];
      for (int c = 0; c < c2; ++c) {
        gpw[static_cast<std::size_t>(j) * c2 + c] += up.d_pre_norm[j] * cache.pooled[c];
      }
    }
  }

  const std::size_t cells = static_cast<std::size_t>(cache.rows2) * cache.cols2;
  up.d_act2.assign(cache.act2.size(), 0.0);
  for (std::size_t p = 0; p < cells; ++p) {
    for (int c = 0; c < c2; ++c) {
      const std::size_t i = p * c2 + c;
      if (cache.act2[i] > 0.0) up.d_act2[i] = up.d_pooled[c] / static_cast<double>(cells);
    }
  }
  return up;
}

}  // namespace

EmbedNet::EmbedNet(const EmbedNetShape& shape, Rng& rng) : shape_(shape) {
  check_shape(shape);
  const auto shapes = param_shapes(shape);
  params_.resize(kNumParams);
  for (int p = 0; p < kNumParams; ++p) {
    params_[p].shape = shapes[p];
    params_[p].values.assign(product(shapes[p]), 0.0);
  }
  auto he = [&rng](Tensor& t, int fan_in) {
    const double sd = std::sqrt(2.0 / fan_in);
    for (double& v : t.values) v = sd * rng.normal();
  };
  he(params_[kConv1W], 9 * shape.in_channels);
  he(params_[kConv2W], 9 * shape.conv1_channels);
  he(params_[kProjW], shape.conv2_channels);
  for (double& v : params_[kProjB].values) v = 0.01 * rng.normal();
  for (double& v : params_[kClassifier].values) v = rng.normal();
}

EmbedNet::EmbedNet(const EmbedNetShape& shape, std::vector<Tensor> params)
    : shape_(shape), params_(std::move(params)) {
  check_shape(shape);
  const auto shapes = param_shapes(shape);
  if (params_.size() != static_cast<std::size_t>(kNumParams)) {
    throw std::invalid_argument("EmbedNet: wrong parameter count");
  }
  for (int p = 0; p < kNumParams; ++p) {
    if (params_[p].shape != shapes[p] ||
        params_[p].values.size() != product(shapes[p])) {
      throw std::invalid_argument("EmbedNet: parameter shape mismatch");
    }
    for (double v : params_[p].values) {
      if (!std::isfinite(v)) throw std::invalid_argument("EmbedNet: non-finite parameter");
    }
  }
}

std::vector<Tensor>& EmbedNet::mutable_params() {
  if (frozen_) throw std::logic_error("EmbedNet is frozen");
  return params_;
}

std::size_t EmbedNet::num_scalars() const {
  std::size_t n = 0;
  for (const Tensor& t : params_) n += t.values.size();
  return n;
}

NetOutput forward(const EmbedNet& net, const Grid2D& crop) {
  const EmbedNetShape& s = net.shape();
  if (crop.rows() != s.in_rows || crop.cols() != s.in_cols ||
      crop.channels() != s.in_channels) {
    throw std::invalid_argument("forward: crop shape does not match network");
  }
  NetOutput out;
  NetCache& c = out.cache;
  c.input = crop;
  c.rows1 = conv_out(s.in_rows);
  c.cols1 = conv_out(s.in_cols);
  c.rows2 = conv_out(c.rows1);
  c.cols2 = conv_out(c.cols1);
  conv_relu_forward(crop.data(), s.in_rows, s.in_cols, s.in_channels,
                    net.param(EmbedNet::kConv1W).values,
                    net.param(EmbedNet::kConv1B).values, s.conv1_channels,
                    c.act1);
  conv_relu_forward(c.act1, c.rows1, c.cols1, s.conv1_channels,
                    net.param(EmbedNet::kConv2W).values,
                    net.param(EmbedNet::kConv2B).values, s.conv2_channels,
                    c.act2);

  const int c2 = s.conv2_channels;
  const std::size_t cells = static_cast<std::size_t>(c.rows2) * c.cols2;
  c.pooled.assign(c2, 0.0);
  for (std::size_t p = 0; p < cells; ++p) {
    for (int k = 0; k < c2; ++k) c.pooled[k] += c.act2[p * c2 + k];
  }
  for (double& v : c.pooled) v /= static_cast<double>(cells);

  const int d = s.embed_dim;
  const auto& pw = net.param(EmbedNet::kProjW).values;
  const auto& pb = net.param(EmbedNet::kProjB).values;
  c.pre_norm.assign(d, 0.0);
  for (int j = 0; j < d; ++j) {
    double acc = pb[j];
    for (int k = 0; k < c2; ++k) acc += pw[static_cast<std::size_t>(j) * c2 + k] * c.pooled[k];
    c.pre_norm[j] = acc;
  }
  double sq = 0.0;
  for (double v : c.pre_norm) sq += v * v;
  c.norm = std::sqrt(sq);
  c.embedding.assign(d, 0.0);
  if (c.norm > 0.0) {
    for (int j = 0; j < d; ++j) c.embedding[j] = c.pre_norm[j] / c.norm;
  } else {
    c.embedding[0] = 1.0;  // measure-zero fallback; gradient is zero here
  }

  const auto& wc = net.param(EmbedNet::kClassifier).values;
  out.logits.assign(s.num_ids, 0.0);
  for (int j = 0; j < d; ++j) {
    for (int k = 0; k < s.num_ids; ++k) {
      out.logits[k] += wc[static_cast<std::size_t>(j) * s.num_ids + k] * c.embedding[j];
    }
  }
  out.embedding = c.embedding;
  c.valid = true;
  return out;
}

Grid2D backward_to_input(const EmbedNet& net, const NetCache& cache,
                         std::span<const double> d_embedding,
                         std::span<const double> d_logits) {
  const EmbedNetShape& s = net.shape();
  Upstream up = head_backward(net, cache, d_embedding, d_logits, nullptr);
  std::vector<double> d_act1(cache.act1.size(), 0.0);
  conv_backward(cache.act1, cache.rows1, cache.cols1, s.conv1_channels,
                net.param(EmbedNet::kConv2W).values, s.conv2_channels,
                up.d_act2, d_act1.data(), nullptr, nullptr);
  for (std::size_t i = 0; i < d_act1.size(); ++i) {
    if (cache.act1[i] <= 0.0) d_act1[i] = 0.0;
  }
  Grid2D d_input(s.in_rows, s.in_cols, s.in_channels);
  conv_backward(cache.input.data(), s.in_rows, s.in_cols, s.in_channels,
                net.param(EmbedNet::kConv1W).values, s.conv1_channels, d_act1,
                d_input.data().data(), nullptr, nullptr);
  return d_input;
}

std::vector<Tensor> backward_params(const EmbedNet& net, const NetCache& cache,
                                    std::span<const double> d_embedding,
                                    std::span<const double> d_logits) {
  if (net.frozen()) throw std::logic_error("backward_params: net is frozen");
  const EmbedNetShape& s = net.shape();
  std::vector<Tensor> grads = net.params();
  for (Tensor& t : grads) std::fill(t.values.begin(), t.values.end(), 0.0);

  Upstream up = head_backward(net, cache, d_embedding, d_logits, &grads);
  std::vector<double> d_act1(cache.act1.size(), 0.0);
  conv_backward(cache.act1, cache.rows1, cache.cols1, s.conv1_channels,
                net.param(EmbedNet::kConv2W).values, s.conv2_channels,
                up.d_act2, d_act1.data(),
                grads[EmbedNet::kConv2W].values.data(),
                grads[EmbedNet::kConv2B].values.data());
  for (std::size_t i = 0; i < d_act1.size(); ++i) {
    if (cache.act1[i] <= 0.0) d_act1[i] = 0.0;
  }
  conv_backward(cache.input.data(), s.in_rows, s.in_cols, s.in_channels,
                net.param(EmbedNet::kConv1W).values, s.conv1_channels, d_act1,
                nullptr, grads[EmbedNet::kConv1W].values.data(),
                grads[EmbedNet::kConv1B].values.data());
  return grads;
}

double classification_accuracy(const EmbedNet& net,
                               std::span<const LabeledCrop> crops) {
  if (crops.empty()) return 0.0;
  std::size_t correct = 0;
  for (const LabeledCrop& lc : crops) {
    const NetOutput o = forward(net, lc.crop);
    const auto best = std::max_element(o.logits.begin(), o.logits.end());
    if (best - o.logits.begin() == lc.identity) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(crops.size());
}

EmbedNet pretrain(const EmbedNet& init, std::span<const LabeledCrop> crops,
                  const PretrainConfig& config, PretrainReport* report) {
  const int num_ids = init.shape().num_ids;
  std::vector<int> per_id(num_ids, 0);
  for (const LabeledCrop& lc : crops) {
    if (lc.identity < 0 || lc.identity >= num_ids) {
      throw std::invalid_argument("pretrain: identity out of range");
    }
    ++per_id[lc.identity];
  }
  const auto present = std::count_if(per_id.begin(), per_id.end(),
                                     [](int n) { return n > 0; });
  if (present < 2) throw std::invalid_argument("pretrain: need >= 2 identities");
  if (std::any_of(per_id.begin(), per_id.end(),
                  [](int n) { return n == 1; })) {
    throw std::invalid_argument("pretrain: every identity needs >= 2 crops");
  }
  if (config.steps < 0 || config.batch_size < 1) {
    throw std::invalid_argument("pretrain: bad schedule");
  }

  EmbedNet net = init;
  net.unfreeze();
  Rng rng(config.seed);
  std::vector<Tensor> velocity = net.params();
  for (Tensor& t : velocity) std::fill(t.values.begin(), t.values.end(), 0.0);

  std::vector<std::size_t> order(crops.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  if (report) report->loss_trace.clear();

  for (int step = 0; step < config.steps; ++step) {
    std::vector<Tensor> grad_sum = net.params();
    for (Tensor& t : grad_sum) std::fill(t.values.begin(), t.values.end(), 0.0);
    double loss_sum = 0.0;
    for (int b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      const LabeledCrop& lc = crops[order[cursor++]];
      const NetOutput o = forward(net, lc.crop);
      const ClassLoss cl = classification_loss(o.logits, lc.identity);
      loss_sum += cl.loss;
      const auto g = backward_params(net, o.cache, {}, cl.d_logits);
      for (std::size_t p = 0; p < g.size(); ++p) {
        for (std::size_t i = 0; i < g[p].values.size(); ++i) {
          grad_sum[p].values[i] += g[p].values[i];
        }
      }
    }
    const double inv = 1.0 / config.batch_size;
    auto& params = net.mutable_params();
    for (std::size_t p = 0; p < params.size(); ++p) {
      for (std::size_t i = 0; i < params[p].values.size(); ++i) {
        double& v = velocity[p].values[i];
        v = config.momentum * v + grad_sum[p].values[i] * inv;
        params[p].values[i] -= config.learning_rate * v;
      }
    }
    if (report) report->loss_trace.push_back(loss_sum * inv);
  }
  if (report) report->train_accuracy = classification_accuracy(net, crops);
  return net;
}

void save_embed_net(std::ostream& out, const EmbedNet& net) {
  using internal::write_le;
  const EmbedNetShape& s = net.shape();
  out.write("EMB1", 4);
  write_le<std::int32_t>(out, 1 + EmbedNet::kNumParams);
  write_le<std::int32_t>(out, 3);
  write_le<std::int32_t>(out, s.in_rows);
  write_le<std::int32_t>(out, s.in_cols);
  write_le<std::int32_t>(out, s.in_channels);
  for (const Tensor& t : net.params()) {
    write_le<std::int32_t>(out, static_cast<std::int32_t>(t.shape.size()));
    for (int d : t.shape) write_le<std::int32_t>(out, d);
  }
  for (const Tensor& t : net.params()) {
    for (double v : t.values) write_le<double>(out, v);
  }
  if (!out) throw std::runtime_error("save_embed_net: write failed");
}

void save_embed_net(const std::string& path, const EmbedNet& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot create " + path);
  save_embed_net(out, net);
}

EmbedNet load_embed_net(std::istream& in) {
  using internal::read_le;
  internal::expect_magic(in, "EMB1");
  const int records = read_le<std::int32_t>(in);
  if (records != 1 + EmbedNet::kNumParams) {
    throw std::runtime_error("load_embed_net: unexpected record count");
  }
  std::vector<std::vector<int>> shapes(records);
  for (auto& shape : shapes) {
    const int rank = read_le<std::int32_t>(in);
    if (rank < 1 || rank > 4) throw std::runtime_error("load_embed_net: bad rank");
    shape.resize(rank);
    for (int& d : shape) d = read_le<std::int32_t>(in);
  }
  if (shapes[0].size() != 3) throw std::runtime_error("load_embed_net: bad input record");
  EmbedNetShape s;
  s.in_rows = shapes[0][0];
  s.in_cols = shapes[0][1];
  s.in_channels = shapes[0][2];
  s.conv1_channels = shapes[1 + EmbedNet::kConv1W][0];
  s.conv2_channels = shapes[1 + EmbedNet::kConv2W][0];
  s.embed_dim = shapes[1 + EmbedNet::kProjW][0];
  s.num_ids = shapes[1 + EmbedNet::kClassifier].back();
  std::vector<Tensor> params(EmbedNet::kNumParams);
  for (int p = 0; p < EmbedNet::kNumParams; ++p) {
    params[p].shape = shapes[1 + p];
    params[p].values.resize(product(params[p].shape));
  }
  for (Tensor& t : params) {
    for (double& v : t.values) v = read_le<double>(in);
  }
  return EmbedNet(s, std::move(params));
}

EmbedNet load_embed_net(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return load_embed_net(in);
}

}  // namespace reidrefine
