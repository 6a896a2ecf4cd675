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

#include "reidrefine/config.h"

#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>

#include "text_util.h"

namespace reidrefine {
namespace {

using internal::format_real;
using internal::parse_int;
using internal::parse_real;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string& s) {
  if (s.empty() || s[0] == '-') throw std::invalid_argument("not a seed: " + s);
  std::size_t used = 0;
  const unsigned long long v = std::stoull(s, &used);
  if (used != s.size()) throw std::invalid_argument("not a seed: " + s);
  return v;
}

template <typename Field>
ConfigKey int_key(std::string name, std::string help, Field field) {
  return {std::move(name), std::move(help),
          [field](RunConfig& c, const std::string& v) { field(c) = parse_int(v); },
          [field](const RunConfig& c) {
            return std::to_string(field(c));
          }};
}

template <typename Field>
ConfigKey real_key(std::string name, std::string help, Field field) {
  return {std::move(name), std::move(help),
          [field](RunConfig& c, const std::string& v) { field(c) = parse_real(v); },
          [field](const RunConfig& c) { return format_real(field(c)); }};
}

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> k;
  k.push_back({"seed", "master seed",
               [](RunConfig& c, const std::string& v) { c.seed = parse_u64(v); },
               [](const RunConfig& c) { return std::to_string(c.seed); }});
  k.push_back(int_key("n_scenes", "number of scenes",
                      [](auto& c) -> auto& { return c.synth.num_scenes; }));
  k.push_back(int_key("n_ids", "number of identities",
                      [](auto& c) -> auto& { return c.synth.num_ids; }));
  k.push_back(real_key("distractor_rate", "chance of each free-standing distractor",
                       [](auto& c) -> auto& { return c.synth.distractor_rate; }));
  k.push_back(real_key("overlap_rate", "chance of an overlapping distractor per person",
                       [](auto& c) -> auto& { return c.synth.overlap_rate; }));
  k.push_back(int_key("scene_rows", "scene height in pixels",
                      [](auto& c) -> auto& { return c.synth.scene_rows; }));
  k.push_back(int_key("scene_cols", "scene width in pixels",
                      [](auto& c) -> auto& { return c.synth.scene_cols; }));
  k.push_back(int_key("max_instances", "max annotated persons per scene",
                      [](auto& c) -> auto& { return c.synth.max_instances; }));
  k.push_back(int_key("min_person_width", "smallest person width in pixels",
                      [](auto& c) -> auto& { return c.synth.min_person_width; }));
  k.push_back(int_key("max_person_width", "largest person width in pixels",
                      [](auto& c) -> auto& { return c.synth.max_person_width; }));
  k.push_back(real_key("train_fraction", "leading fraction of scenes used for training",
                       [](auto& c) -> auto& { return c.synth.train_fraction; }));
  k.push_back(real_key("blur_sigma", "scene blur in pixels",
                       [](auto& c) -> auto& { return c.synth.blur_sigma; }));
  k.push_back(real_key("noise_sigma", "additive pixel noise",
                       [](auto& c) -> auto& { return c.synth.noise_sigma; }));
  k.push_back(int_key("pretrain_steps", "re-ID pretraining steps",
                      [](auto& c) -> auto& { return c.pretrain.steps; }));
  k.push_back(int_key("pretrain_batch", "re-ID pretraining batch size",
                      [](auto& c) -> auto& { return c.pretrain.batch_size; }));
  k.push_back(real_key("pretrain_lr", "re-ID pretraining learning rate",
                       [](auto& c) -> auto& { return c.pretrain.learning_rate; }));
  k.push_back(real_key("pretrain_momentum", "re-ID pretraining momentum",
                       [](auto& c) -> auto& { return c.pretrain.momentum; }));
  k.push_back(int_key("crop_rows", "ROI crop height",
                      [](auto& c) -> auto& { return c.refine.crop_rows; }));
  k.push_back(int_key("crop_cols", "ROI crop width",
                      [](auto& c) -> auto& { return c.refine.crop_cols; }));
  k.push_back(int_key("iters", "refinement iterations",
                      [](auto& c) -> auto& { return c.refine.iterations; }));
  k.push_back(int_key("batch", "refinement batch size",
                      [](auto& c) -> auto& { return c.refine.batch_size; }));
  k.push_back(real_key("momentum", "refinement momentum",
                       [](auto& c) -> auto& { return c.refine.momentum; }));
  k.push_back(real_key("weight_decay", "L2 decay on log box sizes",
                       [](auto& c) -> auto& { return c.refine.weight_decay; }));
  k.push_back(int_key("warmup_iters", "linear warm-up length",
                      [](auto& c) -> auto& { return c.refine.warmup_iters; }));
  k.push_back(real_key("peak_lr", "learning rate after warm-up",
                       [](auto& c) -> auto& { return c.refine.peak_lr; }));
  k.push_back(int_key("decay_iter", "iteration at which the rate drops to final_lr",
                      [](auto& c) -> auto& { return c.refine.decay_iter; }));
  k.push_back(real_key("final_lr", "learning rate after decay_iter",
                       [](auto& c) -> auto& { return c.refine.final_lr; }));
  k.push_back(real_key("lr_scale", "multiplier from scheduled rate to box step",
                       [](auto& c) -> auto& { return c.refine.lr_scale; }));
  k.push_back(real_key("margin", "triplet margin",
                       [](auto& c) -> auto& { return c.refine.margin; }));
  k.push_back(int_key("proxy_volume", "proxy slots per identity",
                      [](auto& c) -> auto& { return c.refine.proxy_volume; }));
  k.push_back({"loss", "cls | tri | cls+tri",
               [](RunConfig& c, const std::string& v) { c.refine.loss = parse_loss_mode(v); },
               [](const RunConfig& c) { return std::string(loss_mode_name(c.refine.loss)); }});
  k.push_back({"box_mode", "coords | head",
               [](RunConfig& c, const std::string& v) { c.refine.box_mode = parse_box_mode(v); },
               [](const RunConfig& c) { return std::string(box_mode_name(c.refine.box_mode)); }});
  k.push_back({"negatives", "all | batch (rows searched for hard negatives)",
               [](RunConfig& c, const std::string& v) {
                 if (v == "all") {
                   c.refine.negatives = NegativeSet::kAllOtherRows;
                 } else if (v == "batch") {
                   c.refine.negatives = NegativeSet::kBatchIdentityRows;
                 } else {
                   throw std::invalid_argument("negatives must be all or batch");
                 }
               },
               [](const RunConfig& c) {
                 return std::string(c.refine.negatives == NegativeSet::kAllOtherRows ? "all"
                                                                                     : "batch");
               }});
  k.push_back(real_key("iou_lo", "lower IoU of perturbed initial boxes",
                       [](auto& c) -> auto& { return c.iou_lo; }));
  k.push_back(real_key("iou_hi", "upper IoU of perturbed initial boxes",
                       [](auto& c) -> auto& { return c.iou_hi; }));
  k.push_back(int_key("gallery_size", "gallery scenes per query, 0 = all",
                      [](auto& c) -> auto& { return c.gallery_size; }));
  return k;
}

const ConfigKey& find_key(const std::string& key) {
  for (const ConfigKey& k : config_keys()) {
    if (k.name == key) return k;
  }
  throw std::invalid_argument("unknown config key: " + key);
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const ConfigKey& k = find_key(key);
  try {
    k.set(cfg, value);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(key + ": " + e.what());
  } catch (const std::out_of_range&) {
    throw std::invalid_argument(key + ": value out of range: " + value);
  }
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) {
  return find_key(key).get(cfg);
}

void apply_config(std::istream& in, RunConfig& cfg, const std::string& source) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw std::invalid_argument(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw std::invalid_argument(where + "empty key or value");
    try {
      set_config_value(cfg, key, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + e.what());
    }
  }
}

void apply_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  apply_config(in, cfg, path);
}

void validate_config(const RunConfig& cfg) {
  const SynthConfig& s = cfg.synth;
  if (s.num_scenes < 2) throw std::invalid_argument("n_scenes must be >= 2");
  if (s.num_ids < 2) throw std::invalid_argument("n_ids must be >= 2");
  if (!(cfg.iou_lo > 0.0 && cfg.iou_lo <= cfg.iou_hi && cfg.iou_hi <= 1.0)) {
    throw std::invalid_argument("need 0 < iou_lo <= iou_hi <= 1");
  }
  if (cfg.gallery_size < 0) throw std::invalid_argument("gallery_size must be >= 0");
  if (cfg.pretrain.steps < 0 || cfg.pretrain.batch_size < 1) {
    throw std::invalid_argument("bad pretraining settings");
  }
  check_refine_config(cfg.refine);
}

std::string config_text(const RunConfig& cfg) {
  std::string out;
  for (const ConfigKey& k : config_keys()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

std::string config_help() {
  const RunConfig defaults;
  std::ostringstream out;
  out << "Config keys (file `key = value`, or --set key=value):\n";
  for (const ConfigKey& k : config_keys()) {
    std::string head = "  " + k.name + " = " + k.get(defaults);
    if (head.size() < 34) head.resize(34, ' ');
    out << head << "  " << k.help << "\n";
  }
  return out.str();
}

}  // namespace reidrefine
