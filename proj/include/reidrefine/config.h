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

#ifndef REIDREFINE_CONFIG_H_
#define REIDREFINE_CONFIG_H_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "reidrefine/embed_net.h"
#include "reidrefine/refine.h"
#include "reidrefine/scene_synth.h"

namespace reidrefine {

// Everything a pipeline run depends on. Sub-seeds for each stage are derived
// from `seed`.
struct RunConfig {
  SynthConfig synth;
  PretrainConfig pretrain;
  RefineConfig refine;
  double iou_lo = 0.4;
  double iou_hi = 0.7;
  int gallery_size = 0;
  std::uint64_t seed = 0;
};

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Registry of accepted keys, in documentation order.
const std::vector<ConfigKey>& config_keys();

// Throws std::invalid_argument for an unknown key or unparsable value.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);

// Line-oriented `key = value`, `#` starts a comment. Errors name the line.
void apply_config(std::istream& in, RunConfig& cfg, const std::string& source = "<config>");
void apply_config_file(const std::string& path, RunConfig& cfg);

// Cross-field checks (rates, IoU range, schedule).
void validate_config(const RunConfig& cfg);

// Every key with its resolved value, one `key = value` per line; feeding it
// back through apply_config reproduces `cfg` exactly.
std::string config_text(const RunConfig& cfg);

// `--help` listing: key, default, description.
std::string config_help();

}  // namespace reidrefine

#endif  // REIDREFINE_CONFIG_H_
