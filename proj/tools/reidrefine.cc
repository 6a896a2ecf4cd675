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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "reidrefine/checks.h"
#include "reidrefine/config.h"
#include "reidrefine/pipeline.h"

namespace fs = std::filesystem;
using namespace reidrefine;

namespace {

constexpr int kRoiCases = 100;
constexpr int kChainCases = 20;
constexpr int kAffineCases = 1000;

// Options shared by every subcommand.
struct CommonOptions {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> loss;
  std::optional<int> iters;
  std::optional<int> gallery_size;
  std::string out;
};

struct Inputs {
  std::string scenes;
  std::string net;
  std::string boxes;
};

void add_common(CLI::App* cmd, CommonOptions& opts, const std::string& default_out) {
  opts.out = default_out;
  cmd->add_option("--config", opts.config_path, "key = value config file");
  cmd->add_option("--set", opts.sets, "override one config key, KEY=VALUE");
  cmd->add_option("--seed", opts.seed, "run seed");
  cmd->add_option("--loss", opts.loss, "refinement loss")
      ->check(CLI::IsMember({"cls", "tri", "cls+tri"}));
  cmd->add_option("--iters", opts.iters, "refinement iterations");
  cmd->add_option("--gallery-size", opts.gallery_size, "gallery scenes per query, 0 = all");
  cmd->add_option("--out", opts.out, "output directory")->capture_default_str();
}

// Defaults, then the config file, then --set, then the dedicated flags.
RunConfig resolve_config(const CommonOptions& opts) {
  RunConfig cfg;
  if (!opts.config_path.empty()) apply_config_file(opts.config_path, cfg);
  for (const std::string& kv : opts.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects KEY=VALUE: " + kv);
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.loss) set_config_value(cfg, "loss", *opts.loss);
  if (opts.iters) set_config_value(cfg, "iters", std::to_string(*opts.iters));
  if (opts.gallery_size) set_config_value(cfg, "gallery_size", std::to_string(*opts.gallery_size));
  validate_config(cfg);
  return cfg;
}

bool inside(const fs::path& path, const fs::path& dir) {
  const fs::path p = fs::weakly_canonical(path);
  const fs::path d = fs::weakly_canonical(dir);
  auto pi = p.begin();
  for (auto di = d.begin(); di != d.end(); ++di, ++pi) {
    if (di->empty()) continue;
    if (pi == p.end() || *pi != *di) return false;
  }
  return true;
}

// Input directories are read-only: refuse an output directory at or below
// any of them.
void prepare_out(const std::string& out, const Inputs& in) {
  std::vector<fs::path> dirs;
  if (!in.scenes.empty()) dirs.emplace_back(in.scenes);
  for (const std::string& file : {in.net, in.boxes}) {
    if (!file.empty()) dirs.push_back(fs::absolute(file).parent_path());
  }
  for (const fs::path& dir : dirs) {
    if (inside(out, dir)) {
      throw std::invalid_argument("output directory " + out + " lies inside input directory " +
                                  dir.string());
    }
  }
  fs::create_directories(out);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot create " + path.string());
  file << text;
}

void write_manifest(const std::string& command, const RunConfig& cfg, const Inputs& in,
                    const std::vector<std::string>& outputs, const std::string& out) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["seed"] = cfg.seed;
  nlohmann::ordered_json config;
  for (const ConfigKey& key : config_keys()) config[key.name] = key.get(cfg);
  j["config"] = config;
  nlohmann::ordered_json inputs = nlohmann::ordered_json::object();
  if (!in.scenes.empty()) inputs["scenes"] = in.scenes;
  if (!in.net.empty()) inputs["net"] = in.net;
  if (!in.boxes.empty()) inputs["boxes"] = in.boxes;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  write_text(fs::path(out) / "manifest.json", j.dump(2) + "\n");
}

EmbedNet load_frozen_net(const std::string& path, const RunConfig& cfg) {
  EmbedNet net = load_embed_net(path);
  const EmbedNetShape& shape = net.shape();
  if (shape.in_rows != cfg.refine.crop_rows || shape.in_cols != cfg.refine.crop_cols) {
    throw std::invalid_argument("net input " + std::to_string(shape.in_rows) + "x" +
                                std::to_string(shape.in_cols) +
                                " does not match crop_rows x crop_cols");
  }
  net.freeze();
  return net;
}

int cmd_synth(const CommonOptions& opts) {
  const RunConfig cfg = resolve_config(opts);
  prepare_out(opts.out, {});
  const SceneSet set = synthesize(cfg);
  write_scene_set(opts.out, set);
  std::printf("%zu scenes, %zu annotations, %d identities -> %s\n", set.scenes.size(),
              set.num_annotations(), set.num_ids, opts.out.c_str());
  write_manifest("synth", cfg, {}, {"scene_*.ppm", "annotations.csv"}, opts.out);
  return 0;
}

int cmd_pretrain(const CommonOptions& opts, const Inputs& in) {
  const RunConfig cfg = resolve_config(opts);
  prepare_out(opts.out, in);
  const SceneSet set = read_scene_set(in.scenes);
  PretrainReport report;
  const EmbedNet net = pretrain_net(set, cfg, &report);
  save_embed_net((fs::path(opts.out) / "net.bin").string(), net);
  nlohmann::ordered_json j;
  j["train_accuracy"] = report.train_accuracy;
  j["steps"] = report.loss_trace.size();
  j["first_loss"] = report.loss_trace.empty() ? 0.0 : report.loss_trace.front();
  j["last_loss"] = report.loss_trace.empty() ? 0.0 : report.loss_trace.back();
  write_text(fs::path(opts.out) / "pretrain.json", j.dump(2) + "\n");
  std::printf("train accuracy %.4f\n", report.train_accuracy);
  write_manifest("pretrain", cfg, in, {"net.bin", "pretrain.json"}, opts.out);
  return 0;
}

int cmd_gradcheck(const CommonOptions& opts) {
  const RunConfig cfg = resolve_config(opts);
  prepare_out(opts.out, {});
  const std::vector<CheckReport> reports = {
      check_roi_gradients(kRoiCases, mix_seed(cfg.seed, 1)),
      check_chain_gradients(kChainCases, mix_seed(cfg.seed, 2)),
      check_affine_corners(kAffineCases, mix_seed(cfg.seed, 3)),
  };
  const std::string report = checks_json(reports);
  write_text(fs::path(opts.out) / "gradcheck.json", report);
  std::cout << report;
  write_manifest("gradcheck", cfg, {}, {"gradcheck.json"}, opts.out);
  for (const CheckReport& r : reports) {
    if (!r.passed()) return 1;
  }
  return 0;
}

int cmd_refine(const CommonOptions& opts, const Inputs& in) {
  const RunConfig cfg = resolve_config(opts);
  prepare_out(opts.out, in);
  const SceneSet set = read_scene_set(in.scenes);
  const EmbedNet net = load_frozen_net(in.net, cfg);
  const std::vector<BoxItem> init =
      in.boxes.empty() ? perturb_items(set, cfg) : read_boxes_csv(in.boxes);
  const RefineOutcome outcome = run_refinement(set, init, net, cfg);

  const fs::path out(opts.out);
  write_boxes_csv((out / "init_boxes.csv").string(), init);
  write_boxes_csv((out / "refined_boxes.csv").string(), outcome.refined);
  write_trace_csv((out / "trace.csv").string(), outcome.record);
  save_proxy_table((out / "proxy_table.bin").string(), outcome.table);

  const std::vector<BoxItem> truth = ground_truth_items(set);
  const std::vector<std::size_t> held_out = held_out_indices(set);
  nlohmann::ordered_json j;
  j["init_mean_iou"] = mean_iou(init, truth, held_out);
  j["final_mean_iou"] = mean_iou(outcome.refined, truth, held_out);
  j["refined_boxes"] = held_out.size();
  j["skipped_anchors"] = outcome.record.skipped_anchors;
  j["iterations_without_triplet"] = outcome.record.iterations_without_triplet;
  write_text(out / "summary.json", j.dump(2) + "\n");
  std::printf("held-out mean IoU %.4f -> %.4f\n", j["init_mean_iou"].get<double>(),
              j["final_mean_iou"].get<double>());
  write_manifest("refine", cfg, in,
                 {"init_boxes.csv", "refined_boxes.csv", "trace.csv", "proxy_table.bin",
                  "summary.json"},
                 opts.out);
  return 0;
}

int cmd_eval(const CommonOptions& opts, const Inputs& in) {
  const RunConfig cfg = resolve_config(opts);
  prepare_out(opts.out, in);
  const SceneSet set = read_scene_set(in.scenes);
  const EmbedNet net = load_frozen_net(in.net, cfg);
  const std::vector<BoxItem> boxes =
      in.boxes.empty() ? ground_truth_items(set) : read_boxes_csv(in.boxes);
  const RetrievalResult result = evaluate_boxes(set, boxes, net, cfg);
  write_metrics_json((fs::path(opts.out) / "metrics.json").string(), result);
  std::printf("mAP %.4f  rank-1 %.4f  rank-5 %.4f  (%zu queries)\n", result.map,
              result.rank(1), result.rank(5), result.queries.size());
  write_manifest("eval", cfg, in, {"metrics.json"}, opts.out);
  return 0;
}

int cmd_ablate(const CommonOptions& opts) {
  const RunConfig cfg = resolve_config(opts);
  prepare_out(opts.out, {});
  const std::string table = ablation_table(run_ablation(cfg));
  write_text(fs::path(opts.out) / "ablation.csv", table);
  std::cout << table;
  write_manifest("ablate", cfg, {}, {"ablation.csv"}, opts.out);
  return 0;
}

int cmd_run(const CommonOptions& opts) {
  const RunConfig cfg = resolve_config(opts);
  prepare_out(opts.out, {});
  const Experiment e = run_experiment(cfg);
  const fs::path out(opts.out);
  write_trace_csv((out / "trace.csv").string(), e.outcome.record);
  write_boxes_csv((out / "init_boxes.csv").string(), e.init);
  write_boxes_csv((out / "refined_boxes.csv").string(), e.outcome.refined);
  write_metrics_json((out / "baseline_metrics.json").string(), e.baseline);
  write_metrics_json((out / "metrics.json").string(), e.refined);
  std::printf("held-out mean IoU %.4f -> %.4f\n", e.init_iou, e.final_iou);
  std::printf("mAP %.4f -> %.4f  rank-1 %.4f -> %.4f\n", e.baseline.map, e.refined.map,
              e.baseline.rank(1), e.refined.rank(1));
  write_manifest("run", cfg, {},
                 {"trace.csv", "init_boxes.csv", "refined_boxes.csv", "baseline_metrics.json",
                  "metrics.json"},
                 opts.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Re-ID driven box refinement on synthetic person-search scenes"};
  app.require_subcommand(1);
  app.footer(config_help());

  CommonOptions opts;
  Inputs in;
  auto* synth = app.add_subcommand("synth", "generate a scene set");
  add_common(synth, opts, "runs/synth");

  auto* pretrain = app.add_subcommand("pretrain", "pretrain the re-ID net on train crops");
  add_common(pretrain, opts, "runs/pretrain");
  pretrain->add_option("--scenes", in.scenes, "scene set directory")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  add_common(gradcheck, opts, "runs/gradcheck");

  auto* refine = app.add_subcommand("refine", "refine held-out boxes with the frozen net");
  add_common(refine, opts, "runs/refine");
  refine->add_option("--scenes", in.scenes, "scene set directory")->required();
  refine->add_option("--net", in.net, "pretrained net checkpoint")->required();
  refine->add_option("--boxes", in.boxes, "initial boxes CSV (default: perturbed truth)");

  auto* eval = app.add_subcommand("eval", "retrieval metrics for a box set");
  add_common(eval, opts, "runs/eval");
  eval->add_option("--scenes", in.scenes, "scene set directory")->required();
  eval->add_option("--net", in.net, "pretrained net checkpoint")->required();
  eval->add_option("--boxes", in.boxes, "boxes CSV (default: ground truth)");

  auto* ablate = app.add_subcommand("ablate", "baseline, cls, tri and cls+tri side by side");
  add_common(ablate, opts, "runs/ablate");

  auto* run = app.add_subcommand("run", "full experiment in one process");
  add_common(run, opts, "runs/run");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) return cmd_synth(opts);
    if (*pretrain) return cmd_pretrain(opts, in);
    if (*gradcheck) return cmd_gradcheck(opts);
    if (*refine) return cmd_refine(opts, in);
    if (*eval) return cmd_eval(opts, in);
    if (*ablate) return cmd_ablate(opts);
    if (*run) return cmd_run(opts);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
