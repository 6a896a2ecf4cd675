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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "reidrefine_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// Runs the CLI with stdout captured to `capture` (relative to the work
// directory) and returns the exit status.
int cli(const std::string& args, const std::string& capture = "stdout.txt") {
  const std::string cmd = "cd '" + work_dir().string() + "' && '" REIDREFINE_CLI "' " + args +
                          " > '" + capture + "' 2> stderr.txt";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[e.path().string()] = slurp(e.path());
  }
  return files;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

TEST(CliTest, GradcheckIsReproducible) {
  ASSERT_EQ(cli("gradcheck --seed 7 --out gc1", "gc1.txt"), 0);
  ASSERT_EQ(cli("gradcheck --seed 7 --out gc2", "gc2.txt"), 0);
  const std::string a = slurp(work_dir() / "gc1.txt");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(work_dir() / "gc2.txt"));
  EXPECT_EQ(slurp(work_dir() / "gc1" / "gradcheck.json"),
            slurp(work_dir() / "gc2" / "gradcheck.json"));
  EXPECT_TRUE(read_json(work_dir() / "gc1" / "gradcheck.json")["passed"].get<bool>());
}

TEST(CliTest, AblateHasFourRows) {
  ASSERT_EQ(cli("ablate --set n_scenes=16 --iters 100 --out ablate"), 0);
  std::istringstream table(slurp(work_dir() / "ablate" / "ablation.csv"));
  std::string line;
  std::getline(table, line);
  int rows = 0;
  while (std::getline(table, line)) rows += !line.empty();
  EXPECT_EQ(rows, 4);
  EXPECT_TRUE(fs::exists(work_dir() / "ablate" / "manifest.json"));
}

TEST(CliTest, RefineThenEvalBeatsBaseline) {
  ASSERT_EQ(cli("synth --out scenes"), 0);
  ASSERT_EQ(cli("pretrain --scenes scenes --out net"), 0);
  const auto scenes_before = snapshot(work_dir() / "scenes");
  const auto net_before = snapshot(work_dir() / "net");

  ASSERT_EQ(cli("refine --scenes scenes --net net/net.bin --out refined"), 0);
  for (const char* f : {"init_boxes.csv", "refined_boxes.csv", "trace.csv", "proxy_table.bin",
                        "summary.json", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(work_dir() / "refined" / f)) << f;
  }
  ASSERT_EQ(cli("eval --scenes scenes --net net/net.bin --boxes refined/init_boxes.csv "
                "--out eval_init"),
            0);
  ASSERT_EQ(cli("eval --scenes scenes --net net/net.bin --boxes refined/refined_boxes.csv "
                "--out eval_refined"),
            0);
  const auto base = read_json(work_dir() / "eval_init" / "metrics.json");
  const auto ref = read_json(work_dir() / "eval_refined" / "metrics.json");
  EXPECT_GT(ref["map"].get<double>(), base["map"].get<double>());

  EXPECT_EQ(snapshot(work_dir() / "scenes"), scenes_before);
  EXPECT_EQ(snapshot(work_dir() / "net"), net_before);

  for (const char* dir : {"scenes", "net", "refined", "eval_init", "eval_refined"}) {
    const auto m = read_json(work_dir() / dir / "manifest.json");
    EXPECT_TRUE(m.contains("command")) << dir;
    EXPECT_TRUE(m.contains("seed")) << dir;
    EXPECT_TRUE(m["config"].contains("margin")) << dir;
  }
}

TEST(CliTest, OutputInsideInputIsRejected) {
  ASSERT_EQ(cli("synth --set n_scenes=4 --out small"), 0);
  const auto before = snapshot(work_dir() / "small");
  EXPECT_NE(cli("pretrain --scenes small --out small/net"), 0);
  EXPECT_NE(cli("pretrain --scenes small --out small"), 0);
  EXPECT_EQ(snapshot(work_dir() / "small"), before);
}

TEST(CliTest, UnknownConfigKeyIsRejected) {
  EXPECT_NE(cli("gradcheck --set no_such_key=1 --out bad1"), 0);
  std::ofstream(work_dir() / "bad.cfg") << "seed = 1\nno_such_key = 2\n";
  EXPECT_NE(cli("gradcheck --config bad.cfg --out bad2"), 0);
  EXPECT_NE(slurp(work_dir() / "stderr.txt").find("no_such_key"), std::string::npos);
}

TEST(CliTest, BadLossNameIsRejected) { EXPECT_NE(cli("run --loss l2 --out bad3"), 0); }

}  // namespace
