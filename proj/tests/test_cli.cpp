/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 teedepth contributors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "teedepth/depthnet.hpp"
#include "teedepth/eval.hpp"
#include "teedepth/manifest.hpp"
#include "teedepth/styletransfer.hpp"

using namespace teedepth;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
  int exit_code = -1;
  std::string output;
};

CmdResult run_cli(const std::string& args, bool merge_stderr = true) {
  std::string cmd = std::string(TEEDEPTH_CLI_PATH) + " " + args +
                    (merge_stderr ? " 2>&1" : " 2>/dev/null");
  std::FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CmdResult result;
  char buf[512];
  while (std::fgets(buf, sizeof(buf), pipe)) result.output += buf;
  int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

struct CliFixture {
  fs::path root;
  fs::path dataset;
  std::string manifest;

  CliFixture() {
    root = fs::temp_directory_path() / "teedepth_cli_fixture";
    fs::remove_all(root);
    fs::create_directories(root);
    dataset = root / "dataset";
    auto gen = run_cli("gen-data --out " + dataset.string() +
                       " --seed 5 --n-traj 2 --frames 40");
    REQUIRE(gen.exit_code == 0);
    manifest = (dataset / "manifest.json").string();
    REQUIRE(fs::exists(manifest));
  }
  ~CliFixture() { fs::remove_all(root); }
};

CliFixture& fixture() {
  static CliFixture f;
  return f;
}

}  // namespace

TEST_CASE("cli: gen-data prints the manifest path and is reproducible") {
  auto& f = fixture();
  fs::path second = f.root / "dataset2";
  auto gen = run_cli("gen-data --out " + second.string() +
                     " --seed 5 --n-traj 2 --frames 40");
  CHECK(gen.exit_code == 0);
  CHECK(gen.output.find("manifest.json") != std::string::npos);
  CHECK(read_text_file(f.manifest) ==
        read_text_file((second / "manifest.json").string()));
}

TEST_CASE("cli: usage and config errors exit with code 2") {
  auto& f = fixture();
  CHECK(run_cli("definitely-not-a-subcommand").exit_code == 2);
  CHECK(run_cli("train-task").exit_code == 2);  // missing required --out
  auto bad_mode = run_cli("train-task --manifest " + f.manifest +
                          " --out " + (f.root / "r_badmode").string() +
                          " --mode bogus --epochs 1");
  CHECK(bad_mode.exit_code == 2);
  auto bad_traj = run_cli("gen-data --out " + (f.root / "d_bad").string() +
                          " --n-traj 1");
  CHECK(bad_traj.exit_code == 2);
  CHECK(!fs::exists(f.root / "d_bad"));
  CHECK(run_cli("--help").exit_code == 0);
}

TEST_CASE("cli: one-epoch smoke training finishes quickly") {
  auto& f = fixture();
  fs::path run = f.root / "run_smoke";
  auto t0 = std::chrono::steady_clock::now();
  auto result = run_cli("train-task --manifest " + f.manifest + " --out " +
                        run.string() +
                        " --mode sim --model cnn_vit --epochs 1 --batch 8 "
                        "--lr 1e-4 --seed 1");
  double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(result.exit_code == 0);
  CHECK(seconds < 60.0);
  CHECK(fs::exists(run / "final.ckpt"));
  CHECK(fs::exists(run / "best.ckpt"));
  CHECK(fs::exists(run / "history.csv"));
  CHECK(!fs::exists(run / ".lock"));  // released on exit
}

TEST_CASE("cli: lock file blocks a second invocation") {
  auto& f = fixture();
  fs::path run = f.root / "run_locked";
  fs::create_directories(run);
  write_text_file((run / ".lock").string(), "999\n");
  auto result = run_cli("train-task --manifest " + f.manifest + " --out " +
                        run.string() + " --mode sim --model cnn --epochs 1 --batch 8");
  CHECK(result.exit_code == 1);
  CHECK(result.output.find("lock") != std::string::npos);
}

TEST_CASE("cli: train-st one epoch produces a usable checkpoint") {
  auto& f = fixture();
  fs::path run = f.root / "run_st";
  auto result = run_cli("train-st --manifest " + f.manifest + " --out " +
                        run.string() +
                        " --epochs 1 --lr 1e-4 --n-patches 32 --seed 2");
  CHECK(result.exit_code == 0);
  CHECK(fs::exists(run / "st.ckpt"));
  StyleTransferModel st = load_st_model((run / "st.ckpt").string());
  CHECK(st.initialized);
}

TEST_CASE("cli: eval matrix with explicit checkpoints, table round trip") {
  auto& f = fixture();
  fs::path ckpts = f.root / "ckpts";
  fs::create_directories(ckpts);
  std::string overrides;
  for (const auto& key : task_checkpoint_keys()) {
    bool vit = key.find("cnn_vit") != std::string::npos;
    DepthModel m = vit ? build_cnn_vit<float>(DepthNetConfig{}, 3)
                       : build_cnn_baseline<float>(DepthNetConfig{}, 3);
    m.depth_mean = 60.0f;
    m.depth_std = 20.0f;
    std::string path = (ckpts / (key + ".ckpt")).string();
    save_depth_model(m, path);
    overrides += " --ckpt " + key + "=" + path;
  }
  StyleTransferModel st = build_style_transfer<float>(4, 8, 8, 16);
  std::string st_path = (ckpts / "st.ckpt").string();
  save_st_model(st, st_path);

  fs::path report_path = f.root / "report.json";
  auto result = run_cli("eval --manifest " + f.manifest + overrides + " --st " +
                        st_path + " --out " + report_path.string() +
                            " --format table --seed 11",
                        /*merge_stderr=*/false);
  CHECK(result.exit_code == 0);
  CHECK(fs::exists(report_path));

  // The printed table parses back into the saved report's records.
  EvalReport saved = EvalReport::load(report_path.string());
  EvalReport parsed = parse_table(result.output);
  REQUIRE(parsed.records.size() == 10);
  REQUIRE(saved.records.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(parsed.records[i].config_id == saved.records[i].config_id);
    CHECK(parsed.records[i].mean_mm == saved.records[i].mean_mm);
    CHECK(parsed.records[i].std_mm == saved.records[i].std_mm);
    CHECK(parsed.records[i].success == saved.records[i].success);
  }

  // Row selection produces exactly one record.
  auto one = run_cli("eval --manifest " + f.manifest + overrides + " --st " +
                     st_path + " --out " + (f.root / "one.json").string() +
                     " --row sim,cnn_vit,st --format json");
  CHECK(one.exit_code == 0);
  EvalReport one_rep = EvalReport::load((f.root / "one.json").string());
  REQUIRE(one_rep.records.size() == 1);
  CHECK(one_rep.records[0].config_id == "sim,cnn_vit,st");

  // Missing checkpoint surfaces as a config error.
  auto missing = run_cli("eval --manifest " + f.manifest + " --out " +
                         (f.root / "x.json").string());
  CHECK(missing.exit_code == 2);

  // report re-renders the saved document.
  auto rendered = run_cli("report --in " + report_path.string() + " --format table",
                          /*merge_stderr=*/false);
  CHECK(rendered.exit_code == 0);
  EvalReport reparsed = parse_table(rendered.output);
  CHECK(reparsed.records.size() == 10);
}

TEST_CASE("cli: dump-panels writes strips; zero views is a warning no-op") {
  auto& f = fixture();
  fs::path ckpts = f.root / "panels_ckpt";
  fs::create_directories(ckpts);
  StyleTransferModel st = build_style_transfer<float>(4, 8, 8, 16);
  std::string st_path = (ckpts / "st.ckpt").string();
  save_st_model(st, st_path);

  fs::path out = f.root / "panels";
  auto result = run_cli("dump-panels --manifest " + f.manifest + " --st " +
                        st_path + " --out " + out.string() + " --views 2");
  CHECK(result.exit_code == 0);
  CHECK(fs::exists(out / "panel_000.png"));
  CHECK(fs::exists(out / "panel_001.png"));
  USImage strip = load_png((out / "panel_000.png").string(), Domain::kReal);
  CHECK(strip.width == 384);
  CHECK(strip.height == 128);

  auto none = run_cli("dump-panels --manifest " + f.manifest + " --st " + st_path +
                      " --out " + (f.root / "panels0").string() + " --views 0");
  CHECK(none.exit_code == 0);
  CHECK(none.output.find("warning") != std::string::npos);
  CHECK(!fs::exists(f.root / "panels0"));
}
