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

#include "teedepth/eval.hpp"

#include <cmath>
#include <filesystem>
#include <limits>

#include "doctest.h"
#include "teedepth/depthnet.hpp"
#include "teedepth/phantom.hpp"
#include "teedepth/rng.hpp"
#include "teedepth/styletransfer.hpp"

using namespace teedepth;
namespace fs = std::filesystem;

TEST_CASE("abs_error: basics and an independent recomputation") {
  CHECK(abs_error(50.0, 50.0) == 0.0);
  CHECK(abs_error(42.0, 50.0) == 8.0);
  CHECK_THROWS_AS(abs_error(std::nan(""), 1.0), std::invalid_argument);

  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    double a = rng.uniform(-100.0, 100.0), b = rng.uniform(-100.0, 100.0);
    double oracle = a > b ? a - b : b - a;  // branch-based recompute
    CHECK(abs_error(a, b) == doctest::Approx(oracle).epsilon(1e-15));
  }
}

TEST_CASE("success_rate: strict 10 mm threshold semantics") {
  CHECK(success_rate({5.0, 15.0, 9.0}) == doctest::Approx(2.0 / 3.0));
  CHECK(success_rate({5.0, 15.0, 9.0},
                     std::numeric_limits<double>::infinity()) == 1.0);
  CHECK(success_rate({10.0}) == 0.0);  // exactly 10 counts as failure
  CHECK(success_rate({9.999999}) == 1.0);
  CHECK_THROWS_AS(success_rate({}), std::invalid_argument);
}

TEST_CASE("make_record: two-pass statistics and permutation invariance") {
  Rng rng(2);
  std::vector<double> errors;
  for (int i = 0; i < 257; ++i) errors.push_back(rng.uniform(0.0, 50.0));

  EvalRecord r = make_record("row", errors);

  // Independent two-pass recompute.
  double mean = 0.0;
  for (double e : errors) mean += e;
  mean /= errors.size();
  double sq = 0.0;
  for (double e : errors) sq += (e - mean) * (e - mean);
  double stddev = std::sqrt(sq / errors.size());
  CHECK(std::fabs(r.mean_mm - mean) <= 1e-9 * std::max(1.0, mean));
  CHECK(std::fabs(r.std_mm - stddev) <= 1e-9 * std::max(1.0, stddev));

  std::vector<double> shuffled = errors;
  Rng perm(3);
  perm.shuffle(shuffled);
  EvalRecord r2 = make_record("row", shuffled);
  CHECK(r2.mean_mm == doctest::Approx(r.mean_mm).epsilon(1e-12));
  CHECK(r2.std_mm == doctest::Approx(r.std_mm).epsilon(1e-12));
  CHECK(r2.success == r.success);
  CHECK(r2.box.median == doctest::Approx(r.box.median).epsilon(1e-12));
}

TEST_CASE("constant prediction shift moves mean error by at most the shift") {
  Rng rng(4);
  std::vector<double> preds, gts;
  for (int i = 0; i < 200; ++i) {
    gts.push_back(rng.uniform(0.0, 120.0));
    preds.push_back(gts.back() + rng.normal(0.0, 8.0));
  }
  const double c = 3.7;
  std::vector<double> base, shifted;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    base.push_back(abs_error(preds[i], gts[i]));
    shifted.push_back(abs_error(preds[i] + c, gts[i]));
    CHECK(shifted.back() >= 0.0);
  }
  double mean_base = make_record("b", base).mean_mm;
  double mean_shift = make_record("s", shifted).mean_mm;
  CHECK(std::fabs(mean_shift - mean_base) <= c + 1e-12);
}

TEST_CASE("boxplot_stats: known quartiles and outliers") {
  std::vector<double> vals{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  BoxplotStats b = boxplot_stats(vals);
  CHECK(b.q1 == doctest::Approx(3.25));
  CHECK(b.median == doctest::Approx(5.5));
  CHECK(b.q3 == doctest::Approx(7.75));
  CHECK(b.whisker_lo == doctest::Approx(1.0));
  CHECK(b.whisker_hi == doctest::Approx(10.0));
  CHECK(b.outliers.empty());

  vals.push_back(100.0);
  BoxplotStats b2 = boxplot_stats(vals);
  REQUIRE(b2.outliers.size() == 1);
  CHECK(b2.outliers[0] == doctest::Approx(100.0));
  CHECK(b2.whisker_hi <= 10.0 + 1e-12);
}

TEST_CASE("report: JSON and table round trips") {
  Rng rng(5);
  EvalReport rep;
  rep.seed = 42;
  rep.dataset_fingerprint = "00000000deadbeef";
  for (const auto& id : matrix_row_ids()) {
    std::vector<double> errors;
    for (int i = 0; i < 37; ++i) errors.push_back(rng.uniform(0.0, 40.0));
    rep.records.push_back(make_record(id, errors));
  }

  // JSON round trip is exact.
  EvalReport back = EvalReport::from_json_text(rep.to_json_text());
  CHECK(back.to_json_text() == rep.to_json_text());

  // Table round trip preserves every summary field bit for bit.
  EvalReport parsed = parse_table(render_table(rep));
  REQUIRE(parsed.records.size() == rep.records.size());
  for (std::size_t i = 0; i < parsed.records.size(); ++i) {
    CHECK(parsed.records[i].config_id == rep.records[i].config_id);
    CHECK(parsed.records[i].n == rep.records[i].n);
    CHECK(parsed.records[i].mean_mm == rep.records[i].mean_mm);
    CHECK(parsed.records[i].std_mm == rep.records[i].std_mm);
    CHECK(parsed.records[i].success == rep.records[i].success);
  }
}

TEST_CASE("run_matrix: row wiring, checkpoint validation, report shape") {
  fs::path dir = fs::temp_directory_path() / "teedepth_eval_ds";
  fs::path ckpt_dir = fs::temp_directory_path() / "teedepth_eval_ckpts";
  fs::remove_all(dir);
  fs::remove_all(ckpt_dir);
  fs::create_directories(ckpt_dir);

  DatasetGenConfig gen;
  gen.n_traj = 2;
  gen.n_frames_total = 12;
  gen.seed = 17;
  DatasetManifest manifest = generate_dataset(dir.string(), gen);

  MatrixCheckpoints ckpts;
  for (const auto& key : task_checkpoint_keys()) {
    bool vit = key.find("cnn_vit") != std::string::npos;
    DepthModel m = vit ? build_cnn_vit<float>(DepthNetConfig{}, 1)
                       : build_cnn_baseline<float>(DepthNetConfig{}, 1);
    m.depth_mean = 60.0f;
    m.depth_std = 20.0f;
    std::string path = (ckpt_dir / (key + ".ckpt")).string();
    save_depth_model(m, path);
    ckpts.task[key] = path;
  }
  StyleTransferModel st = build_style_transfer<float>(2, 8, 8, 16);
  ckpts.st = (ckpt_dir / "st.ckpt").string();
  save_st_model(st, ckpts.st);

  EvalReport report = run_matrix(manifest, dir.string(), ckpts, 9);
  REQUIRE(report.records.size() == 10);
  auto expected = matrix_row_ids();
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(report.records[i].config_id == expected[i]);
    CHECK(report.records[i].n == 6);  // one 6-frame test trajectory
    CHECK(report.records[i].errors.size() == 6);
    CHECK(report.records[i].mean_mm >= 0.0);
  }
  // The sim rows share one model: with and without ST differ only by input.
  CHECK(report.records[8].config_id == "sim,cnn_vit,nost");
  CHECK(report.records[9].config_id == "sim,cnn_vit,st");

  // Single-row selection.
  EvalReport one = run_matrix(manifest, dir.string(), ckpts, 9, {"sim,cnn_vit,st"});
  REQUIRE(one.records.size() == 1);
  CHECK(one.records[0].config_id == "sim,cnn_vit,st");

  CHECK_THROWS_AS(run_matrix(manifest, dir.string(), ckpts, 9, {"bogus,row"}),
                  ConfigError);

  MatrixCheckpoints missing = ckpts;
  missing.task.erase("sim_cnn");
  CHECK_THROWS_AS(run_matrix(manifest, dir.string(), missing, 9), ConfigError);

  MatrixCheckpoints no_st = ckpts;
  no_st.st.clear();
  CHECK_THROWS_AS(run_matrix(manifest, dir.string(), no_st, 9), ConfigError);
  // Rows without ST still work without an ST checkpoint.
  EvalReport no_st_row = run_matrix(manifest, dir.string(), no_st, 9, {"real,cnn"});
  CHECK(no_st_row.records.size() == 1);

  // Error files are written, one per record.
  report.save_error_files((ckpt_dir / "errors").string());
  CHECK(fs::exists(ckpt_dir / "errors" / "errors_sim_cnn_vit_st.txt"));

  fs::remove_all(dir);
  fs::remove_all(ckpt_dir);
}
