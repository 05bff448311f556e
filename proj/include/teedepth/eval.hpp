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

#ifndef TEEDEPTH_EVAL_HPP
#define TEEDEPTH_EVAL_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "teedepth/manifest.hpp"

namespace teedepth {

/// |prediction - ground truth| in millimetres.
double abs_error(double pred_mm, double gt_mm);

/// Fraction of errors strictly below the threshold (default 10 mm).
double success_rate(const std::vector<double>& errors_mm, double threshold_mm = 10.0);

/// Quartiles with 1.5-IQR whiskers and outliers, for boxplot rendering.
struct BoxplotStats {
  double q1 = 0.0, median = 0.0, q3 = 0.0;
  double whisker_lo = 0.0, whisker_hi = 0.0;
  std::vector<double> outliers;
};

BoxplotStats boxplot_stats(std::vector<double> values);

/// One evaluated configuration (a Table-style row).
struct EvalRecord {
  std::string config_id;  // e.g. "sim,cnn_vit,st"
  int n = 0;
  double mean_mm = 0.0;
  double std_mm = 0.0;  // population standard deviation
  double success = 0.0;
  BoxplotStats box;
  std::vector<double> errors;  // raw per-sample errors, traversal order
};

/// Builds a record (two-pass statistics) from raw errors.
EvalRecord make_record(const std::string& config_id, std::vector<double> errors);

struct EvalReport {
  std::vector<EvalRecord> records;
  std::string dataset_fingerprint;  // FNV-1a 64 of the manifest text, hex
  std::uint64_t seed = 0;

  std::string to_json_text() const;
  static EvalReport from_json_text(const std::string& text);
  void save(const std::string& path) const;
  static EvalReport load(const std::string& path);

  /// Writes one raw-error file per record: errors_<id with , -> _>.txt.
  void save_error_files(const std::string& dir) const;
};

/// The ten evaluation configurations, in presentation order.
std::vector<std::string> matrix_row_ids();

/// Checkpoint key of the trained task model a row evaluates.
std::string row_task_key(const std::string& row_id);

/// Whether the row passes real test images through the style-transfer model.
bool row_uses_st(const std::string& row_id);

/// The eight distinct task-model checkpoint keys run_matrix expects.
std::vector<std::string> task_checkpoint_keys();

struct MatrixCheckpoints {
  std::map<std::string, std::string> task;  // key -> checkpoint path
  std::string st;                           // style-transfer checkpoint path
};

/**
 * Evaluates the configuration matrix on the manifest's held-out test
 * trajectories (real-domain frames). Rows flagged for style transfer first
 * translate every test image. `rows` empty means all ten.
 */
EvalReport run_matrix(const DatasetManifest& manifest, const std::string& data_root,
                      const MatrixCheckpoints& checkpoints, std::uint64_t seed,
                      const std::vector<std::string>& rows = {});

/// Aligned text table (full double precision, whitespace separated).
std::string render_table(const EvalReport& report);

/// Parses render_table output back into records (summary fields only).
EvalReport parse_table(const std::string& text);

}  // namespace teedepth

#endif  // TEEDEPTH_EVAL_HPP
