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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "json.hpp"
#include "teedepth/common.hpp"
#include "teedepth/depthnet.hpp"
#include "teedepth/styletransfer.hpp"

namespace teedepth {

namespace fs = std::filesystem;

double abs_error(double pred_mm, double gt_mm) {
  if (!std::isfinite(pred_mm) || !std::isfinite(gt_mm))
    throw std::invalid_argument("abs_error: non-finite input");
  return std::fabs(pred_mm - gt_mm);
}

double success_rate(const std::vector<double>& errors_mm, double threshold_mm) {
  if (errors_mm.empty())
    throw std::invalid_argument("success_rate: empty error list");
  std::size_t hits = 0;
  for (double e : errors_mm)
    if (e < threshold_mm) ++hits;  // strictly below the threshold
  return static_cast<double>(hits) / static_cast<double>(errors_mm.size());
}

namespace {

double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.size() == 1) return sorted[0];
  double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  std::size_t lo = static_cast<std::size_t>(std::floor(h));
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - lo) * (sorted[hi] - sorted[lo]);
}

}  // namespace

BoxplotStats boxplot_stats(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("boxplot_stats: empty input");
  std::sort(values.begin(), values.end());
  BoxplotStats b;
  b.q1 = quantile_sorted(values, 0.25);
  b.median = quantile_sorted(values, 0.5);
  b.q3 = quantile_sorted(values, 0.75);
  double iqr = b.q3 - b.q1;
  double lo_fence = b.q1 - 1.5 * iqr, hi_fence = b.q3 + 1.5 * iqr;
  b.whisker_lo = b.q3;
  b.whisker_hi = b.q1;
  for (double v : values) {
    if (v >= lo_fence && v <= hi_fence) {
      b.whisker_lo = std::min(b.whisker_lo, v);
      b.whisker_hi = std::max(b.whisker_hi, v);
    } else {
      b.outliers.push_back(v);
    }
  }
  return b;
}

EvalRecord make_record(const std::string& config_id, std::vector<double> errors) {
  if (errors.empty()) throw std::invalid_argument("make_record: empty error list");
  EvalRecord r;
  r.config_id = config_id;
  r.n = static_cast<int>(errors.size());
  double sum = 0.0;
  for (double e : errors) sum += e;
  r.mean_mm = sum / r.n;
  double sq = 0.0;
  for (double e : errors) sq += (e - r.mean_mm) * (e - r.mean_mm);
  r.std_mm = std::sqrt(sq / r.n);
  r.success = success_rate(errors);
  r.box = boxplot_stats(errors);
  r.errors = std::move(errors);
  return r;
}

std::string EvalReport::to_json_text() const {
  nlohmann::ordered_json j;
  j["dataset_fingerprint"] = dataset_fingerprint;
  j["seed"] = seed;
  j["std_convention"] = "population";
  nlohmann::ordered_json recs = nlohmann::ordered_json::array();
  for (const auto& r : records) {
    nlohmann::ordered_json rj;
    rj["config"] = r.config_id;
    rj["n"] = r.n;
    rj["mean_mm"] = r.mean_mm;
    rj["std_mm"] = r.std_mm;
    rj["success_rate"] = r.success;
    rj["boxplot"] = {{"q1", r.box.q1},
                     {"median", r.box.median},
                     {"q3", r.box.q3},
                     {"whisker_lo", r.box.whisker_lo},
                     {"whisker_hi", r.box.whisker_hi},
                     {"outliers", r.box.outliers}};
    recs.push_back(std::move(rj));
  }
  j["records"] = std::move(recs);
  return j.dump(2) + "\n";
}

EvalReport EvalReport::from_json_text(const std::string& text) {
  nlohmann::ordered_json j = nlohmann::ordered_json::parse(text);
  EvalReport rep;
  rep.dataset_fingerprint = j.at("dataset_fingerprint").get<std::string>();
  rep.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& rj : j.at("records")) {
    EvalRecord r;
    r.config_id = rj.at("config").get<std::string>();
    r.n = rj.at("n").get<int>();
    r.mean_mm = rj.at("mean_mm").get<double>();
    r.std_mm = rj.at("std_mm").get<double>();
    r.success = rj.at("success_rate").get<double>();
    const auto& bj = rj.at("boxplot");
    r.box.q1 = bj.at("q1").get<double>();
    r.box.median = bj.at("median").get<double>();
    r.box.q3 = bj.at("q3").get<double>();
    r.box.whisker_lo = bj.at("whisker_lo").get<double>();
    r.box.whisker_hi = bj.at("whisker_hi").get<double>();
    r.box.outliers = bj.at("outliers").get<std::vector<double>>();
    rep.records.push_back(std::move(r));
  }
  return rep;
}

void EvalReport::save(const std::string& path) const {
  write_text_file(path, to_json_text());
}

EvalReport EvalReport::load(const std::string& path) {
  return from_json_text(read_text_file(path));
}

void EvalReport::save_error_files(const std::string& dir) const {
  fs::create_directories(dir);
  char buf[64];
  for (const auto& r : records) {
    std::string name = r.config_id;
    std::replace(name.begin(), name.end(), ',', '_');
    std::ostringstream out;
    for (double e : r.errors) {
      std::snprintf(buf, sizeof(buf), "%.17g\n", e);
      out << buf;
    }
    write_text_file((fs::path(dir) / ("errors_" + name + ".txt")).string(),
                    out.str());
  }
}

std::vector<std::string> matrix_row_ids() {
  return {"real,cnn",          "real,cnn_vit",
          "combined,cnn,nost", "combined,cnn,st",
          "combined,cnn_vit,nost", "combined,cnn_vit,st",
          "sim,cnn,nost",      "sim,cnn,st",
          "sim,cnn_vit,nost",  "sim,cnn_vit,st"};
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::string row_task_key(const std::string& row_id) {
  auto parts = split(row_id, ',');
  if (parts.size() < 2) throw ConfigError("malformed row id: " + row_id);
  const std::string& data = parts[0];
  const std::string& model = parts[1];
  if (data == "real") return "real_" + model;
  if (data == "sim") return "sim_" + model;  // one model serves both ST flags
  if (data == "combined") {
    if (parts.size() != 3) throw ConfigError("malformed row id: " + row_id);
    return "combined_" + model + "_" + parts[2];
  }
  throw ConfigError("malformed row id: " + row_id);
}

bool row_uses_st(const std::string& row_id) {
  auto parts = split(row_id, ',');
  return parts.size() == 3 && parts[2] == "st";
}

std::vector<std::string> task_checkpoint_keys() {
  return {"real_cnn",          "real_cnn_vit",
          "combined_cnn_nost", "combined_cnn_st",
          "combined_cnn_vit_nost", "combined_cnn_vit_st",
          "sim_cnn",           "sim_cnn_vit"};
}

EvalReport run_matrix(const DatasetManifest& manifest, const std::string& data_root,
                      const MatrixCheckpoints& checkpoints, std::uint64_t seed,
                      const std::vector<std::string>& rows) {
  std::vector<std::string> row_ids = rows.empty() ? matrix_row_ids() : rows;
  auto known = matrix_row_ids();
  bool any_st = false;
  for (const auto& id : row_ids) {
    if (std::find(known.begin(), known.end(), id) == known.end())
      throw ConfigError("unknown evaluation row: " + id);
    std::string key = row_task_key(id);
    if (!checkpoints.task.count(key))
      throw ConfigError("missing checkpoint for " + key);
    if (!fs::exists(checkpoints.task.at(key)))
      throw ConfigError("checkpoint file not found: " + checkpoints.task.at(key));
    any_st = any_st || row_uses_st(id);
  }
  if (any_st && (checkpoints.st.empty() || !fs::exists(checkpoints.st)))
    throw ConfigError("style-transfer checkpoint required but not found");

  // Held-out test frames: real-domain renders plus labels.
  std::vector<USImage> test_images;
  std::vector<double> labels;
  for (int id : manifest.test_ids()) {
    for (const auto& f : manifest.trajectory(id).frames) {
      test_images.push_back(
          load_png((fs::path(data_root) / f.real_path).string(), Domain::kReal));
      labels.push_back(f.depth_mm);
    }
  }
  if (test_images.empty()) throw ConfigError("manifest has no test frames");

  std::vector<USImage> translated;
  if (any_st) {
    StyleTransferModel st = load_st_model(checkpoints.st);
    translated.reserve(test_images.size());
    for (const auto& img : test_images) translated.push_back(translate(st, img));
  }

  EvalReport report;
  report.seed = seed;
  report.dataset_fingerprint = [&] {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(manifest.to_json_text())));
    return std::string(buf);
  }();

  const int batch = 16;
  for (const auto& id : row_ids) {
    DepthModel model = load_depth_model(checkpoints.task.at(row_task_key(id)));
    const auto& images = row_uses_st(id) ? translated : test_images;
    std::vector<double> errors;
    errors.reserve(images.size());
    for (std::size_t start = 0; start < images.size(); start += batch) {
      std::size_t end = std::min(images.size(), start + batch);
      std::vector<USImage> chunk(images.begin() + start, images.begin() + end);
      auto preds = predict_batch(model, chunk);
      for (std::size_t i = 0; i < preds.size(); ++i)
        errors.push_back(abs_error(preds[i], labels[start + i]));
    }
    report.records.push_back(make_record(id, std::move(errors)));
  }
  return report;
}

std::string render_table(const EvalReport& report) {
  std::ostringstream out;
  char buf[192];
  out << "# teedepth evaluation report (std: population)\n";
  out << "# fingerprint " << report.dataset_fingerprint << " seed " << report.seed
      << "\n";
  std::snprintf(buf, sizeof(buf), "%-24s %6s %24s %24s %24s\n", "config", "n",
                "mean_mm", "std_mm", "success_rate");
  out << buf;
  for (const auto& r : report.records) {
    std::snprintf(buf, sizeof(buf), "%-24s %6d %24.17g %24.17g %24.17g\n",
                  r.config_id.c_str(), r.n, r.mean_mm, r.std_mm, r.success);
    out << buf;
  }
  return out.str();
}

EvalReport parse_table(const std::string& text) {
  std::istringstream in(text);
  EvalReport rep;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string config;
    ls >> config;
    if (config == "config") continue;  // header row
    EvalRecord r;
    r.config_id = config;
    if (!(ls >> r.n >> r.mean_mm >> r.std_mm >> r.success))
      throw std::runtime_error("malformed table line: " + line);
    rep.records.push_back(std::move(r));
  }
  return rep;
}

}  // namespace teedepth
