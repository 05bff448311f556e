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

#include "teedepth/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "teedepth/common.hpp"

namespace teedepth {

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json centerline_to_json(const Centerline& c) {
  ordered_json j;
  j["spline_degree"] = c.spline_degree();
  j["poly_degree"] = c.poly_degree();
  j["knots"] = c.x_spline().knots();
  j["ctrl_x"] = c.x_spline().control_points();
  j["ctrl_y"] = c.y_spline().control_points();
  j["z_min"] = c.z_min();
  j["z_max"] = c.z_max();
  return j;
}

Centerline centerline_from_json(const ordered_json& j) {
  int degree = j.at("spline_degree").get<int>();
  auto knots = j.at("knots").get<std::vector<double>>();
  auto cx = j.at("ctrl_x").get<std::vector<double>>();
  auto cy = j.at("ctrl_y").get<std::vector<double>>();
  BSpline sx(degree, knots, cx);
  BSpline sy(degree, std::move(knots), cy);
  return Centerline(std::move(sx), std::move(sy), j.at("poly_degree").get<int>());
}

ordered_json frame_to_json(const FrameRecord& f) {
  ordered_json j;
  j["sim"] = f.sim_path;
  j["real"] = f.real_path;
  j["pose"] = {f.pose.position.x,    f.pose.position.y,    f.pose.position.z,
               f.pose.orientation.w, f.pose.orientation.x, f.pose.orientation.y,
               f.pose.orientation.z};
  j["depth_mm"] = f.depth_mm;
  return j;
}

FrameRecord frame_from_json(const ordered_json& j) {
  FrameRecord f;
  f.sim_path = j.at("sim").get<std::string>();
  f.real_path = j.at("real").get<std::string>();
  auto p = j.at("pose").get<std::vector<double>>();
  if (p.size() != 7) throw ConfigError("manifest frame pose must have 7 values");
  f.pose.position = {p[0], p[1], p[2]};
  f.pose.orientation = {p[3], p[4], p[5], p[6]};
  f.depth_mm = j.at("depth_mm").get<double>();
  return f;
}

}  // namespace

std::vector<int> DatasetManifest::train_ids() const {
  std::vector<int> ids;
  for (const auto& t : trajectories)
    if (t.split == "train") ids.push_back(t.id);
  return ids;
}

std::vector<int> DatasetManifest::test_ids() const {
  std::vector<int> ids;
  for (const auto& t : trajectories)
    if (t.split == "test") ids.push_back(t.id);
  return ids;
}

const TrajectoryRecord& DatasetManifest::trajectory(int id) const {
  for (const auto& t : trajectories)
    if (t.id == id) return t;
  throw ConfigError("manifest has no trajectory with id " + std::to_string(id));
}

std::size_t DatasetManifest::total_frames() const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.frames.size();
  return n;
}

std::string DatasetManifest::to_json_text() const {
  ordered_json j;
  j["format_version"] = format_version;
  j["phantom_seed"] = phantom_seed;
  j["centerline"] = centerline_to_json(centerline);
  ordered_json trajs = ordered_json::array();
  for (const auto& t : trajectories) {
    ordered_json tj;
    tj["id"] = t.id;
    tj["split"] = t.split;
    tj["seed"] = t.seed;
    ordered_json frames = ordered_json::array();
    for (const auto& f : t.frames) frames.push_back(frame_to_json(f));
    tj["frames"] = std::move(frames);
    trajs.push_back(std::move(tj));
  }
  j["trajectories"] = std::move(trajs);
  return j.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json_text(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  DatasetManifest m;
  m.format_version = j.at("format_version").get<int>();
  if (m.format_version != 1)
    throw ConfigError("unsupported manifest format_version");
  m.phantom_seed = j.at("phantom_seed").get<std::uint64_t>();
  m.centerline = centerline_from_json(j.at("centerline"));
  for (const auto& tj : j.at("trajectories")) {
    TrajectoryRecord t;
    t.id = tj.at("id").get<int>();
    t.split = tj.at("split").get<std::string>();
    t.seed = tj.at("seed").get<std::uint64_t>();
    for (const auto& fj : tj.at("frames")) t.frames.push_back(frame_from_json(fj));
    m.trajectories.push_back(std::move(t));
  }
  return m;
}

void DatasetManifest::save(const std::string& path) const {
  write_text_file(path, to_json_text());
}

DatasetManifest DatasetManifest::load(const std::string& path) {
  return from_json_text(read_text_file(path));
}

void DatasetManifest::validate(const std::string& root) const {
  std::set<int> seen;
  for (const auto& t : trajectories) {
    if (!seen.insert(t.id).second)
      throw ConfigError("duplicate trajectory id in manifest");
    if (t.split != "train" && t.split != "test")
      throw ConfigError("trajectory split must be 'train' or 'test'");
    if (t.frames.size() < 2)
      throw ConfigError("trajectory needs at least 2 frames");
    for (const auto& f : t.frames) {
      if (f.depth_mm < 0.0) throw ConfigError("negative depth in manifest");
      for (const std::string& rel : {f.sim_path, f.real_path}) {
        std::filesystem::path p = std::filesystem::path(root) / rel;
        if (!std::filesystem::exists(p))
          throw ConfigError("manifest references missing file: " + p.string());
      }
    }
  }
  if (train_ids().empty() || test_ids().empty())
    throw ConfigError("manifest must contain both train and test trajectories");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace teedepth
