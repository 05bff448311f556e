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

#ifndef TEEDEPTH_MANIFEST_HPP
#define TEEDEPTH_MANIFEST_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "teedepth/geometry.hpp"

namespace teedepth {

/// One acquisition frame: paired renders plus pose and depth label.
struct FrameRecord {
  std::string sim_path;   // relative to the manifest directory
  std::string real_path;  // relative to the manifest directory
  ProbePose pose;
  double depth_mm = 0.0;
};

struct TrajectoryRecord {
  int id = 0;
  std::string split;  // "train" or "test"
  std::uint64_t seed = 0;
  std::vector<FrameRecord> frames;
};

/**
 * Dataset manifest: schema version 1.
 *
 * A UTF-8 JSON document. Floating-point values are emitted with
 * shortest-round-trip formatting, so save/load is exact.
 */
struct DatasetManifest {
  int format_version = 1;
  std::uint64_t phantom_seed = 0;
  Centerline centerline;
  std::vector<TrajectoryRecord> trajectories;

  std::vector<int> train_ids() const;
  std::vector<int> test_ids() const;
  const TrajectoryRecord& trajectory(int id) const;
  std::size_t total_frames() const;

  std::string to_json_text() const;
  static DatasetManifest from_json_text(const std::string& text);

  void save(const std::string& path) const;
  static DatasetManifest load(const std::string& path);

  /**
   * Structural validation plus file-existence checks relative to `root`
   * (the manifest's directory). Throws ConfigError on violations.
   */
  void validate(const std::string& root) const;
};

/// Reads a whole file; throws std::runtime_error if it cannot be opened.
std::string read_text_file(const std::string& path);

/// Writes a whole file atomically enough for our purposes (truncate+write).
void write_text_file(const std::string& path, const std::string& text);

}  // namespace teedepth

#endif  // TEEDEPTH_MANIFEST_HPP
