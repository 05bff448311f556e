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

#ifndef TEEDEPTH_PHANTOM_HPP
#define TEEDEPTH_PHANTOM_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "teedepth/geometry.hpp"
#include "teedepth/image.hpp"
#include "teedepth/manifest.hpp"

namespace teedepth {

/**
 * Procedural desk-scale cardiac phantom: a scalar field on a regular grid
 * containing a dark esophageal tube along a smooth monotonic-z curve and a
 * handful of ellipsoidal chambers of distinct intensity beside it.
 */
struct PhantomVolume {
  int nx = 128, ny = 128, nz = 128;
  double spacing_mm = 1.25;
  std::vector<float> values;  // (z, y, x) order, x fastest; all in [0, 1]
  Centerline centerline;
  std::uint64_t seed = 0;

  float at(int ix, int iy, int iz) const {
    return values[(static_cast<std::size_t>(iz) * ny + iy) * nx + ix];
  }

  /// Trilinear sample at a world position (mm); zero outside the grid.
  float sample(const Vec3& p) const;

  /// World-space extent of the grid.
  double extent_mm() const { return spacing_mm * (nx - 1); }

  bool contains(const Vec3& p, double margin_mm = 0.0) const;
};

/// Appearance-gap model between simulation-style and real-style renders.
struct ArtifactConfig {
  double speckle_strength = 0.55;     // Rayleigh speckle mixing weight
  double bright_line_prob = 0.5;      // chance of 1-3 additive bright arcs
  double bright_line_intensity = 0.35;
  double shadow_prob = 0.3;           // chance of one attenuating sector
  double shadow_width_deg = 24.0;
  double gamma_min = 0.6;             // per-frame tone distortion range
  double gamma_max = 1.6;

  void validate() const;

  /// All-off configuration: render_real degenerates to render_sim.
  static ArtifactConfig none();
};

/// Deterministic phantom for a seed.
PhantomVolume build_phantom(std::uint64_t seed);

/// Noise-free fan-masked slice through the volume at the probe pose.
USImage render_sim(const PhantomVolume& v, const ProbePose& pose);

/// Simulation render composed with speckle, bright arcs, shadow sector and a
/// gamma shift; deterministic for a fixed seed.
USImage render_real(const PhantomVolume& v, const ProbePose& pose,
                    const ArtifactConfig& cfg, std::uint64_t seed);

struct DatasetGenConfig {
  int n_traj = 14;
  int n_frames_total = 1891;
  int n_test_traj = 0;  // 0: scaled 4-of-14 default
  std::uint64_t seed = 0;
  ArtifactConfig artifacts;
};

/**
 * Writes trajectories of paired sim/real renders with depth labels under
 * out_dir (layout traj_<id>/{sim,real}/frame_<k>.png), plus manifest.json.
 * Returns the manifest. Fails before touching the filesystem on bad config.
 */
DatasetManifest generate_dataset(const std::string& out_dir,
                                 const DatasetGenConfig& cfg);

/// Probe pose used by the dataset generator at parameter z with the given
/// lateral offset (mm) and tilt (radians, about the seeded axis).
ProbePose probe_pose_at(const Centerline& c, double z, double lateral_x,
                        double lateral_y, const Vec3& tilt_axis,
                        double tilt_rad);

}  // namespace teedepth

#endif  // TEEDEPTH_PHANTOM_HPP
