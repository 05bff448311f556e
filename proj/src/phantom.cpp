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

#include "teedepth/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "teedepth/common.hpp"
#include "teedepth/rng.hpp"

namespace teedepth {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Smooth lattice value noise: trilinear interpolation of hashed lattice
// values at the given cell size (voxels).
float lattice_noise(std::uint64_t seed, double x, double y, double z,
                    double cell) {
  double fx = x / cell, fy = y / cell, fz = z / cell;
  int ix = static_cast<int>(std::floor(fx));
  int iy = static_cast<int>(std::floor(fy));
  int iz = static_cast<int>(std::floor(fz));
  double tx = fx - ix, ty = fy - iy, tz = fz - iz;
  auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
  tx = smooth(tx);
  ty = smooth(ty);
  tz = smooth(tz);
  auto corner = [&](int dx, int dy, int dz) {
    std::uint64_t h = mix_seed(seed, (static_cast<std::uint64_t>(ix + dx) << 42) ^
                                         (static_cast<std::uint64_t>(iy + dy) << 21) ^
                                         static_cast<std::uint64_t>(iz + dz));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  };
  double c00 = corner(0, 0, 0) + tx * (corner(1, 0, 0) - corner(0, 0, 0));
  double c10 = corner(0, 1, 0) + tx * (corner(1, 1, 0) - corner(0, 1, 0));
  double c01 = corner(0, 0, 1) + tx * (corner(1, 0, 1) - corner(0, 0, 1));
  double c11 = corner(0, 1, 1) + tx * (corner(1, 1, 1) - corner(0, 1, 1));
  double c0 = c00 + ty * (c10 - c00);
  double c1 = c01 + ty * (c11 - c01);
  return static_cast<float>(c0 + tz * (c1 - c0));
}

struct Chamber {
  Vec3 center;
  Vec3 semi_axes;
  double intensity;
};

}  // namespace

float PhantomVolume::sample(const Vec3& p) const {
  double gx = p.x / spacing_mm, gy = p.y / spacing_mm, gz = p.z / spacing_mm;
  int ix = static_cast<int>(std::floor(gx));
  int iy = static_cast<int>(std::floor(gy));
  int iz = static_cast<int>(std::floor(gz));
  if (ix < 0 || iy < 0 || iz < 0 || ix >= nx - 1 || iy >= ny - 1 || iz >= nz - 1)
    return 0.0f;
  double tx = gx - ix, ty = gy - iy, tz = gz - iz;
  auto v = [&](int dx, int dy, int dz) {
    return static_cast<double>(at(ix + dx, iy + dy, iz + dz));
  };
  double c00 = v(0, 0, 0) + tx * (v(1, 0, 0) - v(0, 0, 0));
  double c10 = v(0, 1, 0) + tx * (v(1, 1, 0) - v(0, 1, 0));
  double c01 = v(0, 0, 1) + tx * (v(1, 0, 1) - v(0, 0, 1));
  double c11 = v(0, 1, 1) + tx * (v(1, 1, 1) - v(0, 1, 1));
  double c0 = c00 + ty * (c10 - c00);
  double c1 = c01 + ty * (c11 - c01);
  return static_cast<float>(c0 + tz * (c1 - c0));
}

bool PhantomVolume::contains(const Vec3& p, double margin_mm) const {
  double hi = extent_mm() - margin_mm;
  return p.x >= margin_mm && p.y >= margin_mm && p.z >= margin_mm && p.x <= hi &&
         p.y <= hi && p.z <= hi;
}

void ArtifactConfig::validate() const {
  auto prob_ok = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob_ok(bright_line_prob) || !prob_ok(shadow_prob))
    throw std::invalid_argument("ArtifactConfig probabilities must be in [0,1]");
  if (speckle_strength < 0.0 || bright_line_intensity < 0.0 ||
      shadow_width_deg < 0.0)
    throw std::invalid_argument("ArtifactConfig strengths must be >= 0");
  if (gamma_min <= 0.0 || gamma_max < gamma_min)
    throw std::invalid_argument("ArtifactConfig gamma range is invalid");
}

ArtifactConfig ArtifactConfig::none() {
  ArtifactConfig c;
  c.speckle_strength = 0.0;
  c.bright_line_prob = 0.0;
  c.bright_line_intensity = 0.0;
  c.shadow_prob = 0.0;
  c.gamma_min = 1.0;
  c.gamma_max = 1.0;
  return c;
}

PhantomVolume build_phantom(std::uint64_t seed) {
  PhantomVolume v;
  v.seed = seed;
  v.values.assign(static_cast<std::size_t>(v.nx) * v.ny * v.nz, 0.0f);

  Rng rng(mix_seed(seed, 0xC0FFEE));
  const double extent = v.extent_mm();
  const double cx = extent / 2.0, cy = extent / 2.0;

  // Esophageal axis: a gentle cubic in z, fitted exactly by the geometry
  // pipeline so labels and rendering share one representation.
  const double z_lo = 15.0, z_hi = extent - 15.0;
  double ax1 = rng.uniform(-0.25, 0.25), ax2 = rng.uniform(-0.004, 0.004);
  double ax3 = rng.uniform(-3e-5, 3e-5);
  double ay1 = rng.uniform(-0.25, 0.25), ay2 = rng.uniform(-0.004, 0.004);
  double ay3 = rng.uniform(-3e-5, 3e-5);
  auto axis_x = [&](double z) {
    double u = z - (z_lo + z_hi) / 2.0;
    return cx + ax1 * u + ax2 * u * u / 10.0 + ax3 * u * u * u;
  };
  auto axis_y = [&](double z) {
    double u = z - (z_lo + z_hi) / 2.0;
    return cy + ay1 * u + ay2 * u * u / 10.0 + ay3 * u * u * u;
  };
  PointSet3D axis_points;
  for (int i = 0; i <= 16; ++i) {
    double z = z_lo + (z_hi - z_lo) * i / 16.0;
    axis_points.points.push_back({axis_x(z), axis_y(z), z});
  }
  v.centerline = fit_centerline(axis_points, 3, 1e-6);

  // Chambers of distinct intensity near the tube.
  int n_chambers = rng.uniform_int(3, 5);
  const double intensities[5] = {0.12, 0.32, 0.55, 0.75, 0.95};
  std::vector<int> order{0, 1, 2, 3, 4};
  rng.shuffle(order);
  std::vector<Chamber> chambers;
  for (int i = 0; i < n_chambers; ++i) {
    double z = z_lo + (z_hi - z_lo) * (i + 0.5 + rng.uniform(-0.2, 0.2)) /
                          n_chambers;
    double ang = rng.uniform(0.0, 2.0 * kPi);
    double dist = rng.uniform(14.0, 38.0);
    Chamber ch;
    ch.center = {axis_x(z) + dist * std::cos(ang), axis_y(z) + dist * std::sin(ang),
                 z};
    ch.center.x = std::clamp(ch.center.x, 25.0, extent - 25.0);
    ch.center.y = std::clamp(ch.center.y, 25.0, extent - 25.0);
    ch.semi_axes = {rng.uniform(10.0, 22.0), rng.uniform(10.0, 22.0),
                    rng.uniform(10.0, 22.0)};
    ch.intensity = intensities[order[i]];
    chambers.push_back(ch);
  }

  std::uint64_t noise_seed = rng.next_u64();
  const double tube_lumen = 3.5, tube_wall = 5.5;

#pragma omp parallel for schedule(static)
  for (int iz = 0; iz < v.nz; ++iz) {
    for (int iy = 0; iy < v.ny; ++iy) {
      for (int ix = 0; ix < v.nx; ++ix) {
        Vec3 p{ix * v.spacing_mm, iy * v.spacing_mm, iz * v.spacing_mm};
        double val = 0.38 + 0.10 * (lattice_noise(noise_seed, ix, iy, iz, 9.0) - 0.5) +
                     0.06 * (lattice_noise(noise_seed ^ 0x5555, ix, iy, iz, 3.0) - 0.5);
        for (const Chamber& ch : chambers) {
          double rx = (p.x - ch.center.x) / ch.semi_axes.x;
          double ry = (p.y - ch.center.y) / ch.semi_axes.y;
          double rz = (p.z - ch.center.z) / ch.semi_axes.z;
          double rho = std::sqrt(rx * rx + ry * ry + rz * rz);
          double w = 1.0 / (1.0 + std::exp((rho - 1.0) * 14.0));
          val = val * (1.0 - w) + ch.intensity * w;
        }
        if (p.z >= z_lo - 5.0 && p.z <= z_hi + 5.0) {
          double zc = std::clamp(p.z, z_lo, z_hi);
          double dx = p.x - axis_x(zc), dy = p.y - axis_y(zc);
          double d = std::sqrt(dx * dx + dy * dy);
          if (d < tube_wall + 1.5) {
            double wall = 1.0 / (1.0 + std::exp((d - tube_wall) * 6.0));
            val = val * (1.0 - wall) + 0.88 * wall;  // bright wall
            double lumen = 1.0 / (1.0 + std::exp((d - tube_lumen) * 6.0));
            val = val * (1.0 - lumen) + 0.05 * lumen;  // dark lumen
          }
        }
        v.values[(static_cast<std::size_t>(iz) * v.ny + iy) * v.nx + ix] =
            static_cast<float>(std::clamp(val, 0.0, 1.0));
      }
    }
  }
  return v;
}

namespace {

// Shared slice sampler: float image in [0, 1], fan not yet applied.
std::vector<float> render_plane(const PhantomVolume& v, const ProbePose& pose,
                                const FanGeometry& fan, int w, int h) {
  pose.validate();
  if (!v.contains(pose.position))
    throw std::domain_error("render: probe pose outside the volume");

  const double px_mm = 0.8;  // pixel pitch: ~100 mm penetration over 128 rows
  Vec3 lateral = pose.orientation.rotate({1.0, 0.0, 0.0});
  Vec3 beam = pose.orientation.rotate({0.0, 0.0, 1.0});

  std::vector<float> img(static_cast<std::size_t>(w) * h, 0.0f);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!fan.contains(r, c)) continue;
      double du = (c - (w - 1) / 2.0) * px_mm;
      double dv = r * px_mm;
      Vec3 q = pose.position + lateral * du + beam * dv;
      double raw = v.sample(q);
      // Smooth monotone tone map lifts soft tissue contrast.
      img[static_cast<std::size_t>(r) * w + c] =
          static_cast<float>(std::pow(std::clamp(raw, 0.0, 1.0), 0.85));
    }
  }
  return img;
}

}  // namespace

USImage render_sim(const PhantomVolume& v, const ProbePose& pose) {
  FanGeometry fan;
  std::vector<float> img = render_plane(v, pose, fan, 128, 128);
  USImage out = USImage::from_float(img, 128, 128, Domain::kSim, fan);
  out.apply_fan_mask();
  return out;
}

USImage render_real(const PhantomVolume& v, const ProbePose& pose,
                    const ArtifactConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  FanGeometry fan;
  const int w = 128, h = 128;
  std::vector<float> img = render_plane(v, pose, fan, w, h);
  Rng rng(mix_seed(seed, 0xA27Au));

  // (i) multiplicative Rayleigh speckle, unit-mean, blended by strength.
  const double inv_mean = 1.0 / std::sqrt(kPi / 2.0);
  for (auto& px : img) {
    double unit = rng.rayleigh(1.0) * inv_mean;
    px = static_cast<float>(px * (1.0 + cfg.speckle_strength * (unit - 1.0)));
  }

  // (ii) additive bright arcs concentric with the fan apex.
  if (rng.uniform() < cfg.bright_line_prob) {
    int n_arcs = rng.uniform_int(1, 3);
    for (int a = 0; a < n_arcs; ++a) {
      double rho0 = rng.uniform(0.25, 0.85) * fan.radius_px;
      double theta0 = rng.uniform(-fan.half_angle_deg, fan.half_angle_deg);
      double theta_hw = rng.uniform(6.0, 18.0);
      double sigma = rng.uniform(1.0, 2.5);
      double gain = cfg.bright_line_intensity * rng.uniform(0.7, 1.3);
      for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
          double dy = r - fan.apex_row, dx = c - fan.apex_col;
          double rho = std::sqrt(dx * dx + dy * dy);
          double theta = std::atan2(dx, dy) * 180.0 / kPi;
          double dth = std::fabs(theta - theta0);
          if (dth > theta_hw) continue;
          double edge = std::min(1.0, (theta_hw - dth) / 3.0);
          double radial = std::exp(-0.5 * (rho - rho0) * (rho - rho0) / (sigma * sigma));
          img[static_cast<std::size_t>(r) * w + c] +=
              static_cast<float>(gain * radial * edge);
        }
      }
    }
  }

  // (iii) one attenuating angular sector (acoustic shadow).
  if (rng.uniform() < cfg.shadow_prob) {
    double hw = cfg.shadow_width_deg / 2.0;
    double theta0 = rng.uniform(-fan.half_angle_deg + hw, fan.half_angle_deg - hw);
    double factor = rng.uniform(0.05, 0.18);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        double dy = r - fan.apex_row, dx = c - fan.apex_col;
        double theta = std::atan2(dx, dy) * 180.0 / kPi;
        double dth = std::fabs(theta - theta0);
        if (dth > hw) continue;
        double edge = std::min(1.0, (hw - dth) / 1.5);
        double f = 1.0 * (1.0 - edge) + factor * edge;
        img[static_cast<std::size_t>(r) * w + c] *= static_cast<float>(f);
      }
    }
  }

  // (iv) per-frame gamma shift.
  double gamma = rng.uniform(cfg.gamma_min, cfg.gamma_max);
  if (gamma != 1.0)
    for (auto& px : img)
      px = std::pow(std::max(px, 0.0f), static_cast<float>(gamma));

  USImage out = USImage::from_float(img, w, h, Domain::kReal, fan);
  out.apply_fan_mask();  // reapplied last
  return out;
}

ProbePose probe_pose_at(const Centerline& c, double z, double lateral_x,
                        double lateral_y, const Vec3& tilt_axis,
                        double tilt_rad) {
  Vec3 tangent = c.derivative_at(z).normalized();
  // Beam points along world +x, squared up against the local tangent.
  Vec3 beam{1.0, 0.0, 0.0};
  beam = (beam - tangent * beam.dot(tangent)).normalized();
  Vec3 lateral = tangent;
  Vec3 elevation = beam.cross(lateral);
  Quat base = Quat::from_basis(lateral, elevation, beam);
  Quat q = base;
  if (tilt_rad != 0.0) q = (Quat::from_axis_angle(tilt_axis, tilt_rad) * base);
  ProbePose pose;
  pose.position = c.point_at(z) + Vec3{lateral_x, lateral_y, 0.0};
  pose.orientation = q.normalized();
  return pose;
}

DatasetManifest generate_dataset(const std::string& out_dir,
                                 const DatasetGenConfig& cfg) {
  if (cfg.n_traj < 2) throw std::invalid_argument("need at least 2 trajectories");
  if (cfg.n_frames_total < 2 * cfg.n_traj)
    throw std::invalid_argument("need at least 2 frames per trajectory");
  cfg.artifacts.validate();
  int n_test = cfg.n_test_traj;
  if (n_test <= 0)
    n_test = std::clamp(
        static_cast<int>(std::lround(cfg.n_traj * 4.0 / 14.0)), 1, cfg.n_traj - 1);
  if (n_test >= cfg.n_traj)
    throw std::invalid_argument("test split must leave at least 1 train trajectory");

  PhantomVolume volume = build_phantom(cfg.seed);
  const Centerline& cl = volume.centerline;

  // Frame counts per trajectory: as even as possible, summing exactly.
  std::vector<int> frames_per(cfg.n_traj, cfg.n_frames_total / cfg.n_traj);
  for (int i = 0; i < cfg.n_frames_total % cfg.n_traj; ++i) frames_per[i] += 1;

  // Seeded split: which trajectories are held out for testing.
  Rng split_rng(mix_seed(cfg.seed, 0x5711));
  std::vector<int> ids(cfg.n_traj);
  for (int i = 0; i < cfg.n_traj; ++i) ids[i] = i;
  split_rng.shuffle(ids);
  std::vector<bool> is_test(cfg.n_traj, false);
  for (int i = 0; i < n_test; ++i) is_test[ids[i]] = true;

  std::filesystem::create_directories(out_dir);

  DatasetManifest manifest;
  manifest.phantom_seed = cfg.seed;
  manifest.centerline = cl;

  char name[64];
  for (int t = 0; t < cfg.n_traj; ++t) {
    TrajectoryRecord rec;
    rec.id = t;
    rec.split = is_test[t] ? "test" : "train";
    rec.seed = mix_seed(cfg.seed, 0x7101 + static_cast<std::uint64_t>(t));
    Rng rng(rec.seed);

    std::snprintf(name, sizeof(name), "traj_%03d", t);
    std::filesystem::path traj_dir = std::filesystem::path(out_dir) / name;
    std::filesystem::create_directories(traj_dir / "sim");
    std::filesystem::create_directories(traj_dir / "real");

    const int nf = frames_per[t];
    double z_start = cl.z_min() + rng.uniform(0.0, 2.0);
    double z_end = cl.z_max() - rng.uniform(0.0, 2.0);
    for (int k = 0; k < nf; ++k) {
      double z = z_start + (z_end - z_start) * k / std::max(1, nf - 1) +
                 rng.uniform(-0.8, 0.8);
      z = std::clamp(z, cl.z_min(), cl.z_max());
      double ang = rng.uniform(0.0, 2.0 * kPi);
      double mag = rng.uniform(0.0, 2.0);  // lateral jitter <= 2 mm
      Vec3 tilt_axis{rng.normal(), rng.normal(), rng.normal()};
      if (tilt_axis.norm() < 1e-9) tilt_axis = {0.0, 0.0, 1.0};
      double tilt = rng.uniform(0.0, 5.0 * kPi / 180.0);  // tilt <= 5 deg
      ProbePose pose = probe_pose_at(cl, z, mag * std::cos(ang),
                                     mag * std::sin(ang), tilt_axis, tilt);

      USImage sim = render_sim(volume, pose);
      USImage real = render_real(volume, pose, cfg.artifacts,
                                 mix_seed(rec.seed, 0xF00D + static_cast<std::uint64_t>(k)));

      char frame[32];
      std::snprintf(frame, sizeof(frame), "frame_%04d.png", k);
      std::string sim_rel = std::string(name) + "/sim/" + frame;
      std::string real_rel = std::string(name) + "/real/" + frame;
      save_png(sim, (std::filesystem::path(out_dir) / sim_rel).string());
      save_png(real, (std::filesystem::path(out_dir) / real_rel).string());

      FrameRecord fr;
      fr.sim_path = sim_rel;
      fr.real_path = real_rel;
      fr.pose = pose;
      fr.depth_mm = depth_of(cl, pose).depth_mm;
      rec.frames.push_back(std::move(fr));
    }
    manifest.trajectories.push_back(std::move(rec));
  }

  manifest.save((std::filesystem::path(out_dir) / "manifest.json").string());
  return manifest;
}

}  // namespace teedepth
