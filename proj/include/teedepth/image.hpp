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

#ifndef TEEDEPTH_IMAGE_HPP
#define TEEDEPTH_IMAGE_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace teedepth {

/// Which appearance domain an image belongs to.
enum class Domain : std::uint8_t { kSim, kReal, kTranslated };

const char* domain_name(Domain d);
Domain domain_from_name(const std::string& name);

/**
 * Sector ("fan") geometry of a B-mode image. The apex sits at the transducer
 * contact point; only pixels inside the sector carry signal.
 */
struct FanGeometry {
  float apex_row = 0.0f;
  float apex_col = 63.5f;
  float radius_px = 127.0f;
  float half_angle_deg = 35.0f;

  bool contains(int row, int col) const {
    float dy = static_cast<float>(row) - apex_row;
    float dx = static_cast<float>(col) - apex_col;
    if (dy < 0.0f) return false;
    float r2 = dx * dx + dy * dy;
    if (r2 > radius_px * radius_px) return false;
    float ang = std::atan2(std::fabs(dx), dy) * 57.29577951308232f;
    return ang <= half_angle_deg;
  }
};

/// 8-bit grayscale B-mode frame. Pixels outside the fan sector are zero.
struct USImage {
  int width = 128;
  int height = 128;
  std::vector<std::uint8_t> pixels;  // row-major, height * width
  Domain domain = Domain::kSim;
  FanGeometry fan;

  USImage() : pixels(static_cast<std::size_t>(width * height), 0) {}
  USImage(int w, int h, Domain d)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, 0), domain(d) {}

  std::uint8_t at(int row, int col) const {
    return pixels[static_cast<std::size_t>(row) * width + col];
  }
  std::uint8_t& at(int row, int col) {
    return pixels[static_cast<std::size_t>(row) * width + col];
  }

  /// Zeroes every pixel outside the fan sector.
  void apply_fan_mask();

  /// True if all pixels outside the fan sector are exactly zero.
  bool fan_mask_clean() const;

  /// Pixels as floats in [0, 1].
  std::vector<float> to_float() const;

  /// Quantizes [0, 1] floats to 8-bit; values are clamped first.
  static USImage from_float(const std::vector<float>& values, int w, int h,
                            Domain d, const FanGeometry& fan);
};

/// Writes an 8-bit grayscale PNG. Output bytes are deterministic.
void save_png(const USImage& img, const std::string& path);

/// Reads an 8-bit grayscale PNG written by save_png.
USImage load_png(const std::string& path, Domain domain);

}  // namespace teedepth

#endif  // TEEDEPTH_IMAGE_HPP
