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

#ifndef TEEDEPTH_GEOMETRY_HPP
#define TEEDEPTH_GEOMETRY_HPP

#include <cmath>
#include <vector>

#include "teedepth/bspline.hpp"

namespace teedepth {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const;
  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }
};

struct Quat {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
  Quat normalized() const;
  Quat operator*(const Quat& o) const;
  Vec3 rotate(const Vec3& v) const;
  static Quat from_axis_angle(const Vec3& axis, double angle_rad);
  /// Quaternion for the rotation matrix with the given orthonormal columns.
  static Quat from_basis(const Vec3& col_x, const Vec3& col_y, const Vec3& col_z);
};

/// Segmented 3D points along the esophagus, monotonic in z.
struct PointSet3D {
  std::vector<Vec3> points;

  /// Throws std::invalid_argument on too few/non-finite points and
  /// FitError when z values coincide.
  void validate() const;
};

/// Probe position and orientation in the world frame.
struct ProbePose {
  Vec3 position;
  Quat orientation;

  void validate() const;
};

/// Depth along the centerline plus the projected z it was measured at.
struct DepthLabel {
  double depth_mm = 0.0;
  double z_projected_mm = 0.0;
};

/**
 * Esophagus centerline e(z) = (x(z), y(z), z) on [z_min, z_max].
 *
 * x(z) and y(z) are cubic B-splines; the z component is the parameter itself,
 * so the curve is a graph over z and projections are unique for monotonic
 * anatomy.
 */
class Centerline {
 public:
  Centerline() = default;
  Centerline(BSpline x_of_z, BSpline y_of_z, int poly_degree);

  Vec3 point_at(double z) const;
  Vec3 derivative_at(double z) const;  // e'(z); z component is exactly 1

  double z_min() const { return x_.t_min(); }
  double z_max() const { return x_.t_max(); }
  int poly_degree() const { return poly_degree_; }
  int spline_degree() const { return x_.degree(); }

  const BSpline& x_spline() const { return x_; }
  const BSpline& y_spline() const { return y_; }

 private:
  BSpline x_, y_;    // value splines
  BSpline dx_, dy_;  // cached derivative splines
  int poly_degree_ = 0;
};

/**
 * Fits the centerline: least-squares polynomial in z for x and y, then a
 * clamped cubic B-spline through the polynomial sampled at <= 1 mm spacing.
 * `smoothing` is the largest acceptable RMS residual (mm) of the fit against
 * the input points; a larger residual raises FitError.
 */
Centerline fit_centerline(const PointSet3D& points, int poly_degree = 3,
                          double smoothing = 1.0);

/**
 * Centerline that interpolates the given samples exactly (sorted by z).
 * End slopes (dx/dz, dy/dz) may be given; otherwise they are estimated by
 * one-sided differences. Used for curves that are not polynomial graphs.
 */
Centerline interpolate_centerline(const std::vector<Vec3>& samples);
Centerline interpolate_centerline(const std::vector<Vec3>& samples,
                                  double dx_begin, double dy_begin,
                                  double dx_end, double dy_end);

/// Arc length of the centerline between z_a <= z_b via adaptive
/// composite 16-point Gauss-Legendre quadrature.
double arc_length(const Centerline& c, double z_a, double z_b);

/// z in [z_min, z_max] minimizing the Euclidean distance from p to e(z).
double project_to_centerline(const Centerline& c, const Vec3& p);

/// Probe depth: arc length from the curve start to the projected position.
DepthLabel depth_of(const Centerline& c, const ProbePose& pose);

}  // namespace teedepth

#endif  // TEEDEPTH_GEOMETRY_HPP
