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

#include "teedepth/geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "teedepth/common.hpp"

namespace teedepth {

Vec3 Vec3::normalized() const {
  double n = norm();
  if (n == 0.0) throw std::invalid_argument("cannot normalize zero vector");
  return {x / n, y / n, z / n};
}

Quat Quat::normalized() const {
  double n = norm();
  if (n == 0.0) throw std::invalid_argument("cannot normalize zero quaternion");
  return {w / n, x / n, y / n, z / n};
}

Quat Quat::operator*(const Quat& o) const {
  return {w * o.w - x * o.x - y * o.y - z * o.z,
          w * o.x + x * o.w + y * o.z - z * o.y,
          w * o.y - x * o.z + y * o.w + z * o.x,
          w * o.z + x * o.y - y * o.x + z * o.w};
}

Vec3 Quat::rotate(const Vec3& v) const {
  // v' = v + 2 q_vec x (q_vec x v + w v)
  Vec3 q{x, y, z};
  Vec3 t = q.cross(v) * 2.0;
  return v + t * w + q.cross(t);
}

Quat Quat::from_axis_angle(const Vec3& axis, double angle_rad) {
  Vec3 a = axis.normalized();
  double s = std::sin(angle_rad / 2.0);
  return {std::cos(angle_rad / 2.0), a.x * s, a.y * s, a.z * s};
}

Quat Quat::from_basis(const Vec3& cx, const Vec3& cy, const Vec3& cz) {
  // Shepperd's method on the 3x3 rotation matrix with columns cx, cy, cz.
  double m00 = cx.x, m01 = cy.x, m02 = cz.x;
  double m10 = cx.y, m11 = cy.y, m12 = cz.y;
  double m20 = cx.z, m21 = cy.z, m22 = cz.z;
  double tr = m00 + m11 + m22;
  Quat q;
  if (tr > 0.0) {
    double s = std::sqrt(tr + 1.0) * 2.0;
    q = {0.25 * s, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s};
  } else if (m00 > m11 && m00 > m22) {
    double s = std::sqrt(1.0 + m00 - m11 - m22) * 2.0;
    q = {(m21 - m12) / s, 0.25 * s, (m01 + m10) / s, (m02 + m20) / s};
  } else if (m11 > m22) {
    double s = std::sqrt(1.0 + m11 - m00 - m22) * 2.0;
    q = {(m02 - m20) / s, (m01 + m10) / s, 0.25 * s, (m12 + m21) / s};
  } else {
    double s = std::sqrt(1.0 + m22 - m00 - m11) * 2.0;
    q = {(m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, 0.25 * s};
  }
  return q.normalized();
}

void PointSet3D::validate() const {
  if (points.size() < 8)
    throw std::invalid_argument("PointSet3D requires at least 8 points");
  for (const Vec3& p : points)
    if (!p.finite())
      throw std::invalid_argument("PointSet3D contains non-finite coordinates");
  std::vector<double> zs;
  zs.reserve(points.size());
  for (const Vec3& p : points) zs.push_back(p.z);
  std::sort(zs.begin(), zs.end());
  for (std::size_t i = 1; i < zs.size(); ++i)
    if (zs[i] == zs[i - 1])
      throw FitError("PointSet3D has coincident z values; fit is degenerate");
}

void ProbePose::validate() const {
  if (!position.finite())
    throw std::invalid_argument("ProbePose position must be finite");
  if (std::fabs(orientation.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("ProbePose orientation must be a unit quaternion");
}

Centerline::Centerline(BSpline x_of_z, BSpline y_of_z, int poly_degree)
    : x_(std::move(x_of_z)),
      y_(std::move(y_of_z)),
      dx_(x_.derivative()),
      dy_(y_.derivative()),
      poly_degree_(poly_degree) {}

Vec3 Centerline::point_at(double z) const { return {x_(z), y_(z), z}; }

Vec3 Centerline::derivative_at(double z) const { return {dx_(z), dy_(z), 1.0}; }

namespace {

// Evaluates the fitted polynomial (Chebyshev-style normalized argument).
double poly_eval(const Eigen::VectorXd& coeff, double u) {
  double v = 0.0;
  for (int i = static_cast<int>(coeff.size()) - 1; i >= 0; --i)
    v = v * u + coeff(i);
  return v;
}

double poly_deriv(const Eigen::VectorXd& coeff, double u) {
  double v = 0.0;
  for (int i = static_cast<int>(coeff.size()) - 1; i >= 1; --i)
    v = v * u + coeff(i) * i;
  return v;
}

Centerline spline_through(const std::vector<double>& z,
                          const std::vector<double>& xs,
                          const std::vector<double>& ys, double dx0, double dy0,
                          double dx1, double dy1, int poly_degree) {
  BSpline sx = BSpline::interpolate_cubic(z, xs, dx0, dx1);
  BSpline sy = BSpline::interpolate_cubic(z, ys, dy0, dy1);
  return Centerline(std::move(sx), std::move(sy), poly_degree);
}

}  // namespace

Centerline fit_centerline(const PointSet3D& points, int poly_degree,
                          double smoothing) {
  if (poly_degree < 2 || poly_degree > 6)
    throw std::invalid_argument("poly_degree must be in [2, 6]");
  points.validate();

  std::vector<Vec3> pts = points.points;
  std::sort(pts.begin(), pts.end(),
            [](const Vec3& a, const Vec3& b) { return a.z < b.z; });
  const double z_lo = pts.front().z, z_hi = pts.back().z;
  const double range = z_hi - z_lo;

  // Least squares on u in [-1, 1] keeps the Vandermonde well conditioned.
  const int n = static_cast<int>(pts.size());
  Eigen::MatrixXd vand(n, poly_degree + 1);
  Eigen::MatrixXd rhs(n, 2);
  for (int i = 0; i < n; ++i) {
    double u = 2.0 * (pts[i].z - z_lo) / range - 1.0;
    double pw = 1.0;
    for (int j = 0; j <= poly_degree; ++j) {
      vand(i, j) = pw;
      pw *= u;
    }
    rhs(i, 0) = pts[i].x;
    rhs(i, 1) = pts[i].y;
  }
  Eigen::MatrixXd coeff = vand.colPivHouseholderQr().solve(rhs);
  if (!coeff.allFinite()) throw FitError("polynomial fit is singular");

  Eigen::MatrixXd resid = vand * coeff - rhs;
  double rms_x = std::sqrt(resid.col(0).squaredNorm() / n);
  double rms_y = std::sqrt(resid.col(1).squaredNorm() / n);
  if (rms_x > smoothing || rms_y > smoothing)
    throw FitError("fit residual exceeds smoothing tolerance");

  // Sample the polynomial at <= 0.5 mm spacing for the spline stage.
  int n_seg = std::max(3, static_cast<int>(std::ceil(range * 2.0)));
  double h = range / n_seg;
  std::vector<double> z(n_seg + 1), xs(n_seg + 1), ys(n_seg + 1);
  for (int k = 0; k <= n_seg; ++k) {
    z[k] = (k == n_seg) ? z_hi : z_lo + k * h;
    double u = 2.0 * (z[k] - z_lo) / range - 1.0;
    xs[k] = poly_eval(coeff.col(0), u);
    ys[k] = poly_eval(coeff.col(1), u);
  }
  const double du_dz = 2.0 / range;
  return spline_through(z, xs, ys, poly_deriv(coeff.col(0), -1.0) * du_dz,
                        poly_deriv(coeff.col(1), -1.0) * du_dz,
                        poly_deriv(coeff.col(0), 1.0) * du_dz,
                        poly_deriv(coeff.col(1), 1.0) * du_dz, poly_degree);
}

Centerline interpolate_centerline(const std::vector<Vec3>& samples,
                                  double dx_begin, double dy_begin,
                                  double dx_end, double dy_end) {
  if (samples.size() < 3)
    throw std::invalid_argument("interpolate_centerline: need >= 3 samples");
  std::vector<double> z, xs, ys;
  z.reserve(samples.size());
  for (const Vec3& p : samples) {
    z.push_back(p.z);
    xs.push_back(p.x);
    ys.push_back(p.y);
  }
  return spline_through(z, xs, ys, dx_begin, dy_begin, dx_end, dy_end, 0);
}

Centerline interpolate_centerline(const std::vector<Vec3>& samples) {
  if (samples.size() < 3)
    throw std::invalid_argument("interpolate_centerline: need >= 3 samples");
  auto slope = [&](std::size_t i, std::size_t j, auto get) {
    return (get(samples[j]) - get(samples[i])) / (samples[j].z - samples[i].z);
  };
  auto gx = [](const Vec3& p) { return p.x; };
  auto gy = [](const Vec3& p) { return p.y; };
  std::size_t n = samples.size();
  return interpolate_centerline(samples, slope(0, 1, gx), slope(0, 1, gy),
                                slope(n - 2, n - 1, gx), slope(n - 2, n - 1, gy));
}

namespace {

// 16-point Gauss-Legendre nodes (positive half) and weights on [-1, 1].
constexpr double kGlNodes[8] = {
    0.0950125098376374401853193, 0.2816035507792589132304605,
    0.4580167776572273863424194, 0.6178762444026437484466718,
    0.7554044083550030338951012, 0.8656312023878317438804679,
    0.9445750230732325760779884, 0.9894009349916499325961542};
constexpr double kGlWeights[8] = {
    0.1894506104550684962853967, 0.1826034150449235888667637,
    0.1691565193950025381893121, 0.1495959888165767320815017,
    0.1246289712555338720524763, 0.0951585116824927848099251,
    0.0622535239386478928628438, 0.0271524594117540948517806};

double speed_at(const Centerline& c, double z) {
  Vec3 d = c.derivative_at(z);
  return d.norm();
}

double gl16_panels(const Centerline& c, double a, double b, int panels) {
  double h = (b - a) / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    double mid = a + (p + 0.5) * h;
    double scale = h / 2.0;
    double acc = 0.0;
    for (int i = 0; i < 8; ++i) {
      double dz = scale * kGlNodes[i];
      acc += kGlWeights[i] * (speed_at(c, mid - dz) + speed_at(c, mid + dz));
    }
    total += acc * scale;
  }
  return total;
}

}  // namespace

double arc_length(const Centerline& c, double z_a, double z_b) {
  if (z_a > z_b) throw std::invalid_argument("arc_length: requires z_a <= z_b");
  const double eps = 1e-9;
  if (z_a < c.z_min() - eps || z_b > c.z_max() + eps)
    throw std::domain_error("arc_length: interval outside centerline domain");
  z_a = std::clamp(z_a, c.z_min(), c.z_max());
  z_b = std::clamp(z_b, c.z_min(), c.z_max());
  if (z_a == z_b) return 0.0;

  // Halve panel width until the composite rule stops moving.
  double prev = gl16_panels(c, z_a, z_b, 1);
  for (int panels = 2; panels <= (1 << 16); panels *= 2) {
    double cur = gl16_panels(c, z_a, z_b, panels);
    if (std::fabs(cur - prev) < 1e-7 * std::max(std::fabs(cur), 1e-6))
      return cur;
    prev = cur;
  }
  return prev;
}

double project_to_centerline(const Centerline& c, const Vec3& p) {
  if (!p.finite())
    throw std::invalid_argument("project_to_centerline: non-finite point");

  const double z_lo = c.z_min(), z_hi = c.z_max();
  const double range = z_hi - z_lo;

  // Sanity bound: p must lie within 50 mm of the curve's bounding box.
  double bx0 = std::numeric_limits<double>::max(), bx1 = -bx0;
  double by0 = bx0, by1 = -bx0;
  const int n_bbox = 256;
  for (int i = 0; i <= n_bbox; ++i) {
    Vec3 e = c.point_at(z_lo + range * i / n_bbox);
    bx0 = std::min(bx0, e.x);
    bx1 = std::max(bx1, e.x);
    by0 = std::min(by0, e.y);
    by1 = std::max(by1, e.y);
  }
  const double m = 50.0;
  if (p.x < bx0 - m || p.x > bx1 + m || p.y < by0 - m || p.y > by1 + m ||
      p.z < z_lo - m || p.z > z_hi + m)
    throw std::invalid_argument(
        "project_to_centerline: point too far from the centerline");

  auto dist2 = [&](double z) {
    Vec3 d = c.point_at(z) - p;
    return d.dot(d);
  };

  // Dense scan, then golden-section refinement around the best sample.
  const int n_scan = std::max(2048, static_cast<int>(range * 8.0));
  double best_z = z_lo, best_d = dist2(z_lo);
  for (int i = 1; i <= n_scan; ++i) {
    double z = z_lo + range * i / n_scan;
    double d = dist2(z);
    if (d < best_d) {
      best_d = d;
      best_z = z;
    }
  }
  double step = range / n_scan;
  double lo = std::max(z_lo, best_z - step);
  double hi = std::min(z_hi, best_z + step);

  // d/dz of the squared distance; its root localizes the minimum far below
  // the comparison noise floor of dist2 itself.
  auto ddist = [&](double z) {
    Vec3 e = c.point_at(z) - p;
    Vec3 d = c.derivative_at(z);
    return e.dot(d);
  };
  double g_lo = ddist(lo), g_hi = ddist(hi);
  if (g_lo <= 0.0 && g_hi >= 0.0) {
    for (int it = 0; it < 120; ++it) {
      double mid = 0.5 * (lo + hi);
      double g = ddist(mid);
      if (g <= 0.0) {
        lo = mid;
        g_lo = g;
      } else {
        hi = mid;
        g_hi = g;
      }
    }
    return 0.5 * (lo + hi);
  }

  // No sign change (minimum pinned at a domain edge): golden-section fallback.
  const double inv_phi = 0.6180339887498949;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = dist2(x1), f2 = dist2(x2);
  for (int it = 0; it < 80; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = dist2(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = dist2(x2);
    }
  }
  return (lo + hi) / 2.0;
}

DepthLabel depth_of(const Centerline& c, const ProbePose& pose) {
  pose.validate();
  double z_star = project_to_centerline(c, pose.position);
  return DepthLabel{arc_length(c, c.z_min(), z_star), z_star};
}

}  // namespace teedepth
