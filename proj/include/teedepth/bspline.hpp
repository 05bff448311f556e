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

#ifndef TEEDEPTH_BSPLINE_HPP
#define TEEDEPTH_BSPLINE_HPP

#include <vector>

namespace teedepth {

/**
 * Scalar B-spline f(t) with a clamped knot vector.
 *
 * Evaluation uses de Boor's algorithm; the derivative is returned as a
 * lower-degree spline so arc-length integrands stay exact spline evaluations.
 */
class BSpline {
 public:
  BSpline() = default;
  BSpline(int degree, std::vector<double> knots, std::vector<double> ctrl);

  double operator()(double t) const;

  /// Derivative as a degree-1 lower spline over the same domain.
  BSpline derivative() const;

  double t_min() const { return knots_[degree_]; }
  double t_max() const { return knots_[knots_.size() - 1 - degree_]; }

  int degree() const { return degree_; }
  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& control_points() const { return ctrl_; }

  /**
   * Clamped cubic spline through (t_i, f_i) with prescribed end slopes.
   * The parameters t must be strictly increasing with at least 3 entries.
   */
  static BSpline interpolate_cubic(const std::vector<double>& t,
                                   const std::vector<double>& f,
                                   double slope_begin, double slope_end);

 private:
  int find_span(double t) const;

  int degree_ = 0;
  std::vector<double> knots_;
  std::vector<double> ctrl_;
};

}  // namespace teedepth

#endif  // TEEDEPTH_BSPLINE_HPP
