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

#include "teedepth/bspline.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <stdexcept>

#include "teedepth/common.hpp"

namespace teedepth {

BSpline::BSpline(int degree, std::vector<double> knots, std::vector<double> ctrl)
    : degree_(degree), knots_(std::move(knots)), ctrl_(std::move(ctrl)) {
  if (degree_ < 1 || knots_.size() != ctrl_.size() + degree_ + 1)
    throw std::invalid_argument("BSpline: inconsistent knot/control sizes");
}

int BSpline::find_span(double t) const {
  int n = static_cast<int>(ctrl_.size()) - 1;
  if (t >= knots_[n + 1]) return n;
  if (t <= knots_[degree_]) return degree_;
  int lo = degree_, hi = n + 1;
  int mid = (lo + hi) / 2;
  while (t < knots_[mid] || t >= knots_[mid + 1]) {
    if (t < knots_[mid])
      hi = mid;
    else
      lo = mid;
    mid = (lo + hi) / 2;
  }
  return mid;
}

double BSpline::operator()(double t) const {
  int k = find_span(t);
  // de Boor on the p+1 active control points.
  int p = degree_;
  std::vector<double> d(p + 1);
  for (int j = 0; j <= p; ++j) d[j] = ctrl_[k - p + j];
  for (int r = 1; r <= p; ++r) {
    for (int j = p; j >= r; --j) {
      int i = k - p + j;
      double denom = knots_[i + p - r + 1] - knots_[i];
      double alpha = denom == 0.0 ? 0.0 : (t - knots_[i]) / denom;
      d[j] = (1.0 - alpha) * d[j - 1] + alpha * d[j];
    }
  }
  return d[p];
}

BSpline BSpline::derivative() const {
  if (degree_ < 1) throw std::logic_error("cannot differentiate degree-0 spline");
  int p = degree_;
  int n = static_cast<int>(ctrl_.size()) - 1;
  std::vector<double> dctrl(n);
  for (int i = 0; i < n; ++i) {
    double denom = knots_[i + p + 1] - knots_[i + 1];
    dctrl[i] = denom == 0.0 ? 0.0 : p * (ctrl_[i + 1] - ctrl_[i]) / denom;
  }
  std::vector<double> dknots(knots_.begin() + 1, knots_.end() - 1);
  return BSpline(p - 1, std::move(dknots), std::move(dctrl));
}

BSpline BSpline::interpolate_cubic(const std::vector<double>& t,
                                   const std::vector<double>& f,
                                   double slope_begin, double slope_end) {
  const int N = static_cast<int>(t.size()) - 1;
  if (N < 2 || f.size() != t.size())
    throw std::invalid_argument("interpolate_cubic: need >= 3 samples");
  for (int i = 0; i < N; ++i)
    if (!(t[i] < t[i + 1]))
      throw std::invalid_argument("interpolate_cubic: parameters must increase");

  // Clamped knot vector: t0 x4, t1..t_{N-1}, tN x4.
  std::vector<double> knots;
  knots.reserve(N + 7);
  for (int i = 0; i < 4; ++i) knots.push_back(t[0]);
  for (int i = 1; i < N; ++i) knots.push_back(t[i]);
  for (int i = 0; i < 4; ++i) knots.push_back(t[N]);

  const int n_ctrl = N + 3;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n_ctrl, n_ctrl);
  Eigen::VectorXd b(n_ctrl);

  // Endpoint value and slope rows have closed forms for clamped cubics.
  A(0, 0) = 1.0;
  b(0) = f[0];
  A(1, 0) = -3.0 / (t[1] - t[0]);
  A(1, 1) = 3.0 / (t[1] - t[0]);
  b(1) = slope_begin;
  A(n_ctrl - 2, n_ctrl - 2) = -3.0 / (t[N] - t[N - 1]);
  A(n_ctrl - 2, n_ctrl - 1) = 3.0 / (t[N] - t[N - 1]);
  b(n_ctrl - 2) = slope_end;
  A(n_ctrl - 1, n_ctrl - 1) = 1.0;
  b(n_ctrl - 1) = f[N];

  // Interior interpolation rows: evaluate the nonzero basis functions at t_i.
  BSpline probe(3, knots, std::vector<double>(n_ctrl, 0.0));
  for (int i = 1; i < N; ++i) {
    int span = probe.find_span(t[i]);
    // Cox-de Boor basis values N_{span-3..span,3}(t_i).
    double basis[4] = {1.0, 0.0, 0.0, 0.0};
    double left[4], right[4];
    for (int j = 1; j <= 3; ++j) {
      left[j] = t[i] - knots[span + 1 - j];
      right[j] = knots[span + j] - t[i];
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        double tmp = basis[r] / (right[r + 1] + left[j - r]);
        basis[r] = saved + right[r + 1] * tmp;
        saved = left[j - r] * tmp;
      }
      basis[j] = saved;
    }
    for (int j = 0; j <= 3; ++j) A(i + 1, span - 3 + j) = basis[j];
    b(i + 1) = f[i];
  }

  Eigen::VectorXd p = A.partialPivLu().solve(b);
  if (!p.allFinite()) throw FitError("spline interpolation system is singular");
  std::vector<double> ctrl(p.data(), p.data() + p.size());
  return BSpline(3, std::move(knots), std::move(ctrl));
}

}  // namespace teedepth
