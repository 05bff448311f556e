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

#ifndef TEEDEPTH_RNG_HPP
#define TEEDEPTH_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "teedepth/common.hpp"

namespace teedepth {

/**
 * Deterministic random source.
 *
 * All sampling transforms (normal, Rayleigh, integer ranges, shuffles) are
 * written out explicitly instead of going through std::*_distribution, so a
 * given seed produces the same stream on every standard library. Every piece
 * of randomness in the toolkit flows through this class.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (no second-sample cache).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Rayleigh with scale sigma (mean sigma * sqrt(pi/2)).
  double rayleigh(double sigma) {
    double u = uniform();
    while (u <= 0.0) u = uniform();
    return sigma * std::sqrt(-2.0 * std::log(u));
  }

  /// Uniform integer in [lo, hi], both inclusive.
  int uniform_int(int lo, int hi) {
    auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(gen_() % span);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = gen_() % i;
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Independent generator for a named substream of this one's seed.
  Rng fork(std::uint64_t stream) const { return Rng(mix_seed(seed_, stream)); }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace teedepth

#endif  // TEEDEPTH_RNG_HPP
