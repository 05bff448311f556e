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

#ifndef TEEDEPTH_NN_ADAM_HPP
#define TEEDEPTH_NN_ADAM_HPP

#include <cmath>
#include <vector>

#include "teedepth/nn/tensor.hpp"

namespace teedepth::nn {

/// Adam with bias correction; no weight decay.
template <class T>
class Adam {
 public:
  Adam(std::vector<Var<T>> params, T beta1 = T(0.9), T beta2 = T(0.999),
       T eps = T(1e-8))
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].size(), T(0));
      v_[i].assign(params_[i].size(), T(0));
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.grad().assign(p.size(), T(0));
  }

  void step(T lr) {
    ++t_;
    const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (p.grad().size() != p.size()) continue;  // never touched by backward
      std::vector<T>& val = p.value();
      const std::vector<T>& g = p.grad();
      std::vector<T>& m = m_[i];
      std::vector<T>& v = v_[i];
      for (std::size_t j = 0; j < val.size(); ++j) {
        m[j] = beta1_ * m[j] + (T(1) - beta1_) * g[j];
        v[j] = beta2_ * v[j] + (T(1) - beta2_) * g[j] * g[j];
        T mhat = m[j] / bc1;
        T vhat = v[j] / bc2;
        val[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  long step_count() const { return t_; }

 private:
  std::vector<Var<T>> params_;
  std::vector<std::vector<T>> m_, v_;
  T beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace teedepth::nn

#endif  // TEEDEPTH_NN_ADAM_HPP
