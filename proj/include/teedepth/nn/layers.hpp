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

#ifndef TEEDEPTH_NN_LAYERS_HPP
#define TEEDEPTH_NN_LAYERS_HPP

#include <string>
#include <utility>
#include <vector>

#include "teedepth/nn/conv.hpp"
#include "teedepth/nn/tensor.hpp"
#include "teedepth/rng.hpp"

namespace teedepth::nn {

/// Named view into a persistent buffer (parameter values or running stats).
template <class T>
struct StateEntry {
  std::string name;
  std::vector<T>* data;
  bool is_param;  // false for running statistics
};

template <class T>
Var<T> make_param(std::vector<int> shape, Rng& rng, double stddev) {
  std::size_t n = Var<T>::numel(shape);
  std::vector<T> data(n);
  for (std::size_t i = 0; i < n; ++i)
    data[i] = static_cast<T>(rng.normal(0.0, stddev));
  return Var<T>::from_data(std::move(shape), std::move(data), true);
}

template <class T>
Var<T> make_const_param(std::vector<int> shape, T fill) {
  std::size_t n = Var<T>::numel(shape);
  return Var<T>::from_data(std::move(shape), std::vector<T>(n, fill), true);
}

template <class T>
struct Conv2dLayer {
  Var<T> w, b;
  int stride = 1, pad = 0;

  Conv2dLayer() = default;
  Conv2dLayer(int out_ch, int in_ch, int k, int stride_, int pad_, Rng& rng,
              bool zero_init = false)
      : stride(stride_), pad(pad_) {
    double he = std::sqrt(2.0 / (static_cast<double>(in_ch) * k * k));
    w = zero_init ? make_const_param<T>({out_ch, in_ch, k, k}, T(0))
                  : make_param<T>({out_ch, in_ch, k, k}, rng, he);
    b = make_const_param<T>({out_ch}, T(0));
  }

  Var<T> forward(const Var<T>& x) const { return conv2d(x, w, b, stride, pad); }

  void params(std::vector<Var<T>>& out) const {
    out.push_back(w);
    out.push_back(b);
  }
  void state(const std::string& prefix, std::vector<StateEntry<T>>& out) {
    out.push_back({prefix + ".w", &w.value(), true});
    out.push_back({prefix + ".b", &b.value(), true});
  }
};

template <class T>
struct LinearLayer {
  Var<T> w, b;  // w is (in, out)

  LinearLayer() = default;
  LinearLayer(int in_dim, int out_dim, Rng& rng, bool zero_init = false) {
    double std = std::sqrt(2.0 / static_cast<double>(in_dim + out_dim));
    w = zero_init ? make_const_param<T>({in_dim, out_dim}, T(0))
                  : make_param<T>({in_dim, out_dim}, rng, std);
    b = make_const_param<T>({out_dim}, T(0));
  }

  Var<T> forward(const Var<T>& x) const {
    return add_bias_rows(matmul(x, w), b);
  }

  void params(std::vector<Var<T>>& out) const {
    out.push_back(w);
    out.push_back(b);
  }
  void state(const std::string& prefix, std::vector<StateEntry<T>>& out) {
    out.push_back({prefix + ".w", &w.value(), true});
    out.push_back({prefix + ".b", &b.value(), true});
  }
};

/**
 * Batch normalization over (N, H, W) per channel. Training mode uses batch
 * statistics and updates running estimates; eval mode is a fixed affine map,
 * so per-sample outputs are independent of batch composition.
 */
template <class T>
struct BatchNorm2dLayer {
  Var<T> gamma, beta;
  std::vector<T> running_mean, running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  BatchNorm2dLayer() = default;
  explicit BatchNorm2dLayer(int channels)
      : gamma(make_const_param<T>({channels}, T(1))),
        beta(make_const_param<T>({channels}, T(0))),
        running_mean(channels, T(0)),
        running_var(channels, T(1)) {}

  Var<T> forward(const Var<T>& x, bool training) {
    detail::check(x.shape().size() == 4, "batchnorm: need NCHW");
    const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2],
              W = x.shape()[3];
    detail::check(C == static_cast<int>(running_mean.size()),
                  "batchnorm: channel mismatch");
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    const std::size_t chan_stride = static_cast<std::size_t>(C) * plane;
    const std::size_t M = static_cast<std::size_t>(N) * plane;

    auto n = detail::make_node<T>(x.shape(), {x.node(), gamma.node(), beta.node()});
    auto xhat = std::make_shared<std::vector<T>>(x.size());
    auto inv_std = std::make_shared<std::vector<T>>(C);
    std::vector<T> mean(C);

#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
      T mu, var;
      if (training) {
        T acc = T(0);
        for (int i = 0; i < N; ++i) {
          const T* p = x.value().data() + i * chan_stride + c * plane;
          for (std::size_t j = 0; j < plane; ++j) acc += p[j];
        }
        mu = acc / static_cast<T>(M);
        T sq = T(0);
        for (int i = 0; i < N; ++i) {
          const T* p = x.value().data() + i * chan_stride + c * plane;
          for (std::size_t j = 0; j < plane; ++j) {
            T d = p[j] - mu;
            sq += d * d;
          }
        }
        var = sq / static_cast<T>(M);
        T unbiased = M > 1 ? sq / static_cast<T>(M - 1) : var;
        running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * mu;
        running_var[c] = (T(1) - momentum) * running_var[c] + momentum * unbiased;
      } else {
        mu = running_mean[c];
        var = running_var[c];
      }
      mean[c] = mu;
      (*inv_std)[c] = T(1) / std::sqrt(var + eps);
      const T g = gamma.value()[c], bta = beta.value()[c], is = (*inv_std)[c];
      for (int i = 0; i < N; ++i) {
        const T* p = x.value().data() + i * chan_stride + c * plane;
        T* xh = xhat->data() + i * chan_stride + c * plane;
        T* out = n->value.data() + i * chan_stride + c * plane;
        for (std::size_t j = 0; j < plane; ++j) {
          xh[j] = (p[j] - mu) * is;
          out[j] = g * xh[j] + bta;
        }
      }
    }

    if (n->needs_grad) {
      n->backward_fn = [N, C, plane, chan_stride, M, xhat, inv_std,
                        training](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        if (pg->needs_grad) pg->ensure_grad();
        if (pb->needs_grad) pb->ensure_grad();
        if (px->needs_grad) px->ensure_grad();
#pragma omp parallel for schedule(static)
        for (int c = 0; c < C; ++c) {
          T sum_dy = T(0), sum_dy_xhat = T(0);
          for (int i = 0; i < N; ++i) {
            const T* g = self.grad.data() + i * chan_stride + c * plane;
            const T* xh = xhat->data() + i * chan_stride + c * plane;
            for (std::size_t j = 0; j < plane; ++j) {
              sum_dy += g[j];
              sum_dy_xhat += g[j] * xh[j];
            }
          }
          if (pg->needs_grad) pg->grad[c] += sum_dy_xhat;
          if (pb->needs_grad) pb->grad[c] += sum_dy;
          if (px->needs_grad) {
            const T gam = pg->value[c], is = (*inv_std)[c];
            if (training) {
              const T inv_m = T(1) / static_cast<T>(M);
              for (int i = 0; i < N; ++i) {
                const T* g = self.grad.data() + i * chan_stride + c * plane;
                const T* xh = xhat->data() + i * chan_stride + c * plane;
                T* gx = px->grad.data() + i * chan_stride + c * plane;
                for (std::size_t j = 0; j < plane; ++j)
                  gx[j] += gam * is *
                           (g[j] - inv_m * sum_dy - inv_m * xh[j] * sum_dy_xhat);
              }
            } else {
              for (int i = 0; i < N; ++i) {
                const T* g = self.grad.data() + i * chan_stride + c * plane;
                T* gx = px->grad.data() + i * chan_stride + c * plane;
                for (std::size_t j = 0; j < plane; ++j) gx[j] += gam * is * g[j];
              }
            }
          }
        }
      };
    }
    return Var<T>(n);
  }

  void params(std::vector<Var<T>>& out) const {
    out.push_back(gamma);
    out.push_back(beta);
  }
  void state(const std::string& prefix, std::vector<StateEntry<T>>& out) {
    out.push_back({prefix + ".gamma", &gamma.value(), true});
    out.push_back({prefix + ".beta", &beta.value(), true});
    out.push_back({prefix + ".running_mean", &running_mean, false});
    out.push_back({prefix + ".running_var", &running_var, false});
  }
};

/// Instance normalization over (H, W) per sample and channel, no affine.
template <class T>
struct InstanceNorm2d {
  T eps = T(1e-5);

  Var<T> forward(const Var<T>& x) const {
    detail::check(x.shape().size() == 4, "instancenorm: need NCHW");
    const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2],
              W = x.shape()[3];
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    auto n = detail::make_node<T>(x.shape(), {x.node()});
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(N) * C);

    const std::size_t instances = static_cast<std::size_t>(N) * C;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ic = 0; ic < static_cast<std::ptrdiff_t>(instances); ++ic) {
      const T* p = x.value().data() + ic * plane;
      T acc = T(0);
      for (std::size_t j = 0; j < plane; ++j) acc += p[j];
      T mu = acc / static_cast<T>(plane);
      T sq = T(0);
      for (std::size_t j = 0; j < plane; ++j) {
        T d = p[j] - mu;
        sq += d * d;
      }
      T is = T(1) / std::sqrt(sq / static_cast<T>(plane) + eps);
      (*inv_std)[ic] = is;
      T* out = n->value.data() + ic * plane;
      for (std::size_t j = 0; j < plane; ++j) out[j] = (p[j] - mu) * is;
    }

    if (n->needs_grad)
      n->backward_fn = [instances, plane, inv_std](Node<T>& self) {
        auto& px = self.parents[0];
        px->ensure_grad();
        const T inv_m = T(1) / static_cast<T>(plane);
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t ic = 0; ic < static_cast<std::ptrdiff_t>(instances); ++ic) {
          const T* g = self.grad.data() + ic * plane;
          const T* y = self.value.data() + ic * plane;  // y == xhat here
          T* gx = px->grad.data() + ic * plane;
          T sum_g = T(0), sum_gy = T(0);
          for (std::size_t j = 0; j < plane; ++j) {
            sum_g += g[j];
            sum_gy += g[j] * y[j];
          }
          const T is = (*inv_std)[ic];
          for (std::size_t j = 0; j < plane; ++j)
            gx[j] += is * (g[j] - inv_m * sum_g - inv_m * y[j] * sum_gy);
        }
      };
    return Var<T>(n);
  }
};

/// Layer normalization over the last dimension with affine parameters.
template <class T>
struct LayerNormLayer {
  Var<T> gamma, beta;
  T eps = T(1e-5);

  LayerNormLayer() = default;
  explicit LayerNormLayer(int dim)
      : gamma(make_const_param<T>({dim}, T(1))),
        beta(make_const_param<T>({dim}, T(0))) {}

  Var<T> forward(const Var<T>& x) const {
    const int D = x.shape().back();
    detail::check(D == gamma.shape()[0], "layernorm: dim mismatch");
    const std::size_t rows = x.size() / D;
    auto n = detail::make_node<T>(x.shape(), {x.node(), gamma.node(), beta.node()});
    auto xhat = std::make_shared<std::vector<T>>(x.size());
    auto inv_std = std::make_shared<std::vector<T>>(rows);

    for (std::size_t r = 0; r < rows; ++r) {
      const T* p = x.value().data() + r * D;
      T acc = T(0);
      for (int j = 0; j < D; ++j) acc += p[j];
      T mu = acc / static_cast<T>(D);
      T sq = T(0);
      for (int j = 0; j < D; ++j) {
        T d = p[j] - mu;
        sq += d * d;
      }
      T is = T(1) / std::sqrt(sq / static_cast<T>(D) + eps);
      (*inv_std)[r] = is;
      T* xh = xhat->data() + r * D;
      T* out = n->value.data() + r * D;
      for (int j = 0; j < D; ++j) {
        xh[j] = (p[j] - mu) * is;
        out[j] = gamma.value()[j] * xh[j] + beta.value()[j];
      }
    }

    if (n->needs_grad)
      n->backward_fn = [rows, D, xhat, inv_std](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        if (px->needs_grad) px->ensure_grad();
        if (pg->needs_grad) pg->ensure_grad();
        if (pb->needs_grad) pb->ensure_grad();
        const T inv_d = T(1) / static_cast<T>(D);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* g = self.grad.data() + r * D;
          const T* xh = xhat->data() + r * D;
          T sum_g_gam = T(0), sum_g_gam_xh = T(0);
          for (int j = 0; j < D; ++j) {
            if (pg->needs_grad) pg->grad[j] += g[j] * xh[j];
            if (pb->needs_grad) pb->grad[j] += g[j];
            T gg = g[j] * pg->value[j];
            sum_g_gam += gg;
            sum_g_gam_xh += gg * xh[j];
          }
          if (px->needs_grad) {
            T* gx = px->grad.data() + r * D;
            const T is = (*inv_std)[r];
            for (int j = 0; j < D; ++j) {
              T gg = g[j] * pg->value[j];
              gx[j] += is * (gg - inv_d * sum_g_gam - inv_d * xh[j] * sum_g_gam_xh);
            }
          }
        }
      };
    return Var<T>(n);
  }

  void params(std::vector<Var<T>>& out) const {
    out.push_back(gamma);
    out.push_back(beta);
  }
  void state(const std::string& prefix, std::vector<StateEntry<T>>& out) {
    out.push_back({prefix + ".gamma", &gamma.value(), true});
    out.push_back({prefix + ".beta", &beta.value(), true});
  }
};

}  // namespace teedepth::nn

#endif  // TEEDEPTH_NN_LAYERS_HPP
