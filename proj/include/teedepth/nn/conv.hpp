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

#ifndef TEEDEPTH_NN_CONV_HPP
#define TEEDEPTH_NN_CONV_HPP

#include "teedepth/nn/tensor.hpp"

namespace teedepth::nn {

namespace detail {

// col has one row per (ic, ky, kx) and one column per output position.
template <class T>
void im2col(const T* x, int C, int H, int W, int KH, int KW, int stride,
            int pad, int OH, int OW, T* col) {
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < KH; ++ky) {
      for (int kx = 0; kx < KW; ++kx) {
        T* row = col + (static_cast<std::size_t>(c) * KH * KW + ky * KW + kx) *
                           (static_cast<std::size_t>(OH) * OW);
        for (int oy = 0; oy < OH; ++oy) {
          int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) {
            for (int ox = 0; ox < OW; ++ox) row[oy * OW + ox] = T(0);
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(c) * H + iy) * W;
          for (int ox = 0; ox < OW; ++ox) {
            int ix = ox * stride + kx - pad;
            row[oy * OW + ox] = (ix < 0 || ix >= W) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, int C, int H, int W, int KH, int KW, int stride,
                int pad, int OH, int OW, T* x) {
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < KH; ++ky) {
      for (int kx = 0; kx < KW; ++kx) {
        const T* row = col + (static_cast<std::size_t>(c) * KH * KW + ky * KW + kx) *
                                 (static_cast<std::size_t>(OH) * OW);
        for (int oy = 0; oy < OH; ++oy) {
          int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          T* dst = x + (static_cast<std::size_t>(c) * H + iy) * W;
          for (int ox = 0; ox < OW; ++ox) {
            int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < W) dst[ix] += row[oy * OW + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

/**
 * 2D convolution, NCHW x (OC, IC, KH, KW) -> NCOHOW.
 *
 * im2col + GEMM per batch item, parallel across the batch; weight gradients
 * are reduced over items in index order so results do not depend on the
 * thread count.
 */
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride,
              int pad) {
  detail::check(x.shape().size() == 4 && w.shape().size() == 4,
                "conv2d: need NCHW input and OIHW weight");
  const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const int OC = w.shape()[0], KH = w.shape()[2], KW = w.shape()[3];
  detail::check(w.shape()[1] == C, "conv2d: channel mismatch");
  const int OH = (H + 2 * pad - KH) / stride + 1;
  const int OW = (W + 2 * pad - KW) / stride + 1;
  detail::check(OH > 0 && OW > 0, "conv2d: empty output");
  const bool has_bias = bias.valid();

  std::vector<std::shared_ptr<Node<T>>> parents{x.node(), w.node()};
  if (has_bias) {
    detail::check(bias.shape().size() == 1 && bias.shape()[0] == OC,
                  "conv2d: bias shape mismatch");
    parents.push_back(bias.node());
  }
  auto n = detail::make_node<T>({N, OC, OH, OW}, std::move(parents));

  const std::size_t kdim = static_cast<std::size_t>(C) * KH * KW;
  const std::size_t opix = static_cast<std::size_t>(OH) * OW;
  const std::size_t in_sz = static_cast<std::size_t>(C) * H * W;
  const std::size_t out_sz = static_cast<std::size_t>(OC) * opix;

#pragma omp parallel for schedule(static)
  for (int i = 0; i < N; ++i) {
    std::vector<T> col(kdim * opix);
    detail::im2col(x.value().data() + i * in_sz, C, H, W, KH, KW, stride, pad,
                   OH, OW, col.data());
    detail::CMapMat<T> Wm(w.value().data(), OC, static_cast<int>(kdim));
    detail::CMapMat<T> Cm(col.data(), static_cast<int>(kdim), static_cast<int>(opix));
    detail::MapMat<T> Om(n->value.data() + i * out_sz, OC, static_cast<int>(opix));
    Om.noalias() = Wm * Cm;
    if (has_bias) {
      const T* b = bias.value().data();
      for (int oc = 0; oc < OC; ++oc) {
        T* dst = n->value.data() + i * out_sz + oc * opix;
        for (std::size_t j = 0; j < opix; ++j) dst[j] += b[oc];
      }
    }
  }

  if (n->needs_grad) {
    n->backward_fn = [N, C, H, W, OC, KH, KW, stride, pad, OH, OW, has_bias,
                      kdim, opix, in_sz, out_sz](Node<T>& self) {
      auto& px = self.parents[0];
      auto& pw = self.parents[1];
      const bool need_x = px->needs_grad;
      const bool need_w = pw->needs_grad;

      // dX: per-item GEMM + col2im, disjoint writes, safe in parallel.
      if (need_x) {
        px->ensure_grad();
#pragma omp parallel for schedule(static)
        for (int i = 0; i < N; ++i) {
          std::vector<T> dcol(kdim * opix);
          detail::CMapMat<T> Wm(pw->value.data(), OC, static_cast<int>(kdim));
          detail::CMapMat<T> Gm(self.grad.data() + i * out_sz, OC,
                                static_cast<int>(opix));
          detail::MapMat<T> Dm(dcol.data(), static_cast<int>(kdim),
                               static_cast<int>(opix));
          Dm.noalias() = Wm.transpose() * Gm;
          detail::col2im_add(dcol.data(), C, H, W, KH, KW, stride, pad, OH, OW,
                             px->grad.data() + i * in_sz);
        }
      }

      // dW: parallel partials, then an ordered serial reduction.
      if (need_w) {
        pw->ensure_grad();
        std::vector<std::vector<T>> partials(N);
#pragma omp parallel for schedule(static)
        for (int i = 0; i < N; ++i) {
          partials[i].resize(static_cast<std::size_t>(OC) * kdim);
          std::vector<T> col(kdim * opix);
          detail::im2col(px->value.data() + i * in_sz, C, H, W, KH, KW, stride,
                         pad, OH, OW, col.data());
          detail::CMapMat<T> Gm(self.grad.data() + i * out_sz, OC,
                                static_cast<int>(opix));
          detail::CMapMat<T> Cm(col.data(), static_cast<int>(kdim),
                                static_cast<int>(opix));
          detail::MapMat<T> Pm(partials[i].data(), OC, static_cast<int>(kdim));
          Pm.noalias() = Gm * Cm.transpose();
        }
        for (int i = 0; i < N; ++i)
          for (std::size_t j = 0; j < pw->grad.size(); ++j)
            pw->grad[j] += partials[i][j];
      }

      if (has_bias && self.parents[2]->needs_grad) {
        auto& pb = self.parents[2];
        pb->ensure_grad();
        for (int i = 0; i < N; ++i)
          for (int oc = 0; oc < OC; ++oc) {
            const T* g = self.grad.data() + i * out_sz + oc * opix;
            T acc = T(0);
            for (std::size_t j = 0; j < opix; ++j) acc += g[j];
            pb->grad[oc] += acc;
          }
      }
    };
  }
  return Var<T>(n);
}

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, int stride, int pad) {
  return conv2d(x, w, Var<T>(), stride, pad);
}

/// 2x2 max pooling with stride 2 (even input sizes).
template <class T>
Var<T> maxpool2x2(const Var<T>& x) {
  detail::check(x.shape().size() == 4, "maxpool2x2: need NCHW");
  const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  detail::check(H % 2 == 0 && W % 2 == 0, "maxpool2x2: odd spatial size");
  const int OH = H / 2, OW = W / 2;
  auto n = detail::make_node<T>({N, C, OH, OW}, {x.node()});
  auto argmax = std::make_shared<std::vector<int>>(n->value.size());
  const std::size_t planes = static_cast<std::size_t>(N) * C;

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t pc = 0; pc < static_cast<std::ptrdiff_t>(planes); ++pc) {
    const T* in = x.value().data() + pc * H * W;
    T* out = n->value.data() + pc * OH * OW;
    int* am = argmax->data() + pc * OH * OW;
    for (int oy = 0; oy < OH; ++oy)
      for (int ox = 0; ox < OW; ++ox) {
        int base = (2 * oy) * W + 2 * ox;
        int idx = base;
        T best = in[base];
        for (int d : {base + 1, base + W, base + W + 1})
          if (in[d] > best) {
            best = in[d];
            idx = d;
          }
        out[oy * OW + ox] = best;
        am[oy * OW + ox] = idx;
      }
  }

  if (n->needs_grad)
    n->backward_fn = [planes, H, W, OH, OW, argmax](Node<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (std::size_t pc = 0; pc < planes; ++pc) {
        const T* g = self.grad.data() + pc * OH * OW;
        const int* am = argmax->data() + pc * OH * OW;
        T* gx = p->grad.data() + pc * H * W;
        for (int j = 0; j < OH * OW; ++j) gx[am[j]] += g[j];
      }
    };
  return Var<T>(n);
}

/// Nearest-neighbour 2x upsampling.
template <class T>
Var<T> upsample_nearest2x(const Var<T>& x) {
  detail::check(x.shape().size() == 4, "upsample_nearest2x: need NCHW");
  const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  auto n = detail::make_node<T>({N, C, 2 * H, 2 * W}, {x.node()});
  const std::size_t planes = static_cast<std::size_t>(N) * C;
  for (std::size_t pc = 0; pc < planes; ++pc) {
    const T* in = x.value().data() + pc * H * W;
    T* out = n->value.data() + pc * 4 * H * W;
    for (int y = 0; y < H; ++y)
      for (int xgl = 0; xgl < W; ++xgl) {
        T v = in[y * W + xgl];
        T* d = out + (2 * y) * 2 * W + 2 * xgl;
        d[0] = v;
        d[1] = v;
        d[2 * W] = v;
        d[2 * W + 1] = v;
      }
  }
  if (n->needs_grad)
    n->backward_fn = [planes, H, W](Node<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (std::size_t pc = 0; pc < planes; ++pc) {
        const T* g = self.grad.data() + pc * 4 * H * W;
        T* gx = p->grad.data() + pc * H * W;
        for (int y = 0; y < H; ++y)
          for (int x2 = 0; x2 < W; ++x2) {
            const T* s = g + (2 * y) * 2 * W + 2 * x2;
            gx[y * W + x2] += s[0] + s[1] + s[2 * W] + s[2 * W + 1];
          }
      }
    };
  return Var<T>(n);
}

/**
 * Extracts a grid x grid arrangement of tile x tile patches from an NCHW map
 * into one row per patch: (N, C, G*P, G*P) -> (N*G*G, C*P*P).
 */
template <class T>
Var<T> tiles_to_rows(const Var<T>& x, int grid) {
  detail::check(x.shape().size() == 4, "tiles_to_rows: need NCHW");
  const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  detail::check(H == W && H % grid == 0, "tiles_to_rows: grid mismatch");
  const int P = H / grid;
  auto n = detail::make_node<T>({N * grid * grid, C * P * P}, {x.node()});
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (int i = 0; i < N; ++i)
    for (int gy = 0; gy < grid; ++gy)
      for (int gx = 0; gx < grid; ++gx) {
        T* row = n->value.data() +
                 (static_cast<std::size_t>(i) * grid * grid + gy * grid + gx) *
                     (static_cast<std::size_t>(C) * P * P);
        for (int c = 0; c < C; ++c)
          for (int py = 0; py < P; ++py)
            for (int px = 0; px < P; ++px)
              row[(static_cast<std::size_t>(c) * P + py) * P + px] =
                  x.value()[(static_cast<std::size_t>(i) * C + c) * plane +
                            (gy * P + py) * W + gx * P + px];
      }
  if (n->needs_grad)
    n->backward_fn = [N, C, H, W, grid, P, plane](Node<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (int i = 0; i < N; ++i)
        for (int gy = 0; gy < grid; ++gy)
          for (int gx = 0; gx < grid; ++gx) {
            const T* row = self.grad.data() +
                           (static_cast<std::size_t>(i) * grid * grid + gy * grid +
                            gx) *
                               (static_cast<std::size_t>(C) * P * P);
            for (int c = 0; c < C; ++c)
              for (int py = 0; py < P; ++py)
                for (int px = 0; px < P; ++px)
                  p->grad[(static_cast<std::size_t>(i) * C + c) * plane +
                          (gy * P + py) * W + gx * P + px] +=
                      row[(static_cast<std::size_t>(c) * P + py) * P + px];
          }
    };
  return Var<T>(n);
}

}  // namespace teedepth::nn

#endif  // TEEDEPTH_NN_CONV_HPP
