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

#ifndef TEEDEPTH_NN_TENSOR_HPP
#define TEEDEPTH_NN_TENSOR_HPP

#include <Eigen/Dense>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <unordered_set>
#include <vector>

namespace teedepth::nn {

/**
 * Reverse-mode autodiff on dense tensors.
 *
 * A Var is a shared handle to a graph node holding a value buffer, an
 * optional gradient buffer and a closure that scatters the node's gradient
 * into its parents. Graphs are built per step and freed when the last handle
 * goes out of scope. All reductions accumulate in a fixed order, so results
 * are bit-reproducible run to run regardless of thread count.
 */
template <class T>
struct Node {
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool needs_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward_fn;

  std::size_t size() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  static Var from_data(std::vector<int> shape, std::vector<T> data,
                       bool needs_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->needs_grad = needs_grad;
    if (n->value.size() != numel(n->shape))
      throw std::invalid_argument("Var: data size does not match shape");
    return Var(std::move(n));
  }

  static Var zeros(std::vector<int> shape, bool needs_grad = false) {
    std::size_t n = numel(shape);
    return from_data(std::move(shape), std::vector<T>(n, T(0)), needs_grad);
  }

  static Var scalar(T v) { return from_data({1}, {v}); }

  bool valid() const { return static_cast<bool>(node_); }
  const std::vector<int>& shape() const { return node_->shape; }
  std::vector<T>& value() { return node_->value; }
  const std::vector<T>& value() const { return node_->value; }
  std::vector<T>& grad() { return node_->grad; }
  const std::vector<T>& grad() const { return node_->grad; }
  bool needs_grad() const { return node_->needs_grad; }
  std::size_t size() const { return node_->value.size(); }
  std::shared_ptr<Node<T>> node() const { return node_; }

  T item() const {
    if (node_->value.size() != 1)
      throw std::logic_error("item() on non-scalar tensor");
    return node_->value[0];
  }

  static std::size_t numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

/**
 * Training rebuilds large activation graphs every step. With default glibc
 * settings those buffers round-trip through mmap/munmap and every step pays
 * page-fault costs; raising the thresholds keeps freed blocks on the heap.
 */
inline void tune_allocator_once() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, -1);
    return true;
  }();
  (void)done;
#endif
}

template <class T>
std::shared_ptr<Node<T>> make_node(std::vector<int> shape,
                                   std::vector<std::shared_ptr<Node<T>>> parents) {
  tune_allocator_once();
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value.resize(Var<T>::numel(n->shape));
  for (const auto& p : parents)
    if (p->needs_grad) n->needs_grad = true;
  n->parents = std::move(parents);
  return n;
}

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

inline void check(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace detail

/// Runs the reverse sweep from a scalar root.
template <class T>
void backward(const Var<T>& root) {
  if (root.size() != 1) throw std::logic_error("backward: root must be scalar");
  if (!root.needs_grad()) return;

  // Iterative topological order over the needs_grad subgraph.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.push_back({root.node().get(), 0});
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<T>* parent = node->parents[idx++].get();
      if (parent->needs_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.push_back({parent, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<T>* n : order) n->ensure_grad();
  root.node()->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

// ---------------------------------------------------------------------------
// Elementwise and broadcast ops
// ---------------------------------------------------------------------------

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::check(a.shape() == b.shape(), "add: shape mismatch");
  auto n = detail::make_node<T>(a.shape(), {a.node(), b.node()});
  const std::size_t sz = a.size();
  const T* av = a.value().data();
  const T* bv = b.value().data();
  T* ov = n->value.data();
#pragma omp parallel for schedule(static) if (sz > 65536)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sz); ++i)
    ov[i] = av[i] + bv[i];
  if (n->needs_grad)
    n->backward_fn = [](Node<T>& self) {
      for (int k = 0; k < 2; ++k) {
        auto& p = self.parents[k];
        if (!p->needs_grad) continue;
        p->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          p->grad[i] += self.grad[i];
      }
    };
  return Var<T>(n);
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::check(a.shape() == b.shape(), "sub: shape mismatch");
  auto n = detail::make_node<T>(a.shape(), {a.node(), b.node()});
  for (std::size_t i = 0; i < a.size(); ++i)
    n->value[i] = a.value()[i] - b.value()[i];
  if (n->needs_grad)
    n->backward_fn = [](Node<T>& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      if (pa->needs_grad) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          pa->grad[i] += self.grad[i];
      }
      if (pb->needs_grad) {
        pb->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          pb->grad[i] -= self.grad[i];
      }
    };
  return Var<T>(n);
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::check(a.shape() == b.shape(), "mul: shape mismatch");
  auto n = detail::make_node<T>(a.shape(), {a.node(), b.node()});
  {
    const std::size_t sz = a.size();
    const T* av = a.value().data();
    const T* bv = b.value().data();
    T* ov = n->value.data();
#pragma omp parallel for schedule(static) if (sz > 65536)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sz); ++i)
      ov[i] = av[i] * bv[i];
  }
  if (n->needs_grad)
    n->backward_fn = [](Node<T>& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      const std::size_t sz = self.grad.size();
      if (pa->needs_grad) {
        pa->ensure_grad();
        const T* g = self.grad.data();
        const T* bv = pb->value.data();
        T* ga = pa->grad.data();
#pragma omp parallel for schedule(static) if (sz > 65536)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sz); ++i)
          ga[i] += g[i] * bv[i];
      }
      if (pb->needs_grad) {
        pb->ensure_grad();
        const T* g = self.grad.data();
        const T* av = pa->value.data();
        T* gb = pb->grad.data();
#pragma omp parallel for schedule(static) if (sz > 65536)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sz); ++i)
          gb[i] += g[i] * av[i];
      }
    };
  return Var<T>(n);
}

template <class T>
Var<T> divide(const Var<T>& a, const Var<T>& b) {
  detail::check(a.shape() == b.shape(), "divide: shape mismatch");
  auto n = detail::make_node<T>(a.shape(), {a.node(), b.node()});
  for (std::size_t i = 0; i < a.size(); ++i)
    n->value[i] = a.value()[i] / b.value()[i];
  if (n->needs_grad)
    n->backward_fn = [](Node<T>& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      if (pa->needs_grad) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          pa->grad[i] += self.grad[i] / pb->value[i];
      }
      if (pb->needs_grad) {
        pb->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          pb->grad[i] -= self.grad[i] * self.value[i] / pb->value[i];
      }
    };
  return Var<T>(n);
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  auto n = detail::make_node<T>(a.shape(), {a.node()});
  for (std::size_t i = 0; i < a.size(); ++i) n->value[i] = a.value()[i] * s;
  if (n->needs_grad)
    n->backward_fn = [s](Node<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        p->grad[i] += self.grad[i] * s;
    };
  return Var<T>(n);
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T s) {
  auto n = detail::make_node<T>(a.shape(), {a.node()});
  for (std::size_t i = 0; i < a.size(); ++i) n->value[i] = a.value()[i] + s;
  if (n->needs_grad)
    n->backward_fn = [](Node<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        p->grad[i] += self.grad[i];
    };
  return Var<T>(n);
}

template <class T>
Var<T> relu(const Var<T>& a) {
  auto n = detail::make_node<T>(a.shape(), {a.node()});
  {
    const std::size_t sz = a.size();
    const T* av = a.value().data();
    T* ov = n->value.data();
#pragma omp parallel for schedule(static) if (sz > 65536)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sz); ++i)
      ov[i] = av[i] > T(0) ? av[i] : T(0);
  }
  if (n->needs_grad)
    n->backward_fn = [](Node<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      const std::size_t sz = self.grad.size();
      const T* g = self.grad.data();
      const T* pv = p->value.data();
      T* pg = p->grad.data();
#pragma omp parallel for schedule(static) if (sz > 65536)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sz); ++i)
        if (pv[i] > T(0)) pg[i] += g[i];
    };
  return Var<T>(n);
}

template <class T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  auto n = detail::make_node<T>(a.shape(), {a.node()});
  for (std::size_t i = 0; i < a.size(); ++i)
    n->value[i] = a.value()[i] > T(0) ? a.value()[i] : slope * a.value()[i];
  if (n->needs_grad)
    n->backward_fn = [slope](Node<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        p->grad[i] += self.grad[i] * (p->value[i] > T(0) ? T(1) : slope);
    };
  return Var<T>(n);
}

template <class T>
Var<T> gelu(const Var<T>& a) {
  auto n = detail::make_node<T>(a.shape(), {a.node()});
  const T inv_sqrt2 = T(0.7071067811865475);
  for (std::size_t i = 0; i < a.size(); ++i) {
    T x = a.value()[i];
    n->value[i] = T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2));
  }
  if (n->needs_grad)
    n->backward_fn = [inv_sqrt2](Node<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      const T inv_sqrt_2pi = T(0.3989422804014327);
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        T x = p->value[i];
        T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
        T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * x * x);
        p->grad[i] += self.grad[i] * (cdf + x * pdf);
      }
    };
  return Var<T>(n);
}

template <class T>
Var<T> tanh_op(const Var<T>& a) {
  auto n = detail::make_node<T>(a.shape(), {a.node()});
  for (std::size_t i = 0; i < a.size(); ++i) n->value[i] = std::tanh(a.value()[i]);
  if (n->needs_grad)
    n->backward_fn = [](Node<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        T y = self.value[i];
        p->grad[i] += self.grad[i] * (T(1) - y * y);
      }
    };
  return Var<T>(n);
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <class T>
Var<T> reshape(const Var<T>& a, std::vector<int> new_shape) {
  detail::check(Var<T>::numel(new_shape) == a.size(), "reshape: size mismatch");
  auto n = detail::make_node<T>(std::move(new_shape), {a.node()});
  n->value = a.value();
  if (n->needs_grad)
    n->backward_fn = [](Node<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        p->grad[i] += self.grad[i];
    };
  return Var<T>(n);
}

/// (B, M, K) -> (B, K, M). Also accepts 2D (M, K).
template <class T>
Var<T> transpose_last2(const Var<T>& a) {
  std::vector<int> s = a.shape();
  detail::check(s.size() == 2 || s.size() == 3, "transpose_last2: need 2D/3D");
  int B = s.size() == 3 ? s[0] : 1;
  int M = s[s.size() - 2], K = s[s.size() - 1];
  std::vector<int> out_shape = s;
  out_shape[s.size() - 2] = K;
  out_shape[s.size() - 1] = M;
  auto n = detail::make_node<T>(out_shape, {a.node()});
  for (int b = 0; b < B; ++b) {
    const T* src = a.value().data() + static_cast<std::size_t>(b) * M * K;
    T* dst = n->value.data() + static_cast<std::size_t>(b) * M * K;
    for (int i = 0; i < M; ++i)
      for (int j = 0; j < K; ++j) dst[j * M + i] = src[i * K + j];
  }
  if (n->needs_grad)
    n->backward_fn = [B, M, K](Node<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (int b = 0; b < B; ++b) {
        const T* g = self.grad.data() + static_cast<std::size_t>(b) * M * K;
        T* dst = p->grad.data() + static_cast<std::size_t>(b) * M * K;
        for (int j = 0; j < K; ++j)
          for (int i = 0; i < M; ++i) dst[i * K + j] += g[j * M + i];
      }
    };
  return Var<T>(n);
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  detail::check(a.shape().size() == 2 && b.shape().size() == 2,
                "matmul: need 2D operands");
  int M = a.shape()[0], K = a.shape()[1], K2 = b.shape()[0], N = b.shape()[1];
  detail::check(K == K2, "matmul: inner dimensions differ");
  auto n = detail::make_node<T>({M, N}, {a.node(), b.node()});
  detail::CMapMat<T> A(a.value().data(), M, K), B(b.value().data(), K, N);
  detail::MapMat<T> C(n->value.data(), M, N);
  C.noalias() = A * B;
  if (n->needs_grad)
    n->backward_fn = [M, K, N](Node<T>& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      detail::CMapMat<T> G(self.grad.data(), M, N);
      if (pa->needs_grad) {
        pa->ensure_grad();
        detail::CMapMat<T> B(pb->value.data(), K, N);
        detail::MapMat<T> GA(pa->grad.data(), M, K);
        GA.noalias() += G * B.transpose();
      }
      if (pb->needs_grad) {
        pb->ensure_grad();
        detail::CMapMat<T> A(pa->value.data(), M, K);
        detail::MapMat<T> GB(pb->grad.data(), K, N);
        GB.noalias() += A.transpose() * G;
      }
    };
  return Var<T>(n);
}

/// Batched matmul: (B, M, K) x (B, K, N) -> (B, M, N).
template <class T>
Var<T> bmm(const Var<T>& a, const Var<T>& b) {
  detail::check(a.shape().size() == 3 && b.shape().size() == 3,
                "bmm: need 3D operands");
  int B = a.shape()[0], M = a.shape()[1], K = a.shape()[2];
  detail::check(b.shape()[0] == B && b.shape()[1] == K, "bmm: shape mismatch");
  int N = b.shape()[2];
  auto n = detail::make_node<T>({B, M, N}, {a.node(), b.node()});
  for (int i = 0; i < B; ++i) {
    detail::CMapMat<T> A(a.value().data() + static_cast<std::size_t>(i) * M * K, M, K);
    detail::CMapMat<T> Bm(b.value().data() + static_cast<std::size_t>(i) * K * N, K, N);
    detail::MapMat<T> C(n->value.data() + static_cast<std::size_t>(i) * M * N, M, N);
    C.noalias() = A * Bm;
  }
  if (n->needs_grad)
    n->backward_fn = [B, M, K, N](Node<T>& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      if (pa->needs_grad) pa->ensure_grad();
      if (pb->needs_grad) pb->ensure_grad();
      for (int i = 0; i < B; ++i) {
        detail::CMapMat<T> G(self.grad.data() + static_cast<std::size_t>(i) * M * N, M, N);
        if (pa->needs_grad) {
          detail::CMapMat<T> Bm(pb->value.data() + static_cast<std::size_t>(i) * K * N, K, N);
          detail::MapMat<T> GA(pa->grad.data() + static_cast<std::size_t>(i) * M * K, M, K);
          GA.noalias() += G * Bm.transpose();
        }
        if (pb->needs_grad) {
          detail::CMapMat<T> A(pa->value.data() + static_cast<std::size_t>(i) * M * K, M, K);
          detail::MapMat<T> GB(pb->grad.data() + static_cast<std::size_t>(i) * K * N, K, N);
          GB.noalias() += A.transpose() * G;
        }
      }
    };
  return Var<T>(n);
}

/// x (R, C) + bias (C), broadcast across rows.
template <class T>
Var<T> add_bias_rows(const Var<T>& x, const Var<T>& bias) {
  detail::check(x.shape().size() == 2 && bias.shape().size() == 1 &&
                    x.shape()[1] == bias.shape()[0],
                "add_bias_rows: shape mismatch");
  int R = x.shape()[0], C = x.shape()[1];
  auto n = detail::make_node<T>(x.shape(), {x.node(), bias.node()});
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c)
      n->value[static_cast<std::size_t>(r) * C + c] =
          x.value()[static_cast<std::size_t>(r) * C + c] + bias.value()[c];
  if (n->needs_grad)
    n->backward_fn = [R, C](Node<T>& self) {
      auto& px = self.parents[0];
      auto& pb = self.parents[1];
      if (px->needs_grad) {
        px->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          px->grad[i] += self.grad[i];
      }
      if (pb->needs_grad) {
        pb->ensure_grad();
        for (int r = 0; r < R; ++r)
          for (int c = 0; c < C; ++c)
            pb->grad[c] += self.grad[static_cast<std::size_t>(r) * C + c];
      }
    };
  return Var<T>(n);
}

/// x (R, C) + table (N, C) tiled across groups of rows (R = B * N).
template <class T>
Var<T> add_tiled_rows(const Var<T>& x, const Var<T>& table) {
  detail::check(x.shape().size() == 2 && table.shape().size() == 2 &&
                    x.shape()[1] == table.shape()[1] &&
                    x.shape()[0] % table.shape()[0] == 0,
                "add_tiled_rows: shape mismatch");
  int R = x.shape()[0], C = x.shape()[1], N = table.shape()[0];
  auto n = detail::make_node<T>(x.shape(), {x.node(), table.node()});
  for (int r = 0; r < R; ++r) {
    const T* t = table.value().data() + static_cast<std::size_t>(r % N) * C;
    for (int c = 0; c < C; ++c)
      n->value[static_cast<std::size_t>(r) * C + c] =
          x.value()[static_cast<std::size_t>(r) * C + c] + t[c];
  }
  if (n->needs_grad)
    n->backward_fn = [R, C, N](Node<T>& self) {
      auto& px = self.parents[0];
      auto& pt = self.parents[1];
      if (px->needs_grad) {
        px->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          px->grad[i] += self.grad[i];
      }
      if (pt->needs_grad) {
        pt->ensure_grad();
        for (int r = 0; r < R; ++r) {
          T* t = pt->grad.data() + static_cast<std::size_t>(r % N) * C;
          for (int c = 0; c < C; ++c)
            t[c] += self.grad[static_cast<std::size_t>(r) * C + c];
        }
      }
    };
  return Var<T>(n);
}

// ---------------------------------------------------------------------------
// Reductions and row-structured ops
// ---------------------------------------------------------------------------

template <class T>
Var<T> mean_all(const Var<T>& a) {
  auto n = detail::make_node<T>({1}, {a.node()});
  T acc = T(0);
  for (T v : a.value()) acc += v;
  const T inv = T(1) / static_cast<T>(a.size());
  n->value[0] = acc * inv;
  if (n->needs_grad)
    n->backward_fn = [inv](Node<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      T g = self.grad[0] * inv;
      for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += g;
    };
  return Var<T>(n);
}

template <class T>
Var<T> sum_all(const Var<T>& a) {
  auto n = detail::make_node<T>({1}, {a.node()});
  T acc = T(0);
  for (T v : a.value()) acc += v;
  n->value[0] = acc;
  if (n->needs_grad)
    n->backward_fn = [](Node<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      T g = self.grad[0];
      for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += g;
    };
  return Var<T>(n);
}

/// Mean over groups of `group` consecutive rows: (B*group, C) -> (B, C).
template <class T>
Var<T> group_mean_rows(const Var<T>& x, int group) {
  detail::check(x.shape().size() == 2 && x.shape()[0] % group == 0,
                "group_mean_rows: shape mismatch");
  int R = x.shape()[0], C = x.shape()[1], B = R / group;
  auto n = detail::make_node<T>({B, C}, {x.node()});
  const T inv = T(1) / static_cast<T>(group);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      T acc = T(0);
      for (int g = 0; g < group; ++g)
        acc += x.value()[(static_cast<std::size_t>(b) * group + g) * C + c];
      n->value[static_cast<std::size_t>(b) * C + c] = acc * inv;
    }
  if (n->needs_grad)
    n->backward_fn = [B, C, group, inv](Node<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (int b = 0; b < B; ++b)
        for (int g = 0; g < group; ++g)
          for (int c = 0; c < C; ++c)
            p->grad[(static_cast<std::size_t>(b) * group + g) * C + c] +=
                self.grad[static_cast<std::size_t>(b) * C + c] * inv;
    };
  return Var<T>(n);
}

/// Softmax over the last dimension of any-rank tensor.
template <class T>
Var<T> softmax_lastdim(const Var<T>& a) {
  int D = a.shape().back();
  std::size_t rows = a.size() / D;
  auto n = detail::make_node<T>(a.shape(), {a.node()});
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = a.value().data() + r * D;
    T* out = n->value.data() + r * D;
    T mx = in[0];
    for (int i = 1; i < D; ++i) mx = std::max(mx, in[i]);
    T sum = T(0);
    for (int i = 0; i < D; ++i) {
      out[i] = std::exp(in[i] - mx);
      sum += out[i];
    }
    T inv = T(1) / sum;
    for (int i = 0; i < D; ++i) out[i] *= inv;
  }
  if (n->needs_grad)
    n->backward_fn = [D, rows](Node<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const T* y = self.value.data() + r * D;
        const T* g = self.grad.data() + r * D;
        T* gx = p->grad.data() + r * D;
        T dot = T(0);
        for (int i = 0; i < D; ++i) dot += g[i] * y[i];
        for (int i = 0; i < D; ++i) gx[i] += y[i] * (g[i] - dot);
      }
    };
  return Var<T>(n);
}

/// Rows scaled to unit L2 norm.
template <class T>
Var<T> l2_normalize_rows(const Var<T>& a, T eps = T(1e-10)) {
  detail::check(a.shape().size() == 2, "l2_normalize_rows: need 2D");
  int R = a.shape()[0], C = a.shape()[1];
  auto n = detail::make_node<T>(a.shape(), {a.node()});
  std::vector<T> inv_norm(R);
  for (int r = 0; r < R; ++r) {
    const T* in = a.value().data() + static_cast<std::size_t>(r) * C;
    T sq = T(0);
    for (int c = 0; c < C; ++c) sq += in[c] * in[c];
    inv_norm[r] = T(1) / std::sqrt(sq + eps);
    T* out = n->value.data() + static_cast<std::size_t>(r) * C;
    for (int c = 0; c < C; ++c) out[c] = in[c] * inv_norm[r];
  }
  if (n->needs_grad)
    n->backward_fn = [R, C, inv_norm](Node<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (int r = 0; r < R; ++r) {
        const T* y = self.value.data() + static_cast<std::size_t>(r) * C;
        const T* g = self.grad.data() + static_cast<std::size_t>(r) * C;
        T* gx = p->grad.data() + static_cast<std::size_t>(r) * C;
        T dot = T(0);
        for (int c = 0; c < C; ++c) dot += g[c] * y[c];
        for (int c = 0; c < C; ++c) gx[c] += inv_norm[r] * (g[c] - dot * y[c]);
      }
    };
  return Var<T>(n);
}

/**
 * Cross entropy of a square logit matrix whose diagonal holds the positive
 * pair: mean over rows i of [logsumexp(row_i) - logits(i, i)].
 */
template <class T>
Var<T> diagonal_cross_entropy(const Var<T>& logits) {
  detail::check(logits.shape().size() == 2 && logits.shape()[0] == logits.shape()[1],
                "diagonal_cross_entropy: need square logits");
  int K = logits.shape()[0];
  auto n = detail::make_node<T>({1}, {logits.node()});
  T loss = T(0);
  for (int r = 0; r < K; ++r) {
    const T* in = logits.value().data() + static_cast<std::size_t>(r) * K;
    T mx = in[0];
    for (int i = 1; i < K; ++i) mx = std::max(mx, in[i]);
    T sum = T(0);
    for (int i = 0; i < K; ++i) sum += std::exp(in[i] - mx);
    loss += mx + std::log(sum) - in[r];
  }
  n->value[0] = loss / static_cast<T>(K);
  if (n->needs_grad)
    n->backward_fn = [K](Node<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      T g = self.grad[0] / static_cast<T>(K);
      for (int r = 0; r < K; ++r) {
        const T* in = p->value.data() + static_cast<std::size_t>(r) * K;
        T* gx = p->grad.data() + static_cast<std::size_t>(r) * K;
        T mx = in[0];
        for (int i = 1; i < K; ++i) mx = std::max(mx, in[i]);
        T sum = T(0);
        for (int i = 0; i < K; ++i) sum += std::exp(in[i] - mx);
        for (int i = 0; i < K; ++i) {
          T soft = std::exp(in[i] - mx) / sum;
          gx[i] += g * (soft - (i == r ? T(1) : T(0)));
        }
      }
    };
  return Var<T>(n);
}

/**
 * Gathers feature vectors at given spatial indices of one batch item:
 * x (N, C, H, W), image n, indices into H*W -> (K, C).
 */
template <class T>
Var<T> gather_spatial(const Var<T>& x, int image, const std::vector<int>& indices) {
  detail::check(x.shape().size() == 4, "gather_spatial: need NCHW");
  int C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  detail::check(image >= 0 && image < x.shape()[0], "gather_spatial: bad image");
  int K = static_cast<int>(indices.size());
  auto n = detail::make_node<T>({K, C}, {x.node()});
  const std::size_t img_off = static_cast<std::size_t>(image) * C * H * W;
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (int k = 0; k < K; ++k)
    for (int c = 0; c < C; ++c)
      n->value[static_cast<std::size_t>(k) * C + c] =
          x.value()[img_off + c * plane + indices[k]];
  if (n->needs_grad)
    n->backward_fn = [C, plane, img_off, indices](Node<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (std::size_t k = 0; k < indices.size(); ++k)
        for (int c = 0; c < C; ++c)
          p->grad[img_off + c * plane + indices[k]] +=
              self.grad[k * C + c];
    };
  return Var<T>(n);
}

/// Stops gradient flow; value is shared by copy.
template <class T>
Var<T> detach(const Var<T>& a) {
  return Var<T>::from_data(a.shape(), a.value(), false);
}

// ---------------------------------------------------------------------------
// Attention head helpers
// ---------------------------------------------------------------------------

/// (B*N, H*dh) -> (B*H, N, dh)
template <class T>
Var<T> split_heads(const Var<T>& x, int batch, int tokens, int heads) {
  detail::check(x.shape().size() == 2 && x.shape()[0] == batch * tokens &&
                    x.shape()[1] % heads == 0,
                "split_heads: shape mismatch");
  int dh = x.shape()[1] / heads;
  auto n = detail::make_node<T>({batch * heads, tokens, dh}, {x.node()});
  for (int b = 0; b < batch; ++b)
    for (int t = 0; t < tokens; ++t)
      for (int h = 0; h < heads; ++h)
        for (int d = 0; d < dh; ++d)
          n->value[((static_cast<std::size_t>(b) * heads + h) * tokens + t) * dh + d] =
              x.value()[(static_cast<std::size_t>(b) * tokens + t) * heads * dh +
                        h * dh + d];
  if (n->needs_grad)
    n->backward_fn = [batch, tokens, heads, dh](Node<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (int b = 0; b < batch; ++b)
        for (int t = 0; t < tokens; ++t)
          for (int h = 0; h < heads; ++h)
            for (int d = 0; d < dh; ++d)
              p->grad[(static_cast<std::size_t>(b) * tokens + t) * heads * dh +
                      h * dh + d] +=
                  self.grad[((static_cast<std::size_t>(b) * heads + h) * tokens + t) *
                                dh + d];
    };
  return Var<T>(n);
}

/// (B*H, N, dh) -> (B*N, H*dh)
template <class T>
Var<T> merge_heads(const Var<T>& x, int batch, int tokens, int heads) {
  detail::check(x.shape().size() == 3 && x.shape()[0] == batch * heads &&
                    x.shape()[1] == tokens,
                "merge_heads: shape mismatch");
  int dh = x.shape()[2];
  auto n = detail::make_node<T>({batch * tokens, heads * dh}, {x.node()});
  for (int b = 0; b < batch; ++b)
    for (int t = 0; t < tokens; ++t)
      for (int h = 0; h < heads; ++h)
        for (int d = 0; d < dh; ++d)
          n->value[(static_cast<std::size_t>(b) * tokens + t) * heads * dh + h * dh +
                   d] =
              x.value()[((static_cast<std::size_t>(b) * heads + h) * tokens + t) * dh +
                        d];
  if (n->needs_grad)
    n->backward_fn = [batch, tokens, heads, dh](Node<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (int b = 0; b < batch; ++b)
        for (int t = 0; t < tokens; ++t)
          for (int h = 0; h < heads; ++h)
            for (int d = 0; d < dh; ++d)
              p->grad[((static_cast<std::size_t>(b) * heads + h) * tokens + t) * dh +
                      d] +=
                  self.grad[(static_cast<std::size_t>(b) * tokens + t) * heads * dh +
                            h * dh + d];
    };
  return Var<T>(n);
}

}  // namespace teedepth::nn

#endif  // TEEDEPTH_NN_TENSOR_HPP
