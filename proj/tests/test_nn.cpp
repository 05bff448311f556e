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

#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "teedepth/nn/adam.hpp"
#include "teedepth/nn/layers.hpp"
#include "teedepth/rng.hpp"

using namespace teedepth;
using nn::Var;

namespace {

using DVar = Var<double>;

DVar random_var(Rng& rng, std::vector<int> shape, bool needs_grad = true,
                double scale = 1.0) {
  std::size_t n = DVar::numel(shape);
  std::vector<double> data(n);
  for (auto& v : data) v = rng.normal(0.0, scale);
  return DVar::from_data(std::move(shape), std::move(data), needs_grad);
}

// Central-difference check of d(loss)/d(param) for every listed parameter.
void gradcheck(const std::vector<DVar>& params,
               const std::function<DVar()>& loss_fn, double tol = 2e-6,
               double h = 1e-5) {
  DVar loss = loss_fn();
  for (const DVar& p : params) {
    const_cast<DVar&>(p).grad().assign(p.size(), 0.0);
  }
  nn::backward(loss);

  for (const DVar& p : params) {
    std::vector<double> analytic = p.grad();
    std::vector<double>& val = const_cast<DVar&>(p).value();
    std::size_t stride = std::max<std::size_t>(1, val.size() / 24);
    for (std::size_t j = 0; j < val.size(); j += stride) {
      double keep = val[j];
      val[j] = keep + h;
      double lp = loss_fn().item();
      val[j] = keep - h;
      double lm = loss_fn().item();
      val[j] = keep;
      double fd = (lp - lm) / (2.0 * h);
      double rel = std::fabs(fd - analytic[j]) /
                   std::max({1.0, std::fabs(fd), std::fabs(analytic[j])});
      if (rel >= tol) {
        CAPTURE(j);
        CAPTURE(fd);
        CAPTURE(analytic[j]);
      }
      CHECK(rel < tol);
    }
  }
}

// Scalar probe loss: mean(output * fixed_random) keeps every grad informative.
DVar probe(const DVar& out, const DVar& weights) {
  return nn::mean_all(nn::mul(out, weights));
}

}  // namespace

TEST_CASE("gradcheck: elementwise ops") {
  Rng rng(1);
  DVar a = random_var(rng, {3, 4});
  DVar b = random_var(rng, {3, 4});
  DVar w = random_var(rng, {3, 4}, false);
  // Keep divide away from zero denominators.
  for (auto& v : b.value()) v = v > 0 ? v + 1.5 : v - 1.5;

  gradcheck({a, b}, [&] { return probe(nn::add(a, b), w); });
  gradcheck({a, b}, [&] { return probe(nn::sub(a, b), w); });
  gradcheck({a, b}, [&] { return probe(nn::mul(a, b), w); });
  gradcheck({a, b}, [&] { return probe(nn::divide(a, b), w); });
  gradcheck({a}, [&] { return probe(nn::scale(a, 2.5), w); });
  gradcheck({a}, [&] { return probe(nn::add_scalar(a, -1.25), w); });
  gradcheck({a}, [&] { return probe(nn::mul(a, a), w); });  // square via self
}

TEST_CASE("gradcheck: activations") {
  Rng rng(2);
  DVar a = random_var(rng, {4, 5});
  // Push values away from the ReLU kink so finite differences are valid.
  for (auto& v : a.value())
    if (std::fabs(v) < 0.05) v += 0.2;
  DVar w = random_var(rng, {4, 5}, false);

  gradcheck({a}, [&] { return probe(nn::relu(a), w); });
  gradcheck({a}, [&] { return probe(nn::leaky_relu(a, 0.2), w); });
  gradcheck({a}, [&] { return probe(nn::gelu(a), w); });
  gradcheck({a}, [&] { return probe(nn::tanh_op(a), w); });
}

TEST_CASE("gradcheck: matmul, bmm, transpose, reshape") {
  Rng rng(3);
  DVar a = random_var(rng, {3, 4});
  DVar b = random_var(rng, {4, 5});
  DVar w = random_var(rng, {3, 5}, false);
  gradcheck({a, b}, [&] { return probe(nn::matmul(a, b), w); });

  DVar a3 = random_var(rng, {2, 3, 4});
  DVar b3 = random_var(rng, {2, 4, 5});
  DVar w3 = random_var(rng, {2, 3, 5}, false);
  gradcheck({a3, b3}, [&] { return probe(nn::bmm(a3, b3), w3); });

  DVar wt = random_var(rng, {2, 4, 3}, false);
  gradcheck({a3}, [&] { return probe(nn::transpose_last2(a3), wt); });

  DVar wr = random_var(rng, {24}, false);
  gradcheck({a3}, [&] { return probe(nn::reshape(a3, {24}), wr); });
}

TEST_CASE("gradcheck: bias and tiled adds") {
  Rng rng(4);
  DVar x = random_var(rng, {6, 3});
  DVar b = random_var(rng, {3});
  DVar w = random_var(rng, {6, 3}, false);
  gradcheck({x, b}, [&] { return probe(nn::add_bias_rows(x, b), w); });

  DVar table = random_var(rng, {3, 3});
  gradcheck({x, table}, [&] { return probe(nn::add_tiled_rows(x, table), w); });
}

TEST_CASE("gradcheck: reductions and row ops") {
  Rng rng(5);
  DVar x = random_var(rng, {6, 4});
  DVar w = random_var(rng, {2, 4}, false);
  gradcheck({x}, [&] { return nn::mean_all(x); });
  gradcheck({x}, [&] { return nn::scale(nn::sum_all(x), 0.1); });
  gradcheck({x}, [&] { return probe(nn::group_mean_rows(x, 3), w); });

  DVar wf = random_var(rng, {6, 4}, false);
  gradcheck({x}, [&] { return probe(nn::softmax_lastdim(x), wf); });
  gradcheck({x}, [&] { return probe(nn::l2_normalize_rows(x), wf); });

  DVar logits = random_var(rng, {5, 5});
  gradcheck({logits}, [&] { return nn::diagonal_cross_entropy(logits); });
}

TEST_CASE("gradcheck: gather and attention reshapes") {
  Rng rng(6);
  DVar x = random_var(rng, {2, 3, 4, 4});
  std::vector<int> idx{0, 5, 9, 15, 7};
  DVar w = random_var(rng, {5, 3}, false);
  gradcheck({x}, [&] { return probe(nn::gather_spatial(x, 1, idx), w); });

  DVar tokens = random_var(rng, {2 * 5, 6});  // batch 2, 5 tokens, dim 6
  DVar w3 = random_var(rng, {2 * 3, 5, 2}, false);
  gradcheck({tokens},
            [&] { return probe(nn::split_heads(tokens, 2, 5, 3), w3); });
  DVar heads = random_var(rng, {2 * 3, 5, 2});
  DVar w2 = random_var(rng, {2 * 5, 6}, false);
  gradcheck({heads}, [&] { return probe(nn::merge_heads(heads, 2, 5, 3), w2); });
}

TEST_CASE("gradcheck: conv2d variants") {
  Rng rng(7);
  // k3 s1 same-pad with bias
  {
    DVar x = random_var(rng, {2, 3, 6, 6});
    DVar w = random_var(rng, {4, 3, 3, 3});
    DVar b = random_var(rng, {4});
    DVar probe_w = random_var(rng, {2, 4, 6, 6}, false);
    gradcheck({x, w, b},
              [&] { return probe(nn::conv2d(x, w, b, 1, 1), probe_w); });
  }
  // k4 s2 pad1 (discriminator-style)
  {
    DVar x = random_var(rng, {1, 2, 8, 8});
    DVar w = random_var(rng, {3, 2, 4, 4});
    DVar b = random_var(rng, {3});
    DVar probe_w = random_var(rng, {1, 3, 4, 4}, false);
    gradcheck({x, w, b},
              [&] { return probe(nn::conv2d(x, w, b, 2, 1), probe_w); });
  }
  // k5 valid conv (bridge-style reduction)
  {
    DVar x = random_var(rng, {1, 3, 8, 8});
    DVar w = random_var(rng, {2, 3, 5, 5});
    DVar probe_w = random_var(rng, {1, 2, 4, 4}, false);
    gradcheck({x, w}, [&] { return probe(nn::conv2d(x, w, 1, 0), probe_w); });
  }
}

TEST_CASE("gradcheck: pooling, upsampling, tiling") {
  Rng rng(8);
  DVar x = random_var(rng, {2, 2, 6, 6});
  // Spread values to avoid max ties.
  for (std::size_t i = 0; i < x.value().size(); ++i) x.value()[i] += 1e-3 * i;
  DVar wp = random_var(rng, {2, 2, 3, 3}, false);
  gradcheck({x}, [&] { return probe(nn::maxpool2x2(x), wp); });

  DVar y = random_var(rng, {1, 2, 3, 3});
  DVar wu = random_var(rng, {1, 2, 6, 6}, false);
  gradcheck({y}, [&] { return probe(nn::upsample_nearest2x(y), wu); });

  DVar z = random_var(rng, {2, 3, 6, 6});
  DVar wt = random_var(rng, {2 * 2 * 2, 3 * 3 * 3}, false);
  gradcheck({z}, [&] { return probe(nn::tiles_to_rows(z, 2), wt); });
}

TEST_CASE("gradcheck: normalization layers") {
  Rng rng(9);
  {
    nn::BatchNorm2dLayer<double> bn(3);
    // Non-trivial affine parameters.
    for (auto& g : bn.gamma.value()) g = 1.0 + 0.3 * rng.normal();
    for (auto& b : bn.beta.value()) b = 0.2 * rng.normal();
    DVar x = random_var(rng, {4, 3, 3, 3});
    DVar w = random_var(rng, {4, 3, 3, 3}, false);
    gradcheck({x, bn.gamma, bn.beta},
              [&] { return probe(bn.forward(x, true), w); }, 5e-6);
    bn.running_mean = {0.1, -0.2, 0.3};
    bn.running_var = {1.2, 0.8, 1.5};
    gradcheck({x, bn.gamma, bn.beta},
              [&] { return probe(bn.forward(x, false), w); });
  }
  {
    nn::InstanceNorm2d<double> inorm;
    DVar x = random_var(rng, {2, 3, 4, 4});
    DVar w = random_var(rng, {2, 3, 4, 4}, false);
    gradcheck({x}, [&] { return probe(inorm.forward(x), w); }, 5e-6);
  }
  {
    nn::LayerNormLayer<double> ln(6);
    for (auto& g : ln.gamma.value()) g = 1.0 + 0.3 * rng.normal();
    DVar x = random_var(rng, {5, 6});
    DVar w = random_var(rng, {5, 6}, false);
    gradcheck({x, ln.gamma, ln.beta}, [&] { return probe(ln.forward(x), w); },
              5e-6);
  }
}

TEST_CASE("gradcheck: composed attention block") {
  Rng rng(10);
  const int B = 2, N = 4, D = 6, H = 2;
  nn::LinearLayer<double> q_proj(D, D, rng), k_proj(D, D, rng), v_proj(D, D, rng);
  DVar tokens = random_var(rng, {B * N, D});
  DVar w = random_var(rng, {B * N, D}, false);

  auto attention = [&] {
    DVar q = nn::split_heads(q_proj.forward(tokens), B, N, H);
    DVar k = nn::split_heads(k_proj.forward(tokens), B, N, H);
    DVar v = nn::split_heads(v_proj.forward(tokens), B, N, H);
    DVar scores = nn::scale(nn::bmm(q, nn::transpose_last2(k)),
                            1.0 / std::sqrt(static_cast<double>(D / H)));
    DVar ctx = nn::bmm(nn::softmax_lastdim(scores), v);
    return probe(nn::merge_heads(ctx, B, N, H), w);
  };
  gradcheck({tokens, q_proj.w, q_proj.b, k_proj.w, v_proj.w}, attention, 5e-6);
}

TEST_CASE("adam: matches a hand-computed first step") {
  DVar p = DVar::from_data({2}, {1.0, -2.0}, true);
  nn::Adam<double> opt({p}, 0.9, 0.999);
  opt.zero_grad();
  p.grad() = {0.5, -1.5};
  opt.step(0.01);
  // First step with bias correction reduces to lr * g / (|g| + eps).
  CHECK(p.value()[0] == doctest::Approx(1.0 - 0.01 * 0.5 / (0.5 + 1e-8)).epsilon(1e-10));
  CHECK(p.value()[1] == doctest::Approx(-2.0 + 0.01 * 1.5 / (1.5 + 1e-8)).epsilon(1e-10));
}

TEST_CASE("detach stops gradients") {
  Rng rng(11);
  DVar a = random_var(rng, {2, 2});
  DVar loss = nn::mean_all(nn::mul(nn::detach(a), a));
  a.grad().assign(a.size(), 0.0);
  nn::backward(loss);
  // Gradient flows only through the non-detached factor.
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a.grad()[i] == doctest::Approx(a.value()[i] / 4.0));
}

TEST_CASE("engine determinism: identical graphs give identical bytes") {
  auto run = [] {
    Rng rng(123);
    Var<float> x = Var<float>::from_data({4, 3, 16, 16}, [&] {
      std::vector<float> v(4 * 3 * 16 * 16);
      Rng r(5);
      for (auto& e : v) e = static_cast<float>(r.normal());
      return v;
    }(), true);
    nn::Conv2dLayer<float> conv(8, 3, 3, 1, 1, rng);
    Var<float> loss = nn::mean_all(nn::mul(conv.forward(x), conv.forward(x)));
    x.grad().assign(x.size(), 0.0f);
    nn::backward(loss);
    return std::make_pair(loss.item(), x.grad());
  };
  auto [l1, g1] = run();
  auto [l2, g2] = run();
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}
