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

#include "teedepth/styletransfer.hpp"

#include <cmath>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "teedepth/common.hpp"
#include "teedepth/nn/adam.hpp"
#include "teedepth/rng.hpp"

using namespace teedepth;
using DVar = nn::Var<double>;

namespace {

DVar random_image_var(Rng& rng, int n, int size, double lo = -1.0, double hi = 1.0) {
  std::vector<double> data(static_cast<std::size_t>(n) * size * size);
  for (auto& v : data) v = rng.uniform(lo, hi);
  return DVar::from_data({n, 1, size, size}, std::move(data), false);
}

USImage random_us(Rng& rng) {
  USImage img(128, 128, Domain::kReal);
  for (auto& px : img.pixels)
    px = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  img.apply_fan_mask();
  return img;
}

}  // namespace

TEST_CASE("ssim: identity is exactly 1") {
  Rng rng(1);
  auto a = random_image_var(rng, 1, 32, 0.0, 1.0);
  CHECK(ssim_op(a, a).item() == 1.0);

  USImage img = random_us(rng);
  CHECK(ssim(img, img) == 1.0);
}

TEST_CASE("ssim: zeros-vs-ones closed form (L = 1)") {
  auto zeros = DVar::zeros({1, 1, 16, 16});
  auto ones = DVar::from_data({1, 1, 16, 16}, std::vector<double>(256, 1.0), false);
  double got = ssim_op(zeros, ones).item();
  // Constant images: mu_a = 0, mu_b = 1, all (co)variances 0, so
  //   [(2*0*1 + C1)(0 + C2)] / [(0 + 1 + C1)(0 + C2)] = C1 / (1 + C1).
  const double c1 = 1e-4, c2 = 9e-4;
  double expected = (c1 * c2) / ((1.0 + c1) * c2);
  CHECK(std::fabs(got - expected) < 1e-10);
  CHECK(expected == doctest::Approx(9.999000099990002e-05).epsilon(1e-12));
}

TEST_CASE("ssim: symmetry and bounds on random pairs") {
  Rng rng(2);
  for (int k = 0; k < 60; ++k) {
    auto a = random_image_var(rng, 1, 16, 0.0, 1.0);
    auto b = random_image_var(rng, 1, 16, 0.0, 1.0);
    double ab = ssim_op(a, b).item();
    double ba = ssim_op(b, a).item();
    CHECK(std::fabs(ab - ba) < 1e-12);
    CHECK(ab >= -1.0 - 1e-12);
    CHECK(ab <= 1.0 + 1e-12);
  }
}

TEST_CASE("ssim: shape mismatch is an argument error") {
  auto a = DVar::zeros({1, 1, 16, 16});
  auto b = DVar::zeros({1, 1, 12, 12});
  CHECK_THROWS_AS(ssim_op(a, b), std::invalid_argument);
}

TEST_CASE("patch_nce_loss: uniform logits give ln(N_p)") {
  STLossWeights w;
  for (int np : {2, 4, 256}) {
    std::vector<double> row{0.3, -0.7, 0.2};
    std::vector<double> data;
    for (int i = 0; i < np; ++i) data.insert(data.end(), row.begin(), row.end());
    auto q = DVar::from_data({np, 3}, data, false);
    auto k = DVar::from_data({np, 3}, data, false);
    double got = patch_nce_loss(q, k, w).item();
    CHECK(std::fabs(got - std::log(static_cast<double>(np))) < 1e-9);
  }
  // The N_p = 4 case is the hand value 1.3863.
  CHECK(std::log(4.0) == doctest::Approx(1.38629436).epsilon(1e-8));
}

TEST_CASE("patch_nce_loss: matches a hand-computed 3-location example") {
  STLossWeights w;
  w.tau = 0.25;
  std::vector<double> qd{1.0, 0.0, 0.6, 0.8, -0.3, 0.4};
  std::vector<double> kd{0.8, 0.6, 0.0, 1.0, 0.5, -0.5};
  auto q = DVar::from_data({3, 2}, qd, false);
  auto k = DVar::from_data({3, 2}, kd, false);

  // Independent oracle: normalize rows, cosine logits / tau, softmax CE.
  double loss_oracle = 0.0;
  for (int i = 0; i < 3; ++i) {
    double qi[2] = {qd[2 * i], qd[2 * i + 1]};
    double qn = std::hypot(qi[0], qi[1]);
    double logits[3];
    for (int j = 0; j < 3; ++j) {
      double kj[2] = {kd[2 * j], kd[2 * j + 1]};
      double kn = std::hypot(kj[0], kj[1]);
      logits[j] = (qi[0] * kj[0] + qi[1] * kj[1]) / (qn * kn) / w.tau;
    }
    double mx = std::max({logits[0], logits[1], logits[2]});
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    loss_oracle += (mx + std::log(z)) - logits[i];
  }
  loss_oracle /= 3.0;

  CHECK(std::fabs(patch_nce_loss(q, k, w).item() - loss_oracle) < 1e-9);
}

TEST_CASE("patch_nce_loss: nonnegative, small at low temperature, symmetric") {
  Rng rng(3);
  STLossWeights w;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> qd(8 * 5), kd(8 * 5);
    for (auto& v : qd) v = rng.normal();
    for (auto& v : kd) v = rng.normal();
    auto q = DVar::from_data({8, 5}, qd, false);
    auto k = DVar::from_data({8, 5}, kd, false);
    CHECK(patch_nce_loss(q, k, w).item() >= 0.0);
  }

  // Identical stacks at a small temperature: positives dominate.
  std::vector<double> fd(6 * 4);
  for (auto& v : fd) v = rng.normal();
  auto f = DVar::from_data({6, 4}, fd, false);
  STLossWeights cold = w;
  cold.tau = 0.01;
  CHECK(patch_nce_loss(f, f, cold).item() < 1e-6);

  // Swapping identical query/key stacks changes nothing.
  CHECK(std::fabs(patch_nce_loss(f, f, w).item() -
                  patch_nce_loss(f, f, w).item()) < 1e-6);

  auto tiny = DVar::from_data({1, 4}, {1.0, 0.0, 0.0, 0.0}, false);
  CHECK_THROWS_AS(patch_nce_loss(tiny, tiny, w), std::invalid_argument);
}

TEST_CASE("lsgan: closed-form score cases") {
  auto const_scores = [](int n, double v) {
    return DVar::from_data({n, 1, 2, 2}, std::vector<double>(n * 4, v), false);
  };
  // Perfect discriminator: 1 on real, 0 on fake.
  CHECK(lsgan_d_loss(const_scores(2, 1.0), const_scores(2, 0.0)).item() ==
        doctest::Approx(0.0).epsilon(1e-15));
  // Constant 1/2 everywhere.
  CHECK(lsgan_d_loss(const_scores(2, 0.5), const_scores(2, 0.5)).item() ==
        doctest::Approx(0.25));
  CHECK(lsgan_g_loss(const_scores(2, 0.5)).item() == doctest::Approx(0.25));

  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    auto r = random_image_var(rng, 1, 2);
    auto f = random_image_var(rng, 1, 2);
    auto rr = nn::reshape(r, {1, 1, 2, 2});
    auto ff = nn::reshape(f, {1, 1, 2, 2});
    CHECK(lsgan_d_loss(rr, ff).item() >= 0.0);
    CHECK(lsgan_g_loss(ff).item() >= 0.0);
  }
}

TEST_CASE("adversarial_loss: wrapper over a real discriminator") {
  auto model = build_style_transfer<double>(5, 4, 6, 8);
  Rng rng(6);
  auto real = random_image_var(rng, 2, 32);
  auto fake = random_image_var(rng, 2, 32);
  auto [loss_d, loss_g] = adversarial_loss(model.discriminator, real, fake);
  CHECK(loss_d.item() >= 0.0);
  CHECK(loss_g.item() >= 0.0);

  auto empty = DVar::zeros({0, 1, 32, 32});
  CHECK_THROWS_AS(adversarial_loss(model.discriminator, empty, fake),
                  std::invalid_argument);
}

TEST_CASE("total_loss: degenerate weights give exactly zero") {
  auto model = build_style_transfer<double>(7, 4, 6, 8);
  Rng rng(7);
  auto r = random_image_var(rng, 1, 16);
  auto s = random_image_var(rng, 1, 16);
  STLossWeights w;
  w.lambda1 = w.lambda2 = w.lambda3 = 0.0;
  w.gan_weight = 0.0;
  w.n_patches = 8;
  Rng sample_rng(1);
  auto parts = total_loss(model, r, s, w, sample_rng);
  CHECK(parts.total.item() == 0.0);
}

TEST_CASE("total_loss: identity generator makes the SSIM term exactly -1") {
  // Fresh build: zero-initialized output conv means G(x) = x.
  auto model = build_style_transfer<double>(8, 4, 6, 8);
  Rng rng(8);
  auto r = random_image_var(rng, 1, 16);
  auto s = random_image_var(rng, 1, 16);
  STLossWeights w;
  w.lambda1 = w.lambda2 = 0.0;
  w.gan_weight = 0.0;
  w.lambda3 = -1.0;
  w.n_patches = 8;
  Rng sample_rng(2);
  auto parts = total_loss(model, r, s, w, sample_rng);
  CHECK(parts.ssim.item() == 1.0);
  CHECK(parts.total.item() == -1.0);
}

TEST_CASE("total_loss: analytic gradients match finite differences (tiny G)") {
  auto model = build_style_transfer<double>(9, 4, 6, 8);
  Rng perturb(11);
  // Move off the identity point so the SSIM term has generic gradients.
  for (auto& v : model.generator.out_conv.w.value()) v = 0.02 * perturb.normal();

  Rng data_rng(12);
  auto r = random_image_var(data_rng, 1, 16);
  auto s = random_image_var(data_rng, 1, 16);
  STLossWeights w;
  w.n_patches = 8;

  auto loss_fn = [&] {
    Rng sample_rng(77);  // same patch indices on every evaluation
    return total_loss(model, r, s, w, sample_rng).total;
  };

  std::vector<DVar> checked{model.generator.in_conv.w, model.generator.out_conv.w,
                            model.generator.res[0].c1.w, model.generator.up2.w,
                            model.heads[1].fc1.w};
  auto loss = loss_fn();
  for (auto& p : checked) p.grad().assign(p.size(), 0.0);
  nn::backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto& p : checked) analytic.push_back(p.grad());

  const double h = 1e-5;
  for (std::size_t pi = 0; pi < checked.size(); ++pi) {
    auto& vals = checked[pi].value();
    std::size_t stride = std::max<std::size_t>(1, vals.size() / 6);
    for (std::size_t j = 0; j < vals.size(); j += stride) {
      double keep = vals[j];
      vals[j] = keep + h;
      double lp = loss_fn().item();
      vals[j] = keep - h;
      double lm = loss_fn().item();
      vals[j] = keep;
      double fd = (lp - lm) / (2 * h);
      double rel = std::fabs(fd - analytic[pi][j]) /
                   std::max({1e-6, std::fabs(fd), std::fabs(analytic[pi][j])});
      CHECK(rel < 1e-3);
    }
  }
}

TEST_CASE("ssim term: a generator step in its direction does not decrease it") {
  auto model = build_style_transfer<double>(10, 4, 6, 8);
  Rng perturb(13);
  for (auto& v : model.generator.out_conv.w.value()) v = 0.05 * perturb.normal();

  Rng data_rng(14);
  auto r = random_image_var(data_rng, 1, 16);
  auto map01 = [](const DVar& x) {
    return nn::add_scalar(nn::scale(x, 0.5), 0.5);
  };
  auto ssim_of = [&] {
    auto out = model.generator.forward(r).out;
    return ssim_op(map01(out), map01(r));
  };

  double before = ssim_of().item();
  // One gradient step on loss = -ssim (the lambda3 = -1 contribution).
  auto params = model.generator_parameters();
  for (auto& p : params) p.grad().assign(p.size(), 0.0);
  auto loss = nn::scale(ssim_of(), -1.0);
  nn::backward(loss);
  const double lr = 1e-4;
  for (auto& p : params)
    for (std::size_t j = 0; j < p.size(); ++j) p.value()[j] -= lr * p.grad()[j];
  double after = ssim_of().item();
  CHECK(after >= before);
}

TEST_CASE("translate: shape, tag, determinism, near-identity at init") {
  StyleTransferModel model = build_style_transfer<float>(20);
  Rng rng(15);
  USImage real = random_us(rng);

  USImage out1 = translate(model, real);
  USImage out2 = translate(model, real);
  CHECK(out1.pixels == out2.pixels);
  CHECK(out1.domain == Domain::kTranslated);
  CHECK(out1.width == 128);
  CHECK(out1.height == 128);
  CHECK(out1.fan_mask_clean());

  // Zero-initialized residual: the untrained generator is the identity.
  CHECK(ssim(out1, real) > 0.9);

  StyleTransferModel empty;
  CHECK_THROWS_AS(translate(empty, real), StateError);
}

TEST_CASE("st checkpoint: save/load reproduces translation bit-exactly") {
  namespace fs = std::filesystem;
  StyleTransferModel model = build_style_transfer<float>(21);
  Rng rng(16);
  // Non-trivial weights.
  for (auto& v : model.generator.out_conv.w.value())
    v = 0.05f * static_cast<float>(rng.normal());
  USImage real = random_us(rng);
  USImage before = translate(model, real);

  fs::path path = fs::temp_directory_path() / "teedepth_st.ckpt";
  save_st_model(model, path.string());
  StyleTransferModel loaded = load_st_model(path.string());
  USImage after = translate(loaded, real);
  CHECK(before.pixels == after.pixels);
  CHECK(loaded.weights.lambda1 == model.weights.lambda1);
  fs::remove(path);
}
