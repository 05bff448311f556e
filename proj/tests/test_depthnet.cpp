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

#include "teedepth/depthnet.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "teedepth/rng.hpp"

using namespace teedepth;

namespace {

template <class T>
nn::Var<T> random_images(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<T> data(static_cast<std::size_t>(n) * 128 * 128);
  for (auto& v : data) v = static_cast<T>(rng.uniform());
  return nn::Var<T>::from_data({n, 1, 128, 128}, std::move(data), false);
}

std::vector<USImage> random_us_images(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<USImage> out;
  for (int i = 0; i < n; ++i) {
    USImage img(128, 128, Domain::kSim);
    for (auto& px : img.pixels)
      px = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    img.apply_fan_mask();
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace

TEST_CASE("cnn_vit: batch of 16 gives 16 finite scalars") {
  DepthModel m = build_cnn_vit<float>(DepthNetConfig{}, 0);
  auto out = m.forward(random_images<float>(16, 1), false);
  REQUIRE(out.shape() == std::vector<int>{16, 1});
  for (float v : out.value()) CHECK(std::isfinite(v));
}

TEST_CASE("cnn_vit: token tensor is (batch, 25, 64)") {
  DepthModel m = build_cnn_vit<float>(DepthNetConfig{}, 0);
  auto toks = m.tokens(random_images<float>(3, 2), false);
  CHECK(toks.shape() == std::vector<int>{3, 25, 64});
}

TEST_CASE("builders: same seed reproduces identical parameters") {
  for (bool vit : {true, false}) {
    DepthModel a = vit ? build_cnn_vit<float>(DepthNetConfig{}, 7)
                       : build_cnn_baseline<float>(DepthNetConfig{}, 7);
    DepthModel b = vit ? build_cnn_vit<float>(DepthNetConfig{}, 7)
                       : build_cnn_baseline<float>(DepthNetConfig{}, 7);
    auto pa = a.parameters(), pb = b.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i)
      CHECK(pa[i].value() == pb[i].value());

    DepthModel c = vit ? build_cnn_vit<float>(DepthNetConfig{}, 8)
                       : build_cnn_baseline<float>(DepthNetConfig{}, 8);
    bool any_diff = false;
    auto pc = c.parameters();
    for (std::size_t i = 0; i < pa.size() && !any_diff; ++i)
      any_diff = pa[i].value() != pc[i].value();
    CHECK(any_diff);
  }
}

TEST_CASE("cnn baseline: one image, one finite scalar, shared trunk size") {
  DepthModel cnn = build_cnn_baseline<float>(DepthNetConfig{}, 3);
  auto out = cnn.forward(random_images<float>(1, 4), false);
  REQUIRE(out.shape() == std::vector<int>{1, 1});
  CHECK(std::isfinite(out.value()[0]));

  DepthModel vit = build_cnn_vit<float>(DepthNetConfig{}, 3);
  CHECK(cnn.parameter_count(cnn.trunk_parameters()) ==
        vit.parameter_count(vit.trunk_parameters()));
}

TEST_CASE("config validation rejects inconsistent settings") {
  DepthNetConfig bad;
  bad.vit_heads = 5;  // 64 % 5 != 0
  CHECK_THROWS_AS(build_cnn_vit<float>(bad, 0), std::invalid_argument);
  DepthNetConfig bad2;
  bad2.input_size = 64;
  CHECK_THROWS_AS(build_cnn_baseline<float>(bad2, 0), std::invalid_argument);
}

TEST_CASE("predict: zeroed head returns the training-depth mean") {
  DepthModel m = build_cnn_vit<float>(DepthNetConfig{}, 0);
  m.depth_mean = 55.5f;
  m.depth_std = 11.0f;
  m.head_fc2.w.value().assign(m.head_fc2.w.size(), 0.0f);
  m.head_fc2.b.value().assign(m.head_fc2.b.size(), 0.0f);
  auto imgs = random_us_images(2, 5);
  CHECK(predict(m, imgs[0]).depth_mm == doctest::Approx(55.5).epsilon(1e-6));
  CHECK(predict(m, imgs[1]).depth_mm == doctest::Approx(55.5).epsilon(1e-6));
}

TEST_CASE("predict: batch permutation permutes predictions, eval is deterministic") {
  DepthModel m = build_cnn_vit<float>(DepthNetConfig{}, 1);
  m.depth_mean = 60.0f;
  m.depth_std = 20.0f;
  auto imgs = random_us_images(4, 6);
  auto preds = predict_batch(m, imgs);
  auto preds_again = predict_batch(m, imgs);
  CHECK(preds == preds_again);  // exactly zero difference

  std::vector<USImage> permuted{imgs[2], imgs[0], imgs[3], imgs[1]};
  auto preds_perm = predict_batch(m, permuted);
  CHECK(preds_perm[0] == preds[2]);
  CHECK(preds_perm[1] == preds[0]);
  CHECK(preds_perm[2] == preds[3]);
  CHECK(preds_perm[3] == preds[1]);
}

TEST_CASE("predict: batched equals singly processed within 1e-5 relative") {
  for (bool vit : {true, false}) {
    DepthModel m = vit ? build_cnn_vit<float>(DepthNetConfig{}, 2)
                       : build_cnn_baseline<float>(DepthNetConfig{}, 2);
    m.depth_mean = 60.0f;
    m.depth_std = 20.0f;
    auto imgs = random_us_images(5, 7);
    auto batched = predict_batch(m, imgs);
    for (std::size_t i = 0; i < imgs.size(); ++i) {
      double single = predict(m, imgs[i]).depth_mm;
      CHECK(std::fabs(single - batched[i]) <=
            1e-5 * std::max(1.0, std::fabs(single)));
    }
  }
}

TEST_CASE("predict: wrong image size is an argument error") {
  DepthModel m = build_cnn_baseline<float>(DepthNetConfig{}, 0);
  USImage small(64, 64, Domain::kSim);
  CHECK_THROWS_AS(predict(m, small), std::invalid_argument);
}

TEST_CASE("gradient sanity: head-layer gradients match finite differences") {
  // Double precision, 2-sample batch, squared-error loss.
  auto m = build_cnn_vit<double>(DepthNetConfig{}, 11);
  auto images = random_images<double>(2, 12);
  auto target = nn::Var<double>::from_data({2, 1}, {0.3, -0.7}, false);

  auto loss_fn = [&] {
    auto out = m.forward(images, true);
    auto diff = nn::sub(out, target);
    return nn::mean_all(nn::mul(diff, diff));
  };

  auto loss = loss_fn();
  m.head_fc2.w.grad().assign(m.head_fc2.w.size(), 0.0);
  m.head_fc2.b.grad().assign(m.head_fc2.b.size(), 0.0);
  m.pos_embed.grad().assign(m.pos_embed.size(), 0.0);
  nn::backward(loss);
  std::vector<double> analytic_w = m.head_fc2.w.grad();
  std::vector<double> analytic_b = m.head_fc2.b.grad();

  const double h = 1e-5;
  auto fd_check = [&](std::vector<double>& vals, const std::vector<double>& analytic,
                      std::size_t stride) {
    for (std::size_t j = 0; j < vals.size(); j += stride) {
      double keep = vals[j];
      vals[j] = keep + h;
      double lp = loss_fn().item();
      vals[j] = keep - h;
      double lm = loss_fn().item();
      vals[j] = keep;
      double fd = (lp - lm) / (2 * h);
      double rel = std::fabs(fd - analytic[j]) /
                   std::max({1e-8, std::fabs(fd), std::fabs(analytic[j])});
      CHECK(rel < 1e-4);
    }
  };
  fd_check(m.head_fc2.w.value(), analytic_w, 13);
  fd_check(m.head_fc2.b.value(), analytic_b, 1);

  // Every positional-embedding token receives gradient on a generic batch.
  const int D = m.cfg.embed_dim;
  for (int t = 0; t < m.cfg.token_count(); ++t) {
    double mx = 0.0;
    for (int d = 0; d < D; ++d)
      mx = std::max(mx, std::fabs(m.pos_embed.grad()[t * D + d]));
    CHECK(mx > 0.0);
  }
}

TEST_CASE("checkpoint: save/load reproduces outputs bit-exactly") {
  namespace fs = std::filesystem;
  for (bool vit : {true, false}) {
    DepthModel m = vit ? build_cnn_vit<float>(DepthNetConfig{}, 21)
                       : build_cnn_baseline<float>(DepthNetConfig{}, 21);
    m.depth_mean = 47.25f;
    m.depth_std = 13.5f;
    // Perturb running stats so buffers are exercised too.
    m.trunk.bn1.running_mean[0] = 0.123f;
    m.trunk.bn2.running_var[3] = 1.75f;

    auto imgs = random_us_images(3, 9);
    auto before = predict_batch(m, imgs);

    fs::path path = fs::temp_directory_path() /
                    (vit ? "teedepth_vit.ckpt" : "teedepth_cnn.ckpt");
    save_depth_model(m, path.string());
    DepthModel loaded = load_depth_model(path.string());
    auto after = predict_batch(loaded, imgs);
    CHECK(before == after);
    CHECK(loaded.depth_mean == m.depth_mean);
    CHECK(loaded.kind == m.kind);
    fs::remove(path);
  }
}
