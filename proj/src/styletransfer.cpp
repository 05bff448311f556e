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

#include <algorithm>

#include "teedepth/checkpoint.hpp"
#include "teedepth/common.hpp"

namespace teedepth {

double ssim(const USImage& a, const USImage& b, const SSIMConfig& cfg) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument("ssim: image sizes differ");
  auto to_var = [](const USImage& img) {
    std::vector<float> data = img.to_float();
    return nn::Var<float>::from_data({1, 1, img.height, img.width},
                                     std::move(data), false);
  };
  return static_cast<double>(ssim_op(to_var(a), to_var(b), cfg).item());
}

std::vector<int> sample_patch_indices(Rng& rng, int total, int count) {
  if (count >= total) {
    std::vector<int> all(total);
    for (int i = 0; i < total; ++i) all[i] = i;
    return all;
  }
  // Partial Fisher-Yates over the index range.
  std::vector<int> pool(total);
  for (int i = 0; i < total; ++i) pool[i] = i;
  for (int i = 0; i < count; ++i) {
    int j = i + rng.uniform_int(0, total - 1 - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

USImage translate(const StyleTransferModel& model, const USImage& img_real) {
  if (!model.initialized)
    throw StateError("translate: style-transfer model has no parameters");
  if (img_real.width != 128 || img_real.height != 128)
    throw std::invalid_argument("translate: expected a 128x128 image");

  std::vector<float> data = img_real.to_float();
  for (auto& v : data) v = 2.0f * v - 1.0f;
  auto x = nn::Var<float>::from_data({1, 1, 128, 128}, std::move(data), false);
  auto out = model.generator.forward(x).out;
  std::vector<float> mapped(out.value().size());
  for (std::size_t i = 0; i < mapped.size(); ++i)
    mapped[i] = (out.value()[i] + 1.0f) / 2.0f;
  USImage result = USImage::from_float(mapped, 128, 128, Domain::kTranslated,
                                       img_real.fan);
  result.apply_fan_mask();
  return result;
}

void save_st_model(StyleTransferModel& m, const std::string& path) {
  nlohmann::ordered_json meta;
  meta["archive"] = "style_transfer";
  meta["base"] = m.base;
  meta["disc_base"] = m.disc_base;
  meta["proj_dim"] = m.proj_dim;
  meta["seed"] = m.init_seed;
  meta["weights"] = {{"lambda1", m.weights.lambda1}, {"lambda2", m.weights.lambda2},
                     {"lambda3", m.weights.lambda3}, {"gan_weight", m.weights.gan_weight},
                     {"tau", m.weights.tau},         {"n_patches", m.weights.n_patches}};
  save_checkpoint(path, meta, m.state());
}

StyleTransferModel load_st_model(const std::string& path) {
  nlohmann::ordered_json meta = peek_checkpoint(path);
  if (meta.value("archive", "") != "style_transfer")
    throw std::runtime_error("not a style-transfer checkpoint: " + path);
  StyleTransferModel m = build_style_transfer<float>(
      meta.at("seed").get<std::uint64_t>(), meta.at("base").get<int>(),
      meta.at("disc_base").get<int>(), meta.at("proj_dim").get<int>());
  const auto& w = meta.at("weights");
  m.weights.lambda1 = w.at("lambda1").get<double>();
  m.weights.lambda2 = w.at("lambda2").get<double>();
  m.weights.lambda3 = w.at("lambda3").get<double>();
  m.weights.gan_weight = w.at("gan_weight").get<double>();
  m.weights.tau = w.at("tau").get<double>();
  m.weights.n_patches = w.at("n_patches").get<int>();
  load_checkpoint(path, m.state());
  return m;
}

}  // namespace teedepth
