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

#include "teedepth/checkpoint.hpp"
#include "teedepth/common.hpp"

namespace teedepth {

const char* model_kind_name(ModelKind k) {
  return k == ModelKind::kCnnVit ? "cnn_vit" : "cnn";
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "cnn_vit") return ModelKind::kCnnVit;
  if (name == "cnn") return ModelKind::kCnnOnly;
  throw std::invalid_argument("unknown model kind: " + name);
}

nn::Var<float> images_to_var(const std::vector<USImage>& images) {
  if (images.empty()) throw std::invalid_argument("empty image batch");
  const int w = images[0].width, h = images[0].height;
  std::vector<float> data;
  data.reserve(images.size() * static_cast<std::size_t>(w) * h);
  for (const auto& img : images) {
    if (img.width != w || img.height != h)
      throw std::invalid_argument("mixed image sizes in batch");
    for (auto px : img.pixels) data.push_back(static_cast<float>(px) / 255.0f);
  }
  return nn::Var<float>::from_data({static_cast<int>(images.size()), 1, h, w},
                                   std::move(data), false);
}

std::vector<double> predict_batch(DepthModel& m, const std::vector<USImage>& images) {
  for (const auto& img : images)
    if (img.width != m.cfg.input_size || img.height != m.cfg.input_size)
      throw std::invalid_argument("predict: image must be 128x128");
  auto out = m.forward(images_to_var(images), /*training=*/false);
  std::vector<double> preds(images.size());
  for (std::size_t i = 0; i < images.size(); ++i)
    preds[i] = static_cast<double>(out.value()[i]) * m.depth_std + m.depth_mean;
  return preds;
}

Prediction predict(DepthModel& m, const USImage& img) {
  return Prediction{predict_batch(m, {img})[0]};
}

namespace {

nlohmann::ordered_json config_to_json(const DepthNetConfig& c) {
  return {{"input_size", c.input_size}, {"c1", c.c1},           {"c2", c.c2},
          {"c3", c.c3},                 {"embed_dim", c.embed_dim},
          {"patch_grid", c.patch_grid}, {"vit_layers", c.vit_layers},
          {"vit_heads", c.vit_heads},   {"vit_mlp_hidden", c.vit_mlp_hidden},
          {"head_hidden", c.head_hidden}};
}

DepthNetConfig config_from_json(const nlohmann::ordered_json& j) {
  DepthNetConfig c;
  c.input_size = j.at("input_size").get<int>();
  c.c1 = j.at("c1").get<int>();
  c.c2 = j.at("c2").get<int>();
  c.c3 = j.at("c3").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.patch_grid = j.at("patch_grid").get<int>();
  c.vit_layers = j.at("vit_layers").get<int>();
  c.vit_heads = j.at("vit_heads").get<int>();
  c.vit_mlp_hidden = j.at("vit_mlp_hidden").get<int>();
  c.head_hidden = j.at("head_hidden").get<int>();
  return c;
}

}  // namespace

void save_depth_model(DepthModel& m, const std::string& path) {
  nlohmann::ordered_json meta;
  meta["archive"] = "depth_model";
  meta["kind"] = model_kind_name(m.kind);
  meta["config"] = config_to_json(m.cfg);
  meta["depth_mean"] = m.depth_mean;
  meta["depth_std"] = m.depth_std;
  meta["seed"] = m.init_seed;
  save_checkpoint(path, meta, m.state());
}

DepthModel load_depth_model(const std::string& path) {
  nlohmann::ordered_json meta = peek_checkpoint(path);
  if (meta.value("archive", "") != "depth_model")
    throw std::runtime_error("not a depth model checkpoint: " + path);
  DepthNetConfig cfg = config_from_json(meta.at("config"));
  ModelKind kind = model_kind_from_name(meta.at("kind").get<std::string>());
  std::uint64_t seed = meta.at("seed").get<std::uint64_t>();
  DepthModel m = kind == ModelKind::kCnnVit ? build_cnn_vit<float>(cfg, seed)
                                            : build_cnn_baseline<float>(cfg, seed);
  m.depth_mean = meta.at("depth_mean").get<float>();
  m.depth_std = meta.at("depth_std").get<float>();
  load_checkpoint(path, m.state());
  return m;
}

}  // namespace teedepth
