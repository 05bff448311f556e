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

#ifndef TEEDEPTH_DEPTHNET_HPP
#define TEEDEPTH_DEPTHNET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "teedepth/image.hpp"
#include "teedepth/nn/layers.hpp"

namespace teedepth {

/**
 * Probe-depth regressor configuration. The conv trunk turns a 128x128 image
 * into a 64-channel 32x32 map; the ViT variant reduces it to 25x25 with one
 * valid k8 convolution and attends over 25 patch tokens of dimension 64.
 */
struct DepthNetConfig {
  int input_size = 128;
  int c1 = 16, c2 = 32, c3 = 64;
  int embed_dim = 64;        // k1-conv channels and patch projection dim
  int patch_grid = 5;        // 5x5 patches over the 25x25 map
  int vit_layers = 3;
  int vit_heads = 4;
  int vit_mlp_hidden = 128;
  int head_hidden = 64;      // final MLP hidden width

  int bridge_out() const { return patch_grid * patch_grid; }  // 25
  int patch_size() const { return 5; }
  int token_count() const { return patch_grid * patch_grid; }

  void validate() const {
    if (input_size != 128) throw std::invalid_argument("input size must be 128");
    if (c1 < 1 || c2 < 1 || c3 < 1 || embed_dim < 1)
      throw std::invalid_argument("channel counts must be positive");
    if (patch_grid * patch_size() != 25)
      throw std::invalid_argument("patch grid x patch size must cover 25x25");
    if (embed_dim % vit_heads != 0)
      throw std::invalid_argument("projection dim must divide by head count");
    if (vit_layers < 1 || vit_mlp_hidden < 1 || head_hidden < 1)
      throw std::invalid_argument("transformer dimensions must be positive");
  }
};

enum class ModelKind { kCnnOnly, kCnnVit };

const char* model_kind_name(ModelKind k);
ModelKind model_kind_from_name(const std::string& name);

namespace depthnet_detail {

/// Shared feature-extraction trunk: four conv blocks ending at the k1 conv.
template <class T>
struct Trunk {
  nn::Conv2dLayer<T> conv1, conv2, conv3, conv4;
  nn::BatchNorm2dLayer<T> bn1, bn2, bn3, bn4;

  Trunk() = default;
  Trunk(const DepthNetConfig& cfg, Rng& rng)
      : conv1(cfg.c1, 1, 3, 1, 1, rng),
        conv2(cfg.c2, cfg.c1, 3, 1, 1, rng),
        conv3(cfg.c3, cfg.c2, 3, 1, 1, rng),
        conv4(cfg.embed_dim, cfg.c3, 1, 1, 0, rng),
        bn1(cfg.c1),
        bn2(cfg.c2),
        bn3(cfg.c3),
        bn4(cfg.embed_dim) {}

  nn::Var<T> forward(const nn::Var<T>& x, bool training) {
    auto h = nn::relu(bn1.forward(conv1.forward(x), training));
    h = nn::maxpool2x2(h);
    h = nn::relu(bn2.forward(conv2.forward(h), training));
    h = nn::maxpool2x2(h);
    h = nn::relu(bn3.forward(conv3.forward(h), training));
    h = nn::relu(bn4.forward(conv4.forward(h), training));
    return h;  // (N, embed_dim, 32, 32)
  }

  void params(std::vector<nn::Var<T>>& out) const {
    conv1.params(out);
    conv2.params(out);
    conv3.params(out);
    conv4.params(out);
    bn1.params(out);
    bn2.params(out);
    bn3.params(out);
    bn4.params(out);
  }
  void state(const std::string& p, std::vector<nn::StateEntry<T>>& out) {
    conv1.state(p + ".conv1", out);
    conv2.state(p + ".conv2", out);
    conv3.state(p + ".conv3", out);
    conv4.state(p + ".conv4", out);
    bn1.state(p + ".bn1", out);
    bn2.state(p + ".bn2", out);
    bn3.state(p + ".bn3", out);
    bn4.state(p + ".bn4", out);
  }
};

/// Pre-norm transformer encoder layer over (B*N, D) token rows.
template <class T>
struct EncoderBlock {
  nn::LayerNormLayer<T> ln1, ln2;
  nn::LinearLayer<T> wq, wk, wv, wo, fc1, fc2;
  int heads = 4;

  EncoderBlock() = default;
  EncoderBlock(int dim, int heads_, int mlp_hidden, Rng& rng)
      : ln1(dim),
        ln2(dim),
        wq(dim, dim, rng),
        wk(dim, dim, rng),
        wv(dim, dim, rng),
        wo(dim, dim, rng),
        fc1(dim, mlp_hidden, rng),
        fc2(mlp_hidden, dim, rng),
        heads(heads_) {}

  nn::Var<T> forward(const nn::Var<T>& tokens, int batch, int n_tokens) {
    const int dim = tokens.shape()[1];
    const T inv_sqrt_dh =
        T(1) / std::sqrt(static_cast<T>(dim / heads));
    auto normed = ln1.forward(tokens);
    auto q = nn::split_heads(wq.forward(normed), batch, n_tokens, heads);
    auto k = nn::split_heads(wk.forward(normed), batch, n_tokens, heads);
    auto v = nn::split_heads(wv.forward(normed), batch, n_tokens, heads);
    auto scores = nn::scale(nn::bmm(q, nn::transpose_last2(k)), inv_sqrt_dh);
    auto ctx = nn::bmm(nn::softmax_lastdim(scores), v);
    auto attn_out = wo.forward(nn::merge_heads(ctx, batch, n_tokens, heads));
    auto x = nn::add(tokens, attn_out);
    auto mlp = fc2.forward(nn::gelu(fc1.forward(ln2.forward(x))));
    return nn::add(x, mlp);
  }

  void params(std::vector<nn::Var<T>>& out) const {
    ln1.params(out);
    ln2.params(out);
    wq.params(out);
    wk.params(out);
    wv.params(out);
    wo.params(out);
    fc1.params(out);
    fc2.params(out);
  }
  void state(const std::string& p, std::vector<nn::StateEntry<T>>& out) {
    ln1.state(p + ".ln1", out);
    ln2.state(p + ".ln2", out);
    wq.state(p + ".wq", out);
    wk.state(p + ".wk", out);
    wv.state(p + ".wv", out);
    wo.state(p + ".wo", out);
    fc1.state(p + ".fc1", out);
    fc2.state(p + ".fc2", out);
  }
};

}  // namespace depthnet_detail

/**
 * Depth regression model. Both variants share the trunk; the ViT variant
 * adds the k8 bridge, patch embedding and transformer encoder, while the
 * CNN-only variant finishes with two strided conv blocks and a linear head.
 * Outputs are z-scored depths; use the stored stats to get millimetres.
 */
template <class T>
struct DepthNetT {
  ModelKind kind = ModelKind::kCnnVit;
  DepthNetConfig cfg;
  std::uint64_t init_seed = 0;

  depthnet_detail::Trunk<T> trunk;

  // CNN + ViT branch
  nn::Conv2dLayer<T> bridge;       // k8, stride 1, valid: 32x32 -> 25x25
  nn::LinearLayer<T> patch_embed;  // (embed_dim * 5 * 5) -> embed_dim
  nn::Var<T> pos_embed;            // (25, embed_dim), learned
  std::vector<depthnet_detail::EncoderBlock<T>> blocks;
  nn::LayerNormLayer<T> final_ln;
  nn::LinearLayer<T> head_fc1, head_fc2;

  // CNN-only branch
  nn::Conv2dLayer<T> conv5, conv6;
  nn::BatchNorm2dLayer<T> bn5, bn6;
  nn::LinearLayer<T> cnn_head;

  // Depth normalization (mm).
  T depth_mean = T(0);
  T depth_std = T(1);

  /// Patch tokens after embedding + positional add, shaped (B, 25, embed_dim).
  nn::Var<T> tokens(const nn::Var<T>& images, bool training) {
    auto feat = trunk.forward(images, training);
    auto reduced = bridge.forward(feat);  // (B, D, 25, 25)
    auto rows = nn::tiles_to_rows(reduced, cfg.patch_grid);
    auto embedded = nn::add_tiled_rows(patch_embed.forward(rows), pos_embed);
    int batch = images.shape()[0];
    return nn::reshape(embedded, {batch, cfg.token_count(), cfg.embed_dim});
  }

  /// Normalized depth prediction, shape (B, 1).
  nn::Var<T> forward(const nn::Var<T>& images, bool training) {
    const int batch = images.shape()[0];
    if (kind == ModelKind::kCnnVit) {
      auto toks =
          nn::reshape(tokens(images, training),
                      {batch * cfg.token_count(), cfg.embed_dim});
      for (auto& block : blocks)
        toks = block.forward(toks, batch, cfg.token_count());
      auto pooled = nn::group_mean_rows(final_ln.forward(toks), cfg.token_count());
      return head_fc2.forward(nn::gelu(head_fc1.forward(pooled)));
    }
    auto h = trunk.forward(images, training);
    h = nn::relu(bn5.forward(conv5.forward(h), training));
    h = nn::relu(bn6.forward(conv6.forward(h), training));
    // Global average pool via a constant averaging matrix.
    const int C = h.shape()[1], HW = h.shape()[2] * h.shape()[3];
    auto flat = nn::reshape(h, {batch * C, HW});
    auto ones = nn::Var<T>::from_data(
        {HW, 1}, std::vector<T>(HW, T(1) / static_cast<T>(HW)), false);
    auto pooled = nn::reshape(nn::matmul(flat, ones), {batch, C});
    return cnn_head.forward(pooled);
  }

  std::vector<nn::Var<T>> parameters() const {
    std::vector<nn::Var<T>> out;
    trunk.params(out);
    if (kind == ModelKind::kCnnVit) {
      bridge.params(out);
      patch_embed.params(out);
      out.push_back(pos_embed);
      for (const auto& b : blocks) b.params(out);
      final_ln.params(out);
      head_fc1.params(out);
      head_fc2.params(out);
    } else {
      conv5.params(out);
      conv6.params(out);
      bn5.params(out);
      bn6.params(out);
      cnn_head.params(out);
    }
    return out;
  }

  std::vector<nn::Var<T>> trunk_parameters() const {
    std::vector<nn::Var<T>> out;
    trunk.params(out);
    return out;
  }

  std::vector<nn::StateEntry<T>> state() {
    std::vector<nn::StateEntry<T>> out;
    trunk.state("trunk", out);
    if (kind == ModelKind::kCnnVit) {
      bridge.state("bridge", out);
      patch_embed.state("patch_embed", out);
      out.push_back({"pos_embed", &pos_embed.value(), true});
      for (std::size_t i = 0; i < blocks.size(); ++i)
        blocks[i].state("block" + std::to_string(i), out);
      final_ln.state("final_ln", out);
      head_fc1.state("head_fc1", out);
      head_fc2.state("head_fc2", out);
    } else {
      conv5.state("conv5", out);
      conv6.state("conv6", out);
      bn5.state("bn5", out);
      bn6.state("bn6", out);
      cnn_head.state("cnn_head", out);
    }
    return out;
  }

  std::size_t parameter_count(const std::vector<nn::Var<T>>& vars) const {
    std::size_t n = 0;
    for (const auto& v : vars) n += v.size();
    return n;
  }
};

template <class T>
DepthNetT<T> build_cnn_vit(const DepthNetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  DepthNetT<T> m;
  m.kind = ModelKind::kCnnVit;
  m.cfg = cfg;
  m.init_seed = seed;
  Rng rng(mix_seed(seed, 0xD3E9));
  m.trunk = depthnet_detail::Trunk<T>(cfg, rng);
  m.bridge = nn::Conv2dLayer<T>(cfg.embed_dim, cfg.embed_dim, 8, 1, 0, rng);
  m.patch_embed = nn::LinearLayer<T>(cfg.embed_dim * cfg.patch_size() * cfg.patch_size(),
                                     cfg.embed_dim, rng);
  {
    std::vector<T> pe(static_cast<std::size_t>(cfg.token_count()) * cfg.embed_dim);
    for (auto& v : pe) v = static_cast<T>(rng.normal(0.0, 0.02));
    m.pos_embed = nn::Var<T>::from_data({cfg.token_count(), cfg.embed_dim},
                                        std::move(pe), true);
  }
  for (int i = 0; i < cfg.vit_layers; ++i)
    m.blocks.emplace_back(cfg.embed_dim, cfg.vit_heads, cfg.vit_mlp_hidden, rng);
  m.final_ln = nn::LayerNormLayer<T>(cfg.embed_dim);
  m.head_fc1 = nn::LinearLayer<T>(cfg.embed_dim, cfg.head_hidden, rng);
  m.head_fc2 = nn::LinearLayer<T>(cfg.head_hidden, 1, rng);
  return m;
}

template <class T>
DepthNetT<T> build_cnn_baseline(const DepthNetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  DepthNetT<T> m;
  m.kind = ModelKind::kCnnOnly;
  m.cfg = cfg;
  m.init_seed = seed;
  Rng rng(mix_seed(seed, 0xD3E9));
  m.trunk = depthnet_detail::Trunk<T>(cfg, rng);
  m.conv5 = nn::Conv2dLayer<T>(cfg.embed_dim, cfg.embed_dim, 3, 2, 1, rng);
  m.conv6 = nn::Conv2dLayer<T>(cfg.embed_dim, cfg.embed_dim, 3, 2, 1, rng);
  m.bn5 = nn::BatchNorm2dLayer<T>(cfg.embed_dim);
  m.bn6 = nn::BatchNorm2dLayer<T>(cfg.embed_dim);
  m.cnn_head = nn::LinearLayer<T>(cfg.embed_dim, 1, rng);
  return m;
}

using DepthModel = DepthNetT<float>;

struct Prediction {
  double depth_mm = 0.0;
};

/// Packs images into an (N, 1, 128, 128) input tensor in [0, 1].
nn::Var<float> images_to_var(const std::vector<USImage>& images);

/// Eval-mode single-image prediction in millimetres.
Prediction predict(DepthModel& m, const USImage& img);

/// Eval-mode batch prediction in millimetres.
std::vector<double> predict_batch(DepthModel& m, const std::vector<USImage>& images);

void save_depth_model(DepthModel& m, const std::string& path);
DepthModel load_depth_model(const std::string& path);

}  // namespace teedepth

#endif  // TEEDEPTH_DEPTHNET_HPP
