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

#ifndef TEEDEPTH_STYLETRANSFER_HPP
#define TEEDEPTH_STYLETRANSFER_HPP

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "teedepth/image.hpp"
#include "teedepth/nn/layers.hpp"

namespace teedepth {

/// SSIM windowing constants (Gaussian window, normalized to sum 1).
struct SSIMConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

/// Weights of the combined translation objective.
struct STLossWeights {
  double lambda1 = 5.0;    // PatchNCE on the real->sim branch
  double lambda2 = 1.0;    // PatchNCE identity regularizer on domain S
  double lambda3 = -1.0;   // SSIM(G(R), R); negative weight maximizes it
  double gan_weight = 1.0; // adversarial term mask
  double tau = 0.07;       // NCE temperature
  int n_patches = 256;     // sampled locations per tap

  void validate() const {
    if (!(tau > 0.0)) throw std::invalid_argument("NCE temperature must be > 0");
    if (n_patches < 1) throw std::invalid_argument("need at least 1 patch");
    for (double v : {lambda1, lambda2, lambda3, gan_weight})
      if (!std::isfinite(v))
        throw std::invalid_argument("loss weights must be finite");
  }
};

// ---------------------------------------------------------------------------
// Differentiable SSIM
// ---------------------------------------------------------------------------

/**
 * Mean SSIM of two (N, 1, H, W) tensors as a graph scalar. Windows are valid
 * (no padding); the result lies in [-1, 1] and equals 1 for identical inputs.
 */
template <class T>
nn::Var<T> ssim_op(const nn::Var<T>& a, const nn::Var<T>& b,
                   const SSIMConfig& cfg = SSIMConfig{}) {
  if (a.shape() != b.shape()) throw std::invalid_argument("ssim: shape mismatch");
  if (a.shape().size() != 4 || a.shape()[1] != 1)
    throw std::invalid_argument("ssim: need (N, 1, H, W) inputs");
  const int win = cfg.window;
  if (a.shape()[2] < win || a.shape()[3] < win)
    throw std::invalid_argument("ssim: image smaller than the window");

  std::vector<T> kernel(static_cast<std::size_t>(win) * win);
  double sum = 0.0;
  const int half = win / 2;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      double dy = i - half, dx = j - half;
      double v = std::exp(-(dx * dx + dy * dy) / (2.0 * cfg.sigma * cfg.sigma));
      kernel[static_cast<std::size_t>(i) * win + j] = static_cast<T>(v);
      sum += v;
    }
  for (auto& k : kernel) k = static_cast<T>(k / sum);
  auto kern = nn::Var<T>::from_data({1, 1, win, win}, std::move(kernel), false);

  auto mu_a = nn::conv2d(a, kern, 1, 0);
  auto mu_b = nn::conv2d(b, kern, 1, 0);
  auto var_a = nn::sub(nn::conv2d(nn::mul(a, a), kern, 1, 0), nn::mul(mu_a, mu_a));
  auto var_b = nn::sub(nn::conv2d(nn::mul(b, b), kern, 1, 0), nn::mul(mu_b, mu_b));
  auto cov = nn::sub(nn::conv2d(nn::mul(a, b), kern, 1, 0), nn::mul(mu_a, mu_b));

  const T c1 = static_cast<T>(cfg.c1()), c2 = static_cast<T>(cfg.c2());
  auto num = nn::mul(nn::add_scalar(nn::scale(nn::mul(mu_a, mu_b), T(2)), c1),
                     nn::add_scalar(nn::scale(cov, T(2)), c2));
  auto den = nn::mul(
      nn::add_scalar(nn::add(nn::mul(mu_a, mu_a), nn::mul(mu_b, mu_b)), c1),
      nn::add_scalar(nn::add(var_a, var_b), c2));
  return nn::mean_all(nn::divide(num, den));
}

/// SSIM between two 8-bit images (values mapped to [0, 1], L = 1).
double ssim(const USImage& a, const USImage& b,
            const SSIMConfig& cfg = SSIMConfig{});

// ---------------------------------------------------------------------------
// PatchNCE
// ---------------------------------------------------------------------------

/**
 * Contrastive loss over one tap: rows of feat_q / feat_k are projected
 * features at matching locations; location i of feat_k is the positive for
 * query i and the other rows are negatives. Logits are cosine similarities
 * over temperature tau.
 */
template <class T>
nn::Var<T> patch_nce_loss(const nn::Var<T>& feat_q, const nn::Var<T>& feat_k,
                          const STLossWeights& w) {
  if (feat_q.shape().size() != 2 || feat_q.shape() != feat_k.shape())
    throw std::invalid_argument("patch_nce_loss: need matching (K, C) stacks");
  if (feat_q.shape()[0] < 2)
    throw std::invalid_argument("patch_nce_loss: need >= 2 locations for negatives");
  w.validate();
  auto qn = nn::l2_normalize_rows(feat_q);
  auto kn = nn::l2_normalize_rows(feat_k);
  auto logits = nn::scale(nn::matmul(qn, nn::transpose_last2(kn)),
                          static_cast<T>(1.0 / w.tau));
  return nn::diagonal_cross_entropy(logits);
}

// ---------------------------------------------------------------------------
// Networks
// ---------------------------------------------------------------------------

namespace st_detail {

template <class T>
struct ResidualBlock {
  nn::Conv2dLayer<T> c1, c2;
  nn::InstanceNorm2d<T> norm;

  ResidualBlock() = default;
  ResidualBlock(int ch, Rng& rng)
      : c1(ch, ch, 3, 1, 1, rng), c2(ch, ch, 3, 1, 1, rng) {}

  nn::Var<T> forward(const nn::Var<T>& x) const {
    auto h = nn::relu(norm.forward(c1.forward(x)));
    return nn::add(x, norm.forward(c2.forward(h)));
  }
  void params(std::vector<nn::Var<T>>& out) const {
    c1.params(out);
    c2.params(out);
  }
  void state(const std::string& p, std::vector<nn::StateEntry<T>>& out) {
    c1.state(p + ".c1", out);
    c2.state(p + ".c2", out);
  }
};

}  // namespace st_detail

/// Generator output plus the four encoder taps used for PatchNCE.
template <class T>
struct GeneratorPass {
  nn::Var<T> out;
  std::array<nn::Var<T>, 4> taps;
};

/**
 * Residual encoder-decoder generator with a global skip: G(x) = x + r(x).
 * The final convolution is zero-initialized, so a freshly built generator is
 * exactly the identity and training learns the style gap as a residual.
 * Inputs and outputs live in [-1, 1] (nominally; the output is unclamped).
 */
template <class T>
struct GeneratorT {
  nn::Conv2dLayer<T> in_conv;         // 7x7, 1 -> base
  nn::Conv2dLayer<T> down1, down2;    // 3x3 stride 2
  std::vector<st_detail::ResidualBlock<T>> res;  // 4 blocks at 4*base
  nn::Conv2dLayer<T> up1, up2;        // 3x3 after nearest upsample
  nn::Conv2dLayer<T> out_conv;        // 7x7, base -> 1, zero-init
  nn::InstanceNorm2d<T> norm;
  int base = 16;

  GeneratorT() = default;
  GeneratorT(int base_ch, Rng& rng)
      : in_conv(base_ch, 1, 7, 1, 3, rng),
        down1(2 * base_ch, base_ch, 3, 2, 1, rng),
        down2(4 * base_ch, 2 * base_ch, 3, 2, 1, rng),
        up1(2 * base_ch, 4 * base_ch, 3, 1, 1, rng),
        up2(base_ch, 2 * base_ch, 3, 1, 1, rng),
        out_conv(1, base_ch, 7, 1, 3, rng, /*zero_init=*/true),
        base(base_ch) {
    for (int i = 0; i < 4; ++i) res.emplace_back(4 * base_ch, rng);
  }

  int tap_channels(int tap) const {
    const int ch[4] = {base, 2 * base, 4 * base, 4 * base};
    return ch[tap];
  }

  /// Encoder-only pass (used to embed generator outputs for PatchNCE).
  std::array<nn::Var<T>, 4> encode(const nn::Var<T>& x) const {
    auto e0 = nn::relu(norm.forward(in_conv.forward(x)));
    auto e1 = nn::relu(norm.forward(down1.forward(e0)));
    auto e2 = nn::relu(norm.forward(down2.forward(e1)));
    auto r = res[0].forward(e2);
    r = res[1].forward(r);
    return {e0, e1, e2, r};
  }

  GeneratorPass<T> forward(const nn::Var<T>& x) const {
    auto taps = encode(x);
    auto r = res[2].forward(taps[3]);
    r = res[3].forward(r);
    auto u = nn::relu(norm.forward(up1.forward(nn::upsample_nearest2x(r))));
    u = nn::relu(norm.forward(up2.forward(nn::upsample_nearest2x(u))));
    auto residual = out_conv.forward(u);
    return {nn::add(x, residual), taps};
  }

  void params(std::vector<nn::Var<T>>& out) const {
    in_conv.params(out);
    down1.params(out);
    down2.params(out);
    for (const auto& r : res) r.params(out);
    up1.params(out);
    up2.params(out);
    out_conv.params(out);
  }
  void state(const std::string& p, std::vector<nn::StateEntry<T>>& out) {
    in_conv.state(p + ".in_conv", out);
    down1.state(p + ".down1", out);
    down2.state(p + ".down2", out);
    for (std::size_t i = 0; i < res.size(); ++i)
      res[i].state(p + ".res" + std::to_string(i), out);
    up1.state(p + ".up1", out);
    up2.state(p + ".up2", out);
    out_conv.state(p + ".out_conv", out);
  }
};

/// Four-layer patch discriminator; outputs a per-patch score map.
template <class T>
struct DiscriminatorT {
  nn::Conv2dLayer<T> d1, d2, d3, d4;
  nn::InstanceNorm2d<T> norm;

  DiscriminatorT() = default;
  DiscriminatorT(int base_ch, Rng& rng)
      : d1(base_ch, 1, 4, 2, 1, rng),
        d2(2 * base_ch, base_ch, 4, 2, 1, rng),
        d3(4 * base_ch, 2 * base_ch, 4, 2, 1, rng),
        d4(1, 4 * base_ch, 4, 1, 1, rng) {}

  nn::Var<T> forward(const nn::Var<T>& x) const {
    auto h = nn::leaky_relu(d1.forward(x), T(0.2));
    h = nn::leaky_relu(norm.forward(d2.forward(h)), T(0.2));
    h = nn::leaky_relu(norm.forward(d3.forward(h)), T(0.2));
    return d4.forward(h);  // raw least-squares scores
  }

  void params(std::vector<nn::Var<T>>& out) const {
    d1.params(out);
    d2.params(out);
    d3.params(out);
    d4.params(out);
  }
  void state(const std::string& p, std::vector<nn::StateEntry<T>>& out) {
    d1.state(p + ".d1", out);
    d2.state(p + ".d2", out);
    d3.state(p + ".d3", out);
    d4.state(p + ".d4", out);
  }
};

/// Two-layer projection applied to gathered tap features before the NCE.
template <class T>
struct ProjectionHead {
  nn::LinearLayer<T> fc1, fc2;

  ProjectionHead() = default;
  ProjectionHead(int in_dim, int out_dim, Rng& rng)
      : fc1(in_dim, out_dim, rng), fc2(out_dim, out_dim, rng) {}

  nn::Var<T> forward(const nn::Var<T>& x) const {
    return fc2.forward(nn::relu(fc1.forward(x)));
  }
  void params(std::vector<nn::Var<T>>& out) const {
    fc1.params(out);
    fc2.params(out);
  }
  void state(const std::string& p, std::vector<nn::StateEntry<T>>& out) {
    fc1.state(p + ".fc1", out);
    fc2.state(p + ".fc2", out);
  }
};

template <class T>
struct StyleTransferModelT {
  GeneratorT<T> generator;
  DiscriminatorT<T> discriminator;
  std::array<ProjectionHead<T>, 4> heads;
  STLossWeights weights;
  std::uint64_t init_seed = 0;
  int base = 16, disc_base = 24, proj_dim = 64;
  bool initialized = false;

  std::vector<nn::Var<T>> generator_parameters() const {
    std::vector<nn::Var<T>> out;
    generator.params(out);
    for (const auto& h : heads) h.params(out);
    return out;
  }
  std::vector<nn::Var<T>> discriminator_parameters() const {
    std::vector<nn::Var<T>> out;
    discriminator.params(out);
    return out;
  }
  std::vector<nn::StateEntry<T>> state() {
    std::vector<nn::StateEntry<T>> out;
    generator.state("g", out);
    discriminator.state("d", out);
    for (std::size_t i = 0; i < heads.size(); ++i)
      heads[i].state("head" + std::to_string(i), out);
    return out;
  }
};

template <class T>
StyleTransferModelT<T> build_style_transfer(std::uint64_t seed, int base = 16,
                                            int disc_base = 24, int proj_dim = 64) {
  StyleTransferModelT<T> m;
  Rng rng(mix_seed(seed, 0x57E1));
  m.generator = GeneratorT<T>(base, rng);
  m.discriminator = DiscriminatorT<T>(disc_base, rng);
  for (int t = 0; t < 4; ++t)
    m.heads[t] = ProjectionHead<T>(m.generator.tap_channels(t), proj_dim, rng);
  m.base = base;
  m.disc_base = disc_base;
  m.proj_dim = proj_dim;
  m.init_seed = seed;
  m.initialized = true;
  return m;
}

// ---------------------------------------------------------------------------
// Adversarial objective (least squares)
// ---------------------------------------------------------------------------

template <class T>
nn::Var<T> lsgan_d_loss(const nn::Var<T>& score_real, const nn::Var<T>& score_fake) {
  auto real_term = nn::mean_all(
      nn::mul(nn::add_scalar(score_real, T(-1)), nn::add_scalar(score_real, T(-1))));
  auto fake_term = nn::mean_all(nn::mul(score_fake, score_fake));
  return nn::scale(nn::add(real_term, fake_term), T(0.5));
}

template <class T>
nn::Var<T> lsgan_g_loss(const nn::Var<T>& score_fake) {
  return nn::mean_all(
      nn::mul(nn::add_scalar(score_fake, T(-1)), nn::add_scalar(score_fake, T(-1))));
}

/**
 * Least-squares adversarial pair: loss_D treats domain-S images as real and
 * detached generator outputs as fake; loss_G pushes D(fake) toward 1 through
 * the live generator graph.
 */
template <class T>
std::pair<nn::Var<T>, nn::Var<T>> adversarial_loss(const DiscriminatorT<T>& d,
                                                   const nn::Var<T>& real_batch,
                                                   const nn::Var<T>& fake_batch) {
  if (real_batch.size() == 0 || fake_batch.size() == 0)
    throw std::invalid_argument("adversarial_loss: empty batch");
  auto loss_d = lsgan_d_loss(d.forward(real_batch), d.forward(nn::detach(fake_batch)));
  auto loss_g = lsgan_g_loss(d.forward(fake_batch));
  return {loss_d, loss_g};
}

// ---------------------------------------------------------------------------
// Combined generator objective (adversarial + NCE + SSIM)
// ---------------------------------------------------------------------------

/// Distinct spatial indices shared between the query and key stacks of a tap.
std::vector<int> sample_patch_indices(Rng& rng, int total, int count);

template <class T>
struct TotalLossParts {
  nn::Var<T> total;
  nn::Var<T> gan, nce_r, nce_s, ssim;
  nn::Var<T> fake_r, idn_s;  // generator outputs, reusable by the caller
};

/**
 * Generator-side objective
 *   gan_weight * L_GAN + lambda1 * NCE(R -> G(R)) + lambda2 * NCE(S -> G(S))
 *   + lambda3 * SSIM(G(R), R)
 * on batches in [-1, 1]. Queries come from re-encoding the generator output;
 * keys from the input's encoder taps; both share the sampled index set.
 */
template <class T>
TotalLossParts<T> total_loss(StyleTransferModelT<T>& model,
                             const nn::Var<T>& batch_r, const nn::Var<T>& batch_s,
                             const STLossWeights& w, Rng& rng,
                             const SSIMConfig& ssim_cfg = SSIMConfig{}) {
  if (batch_r.size() == 0 || batch_s.size() == 0)
    throw std::invalid_argument("total_loss: empty batch");
  w.validate();

  auto pass_r = model.generator.forward(batch_r);
  auto pass_s = model.generator.forward(batch_s);
  auto taps_fake_r = model.generator.encode(pass_r.out);
  auto taps_idn_s = model.generator.encode(pass_s.out);

  auto gan = lsgan_g_loss(model.discriminator.forward(pass_r.out));

  auto nce_branch = [&](const std::array<nn::Var<T>, 4>& key_taps,
                        const std::array<nn::Var<T>, 4>& query_taps,
                        int batch_size) {
    nn::Var<T> acc = nn::Var<T>::scalar(T(0));
    int terms = 0;
    for (int t = 0; t < 4; ++t) {
      const auto& kt = key_taps[t];
      int hw = kt.shape()[2] * kt.shape()[3];
      for (int img = 0; img < batch_size; ++img) {
        auto idx = sample_patch_indices(rng, hw, w.n_patches);
        auto q = model.heads[t].forward(nn::gather_spatial(query_taps[t], img, idx));
        auto k = model.heads[t].forward(nn::gather_spatial(kt, img, idx));
        acc = nn::add(acc, patch_nce_loss(q, k, w));
        ++terms;
      }
    }
    return nn::scale(acc, T(1) / static_cast<T>(terms));
  };

  auto nce_r = nce_branch(pass_r.taps, taps_fake_r, batch_r.shape()[0]);
  auto nce_s = nce_branch(pass_s.taps, taps_idn_s, batch_s.shape()[0]);

  auto map01 = [](const nn::Var<T>& x) {
    return nn::add_scalar(nn::scale(x, T(0.5)), T(0.5));
  };
  auto ssim_term = ssim_op(map01(pass_r.out), map01(batch_r), ssim_cfg);

  auto total = nn::add(
      nn::add(nn::scale(gan, static_cast<T>(w.gan_weight)),
              nn::scale(nce_r, static_cast<T>(w.lambda1))),
      nn::add(nn::scale(nce_s, static_cast<T>(w.lambda2)),
              nn::scale(ssim_term, static_cast<T>(w.lambda3))));
  return {total, gan, nce_r, nce_s, ssim_term, pass_r.out, pass_s.out};
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

using StyleTransferModel = StyleTransferModelT<float>;

/// Eval-mode translation of a real-style frame into the simulation style.
USImage translate(const StyleTransferModel& model, const USImage& img_real);

void save_st_model(StyleTransferModel& m, const std::string& path);
StyleTransferModel load_st_model(const std::string& path);

}  // namespace teedepth

#endif  // TEEDEPTH_STYLETRANSFER_HPP
