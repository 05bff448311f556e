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

#include "teedepth/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "json.hpp"
#include "teedepth/common.hpp"
#include "teedepth/nn/adam.hpp"
#include "teedepth/rng.hpp"

namespace teedepth {

namespace fs = std::filesystem;

const char* dataset_mode_name(DatasetMode m) {
  switch (m) {
    case DatasetMode::kReal: return "real";
    case DatasetMode::kCombined: return "combined";
    case DatasetMode::kSim: return "sim";
  }
  return "sim";
}

DatasetMode dataset_mode_from_name(const std::string& name) {
  if (name == "real") return DatasetMode::kReal;
  if (name == "combined") return DatasetMode::kCombined;
  if (name == "sim") return DatasetMode::kSim;
  throw ConfigError("unknown dataset mode: " + name);
}

void TaskTrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  for (int m : milestones)
    if (m >= epochs) throw ConfigError("epochs must exceed every milestone");
  if (initial_lr <= 0.0 || decay <= 0.0) throw ConfigError("lr and decay must be > 0");
  net.validate();
}

TaskTrainConfig TaskTrainConfig::preset_full(DatasetMode mode, ModelKind model) {
  TaskTrainConfig c;
  c.mode = mode;
  c.model = model;
  c.epochs = 100;
  c.batch_size = 16;
  c.milestones = {30, 50, 80};
  c.initial_lr = model == ModelKind::kCnnVit ? 1e-5 : 0.1;
  return c;
}

TaskTrainConfig TaskTrainConfig::preset_desk(DatasetMode mode, ModelKind model) {
  TaskTrainConfig c = preset_full(mode, model);
  // CPU-budget preset: shorter schedule with a workable step size for the
  // transformer; relative comparisons between configurations are preserved.
  c.epochs = 10;
  c.milestones = {3, 5, 8};
  c.initial_lr = model == ModelKind::kCnnVit ? 3e-4 : 0.1;
  return c;
}

double lr_at(const TaskTrainConfig& cfg, int epoch) {
  if (epoch < 0 || epoch >= cfg.epochs)
    throw std::invalid_argument("lr_at: epoch out of range");
  int hits = 0;
  for (int m : cfg.milestones)
    if (m <= epoch) ++hits;
  return cfg.initial_lr * std::pow(cfg.decay, hits);
}

void write_history(const std::string& path, const std::vector<HistoryEntry>& entries) {
  std::ostringstream out;
  char buf[64];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof(buf), "%.17g", e.value);
    out << e.epoch << ',' << e.series << ',' << buf << '\n';
  }
  write_text_file(path, out.str());
}

std::vector<HistoryEntry> read_history(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<HistoryEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto c1 = line.find(',');
    auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw std::runtime_error("malformed history line: " + line);
    HistoryEntry e;
    e.epoch = std::stoi(line.substr(0, c1));
    e.series = line.substr(c1 + 1, c2 - c1 - 1);
    e.value = std::strtod(line.c_str() + c2 + 1, nullptr);
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<double> history_series(const std::vector<HistoryEntry>& h,
                                   const std::string& series) {
  std::vector<double> out;
  for (const auto& e : h)
    if (e.series == series) out.push_back(e.value);
  return out;
}

namespace {

struct Sample {
  USImage image;
  double depth_mm;
};

int designated_real_traj(const DatasetManifest& manifest, int requested) {
  auto train = manifest.train_ids();
  if (train.empty()) throw ConfigError("manifest has no train trajectories");
  if (requested < 0) return train.front();
  for (int id : train)
    if (id == requested) return id;
  throw ConfigError("designated real trajectory is not in the train split");
}

USImage load_frame(const std::string& data_root, const std::string& rel,
                   Domain domain, const StyleTransferModel* translator) {
  USImage img = load_png((fs::path(data_root) / rel).string(), domain);
  if (domain == Domain::kReal && translator) return translate(*translator, img);
  return img;
}

std::vector<Sample> load_task_samples(const TaskTrainConfig& cfg,
                                      const DatasetManifest& manifest,
                                      const std::string& data_root,
                                      const StyleTransferModel* translator) {
  std::vector<Sample> samples;
  auto train = manifest.train_ids();
  if (train.empty()) throw ConfigError("manifest has no train trajectories");

  if (cfg.mode == DatasetMode::kReal) {
    for (int id : train)
      for (const auto& f : manifest.trajectory(id).frames)
        samples.push_back(
            {load_frame(data_root, f.real_path, Domain::kReal, translator),
             f.depth_mm});
    return samples;
  }
  for (int id : train)
    for (const auto& f : manifest.trajectory(id).frames)
      samples.push_back(
          {load_frame(data_root, f.sim_path, Domain::kSim, nullptr), f.depth_mm});
  if (cfg.mode == DatasetMode::kCombined) {
    int real_id = designated_real_traj(manifest, cfg.combined_real_traj);
    for (const auto& f : manifest.trajectory(real_id).frames)
      samples.push_back(
          {load_frame(data_root, f.real_path, Domain::kReal, translator),
           f.depth_mm});
  }
  return samples;
}

nlohmann::ordered_json task_config_json(const TaskTrainConfig& cfg) {
  return {{"mode", dataset_mode_name(cfg.mode)},
          {"model", model_kind_name(cfg.model)},
          {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"initial_lr", cfg.initial_lr},
          {"milestones", cfg.milestones},
          {"decay", cfg.decay},
          {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},
          {"combined_real_traj", cfg.combined_real_traj},
          {"seed", cfg.seed}};
}

}  // namespace

TaskTrainResult train_task(const TaskTrainConfig& cfg,
                           const DatasetManifest& manifest,
                           const std::string& data_root,
                           const std::string& run_dir,
                           const StyleTransferModel* translator) {
  cfg.validate();
  std::vector<Sample> samples = load_task_samples(cfg, manifest, data_root, translator);
  const int n = static_cast<int>(samples.size());
  if (n < cfg.batch_size)
    throw ConfigError("training set smaller than one batch");

  double mean = 0.0;
  for (const auto& s : samples) mean += s.depth_mm;
  mean /= n;
  double var = 0.0;
  for (const auto& s : samples) var += (s.depth_mm - mean) * (s.depth_mm - mean);
  double stddev = std::sqrt(var / n);
  if (stddev < 1e-9) stddev = 1.0;

  DepthModel model = cfg.model == ModelKind::kCnnVit
                         ? build_cnn_vit<float>(cfg.net, cfg.seed)
                         : build_cnn_baseline<float>(cfg.net, cfg.seed);
  model.depth_mean = static_cast<float>(mean);
  model.depth_std = static_cast<float>(stddev);

  if (!run_dir.empty()) {
    fs::create_directories(run_dir);
    write_text_file((fs::path(run_dir) / "config.json").string(),
                    task_config_json(cfg).dump(2) + "\n");
  }

  nn::Adam<float> opt(model.parameters(), static_cast<float>(cfg.beta1),
                      static_cast<float>(cfg.beta2));

  TaskTrainResult result;
  const int steps_per_epoch = n / cfg.batch_size;  // drop the last short batch
  if (steps_per_epoch == 0) throw ConfigError("no full batch to train on");
  result.steps_per_epoch = steps_per_epoch;

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const float lr = static_cast<float>(lr_at(cfg, epoch));
    Rng shuffle_rng(mix_seed(cfg.seed, 0xE60C + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_acc = 0.0, mae_acc = 0.0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      std::vector<USImage> batch_imgs;
      std::vector<float> targets;
      batch_imgs.reserve(cfg.batch_size);
      for (int b = 0; b < cfg.batch_size; ++b) {
        const Sample& s = samples[order[step * cfg.batch_size + b]];
        batch_imgs.push_back(s.image);
        targets.push_back(
            static_cast<float>((s.depth_mm - mean) / stddev));
      }
      auto x = images_to_var(batch_imgs);
      auto y = nn::Var<float>::from_data({cfg.batch_size, 1}, targets, false);
      auto out = model.forward(x, /*training=*/true);
      auto diff = nn::sub(out, y);
      auto loss = nn::mean_all(nn::mul(diff, diff));

      opt.zero_grad();
      nn::backward(loss);
      opt.step(lr);

      loss_acc += loss.item();
      for (int b = 0; b < cfg.batch_size; ++b)
        mae_acc += std::fabs(static_cast<double>(out.value()[b]) - targets[b]) *
                   stddev;
    }
    double epoch_loss = loss_acc / steps_per_epoch;
    double epoch_mae = mae_acc / (static_cast<double>(steps_per_epoch) * cfg.batch_size);
    result.history.push_back({epoch, "train_loss", epoch_loss});
    result.history.push_back({epoch, "train_mae_mm", epoch_mae});
    result.history.push_back({epoch, "lr", lr});

    if (result.best_epoch < 0 || epoch_loss < result.best_loss) {
      result.best_loss = epoch_loss;
      result.best_epoch = epoch;
      if (!run_dir.empty()) {
        result.best_checkpoint = (fs::path(run_dir) / "best.ckpt").string();
        save_depth_model(model, result.best_checkpoint);
      }
    }
  }

  if (!run_dir.empty()) {
    result.final_checkpoint = (fs::path(run_dir) / "final.ckpt").string();
    save_depth_model(model, result.final_checkpoint);
    write_history((fs::path(run_dir) / "history.csv").string(), result.history);
  }
  result.model = std::move(model);
  return result;
}

void STTrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (lr <= 0.0) throw ConfigError("learning rate must be > 0");
  weights.validate();
}

STTrainConfig STTrainConfig::preset_full() { return STTrainConfig{}; }

STTrainConfig STTrainConfig::preset_desk() {
  STTrainConfig c;
  // CPU-budget preset; the reference schedule's step count at lr 1e-6 is far
  // beyond desk wall-time, so fewer epochs run at a standard GAN step size.
  c.epochs = 30;
  c.lr = 2e-4;
  return c;
}

STTrainResult train_st(const STTrainConfig& cfg, const DatasetManifest& manifest,
                       const std::string& data_root, const std::string& run_dir) {
  cfg.validate();
  int traj = designated_real_traj(manifest, cfg.traj_id);
  const auto& frames = manifest.trajectory(traj).frames;

  auto to_var = [](const USImage& img) {
    std::vector<float> data = img.to_float();
    for (auto& v : data) v = 2.0f * v - 1.0f;
    return nn::Var<float>::from_data({1, 1, img.height, img.width},
                                     std::move(data), false);
  };
  std::vector<nn::Var<float>> sims, reals;
  for (const auto& f : frames) {
    sims.push_back(to_var(load_png((fs::path(data_root) / f.sim_path).string(),
                                   Domain::kSim)));
    reals.push_back(to_var(load_png((fs::path(data_root) / f.real_path).string(),
                                    Domain::kReal)));
  }
  const int n = static_cast<int>(frames.size());

  StyleTransferModel model = build_style_transfer<float>(
      cfg.seed, cfg.base, cfg.disc_base, cfg.proj_dim);
  model.weights = cfg.weights;

  if (!run_dir.empty()) {
    fs::create_directories(run_dir);
    nlohmann::ordered_json j{{"epochs", cfg.epochs},
                             {"lr", cfg.lr},
                             {"beta1", cfg.beta1},
                             {"beta2", cfg.beta2},
                             {"traj_id", traj},
                             {"lambda1", cfg.weights.lambda1},
                             {"lambda2", cfg.weights.lambda2},
                             {"lambda3", cfg.weights.lambda3},
                             {"tau", cfg.weights.tau},
                             {"n_patches", cfg.weights.n_patches},
                             {"seed", cfg.seed}};
    write_text_file((fs::path(run_dir) / "config.json").string(), j.dump(2) + "\n");
  }

  nn::Adam<float> opt_g(model.generator_parameters(), static_cast<float>(cfg.beta1),
                        static_cast<float>(cfg.beta2));
  nn::Adam<float> opt_d(model.discriminator_parameters(),
                        static_cast<float>(cfg.beta1), static_cast<float>(cfg.beta2));
  Rng patch_rng(mix_seed(cfg.seed, 0x9CE5));

  STTrainResult result;
  std::vector<int> order_r(n), order_s(n);
  for (int i = 0; i < n; ++i) order_r[i] = order_s[i] = i;

  const float lr = static_cast<float>(cfg.lr);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, 0x57EF + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order_r);
    shuffle_rng.shuffle(order_s);

    double gan_acc = 0.0, nce_r_acc = 0.0, nce_s_acc = 0.0, ssim_acc = 0.0;
    for (int step = 0; step < n; ++step) {
      const auto& r = reals[order_r[step]];
      const auto& s = sims[order_s[step]];

      auto parts = total_loss(model, r, s, model.weights, patch_rng);
      auto loss_d = lsgan_d_loss(model.discriminator.forward(s),
                                 model.discriminator.forward(nn::detach(parts.fake_r)));

      opt_d.zero_grad();
      nn::backward(loss_d);
      opt_d.step(lr);

      opt_g.zero_grad();
      nn::backward(parts.total);
      opt_g.step(lr);

      gan_acc += parts.gan.item();
      nce_r_acc += parts.nce_r.item();
      nce_s_acc += parts.nce_s.item();
      ssim_acc += parts.ssim.item();
    }
    result.history.push_back({epoch, "gan", gan_acc / n});
    result.history.push_back({epoch, "nce_r", nce_r_acc / n});
    result.history.push_back({epoch, "nce_s", nce_s_acc / n});
    result.history.push_back({epoch, "ssim", ssim_acc / n});
  }

  if (!run_dir.empty()) {
    result.checkpoint = (fs::path(run_dir) / "st.ckpt").string();
    save_st_model(model, result.checkpoint);
    write_history((fs::path(run_dir) / "history.csv").string(), result.history);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace teedepth
