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

#ifndef TEEDEPTH_TRAINING_HPP
#define TEEDEPTH_TRAINING_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "teedepth/depthnet.hpp"
#include "teedepth/manifest.hpp"
#include "teedepth/styletransfer.hpp"

namespace teedepth {

/// Which training images feed the task model.
enum class DatasetMode { kReal, kCombined, kSim };

const char* dataset_mode_name(DatasetMode m);
DatasetMode dataset_mode_from_name(const std::string& name);

/**
 * Task-model training schedule. Defaults reproduce the reference recipe:
 * 100 epochs, batch 16, Adam, initial lr 1e-5 (CNN+ViT) or 0.1 (CNN), decay
 * x0.1 at epochs 30/50/80. The `desk` preset trades schedule fidelity for
 * CPU wall-time while keeping the same relative comparisons.
 */
struct TaskTrainConfig {
  DatasetMode mode = DatasetMode::kSim;
  ModelKind model = ModelKind::kCnnVit;
  int epochs = 100;
  int batch_size = 16;
  double initial_lr = 1e-5;
  std::vector<int> milestones = {30, 50, 80};
  double decay = 0.1;
  double beta1 = 0.9, beta2 = 0.999;
  int combined_real_traj = -1;  // -1: first train trajectory
  std::uint64_t seed = 0;
  DepthNetConfig net;

  void validate() const;

  static TaskTrainConfig preset_full(DatasetMode mode, ModelKind model);
  static TaskTrainConfig preset_desk(DatasetMode mode, ModelKind model);
};

/// Learning rate at an epoch: initial_lr * decay^(#milestones <= epoch).
double lr_at(const TaskTrainConfig& cfg, int epoch);

struct HistoryEntry {
  int epoch;
  std::string series;
  double value;
};

void write_history(const std::string& path, const std::vector<HistoryEntry>& entries);
std::vector<HistoryEntry> read_history(const std::string& path);

/// Values of one named series ordered by epoch.
std::vector<double> history_series(const std::vector<HistoryEntry>& h,
                                   const std::string& series);

struct TaskTrainResult {
  DepthModel model;  // final-epoch weights
  std::vector<HistoryEntry> history;
  double best_loss = 0.0;
  int best_epoch = -1;
  int steps_per_epoch = 0;
  std::string best_checkpoint;   // paths; empty when run_dir == ""
  std::string final_checkpoint;
};

/**
 * Trains a depth regressor on the manifest's train split. REAL mode uses
 * real renders of all train trajectories; SIM uses sim renders; COMBINED uses
 * sim renders plus the real renders of one designated trajectory. When a
 * translator is given, every real-domain training image passes through it
 * first. Writes config.json, history.csv and best/final checkpoints into
 * run_dir (unless run_dir is empty). Deterministic for a fixed seed.
 */
TaskTrainResult train_task(const TaskTrainConfig& cfg,
                           const DatasetManifest& manifest,
                           const std::string& data_root,
                           const std::string& run_dir,
                           const StyleTransferModel* translator = nullptr);

/**
 * Style-transfer training schedule. Defaults follow the reference recipe
 * (400 epochs at lr 1e-6 on one trajectory); the desk preset shortens it.
 */
struct STTrainConfig {
  int epochs = 400;
  double lr = 1e-6;
  double beta1 = 0.5, beta2 = 0.999;
  int traj_id = -1;  // -1: first train trajectory
  STLossWeights weights;
  int base = 16, disc_base = 24, proj_dim = 64;
  std::uint64_t seed = 0;

  void validate() const;

  static STTrainConfig preset_full();
  static STTrainConfig preset_desk();
};

struct STTrainResult {
  StyleTransferModel model;
  std::vector<HistoryEntry> history;  // series: gan, nce_r, nce_s, ssim
  std::string checkpoint;
};

/**
 * Unsupervised style-transfer training on one trajectory's sim and real
 * images (shuffled independently, treated as unpaired). Alternates one
 * discriminator and one generator step per image. Writes config.json,
 * history.csv and st.ckpt into run_dir (unless empty).
 */
STTrainResult train_st(const STTrainConfig& cfg, const DatasetManifest& manifest,
                       const std::string& data_root, const std::string& run_dir);

}  // namespace teedepth

#endif  // TEEDEPTH_TRAINING_HPP
