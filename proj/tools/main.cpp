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

#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "teedepth/common.hpp"
#include "teedepth/eval.hpp"
#include "teedepth/phantom.hpp"
#include "teedepth/training.hpp"

namespace fs = std::filesystem;
using namespace teedepth;

namespace {

/// Exclusive ownership of a run directory while a command writes into it.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) {
    fs::create_directories(dir);
    path_ = (dir / ".lock").string();
    file_ = std::fopen(path_.c_str(), "wx");
    if (!file_)
      throw std::runtime_error(
          "directory is in use by another invocation (lock file exists): " + path_);
    std::fprintf(file_, "%d\n", static_cast<int>(::getpid()));
    std::fflush(file_);
  }
  ~DirLock() {
    if (file_) {
      std::fclose(file_);
      std::remove(path_.c_str());
    }
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::string path_;
  std::FILE* file_ = nullptr;
};

std::string default_manifest_path(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* root = std::getenv("TEEDEPTH_DATA_ROOT"))
    return (fs::path(root) / "manifest.json").string();
  throw ConfigError("no --manifest given and TEEDEPTH_DATA_ROOT is not set");
}

DatasetManifest load_manifest_checked(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("manifest not found: " + path);
  DatasetManifest m = DatasetManifest::load(path);
  m.validate(fs::path(path).parent_path().string());
  return m;
}

std::vector<int> scaled_milestones(int epochs) {
  std::vector<int> out;
  for (double frac : {0.3, 0.5, 0.8}) {
    int m = static_cast<int>(std::lround(frac * epochs));
    if (m > 0 && m < epochs) out.push_back(m);
  }
  return out;
}

struct GenDataArgs {
  std::string out;
  std::uint64_t seed = 0;
  int n_traj = 14;
  int frames = 1891;
  int n_test = 0;
  ArtifactConfig artifacts;
};

int cmd_gen_data(const GenDataArgs& a) {
  DatasetGenConfig cfg;
  cfg.n_traj = a.n_traj;
  cfg.n_frames_total = a.frames;
  cfg.n_test_traj = a.n_test;
  cfg.seed = a.seed;
  cfg.artifacts = a.artifacts;
  cfg.artifacts.validate();
  if (cfg.n_traj < 2) throw ConfigError("--n-traj must be at least 2");
  if (cfg.n_frames_total < 2 * cfg.n_traj)
    throw ConfigError("--frames must allow at least 2 frames per trajectory");

  DirLock lock(a.out);
  generate_dataset(a.out, cfg);
  std::string manifest = (fs::path(a.out) / "manifest.json").string();
  std::printf("%s\n", manifest.c_str());
  return 0;
}

struct TrainTaskArgs {
  std::string manifest;
  std::string out;
  std::string mode = "sim";
  std::string model = "cnn_vit";
  std::string preset = "full";
  std::string st_checkpoint;
  int epochs = -1;
  int batch = -1;
  double lr = -1.0;
  std::vector<int> milestones;
  int real_traj = -1;
  std::uint64_t seed = 0;
};

int cmd_train_task(const TrainTaskArgs& a) {
  DatasetMode mode = dataset_mode_from_name(a.mode);
  ModelKind model = model_kind_from_name(a.model);
  TaskTrainConfig cfg;
  if (a.preset == "full")
    cfg = TaskTrainConfig::preset_full(mode, model);
  else if (a.preset == "desk")
    cfg = TaskTrainConfig::preset_desk(mode, model);
  else
    throw ConfigError("unknown preset: " + a.preset);

  if (a.epochs > 0) {
    cfg.epochs = a.epochs;
    cfg.milestones = scaled_milestones(a.epochs);
  }
  if (!a.milestones.empty()) cfg.milestones = a.milestones;
  if (a.batch > 0) cfg.batch_size = a.batch;
  if (a.lr > 0.0) cfg.initial_lr = a.lr;
  cfg.combined_real_traj = a.real_traj;
  cfg.seed = a.seed;
  cfg.validate();

  std::string manifest_path = default_manifest_path(a.manifest);
  DatasetManifest manifest = load_manifest_checked(manifest_path);
  std::string data_root = fs::path(manifest_path).parent_path().string();

  StyleTransferModel st;
  const StyleTransferModel* translator = nullptr;
  if (!a.st_checkpoint.empty()) {
    if (!fs::exists(a.st_checkpoint))
      throw ConfigError("style-transfer checkpoint not found: " + a.st_checkpoint);
    st = load_st_model(a.st_checkpoint);
    translator = &st;
  }

  DirLock lock(a.out);
  TaskTrainResult result = train_task(cfg, manifest, data_root, a.out, translator);
  std::printf("final %s\n", result.final_checkpoint.c_str());
  std::printf("best  %s (epoch %d, loss %.6g)\n", result.best_checkpoint.c_str(),
              result.best_epoch, result.best_loss);
  return 0;
}

struct TrainStArgs {
  std::string manifest;
  std::string out;
  std::string preset = "full";
  int epochs = -1;
  double lr = -1.0;
  int traj = -1;
  double lambda1 = 5.0, lambda2 = 1.0, lambda3 = -1.0;
  double tau = 0.07;
  int n_patches = 256;
  std::uint64_t seed = 0;
};

int cmd_train_st(const TrainStArgs& a) {
  STTrainConfig cfg;
  if (a.preset == "full")
    cfg = STTrainConfig::preset_full();
  else if (a.preset == "desk")
    cfg = STTrainConfig::preset_desk();
  else
    throw ConfigError("unknown preset: " + a.preset);
  if (a.epochs > 0) cfg.epochs = a.epochs;
  if (a.lr > 0.0) cfg.lr = a.lr;
  cfg.traj_id = a.traj;
  cfg.weights.lambda1 = a.lambda1;
  cfg.weights.lambda2 = a.lambda2;
  cfg.weights.lambda3 = a.lambda3;
  cfg.weights.tau = a.tau;
  cfg.weights.n_patches = a.n_patches;
  cfg.seed = a.seed;
  cfg.validate();

  std::string manifest_path = default_manifest_path(a.manifest);
  DatasetManifest manifest = load_manifest_checked(manifest_path);
  std::string data_root = fs::path(manifest_path).parent_path().string();

  DirLock lock(a.out);
  STTrainResult result = train_st(cfg, manifest, data_root, a.out);
  std::printf("%s\n", result.checkpoint.c_str());
  return 0;
}

struct EvalArgs {
  std::string manifest;
  std::string runs;
  std::string st_override;
  std::vector<std::string> ckpt_overrides;  // key=path
  std::vector<std::string> rows;
  std::string out;
  std::string errors_dir;
  std::string format = "table";
  std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a) {
  if (a.format != "table" && a.format != "json")
    throw ConfigError("--format must be 'table' or 'json'");

  std::string manifest_path = default_manifest_path(a.manifest);
  DatasetManifest manifest = load_manifest_checked(manifest_path);
  std::string data_root = fs::path(manifest_path).parent_path().string();

  MatrixCheckpoints ckpts;
  if (!a.runs.empty()) {
    for (const auto& key : task_checkpoint_keys()) {
      fs::path p = fs::path(a.runs) / ("task_" + key) / "final.ckpt";
      if (fs::exists(p)) ckpts.task[key] = p.string();
    }
    fs::path st = fs::path(a.runs) / "st" / "st.ckpt";
    if (fs::exists(st)) ckpts.st = st.string();
  }
  for (const auto& kv : a.ckpt_overrides) {
    auto pos = kv.find('=');
    if (pos == std::string::npos)
      throw ConfigError("--ckpt expects key=path, got: " + kv);
    ckpts.task[kv.substr(0, pos)] = kv.substr(pos + 1);
  }
  if (!a.st_override.empty()) ckpts.st = a.st_override;

  EvalReport report = run_matrix(manifest, data_root, ckpts, a.seed, a.rows);

  std::string out_path = a.out;
  if (out_path.empty())
    out_path = a.runs.empty() ? "report.json"
                              : (fs::path(a.runs) / "report.json").string();
  report.save(out_path);
  std::string errors_dir = a.errors_dir;
  if (errors_dir.empty())
    errors_dir = (fs::path(out_path).parent_path() / "errors").string();
  report.save_error_files(errors_dir);

  if (a.format == "table")
    std::fputs(render_table(report).c_str(), stdout);
  else
    std::fputs(report.to_json_text().c_str(), stdout);
  std::fprintf(stderr, "report written to %s\n", out_path.c_str());
  return 0;
}

struct ReportArgs {
  std::string in;
  std::string format = "table";
};

int cmd_report(const ReportArgs& a) {
  if (a.format != "table" && a.format != "json")
    throw ConfigError("--format must be 'table' or 'json'");
  if (!fs::exists(a.in)) throw ConfigError("report not found: " + a.in);
  EvalReport report = EvalReport::load(a.in);
  if (a.format == "table")
    std::fputs(render_table(report).c_str(), stdout);
  else
    std::fputs(report.to_json_text().c_str(), stdout);
  return 0;
}

struct DumpPanelsArgs {
  std::string manifest;
  std::string st_checkpoint;
  std::string out;
  int views = 4;
};

int cmd_dump_panels(const DumpPanelsArgs& a) {
  if (a.views < 0) throw ConfigError("--views must be >= 0");
  if (a.views == 0) {
    std::fprintf(stderr, "warning: no views requested; nothing to do\n");
    return 0;
  }
  std::string manifest_path = default_manifest_path(a.manifest);
  DatasetManifest manifest = load_manifest_checked(manifest_path);
  std::string data_root = fs::path(manifest_path).parent_path().string();
  if (!fs::exists(a.st_checkpoint))
    throw ConfigError("style-transfer checkpoint not found: " + a.st_checkpoint);
  StyleTransferModel st = load_st_model(a.st_checkpoint);

  // Gather test frames and pick evenly spaced views.
  std::vector<const FrameRecord*> frames;
  for (int id : manifest.test_ids())
    for (const auto& f : manifest.trajectory(id).frames) frames.push_back(&f);
  if (frames.empty()) throw ConfigError("manifest has no test frames");
  int n = std::min<int>(a.views, static_cast<int>(frames.size()));

  DirLock lock(a.out);
  for (int k = 0; k < n; ++k) {
    std::size_t idx = frames.size() == 1
                          ? 0
                          : static_cast<std::size_t>(k) * (frames.size() - 1) /
                                std::max(1, n - 1);
    const FrameRecord& f = *frames[idx];
    USImage real = load_png((fs::path(data_root) / f.real_path).string(),
                            Domain::kReal);
    USImage sim = load_png((fs::path(data_root) / f.sim_path).string(),
                           Domain::kSim);
    USImage trans = translate(st, real);

    // One strip per view: real | translated | sim.
    USImage strip(3 * 128, 128, Domain::kReal);
    for (int r = 0; r < 128; ++r)
      for (int c = 0; c < 128; ++c) {
        strip.at(r, c) = real.at(r, c);
        strip.at(r, 128 + c) = trans.at(r, c);
        strip.at(r, 256 + c) = sim.at(r, c);
      }
    char name[32];
    std::snprintf(name, sizeof(name), "panel_%03d.png", k);
    save_png(strip, (fs::path(a.out) / name).string());
  }
  std::printf("%d panels written to %s\n", n, a.out.c_str());
  return 0;
}

int run_guarded(const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "argument error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"teedepth: sim-to-real ultrasound probe-depth toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read defaults from an INI/TOML file");
  app.footer("Flags override config-file values, which override built-in defaults.");

  GenDataArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "Generate the synthetic phantom dataset");
  c_gen->add_option("--out", gen.out, "Output dataset directory")->required();
  c_gen->add_option("--seed", gen.seed, "Master seed");
  c_gen->add_option("--n-traj", gen.n_traj, "Number of trajectories");
  c_gen->add_option("--frames", gen.frames, "Total frame count across trajectories");
  c_gen->add_option("--n-test", gen.n_test, "Held-out trajectories (0 = scaled default)");
  c_gen->add_option("--speckle", gen.artifacts.speckle_strength, "Speckle strength");
  c_gen->add_option("--line-prob", gen.artifacts.bright_line_prob, "Bright-arc chance");
  c_gen->add_option("--line-intensity", gen.artifacts.bright_line_intensity,
                    "Bright-arc gain");
  c_gen->add_option("--shadow-prob", gen.artifacts.shadow_prob, "Shadow chance");
  c_gen->add_option("--shadow-width", gen.artifacts.shadow_width_deg,
                    "Shadow sector width (deg)");
  c_gen->add_option("--gamma-min", gen.artifacts.gamma_min, "Gamma shift lower bound");
  c_gen->add_option("--gamma-max", gen.artifacts.gamma_max, "Gamma shift upper bound");

  TrainTaskArgs tt;
  auto* c_tt = app.add_subcommand("train-task", "Train a depth regression model");
  c_tt->add_option("--manifest", tt.manifest, "Dataset manifest path");
  c_tt->add_option("--out", tt.out, "Run directory")->required();
  c_tt->add_option("--mode", tt.mode, "Training data: real|combined|sim");
  c_tt->add_option("--model", tt.model, "Model kind: cnn|cnn_vit");
  c_tt->add_option("--preset", tt.preset, "Schedule preset: full|desk");
  c_tt->add_option("--epochs", tt.epochs, "Override epoch count (rescales milestones)");
  c_tt->add_option("--batch", tt.batch, "Override batch size");
  c_tt->add_option("--lr", tt.lr, "Override initial learning rate");
  c_tt->add_option("--milestones", tt.milestones, "Override decay milestones");
  c_tt->add_option("--st-checkpoint", tt.st_checkpoint,
                   "Translate real training images through this model");
  c_tt->add_option("--real-traj", tt.real_traj,
                   "Designated real trajectory for combined mode (-1 = first)");
  c_tt->add_option("--seed", tt.seed, "Training seed");

  TrainStArgs ts;
  auto* c_ts = app.add_subcommand("train-st", "Train the style-transfer model");
  c_ts->add_option("--manifest", ts.manifest, "Dataset manifest path");
  c_ts->add_option("--out", ts.out, "Run directory")->required();
  c_ts->add_option("--preset", ts.preset, "Schedule preset: full|desk");
  c_ts->add_option("--epochs", ts.epochs, "Override epoch count");
  c_ts->add_option("--lr", ts.lr, "Override learning rate");
  c_ts->add_option("--traj", ts.traj, "Training trajectory id (-1 = first train)");
  c_ts->add_option("--lambda1", ts.lambda1, "PatchNCE weight on domain R");
  c_ts->add_option("--lambda2", ts.lambda2, "PatchNCE weight on domain S");
  c_ts->add_option("--lambda3", ts.lambda3, "SSIM weight (0 = ablation)");
  c_ts->add_option("--tau", ts.tau, "NCE temperature");
  c_ts->add_option("--n-patches", ts.n_patches, "Sampled locations per tap");
  c_ts->add_option("--seed", ts.seed, "Training seed");

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Evaluate the configuration matrix");
  c_ev->add_option("--manifest", ev.manifest, "Dataset manifest path");
  c_ev->add_option("--runs", ev.runs,
                   "Directory holding task_<key>/ runs and st/ (convention)");
  c_ev->add_option("--ckpt", ev.ckpt_overrides,
                   "Explicit checkpoint override key=path (repeatable)");
  c_ev->add_option("--st", ev.st_override, "Style-transfer checkpoint override");
  c_ev->add_option("--row", ev.rows, "Evaluate only this row id (repeatable)");
  c_ev->add_option("--out", ev.out, "Report output path");
  c_ev->add_option("--errors-dir", ev.errors_dir, "Directory for raw error files");
  c_ev->add_option("--format", ev.format, "Stdout rendering: table|json");
  c_ev->add_option("--seed", ev.seed, "Seed recorded in the report");

  ReportArgs rp;
  auto* c_rp = app.add_subcommand("report", "Render an existing report");
  c_rp->add_option("--in", rp.in, "Report JSON path")->required();
  c_rp->add_option("--format", rp.format, "Rendering: table|json");

  DumpPanelsArgs dp;
  auto* c_dp = app.add_subcommand("dump-panels",
                                  "Write real|translated|sim comparison strips");
  c_dp->add_option("--manifest", dp.manifest, "Dataset manifest path");
  c_dp->add_option("--st", dp.st_checkpoint, "Style-transfer checkpoint")->required();
  c_dp->add_option("--out", dp.out, "Output directory")->required();
  c_dp->add_option("--views", dp.views, "Number of views to dump");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // usage errors
  }

  if (c_gen->parsed()) return run_guarded([&] { return cmd_gen_data(gen); });
  if (c_tt->parsed()) return run_guarded([&] { return cmd_train_task(tt); });
  if (c_ts->parsed()) return run_guarded([&] { return cmd_train_st(ts); });
  if (c_ev->parsed()) return run_guarded([&] { return cmd_eval(ev); });
  if (c_rp->parsed()) return run_guarded([&] { return cmd_report(rp); });
  if (c_dp->parsed()) return run_guarded([&] { return cmd_dump_panels(dp); });
  return 2;
}
