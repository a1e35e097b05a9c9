#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rwlab/config.hpp"
#include "rwlab/rl.hpp"

namespace rwlab {

// Resolved artifact locations under the experiment output directory.
struct StagePaths {
  std::filesystem::path root;

  std::filesystem::path data_dir() const { return root / "data"; }
  std::filesystem::path checkpoint_dir() const { return root / "checkpoints"; }
  std::filesystem::path log_dir() const { return root / "logs"; }
  std::filesystem::path report_dir() const { return root / "reports"; }
  std::filesystem::path manifest_dir() const { return root / "manifests"; }

  std::filesystem::path dataset(TaskKind task, const std::string& split) const {
    return data_dir() / (task_name(task) + "_" + split + ".jsonl");
  }
  std::filesystem::path sft_checkpoint() const { return checkpoint_dir() / "sft.json"; }
  std::filesystem::path rm_checkpoint(Objective o) const {
    return checkpoint_dir() / ("rm_" + objective_name(o) + ".json");
  }
  std::filesystem::path rl_checkpoint(WeightsMode m) const {
    return checkpoint_dir() / ("rl_" + weights_mode_name(m) + ".json");
  }
  std::filesystem::path manifest(const std::string& stage) const {
    return manifest_dir() / (stage + ".manifest.json");
  }
};

StagePaths stage_paths(const ExperimentConfig& cfg);

// Stage runners. Each validates its upstream artifacts, runs, and writes a
// manifest. A config-hash mismatch with an upstream manifest warns on stderr
// but does not fail.
void run_gen_data(const ExperimentConfig& cfg);
void run_sft_stage(const ExperimentConfig& cfg);
void run_train_rm_stage(const ExperimentConfig& cfg);
void run_rl_stage(const ExperimentConfig& cfg, bool oracle_rewards);
void run_eval_stage(const ExperimentConfig& cfg);
void run_sxs_stage(const ExperimentConfig& cfg);

// Datasets grouped per task, loaded from the gen-data artifacts.
TaskDatasets load_task_datasets(const StagePaths& paths, const std::string& split);
std::vector<RewriteInstance> flatten(const TaskDatasets& sets);

}  // namespace rwlab
