#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "rwlab/config.hpp"
#include "rwlab/pipeline.hpp"

namespace {

struct GlobalOptions {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  bool oracle_rewards = false;
};

rwlab::ExperimentConfig resolve_config(const GlobalOptions& opts) {
  rwlab::ExperimentConfig cfg = opts.config_path.empty()
                                    ? rwlab::default_config()
                                    : rwlab::load_config(opts.config_path);
  if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
  if (opts.seed) cfg.seed = *opts.seed;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rewrite post-training lab: data generation, SFT, reward models, "
               "RL fine-tuning, and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions opts;
  app.add_option("--config", opts.config_path, "experiment config file (JSON)");
  app.add_option("--out", opts.out_dir, "output directory (overrides config)");
  app.add_option("--seed", opts.seed, "root seed (overrides config)");
  app.add_flag("--oracle-rewards", opts.oracle_rewards,
               "rl ablation: score rollouts with the judges instead of reward models");

  std::string stage;
  app.add_subcommand("gen-data", "generate train/eval datasets for all three tasks")
      ->callback([&] { stage = "gen-data"; });
  app.add_subcommand("sft", "behavior-clone the gold edit sequences")
      ->callback([&] { stage = "sft"; });
  app.add_subcommand("train-rm", "build preference pairs and train both reward models")
      ->callback([&] { stage = "train-rm"; });
  app.add_subcommand("rl", "PPO fine-tuning against the aggregated rewards")
      ->callback([&] { stage = "rl"; });
  app.add_subcommand("eval", "metric report for every available checkpoint")
      ->callback([&] { stage = "eval"; });
  app.add_subcommand("sxs", "pairwise side-by-side comparison of checkpoints")
      ->callback([&] { stage = "sxs"; });

  CLI11_PARSE(app, argc, argv);

  try {
    const rwlab::ExperimentConfig cfg = resolve_config(opts);
    if (stage == "gen-data") {
      rwlab::run_gen_data(cfg);
    } else if (stage == "sft") {
      rwlab::run_sft_stage(cfg);
    } else if (stage == "train-rm") {
      rwlab::run_train_rm_stage(cfg);
    } else if (stage == "rl") {
      rwlab::run_rl_stage(cfg, opts.oracle_rewards);
    } else if (stage == "eval") {
      rwlab::run_eval_stage(cfg);
    } else if (stage == "sxs") {
      rwlab::run_sxs_stage(cfg);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << stage << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
