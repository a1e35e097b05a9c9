#include "rwlab/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "rwlab/common.hpp"
#include "rwlab/eval.hpp"
#include "rwlab/manifest.hpp"

namespace rwlab {

using nlohmann::json;

StagePaths stage_paths(const ExperimentConfig& cfg) { return {cfg.output_dir}; }

namespace {

std::string rel_to(const StagePaths& paths, const std::filesystem::path& p) {
  return std::filesystem::relative(p, paths.root).generic_string();
}

std::string hash_hex(std::uint64_t h) {
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

void require_file(const std::filesystem::path& path, const std::string& stage,
                  const std::string& hint) {
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("missing " + path.string() + " (run " + hint + " first)");
  }
  (void)stage;
}

void warn_on_config_mismatch(const StagePaths& paths, const ExperimentConfig& cfg,
                             const std::string& upstream_stage) {
  const auto manifest_path = paths.manifest(upstream_stage);
  if (!std::filesystem::exists(manifest_path)) return;
  const StageManifest upstream = read_manifest(manifest_path);
  if (upstream.config_hash != hash_hex(config_hash(cfg))) {
    std::cerr << "warning: config hash differs from the one recorded by stage '"
              << upstream_stage << "'\n";
  }
}

void ensure_dirs(const StagePaths& paths) {
  std::filesystem::create_directories(paths.data_dir());
  std::filesystem::create_directories(paths.checkpoint_dir());
  std::filesystem::create_directories(paths.log_dir());
  std::filesystem::create_directories(paths.report_dir());
  std::filesystem::create_directories(paths.manifest_dir());
}

std::vector<RewriteInstance> generate_split(const ExperimentConfig& cfg, TaskKind task,
                                            const std::string& split, int count) {
  RngStream stage =
      RngStream::for_stage(cfg.seed, "gen-data/" + task_name(task) + "/" + split);
  std::vector<RewriteInstance> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    RngStream rng = stage.substream(i);
    switch (task) {
      case TaskKind::Factuality: {
        const auto& r = cfg.corpus.factuality;
        FactualityGenConfig g;
        g.fact_count = static_cast<int>(rng.int_in(r.fact_count_min, r.fact_count_max));
        g.corrupt_count = static_cast<int>(
            rng.int_in(r.corrupt_count_min, std::min(r.corrupt_count_max, g.fact_count)));
        g.derived_count = static_cast<int>(rng.int_in(r.derived_count_min, r.derived_count_max));
        out.push_back(gen_factuality_instance(rng.next_u64(), g));
        break;
      }
      case TaskKind::Stylistic: {
        const auto& r = cfg.corpus.stylistic;
        StylisticGenConfig g;
        g.requirement_count =
            static_cast<int>(rng.int_in(r.requirements_min, r.requirements_max));
        out.push_back(gen_stylistic_instance(rng.next_u64(), g));
        break;
      }
      case TaskKind::Conversational: {
        const auto& r = cfg.corpus.conversational;
        ConversationalGenConfig g;
        g.requirement_count =
            static_cast<int>(rng.int_in(r.requirements_min, r.requirements_max));
        out.push_back(gen_conversational_instance(rng.next_u64(), g));
        break;
      }
    }
  }
  return out;
}

void write_tsv_curve(const std::filesystem::path& path, const std::string& header,
                     const std::vector<std::pair<int, double>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << header << "\n";
  for (const auto& [step, value] : rows) {
    out << step << "\t" << format_double(value, 6) << "\n";
  }
}

std::vector<WeightsMode> modes_to_run(const ExperimentConfig& cfg) {
  switch (cfg.rl_modes) {
    case RlModes::Static: return {WeightsMode::Static};
    case RlModes::TaskSpecific: return {WeightsMode::TaskSpecific};
    case RlModes::Both: return {WeightsMode::Static, WeightsMode::TaskSpecific};
  }
  throw std::logic_error("bad RlModes");
}

}  // namespace

TaskDatasets load_task_datasets(const StagePaths& paths, const std::string& split) {
  TaskDatasets sets;
  for (int t = 0; t < kNumTasks; ++t) {
    sets[t] = load_dataset(paths.dataset(TaskKind(t), split));
  }
  return sets;
}

std::vector<RewriteInstance> flatten(const TaskDatasets& sets) {
  std::vector<RewriteInstance> out;
  for (const auto& set : sets) out.insert(out.end(), set.begin(), set.end());
  return out;
}

void run_gen_data(const ExperimentConfig& cfg) {
  cfg.validate();
  const StagePaths paths = stage_paths(cfg);
  ensure_dirs(paths);

  StageManifest manifest;
  manifest.stage = "gen-data";
  manifest.seed = cfg.seed;
  manifest.config_hash = hash_hex(config_hash(cfg));
  json counts = json::object();

  for (int t = 0; t < kNumTasks; ++t) {
    const TaskKind task = TaskKind(t);
    for (const auto& [split, count] :
         {std::pair<std::string, int>{"train", cfg.corpus.train_per_task},
          std::pair<std::string, int>{"eval", cfg.corpus.eval_per_task}}) {
      const auto instances = generate_split(cfg, task, split, count);
      const auto path = paths.dataset(task, split);
      save_dataset(instances, path);
      manifest.outputs[rel_to(paths, path)] = file_hash(path);
      counts[task_name(task) + "_" + split] = count;
      std::cout << "wrote " << path.string() << " (" << count << " records)\n";
    }
  }
  manifest.extra_json = counts.dump();
  write_manifest(manifest, paths.manifest("gen-data"));
}

void run_sft_stage(const ExperimentConfig& cfg) {
  cfg.validate();
  const StagePaths paths = stage_paths(cfg);
  ensure_dirs(paths);
  for (int t = 0; t < kNumTasks; ++t) {
    require_file(paths.dataset(TaskKind(t), "train"), "sft", "gen-data");
  }
  warn_on_config_mismatch(paths, cfg, "gen-data");

  StageManifest manifest;
  manifest.stage = "sft";
  manifest.seed = cfg.seed;
  manifest.config_hash = hash_hex(config_hash(cfg));

  const TaskDatasets sets = load_task_datasets(paths, "train");
  for (int t = 0; t < kNumTasks; ++t) {
    const auto p = paths.dataset(TaskKind(t), "train");
    manifest.inputs[rel_to(paths, p)] = file_hash(p);
  }

  const std::vector<RewriteInstance> mixture = flatten(sets);
  RngStream rng = RngStream::for_stage(cfg.seed, "sft");
  const SftResult result = sft_train(mixture, cfg.sft, rng);

  save_policy(result.params, paths.sft_checkpoint());
  std::vector<std::pair<int, double>> curve;
  for (std::size_t i = 0; i < result.epoch_losses.size(); ++i) {
    curve.emplace_back(static_cast<int>(i), result.epoch_losses[i]);
  }
  write_tsv_curve(paths.log_dir() / "sft_epochs.tsv", "epoch\ttrain_nll", curve);

  manifest.outputs[rel_to(paths, paths.sft_checkpoint())] = file_hash(paths.sft_checkpoint());
  manifest.outputs[rel_to(paths, paths.log_dir() / "sft_epochs.tsv")] =
      file_hash(paths.log_dir() / "sft_epochs.tsv");
  manifest.extra_json =
      json{{"heldout_exact_match", result.heldout_exact_match}}.dump();
  write_manifest(manifest, paths.manifest("sft"));
  std::cout << "sft done; held-out gold-sequence exact match = "
            << format_double(result.heldout_exact_match, 4) << "\n";
}

void run_train_rm_stage(const ExperimentConfig& cfg) {
  cfg.validate();
  const StagePaths paths = stage_paths(cfg);
  ensure_dirs(paths);
  require_file(paths.sft_checkpoint(), "train-rm", "sft");
  for (int t = 0; t < kNumTasks; ++t) {
    require_file(paths.dataset(TaskKind(t), "train"), "train-rm", "gen-data");
  }
  warn_on_config_mismatch(paths, cfg, "sft");

  StageManifest manifest;
  manifest.stage = "train-rm";
  manifest.seed = cfg.seed;
  manifest.config_hash = hash_hex(config_hash(cfg));
  manifest.inputs[rel_to(paths, paths.sft_checkpoint())] = file_hash(paths.sft_checkpoint());
  for (int t = 0; t < kNumTasks; ++t) {
    const auto p = paths.dataset(TaskKind(t), "train");
    manifest.inputs[rel_to(paths, p)] = file_hash(p);
  }

  const PolicyParams sft = load_policy(paths.sft_checkpoint());
  const TaskDatasets sets = load_task_datasets(paths, "train");
  const std::vector<RewriteInstance> mixture = flatten(sets);

  RngStream pair_rng = RngStream::for_stage(cfg.seed, "train-rm/pairs");
  const PreferenceDataset pairs = build_preference_pairs(sft, mixture, cfg.pairs, pair_rng);
  std::cout << "preference pairs: " << pairs.agreement.size() << " agreement, "
            << pairs.coherence.size() << " coherence\n";

  json details = {{"agreement_pairs", pairs.agreement.size()},
                  {"coherence_pairs", pairs.coherence.size()}};
  for (const Objective objective : {Objective::Agreement, Objective::Coherence}) {
    const auto& objective_pairs =
        objective == Objective::Agreement ? pairs.agreement : pairs.coherence;
    RngStream rng = RngStream::for_stage(cfg.seed, "train-rm/" + objective_name(objective));
    const RmTrainResult result = train_reward_model(objective_pairs, objective, cfg.rm, rng);
    save_reward_model(result.model, paths.rm_checkpoint(objective));
    write_tsv_curve(paths.log_dir() / ("rm_" + objective_name(objective) + "_curve.tsv"),
                    "step\theldout_accuracy", result.accuracy_curve);
    manifest.outputs[rel_to(paths, paths.rm_checkpoint(objective))] =
        file_hash(paths.rm_checkpoint(objective));
    json per_task = json::object();
    for (const auto& [task, accuracy] : result.per_task_accuracy) {
      per_task[task_name(task)] = accuracy;
    }
    details[objective_name(objective)] = {{"heldout_accuracy", result.heldout_accuracy},
                                          {"per_task_accuracy", per_task}};
    std::cout << "rm " << objective_name(objective)
              << " held-out accuracy = " << format_double(result.heldout_accuracy, 4) << "\n";
  }
  manifest.extra_json = details.dump();
  write_manifest(manifest, paths.manifest("train-rm"));
}

void run_rl_stage(const ExperimentConfig& cfg, bool oracle_rewards) {
  cfg.validate();
  const StagePaths paths = stage_paths(cfg);
  ensure_dirs(paths);
  require_file(paths.sft_checkpoint(), "rl", "sft");
  for (int t = 0; t < kNumTasks; ++t) {
    require_file(paths.dataset(TaskKind(t), "train"), "rl", "gen-data");
  }
  RewardModel agreement_rm;
  RewardModel coherence_rm;
  RewardSource source;
  if (!oracle_rewards) {
    require_file(paths.rm_checkpoint(Objective::Agreement), "rl", "train-rm");
    require_file(paths.rm_checkpoint(Objective::Coherence), "rl", "train-rm");
    agreement_rm = load_reward_model(paths.rm_checkpoint(Objective::Agreement));
    coherence_rm = load_reward_model(paths.rm_checkpoint(Objective::Coherence));
    source.agreement_rm = &agreement_rm;
    source.coherence_rm = &coherence_rm;
    warn_on_config_mismatch(paths, cfg, "train-rm");
  } else {
    warn_on_config_mismatch(paths, cfg, "sft");
  }

  StageManifest manifest;
  manifest.stage = "rl";
  manifest.seed = cfg.seed;
  manifest.config_hash = hash_hex(config_hash(cfg));
  manifest.inputs[rel_to(paths, paths.sft_checkpoint())] = file_hash(paths.sft_checkpoint());
  if (!oracle_rewards) {
    manifest.inputs[rel_to(paths, paths.rm_checkpoint(Objective::Agreement))] =
        file_hash(paths.rm_checkpoint(Objective::Agreement));
    manifest.inputs[rel_to(paths, paths.rm_checkpoint(Objective::Coherence))] =
        file_hash(paths.rm_checkpoint(Objective::Coherence));
  }
  for (int t = 0; t < kNumTasks; ++t) {
    const auto p = paths.dataset(TaskKind(t), "train");
    manifest.inputs[rel_to(paths, p)] = file_hash(p);
  }

  const PolicyParams sft = load_policy(paths.sft_checkpoint());
  const TaskDatasets sets = load_task_datasets(paths, "train");

  json details = {{"oracle_rewards", oracle_rewards}};
  for (const WeightsMode mode : modes_to_run(cfg)) {
    RlConfig rl_cfg = cfg.rl;
    rl_cfg.weights_mode = mode;
    RngStream rng = RngStream::for_stage(cfg.seed, "rl/" + weights_mode_name(mode));
    const RlResult result = train_rl(sft, sets, source, rl_cfg, rng);
    save_policy(result.params, paths.rl_checkpoint(mode));
    write_rl_log(result.log,
                 paths.log_dir() / ("rl_" + weights_mode_name(mode) + "_log.tsv"));
    manifest.outputs[rel_to(paths, paths.rl_checkpoint(mode))] =
        file_hash(paths.rl_checkpoint(mode));
    manifest.outputs[rel_to(paths, paths.log_dir() / ("rl_" + weights_mode_name(mode) + "_log.tsv"))] =
        file_hash(paths.log_dir() / ("rl_" + weights_mode_name(mode) + "_log.tsv"));
    details["final_kl_" + weights_mode_name(mode)] = result.final_kl;
    std::cout << "rl (" << weights_mode_name(mode)
              << ") done; final KL to reference = " << format_double(result.final_kl, 6) << "\n";
  }
  manifest.extra_json = details.dump();
  write_manifest(manifest, paths.manifest("rl"));
}

namespace {

struct NamedPolicy {
  std::string name;
  PolicyParams params;
};

std::vector<NamedPolicy> available_policies(const StagePaths& paths) {
  std::vector<NamedPolicy> out;
  if (std::filesystem::exists(paths.sft_checkpoint())) {
    out.push_back({"sft", load_policy(paths.sft_checkpoint())});
  }
  for (const WeightsMode mode : {WeightsMode::Static, WeightsMode::TaskSpecific}) {
    if (std::filesystem::exists(paths.rl_checkpoint(mode))) {
      out.push_back({"rl_" + weights_mode_name(mode), load_policy(paths.rl_checkpoint(mode))});
    }
  }
  return out;
}

}  // namespace

void run_eval_stage(const ExperimentConfig& cfg) {
  cfg.validate();
  const StagePaths paths = stage_paths(cfg);
  ensure_dirs(paths);
  require_file(paths.sft_checkpoint(), "eval", "sft");
  for (int t = 0; t < kNumTasks; ++t) {
    require_file(paths.dataset(TaskKind(t), "eval"), "eval", "gen-data");
  }
  warn_on_config_mismatch(paths, cfg, "rl");

  StageManifest manifest;
  manifest.stage = "eval";
  manifest.seed = cfg.seed;
  manifest.config_hash = hash_hex(config_hash(cfg));

  const TaskDatasets sets = load_task_datasets(paths, "eval");
  const std::vector<RewriteInstance> eval_set = flatten(sets);
  for (int t = 0; t < kNumTasks; ++t) {
    const auto p = paths.dataset(TaskKind(t), "eval");
    manifest.inputs[rel_to(paths, p)] = file_hash(p);
  }

  EvalConfig eval_cfg;
  eval_cfg.ks = cfg.eval.ks;
  eval_cfg.max_episode_steps = cfg.rl.max_episode_steps;

  std::vector<MetricsReport> reports;
  for (const auto& policy : available_policies(paths)) {
    manifest.inputs[rel_to(paths, paths.checkpoint_dir() / (policy.name + ".json"))] =
        file_hash(paths.checkpoint_dir() / (policy.name + ".json"));
    reports.push_back(evaluate_policy(policy.params, eval_set, eval_cfg, policy.name));
  }

  write_metrics_tsv(reports, paths.report_dir() / "metrics.tsv");
  write_metrics_json(reports, paths.report_dir() / "metrics.json");
  manifest.outputs[rel_to(paths, paths.report_dir() / "metrics.tsv")] =
      file_hash(paths.report_dir() / "metrics.tsv");
  manifest.outputs[rel_to(paths, paths.report_dir() / "metrics.json")] =
      file_hash(paths.report_dir() / "metrics.json");
  write_manifest(manifest, paths.manifest("eval"));
  std::cout << "wrote " << (paths.report_dir() / "metrics.tsv").string() << "\n";
}

void run_sxs_stage(const ExperimentConfig& cfg) {
  cfg.validate();
  const StagePaths paths = stage_paths(cfg);
  ensure_dirs(paths);
  require_file(paths.sft_checkpoint(), "sxs", "sft");
  for (int t = 0; t < kNumTasks; ++t) {
    require_file(paths.dataset(TaskKind(t), "eval"), "sxs", "gen-data");
  }
  warn_on_config_mismatch(paths, cfg, "eval");

  const std::vector<NamedPolicy> policies = available_policies(stage_paths(cfg));
  if (policies.size() < 2) {
    throw std::runtime_error("sxs needs at least two checkpoints (run rl first)");
  }

  StageManifest manifest;
  manifest.stage = "sxs";
  manifest.seed = cfg.seed;
  manifest.config_hash = hash_hex(config_hash(cfg));

  const TaskDatasets sets = load_task_datasets(paths, "eval");
  const std::vector<RewriteInstance> eval_set = flatten(sets);
  for (int t = 0; t < kNumTasks; ++t) {
    const auto p = paths.dataset(TaskKind(t), "eval");
    manifest.inputs[rel_to(paths, p)] = file_hash(p);
  }

  std::vector<SxsReport> reports;
  for (std::size_t a = 0; a < policies.size(); ++a) {
    for (std::size_t b = 0; b < policies.size(); ++b) {
      if (a == b) continue;
      reports.push_back(run_sxs(policies[a].params, policies[b].params, eval_set,
                                policies[a].name, policies[b].name,
                                cfg.rl.max_episode_steps));
    }
  }

  write_sxs_tsv(reports, paths.report_dir() / "sxs.tsv");
  write_sxs_json(reports, paths.report_dir() / "sxs.json");
  manifest.outputs[rel_to(paths, paths.report_dir() / "sxs.tsv")] =
      file_hash(paths.report_dir() / "sxs.tsv");
  manifest.outputs[rel_to(paths, paths.report_dir() / "sxs.json")] =
      file_hash(paths.report_dir() / "sxs.json");
  write_manifest(manifest, paths.manifest("sxs"));
  std::cout << "wrote " << (paths.report_dir() / "sxs.tsv").string() << "\n";
}

}  // namespace rwlab
