#include <pybind11/pybind11.h>
#include <pybind11/functional.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rwlab/common.hpp"
#include "rwlab/config.hpp"
#include "rwlab/corpus.hpp"
#include "rwlab/eval.hpp"
#include "rwlab/judge.hpp"
#include "rwlab/pipeline.hpp"
#include "rwlab/policy.hpp"
#include "rwlab/reward.hpp"
#include "rwlab/rl.hpp"
#include "rwlab/textops.hpp"

namespace py = pybind11;
using namespace rwlab;

namespace {

TaskDatasets split_by_task(const std::vector<RewriteInstance>& instances) {
  TaskDatasets sets;
  for (const auto& inst : instances) sets[static_cast<int>(inst.task)].push_back(inst);
  return sets;
}

std::vector<double> theta_row(const PolicyParams& p, int r) {
  std::vector<double> row(kNumActionClasses);
  for (int c = 0; c < kNumActionClasses; ++c) row[c] = p.theta.at(r, c);
  return row;
}

}  // namespace

PYBIND11_MODULE(rwlab, m) {
  m.doc() = "Rewrite post-training lab: synthetic rewrite tasks, programmatic judges, "
            "Bradley-Terry reward models, and KL-regularized PPO over an edit policy.";

  // ---- enums ---------------------------------------------------------------
  py::enum_<TaskKind>(m, "TaskKind")
      .value("Factuality", TaskKind::Factuality)
      .value("Stylistic", TaskKind::Stylistic)
      .value("Conversational", TaskKind::Conversational);
  py::enum_<Tone>(m, "Tone")
      .value("Plain", Tone::Plain)
      .value("Formal", Tone::Formal)
      .value("Enthusiastic", Tone::Enthusiastic);
  py::enum_<RequirementKind>(m, "RequirementKind")
      .value("ReplacePlaceholder", RequirementKind::ReplacePlaceholder)
      .value("AddSentence", RequirementKind::AddSentence)
      .value("ChangeTone", RequirementKind::ChangeTone)
      .value("ReorderDefinitionFirst", RequirementKind::ReorderDefinitionFirst)
      .value("Shorten", RequirementKind::Shorten)
      .value("Uppercase", RequirementKind::Uppercase);
  py::enum_<ActionClass>(m, "ActionClass")
      .value("ApplyCritique", ActionClass::ApplyCritique)
      .value("ApplyRequirement", ActionClass::ApplyRequirement)
      .value("FixDerived", ActionClass::FixDerived)
      .value("SpuriousEdit", ActionClass::SpuriousEdit)
      .value("Stop", ActionClass::Stop);
  py::enum_<Objective>(m, "Objective")
      .value("Agreement", Objective::Agreement)
      .value("Coherence", Objective::Coherence);
  py::enum_<WeightsMode>(m, "WeightsMode")
      .value("Static", WeightsMode::Static)
      .value("TaskSpecific", WeightsMode::TaskSpecific);
  py::enum_<SxsVerdict::Choice>(m, "SxsChoice")
      .value("A", SxsVerdict::Choice::A)
      .value("B", SxsVerdict::Choice::B)
      .value("Same", SxsVerdict::Choice::Same);

  // ---- corpus types ----------------------------------------------------------
  py::class_<FactRecord>(m, "FactRecord")
      .def(py::init<>())
      .def_readwrite("key", &FactRecord::key)
      .def_readwrite("value", &FactRecord::value);
  py::class_<DerivedRecord>(m, "DerivedRecord")
      .def(py::init<>())
      .def_readwrite("key", &DerivedRecord::key)
      .def_readwrite("formula", &DerivedRecord::formula)
      .def_readwrite("stated_value", &DerivedRecord::stated_value);
  py::class_<Document>(m, "Document")
      .def(py::init<>())
      .def_readwrite("tokens", &Document::tokens)
      .def_readwrite("facts", &Document::facts)
      .def_readwrite("derived", &Document::derived)
      .def_readwrite("tone_tag", &Document::tone_tag)
      .def("__eq__", [](const Document& a, const Document& b) { return a == b; });
  py::class_<CritiqueSpan>(m, "CritiqueSpan")
      .def(py::init<>())
      .def_readwrite("index", &CritiqueSpan::index)
      .def_readwrite("wrong_value", &CritiqueSpan::wrong_value)
      .def_readwrite("revision", &CritiqueSpan::revision)
      .def_readwrite("reason", &CritiqueSpan::reason);
  py::class_<Requirement>(m, "Requirement")
      .def(py::init<>())
      .def_readwrite("id", &Requirement::id)
      .def_readwrite("kind", &Requirement::kind)
      .def_readwrite("target", &Requirement::target)
      .def_readwrite("replacement", &Requirement::replacement)
      .def_readwrite("sentence", &Requirement::sentence)
      .def_readwrite("tone", &Requirement::tone);
  py::class_<RewriteInstance>(m, "RewriteInstance")
      .def(py::init<>())
      .def_readwrite("id", &RewriteInstance::id)
      .def_readwrite("task", &RewriteInstance::task)
      .def_readwrite("prompt_tokens", &RewriteInstance::prompt_tokens)
      .def_readwrite("initial", &RewriteInstance::initial)
      .def_readwrite("critiques", &RewriteInstance::critiques)
      .def_readwrite("requirements", &RewriteInstance::requirements)
      .def_readwrite("instruction_text", &RewriteInstance::instruction_text)
      .def_readwrite("gold", &RewriteInstance::gold)
      .def("__eq__", [](const RewriteInstance& a, const RewriteInstance& b) { return a == b; })
      .def("__repr__", [](const RewriteInstance& inst) {
        return "<RewriteInstance " + inst.id + " " + task_name(inst.task) + ">";
      });

  py::class_<FactualityGenConfig>(m, "FactualityGenConfig")
      .def(py::init<int, int, int>(), py::arg("fact_count") = 6, py::arg("corrupt_count") = 2,
           py::arg("derived_count") = 1)
      .def_readwrite("fact_count", &FactualityGenConfig::fact_count)
      .def_readwrite("corrupt_count", &FactualityGenConfig::corrupt_count)
      .def_readwrite("derived_count", &FactualityGenConfig::derived_count);
  py::class_<StylisticGenConfig>(m, "StylisticGenConfig")
      .def(py::init<>())
      .def_readwrite("requirement_count", &StylisticGenConfig::requirement_count)
      .def_readwrite("forced_kinds", &StylisticGenConfig::forced_kinds);
  py::class_<ConversationalGenConfig>(m, "ConversationalGenConfig")
      .def(py::init<int>(), py::arg("requirement_count") = 3)
      .def_readwrite("requirement_count", &ConversationalGenConfig::requirement_count);

  m.def("gen_factuality_instance", &gen_factuality_instance, py::arg("seed"),
        py::arg("cfg") = FactualityGenConfig{});
  m.def("gen_stylistic_instance", &gen_stylistic_instance, py::arg("seed"),
        py::arg("cfg") = StylisticGenConfig{});
  m.def("gen_conversational_instance", &gen_conversational_instance, py::arg("seed"),
        py::arg("cfg") = ConversationalGenConfig{});
  m.def("save_dataset",
        [](const std::vector<RewriteInstance>& instances, const std::filesystem::path& path) {
          save_dataset(instances, path);
        });
  m.def("load_dataset", &load_dataset);

  // ---- textops ---------------------------------------------------------------
  m.def("tokenize", &tokenize);
  m.def("edit_distance", [](const TokenSeq& a, const TokenSeq& b) { return edit_distance(a, b); });
  m.def("edit_ratio",
        [](const TokenSeq& original, const TokenSeq& revised) {
          return edit_ratio(original, revised);
        });

  // ---- judges -----------------------------------------------------------------
  m.def("agreement", &agreement);
  m.def("coherence", &coherence);
  m.def("f1_at_k", &f1_at_k);
  py::class_<SxsVerdict>(m, "SxsVerdict")
      .def_readonly("choice", &SxsVerdict::choice)
      .def_readonly("score_a", &SxsVerdict::score_a)
      .def_readonly("score_b", &SxsVerdict::score_b)
      .def_readonly("explanation", &SxsVerdict::explanation)
      .def("to_json", &sxs_verdict_to_json);
  m.def("sxs_compare", &sxs_compare);

  // ---- policy -------------------------------------------------------------------
  py::class_<EditAction>(m, "EditAction")
      .def(py::init<>())
      .def_readwrite("cls", &EditAction::cls)
      .def_readwrite("index", &EditAction::index)
      .def("__eq__", [](const EditAction& a, const EditAction& b) { return a == b; })
      .def("__repr__", [](const EditAction& a) { return "<" + action_label(a) + ">"; });
  py::class_<PolicyParams>(m, "PolicyParams")
      .def(py::init<>())
      .def_property_readonly("rows", [](const PolicyParams& p) { return p.theta.rows; })
      .def_property_readonly("cols", [](const PolicyParams& p) { return p.theta.cols; })
      .def_readonly("feature_version", &PolicyParams::feature_version)
      .def("theta",
           [](const PolicyParams& p) {
             std::vector<std::vector<double>> out;
             for (int r = 0; r < p.theta.rows; ++r) out.push_back(theta_row(p, r));
             return out;
           })
      .def("set_entry", [](PolicyParams& p, int r, int c, double v) { p.theta.at(r, c) = v; })
      .def("__eq__", [](const PolicyParams& a, const PolicyParams& b) { return a == b; });
  py::class_<SamplingConfig>(m, "SamplingConfig")
      .def(py::init<double, int>(), py::arg("temperature") = 1.0, py::arg("top_k") = 40)
      .def_readwrite("temperature", &SamplingConfig::temperature)
      .def_readwrite("top_k", &SamplingConfig::top_k);
  py::class_<Trajectory>(m, "Trajectory")
      .def_readonly("instance_id", &Trajectory::instance_id)
      .def_readonly("task", &Trajectory::task)
      .def_readonly("final", &Trajectory::final)
      .def_property_readonly("actions", &trajectory_actions)
      .def("__len__", [](const Trajectory& t) { return t.steps.size(); });

  py::class_<EpisodeState>(m, "EpisodeState")
      .def_readonly("current", &EpisodeState::current)
      .def_readonly("step", &EpisodeState::step)
      .def_readonly("max_steps", &EpisodeState::max_steps);
  m.def("make_initial_state", &make_initial_state, py::arg("instance"),
        py::arg("max_steps") = kDefaultMaxEpisodeSteps,
        py::keep_alive<0, 1>());  // the state references the instance
  m.def("valid_actions", &valid_actions);
  m.def("apply_action", &apply_action);
  m.def("featurize", [](const EpisodeState& state, EditAction action) {
    const PolicyFeatures f = featurize(state, action);
    return std::vector<double>(f.begin(), f.end());
  });
  m.def(
      "action_distribution",
      [](const PolicyParams& params, const EpisodeState& state, const SamplingConfig& sampling) {
        const ActionDistribution dist = action_distribution(params, state, sampling);
        return py::make_tuple(dist.actions, dist.probs, dist.logits);
      },
      py::arg("params"), py::arg("state"), py::arg("sampling") = SamplingConfig{});

  m.def("gold_action_sequence", &gold_action_sequence);
  m.def("replay", [](const RewriteInstance& inst, const std::vector<EditAction>& actions) {
    return replay(inst, actions);
  });
  m.def("greedy_rollout", &greedy_rollout, py::arg("params"), py::arg("instance"),
        py::arg("max_steps") = kDefaultMaxEpisodeSteps);
  m.def(
      "rollout",
      [](const PolicyParams& params, const RewriteInstance& inst, const SamplingConfig& sampling,
         int max_steps, std::uint64_t seed) {
        RngStream rng(seed);
        return rollout(params, inst, sampling, max_steps, rng);
      },
      py::arg("params"), py::arg("instance"), py::arg("sampling") = SamplingConfig{},
      py::arg("max_steps") = kDefaultMaxEpisodeSteps, py::arg("seed") = 0);

  py::class_<SftConfig>(m, "SftConfig")
      .def(py::init<>())
      .def_readwrite("steps", &SftConfig::steps)
      .def_readwrite("batch_size", &SftConfig::batch_size)
      .def_readwrite("learning_rate", &SftConfig::learning_rate)
      .def_readwrite("heldout_fraction", &SftConfig::heldout_fraction)
      .def_readwrite("max_episode_steps", &SftConfig::max_episode_steps);
  py::class_<SftResult>(m, "SftResult")
      .def_readonly("params", &SftResult::params)
      .def_readonly("heldout_exact_match", &SftResult::heldout_exact_match)
      .def_readonly("epoch_losses", &SftResult::epoch_losses);
  m.def(
      "sft_train",
      [](const std::vector<RewriteInstance>& dataset, const SftConfig& cfg, std::uint64_t seed) {
        RngStream rng(seed);
        return sft_train(dataset, cfg, rng);
      },
      py::arg("dataset"), py::arg("cfg") = SftConfig{}, py::arg("seed") = 0);
  m.def("save_policy", &save_policy);
  m.def("load_policy", &load_policy);

  // ---- rewards ---------------------------------------------------------------
  m.def("bt_probability", &bt_probability);
  m.def("response_features", [](const RewriteInstance& inst, const Document& final_doc) {
    const ResponseFeatures f = response_features(inst, final_doc);
    return std::vector<double>(f.begin(), f.end());
  });
  py::class_<RewardModel>(m, "RewardModel")
      .def(py::init<>())
      .def_readwrite("objective", &RewardModel::objective)
      .def_readwrite("phi", &RewardModel::phi)
      .def("score", [](const RewardModel& rm, const RewriteInstance& inst,
                       const Document& final_doc) {
        return rm.score(response_features(inst, final_doc));
      });
  py::class_<PreferencePair>(m, "PreferencePair")
      .def_readonly("instance_id", &PreferencePair::instance_id)
      .def_readonly("task", &PreferencePair::task)
      .def_readonly("objective", &PreferencePair::objective)
      .def_readonly("better", &PreferencePair::better)
      .def_readonly("worse", &PreferencePair::worse)
      .def_readonly("score_gap", &PreferencePair::score_gap);
  py::class_<PairBuildConfig>(m, "PairBuildConfig")
      .def(py::init<>())
      .def_readwrite("samples_per_instance", &PairBuildConfig::samples_per_instance)
      .def_readwrite("sampling", &PairBuildConfig::sampling)
      .def_readwrite("max_episode_steps", &PairBuildConfig::max_episode_steps);
  py::class_<PreferenceDataset>(m, "PreferenceDataset")
      .def_readonly("agreement", &PreferenceDataset::agreement)
      .def_readonly("coherence", &PreferenceDataset::coherence);
  m.def(
      "build_preference_pairs",
      [](const PolicyParams& sft, const std::vector<RewriteInstance>& dataset,
         const PairBuildConfig& cfg, std::uint64_t seed) {
        RngStream rng(seed);
        return build_preference_pairs(sft, dataset, cfg, rng);
      },
      py::arg("sft_params"), py::arg("dataset"), py::arg("cfg") = PairBuildConfig{},
      py::arg("seed") = 0);
  py::class_<RmConfig>(m, "RmConfig")
      .def(py::init<>())
      .def_readwrite("steps", &RmConfig::steps)
      .def_readwrite("batch_size", &RmConfig::batch_size)
      .def_readwrite("learning_rate", &RmConfig::learning_rate)
      .def_readwrite("heldout_fraction", &RmConfig::heldout_fraction)
      .def_readwrite("eval_every", &RmConfig::eval_every)
      .def_readwrite("z_loss_enabled", &RmConfig::z_loss_enabled)
      .def_readwrite("z_loss_coeff", &RmConfig::z_loss_coeff);
  py::class_<RmTrainResult>(m, "RmTrainResult")
      .def_readonly("model", &RmTrainResult::model)
      .def_readonly("accuracy_curve", &RmTrainResult::accuracy_curve)
      .def_readonly("heldout_accuracy", &RmTrainResult::heldout_accuracy)
      .def_readonly("per_task_accuracy", &RmTrainResult::per_task_accuracy);
  m.def(
      "train_reward_model",
      [](const std::vector<PreferencePair>& pairs, Objective objective, const RmConfig& cfg,
         std::uint64_t seed) {
        RngStream rng(seed);
        return train_reward_model(pairs, objective, cfg, rng);
      },
      py::arg("pairs"), py::arg("objective"), py::arg("cfg") = RmConfig{}, py::arg("seed") = 0);
  m.def("conciseness_reward", &conciseness_reward);
  m.def("save_reward_model", &save_reward_model);
  m.def("load_reward_model", &load_reward_model);

  py::class_<WeightTriple>(m, "WeightTriple")
      .def(py::init<double, double, double>(), py::arg("w_agreement"), py::arg("w_coherence"),
           py::arg("w_conciseness"))
      .def_readwrite("w_agreement", &WeightTriple::w_agreement)
      .def_readwrite("w_coherence", &WeightTriple::w_coherence)
      .def_readwrite("w_conciseness", &WeightTriple::w_conciseness)
      .def("validate", &WeightTriple::validate);
  py::class_<RewardWeights>(m, "RewardWeights")
      .def(py::init<>())
      .def_readwrite("static_triple", &RewardWeights::static_triple)
      .def_readwrite("per_task", &RewardWeights::per_task)
      .def("for_task", &RewardWeights::for_task)
      .def("validate", &RewardWeights::validate);
  m.def("default_static_weights", &default_static_weights);
  m.def("default_reward_weights", &default_reward_weights);
  m.def("aggregate_reward",
        py::overload_cast<const WeightTriple&, double, double, double>(&aggregate_reward));
  m.def("aggregate_reward_for_task",
        py::overload_cast<const RewardWeights&, TaskKind, double, double, double>(
            &aggregate_reward));

  // ---- rl ------------------------------------------------------------------------
  py::class_<RlConfig>(m, "RlConfig")
      .def(py::init<>())
      .def_readwrite("beta", &RlConfig::beta)
      .def_readwrite("clip_epsilon", &RlConfig::clip_epsilon)
      .def_readwrite("policy_step", &RlConfig::policy_step)
      .def_readwrite("value_step", &RlConfig::value_step)
      .def_readwrite("warmup_steps", &RlConfig::warmup_steps)
      .def_readwrite("max_steps", &RlConfig::max_steps)
      .def_readwrite("batch_episodes", &RlConfig::batch_episodes)
      .def_readwrite("weights_mode", &RlConfig::weights_mode)
      .def_readwrite("weights", &RlConfig::weights)
      .def_readwrite("sampling", &RlConfig::sampling)
      .def_readwrite("max_episode_steps", &RlConfig::max_episode_steps)
      .def_readwrite("kl_ceiling", &RlConfig::kl_ceiling)
      .def_readwrite("weight_schedule", &RlConfig::weight_schedule);
  py::class_<RlStepLog>(m, "RlStepLog")
      .def_readonly("step", &RlStepLog::step)
      .def_readonly("task", &RlStepLog::task)
      .def_readonly("mean_agreement", &RlStepLog::mean_agreement)
      .def_readonly("mean_coherence", &RlStepLog::mean_coherence)
      .def_readonly("mean_conciseness", &RlStepLog::mean_conciseness)
      .def_readonly("mean_aggregate", &RlStepLog::mean_aggregate)
      .def_readonly("kl", &RlStepLog::kl);
  py::class_<RlResult>(m, "RlResult")
      .def_readonly("params", &RlResult::params)
      .def_readonly("log", &RlResult::log)
      .def_readonly("final_kl", &RlResult::final_kl);
  m.def(
      "train_rl",
      [](const PolicyParams& sft, const std::vector<RewriteInstance>& instances,
         const RlConfig& cfg, std::uint64_t seed, const RewardModel* agreement_rm,
         const RewardModel* coherence_rm) {
        RewardSource source;
        source.agreement_rm = agreement_rm;
        source.coherence_rm = coherence_rm;
        RngStream rng(seed);
        return train_rl(sft, split_by_task(instances), source, cfg, rng);
      },
      py::arg("sft_params"), py::arg("instances"), py::arg("cfg") = RlConfig{},
      py::arg("seed") = 0, py::arg("agreement_rm") = nullptr, py::arg("coherence_rm") = nullptr,
      py::keep_alive<0, 5>(), py::keep_alive<0, 6>());
  m.def("policy_kl", [](const PolicyParams& a, const PolicyParams& b,
                        const std::vector<RewriteInstance>& instances) {
    TaskDatasets sets = split_by_task(instances);
    return kl_estimate(a, b, probe_states(sets, 10));
  });

  // ---- eval ------------------------------------------------------------------------
  py::class_<TaskMetrics>(m, "TaskMetrics")
      .def_readonly("task", &TaskMetrics::task)
      .def_readonly("episodes", &TaskMetrics::episodes)
      .def_readonly("mean_length", &TaskMetrics::mean_length)
      .def_readonly("mean_agreement", &TaskMetrics::mean_agreement)
      .def_readonly("mean_coherence", &TaskMetrics::mean_coherence)
      .def_readonly("mean_edit_ratio", &TaskMetrics::mean_edit_ratio)
      .def_readonly("f1_at", &TaskMetrics::f1_at);
  py::class_<MetricsReport>(m, "MetricsReport")
      .def_readonly("policy_name", &MetricsReport::policy_name)
      .def_readonly("ks", &MetricsReport::ks)
      .def_readonly("per_task", &MetricsReport::per_task);
  m.def(
      "evaluate_policy",
      [](const PolicyParams& params, const std::vector<RewriteInstance>& eval_set,
         const std::string& name, const std::vector<int>& ks) {
        EvalConfig cfg;
        cfg.ks = ks;
        return evaluate_policy(params, eval_set, cfg, name);
      },
      py::arg("params"), py::arg("eval_set"), py::arg("name") = "policy",
      py::arg("ks") = std::vector<int>{});
  py::class_<SxsReport>(m, "SxsReport")
      .def_readonly("policy_a", &SxsReport::policy_a)
      .def_readonly("policy_b", &SxsReport::policy_b)
      .def_readonly("n", &SxsReport::n)
      .def_readonly("mean_score_a", &SxsReport::mean_score_a)
      .def_readonly("mean_score_b", &SxsReport::mean_score_b)
      .def_readonly("wins_a", &SxsReport::wins_a)
      .def_readonly("wins_b", &SxsReport::wins_b)
      .def_readonly("ties", &SxsReport::ties);
  m.def(
      "run_sxs",
      [](const PolicyParams& a, const PolicyParams& b,
         const std::vector<RewriteInstance>& eval_set, const std::string& name_a,
         const std::string& name_b) { return run_sxs(a, b, eval_set, name_a, name_b); },
      py::arg("params_a"), py::arg("params_b"), py::arg("eval_set"), py::arg("name_a") = "a",
      py::arg("name_b") = "b");
  m.def(
      "mean_sampled_aggregate",
      [](const PolicyParams& params, const std::vector<RewriteInstance>& eval_set,
         const RewardWeights& weights, WeightsMode mode, int samples, std::uint64_t seed) {
        return mean_sampled_aggregate(params, eval_set, weights, mode, SamplingConfig{}, samples,
                                      seed);
      },
      py::arg("params"), py::arg("eval_set"), py::arg("weights"), py::arg("mode"),
      py::arg("samples") = 4, py::arg("seed") = 0);

  // ---- experiment config and pipeline stages ------------------------------------
  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def(py::init<>())
      .def_readwrite("seed", &ExperimentConfig::seed)
      .def_readwrite("output_dir", &ExperimentConfig::output_dir)
      .def_readwrite("sft", &ExperimentConfig::sft)
      .def_readwrite("pairs", &ExperimentConfig::pairs)
      .def_readwrite("rm", &ExperimentConfig::rm)
      .def_readwrite("rl", &ExperimentConfig::rl)
      .def("to_json", &config_to_json)
      .def_property(
          "train_per_task",
          [](const ExperimentConfig& c) { return c.corpus.train_per_task; },
          [](ExperimentConfig& c, int v) { c.corpus.train_per_task = v; })
      .def_property(
          "eval_per_task",
          [](const ExperimentConfig& c) { return c.corpus.eval_per_task; },
          [](ExperimentConfig& c, int v) { c.corpus.eval_per_task = v; });
  m.def("default_config", &default_config);
  m.def("load_config", &load_config);
  m.def("config_from_json", &config_from_json);
  m.def("run_gen_data", &run_gen_data);
  m.def("run_sft_stage", &run_sft_stage);
  m.def("run_train_rm_stage", &run_train_rm_stage);
  m.def("run_rl_stage", &run_rl_stage, py::arg("cfg"), py::arg("oracle_rewards") = false);
  m.def("run_eval_stage", &run_eval_stage);
  m.def("run_sxs_stage", &run_sxs_stage);
}
