#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rwlab/common.hpp"
#include "rwlab/corpus.hpp"
#include "rwlab/policy.hpp"

namespace rwlab {

// Diff-statistics representation of a (instance, final document) pair. The
// features deliberately exclude the judges' scores so reward-model training is
// a real learning problem. Layout:
// [bias, fraction of critique/requirement sites changed vs initial, count of
//  diffs at non-target sites, edit ratio vs initial, remaining placeholder
//  count, derived-record mismatch count, normalized length delta].
inline constexpr int kNumResponseFeatures = 7;
inline constexpr int kRmFeatureVersion = 1;
using ResponseFeatures = std::array<double, kNumResponseFeatures>;

ResponseFeatures response_features(const RewriteInstance& instance, const Document& final_doc);

enum class Objective { Agreement, Coherence };
std::string objective_name(Objective o);
Objective parse_objective(std::string_view name);

struct RewardModel {
  Objective objective = Objective::Agreement;
  std::vector<double> phi = std::vector<double>(kNumResponseFeatures, 0.0);
  int feature_version = kRmFeatureVersion;

  double score(const ResponseFeatures& f) const;
};

struct PreferencePair {
  std::string instance_id;
  TaskKind task = TaskKind::Factuality;
  Objective objective = Objective::Agreement;
  Document better;
  Document worse;
  ResponseFeatures better_features{};
  ResponseFeatures worse_features{};
  double score_gap = 0.0;  // oracle score difference, strictly positive
};

// Preference probability exp(r+)/(exp(r+)+exp(r-)), computed in the
// numerically stable sigmoid-of-difference form.
double bt_probability(double r_plus, double r_minus);

// Mean over the batch of -log sigmoid(r(y+) - r(y-)), with exact gradient
// w.r.t. phi. z_loss_coeff > 0 adds z_loss_coeff * mean((r+ + r-)^2).
std::pair<double, std::vector<double>> bt_loss_and_grad(const RewardModel& model,
                                                        std::span<const PreferencePair> batch,
                                                        double z_loss_coeff = 0.0);

struct PairBuildConfig {
  int samples_per_instance = 10;  // n >= 2
  SamplingConfig sampling;
  int max_episode_steps = kDefaultMaxEpisodeSteps;
};

struct PreferenceDataset {
  std::vector<PreferencePair> agreement;
  std::vector<PreferencePair> coherence;
};

// Sample n responses per instance under the reference policy, score them with
// the agreement and coherence oracles, and keep the (highest, lowest) pair per
// objective. Instances with zero score spread are skipped for that objective;
// ties among equals break toward the lowest rollout index.
PreferenceDataset build_preference_pairs(const PolicyParams& sft_params,
                                         std::span<const RewriteInstance> dataset,
                                         const PairBuildConfig& cfg, RngStream& rng);

struct RmConfig {
  int steps = 5000;
  int batch_size = 64;
  double learning_rate = 0.05;
  double heldout_fraction = 0.2;
  int eval_every = 100;
  // The z penalty pins the common score magnitude; without it the coherence
  // model drifts on feature directions its pairs never constrain.
  bool z_loss_enabled = true;
  double z_loss_coeff = 1e-2;
};

struct RmTrainResult {
  RewardModel model;
  std::vector<std::pair<int, double>> accuracy_curve;  // (step, held-out accuracy)
  double heldout_accuracy = 0.0;
  std::map<TaskKind, double> per_task_accuracy;
};

RmTrainResult train_reward_model(std::span<const PreferencePair> pairs, Objective objective,
                                 const RmConfig& cfg, RngStream& rng);

// Fraction of pairs the model ranks correctly (strict better > worse).
double pairwise_accuracy(const RewardModel& model, std::span<const PreferencePair> pairs);

// Rule-based conciseness reward: -edit_ratio(initial, final), always <= 0.
double conciseness_reward(const RewriteInstance& instance, const Document& final_doc);

// ---- task-weighted aggregation ---------------------------------------------

struct WeightTriple {
  double w_agreement = 0.0;
  double w_coherence = 0.0;
  double w_conciseness = 0.0;
  // Each weight >= 0 and the triple sums to 1 within 1e-9.
  void validate() const;
  friend bool operator==(const WeightTriple&, const WeightTriple&) = default;
};

struct RewardWeights {
  WeightTriple static_triple;                    // task-agnostic fallback
  std::array<WeightTriple, kNumTasks> per_task;  // indexed by TaskKind

  const WeightTriple& for_task(TaskKind t) const {
    return per_task[static_cast<int>(t)];
  }
  void validate() const;
};

WeightTriple default_static_weights();          // (9/16, 2/16, 5/16)
RewardWeights default_reward_weights();         // per-task defaults + static triple

double aggregate_reward(const WeightTriple& weights, double r_agreement, double r_coherence,
                        double r_conciseness);
double aggregate_reward(const RewardWeights& weights, TaskKind task, double r_agreement,
                        double r_coherence, double r_conciseness);

// ---- checkpoints -------------------------------------------------------------

void save_reward_model(const RewardModel& model, const std::filesystem::path& path);
RewardModel load_reward_model(const std::filesystem::path& path);

}  // namespace rwlab
