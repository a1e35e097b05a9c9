#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rwlab/common.hpp"
#include "rwlab/corpus.hpp"
#include "rwlab/policy.hpp"
#include "rwlab/reward.hpp"

namespace rwlab {

enum class WeightsMode { Static, TaskSpecific };
std::string weights_mode_name(WeightsMode m);
WeightsMode parse_weights_mode(std::string_view name);

struct RlConfig {
  double beta = 0.05;          // KL coefficient toward the reference policy
  double clip_epsilon = 0.2;   // PPO ratio clip
  double policy_step = 0.1;
  double value_step = 0.05;
  int warmup_steps = 50;       // value-only steps; the policy stays frozen
  int max_steps = 600;
  int batch_episodes = 32;
  WeightsMode weights_mode = WeightsMode::TaskSpecific;
  RewardWeights weights = default_reward_weights();
  SamplingConfig sampling;     // rollout sampling (temperature 1, top-K 40)
  int max_episode_steps = kDefaultMaxEpisodeSteps;
  double kl_ceiling = 100.0;   // divergence guard
  double advantage_std_floor = 1e-8;
  // Optional step-indexed override of the weight triple; disabled (null) by
  // default, in which case the mode picks the static or per-task triple.
  std::function<WeightTriple(int step, TaskKind task)> weight_schedule;

  void validate() const;
  WeightTriple triple_for(int step, TaskKind task) const {
    if (weight_schedule) {
      WeightTriple t = weight_schedule(step, task);
      t.validate();
      return t;
    }
    return weights_mode == WeightsMode::Static ? weights.static_triple
                                               : weights.for_task(task);
  }
};

// Value baseline over instance-level features:
// [bias, task one-hot (3), critique count / 16, requirement count / 16,
//  initial coherence flag].
inline constexpr int kNumValueFeatures = 7;

struct ValueParams {
  std::vector<double> v = std::vector<double>(kNumValueFeatures, 0.0);
};

std::array<double, kNumValueFeatures> value_features(const RewriteInstance& instance);
double value_estimate(const ValueParams& params, const RewriteInstance& instance);

// Mean over states of the exact discrete KL(pi_p(.|s) || pi_q(.|s)).
double kl_estimate(const PolicyParams& p, const PolicyParams& q,
                   std::span<const EpisodeState> states);

// One PPO batch: trajectories with their instances and per-episode rewards.
struct RlBatch {
  std::vector<Trajectory> trajectories;
  std::vector<const RewriteInstance*> instances;
  std::vector<double> reward_agreement;    // raw per-objective scores
  std::vector<double> reward_coherence;
  std::vector<double> reward_conciseness;
  std::vector<double> aggregated;          // task-weighted combination
  std::vector<double> episode_kl;          // sampled sum of log pi - log pi_ref
};

// Episode return = aggregated reward - beta * episode KL; advantage = return -
// value(instance), batch-standardized with a zero-variance guard.
struct AdvantageResult {
  std::vector<double> returns;
  std::vector<double> advantages;
};
AdvantageResult compute_advantages(const RlBatch& batch, const ValueParams& value,
                                   double beta, double std_floor);

struct PpoStats {
  double mean_agreement = 0.0;
  double mean_coherence = 0.0;
  double mean_conciseness = 0.0;
  double mean_aggregate = 0.0;
  double policy_surrogate = 0.0;
  double value_loss_before = 0.0;
  double value_loss_after = 0.0;
};

// Clipped-surrogate update on theta plus one least-squares step on the value
// weights. During warm-up the policy is left bit-exactly unchanged.
PpoStats ppo_update(PolicyParams& theta, ValueParams& value, const RlBatch& batch,
                    std::span<const double> advantages, std::span<const double> returns,
                    const RlConfig& cfg, bool warmup);

// Reward source: trained RMs (scores squashed onto the unit interval) or the
// judges directly (ablation mode).
struct RewardSource {
  const RewardModel* agreement_rm = nullptr;
  const RewardModel* coherence_rm = nullptr;
  bool oracle() const { return agreement_rm == nullptr; }
};

struct RlStepLog {
  int step = 0;
  TaskKind task = TaskKind::Factuality;
  double mean_agreement = 0.0;
  double mean_coherence = 0.0;
  double mean_conciseness = 0.0;
  double mean_aggregate = 0.0;
  double kl = 0.0;
};

struct RlResult {
  PolicyParams params;
  ValueParams value;
  std::vector<RlStepLog> log;
  double final_kl = 0.0;  // KL(pi_theta || pi_ref) over the probe states
};

using TaskDatasets = std::array<std::vector<RewriteInstance>, kNumTasks>;

RlResult train_rl(const PolicyParams& sft_params, const TaskDatasets& train_sets,
                  const RewardSource& source, const RlConfig& cfg, RngStream& rng);

// Fixed probe used for KL logging: every pre-action state along the gold
// action sequences of the first instances of each task.
std::vector<EpisodeState> probe_states(const TaskDatasets& sets, int per_task);

// Append-only training log with a mandatory header row.
void write_rl_log(std::span<const RlStepLog> log, const std::filesystem::path& path);

}  // namespace rwlab
