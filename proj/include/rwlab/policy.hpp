#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rwlab/common.hpp"
#include "rwlab/corpus.hpp"

namespace rwlab {

enum class ActionClass {
  ApplyCritique = 0,
  ApplyRequirement = 1,
  FixDerived = 2,
  SpuriousEdit = 3,
  Stop = 4,
};
inline constexpr int kNumActionClasses = 5;

struct EditAction {
  ActionClass cls = ActionClass::Stop;
  int index = 0;  // unused for Stop
  friend bool operator==(const EditAction&, const EditAction&) = default;
};
std::string action_label(EditAction a);

// Feature layout: [bias, class one-hot (5), fraction of critiques/requirements
// still unapplied, edit ratio of the current document vs the initial,
// coherence flag of the current document, fraction of steps used].
inline constexpr int kNumPolicyFeatures = 10;
inline constexpr int kPolicyFeatureVersion = 1;
inline constexpr int kDefaultMaxEpisodeSteps = 16;

using PolicyFeatures = std::array<double, kNumPolicyFeatures>;

struct PolicyParams {
  Matrix theta{kNumPolicyFeatures, kNumActionClasses};
  int feature_version = kPolicyFeatureVersion;
  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;
};

struct EpisodeState {
  const RewriteInstance* instance = nullptr;
  Document current;
  int step = 0;
  int max_steps = kDefaultMaxEpisodeSteps;
  std::uint32_t applied_critiques = 0;
  std::uint32_t applied_requirements = 0;
  std::uint32_t applied_derived = 0;
  std::uint32_t applied_spurious = 0;
};

EpisodeState make_initial_state(const RewriteInstance& instance,
                                int max_steps = kDefaultMaxEpisodeSteps);

// Enumeration order fixes greedy tie-breaking: stale derived fixes first, then
// critiques, requirements, spurious edits, and Stop last. Non-Stop actions are
// one-shot; FixDerived is only offered while the record is stale.
std::vector<EditAction> valid_actions(const EpisodeState& state);

PolicyFeatures featurize(const EpisodeState& state, EditAction action);

// Advance the state by one action (Stop only consumes the step).
void apply_action(EpisodeState& state, EditAction action);

struct SamplingConfig {
  double temperature = 1.0;
  int top_k = 40;  // <= 0 disables truncation; effective K is min(top_k, #valid)
};

struct ActionDistribution {
  std::vector<EditAction> actions;
  std::vector<int> classes;
  std::vector<PolicyFeatures> features;
  std::vector<double> logits;  // pre-temperature
  std::vector<double> probs;   // zero outside the top-K cut
};

ActionDistribution action_distribution(const PolicyParams& params, const EpisodeState& state,
                                       const SamplingConfig& sampling = {});

struct TrajectoryStep {
  std::vector<PolicyFeatures> action_features;  // one row per valid action
  std::vector<int> action_classes;
  int chosen = 0;  // index into the rows above
  EditAction action;
  double behavior_log_prob = 0.0;
};

struct Trajectory {
  std::string instance_id;
  TaskKind task = TaskKind::Factuality;
  int feature_version = kPolicyFeatureVersion;
  std::vector<TrajectoryStep> steps;
  Document final;
};

Trajectory rollout(const PolicyParams& params, const RewriteInstance& instance,
                   const SamplingConfig& sampling, int max_steps, RngStream& rng);

// Deterministic temperature->0 decode: argmax logit, ties to the lowest index.
Trajectory greedy_rollout(const PolicyParams& params, const RewriteInstance& instance,
                          int max_steps = kDefaultMaxEpisodeSteps);

// Trajectory that follows a fixed action sequence, recording features and the
// policy's log-probs along the way. Used for behavior cloning.
Trajectory trajectory_for_actions(const PolicyParams& params, const RewriteInstance& instance,
                                  std::span<const EditAction> actions,
                                  int max_steps = kDefaultMaxEpisodeSteps);

// Sum over steps of log pi_theta(a|s) under the canonical (untempered,
// untruncated) policy, with its exact gradient w.r.t. theta.
std::pair<double, Matrix> log_prob_and_grad(const PolicyParams& params,
                                            const Trajectory& trajectory);

// Per-step log pi(a_t|s_t) under `params` for the trajectory's recorded actions.
std::vector<double> step_log_probs(const PolicyParams& params, const Trajectory& trajectory);

// Critiques/requirements in index order, FixDerived for every record those
// edits invalidate, then Stop. Replaying it reproduces gold exactly.
std::vector<EditAction> gold_action_sequence(const RewriteInstance& instance);

Document replay(const RewriteInstance& instance, std::span<const EditAction> actions);

std::vector<EditAction> trajectory_actions(const Trajectory& t);

// ---- SFT (behavior cloning of gold action sequences) -----------------------

// Desk-scale default: a brief cloning run that leaves the reference policy
// competent but still stochastic under temperature-1 sampling, which is what
// the later preference sampling and RL stages feed on.
struct SftConfig {
  int steps = 12;
  int batch_size = 16;
  double learning_rate = 0.05;
  double heldout_fraction = 0.1;
  int max_episode_steps = kDefaultMaxEpisodeSteps;
};

struct SftResult {
  PolicyParams params;
  double heldout_exact_match = 0.0;          // greedy decode reproduces gold
  std::vector<double> epoch_losses;          // mean NLL over the train split
};

SftResult sft_train(std::span<const RewriteInstance> dataset, const SftConfig& cfg,
                    RngStream& rng);

// ---- checkpoints ------------------------------------------------------------

void save_policy(const PolicyParams& params, const std::filesystem::path& path);
PolicyParams load_policy(const std::filesystem::path& path);

}  // namespace rwlab
