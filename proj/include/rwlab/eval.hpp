#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rwlab/corpus.hpp"
#include "rwlab/judge.hpp"
#include "rwlab/policy.hpp"
#include "rwlab/reward.hpp"
#include "rwlab/rl.hpp"

namespace rwlab {

// Slot for an external entailment scorer (NLI-style columns). No
// implementation ships; reports include the columns only when one is
// registered.
struct EntailmentScorer {
  virtual ~EntailmentScorer() = default;
  virtual double score(const TokenSeq& premise, const TokenSeq& hypothesis) const = 0;
};

struct TaskMetrics {
  TaskKind task = TaskKind::Factuality;
  int episodes = 0;
  double mean_length = 0.0;
  double mean_agreement = 0.0;
  double mean_coherence = 0.0;
  double mean_edit_ratio = 0.0;
  std::vector<std::pair<int, double>> f1_at;  // factuality only
  double mean_nli = 0.0;          // populated only with a registered scorer
  double mean_reverse_nli = 0.0;
  bool has_nli = false;
};

struct MetricsReport {
  std::string policy_name;
  std::vector<int> ks;
  std::vector<TaskMetrics> per_task;
};

struct EvalConfig {
  std::vector<int> ks;  // empty: derive from the eval set (median and max facts)
  int max_episode_steps = kDefaultMaxEpisodeSteps;
  const EntailmentScorer* entailment = nullptr;
};

// Median (lower) and maximum gold fact counts over the factuality slice.
std::vector<int> default_ks(std::span<const RewriteInstance> eval_set);

// Greedy decode once per instance, judge the finals, aggregate per task.
MetricsReport evaluate_policy(const PolicyParams& params,
                              std::span<const RewriteInstance> eval_set,
                              const EvalConfig& cfg, const std::string& policy_name);

// Mean task-weighted oracle reward of greedy decodes.
double mean_eval_aggregate(const PolicyParams& params,
                           std::span<const RewriteInstance> eval_set,
                           const RewardWeights& weights, WeightsMode mode,
                           int max_episode_steps = kDefaultMaxEpisodeSteps);
double mean_eval_edit_ratio(const PolicyParams& params,
                            std::span<const RewriteInstance> eval_set,
                            int max_episode_steps = kDefaultMaxEpisodeSteps);

// Monte-Carlo estimate of the policy's expected oracle reward under its own
// sampling distribution: the quantity the KL-regularized objective maximizes.
// Deterministic for a fixed seed.
double mean_sampled_aggregate(const PolicyParams& params,
                              std::span<const RewriteInstance> eval_set,
                              const RewardWeights& weights, WeightsMode mode,
                              const SamplingConfig& sampling, int samples_per_instance,
                              std::uint64_t seed,
                              int max_episode_steps = kDefaultMaxEpisodeSteps);
double mean_sampled_edit_ratio(const PolicyParams& params,
                               std::span<const RewriteInstance> eval_set,
                               const SamplingConfig& sampling, int samples_per_instance,
                               std::uint64_t seed,
                               int max_episode_steps = kDefaultMaxEpisodeSteps);

struct SxsReport {
  std::string policy_a;
  std::string policy_b;
  int n = 0;
  double mean_score_a = 0.0;
  double mean_score_b = 0.0;
  int wins_a = 0;
  int wins_b = 0;
  int ties = 0;
};

// Side-by-side judging of two policies' greedy decodes on the same eval set.
// Swapping the policies transposes the report exactly.
SxsReport run_sxs(const PolicyParams& params_a, const PolicyParams& params_b,
                  std::span<const RewriteInstance> eval_set, const std::string& name_a,
                  const std::string& name_b,
                  int max_episode_steps = kDefaultMaxEpisodeSteps);

void write_metrics_tsv(std::span<const MetricsReport> reports, const std::filesystem::path& path);
void write_metrics_json(std::span<const MetricsReport> reports, const std::filesystem::path& path);
void write_sxs_tsv(std::span<const SxsReport> reports, const std::filesystem::path& path);
void write_sxs_json(std::span<const SxsReport> reports, const std::filesystem::path& path);

}  // namespace rwlab
