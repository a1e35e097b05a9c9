#include "rwlab/rl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "rwlab/judge.hpp"

namespace rwlab {

std::string weights_mode_name(WeightsMode m) {
  switch (m) {
    case WeightsMode::Static: return "static";
    case WeightsMode::TaskSpecific: return "task_specific";
  }
  throw std::logic_error("bad WeightsMode");
}

WeightsMode parse_weights_mode(std::string_view name) {
  if (name == "static") return WeightsMode::Static;
  if (name == "task_specific") return WeightsMode::TaskSpecific;
  throw std::invalid_argument("unknown weights mode: " + std::string(name));
}

void RlConfig::validate() const {
  if (beta < 0.0) throw std::invalid_argument("rl config: beta must be >= 0");
  if (clip_epsilon <= 0.0 || clip_epsilon > 1.0) {
    throw std::invalid_argument("rl config: clip_epsilon must be in (0, 1]");
  }
  if (warmup_steps < 0 || max_steps < 0 || warmup_steps > max_steps) {
    throw std::invalid_argument("rl config: need 0 <= warmup_steps <= max_steps");
  }
  if (batch_episodes <= 0) throw std::invalid_argument("rl config: batch_episodes must be > 0");
  if (policy_step <= 0.0 || value_step <= 0.0) {
    throw std::invalid_argument("rl config: step sizes must be > 0");
  }
  weights.validate();
}

std::array<double, kNumValueFeatures> value_features(const RewriteInstance& instance) {
  std::array<double, kNumValueFeatures> f{};
  f[0] = 1.0;
  f[1 + static_cast<int>(instance.task)] = 1.0;
  f[4] = static_cast<double>(instance.critiques.size()) / kDefaultMaxEpisodeSteps;
  f[5] = static_cast<double>(instance.requirements.size()) / kDefaultMaxEpisodeSteps;
  f[6] = static_cast<double>(coherence(instance.initial));
  return f;
}

double value_estimate(const ValueParams& params, const RewriteInstance& instance) {
  const auto f = value_features(instance);
  double acc = 0.0;
  for (int i = 0; i < kNumValueFeatures; ++i) acc += params.v[i] * f[i];
  return acc;
}

double kl_estimate(const PolicyParams& p, const PolicyParams& q,
                   std::span<const EpisodeState> states) {
  if (states.empty()) throw std::invalid_argument("kl_estimate: no states");
  if (p.feature_version != q.feature_version) {
    throw std::runtime_error("kl_estimate: feature_version mismatch between policies");
  }
  const SamplingConfig neutral{1.0, 0};
  double total = 0.0;
  for (const auto& state : states) {
    const ActionDistribution dp = action_distribution(p, state, neutral);
    const ActionDistribution dq = action_distribution(q, state, neutral);
    double kl = 0.0;
    for (std::size_t i = 0; i < dp.probs.size(); ++i) {
      kl += dp.probs[i] * (std::log(dp.probs[i]) - std::log(dq.probs[i]));
    }
    total += kl;
  }
  return total / static_cast<double>(states.size());
}

AdvantageResult compute_advantages(const RlBatch& batch, const ValueParams& value,
                                   double beta, double std_floor) {
  const std::size_t n = batch.trajectories.size();
  if (n == 0) throw std::invalid_argument("compute_advantages: empty batch");
  AdvantageResult out;
  out.returns.resize(n);
  out.advantages.resize(n);
  for (std::size_t e = 0; e < n; ++e) {
    out.returns[e] = batch.aggregated[e] - beta * batch.episode_kl[e];
    out.advantages[e] = out.returns[e] - value_estimate(value, *batch.instances[e]);
  }
  double mean = 0.0;
  for (double a : out.advantages) mean += a;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double a : out.advantages) var += (a - mean) * (a - mean);
  const double stddev = std::sqrt(var / static_cast<double>(n));
  if (stddev < std_floor) {
    std::fill(out.advantages.begin(), out.advantages.end(), 0.0);
  } else {
    for (double& a : out.advantages) a = (a - mean) / stddev;
  }
  return out;
}

namespace {

double value_loss(const ValueParams& value, const RlBatch& batch,
                  std::span<const double> returns) {
  double loss = 0.0;
  for (std::size_t e = 0; e < batch.instances.size(); ++e) {
    const double err = value_estimate(value, *batch.instances[e]) - returns[e];
    loss += err * err;
  }
  return loss / static_cast<double>(batch.instances.size());
}

}  // namespace

PpoStats ppo_update(PolicyParams& theta, ValueParams& value, const RlBatch& batch,
                    std::span<const double> advantages, std::span<const double> returns,
                    const RlConfig& cfg, bool warmup) {
  const std::size_t n = batch.trajectories.size();
  if (n == 0) throw std::invalid_argument("ppo_update: empty batch");

  PpoStats stats;
  for (std::size_t e = 0; e < n; ++e) {
    stats.mean_agreement += batch.reward_agreement[e];
    stats.mean_coherence += batch.reward_coherence[e];
    stats.mean_conciseness += batch.reward_conciseness[e];
    stats.mean_aggregate += batch.aggregated[e];
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  stats.mean_agreement *= inv_n;
  stats.mean_coherence *= inv_n;
  stats.mean_conciseness *= inv_n;
  stats.mean_aggregate *= inv_n;

  if (!warmup) {
    Matrix grad(kNumPolicyFeatures, kNumActionClasses);
    double surrogate = 0.0;
    std::size_t total_steps = 0;
    std::vector<double> logits;
    for (std::size_t e = 0; e < n; ++e) {
      const double adv = advantages[e];
      const std::vector<double> new_lps = step_log_probs(theta, batch.trajectories[e]);
      for (std::size_t t = 0; t < batch.trajectories[e].steps.size(); ++t) {
        const TrajectoryStep& step = batch.trajectories[e].steps[t];
        const double ratio = std::exp(new_lps[t] - step.behavior_log_prob);
        if (!std::isfinite(ratio)) {
          throw std::runtime_error("ppo_update: non-finite importance ratio");
        }
        const double clipped =
            std::clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
        const double unclipped_term = ratio * adv;
        const double clipped_term = clipped * adv;
        surrogate += std::min(unclipped_term, clipped_term);
        ++total_steps;
        if (unclipped_term > clipped_term) continue;  // clipped branch, zero gradient
        // d(ratio * adv)/dtheta = ratio * adv * d(log pi)/dtheta
        const double scale = ratio * adv;
        const int m = static_cast<int>(step.action_features.size());
        logits.resize(m);
        double max_logit = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < m; ++i) {
          double acc = 0.0;
          for (int r = 0; r < kNumPolicyFeatures; ++r) {
            acc += theta.theta.at(r, step.action_classes[i]) * step.action_features[i][r];
          }
          logits[i] = acc;
          max_logit = std::max(max_logit, acc);
        }
        double z = 0.0;
        for (int i = 0; i < m; ++i) z += std::exp(logits[i] - max_logit);
        for (int i = 0; i < m; ++i) {
          const double prob = std::exp(logits[i] - max_logit) / z;
          const double w = scale * ((i == step.chosen ? 1.0 : 0.0) - prob);
          const int cls = step.action_classes[i];
          for (int r = 0; r < kNumPolicyFeatures; ++r) {
            grad.at(r, cls) += w * step.action_features[i][r];
          }
        }
      }
    }
    if (total_steps > 0) {
      const double scale = cfg.policy_step / static_cast<double>(total_steps);
      for (std::size_t k = 0; k < theta.theta.data.size(); ++k) {
        theta.theta.data[k] += scale * grad.data[k];
      }
      stats.policy_surrogate = surrogate / static_cast<double>(total_steps);
    }
  }

  // One least-squares gradient step of the value baseline toward the returns.
  stats.value_loss_before = value_loss(value, batch, returns);
  std::vector<double> vgrad(kNumValueFeatures, 0.0);
  for (std::size_t e = 0; e < n; ++e) {
    const auto f = value_features(*batch.instances[e]);
    const double err = value_estimate(value, *batch.instances[e]) - returns[e];
    for (int i = 0; i < kNumValueFeatures; ++i) vgrad[i] += 2.0 * inv_n * err * f[i];
  }
  for (int i = 0; i < kNumValueFeatures; ++i) value.v[i] -= cfg.value_step * vgrad[i];
  stats.value_loss_after = value_loss(value, batch, returns);
  return stats;
}

std::vector<EpisodeState> probe_states(const TaskDatasets& sets, int per_task) {
  std::vector<EpisodeState> states;
  for (const auto& set : sets) {
    const int n = std::min<int>(per_task, static_cast<int>(set.size()));
    for (int i = 0; i < n; ++i) {
      const RewriteInstance& inst = set[i];
      EpisodeState state = make_initial_state(inst);
      for (const EditAction& a : gold_action_sequence(inst)) {
        states.push_back(state);
        if (a.cls == ActionClass::Stop) break;
        apply_action(state, a);
      }
    }
  }
  return states;
}

RlResult train_rl(const PolicyParams& sft_params, const TaskDatasets& train_sets,
                  const RewardSource& source, const RlConfig& cfg, RngStream& rng) {
  cfg.validate();
  for (const auto& set : train_sets) {
    if (set.empty()) throw std::invalid_argument("train_rl: every task needs training data");
  }
  if (!source.oracle() && source.coherence_rm == nullptr) {
    throw std::invalid_argument("train_rl: coherence RM missing");
  }

  RlResult result;
  result.params = sft_params;
  const PolicyParams& ref = sft_params;
  const std::vector<EpisodeState> probes = probe_states(train_sets, 10);

  RngStream task_rng = rng.substream(0);
  RngStream batch_rng = rng.substream(1);

  for (int step = 0; step < cfg.max_steps; ++step) {
    const TaskKind task = static_cast<TaskKind>(task_rng.below(kNumTasks));
    const auto& dataset = train_sets[static_cast<int>(task)];

    RlBatch batch;
    RngStream step_rng = batch_rng.substream(step);
    for (int e = 0; e < cfg.batch_episodes; ++e) {
      const RewriteInstance& inst = dataset[step_rng.below(dataset.size())];
      RngStream episode_rng = step_rng.substream(e);
      Trajectory traj =
          rollout(result.params, inst, cfg.sampling, cfg.max_episode_steps, episode_rng);

      const std::vector<double> behavior_lps = [&] {
        std::vector<double> lps;
        lps.reserve(traj.steps.size());
        for (const auto& s : traj.steps) lps.push_back(s.behavior_log_prob);
        return lps;
      }();
      const std::vector<double> ref_lps = step_log_probs(ref, traj);
      double episode_kl = 0.0;
      for (std::size_t t = 0; t < ref_lps.size(); ++t) {
        episode_kl += behavior_lps[t] - ref_lps[t];
      }

      double r_agr;
      double r_coh;
      if (source.oracle()) {
        r_agr = agreement(inst, traj.final);
        r_coh = static_cast<double>(coherence(traj.final));
      } else {
        // RM scores are unbounded linear functions; the sigmoid puts them on
        // the same unit interval as the judges and the rule-based conciseness
        // term, so the task triples keep their weighted-sum meaning. The z
        // penalty during RM training keeps scores centered where the squash
        // is sensitive.
        const ResponseFeatures f = response_features(inst, traj.final);
        r_agr = bt_probability(source.agreement_rm->score(f), 0.0);
        r_coh = bt_probability(source.coherence_rm->score(f), 0.0);
      }
      batch.reward_agreement.push_back(r_agr);
      batch.reward_coherence.push_back(r_coh);
      batch.reward_conciseness.push_back(conciseness_reward(inst, traj.final));
      batch.episode_kl.push_back(episode_kl);
      batch.instances.push_back(&inst);
      batch.trajectories.push_back(std::move(traj));
    }

    const WeightTriple triple = cfg.triple_for(step, task);
    for (int e = 0; e < cfg.batch_episodes; ++e) {
      batch.aggregated.push_back(aggregate_reward(triple, batch.reward_agreement[e],
                                                  batch.reward_coherence[e],
                                                  batch.reward_conciseness[e]));
    }

    const AdvantageResult adv =
        compute_advantages(batch, result.value, cfg.beta, cfg.advantage_std_floor);
    const bool warmup = step < cfg.warmup_steps;
    const PpoStats stats =
        ppo_update(result.params, result.value, batch, adv.advantages, adv.returns, cfg, warmup);

    const double kl = kl_estimate(result.params, ref, probes);
    if (kl > cfg.kl_ceiling) {
      throw std::runtime_error("train_rl: KL to reference exceeded ceiling at step " +
                               std::to_string(step) + " (" + std::to_string(kl) + ")");
    }
    result.log.push_back({step, task, stats.mean_agreement, stats.mean_coherence,
                          stats.mean_conciseness, stats.mean_aggregate, kl});
  }

  result.final_kl = kl_estimate(result.params, ref, probes);
  return result;
}

void write_rl_log(std::span<const RlStepLog> log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "step\ttask\tmean_agreement\tmean_coherence\tmean_conciseness\t"
         "mean_aggregate\tkl\n";
  for (const auto& row : log) {
    out << row.step << "\t" << task_name(row.task) << "\t"
        << format_double(row.mean_agreement, 6) << "\t"
        << format_double(row.mean_coherence, 6) << "\t"
        << format_double(row.mean_conciseness, 6) << "\t"
        << format_double(row.mean_aggregate, 6) << "\t" << format_double(row.kl, 6) << "\n";
  }
}

}  // namespace rwlab
