#include "rwlab/eval.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

#include "json.hpp"
#include "rwlab/common.hpp"
#include "rwlab/textops.hpp"

namespace rwlab {

std::vector<int> default_ks(std::span<const RewriteInstance> eval_set) {
  std::vector<int> counts;
  for (const auto& inst : eval_set) {
    if (inst.task == TaskKind::Factuality) {
      counts.push_back(static_cast<int>(inst.gold.facts.size()));
    }
  }
  if (counts.empty()) return {};
  std::sort(counts.begin(), counts.end());
  const int median = counts[(counts.size() - 1) / 2];
  const int max = counts.back();
  if (median == max) return {median};
  return {median, max};
}

MetricsReport evaluate_policy(const PolicyParams& params,
                              std::span<const RewriteInstance> eval_set,
                              const EvalConfig& cfg, const std::string& policy_name) {
  if (eval_set.empty()) throw std::invalid_argument("evaluate_policy: empty eval set");

  MetricsReport report;
  report.policy_name = policy_name;
  report.ks = cfg.ks.empty() ? default_ks(eval_set) : cfg.ks;

  struct Accumulator {
    int episodes = 0;
    double length = 0.0;
    double agreement_sum = 0.0;
    double coherence_sum = 0.0;
    double edit_ratio_sum = 0.0;
    std::vector<double> f1_sums;
    int factuality_episodes = 0;
    double nli_sum = 0.0;
    double reverse_nli_sum = 0.0;
  };
  std::map<TaskKind, Accumulator> acc;

  for (const auto& inst : eval_set) {
    Trajectory t = greedy_rollout(params, inst, cfg.max_episode_steps);
    Accumulator& a = acc[inst.task];
    if (a.f1_sums.size() != report.ks.size()) a.f1_sums.assign(report.ks.size(), 0.0);
    ++a.episodes;
    a.length += static_cast<double>(t.final.tokens.size());
    a.agreement_sum += agreement(inst, t.final);
    a.coherence_sum += static_cast<double>(coherence(t.final));
    a.edit_ratio_sum += edit_ratio(inst.initial.tokens, t.final.tokens);
    if (inst.task == TaskKind::Factuality) {
      ++a.factuality_episodes;
      const auto [supported, total] = fact_support_counts(inst, t.final);
      for (std::size_t i = 0; i < report.ks.size(); ++i) {
        a.f1_sums[i] += f1_at_k(supported, total, report.ks[i]);
      }
    }
    if (cfg.entailment != nullptr) {
      a.nli_sum += cfg.entailment->score(inst.initial.tokens, t.final.tokens);
      a.reverse_nli_sum += cfg.entailment->score(t.final.tokens, inst.initial.tokens);
    }
  }

  for (const auto& [task, a] : acc) {
    TaskMetrics m;
    m.task = task;
    m.episodes = a.episodes;
    m.mean_length = a.length / a.episodes;
    m.mean_agreement = a.agreement_sum / a.episodes;
    m.mean_coherence = a.coherence_sum / a.episodes;
    m.mean_edit_ratio = a.edit_ratio_sum / a.episodes;
    if (a.factuality_episodes > 0) {
      for (std::size_t i = 0; i < report.ks.size(); ++i) {
        m.f1_at.emplace_back(report.ks[i], a.f1_sums[i] / a.factuality_episodes);
      }
    }
    if (cfg.entailment != nullptr) {
      m.has_nli = true;
      m.mean_nli = a.nli_sum / a.episodes;
      m.mean_reverse_nli = a.reverse_nli_sum / a.episodes;
    }
    report.per_task.push_back(std::move(m));
  }
  return report;
}

double mean_eval_aggregate(const PolicyParams& params,
                           std::span<const RewriteInstance> eval_set,
                           const RewardWeights& weights, WeightsMode mode,
                           int max_episode_steps) {
  if (eval_set.empty()) throw std::invalid_argument("mean_eval_aggregate: empty eval set");
  double total = 0.0;
  for (const auto& inst : eval_set) {
    Trajectory t = greedy_rollout(params, inst, max_episode_steps);
    const WeightTriple& triple = mode == WeightsMode::Static
                                     ? weights.static_triple
                                     : weights.for_task(inst.task);
    total += aggregate_reward(triple, agreement(inst, t.final),
                              static_cast<double>(coherence(t.final)),
                              conciseness_reward(inst, t.final));
  }
  return total / static_cast<double>(eval_set.size());
}

double mean_eval_edit_ratio(const PolicyParams& params,
                            std::span<const RewriteInstance> eval_set,
                            int max_episode_steps) {
  if (eval_set.empty()) throw std::invalid_argument("mean_eval_edit_ratio: empty eval set");
  double total = 0.0;
  for (const auto& inst : eval_set) {
    Trajectory t = greedy_rollout(params, inst, max_episode_steps);
    total += edit_ratio(inst.initial.tokens, t.final.tokens);
  }
  return total / static_cast<double>(eval_set.size());
}

namespace {

template <typename ScoreFn>
double sampled_mean(const PolicyParams& params, std::span<const RewriteInstance> eval_set,
                    const SamplingConfig& sampling, int samples_per_instance,
                    std::uint64_t seed, int max_episode_steps, ScoreFn&& score) {
  if (eval_set.empty()) throw std::invalid_argument("sampled_mean: empty eval set");
  if (samples_per_instance <= 0) {
    throw std::invalid_argument("sampled_mean: samples_per_instance must be > 0");
  }
  RngStream stream(seed);
  double total = 0.0;
  for (std::size_t i = 0; i < eval_set.size(); ++i) {
    RngStream inst_rng = stream.substream(i);
    for (int s = 0; s < samples_per_instance; ++s) {
      Trajectory t = rollout(params, eval_set[i], sampling, max_episode_steps, inst_rng);
      total += score(eval_set[i], t.final);
    }
  }
  return total / (static_cast<double>(eval_set.size()) * samples_per_instance);
}

}  // namespace

double mean_sampled_aggregate(const PolicyParams& params,
                              std::span<const RewriteInstance> eval_set,
                              const RewardWeights& weights, WeightsMode mode,
                              const SamplingConfig& sampling, int samples_per_instance,
                              std::uint64_t seed, int max_episode_steps) {
  return sampled_mean(params, eval_set, sampling, samples_per_instance, seed, max_episode_steps,
                      [&](const RewriteInstance& inst, const Document& final_doc) {
                        const WeightTriple& triple = mode == WeightsMode::Static
                                                         ? weights.static_triple
                                                         : weights.for_task(inst.task);
                        return aggregate_reward(triple, agreement(inst, final_doc),
                                                static_cast<double>(coherence(final_doc)),
                                                conciseness_reward(inst, final_doc));
                      });
}

double mean_sampled_edit_ratio(const PolicyParams& params,
                               std::span<const RewriteInstance> eval_set,
                               const SamplingConfig& sampling, int samples_per_instance,
                               std::uint64_t seed, int max_episode_steps) {
  return sampled_mean(params, eval_set, sampling, samples_per_instance, seed, max_episode_steps,
                      [&](const RewriteInstance& inst, const Document& final_doc) {
                        return edit_ratio(inst.initial.tokens, final_doc.tokens);
                      });
}

SxsReport run_sxs(const PolicyParams& params_a, const PolicyParams& params_b,
                  std::span<const RewriteInstance> eval_set, const std::string& name_a,
                  const std::string& name_b, int max_episode_steps) {
  if (eval_set.empty()) throw std::invalid_argument("run_sxs: empty eval set");
  SxsReport report;
  report.policy_a = name_a;
  report.policy_b = name_b;
  for (const auto& inst : eval_set) {
    Trajectory ta = greedy_rollout(params_a, inst, max_episode_steps);
    Trajectory tb = greedy_rollout(params_b, inst, max_episode_steps);
    const SxsVerdict v = sxs_compare(inst, ta.final, tb.final);
    ++report.n;
    report.mean_score_a += v.score_a;
    report.mean_score_b += v.score_b;
    switch (v.choice) {
      case SxsVerdict::Choice::A: ++report.wins_a; break;
      case SxsVerdict::Choice::B: ++report.wins_b; break;
      case SxsVerdict::Choice::Same: ++report.ties; break;
    }
  }
  report.mean_score_a /= report.n;
  report.mean_score_b /= report.n;
  return report;
}

// ---- emission ---------------------------------------------------------------

void write_metrics_tsv(std::span<const MetricsReport> reports, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());

  std::vector<int> ks;
  bool any_nli = false;
  if (!reports.empty()) {
    ks = reports.front().ks;
    for (const auto& r : reports) {
      for (const auto& m : r.per_task) any_nli = any_nli || m.has_nli;
    }
  }
  out << "policy\ttask\tepisodes\tlength\tagreement\tcoherence\tedit_ratio";
  for (int k : ks) out << "\tf1@" << k;
  if (any_nli) out << "\tnli\treverse_nli";
  out << "\n";

  for (const auto& report : reports) {
    for (const auto& m : report.per_task) {
      out << report.policy_name << "\t" << task_name(m.task) << "\t" << m.episodes << "\t"
          << format_double(m.mean_length, 4) << "\t" << format_double(m.mean_agreement, 4)
          << "\t" << format_double(m.mean_coherence, 4) << "\t"
          << format_double(m.mean_edit_ratio, 4);
      for (std::size_t i = 0; i < ks.size(); ++i) {
        bool found = false;
        for (const auto& [k, f1] : m.f1_at) {
          if (k == ks[i]) {
            out << "\t" << format_double(f1, 4);
            found = true;
            break;
          }
        }
        if (!found) out << "\t-";
      }
      if (any_nli) {
        if (m.has_nli) {
          out << "\t" << format_double(m.mean_nli, 4) << "\t"
              << format_double(m.mean_reverse_nli, 4);
        } else {
          out << "\t-\t-";
        }
      }
      out << "\n";
    }
  }
}

void write_metrics_json(std::span<const MetricsReport> reports,
                        const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& report : reports) {
    nlohmann::json tasks = nlohmann::json::array();
    for (const auto& m : report.per_task) {
      nlohmann::json f1 = nlohmann::json::array();
      for (const auto& [k, v] : m.f1_at) f1.push_back({{"k", k}, {"f1", v}});
      nlohmann::json entry = {{"task", task_name(m.task)},
                              {"episodes", m.episodes},
                              {"length", m.mean_length},
                              {"agreement", m.mean_agreement},
                              {"coherence", m.mean_coherence},
                              {"edit_ratio", m.mean_edit_ratio},
                              {"f1_at", f1}};
      if (m.has_nli) {
        entry["nli"] = m.mean_nli;
        entry["reverse_nli"] = m.mean_reverse_nli;
      }
      tasks.push_back(std::move(entry));
    }
    j.push_back({{"policy", report.policy_name}, {"ks", report.ks}, {"tasks", tasks}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
}

void write_sxs_tsv(std::span<const SxsReport> reports, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "policy_a\tpolicy_b\tn\tmean_score_a\tmean_score_b\twins_a\twins_b\tsame\n";
  for (const auto& r : reports) {
    out << r.policy_a << "\t" << r.policy_b << "\t" << r.n << "\t"
        << format_double(r.mean_score_a, 4) << "\t" << format_double(r.mean_score_b, 4)
        << "\t" << r.wins_a << "\t" << r.wins_b << "\t" << r.ties << "\n";
  }
}

void write_sxs_json(std::span<const SxsReport> reports, const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : reports) {
    j.push_back({{"policy_a", r.policy_a},
                 {"policy_b", r.policy_b},
                 {"n", r.n},
                 {"mean_score_a", r.mean_score_a},
                 {"mean_score_b", r.mean_score_b},
                 {"wins_a", r.wins_a},
                 {"wins_b", r.wins_b},
                 {"same", r.ties}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace rwlab
