#include "rwlab/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "rwlab/judge.hpp"
#include "rwlab/textops.hpp"

namespace rwlab {

namespace {

void check_feature_version(int got, const char* where) {
  if (got != kPolicyFeatureVersion) {
    throw std::runtime_error(std::string(where) + ": feature_version mismatch (got " +
                             std::to_string(got) + ", expected " +
                             std::to_string(kPolicyFeatureVersion) + ")");
  }
}

// State-only part of the feature vector; the class one-hot is filled in later.
PolicyFeatures state_feature_base(const EpisodeState& state) {
  const RewriteInstance& inst = *state.instance;
  PolicyFeatures f{};
  f[0] = 1.0;
  const int total_targets =
      static_cast<int>(inst.critiques.size() + inst.requirements.size());
  const int applied_targets = std::popcount(state.applied_critiques) +
                              std::popcount(state.applied_requirements);
  f[6] = total_targets == 0
             ? 0.0
             : static_cast<double>(total_targets - applied_targets) / total_targets;
  f[7] = edit_ratio(inst.initial.tokens, state.current.tokens);
  f[8] = static_cast<double>(coherence(state.current));
  f[9] = state.max_steps == 0 ? 0.0
                              : static_cast<double>(state.step) / state.max_steps;
  return f;
}

void check_action_bounds(const EpisodeState& state, EditAction a) {
  const RewriteInstance& inst = *state.instance;
  switch (a.cls) {
    case ActionClass::ApplyCritique:
      if (a.index < 0 || a.index >= static_cast<int>(inst.critiques.size())) {
        throw std::out_of_range("featurize: critique index out of bounds");
      }
      break;
    case ActionClass::ApplyRequirement:
      if (a.index < 0 || a.index >= static_cast<int>(inst.requirements.size())) {
        throw std::out_of_range("featurize: requirement index out of bounds");
      }
      break;
    case ActionClass::FixDerived:
      if (a.index < 0 || a.index >= static_cast<int>(state.current.derived.size())) {
        throw std::out_of_range("featurize: derived index out of bounds");
      }
      break;
    case ActionClass::SpuriousEdit:
      if (a.index < 0 || a.index >= spurious_edit_count()) {
        throw std::out_of_range("featurize: spurious edit index out of bounds");
      }
      break;
    case ActionClass::Stop:
      break;
  }
}

double dot_class(const Matrix& theta, const PolicyFeatures& f, int cls) {
  double acc = 0.0;
  for (int r = 0; r < kNumPolicyFeatures; ++r) acc += theta.at(r, cls) * f[r];
  return acc;
}

struct SoftmaxResult {
  std::vector<double> probs;
  double log_prob_of(int i) const { return std::log(probs[i]); }
};

// Max-subtracted softmax over logits[i]/temperature restricted to `kept`.
std::vector<double> softmax_subset(const std::vector<double>& logits,
                                   const std::vector<int>& kept, double temperature) {
  double max_logit = -std::numeric_limits<double>::infinity();
  for (int i : kept) max_logit = std::max(max_logit, logits[i] / temperature);
  double z = 0.0;
  std::vector<double> exps(kept.size());
  for (std::size_t j = 0; j < kept.size(); ++j) {
    exps[j] = std::exp(logits[kept[j]] / temperature - max_logit);
    z += exps[j];
  }
  std::vector<double> probs(logits.size(), 0.0);
  for (std::size_t j = 0; j < kept.size(); ++j) probs[kept[j]] = exps[j] / z;
  return probs;
}

}  // namespace

std::string action_label(EditAction a) {
  switch (a.cls) {
    case ActionClass::ApplyCritique: return "apply_critique(" + std::to_string(a.index) + ")";
    case ActionClass::ApplyRequirement: return "apply_requirement(" + std::to_string(a.index) + ")";
    case ActionClass::FixDerived: return "fix_derived(" + std::to_string(a.index) + ")";
    case ActionClass::SpuriousEdit: return "spurious_edit(" + std::to_string(a.index) + ")";
    case ActionClass::Stop: return "stop";
  }
  throw std::logic_error("bad ActionClass");
}

EpisodeState make_initial_state(const RewriteInstance& instance, int max_steps) {
  if (max_steps < 0) throw std::invalid_argument("make_initial_state: negative max_steps");
  EpisodeState s;
  s.instance = &instance;
  s.current = instance.initial;
  s.max_steps = max_steps;
  return s;
}

std::vector<EditAction> valid_actions(const EpisodeState& state) {
  const RewriteInstance& inst = *state.instance;
  std::vector<EditAction> out;
  for (int m = 0; m < static_cast<int>(state.current.derived.size()); ++m) {
    if (!(state.applied_derived >> m & 1) && derived_stale(state.current, m)) {
      out.push_back({ActionClass::FixDerived, m});
    }
  }
  for (int i = 0; i < static_cast<int>(inst.critiques.size()); ++i) {
    if (!(state.applied_critiques >> i & 1)) out.push_back({ActionClass::ApplyCritique, i});
  }
  for (int j = 0; j < static_cast<int>(inst.requirements.size()); ++j) {
    if (!(state.applied_requirements >> j & 1)) {
      out.push_back({ActionClass::ApplyRequirement, j});
    }
  }
  for (int k = 0; k < spurious_edit_count(); ++k) {
    if (!(state.applied_spurious >> k & 1)) out.push_back({ActionClass::SpuriousEdit, k});
  }
  out.push_back({ActionClass::Stop, 0});
  return out;
}

PolicyFeatures featurize(const EpisodeState& state, EditAction action) {
  check_action_bounds(state, action);
  PolicyFeatures f = state_feature_base(state);
  f[1 + static_cast<int>(action.cls)] = 1.0;
  return f;
}

void apply_action(EpisodeState& state, EditAction action) {
  check_action_bounds(state, action);
  const RewriteInstance& inst = *state.instance;
  switch (action.cls) {
    case ActionClass::ApplyCritique:
      apply_critique(state.current, inst.critiques[action.index]);
      state.applied_critiques |= 1u << action.index;
      break;
    case ActionClass::ApplyRequirement:
      apply_requirement(state.current, inst.requirements[action.index]);
      state.applied_requirements |= 1u << action.index;
      break;
    case ActionClass::FixDerived:
      fix_derived(state.current, action.index);
      state.applied_derived |= 1u << action.index;
      break;
    case ActionClass::SpuriousEdit:
      apply_spurious_edit(state.current, action.index);
      state.applied_spurious |= 1u << action.index;
      break;
    case ActionClass::Stop:
      break;
  }
  ++state.step;
}

ActionDistribution action_distribution(const PolicyParams& params, const EpisodeState& state,
                                       const SamplingConfig& sampling) {
  check_feature_version(params.feature_version, "action_distribution");
  if (sampling.temperature <= 0.0) {
    throw std::invalid_argument("action_distribution: temperature must be > 0");
  }
  ActionDistribution dist;
  dist.actions = valid_actions(state);
  const PolicyFeatures base = state_feature_base(state);
  dist.features.reserve(dist.actions.size());
  dist.classes.reserve(dist.actions.size());
  dist.logits.reserve(dist.actions.size());
  for (const auto& a : dist.actions) {
    PolicyFeatures f = base;
    const int cls = static_cast<int>(a.cls);
    f[1 + cls] = 1.0;
    dist.features.push_back(f);
    dist.classes.push_back(cls);
    dist.logits.push_back(dot_class(params.theta, f, cls));
  }

  const int n = static_cast<int>(dist.actions.size());
  std::vector<int> kept(n);
  std::iota(kept.begin(), kept.end(), 0);
  if (sampling.top_k > 0 && sampling.top_k < n) {
    std::stable_sort(kept.begin(), kept.end(), [&](int a, int b) {
      return dist.logits[a] > dist.logits[b];
    });
    kept.resize(sampling.top_k);
    std::sort(kept.begin(), kept.end());
  }
  dist.probs = softmax_subset(dist.logits, kept, sampling.temperature);
  return dist;
}

namespace {

Trajectory start_trajectory(const RewriteInstance& instance) {
  Trajectory t;
  t.instance_id = instance.id;
  t.task = instance.task;
  t.feature_version = kPolicyFeatureVersion;
  return t;
}

void record_step(Trajectory& t, const ActionDistribution& dist, int chosen) {
  TrajectoryStep step;
  step.action_features = dist.features;
  step.action_classes = dist.classes;
  step.chosen = chosen;
  step.action = dist.actions[chosen];
  step.behavior_log_prob = std::log(dist.probs[chosen]);
  t.steps.push_back(std::move(step));
}

}  // namespace

Trajectory rollout(const PolicyParams& params, const RewriteInstance& instance,
                   const SamplingConfig& sampling, int max_steps, RngStream& rng) {
  EpisodeState state = make_initial_state(instance, max_steps);
  Trajectory t = start_trajectory(instance);
  while (state.step < state.max_steps) {
    ActionDistribution dist = action_distribution(params, state, sampling);
    const double r = rng.unit();
    double acc = 0.0;
    int chosen = -1;
    for (std::size_t i = 0; i < dist.probs.size(); ++i) {
      if (dist.probs[i] <= 0.0) continue;
      acc += dist.probs[i];
      chosen = static_cast<int>(i);
      if (r < acc) break;
    }
    record_step(t, dist, chosen);
    apply_action(state, dist.actions[chosen]);
    if (dist.actions[chosen].cls == ActionClass::Stop) break;
  }
  t.final = state.current;
  return t;
}

Trajectory greedy_rollout(const PolicyParams& params, const RewriteInstance& instance,
                          int max_steps) {
  EpisodeState state = make_initial_state(instance, max_steps);
  Trajectory t = start_trajectory(instance);
  while (state.step < state.max_steps) {
    ActionDistribution dist = action_distribution(params, state, SamplingConfig{1.0, 0});
    int best = 0;
    for (std::size_t i = 1; i < dist.logits.size(); ++i) {
      if (dist.logits[i] > dist.logits[best]) best = static_cast<int>(i);
    }
    record_step(t, dist, best);
    apply_action(state, dist.actions[best]);
    if (dist.actions[best].cls == ActionClass::Stop) break;
  }
  t.final = state.current;
  return t;
}

Trajectory trajectory_for_actions(const PolicyParams& params, const RewriteInstance& instance,
                                  std::span<const EditAction> actions, int max_steps) {
  EpisodeState state = make_initial_state(instance, max_steps);
  Trajectory t = start_trajectory(instance);
  for (const auto& action : actions) {
    if (state.step >= state.max_steps) {
      throw std::invalid_argument("trajectory_for_actions: sequence exceeds max_steps");
    }
    ActionDistribution dist = action_distribution(params, state, SamplingConfig{1.0, 0});
    auto it = std::find(dist.actions.begin(), dist.actions.end(), action);
    if (it == dist.actions.end()) {
      throw std::invalid_argument("trajectory_for_actions: action not valid in state: " +
                                  action_label(action));
    }
    record_step(t, dist, static_cast<int>(it - dist.actions.begin()));
    apply_action(state, action);
  }
  t.final = state.current;
  return t;
}

std::vector<double> step_log_probs(const PolicyParams& params, const Trajectory& trajectory) {
  check_feature_version(params.feature_version, "step_log_probs");
  check_feature_version(trajectory.feature_version, "step_log_probs(trajectory)");
  std::vector<double> out;
  out.reserve(trajectory.steps.size());
  std::vector<double> logits;
  for (const auto& step : trajectory.steps) {
    const int n = static_cast<int>(step.action_features.size());
    logits.resize(n);
    for (int i = 0; i < n; ++i) {
      logits[i] = dot_class(params.theta, step.action_features[i], step.action_classes[i]);
    }
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    const std::vector<double> probs = softmax_subset(logits, all, 1.0);
    out.push_back(std::log(probs[step.chosen]));
  }
  return out;
}

std::pair<double, Matrix> log_prob_and_grad(const PolicyParams& params,
                                            const Trajectory& trajectory) {
  check_feature_version(params.feature_version, "log_prob_and_grad");
  check_feature_version(trajectory.feature_version, "log_prob_and_grad(trajectory)");
  double total = 0.0;
  Matrix grad(kNumPolicyFeatures, kNumActionClasses);
  std::vector<double> logits;
  for (const auto& step : trajectory.steps) {
    const int n = static_cast<int>(step.action_features.size());
    logits.resize(n);
    for (int i = 0; i < n; ++i) {
      logits[i] = dot_class(params.theta, step.action_features[i], step.action_classes[i]);
    }
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    const std::vector<double> probs = softmax_subset(logits, all, 1.0);
    total += std::log(probs[step.chosen]);
    for (int i = 0; i < n; ++i) {
      const double w = (i == step.chosen ? 1.0 : 0.0) - probs[i];
      const int cls = step.action_classes[i];
      for (int r = 0; r < kNumPolicyFeatures; ++r) {
        grad.at(r, cls) += w * step.action_features[i][r];
      }
    }
  }
  return {total, grad};
}

std::vector<EditAction> gold_action_sequence(const RewriteInstance& instance) {
  std::vector<EditAction> actions;
  Document doc = instance.initial;
  for (int i = 0; i < static_cast<int>(instance.critiques.size()); ++i) {
    apply_critique(doc, instance.critiques[i]);
    actions.push_back({ActionClass::ApplyCritique, i});
  }
  for (int j = 0; j < static_cast<int>(instance.requirements.size()); ++j) {
    apply_requirement(doc, instance.requirements[j]);
    actions.push_back({ActionClass::ApplyRequirement, j});
  }
  for (int m = 0; m < static_cast<int>(doc.derived.size()); ++m) {
    if (derived_stale(doc, m)) {
      fix_derived(doc, m);
      actions.push_back({ActionClass::FixDerived, m});
    }
  }
  actions.push_back({ActionClass::Stop, 0});
  return actions;
}

Document replay(const RewriteInstance& instance, std::span<const EditAction> actions) {
  EpisodeState state = make_initial_state(instance, static_cast<int>(actions.size()));
  for (const auto& a : actions) apply_action(state, a);
  return state.current;
}

std::vector<EditAction> trajectory_actions(const Trajectory& t) {
  std::vector<EditAction> out;
  out.reserve(t.steps.size());
  for (const auto& s : t.steps) out.push_back(s.action);
  return out;
}

// ---- SFT ---------------------------------------------------------------

SftResult sft_train(std::span<const RewriteInstance> dataset, const SftConfig& cfg,
                    RngStream& rng) {
  if (dataset.empty()) throw std::invalid_argument("sft_train: dataset is empty");
  if (cfg.batch_size <= 0 || cfg.steps < 0 || cfg.learning_rate <= 0.0) {
    throw std::invalid_argument("sft_train: invalid config");
  }

  std::vector<int> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  const int heldout_n = static_cast<int>(
      std::min<double>(dataset.size() - 1,
                       std::llround(cfg.heldout_fraction * static_cast<double>(dataset.size()))));
  std::vector<int> heldout(order.begin(), order.begin() + heldout_n);
  std::vector<int> train(order.begin() + heldout_n, order.end());

  SftResult result;
  // Gold-path features do not depend on theta, so the supervision trajectories
  // are built once and only re-scored each step.
  std::vector<Trajectory> gold_trajs(dataset.size());
  std::vector<std::vector<EditAction>> gold_actions(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    gold_actions[i] = gold_action_sequence(dataset[i]);
    gold_trajs[i] =
        trajectory_for_actions(result.params, dataset[i], gold_actions[i], cfg.max_episode_steps);
  }

  auto mean_train_nll = [&]() {
    double acc = 0.0;
    for (int idx : train) acc -= log_prob_and_grad(result.params, gold_trajs[idx]).first;
    return acc / static_cast<double>(train.size());
  };

  const int epoch_steps =
      std::max(1, static_cast<int>(train.size()) / cfg.batch_size);
  for (int step = 0; step < cfg.steps; ++step) {
    if (step % epoch_steps == 0) result.epoch_losses.push_back(mean_train_nll());
    Matrix grad(kNumPolicyFeatures, kNumActionClasses);
    double batch_nll = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const int idx = train[rng.below(train.size())];
      auto [lp, g] = log_prob_and_grad(result.params, gold_trajs[idx]);
      batch_nll -= lp;
      for (std::size_t k = 0; k < grad.data.size(); ++k) grad.data[k] += g.data[k];
    }
    if (!std::isfinite(batch_nll)) {
      throw std::runtime_error("sft_train: non-finite loss at step " + std::to_string(step) +
                               "; lower the learning rate");
    }
    const double scale = cfg.learning_rate / cfg.batch_size;
    for (std::size_t k = 0; k < result.params.theta.data.size(); ++k) {
      result.params.theta.data[k] += scale * grad.data[k];
    }
  }
  result.epoch_losses.push_back(mean_train_nll());

  const std::vector<int>& eval_set = heldout.empty() ? train : heldout;
  int exact = 0;
  for (int idx : eval_set) {
    Trajectory t = greedy_rollout(result.params, dataset[idx], cfg.max_episode_steps);
    if (trajectory_actions(t) == gold_actions[idx]) ++exact;
  }
  result.heldout_exact_match = static_cast<double>(exact) / eval_set.size();
  return result;
}

// ---- checkpoints ---------------------------------------------------------

void save_policy(const PolicyParams& params, const std::filesystem::path& path) {
  nlohmann::json j = {{"kind", "policy"},
                      {"feature_version", params.feature_version},
                      {"rows", params.theta.rows},
                      {"cols", params.theta.cols},
                      {"data", params.theta.data}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
}

PolicyParams load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  nlohmann::json j;
  in >> j;
  if (j.value("kind", "") != "policy") {
    throw std::runtime_error("not a policy checkpoint: " + path.string());
  }
  PolicyParams params;
  params.feature_version = j.at("feature_version").get<int>();
  params.theta.rows = j.at("rows").get<int>();
  params.theta.cols = j.at("cols").get<int>();
  params.theta.data = j.at("data").get<std::vector<double>>();
  if (static_cast<int>(params.theta.data.size()) != params.theta.rows * params.theta.cols) {
    throw std::runtime_error("policy checkpoint shape mismatch: " + path.string());
  }
  return params;
}

}  // namespace rwlab
