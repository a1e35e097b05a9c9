#include "rwlab/reward.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "rwlab/judge.hpp"
#include "rwlab/textops.hpp"

namespace rwlab {

std::string objective_name(Objective o) {
  switch (o) {
    case Objective::Agreement: return "agreement";
    case Objective::Coherence: return "coherence";
  }
  throw std::logic_error("bad Objective");
}

Objective parse_objective(std::string_view name) {
  if (name == "agreement") return Objective::Agreement;
  if (name == "coherence") return Objective::Coherence;
  throw std::invalid_argument("unknown objective: " + std::string(name));
}

double RewardModel::score(const ResponseFeatures& f) const {
  double acc = 0.0;
  for (int i = 0; i < kNumResponseFeatures; ++i) acc += phi[i] * f[i];
  return acc;
}

namespace {

// Per-kind proxy for "the requirement's site changed", deliberately weaker
// than the judge's postcondition (a wrong replacement word still counts).
bool requirement_site_changed(const Requirement& req, const Document& initial,
                              const Document& final_doc) {
  switch (req.kind) {
    case RequirementKind::ReplacePlaceholder: {
      const std::string needle = "[" + req.target + "]";
      auto count = [&](const TokenSeq& tokens) {
        return std::count(tokens.begin(), tokens.end(), needle);
      };
      return count(final_doc.tokens) < count(initial.tokens);
    }
    case RequirementKind::AddSentence: {
      if (req.sentence.empty()) return false;
      const auto& tokens = final_doc.tokens;
      for (std::size_t i = 0; i + req.sentence.size() <= tokens.size(); ++i) {
        if (std::equal(req.sentence.begin(), req.sentence.end(), tokens.begin() + i)) {
          return true;
        }
      }
      return false;
    }
    case RequirementKind::ChangeTone:
      return final_doc.tone_tag != initial.tone_tag;
    case RequirementKind::ReorderDefinitionFirst: {
      // Case-insensitive so a case change alone does not register as a move.
      auto first_lower = [](const Document& d) -> TokenSeq {
        auto sentences = split_sentences(d.tokens);
        if (sentences.empty()) return {};
        TokenSeq out = sentences.front();
        for (auto& t : out) {
          for (char& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
        return out;
      };
      return first_lower(final_doc) != first_lower(initial);
    }
    case RequirementKind::Shorten:
      return final_doc.tokens.size() < initial.tokens.size();
    case RequirementKind::Uppercase:
      return uppercase_fraction(final_doc.tokens) > uppercase_fraction(initial.tokens);
  }
  throw std::logic_error("bad RequirementKind");
}

}  // namespace

ResponseFeatures response_features(const RewriteInstance& instance, const Document& final_doc) {
  const Document& initial = instance.initial;
  ResponseFeatures f{};
  f[0] = 1.0;

  int expected_sentence_delta = 0;
  if (instance.task == TaskKind::Factuality) {
    int changed = 0;
    for (const auto& span : instance.critiques) {
      const std::string& key = initial.facts[span.index].key;
      for (const auto& fact : final_doc.facts) {
        if (fact.key == key) {
          if (fact.value != initial.facts[span.index].value) ++changed;
          break;
        }
      }
    }
    f[1] = instance.critiques.empty()
               ? 0.0
               : static_cast<double>(changed) / instance.critiques.size();
  } else {
    int changed = 0;
    for (const auto& req : instance.requirements) {
      if (requirement_site_changed(req, initial, final_doc)) ++changed;
      if (req.kind == RequirementKind::AddSentence) ++expected_sentence_delta;
      if (req.kind == RequirementKind::Shorten) --expected_sentence_delta;
    }
    f[1] = instance.requirements.empty()
               ? 0.0
               : static_cast<double>(changed) / instance.requirements.size();
  }

  // Non-target diffs: fact edits outside the critique list plus appended
  // sentences beyond what the requirements account for.
  int nontarget = 0;
  for (std::size_t i = 0; i < initial.facts.size(); ++i) {
    bool targeted = false;
    for (const auto& span : instance.critiques) {
      if (span.index == static_cast<int>(i)) targeted = true;
    }
    if (targeted) continue;
    for (const auto& fact : final_doc.facts) {
      if (fact.key == initial.facts[i].key) {
        if (fact.value != initial.facts[i].value) ++nontarget;
        break;
      }
    }
  }
  const int sentence_delta =
      sentence_count(final_doc.tokens) - sentence_count(initial.tokens);
  nontarget += std::max(0, sentence_delta - expected_sentence_delta);
  f[2] = static_cast<double>(nontarget);

  f[3] = edit_ratio(initial.tokens, final_doc.tokens);
  f[4] = static_cast<double>(placeholder_count(final_doc.tokens));
  int mismatches = 0;
  for (int m = 0; m < static_cast<int>(final_doc.derived.size()); ++m) {
    if (derived_stale(final_doc, m)) ++mismatches;
  }
  f[5] = static_cast<double>(mismatches);
  f[6] = (static_cast<double>(final_doc.tokens.size()) -
          static_cast<double>(initial.tokens.size())) /
         static_cast<double>(initial.tokens.size());
  return f;
}

double bt_probability(double r_plus, double r_minus) {
  if (!std::isfinite(r_plus) || !std::isfinite(r_minus)) {
    throw std::invalid_argument("bt_probability: inputs must be finite");
  }
  const double d = r_plus - r_minus;
  if (d >= 0.0) {
    return 1.0 / (1.0 + std::exp(-d));
  }
  const double e = std::exp(d);
  return e / (1.0 + e);
}

std::pair<double, std::vector<double>> bt_loss_and_grad(const RewardModel& model,
                                                        std::span<const PreferencePair> batch,
                                                        double z_loss_coeff) {
  if (batch.empty()) throw std::invalid_argument("bt_loss_and_grad: empty batch");
  double loss = 0.0;
  std::vector<double> grad(kNumResponseFeatures, 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const auto& pair : batch) {
    const double r_plus = model.score(pair.better_features);
    const double r_minus = model.score(pair.worse_features);
    const double margin = r_plus - r_minus;
    // -log sigmoid(margin) in a stable form
    loss += inv_n * (margin < 0.0 ? -margin + std::log1p(std::exp(margin))
                                  : std::log1p(std::exp(-margin)));
    const double coeff = -inv_n * (1.0 - bt_probability(r_plus, r_minus));
    for (int i = 0; i < kNumResponseFeatures; ++i) {
      grad[i] += coeff * (pair.better_features[i] - pair.worse_features[i]);
    }
    if (z_loss_coeff > 0.0) {
      const double z = r_plus + r_minus;
      loss += inv_n * z_loss_coeff * z * z;
      for (int i = 0; i < kNumResponseFeatures; ++i) {
        grad[i] += inv_n * z_loss_coeff * 2.0 * z *
                   (pair.better_features[i] + pair.worse_features[i]);
      }
    }
  }
  return {loss, grad};
}

PreferenceDataset build_preference_pairs(const PolicyParams& sft_params,
                                         std::span<const RewriteInstance> dataset,
                                         const PairBuildConfig& cfg, RngStream& rng) {
  if (cfg.samples_per_instance < 2) {
    throw std::invalid_argument("build_preference_pairs: need at least 2 samples per instance");
  }
  PreferenceDataset out;
  for (std::size_t inst_idx = 0; inst_idx < dataset.size(); ++inst_idx) {
    const RewriteInstance& inst = dataset[inst_idx];
    RngStream inst_rng = rng.substream(inst_idx);

    std::vector<Document> finals;
    std::vector<double> agr_scores;
    std::vector<double> coh_scores;
    finals.reserve(cfg.samples_per_instance);
    for (int s = 0; s < cfg.samples_per_instance; ++s) {
      Trajectory t = rollout(sft_params, inst, cfg.sampling, cfg.max_episode_steps, inst_rng);
      agr_scores.push_back(agreement(inst, t.final));
      coh_scores.push_back(static_cast<double>(coherence(t.final)));
      finals.push_back(std::move(t.final));
    }

    auto emit = [&](const std::vector<double>& scores, Objective objective,
                    std::vector<PreferencePair>& sink) {
      int best = 0;
      int worst = 0;
      for (int s = 1; s < cfg.samples_per_instance; ++s) {
        if (scores[s] > scores[best]) best = s;
        if (scores[s] < scores[worst]) worst = s;
      }
      if (scores[best] == scores[worst]) return;  // zero spread, skip
      PreferencePair pair;
      pair.instance_id = inst.id;
      pair.task = inst.task;
      pair.objective = objective;
      pair.better = finals[best];
      pair.worse = finals[worst];
      pair.better_features = response_features(inst, pair.better);
      pair.worse_features = response_features(inst, pair.worse);
      pair.score_gap = scores[best] - scores[worst];
      sink.push_back(std::move(pair));
    };
    emit(agr_scores, Objective::Agreement, out.agreement);
    emit(coh_scores, Objective::Coherence, out.coherence);
  }
  return out;
}

double pairwise_accuracy(const RewardModel& model, std::span<const PreferencePair> pairs) {
  if (pairs.empty()) return 0.0;
  int correct = 0;
  for (const auto& pair : pairs) {
    if (model.score(pair.better_features) > model.score(pair.worse_features)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

RmTrainResult train_reward_model(std::span<const PreferencePair> pairs, Objective objective,
                                 const RmConfig& cfg, RngStream& rng) {
  if (pairs.empty()) throw std::invalid_argument("train_reward_model: no pairs");
  if (cfg.batch_size <= 0 || cfg.steps < 0 || cfg.eval_every <= 0) {
    throw std::invalid_argument("train_reward_model: invalid config");
  }

  std::vector<int> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  const int heldout_n = static_cast<int>(std::min<double>(
      pairs.size() - 1, std::llround(cfg.heldout_fraction * static_cast<double>(pairs.size()))));
  std::vector<PreferencePair> heldout;
  std::vector<PreferencePair> train;
  for (int i = 0; i < static_cast<int>(order.size()); ++i) {
    (i < heldout_n ? heldout : train).push_back(pairs[order[i]]);
  }
  const std::vector<PreferencePair>& eval_pairs = heldout.empty() ? train : heldout;

  RmTrainResult result;
  result.model.objective = objective;
  const double z = cfg.z_loss_enabled ? cfg.z_loss_coeff : 0.0;

  std::vector<PreferencePair> batch(cfg.batch_size);
  for (int step = 1; step <= cfg.steps; ++step) {
    for (int b = 0; b < cfg.batch_size; ++b) batch[b] = train[rng.below(train.size())];
    auto [loss, grad] = bt_loss_and_grad(result.model, batch, z);
    if (!std::isfinite(loss)) {
      throw std::runtime_error("train_reward_model: non-finite loss at step " +
                               std::to_string(step) + "; lower the learning rate");
    }
    for (int i = 0; i < kNumResponseFeatures; ++i) {
      result.model.phi[i] -= cfg.learning_rate * grad[i];
    }
    if (step % cfg.eval_every == 0) {
      result.accuracy_curve.emplace_back(step, pairwise_accuracy(result.model, eval_pairs));
    }
  }

  result.heldout_accuracy = pairwise_accuracy(result.model, eval_pairs);
  for (int t = 0; t < kNumTasks; ++t) {
    std::vector<PreferencePair> subset;
    for (const auto& pair : eval_pairs) {
      if (pair.task == TaskKind(t)) subset.push_back(pair);
    }
    if (!subset.empty()) {
      result.per_task_accuracy[TaskKind(t)] = pairwise_accuracy(result.model, subset);
    }
  }
  return result;
}

double conciseness_reward(const RewriteInstance& instance, const Document& final_doc) {
  return -edit_ratio(instance.initial.tokens, final_doc.tokens);
}

// ---- weights ------------------------------------------------------------

void WeightTriple::validate() const {
  if (w_agreement < 0.0 || w_coherence < 0.0 || w_conciseness < 0.0) {
    throw std::invalid_argument("reward weights must be non-negative");
  }
  const double sum = w_agreement + w_coherence + w_conciseness;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("reward weight triple must sum to 1 (got " +
                                std::to_string(sum) + ")");
  }
}

void RewardWeights::validate() const {
  static_triple.validate();
  for (const auto& t : per_task) t.validate();
}

WeightTriple default_static_weights() { return {9.0 / 16, 2.0 / 16, 5.0 / 16}; }

RewardWeights default_reward_weights() {
  RewardWeights w;
  w.static_triple = default_static_weights();
  w.per_task[static_cast<int>(TaskKind::Factuality)] = {8.0 / 16, 6.0 / 16, 2.0 / 16};
  w.per_task[static_cast<int>(TaskKind::Stylistic)] = {3.0 / 9, 4.0 / 9, 2.0 / 9};
  w.per_task[static_cast<int>(TaskKind::Conversational)] = {9.0 / 16, 5.0 / 16, 2.0 / 16};
  return w;
}

double aggregate_reward(const WeightTriple& weights, double r_agreement, double r_coherence,
                        double r_conciseness) {
  return weights.w_agreement * r_agreement + weights.w_coherence * r_coherence +
         weights.w_conciseness * r_conciseness;
}

double aggregate_reward(const RewardWeights& weights, TaskKind task, double r_agreement,
                        double r_coherence, double r_conciseness) {
  return aggregate_reward(weights.for_task(task), r_agreement, r_coherence, r_conciseness);
}

// ---- checkpoints -----------------------------------------------------------

void save_reward_model(const RewardModel& model, const std::filesystem::path& path) {
  nlohmann::json j = {{"kind", "reward_model"},
                      {"objective", objective_name(model.objective)},
                      {"feature_version", model.feature_version},
                      {"phi", model.phi}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
}

RewardModel load_reward_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  nlohmann::json j;
  in >> j;
  if (j.value("kind", "") != "reward_model") {
    throw std::runtime_error("not a reward model checkpoint: " + path.string());
  }
  RewardModel model;
  model.objective = parse_objective(j.at("objective").get<std::string>());
  model.feature_version = j.at("feature_version").get<int>();
  model.phi = j.at("phi").get<std::vector<double>>();
  if (static_cast<int>(model.phi.size()) != kNumResponseFeatures) {
    throw std::runtime_error("reward model shape mismatch: " + path.string());
  }
  return model;
}

}  // namespace rwlab
