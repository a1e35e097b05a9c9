#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <vector>

#include "rwlab/common.hpp"
#include "rwlab/corpus.hpp"
#include "rwlab/judge.hpp"
#include "rwlab/policy.hpp"
#include "rwlab/reward.hpp"

using namespace rwlab;

namespace {

PreferencePair synthetic_pair(const ResponseFeatures& better, const ResponseFeatures& worse,
                              TaskKind task = TaskKind::Factuality) {
  PreferencePair p;
  p.task = task;
  p.better_features = better;
  p.worse_features = worse;
  p.score_gap = 1.0;
  return p;
}

}  // namespace

TEST_CASE("bt_probability identities and stability") {
  CHECK(bt_probability(0.7, 0.7) == 0.5);
  CHECK(bt_probability(-3.2, -3.2) == 0.5);
  CHECK(bt_probability(1000.0, -1000.0) == 1.0);
  CHECK(bt_probability(-1000.0, 1000.0) >= 0.0);

  RngStream rng(11);
  for (int i = 0; i < 1000; ++i) {
    // Strict interior holds until the sigmoid saturates around |margin| ~ 37.
    const double a = 30.0 * (rng.unit() - 0.5);
    const double b = 30.0 * (rng.unit() - 0.5);
    const double p = bt_probability(a, b);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    CHECK(std::abs(p + bt_probability(b, a) - 1.0) <= 1e-12);
  }
  for (int i = 0; i < 1000; ++i) {
    const double a = 400.0 * (rng.unit() - 0.5);
    const double b = 400.0 * (rng.unit() - 0.5);
    CHECK(std::abs(bt_probability(a, b) + bt_probability(b, a) - 1.0) <= 1e-12);
  }
  CHECK_THROWS_AS(bt_probability(std::numeric_limits<double>::infinity(), 0.0),
                  std::invalid_argument);
}

TEST_CASE("bt_probability is monotone in both arguments") {
  double prev = 0.0;
  for (double r = -5.0; r <= 5.0; r += 0.25) {
    const double p = bt_probability(r, 0.0);
    CHECK(p > prev);
    prev = p;
  }
  prev = 1.0;
  for (double r = -5.0; r <= 5.0; r += 0.25) {
    const double p = bt_probability(0.0, r);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("bt loss at zero margin is log 2 and decreases along the margin") {
  RewardModel model;
  ResponseFeatures better{};
  ResponseFeatures worse{};
  better[1] = 1.0;  // phi is zero, so scores tie
  const std::vector<PreferencePair> batch = {synthetic_pair(better, worse)};
  const auto [loss, grad] = bt_loss_and_grad(model, batch);
  CHECK(loss == doctest::Approx(std::log(2.0)));

  double prev = loss;
  for (double m = 0.5; m <= 10.0; m += 0.5) {
    RewardModel scaled;
    scaled.phi[1] = m;  // margin = m exactly
    const double l = bt_loss_and_grad(scaled, batch).first;
    CHECK(l < prev);
    prev = l;
  }
}

TEST_CASE("bt gradient matches central finite differences") {
  RngStream rng(2020);
  const double h = 1e-5;
  for (int point = 0; point < 30; ++point) {
    RewardModel model;
    for (double& x : model.phi) x = 2.0 * rng.unit() - 1.0;
    std::vector<PreferencePair> batch;
    for (int b = 0; b < 8; ++b) {
      ResponseFeatures better{};
      ResponseFeatures worse{};
      for (int i = 0; i < kNumResponseFeatures; ++i) {
        better[i] = 2.0 * rng.unit() - 1.0;
        worse[i] = 2.0 * rng.unit() - 1.0;
      }
      batch.push_back(synthetic_pair(better, worse));
    }
    const double z = point % 2 == 0 ? 0.0 : 1e-2;
    const auto [loss, grad] = bt_loss_and_grad(model, batch, z);
    double num = 0.0;
    double den = 0.0;
    for (int k = 0; k < kNumResponseFeatures; ++k) {
      const double saved = model.phi[k];
      model.phi[k] = saved + h;
      const double up = bt_loss_and_grad(model, batch, z).first;
      model.phi[k] = saved - h;
      const double down = bt_loss_and_grad(model, batch, z).first;
      model.phi[k] = saved;
      const double fd = (up - down) / (2.0 * h);
      num += (grad[k] - fd) * (grad[k] - fd);
      den += grad[k] * grad[k] + fd * fd;
    }
    CHECK(std::sqrt(num) <= 1e-6 * std::max(1.0, std::sqrt(den)));
  }
}

TEST_CASE("preference pairs have positive oracle gaps and ordered documents") {
  std::vector<RewriteInstance> dataset;
  RngStream gen(606);
  for (int i = 0; i < 40; ++i) {
    dataset.push_back(gen_factuality_instance(gen.next_u64(), {5, 3, 2}));
    dataset.push_back(gen_conversational_instance(gen.next_u64(), {4}));
  }
  const PolicyParams uniform;
  RngStream rng(1);
  const PreferenceDataset pairs = build_preference_pairs(uniform, dataset, {}, rng);
  CHECK(!pairs.agreement.empty());
  CHECK(!pairs.coherence.empty());
  for (const auto& p : pairs.agreement) {
    CHECK(p.score_gap > 0.0);
    const RewriteInstance* inst = nullptr;
    for (const auto& candidate : dataset) {
      if (candidate.id == p.instance_id) inst = &candidate;
    }
    REQUIRE(inst != nullptr);
    CHECK(agreement(*inst, p.better) > agreement(*inst, p.worse));
  }
  for (const auto& p : pairs.coherence) {
    CHECK(p.score_gap > 0.0);
    CHECK(coherence(p.better) == 1);
    CHECK(coherence(p.worse) == 0);
  }
  CHECK_THROWS_AS(build_preference_pairs(uniform, dataset, {1, {}, 16}, rng),
                  std::invalid_argument);
}

TEST_CASE("stylistic instances never produce coherence pairs") {
  std::vector<RewriteInstance> dataset;
  RngStream gen(99);
  for (int i = 0; i < 30; ++i) {
    dataset.push_back(gen_stylistic_instance(gen.next_u64(), {3, {}}));
  }
  const PolicyParams uniform;
  RngStream rng(2);
  const PreferenceDataset pairs = build_preference_pairs(uniform, dataset, {}, rng);
  CHECK(pairs.coherence.empty());  // the coherence oracle is constant 1 here
}

TEST_CASE("reward model training separates a 1-d toy problem") {
  RngStream rng(313);
  std::vector<PreferencePair> pairs;
  for (int i = 0; i < 200; ++i) {
    ResponseFeatures better{};
    ResponseFeatures worse{};
    better[1] = rng.unit() + 0.5;
    worse[1] = better[1] - 0.3 - rng.unit();
    pairs.push_back(synthetic_pair(better, worse, TaskKind(i % 3)));
  }
  RmConfig cfg;
  cfg.steps = 500;
  cfg.eval_every = 50;
  RngStream train_rng(7);
  const RmTrainResult result = train_reward_model(pairs, Objective::Agreement, cfg, train_rng);
  CHECK(result.heldout_accuracy == 1.0);
  CHECK(result.accuracy_curve.size() == 10);  // steps / eval_every
  CHECK(result.accuracy_curve.back().first == 500);
  // Mixture training reports one accuracy per task present plus overall.
  CHECK(result.per_task_accuracy.size() == 3);
}

TEST_CASE("conciseness reward is the negated edit ratio") {
  RewriteInstance inst;
  inst.task = TaskKind::Factuality;
  inst.initial.tokens = {"t0", "t1", "t2", "t3", "t4", "t5", "t6", "t7", "t8", "t9"};
  inst.gold = inst.initial;
  inst.gold.tokens[4] = "changed";
  CHECK(conciseness_reward(inst, inst.initial) == 0.0);
  CHECK(conciseness_reward(inst, inst.gold) == doctest::Approx(-0.1));

  Document heavy = inst.initial;
  heavy.tokens.assign({"a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l", "m", "n", "o"});
  CHECK(conciseness_reward(inst, heavy) == doctest::Approx(-1.5));
}

TEST_CASE("aggregate_reward arithmetic and defaults") {
  const RewardWeights weights = default_reward_weights();
  weights.validate();
  CHECK(aggregate_reward(weights.static_triple, 1.0, 1.0, 0.0) == doctest::Approx(11.0 / 16));
  CHECK(aggregate_reward(weights, TaskKind::Factuality, 0.0, 0.0, 0.0) == 0.0);
  CHECK(aggregate_reward(WeightTriple{1.0, 0.0, 0.0}, 0.37, 9.9, -4.2) == 0.37);

  // Linearity in the weights.
  RngStream rng(5);
  for (int i = 0; i < 50; ++i) {
    const WeightTriple w1{0.2, 0.3, 0.5};
    const WeightTriple w2{0.6, 0.1, 0.3};
    const double alpha = rng.unit();
    const WeightTriple mix{alpha * w1.w_agreement + (1 - alpha) * w2.w_agreement,
                           alpha * w1.w_coherence + (1 - alpha) * w2.w_coherence,
                           alpha * w1.w_conciseness + (1 - alpha) * w2.w_conciseness};
    const double r1 = rng.unit();
    const double r2 = rng.unit();
    const double r3 = -rng.unit();
    CHECK(aggregate_reward(mix, r1, r2, r3) ==
          doctest::Approx(alpha * aggregate_reward(w1, r1, r2, r3) +
                          (1 - alpha) * aggregate_reward(w2, r1, r2, r3)));
  }
}

TEST_CASE("default weight triples satisfy the simplex invariant") {
  const RewardWeights w = default_reward_weights();
  const auto sum = [](const WeightTriple& t) {
    return t.w_agreement + t.w_coherence + t.w_conciseness;
  };
  CHECK(std::abs(sum(w.static_triple) - 1.0) <= 1e-9);
  for (const auto& t : w.per_task) CHECK(std::abs(sum(t) - 1.0) <= 1e-9);
  CHECK(w.static_triple == WeightTriple{9.0 / 16, 2.0 / 16, 5.0 / 16});
  CHECK(w.for_task(TaskKind::Factuality) == WeightTriple{8.0 / 16, 6.0 / 16, 2.0 / 16});
  CHECK(w.for_task(TaskKind::Stylistic) == WeightTriple{3.0 / 9, 4.0 / 9, 2.0 / 9});
  CHECK(w.for_task(TaskKind::Conversational) == WeightTriple{9.0 / 16, 5.0 / 16, 2.0 / 16});

  const WeightTriple overweight{0.5, 0.5, 0.5};
  CHECK_THROWS_AS(overweight.validate(), std::invalid_argument);
  const WeightTriple negative{-0.5, 1.0, 0.5};
  CHECK_THROWS_AS(negative.validate(), std::invalid_argument);
}

TEST_CASE("argmax under aggregate is invariant to common positive scaling") {
  RngStream rng(808);
  for (int trial = 0; trial < 50; ++trial) {
    const WeightTriple w{0.4, 0.35, 0.25};
    std::vector<std::array<double, 3>> candidates(6);
    for (auto& c : candidates) {
      c = {rng.unit(), rng.unit(), -rng.unit()};
    }
    const double scale = 0.1 + 5.0 * rng.unit();
    int best = 0;
    int best_scaled = 0;
    for (int i = 1; i < 6; ++i) {
      auto agg = [&](int idx, double s) {
        return aggregate_reward(w, s * candidates[idx][0], s * candidates[idx][1],
                                s * candidates[idx][2]);
      };
      if (agg(i, 1.0) > agg(best, 1.0)) best = i;
      if (agg(i, scale) > agg(best_scaled, scale)) best_scaled = i;
    }
    CHECK(best == best_scaled);
  }
}

TEST_CASE("response features flag placeholders, staleness, and spurious edits") {
  const RewriteInstance inst = gen_conversational_instance(505, {4});
  const ResponseFeatures on_initial = response_features(inst, inst.initial);
  CHECK(on_initial[0] == 1.0);
  CHECK(on_initial[1] == 0.0);
  CHECK(on_initial[3] == 0.0);
  CHECK(on_initial[4] == doctest::Approx(placeholder_count(inst.initial.tokens)));

  const ResponseFeatures on_gold = response_features(inst, inst.gold);
  CHECK(on_gold[1] == 1.0);
  CHECK(on_gold[4] == 0.0);

  Document padded = inst.gold;
  apply_spurious_edit(padded, 0);
  apply_spurious_edit(padded, 1);
  const ResponseFeatures on_padded = response_features(inst, padded);
  CHECK(on_padded[2] == doctest::Approx(on_gold[2] + 2.0));
  CHECK(on_padded[3] > on_gold[3]);

  const RewriteInstance fact = gen_factuality_instance(41, {5, 2, 1});
  Document surgical = fact.initial;
  for (const auto& span : fact.critiques) apply_critique(surgical, span);
  const ResponseFeatures f = response_features(fact, surgical);
  CHECK(f[1] == 1.0);   // every critique site edited
  CHECK(f[5] >= 1.0);   // the dependent derived record went stale
  CHECK(response_features(fact, fact.gold)[5] == 0.0);
}

TEST_CASE("reward model checkpoints round-trip exactly") {
  RewardModel model;
  model.objective = Objective::Coherence;
  RngStream rng(17);
  for (double& x : model.phi) x = 10.0 * (rng.unit() - 0.5);
  const auto path = std::filesystem::temp_directory_path() / "rwlab_rm_ckpt.json";
  save_reward_model(model, path);
  const RewardModel loaded = load_reward_model(path);
  CHECK(loaded.objective == model.objective);
  CHECK(loaded.phi == model.phi);
  CHECK(loaded.feature_version == model.feature_version);
  std::filesystem::remove(path);
}
