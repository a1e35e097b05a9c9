#include "doctest.h"

#include <cmath>
#include <vector>

#include "rwlab/common.hpp"
#include "rwlab/corpus.hpp"
#include "rwlab/judge.hpp"
#include "rwlab/policy.hpp"

using namespace rwlab;

TEST_CASE("agreement on gold, initial, and partial factuality revisions") {
  const RewriteInstance inst = gen_factuality_instance(21, {5, 3, 1});
  CHECK(agreement(inst, inst.gold) == 1.0);
  CHECK(agreement(inst, inst.initial) == 0.0);

  // Exactly 2 of 3 spans applied -> 2/3 by the correct-replacements formula.
  std::vector<EditAction> partial = {{ActionClass::ApplyCritique, 0},
                                     {ActionClass::ApplyCritique, 1}};
  const Document revised = replay(inst, partial);
  CHECK(agreement(inst, revised) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("coherence flags stated-vs-derivable mismatches") {
  Document doc;
  doc.tokens = {"alpha", "is", "3", ".", "beta", "is", "3", "."};
  doc.facts = {{"alpha", 3}, {"beta", 3}};
  // Stated 5 where the formula over the facts gives 6.
  doc.derived = {{"gap", {"alpha", "beta"}, 5}};
  CHECK(coherence(doc) == 0);

  doc.derived[0].stated_value = 6;
  CHECK(coherence(doc) == 1);

  Document vacuous;
  vacuous.tokens = {"nothing", "here", "."};
  CHECK(coherence(vacuous) == 1);
}

TEST_CASE("coherence counts placeholders only when the tone moved off plain") {
  Document doc;
  doc.tokens = {"join", "us", "on", "[PLATFORM]", "."};
  doc.tone_tag = Tone::Plain;
  CHECK(coherence(doc) == 1);
  doc.tone_tag = Tone::Enthusiastic;
  CHECK(coherence(doc) == 0);
  doc.tokens[3] = "TikTok";
  CHECK(coherence(doc) == 1);
}

TEST_CASE("f1_at_k reproduces the tagged arithmetic") {
  CHECK(f1_at_k(13, 13, 13) == 1.0);
  CHECK(f1_at_k(0, 10, 13) == 0.0);
  // 2 * 0.7 * (7/13) / (0.7 + 7/13), worked by hand.
  CHECK(f1_at_k(7, 10, 13) == doctest::Approx(0.6087).epsilon(1e-4));
  CHECK_THROWS_AS(f1_at_k(11, 10, 13), std::invalid_argument);
  CHECK_THROWS_AS(f1_at_k(1, 2, 0), std::invalid_argument);
}

TEST_CASE("f1_at_k is non-decreasing in supported") {
  for (int total : {5, 10, 20}) {
    for (int k : {3, 10, 15}) {
      double prev = -1.0;
      for (int supported = 0; supported <= total; ++supported) {
        const double f1 = f1_at_k(supported, total, k);
        CHECK(f1 >= prev);
        CHECK(f1 >= 0.0);
        CHECK(f1 <= 1.0);
        prev = f1;
      }
    }
  }
}

TEST_CASE("agreement is monotone under one additional correct edit") {
  RngStream rng(88);
  for (int trial = 0; trial < 150; ++trial) {
    const std::uint64_t seed = rng.next_u64();
    RewriteInstance inst;
    switch (trial % 3) {
      case 0: inst = gen_factuality_instance(seed, {6, 3, 1}); break;
      case 1: inst = gen_stylistic_instance(seed, {3, {}}); break;
      default: inst = gen_conversational_instance(seed, {4}); break;
    }
    // Random prefix of correct edits in a random order, then one more.
    std::vector<EditAction> all;
    for (const EditAction& a : gold_action_sequence(inst)) {
      if (a.cls == ActionClass::ApplyCritique || a.cls == ActionClass::ApplyRequirement) {
        all.push_back(a);
      }
    }
    rng.shuffle(all);
    const std::size_t prefix = rng.below(all.size());
    std::vector<EditAction> some(all.begin(), all.begin() + prefix);
    const double before = agreement(inst, replay(inst, some));
    some.push_back(all[prefix]);
    const double after = agreement(inst, replay(inst, some));
    CHECK(after >= before);
  }
}

TEST_CASE("sxs_compare extremes, ties, and partial scores") {
  const RewriteInstance inst = gen_factuality_instance(3, {4, 2, 0});
  const SxsVerdict extreme = sxs_compare(inst, inst.gold, inst.initial);
  CHECK(extreme.choice == SxsVerdict::Choice::A);
  CHECK(extreme.score_a == 1.0);
  CHECK(extreme.score_b == 0.0);

  const SxsVerdict tie = sxs_compare(inst, inst.gold, inst.gold);
  CHECK(tie.choice == SxsVerdict::Choice::Same);
  CHECK(tie.score_a == tie.score_b);

  // a satisfies 2/3, b satisfies 3/3.
  const RewriteInstance inst3 = gen_factuality_instance(17, {5, 3, 0});
  std::vector<EditAction> partial = {{ActionClass::ApplyCritique, 0},
                                     {ActionClass::ApplyCritique, 1}};
  const SxsVerdict v = sxs_compare(inst3, replay(inst3, partial), inst3.gold);
  CHECK(v.choice == SxsVerdict::Choice::B);
  CHECK(v.score_b == doctest::Approx(1.0));
  CHECK(v.score_a == doctest::Approx(0.67));
}

TEST_CASE("sxs_compare is antisymmetric over random revision pairs") {
  RngStream rng(1234);
  for (int trial = 0; trial < 100; ++trial) {
    const RewriteInstance inst = gen_factuality_instance(rng.next_u64(), {6, 4, 1});
    auto random_revision = [&]() {
      std::vector<EditAction> actions;
      for (int i = 0; i < static_cast<int>(inst.critiques.size()); ++i) {
        if (rng.below(2) == 0) actions.push_back({ActionClass::ApplyCritique, i});
      }
      return replay(inst, actions);
    };
    const Document a = random_revision();
    const Document b = random_revision();
    const SxsVerdict ab = sxs_compare(inst, a, b);
    const SxsVerdict ba = sxs_compare(inst, b, a);
    CHECK(ab.score_a == ba.score_b);
    CHECK(ab.score_b == ba.score_a);
    if (ab.choice == SxsVerdict::Choice::Same) {
      CHECK(std::abs(ab.score_a - ab.score_b) <= kSxsTieTolerance);
      CHECK(ba.choice == SxsVerdict::Choice::Same);
    } else if (ab.choice == SxsVerdict::Choice::A) {
      CHECK(ba.choice == SxsVerdict::Choice::B);
      CHECK(ab.score_a > ab.score_b);
    } else {
      CHECK(ba.choice == SxsVerdict::Choice::A);
      CHECK(ab.score_b > ab.score_a);
    }
  }
}

TEST_CASE("sxs verdict serialization uses the fixed vocabulary") {
  SxsVerdict v;
  v.choice = SxsVerdict::Choice::A;
  v.score_a = 1.0;
  v.score_b = 0.25;
  v.explanation = "x";
  const std::string json = sxs_verdict_to_json(v);
  CHECK(json.find("\"choice\":\"(A)\"") != std::string::npos);
  CHECK(json.find("\"score_a\"") != std::string::npos);
  CHECK(json.find("\"score_b\"") != std::string::npos);
  CHECK(json.find("\"explanation\"") != std::string::npos);
  CHECK(sxs_choice_label(SxsVerdict::Choice::B) == "(B)");
  CHECK(sxs_choice_label(SxsVerdict::Choice::Same) == "same");
}
