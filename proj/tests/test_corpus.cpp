#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <string>

#include "rwlab/common.hpp"
#include "rwlab/corpus.hpp"
#include "rwlab/judge.hpp"
#include "rwlab/policy.hpp"

using namespace rwlab;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("rwlab_corpus_" + name);
}

}  // namespace

TEST_CASE("factuality generation: judge outcomes by construction") {
  const RewriteInstance inst = gen_factuality_instance(7, {3, 1, 0});
  CHECK(inst.task == TaskKind::Factuality);
  CHECK(agreement(inst, inst.initial) == 0.0);
  CHECK(agreement(inst, inst.gold) == 1.0);
  CHECK(inst.critiques.size() == 1);
  CHECK(inst.initial.facts.size() == 3);
  CHECK(inst.requirements.empty());
}

TEST_CASE("factuality generation is a pure function of seed and config") {
  const FactualityGenConfig cfg{6, 2, 2};
  CHECK(gen_factuality_instance(123, cfg) == gen_factuality_instance(123, cfg));
  CHECK(gen_factuality_instance(123, cfg).id != gen_factuality_instance(124, cfg).id);
}

TEST_CASE("surgical substitution leaves the derived record inconsistent") {
  // All facts corrupted, one derived record; check the formula by direct
  // evaluation after substituting only the fact values.
  const RewriteInstance inst = gen_factuality_instance(99, {3, 3, 1});
  Document surgical = inst.initial;
  for (const auto& span : inst.critiques) apply_critique(surgical, span);

  const DerivedRecord& rec = surgical.derived.at(0);
  long long sum = 0;
  for (const auto& key : rec.formula) {
    for (const auto& fact : surgical.facts) {
      if (fact.key == key) sum += fact.value;
    }
  }
  CHECK(rec.stated_value != sum);
  CHECK(coherence(surgical) == 0);
  // The initial document was consistent before the substitution.
  CHECK(coherence(inst.initial) == 1);
}

TEST_CASE("factuality generation rejects invalid configs") {
  CHECK_THROWS_AS(gen_factuality_instance(1, {3, 4, 0}), std::invalid_argument);
  CHECK_THROWS_AS(gen_factuality_instance(1, {2, 1, 0}), std::invalid_argument);
  CHECK_THROWS_AS(gen_factuality_instance(1, {13, 1, 0}), std::invalid_argument);
  CHECK_THROWS_AS(gen_factuality_instance(1, {6, 1, 4}), std::invalid_argument);
}

TEST_CASE("uppercase requirement transforms tokens") {
  Document doc;
  doc.tokens = {"a", "b"};
  Requirement req;
  req.kind = RequirementKind::Uppercase;
  apply_requirement(doc, req);
  CHECK(doc.tokens == TokenSeq{"A", "B"});
}

TEST_CASE("reorder puts a trailing definition sentence first") {
  // Find a source whose definition sentence is last.
  for (std::uint64_t seed = 0;; ++seed) {
    StylisticGenConfig cfg;
    cfg.forced_kinds = {RequirementKind::ReorderDefinitionFirst};
    const RewriteInstance inst = gen_stylistic_instance(seed, cfg);
    const auto initial_sentences = split_sentences(inst.initial.tokens);
    const int def = definition_sentence_index(initial_sentences);
    if (def != static_cast<int>(initial_sentences.size()) - 1) continue;

    const auto gold_sentences = split_sentences(inst.gold.tokens);
    CHECK(definition_sentence_index(gold_sentences) == 0);
    CHECK(gold_sentences.front() == initial_sentences[def]);
    // Remaining sentences keep their relative order.
    for (std::size_t i = 0; i + 1 < gold_sentences.size(); ++i) {
      CHECK(gold_sentences[i + 1] == initial_sentences[i]);
    }
    break;
  }
}

TEST_CASE("shorten strictly reduces the gold token count") {
  StylisticGenConfig cfg;
  cfg.forced_kinds = {RequirementKind::Shorten};
  const RewriteInstance inst = gen_stylistic_instance(5, cfg);
  CHECK(inst.gold.tokens.size() < inst.initial.tokens.size());
}

TEST_CASE("stylistic generator rejects incompatible or foreign kinds") {
  StylisticGenConfig conflict;
  conflict.forced_kinds = {RequirementKind::Shorten, RequirementKind::AddSentence};
  CHECK_THROWS_WITH_AS(gen_stylistic_instance(1, conflict),
                       doctest::Contains("incompatible"), std::invalid_argument);

  StylisticGenConfig foreign;
  foreign.forced_kinds = {RequirementKind::ReplacePlaceholder};
  CHECK_THROWS_AS(gen_stylistic_instance(1, foreign), std::invalid_argument);

  StylisticGenConfig dup;
  dup.forced_kinds = {RequirementKind::Uppercase, RequirementKind::Uppercase};
  CHECK_THROWS_AS(gen_stylistic_instance(1, dup), std::invalid_argument);

  CHECK_THROWS_AS(gen_stylistic_instance(1, {0, {}}), std::invalid_argument);
}

TEST_CASE("conversational instances replace placeholders in gold") {
  const RewriteInstance inst = gen_conversational_instance(11, {4});
  CHECK(inst.task == TaskKind::Conversational);
  bool saw_replace = false;
  bool saw_detail = false;
  for (const auto& req : inst.requirements) {
    if (req.kind == RequirementKind::ReplacePlaceholder) {
      saw_replace = true;
      const std::string needle = "[" + req.target + "]";
      bool replacement_present = false;
      for (const auto& t : inst.gold.tokens) {
        CHECK(t != needle);
        if (t == req.replacement) replacement_present = true;
      }
      CHECK(replacement_present);
    }
    if (req.kind == RequirementKind::AddSentence || req.kind == RequirementKind::ChangeTone) {
      saw_detail = true;
    }
    if (req.kind == RequirementKind::ChangeTone) {
      CHECK(inst.gold.tone_tag == req.tone);
    }
  }
  CHECK(saw_replace);
  CHECK(saw_detail);
  CHECK(!inst.instruction_text.empty());
}

TEST_CASE("conversational generator rejects an empty requirement list") {
  CHECK_THROWS_AS(gen_conversational_instance(1, {0}), std::invalid_argument);
  CHECK_THROWS_AS(gen_conversational_instance(1, {1}), std::invalid_argument);
  CHECK_THROWS_AS(gen_conversational_instance(1, {6}), std::invalid_argument);
}

TEST_CASE("generated instances satisfy the corpus invariants across seeds") {
  RngStream rng(2024);
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t seed = rng.next_u64();

    FactualityGenConfig fcfg;
    fcfg.fact_count = static_cast<int>(rng.int_in(3, 12));
    fcfg.corrupt_count = static_cast<int>(rng.int_in(1, fcfg.fact_count));
    fcfg.derived_count = static_cast<int>(rng.int_in(0, 3));
    const RewriteInstance fact = gen_factuality_instance(seed, fcfg);
    REQUIRE(agreement(fact, fact.gold) == 1.0);
    REQUIRE(coherence(fact.gold) == 1);
    REQUIRE(agreement(fact, fact.initial) == 0.0);
    REQUIRE(!fact.initial.tokens.empty());

    StylisticGenConfig scfg;
    scfg.requirement_count = static_cast<int>(rng.int_in(1, 3));
    const RewriteInstance styl = gen_stylistic_instance(seed, scfg);
    REQUIRE(agreement(styl, styl.gold) == 1.0);
    REQUIRE(coherence(styl.gold) == 1);

    ConversationalGenConfig ccfg;
    ccfg.requirement_count = static_cast<int>(rng.int_in(2, 5));
    const RewriteInstance conv = gen_conversational_instance(seed, ccfg);
    REQUIRE(agreement(conv, conv.gold) == 1.0);
    REQUIRE(coherence(conv.gold) == 1);
  }
}

TEST_CASE("gold equals the replay of the gold action sequence") {
  RngStream rng(5150);
  for (int i = 0; i < 200; ++i) {
    const std::uint64_t seed = rng.next_u64();
    for (const RewriteInstance& inst :
         {gen_factuality_instance(seed, {6, 3, 2}), gen_stylistic_instance(seed, {3, {}}),
          gen_conversational_instance(seed, {4})}) {
      CHECK(replay(inst, gold_action_sequence(inst)) == inst.gold);
    }
  }
}

TEST_CASE("dataset save/load round-trips field for field") {
  std::vector<RewriteInstance> instances;
  RngStream rng(31);
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t seed = rng.next_u64();
    switch (i % 3) {
      case 0: instances.push_back(gen_factuality_instance(seed, {5, 2, 1})); break;
      case 1: instances.push_back(gen_stylistic_instance(seed, {2, {}})); break;
      default: instances.push_back(gen_conversational_instance(seed, {3})); break;
    }
  }
  const auto path = temp_path("roundtrip.jsonl");
  save_dataset(instances, path);
  CHECK(load_dataset(path) == instances);

  // Bit-exact file contents on a rewrite.
  const auto path2 = temp_path("roundtrip2.jsonl");
  save_dataset(instances, path2);
  std::ifstream a(path), b(path2);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("dataset loader reports line numbers and fields") {
  const auto path = temp_path("broken.jsonl");
  {
    const RewriteInstance inst = gen_stylistic_instance(1, {2, {}});
    std::ofstream out(path);
    out << instance_to_json_line(inst) << "\n";
    out << instance_to_json_line(inst).substr(0, 40) << "\n";  // truncated record
  }
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("line 2"), std::runtime_error);
  std::filesystem::remove(path);

  const auto missing_field = temp_path("missing.jsonl");
  {
    std::ofstream out(missing_field);
    out << "{\"id\":\"x\"}\n";
  }
  CHECK_THROWS_WITH_AS(load_dataset(missing_field), doctest::Contains("missing field"),
                       std::runtime_error);
  std::filesystem::remove(missing_field);

  const auto empty = temp_path("empty.jsonl");
  { std::ofstream out(empty); }
  CHECK(load_dataset(empty).empty());
  std::filesystem::remove(empty);
}
