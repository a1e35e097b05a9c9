#include "rwlab/judge.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include "json.hpp"
#include "rwlab/common.hpp"
#include "rwlab/textops.hpp"

namespace rwlab {

namespace {

bool contains_subsequence(const TokenSeq& haystack, const TokenSeq& needle) {
  if (needle.empty()) return true;
  if (haystack.size() < needle.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
    if (std::equal(needle.begin(), needle.end(), haystack.begin() + i)) return true;
  }
  return false;
}

bool all_alpha_uppercase(const TokenSeq& tokens) {
  for (const auto& t : tokens) {
    for (char c : t) {
      if (std::isalpha(static_cast<unsigned char>(c)) &&
          !std::isupper(static_cast<unsigned char>(c))) {
        return false;
      }
    }
  }
  return true;
}

double round2(double x) { return std::round(x * 100.0) / 100.0; }

}  // namespace

bool requirement_satisfied(const Requirement& req, const RewriteInstance& instance,
                           const Document& revised) {
  switch (req.kind) {
    case RequirementKind::ReplacePlaceholder: {
      const std::string needle = "[" + req.target + "]";
      bool placeholder_gone = true;
      bool replacement_present = false;
      for (const auto& t : revised.tokens) {
        if (t == needle) placeholder_gone = false;
        if (t == req.replacement) replacement_present = true;
      }
      return placeholder_gone && replacement_present;
    }
    case RequirementKind::AddSentence:
      return contains_subsequence(revised.tokens, req.sentence);
    case RequirementKind::ChangeTone:
      return revised.tone_tag == req.tone;
    case RequirementKind::ReorderDefinitionFirst: {
      auto sentences = split_sentences(revised.tokens);
      return !sentences.empty() && definition_sentence_index(sentences) == 0;
    }
    case RequirementKind::Shorten:
      return revised.tokens.size() < instance.initial.tokens.size();
    case RequirementKind::Uppercase:
      return all_alpha_uppercase(revised.tokens);
  }
  throw std::logic_error("bad RequirementKind");
}

double agreement(const RewriteInstance& instance, const Document& revised) {
  if (instance.task == TaskKind::Factuality) {
    if (instance.critiques.empty()) return 1.0;
    int correct = 0;
    for (const auto& span : instance.critiques) {
      const std::string& key = instance.initial.facts[span.index].key;
      for (const auto& fact : revised.facts) {
        if (fact.key == key) {
          if (fact.value == span.revision) ++correct;
          break;
        }
      }
    }
    return static_cast<double>(correct) / static_cast<double>(instance.critiques.size());
  }
  if (instance.requirements.empty()) return 1.0;
  int correct = 0;
  for (const auto& req : instance.requirements) {
    if (requirement_satisfied(req, instance, revised)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(instance.requirements.size());
}

int coherence(const Document& revised) {
  for (int m = 0; m < static_cast<int>(revised.derived.size()); ++m) {
    if (derived_stale(revised, m)) return 0;
  }
  if (revised.tone_tag != Tone::Plain && placeholder_count(revised.tokens) > 0) return 0;
  return 1;
}

double f1_at_k(int supported, int total_claims, int k) {
  if (supported < 0 || total_claims < 0) {
    throw std::invalid_argument("f1_at_k: counts must be non-negative");
  }
  if (supported > total_claims) {
    throw std::invalid_argument("f1_at_k: supported exceeds total_claims");
  }
  if (k <= 0) throw std::invalid_argument("f1_at_k: k must be positive");
  if (supported == 0) return 0.0;
  const double precision = static_cast<double>(supported) / total_claims;
  const double recall = std::min(1.0, static_cast<double>(supported) / k);
  return 2.0 * precision * recall / (precision + recall);
}

std::pair<int, int> fact_support_counts(const RewriteInstance& instance,
                                        const Document& revised) {
  int supported = 0;
  for (const auto& fact : revised.facts) {
    for (const auto& gold_fact : instance.gold.facts) {
      if (gold_fact.key == fact.key) {
        if (gold_fact.value == fact.value) ++supported;
        break;
      }
    }
  }
  return {supported, static_cast<int>(revised.facts.size())};
}

std::string sxs_choice_label(SxsVerdict::Choice c) {
  switch (c) {
    case SxsVerdict::Choice::A: return "(A)";
    case SxsVerdict::Choice::B: return "(B)";
    case SxsVerdict::Choice::Same: return "same";
  }
  throw std::logic_error("bad Choice");
}

std::string sxs_verdict_to_json(const SxsVerdict& v) {
  nlohmann::json j = {{"choice", sxs_choice_label(v.choice)},
                      {"score_a", v.score_a},
                      {"score_b", v.score_b},
                      {"explanation", v.explanation}};
  return j.dump();
}

SxsVerdict sxs_compare(const RewriteInstance& instance, const Document& revised_a,
                       const Document& revised_b) {
  SxsVerdict v;
  v.score_a = round2(agreement(instance, revised_a));
  v.score_b = round2(agreement(instance, revised_b));
  const double diff = v.score_a - v.score_b;
  if (std::abs(diff) <= kSxsTieTolerance) {
    v.choice = SxsVerdict::Choice::Same;
  } else if (diff > 0) {
    v.choice = SxsVerdict::Choice::A;
  } else {
    v.choice = SxsVerdict::Choice::B;
  }
  v.explanation = "response A satisfies " + format_double(v.score_a, 2) +
                  " of the structured checks; response B satisfies " +
                  format_double(v.score_b, 2) + "; verdict " + sxs_choice_label(v.choice);
  return v;
}

}  // namespace rwlab
