#pragma once

#include <string>
#include <utility>

#include "rwlab/corpus.hpp"

namespace rwlab {

// Programmatic stand-ins for the LLM raters. All scores are [0, 1] fractions.

// Factuality: fraction of critique spans whose revision value sits at the
// right fact key in `revised`. Other tasks: fraction of requirement
// postconditions that hold. Judges consume the structured critiques and
// requirements, never the instruction text.
double agreement(const RewriteInstance& instance, const Document& revised);

// 1 iff every derived record matches its recomputed value and, when the tone
// is not plain, no bracketed placeholder token remains.
int coherence(const Document& revised);

// Capped-recall F1: precision = supported/total (0 when total is 0),
// recall = min(supported/k, 1), 0 when nothing is supported.
double f1_at_k(int supported, int total_claims, int k);

// Postcondition predicate for one requirement, evaluated against the
// instance's initial document where the kind needs a baseline.
bool requirement_satisfied(const Requirement& req, const RewriteInstance& instance,
                           const Document& revised);

// (supported, total) fact counts of `revised` against the instance's gold,
// matched by fact key. Feeds f1_at_k for factuality evaluation.
std::pair<int, int> fact_support_counts(const RewriteInstance& instance,
                                        const Document& revised);

struct SxsVerdict {
  enum class Choice { A, B, Same };
  Choice choice = Choice::Same;
  double score_a = 0.0;
  double score_b = 0.0;
  std::string explanation;
};

// Ties within this margin on the rounded 2-decimal scores count as "same".
inline constexpr double kSxsTieTolerance = 0.05;

std::string sxs_choice_label(SxsVerdict::Choice c);  // "(A)", "(B)", "same"
std::string sxs_verdict_to_json(const SxsVerdict& v);

// Pairwise comparison of two revisions of the same instance. Antisymmetric:
// swapping the arguments mirrors the choice and swaps the scores.
SxsVerdict sxs_compare(const RewriteInstance& instance, const Document& revised_a,
                       const Document& revised_b);

}  // namespace rwlab
