#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rwlab {

// Ordered word tokens. Tokens never contain whitespace; punctuation stays
// attached to its word.
using TokenSeq = std::vector<std::string>;

// Split on runs of whitespace. Empty input gives an empty sequence.
TokenSeq tokenize(std::string_view text);

// Token-level Levenshtein distance with unit insert/delete/substitute costs.
std::size_t edit_distance(std::span<const std::string> a, std::span<const std::string> b);

// edit_distance(original, revised) / len(original). Values above 1 are legal.
// Throws std::invalid_argument when original is empty.
double edit_ratio(std::span<const std::string> original, std::span<const std::string> revised);

}  // namespace rwlab
