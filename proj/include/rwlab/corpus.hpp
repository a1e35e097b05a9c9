#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rwlab/textops.hpp"

namespace rwlab {

enum class TaskKind { Factuality, Stylistic, Conversational };
inline constexpr int kNumTasks = 3;

std::string task_name(TaskKind t);
TaskKind parse_task(std::string_view name);

enum class Tone { Plain, Formal, Enthusiastic };
std::string tone_name(Tone t);
Tone parse_tone(std::string_view name);

// Keyed integer claim rendered in the token stream as "<key> is <value> .".
struct FactRecord {
  std::string key;
  long long value = 0;
  friend bool operator==(const FactRecord&, const FactRecord&) = default;
};

// Claim whose stated value must equal the sum of the referenced fact values.
// Rendered as "<key> combines <k1> and <k2> giving <stated> .".
struct DerivedRecord {
  std::string key;
  std::vector<std::string> formula;  // fact keys; value is their sum
  long long stated_value = 0;
  friend bool operator==(const DerivedRecord&, const DerivedRecord&) = default;
};

struct Document {
  TokenSeq tokens;
  std::vector<FactRecord> facts;
  std::vector<DerivedRecord> derived;
  Tone tone_tag = Tone::Plain;
  friend bool operator==(const Document&, const Document&) = default;
};

struct CritiqueSpan {
  int index = 0;  // position into facts
  long long wrong_value = 0;
  long long revision = 0;
  std::string reason;
  friend bool operator==(const CritiqueSpan&, const CritiqueSpan&) = default;
};

enum class RequirementKind {
  ReplacePlaceholder,
  AddSentence,
  ChangeTone,
  ReorderDefinitionFirst,
  Shorten,
  Uppercase,
};
std::string requirement_kind_name(RequirementKind k);
RequirementKind parse_requirement_kind(std::string_view name);

// Payload fields are kind-specific; unused ones stay empty.
struct Requirement {
  int id = 0;
  RequirementKind kind = RequirementKind::AddSentence;
  std::string target;       // ReplacePlaceholder: placeholder key, e.g. "PLATFORM"
  std::string replacement;  // ReplacePlaceholder: word that replaces "[KEY]"
  TokenSeq sentence;        // AddSentence: tokens to append
  Tone tone = Tone::Plain;  // ChangeTone: target tone
  friend bool operator==(const Requirement&, const Requirement&) = default;
};

struct RewriteInstance {
  std::string id;
  TaskKind task = TaskKind::Factuality;
  TokenSeq prompt_tokens;
  Document initial;
  std::vector<CritiqueSpan> critiques;      // non-empty iff task == Factuality
  std::vector<Requirement> requirements;    // non-empty iff task != Factuality
  std::string instruction_text;
  Document gold;
  friend bool operator==(const RewriteInstance&, const RewriteInstance&) = default;
};

// ---- generators -----------------------------------------------------------

struct FactualityGenConfig {
  int fact_count = 6;     // F in [3, 12]
  int corrupt_count = 2;  // C in [1, F]
  int derived_count = 1;  // in [0, 3]
};

struct StylisticGenConfig {
  int requirement_count = 2;  // in [1, 3]
  // When non-empty, use exactly these kinds instead of sampling. Incompatible
  // sets (Shorten with AddSentence) and non-stylistic kinds are rejected.
  std::vector<RequirementKind> forced_kinds;
};

struct ConversationalGenConfig {
  int requirement_count = 3;  // in [2, 5]
};

RewriteInstance gen_factuality_instance(std::uint64_t seed, const FactualityGenConfig& cfg);
RewriteInstance gen_stylistic_instance(std::uint64_t seed, const StylisticGenConfig& cfg);
RewriteInstance gen_conversational_instance(std::uint64_t seed, const ConversationalGenConfig& cfg);

// ---- document edits --------------------------------------------------------
// Shared by gold construction and the edit policy; every edit keeps the token
// stream in sync with the structured records.

void apply_critique(Document& doc, const CritiqueSpan& span);
void apply_requirement(Document& doc, const Requirement& req);
// Recompute derived[m].stated_value from the current facts.
void fix_derived(Document& doc, int m);
bool derived_stale(const Document& doc, int m);
// Unnecessary-but-harmless edit k; appends a fixed filler sentence.
void apply_spurious_edit(Document& doc, int k);
int spurious_edit_count();

// ---- token helpers ---------------------------------------------------------

bool is_placeholder_token(std::string_view token);  // bracketed form "[KEY]"
int placeholder_count(const TokenSeq& tokens);
std::vector<TokenSeq> split_sentences(const TokenSeq& tokens);
int sentence_count(const TokenSeq& tokens);
double uppercase_fraction(const TokenSeq& tokens);
// First sentence index whose tokens contain "means" (case-insensitive), -1 if none.
int definition_sentence_index(const std::vector<TokenSeq>& sentences);

// ---- dataset io ------------------------------------------------------------
// Line-delimited JSON; per-line fields: id, task, prompt, initial, critiques,
// requirements, instruction_text, gold.

void save_dataset(std::span<const RewriteInstance> instances, const std::filesystem::path& path);
std::vector<RewriteInstance> load_dataset(const std::filesystem::path& path);

std::string instance_to_json_line(const RewriteInstance& inst);
RewriteInstance instance_from_json_line(const std::string& line, int line_number);

}  // namespace rwlab
