#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "rwlab/corpus.hpp"
#include "rwlab/policy.hpp"
#include "rwlab/reward.hpp"
#include "rwlab/rl.hpp"

namespace rwlab {

// Per-task generator ranges; exact counts are drawn per instance.
struct FactualityRanges {
  int fact_count_min = 4;
  int fact_count_max = 9;
  int corrupt_count_min = 1;
  int corrupt_count_max = 4;  // clamped to the drawn fact count
  int derived_count_min = 0;
  int derived_count_max = 3;
};

struct StylisticRanges {
  int requirements_min = 1;
  int requirements_max = 3;
};

struct ConversationalRanges {
  int requirements_min = 2;
  int requirements_max = 5;
};

struct CorpusConfig {
  int train_per_task = 2000;
  int eval_per_task = 250;
  FactualityRanges factuality;
  StylisticRanges stylistic;
  ConversationalRanges conversational;
};

// Which RL variants the rl stage trains.
enum class RlModes { Static, TaskSpecific, Both };
std::string rl_modes_name(RlModes m);
RlModes parse_rl_modes(std::string_view name);

struct EvalSettings {
  std::vector<int> ks;  // empty: derive from the eval set
};

struct ExperimentConfig {
  std::uint64_t seed = 17;
  std::string output_dir = "out";
  CorpusConfig corpus;
  SftConfig sft;
  PairBuildConfig pairs;
  RmConfig rm;
  RlConfig rl;
  RlModes rl_modes = RlModes::Both;
  EvalSettings eval;

  void validate() const;
};

ExperimentConfig default_config();

// Single JSON config file with per-stage sections; omitted keys fall back to
// defaults, unknown keys are rejected.
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const std::string& text);

std::uint64_t config_hash(const ExperimentConfig& cfg);

}  // namespace rwlab
