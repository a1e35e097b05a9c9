#include "rwlab/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "rwlab/common.hpp"

namespace rwlab {

using nlohmann::json;

std::string rl_modes_name(RlModes m) {
  switch (m) {
    case RlModes::Static: return "static";
    case RlModes::TaskSpecific: return "task_specific";
    case RlModes::Both: return "both";
  }
  throw std::logic_error("bad RlModes");
}

RlModes parse_rl_modes(std::string_view name) {
  if (name == "static") return RlModes::Static;
  if (name == "task_specific") return RlModes::TaskSpecific;
  if (name == "both") return RlModes::Both;
  throw std::invalid_argument("unknown rl mode: " + std::string(name));
}

void ExperimentConfig::validate() const {
  if (corpus.train_per_task <= 0 || corpus.eval_per_task <= 0) {
    throw std::invalid_argument("corpus: instance counts must be positive");
  }
  const auto& f = corpus.factuality;
  if (f.fact_count_min < 3 || f.fact_count_max > 12 || f.fact_count_min > f.fact_count_max) {
    throw std::invalid_argument("corpus.factuality: fact count range must sit in [3, 12]");
  }
  if (f.corrupt_count_min < 1 || f.corrupt_count_min > f.corrupt_count_max) {
    throw std::invalid_argument("corpus.factuality: bad corrupt count range");
  }
  if (f.derived_count_min < 0 || f.derived_count_max > 3 ||
      f.derived_count_min > f.derived_count_max) {
    throw std::invalid_argument("corpus.factuality: derived count range must sit in [0, 3]");
  }
  const auto& s = corpus.stylistic;
  if (s.requirements_min < 1 || s.requirements_max > 3 || s.requirements_min > s.requirements_max) {
    throw std::invalid_argument("corpus.stylistic: requirement range must sit in [1, 3]");
  }
  const auto& c = corpus.conversational;
  if (c.requirements_min < 2 || c.requirements_max > 5 ||
      c.requirements_min > c.requirements_max) {
    throw std::invalid_argument("corpus.conversational: requirement range must sit in [2, 5]");
  }
  if (sft.steps < 0 || sft.batch_size <= 0 || sft.learning_rate <= 0.0 ||
      sft.heldout_fraction < 0.0 || sft.heldout_fraction >= 1.0) {
    throw std::invalid_argument("sft: invalid config");
  }
  if (pairs.samples_per_instance < 2) {
    throw std::invalid_argument("pairs: samples_per_instance must be >= 2");
  }
  if (rm.steps < 0 || rm.batch_size <= 0 || rm.learning_rate <= 0.0 || rm.eval_every <= 0) {
    throw std::invalid_argument("reward_model: invalid config");
  }
  rl.validate();
}

ExperimentConfig default_config() { return ExperimentConfig{}; }

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) {
      throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

WeightTriple triple_from_json(const json& j, const std::string& where) {
  check_keys(j, {"task", "w_agreement", "w_coherence", "w_conciseness"}, where);
  WeightTriple t;
  t.w_agreement = j.at("w_agreement").get<double>();
  t.w_coherence = j.at("w_coherence").get<double>();
  t.w_conciseness = j.at("w_conciseness").get<double>();
  return t;
}

json triple_to_json(const WeightTriple& t) {
  return {{"w_agreement", t.w_agreement},
          {"w_coherence", t.w_coherence},
          {"w_conciseness", t.w_conciseness}};
}

}  // namespace

std::string config_to_json(const ExperimentConfig& cfg) {
  json task_weights = json::array();
  for (int t = 0; t < kNumTasks; ++t) {
    json entry = triple_to_json(cfg.rl.weights.per_task[t]);
    entry["task"] = task_name(TaskKind(t));
    task_weights.push_back(std::move(entry));
  }
  json j = {
      {"seed", cfg.seed},
      {"output_dir", cfg.output_dir},
      {"corpus",
       {{"train_per_task", cfg.corpus.train_per_task},
        {"eval_per_task", cfg.corpus.eval_per_task},
        {"factuality",
         {{"fact_count_min", cfg.corpus.factuality.fact_count_min},
          {"fact_count_max", cfg.corpus.factuality.fact_count_max},
          {"corrupt_count_min", cfg.corpus.factuality.corrupt_count_min},
          {"corrupt_count_max", cfg.corpus.factuality.corrupt_count_max},
          {"derived_count_min", cfg.corpus.factuality.derived_count_min},
          {"derived_count_max", cfg.corpus.factuality.derived_count_max}}},
        {"stylistic",
         {{"requirements_min", cfg.corpus.stylistic.requirements_min},
          {"requirements_max", cfg.corpus.stylistic.requirements_max}}},
        {"conversational",
         {{"requirements_min", cfg.corpus.conversational.requirements_min},
          {"requirements_max", cfg.corpus.conversational.requirements_max}}}}},
      {"sft",
       {{"steps", cfg.sft.steps},
        {"batch_size", cfg.sft.batch_size},
        {"learning_rate", cfg.sft.learning_rate},
        {"heldout_fraction", cfg.sft.heldout_fraction},
        {"max_episode_steps", cfg.sft.max_episode_steps}}},
      {"pairs",
       {{"samples_per_instance", cfg.pairs.samples_per_instance},
        {"temperature", cfg.pairs.sampling.temperature},
        {"top_k", cfg.pairs.sampling.top_k},
        {"max_episode_steps", cfg.pairs.max_episode_steps}}},
      {"reward_model",
       {{"steps", cfg.rm.steps},
        {"batch_size", cfg.rm.batch_size},
        {"learning_rate", cfg.rm.learning_rate},
        {"heldout_fraction", cfg.rm.heldout_fraction},
        {"eval_every", cfg.rm.eval_every},
        {"z_loss_enabled", cfg.rm.z_loss_enabled},
        {"z_loss_coeff", cfg.rm.z_loss_coeff}}},
      {"rl",
       {{"beta", cfg.rl.beta},
        {"clip_epsilon", cfg.rl.clip_epsilon},
        {"policy_step", cfg.rl.policy_step},
        {"value_step", cfg.rl.value_step},
        {"warmup_steps", cfg.rl.warmup_steps},
        {"max_steps", cfg.rl.max_steps},
        {"batch_episodes", cfg.rl.batch_episodes},
        {"temperature", cfg.rl.sampling.temperature},
        {"top_k", cfg.rl.sampling.top_k},
        {"max_episode_steps", cfg.rl.max_episode_steps},
        {"kl_ceiling", cfg.rl.kl_ceiling},
        {"modes", rl_modes_name(cfg.rl_modes)}}},
      {"weights",
       {{"static", triple_to_json(cfg.rl.weights.static_triple)},
        {"task_weights", task_weights}}},
      {"eval", {{"ks", cfg.eval.ks}}},
  };
  return j.dump(2);
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: parse error: ") + e.what());
  }
  check_keys(j, {"seed", "output_dir", "corpus", "sft", "pairs", "reward_model", "rl",
                 "weights", "eval"},
             "config");

  ExperimentConfig cfg = default_config();
  read_if(j, "seed", cfg.seed);
  read_if(j, "output_dir", cfg.output_dir);

  if (j.contains("corpus")) {
    const json& c = j.at("corpus");
    check_keys(c, {"train_per_task", "eval_per_task", "factuality", "stylistic", "conversational"},
               "corpus");
    read_if(c, "train_per_task", cfg.corpus.train_per_task);
    read_if(c, "eval_per_task", cfg.corpus.eval_per_task);
    if (c.contains("factuality")) {
      const json& f = c.at("factuality");
      check_keys(f,
                 {"fact_count_min", "fact_count_max", "corrupt_count_min", "corrupt_count_max",
                  "derived_count_min", "derived_count_max"},
                 "corpus.factuality");
      read_if(f, "fact_count_min", cfg.corpus.factuality.fact_count_min);
      read_if(f, "fact_count_max", cfg.corpus.factuality.fact_count_max);
      read_if(f, "corrupt_count_min", cfg.corpus.factuality.corrupt_count_min);
      read_if(f, "corrupt_count_max", cfg.corpus.factuality.corrupt_count_max);
      read_if(f, "derived_count_min", cfg.corpus.factuality.derived_count_min);
      read_if(f, "derived_count_max", cfg.corpus.factuality.derived_count_max);
    }
    if (c.contains("stylistic")) {
      const json& s = c.at("stylistic");
      check_keys(s, {"requirements_min", "requirements_max"}, "corpus.stylistic");
      read_if(s, "requirements_min", cfg.corpus.stylistic.requirements_min);
      read_if(s, "requirements_max", cfg.corpus.stylistic.requirements_max);
    }
    if (c.contains("conversational")) {
      const json& s = c.at("conversational");
      check_keys(s, {"requirements_min", "requirements_max"}, "corpus.conversational");
      read_if(s, "requirements_min", cfg.corpus.conversational.requirements_min);
      read_if(s, "requirements_max", cfg.corpus.conversational.requirements_max);
    }
  }

  if (j.contains("sft")) {
    const json& s = j.at("sft");
    check_keys(s, {"steps", "batch_size", "learning_rate", "heldout_fraction",
                   "max_episode_steps"},
               "sft");
    read_if(s, "steps", cfg.sft.steps);
    read_if(s, "batch_size", cfg.sft.batch_size);
    read_if(s, "learning_rate", cfg.sft.learning_rate);
    read_if(s, "heldout_fraction", cfg.sft.heldout_fraction);
    read_if(s, "max_episode_steps", cfg.sft.max_episode_steps);
  }

  if (j.contains("pairs")) {
    const json& p = j.at("pairs");
    check_keys(p, {"samples_per_instance", "temperature", "top_k", "max_episode_steps"}, "pairs");
    read_if(p, "samples_per_instance", cfg.pairs.samples_per_instance);
    read_if(p, "temperature", cfg.pairs.sampling.temperature);
    read_if(p, "top_k", cfg.pairs.sampling.top_k);
    read_if(p, "max_episode_steps", cfg.pairs.max_episode_steps);
  }

  if (j.contains("reward_model")) {
    const json& r = j.at("reward_model");
    check_keys(r, {"steps", "batch_size", "learning_rate", "heldout_fraction", "eval_every",
                   "z_loss_enabled", "z_loss_coeff"},
               "reward_model");
    read_if(r, "steps", cfg.rm.steps);
    read_if(r, "batch_size", cfg.rm.batch_size);
    read_if(r, "learning_rate", cfg.rm.learning_rate);
    read_if(r, "heldout_fraction", cfg.rm.heldout_fraction);
    read_if(r, "eval_every", cfg.rm.eval_every);
    read_if(r, "z_loss_enabled", cfg.rm.z_loss_enabled);
    read_if(r, "z_loss_coeff", cfg.rm.z_loss_coeff);
  }

  if (j.contains("rl")) {
    const json& r = j.at("rl");
    check_keys(r, {"beta", "clip_epsilon", "policy_step", "value_step", "warmup_steps",
                   "max_steps", "batch_episodes", "temperature", "top_k", "max_episode_steps",
                   "kl_ceiling", "modes"},
               "rl");
    read_if(r, "beta", cfg.rl.beta);
    read_if(r, "clip_epsilon", cfg.rl.clip_epsilon);
    read_if(r, "policy_step", cfg.rl.policy_step);
    read_if(r, "value_step", cfg.rl.value_step);
    read_if(r, "warmup_steps", cfg.rl.warmup_steps);
    read_if(r, "max_steps", cfg.rl.max_steps);
    read_if(r, "batch_episodes", cfg.rl.batch_episodes);
    read_if(r, "temperature", cfg.rl.sampling.temperature);
    read_if(r, "top_k", cfg.rl.sampling.top_k);
    read_if(r, "max_episode_steps", cfg.rl.max_episode_steps);
    read_if(r, "kl_ceiling", cfg.rl.kl_ceiling);
    if (r.contains("modes")) cfg.rl_modes = parse_rl_modes(r.at("modes").get<std::string>());
  }

  if (j.contains("weights")) {
    const json& w = j.at("weights");
    check_keys(w, {"static", "task_weights"}, "weights");
    if (w.contains("static")) {
      cfg.rl.weights.static_triple = triple_from_json(w.at("static"), "weights.static");
    }
    if (w.contains("task_weights")) {
      for (const auto& entry : w.at("task_weights")) {
        if (!entry.contains("task")) {
          throw std::invalid_argument("config: weights.task_weights entry missing 'task'");
        }
        const TaskKind task = parse_task(entry.at("task").get<std::string>());
        cfg.rl.weights.per_task[static_cast<int>(task)] =
            triple_from_json(entry, "weights.task_weights");
      }
    }
  }

  if (j.contains("eval")) {
    const json& e = j.at("eval");
    check_keys(e, {"ks"}, "eval");
    read_if(e, "ks", cfg.eval.ks);
  }

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return config_from_json(buffer.str());
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  // The output location is run metadata, not experiment configuration, so it
  // stays out of the hash; the same experiment in two directories matches.
  ExperimentConfig canonical = cfg;
  canonical.output_dir.clear();
  return fnv1a64(config_to_json(canonical));
}

}  // namespace rwlab
