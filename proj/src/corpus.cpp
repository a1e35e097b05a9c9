#include "rwlab/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "rwlab/common.hpp"

namespace rwlab {

using nlohmann::json;

// ---- names ------------------------------------------------------------

std::string task_name(TaskKind t) {
  switch (t) {
    case TaskKind::Factuality: return "factuality";
    case TaskKind::Stylistic: return "stylistic";
    case TaskKind::Conversational: return "conversational";
  }
  throw std::logic_error("bad TaskKind");
}

TaskKind parse_task(std::string_view name) {
  if (name == "factuality") return TaskKind::Factuality;
  if (name == "stylistic") return TaskKind::Stylistic;
  if (name == "conversational") return TaskKind::Conversational;
  throw std::invalid_argument("unknown task: " + std::string(name));
}

std::string tone_name(Tone t) {
  switch (t) {
    case Tone::Plain: return "plain";
    case Tone::Formal: return "formal";
    case Tone::Enthusiastic: return "enthusiastic";
  }
  throw std::logic_error("bad Tone");
}

Tone parse_tone(std::string_view name) {
  if (name == "plain") return Tone::Plain;
  if (name == "formal") return Tone::Formal;
  if (name == "enthusiastic") return Tone::Enthusiastic;
  throw std::invalid_argument("unknown tone: " + std::string(name));
}

std::string requirement_kind_name(RequirementKind k) {
  switch (k) {
    case RequirementKind::ReplacePlaceholder: return "replace_placeholder";
    case RequirementKind::AddSentence: return "add_sentence";
    case RequirementKind::ChangeTone: return "change_tone";
    case RequirementKind::ReorderDefinitionFirst: return "reorder_definition_first";
    case RequirementKind::Shorten: return "shorten";
    case RequirementKind::Uppercase: return "uppercase";
  }
  throw std::logic_error("bad RequirementKind");
}

RequirementKind parse_requirement_kind(std::string_view name) {
  if (name == "replace_placeholder") return RequirementKind::ReplacePlaceholder;
  if (name == "add_sentence") return RequirementKind::AddSentence;
  if (name == "change_tone") return RequirementKind::ChangeTone;
  if (name == "reorder_definition_first") return RequirementKind::ReorderDefinitionFirst;
  if (name == "shorten") return RequirementKind::Shorten;
  if (name == "uppercase") return RequirementKind::Uppercase;
  throw std::invalid_argument("unknown requirement kind: " + std::string(name));
}

// ---- word pools ---------------------------------------------------------

namespace {

const std::vector<std::string> kTopics = {
    "glaciers",   "orchids",       "meteorites", "lighthouses", "typewriters",
    "synthesizers", "ferries",     "observatories", "aqueducts", "harvests"};

const std::vector<std::string> kFactKeys = {
    "alpha", "beta",  "gamma",  "delta", "epsilon", "zeta",
    "eta",   "theta", "iota",   "kappa", "lambda",  "sigma"};

const std::vector<std::string> kDerivedKeys = {"total", "margin", "gap"};

const std::vector<std::string> kAdjectives = {"quiet",  "durable", "modern",
                                              "subtle", "vivid",   "sparse"};
const std::vector<std::string> kNouns = {"craft",  "design", "history",
                                         "texture", "rhythm", "signal"};

const std::vector<std::string> kNames = {"jordan", "riley",  "casey",
                                         "morgan", "avery",  "quinn"};

struct PlaceholderSpec {
  std::string key;
  TokenSeq sentence;  // contains "[KEY]"
  std::vector<std::string> replacements;
};

const std::vector<PlaceholderSpec>& placeholder_specs() {
  static const std::vector<PlaceholderSpec> specs = {
      {"PLATFORM",
       {"we", "are", "moving", "our", "updates", "to", "[PLATFORM]", "soon", "."},
       {"TikTok", "Mastodon", "Bluesky", "Threads"}},
      {"DATE",
       {"the", "next", "event", "is", "planned", "for", "[DATE]", "."},
       {"Monday", "Friday", "June", "October"}},
      {"VENUE",
       {"we", "will", "gather", "at", "the", "[VENUE]", "space", "."},
       {"downtown", "online", "rooftop", "lakeside"}},
      {"PRIZE",
       {"attendees", "can", "win", "[PRIZE]", "at", "the", "door", "."},
       {"vouchers", "stickers", "headphones", "mugs"}},
  };
  return specs;
}

const std::vector<TokenSeq>& add_sentence_pool() {
  static const std::vector<TokenSeq> pool = {
      {"we", "truly", "appreciate", "your", "support", "."},
      {"stay", "tuned", "for", "more", "updates", "."},
      {"let", "us", "know", "your", "thoughts", "."},
      {"a", "full", "recap", "will", "follow", "shortly", "."},
  };
  return pool;
}

const std::vector<TokenSeq>& filler_sentences() {
  static const std::vector<TokenSeq> pool = {
      {"for", "what", "it", "is", "worth", "this", "remains", "broadly",
       "accurate", "."},
      {"further", "commentary", "may", "be", "added", "here", "at", "a",
       "later", "point", "."},
      {"many", "readers", "will", "already", "be", "familiar", "with", "this",
       "material", "."},
      {"additional", "context", "is", "available", "upon", "request", "."},
  };
  return pool;
}

std::string hex16(std::uint64_t x) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[x & 0xf];
    x >>= 4;
  }
  return out;
}

std::string gen_id(std::string_view prefix, std::uint64_t seed) {
  return std::string(prefix) + "-" + hex16(splitmix64(seed ^ fnv1a64(prefix)));
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

void append_sentence(TokenSeq& tokens, const TokenSeq& sentence) {
  tokens.insert(tokens.end(), sentence.begin(), sentence.end());
}

}  // namespace

// ---- token helpers -------------------------------------------------------

bool is_placeholder_token(std::string_view token) {
  if (token.size() < 3 || token.front() != '[' || token.back() != ']') return false;
  for (std::size_t i = 1; i + 1 < token.size(); ++i) {
    char c = token[i];
    if (!(std::isupper(static_cast<unsigned char>(c)) || c == '_')) return false;
  }
  return true;
}

int placeholder_count(const TokenSeq& tokens) {
  int n = 0;
  for (const auto& t : tokens) {
    if (is_placeholder_token(t)) ++n;
  }
  return n;
}

std::vector<TokenSeq> split_sentences(const TokenSeq& tokens) {
  std::vector<TokenSeq> sentences;
  TokenSeq cur;
  for (const auto& t : tokens) {
    cur.push_back(t);
    char last = t.back();
    if (last == '.' || last == '!' || last == '?') {
      sentences.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) sentences.push_back(std::move(cur));
  return sentences;
}

int sentence_count(const TokenSeq& tokens) {
  return static_cast<int>(split_sentences(tokens).size());
}

double uppercase_fraction(const TokenSeq& tokens) {
  int alpha = 0;
  int upper = 0;
  for (const auto& t : tokens) {
    for (char c : t) {
      if (std::isalpha(static_cast<unsigned char>(c))) {
        ++alpha;
        if (std::isupper(static_cast<unsigned char>(c))) ++upper;
      }
    }
  }
  return alpha == 0 ? 0.0 : static_cast<double>(upper) / alpha;
}

int definition_sentence_index(const std::vector<TokenSeq>& sentences) {
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    for (const auto& t : sentences[i]) {
      if (lower(t) == "means") return static_cast<int>(i);
    }
  }
  return -1;
}

// ---- document edits --------------------------------------------------------

namespace {

// Fact sentences render as "<key> is <value> ."; locate the value token.
int fact_value_token_index(const Document& doc, const std::string& key) {
  for (std::size_t i = 0; i + 2 < doc.tokens.size(); ++i) {
    if (doc.tokens[i] == key && doc.tokens[i + 1] == "is") {
      return static_cast<int>(i + 2);
    }
  }
  return -1;
}

int derived_value_token_index(const Document& doc, const std::string& key) {
  for (std::size_t i = 0; i + 1 < doc.tokens.size(); ++i) {
    if (doc.tokens[i] == key && doc.tokens[i + 1] == "combines") {
      for (std::size_t j = i + 2; j + 1 < doc.tokens.size(); ++j) {
        if (doc.tokens[j] == "giving") return static_cast<int>(j + 1);
      }
    }
  }
  return -1;
}

long long derived_formula_value(const Document& doc, const DerivedRecord& rec) {
  long long sum = 0;
  for (const auto& key : rec.formula) {
    for (const auto& fact : doc.facts) {
      if (fact.key == key) {
        sum += fact.value;
        break;
      }
    }
  }
  return sum;
}

}  // namespace

void apply_critique(Document& doc, const CritiqueSpan& span) {
  if (span.index < 0 || span.index >= static_cast<int>(doc.facts.size())) {
    throw std::out_of_range("apply_critique: span index out of bounds");
  }
  FactRecord& fact = doc.facts[span.index];
  fact.value = span.revision;
  int pos = fact_value_token_index(doc, fact.key);
  if (pos >= 0) doc.tokens[pos] = std::to_string(span.revision);
}

bool derived_stale(const Document& doc, int m) {
  if (m < 0 || m >= static_cast<int>(doc.derived.size())) {
    throw std::out_of_range("derived_stale: index out of bounds");
  }
  const DerivedRecord& rec = doc.derived[m];
  return rec.stated_value != derived_formula_value(doc, rec);
}

void fix_derived(Document& doc, int m) {
  if (m < 0 || m >= static_cast<int>(doc.derived.size())) {
    throw std::out_of_range("fix_derived: index out of bounds");
  }
  DerivedRecord& rec = doc.derived[m];
  rec.stated_value = derived_formula_value(doc, rec);
  int pos = derived_value_token_index(doc, rec.key);
  if (pos >= 0) doc.tokens[pos] = std::to_string(rec.stated_value);
}

void apply_requirement(Document& doc, const Requirement& req) {
  switch (req.kind) {
    case RequirementKind::ReplacePlaceholder: {
      const std::string needle = "[" + req.target + "]";
      for (auto& t : doc.tokens) {
        if (t == needle) t = req.replacement;
      }
      break;
    }
    case RequirementKind::AddSentence:
      append_sentence(doc.tokens, req.sentence);
      break;
    case RequirementKind::ChangeTone:
      doc.tone_tag = req.tone;
      break;
    case RequirementKind::ReorderDefinitionFirst: {
      auto sentences = split_sentences(doc.tokens);
      int idx = definition_sentence_index(sentences);
      if (idx > 0) {
        TokenSeq def = sentences[idx];
        sentences.erase(sentences.begin() + idx);
        sentences.insert(sentences.begin(), std::move(def));
        doc.tokens.clear();
        for (const auto& s : sentences) append_sentence(doc.tokens, s);
      }
      break;
    }
    case RequirementKind::Shorten: {
      auto sentences = split_sentences(doc.tokens);
      if (sentences.size() > 1) {
        sentences.pop_back();
        doc.tokens.clear();
        for (const auto& s : sentences) append_sentence(doc.tokens, s);
      }
      break;
    }
    case RequirementKind::Uppercase:
      for (auto& t : doc.tokens) {
        for (char& c : t) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      }
      break;
  }
}

int spurious_edit_count() { return static_cast<int>(filler_sentences().size()); }

void apply_spurious_edit(Document& doc, int k) {
  if (k < 0 || k >= spurious_edit_count()) {
    throw std::out_of_range("apply_spurious_edit: index out of bounds");
  }
  append_sentence(doc.tokens, filler_sentences()[k]);
}

// ---- generators ------------------------------------------------------------

namespace {

Document build_gold(const Document& initial, const std::vector<CritiqueSpan>& critiques,
                    const std::vector<Requirement>& requirements) {
  Document gold = initial;
  for (const auto& span : critiques) apply_critique(gold, span);
  for (const auto& req : requirements) apply_requirement(gold, req);
  for (int m = 0; m < static_cast<int>(gold.derived.size()); ++m) {
    if (derived_stale(gold, m)) fix_derived(gold, m);
  }
  return gold;
}

std::string render_factuality_instruction(const std::vector<CritiqueSpan>& critiques,
                                          const Document& initial) {
  std::ostringstream os;
  os << "correct the flagged values:";
  for (std::size_t i = 0; i < critiques.size(); ++i) {
    const auto& span = critiques[i];
    os << (i == 0 ? " " : "; ") << "set " << initial.facts[span.index].key << " to "
       << span.revision;
  }
  os << ".";
  return os.str();
}

std::string render_requirement_instruction(const Requirement& req) {
  switch (req.kind) {
    case RequirementKind::ReplacePlaceholder:
      return "swap the [" + req.target + "] placeholder for " + req.replacement + ".";
    case RequirementKind::AddSentence: {
      std::string out = "add a line saying:";
      for (const auto& t : req.sentence) out += " " + t;
      return out;
    }
    case RequirementKind::ChangeTone:
      return "give the text a " + tone_name(req.tone) + " tone.";
    case RequirementKind::ReorderDefinitionFirst:
      return "put the definition at the beginning.";
    case RequirementKind::Shorten:
      return "make the text shorter.";
    case RequirementKind::Uppercase:
      return "write everything in capital letters.";
  }
  throw std::logic_error("bad RequirementKind");
}

std::string render_requirements_instruction(const std::vector<Requirement>& reqs) {
  std::string out;
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    if (i > 0) out += " also, ";
    out += render_requirement_instruction(reqs[i]);
  }
  return out;
}

}  // namespace

RewriteInstance gen_factuality_instance(std::uint64_t seed, const FactualityGenConfig& cfg) {
  if (cfg.fact_count < 3 || cfg.fact_count > 12) {
    throw std::invalid_argument("gen_factuality_instance: fact_count must be in [3, 12]");
  }
  if (cfg.corrupt_count < 1 || cfg.corrupt_count > cfg.fact_count) {
    throw std::invalid_argument("gen_factuality_instance: corrupt_count must be in [1, fact_count]");
  }
  if (cfg.derived_count < 0 || cfg.derived_count > 3) {
    throw std::invalid_argument("gen_factuality_instance: derived_count must be in [0, 3]");
  }

  RngStream rng(splitmix64(seed ^ fnv1a64("factuality")));
  const int F = cfg.fact_count;
  const int C = cfg.corrupt_count;
  const int D = cfg.derived_count;

  const std::string topic = rng.pick(kTopics);

  std::vector<long long> gold_values(F);
  for (int i = 0; i < F; ++i) gold_values[i] = rng.int_in(20, 80);

  std::vector<int> order(F);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<int> corrupted(order.begin(), order.begin() + C);
  std::sort(corrupted.begin(), corrupted.end());

  // Corrupting downward keeps every revision strictly above its wrong value,
  // so a derived sum over any corrupted fact always goes stale after fixing.
  std::vector<long long> initial_values = gold_values;
  for (int idx : corrupted) initial_values[idx] = gold_values[idx] - rng.int_in(1, 9);

  Document initial;
  initial.tokens = {"notes", "on", topic, "."};
  for (int i = 0; i < F; ++i) {
    initial.facts.push_back({kFactKeys[i], initial_values[i]});
    append_sentence(initial.tokens,
                    {kFactKeys[i], "is", std::to_string(initial_values[i]), "."});
  }

  for (int m = 0; m < D; ++m) {
    const int arity = static_cast<int>(rng.int_in(2, std::min(3, F)));
    std::vector<int> members;
    if (m == 0) {
      // The first derived record must depend on a corrupted fact.
      members.push_back(corrupted[rng.below(corrupted.size())]);
    }
    std::vector<int> others;
    for (int i = 0; i < F; ++i) {
      if (members.empty() || i != members[0]) others.push_back(i);
    }
    rng.shuffle(others);
    for (int i = 0; static_cast<int>(members.size()) < arity; ++i) members.push_back(others[i]);
    std::sort(members.begin(), members.end());

    DerivedRecord rec;
    rec.key = kDerivedKeys[m];
    long long stated = 0;
    for (int idx : members) {
      rec.formula.push_back(kFactKeys[idx]);
      stated += initial_values[idx];
    }
    rec.stated_value = stated;  // consistent with the (corrupted) initial facts

    TokenSeq sentence = {rec.key, "combines"};
    for (std::size_t i = 0; i < rec.formula.size(); ++i) {
      if (i > 0) sentence.push_back("and");
      sentence.push_back(rec.formula[i]);
    }
    sentence.push_back("giving");
    sentence.push_back(std::to_string(stated));
    sentence.push_back(".");
    append_sentence(initial.tokens, sentence);
    initial.derived.push_back(std::move(rec));
  }

  RewriteInstance inst;
  inst.id = gen_id("fact", seed);
  inst.task = TaskKind::Factuality;
  inst.prompt_tokens = {"please", "review", "the", "figures", "about", topic};
  inst.initial = initial;
  for (int idx : corrupted) {
    CritiqueSpan span;
    span.index = idx;
    span.wrong_value = initial_values[idx];
    span.revision = gold_values[idx];
    span.reason = "the value " + std::to_string(span.wrong_value) + " for " +
                  kFactKeys[idx] + " is out of date; the correct value is " +
                  std::to_string(span.revision);
    inst.critiques.push_back(std::move(span));
  }
  inst.instruction_text = render_factuality_instruction(inst.critiques, initial);
  inst.gold = build_gold(initial, inst.critiques, {});
  return inst;
}

RewriteInstance gen_stylistic_instance(std::uint64_t seed, const StylisticGenConfig& cfg) {
  static const std::vector<RequirementKind> kStylisticKinds = {
      RequirementKind::ReorderDefinitionFirst, RequirementKind::ChangeTone,
      RequirementKind::Uppercase, RequirementKind::Shorten};

  std::vector<RequirementKind> kinds = cfg.forced_kinds;
  if (kinds.empty()) {
    if (cfg.requirement_count < 1 || cfg.requirement_count > 3) {
      throw std::invalid_argument("gen_stylistic_instance: requirement_count must be in [1, 3]");
    }
  } else {
    bool has_shorten = std::find(kinds.begin(), kinds.end(), RequirementKind::Shorten) != kinds.end();
    bool has_add = std::find(kinds.begin(), kinds.end(), RequirementKind::AddSentence) != kinds.end();
    if (has_shorten && has_add) {
      throw std::invalid_argument("gen_stylistic_instance: incompatible requirement set: "
                                  "Shorten conflicts with AddSentence");
    }
    for (auto k : kinds) {
      if (std::find(kStylisticKinds.begin(), kStylisticKinds.end(), k) == kStylisticKinds.end()) {
        throw std::invalid_argument("gen_stylistic_instance: requirement kind not available "
                                    "for stylistic rewriting: " + requirement_kind_name(k));
      }
    }
    std::vector<RequirementKind> dedup = kinds;
    std::sort(dedup.begin(), dedup.end());
    if (std::adjacent_find(dedup.begin(), dedup.end()) != dedup.end()) {
      throw std::invalid_argument("gen_stylistic_instance: duplicate requirement kind");
    }
  }

  RngStream rng(splitmix64(seed ^ fnv1a64("stylistic")));
  const std::string topic = rng.pick(kTopics);

  const int num_sentences = static_cast<int>(rng.int_in(4, 6));
  const int def_pos = static_cast<int>(rng.int_in(1, num_sentences - 1));

  std::vector<TokenSeq> sentences;
  for (int i = 0; i < num_sentences; ++i) {
    if (i == def_pos) {
      sentences.push_back({topic, "means", "a", rng.pick(kAdjectives), rng.pick(kNouns), "."});
      continue;
    }
    const std::string adj = rng.pick(kAdjectives);
    const std::string noun = rng.pick(kNouns);
    switch (rng.below(5)) {
      case 0: sentences.push_back({"it", "offers", "a", adj, noun, "."}); break;
      case 1: sentences.push_back({"people", "value", "its", adj, noun, "."}); break;
      case 2: sentences.push_back({"the", noun, "remains", adj, "today", "."}); break;
      case 3: sentences.push_back({"critics", "describe", "the", noun, "as", adj, "."}); break;
      default: sentences.push_back({"a", adj, noun, "sits", "at", "the", "core", "."}); break;
    }
  }

  Document initial;
  for (const auto& s : sentences) append_sentence(initial.tokens, s);

  if (kinds.empty()) {
    std::vector<RequirementKind> pool = kStylisticKinds;
    rng.shuffle(pool);
    kinds.assign(pool.begin(), pool.begin() + cfg.requirement_count);
  }
  // Apply order is fixed by kind so requirement sets stay mutually compatible:
  // reorder before shorten, tone/case anywhere between.
  auto rank = [](RequirementKind k) {
    switch (k) {
      case RequirementKind::ReorderDefinitionFirst: return 0;
      case RequirementKind::ChangeTone: return 1;
      case RequirementKind::Uppercase: return 2;
      case RequirementKind::Shorten: return 3;
      default: return 4;
    }
  };
  std::sort(kinds.begin(), kinds.end(), [&](auto a, auto b) { return rank(a) < rank(b); });

  RewriteInstance inst;
  inst.id = gen_id("styl", seed);
  inst.task = TaskKind::Stylistic;
  inst.prompt_tokens = {"please", "rewrite", "the", "passage", "about", topic};
  inst.initial = initial;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    Requirement req;
    req.id = static_cast<int>(i);
    req.kind = kinds[i];
    if (req.kind == RequirementKind::ChangeTone) {
      req.tone = rng.below(2) == 0 ? Tone::Formal : Tone::Enthusiastic;
    }
    inst.requirements.push_back(std::move(req));
  }
  inst.instruction_text = render_requirements_instruction(inst.requirements);
  inst.gold = build_gold(initial, {}, inst.requirements);
  return inst;
}

RewriteInstance gen_conversational_instance(std::uint64_t seed,
                                            const ConversationalGenConfig& cfg) {
  if (cfg.requirement_count < 2 || cfg.requirement_count > 5) {
    throw std::invalid_argument("gen_conversational_instance: requirement_count must be in [2, 5]");
  }

  RngStream rng(splitmix64(seed ^ fnv1a64("conversational")));
  const std::string name = rng.pick(kNames);
  const int total = cfg.requirement_count;
  const int num_placeholders = std::min(2, total - 1);

  const auto& specs = placeholder_specs();
  std::vector<int> spec_order(specs.size());
  std::iota(spec_order.begin(), spec_order.end(), 0);
  rng.shuffle(spec_order);
  std::vector<int> chosen(spec_order.begin(), spec_order.begin() + num_placeholders);
  std::sort(chosen.begin(), chosen.end());  // body order follows the fixed pool order

  Document initial;
  initial.tokens = {"dear", name + ","};
  append_sentence(initial.tokens,
                  {"thanks", "for", "supporting", "our", "project", "this", "year", "."});
  for (int idx : chosen) append_sentence(initial.tokens, specs[idx].sentence);
  append_sentence(initial.tokens, {"best", "regards,", name, "."});

  RewriteInstance inst;
  inst.id = gen_id("conv", seed);
  inst.task = TaskKind::Conversational;
  inst.prompt_tokens = {"please", "revise", "this", "email", "for", name};
  inst.initial = initial;

  int next_id = 0;
  for (int idx : chosen) {
    Requirement req;
    req.id = next_id++;
    req.kind = RequirementKind::ReplacePlaceholder;
    req.target = specs[idx].key;
    req.replacement = rng.pick(specs[idx].replacements);
    inst.requirements.push_back(std::move(req));
  }

  // Extras come from {each AddSentence payload, one ChangeTone}; every option
  // satisfies the detail-editing constraint on its own.
  const int num_extras = total - num_placeholders;
  struct Extra { bool tone; int payload; };
  std::vector<Extra> options;
  for (int i = 0; i < static_cast<int>(add_sentence_pool().size()); ++i) {
    options.push_back({false, i});
  }
  options.push_back({true, 0});
  rng.shuffle(options);
  std::vector<Extra> extras(options.begin(), options.begin() + num_extras);
  std::sort(extras.begin(), extras.end(), [](const Extra& a, const Extra& b) {
    if (a.tone != b.tone) return !a.tone;  // tone change applies last
    return a.payload < b.payload;
  });

  for (const auto& extra : extras) {
    Requirement req;
    req.id = next_id++;
    if (extra.tone) {
      req.kind = RequirementKind::ChangeTone;
      req.tone = rng.below(2) == 0 ? Tone::Formal : Tone::Enthusiastic;
    } else {
      req.kind = RequirementKind::AddSentence;
      req.sentence = add_sentence_pool()[extra.payload];
    }
    inst.requirements.push_back(std::move(req));
  }

  inst.instruction_text = render_requirements_instruction(inst.requirements);
  inst.gold = build_gold(initial, {}, inst.requirements);
  return inst;
}

// ---- dataset io --------------------------------------------------------

namespace {

json document_to_json(const Document& doc) {
  json facts = json::array();
  for (const auto& f : doc.facts) facts.push_back({{"key", f.key}, {"value", f.value}});
  json derived = json::array();
  for (const auto& d : doc.derived) {
    derived.push_back({{"key", d.key}, {"formula", d.formula}, {"stated_value", d.stated_value}});
  }
  return {{"tokens", doc.tokens},
          {"facts", facts},
          {"derived", derived},
          {"tone_tag", tone_name(doc.tone_tag)}};
}

json requirement_to_json(const Requirement& req) {
  return {{"id", req.id},
          {"kind", requirement_kind_name(req.kind)},
          {"target", req.target},
          {"replacement", req.replacement},
          {"sentence", req.sentence},
          {"tone", tone_name(req.tone)}};
}

const json& require_field(const json& j, const char* name, int line) {
  if (!j.is_object() || !j.contains(name)) {
    throw std::runtime_error("line " + std::to_string(line) + ": missing field '" + name + "'");
  }
  return j.at(name);
}

Document document_from_json(const json& j, int line) {
  Document doc;
  doc.tokens = require_field(j, "tokens", line).get<TokenSeq>();
  for (const auto& f : require_field(j, "facts", line)) {
    doc.facts.push_back({require_field(f, "key", line).get<std::string>(),
                         require_field(f, "value", line).get<long long>()});
  }
  for (const auto& d : require_field(j, "derived", line)) {
    DerivedRecord rec;
    rec.key = require_field(d, "key", line).get<std::string>();
    rec.formula = require_field(d, "formula", line).get<std::vector<std::string>>();
    rec.stated_value = require_field(d, "stated_value", line).get<long long>();
    doc.derived.push_back(std::move(rec));
  }
  doc.tone_tag = parse_tone(require_field(j, "tone_tag", line).get<std::string>());
  return doc;
}

Requirement requirement_from_json(const json& j, int line) {
  Requirement req;
  req.id = require_field(j, "id", line).get<int>();
  req.kind = parse_requirement_kind(require_field(j, "kind", line).get<std::string>());
  req.target = require_field(j, "target", line).get<std::string>();
  req.replacement = require_field(j, "replacement", line).get<std::string>();
  req.sentence = require_field(j, "sentence", line).get<TokenSeq>();
  req.tone = parse_tone(require_field(j, "tone", line).get<std::string>());
  return req;
}

}  // namespace

std::string instance_to_json_line(const RewriteInstance& inst) {
  json critiques = json::array();
  for (const auto& c : inst.critiques) {
    critiques.push_back({{"index", c.index},
                         {"wrong_value", c.wrong_value},
                         {"revision", c.revision},
                         {"reason", c.reason}});
  }
  json requirements = json::array();
  for (const auto& r : inst.requirements) requirements.push_back(requirement_to_json(r));

  json j = {{"id", inst.id},
            {"task", task_name(inst.task)},
            {"prompt", inst.prompt_tokens},
            {"initial", document_to_json(inst.initial)},
            {"critiques", critiques},
            {"requirements", requirements},
            {"instruction_text", inst.instruction_text},
            {"gold", document_to_json(inst.gold)}};
  return j.dump();
}

RewriteInstance instance_from_json_line(const std::string& line, int line_number) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw std::runtime_error("line " + std::to_string(line_number) +
                             ": malformed record: " + e.what());
  }
  try {
    RewriteInstance inst;
    inst.id = require_field(j, "id", line_number).get<std::string>();
    inst.task = parse_task(require_field(j, "task", line_number).get<std::string>());
    inst.prompt_tokens = require_field(j, "prompt", line_number).get<TokenSeq>();
    inst.initial = document_from_json(require_field(j, "initial", line_number), line_number);
    for (const auto& c : require_field(j, "critiques", line_number)) {
      CritiqueSpan span;
      span.index = require_field(c, "index", line_number).get<int>();
      span.wrong_value = require_field(c, "wrong_value", line_number).get<long long>();
      span.revision = require_field(c, "revision", line_number).get<long long>();
      span.reason = require_field(c, "reason", line_number).get<std::string>();
      inst.critiques.push_back(std::move(span));
    }
    for (const auto& r : require_field(j, "requirements", line_number)) {
      inst.requirements.push_back(requirement_from_json(r, line_number));
    }
    inst.instruction_text =
        require_field(j, "instruction_text", line_number).get<std::string>();
    inst.gold = document_from_json(require_field(j, "gold", line_number), line_number);
    return inst;
  } catch (const json::exception& e) {
    throw std::runtime_error("line " + std::to_string(line_number) +
                             ": malformed field: " + e.what());
  }
}

void save_dataset(std::span<const RewriteInstance> instances, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  for (const auto& inst : instances) out << instance_to_json_line(inst) << "\n";
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<RewriteInstance> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  std::vector<RewriteInstance> out;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    out.push_back(instance_from_json_line(line, line_number));
  }
  return out;
}

}  // namespace rwlab
