#pragma once

// Core data model shared by every other header: benchmark items, deployment
// configurations, scaffold transcripts, observations, and the append-only
// run ledger with its manifest.
//
// Ledger records are line-delimited JSON so partial runs stay analyzable and
// appends are crash-safe. Field names are public schema, documented in
// schemas/ledger.md; unknown enum spellings are rejected at parse time, never
// coerced.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scaffeval/util.hpp"

namespace scaffeval {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Enumerations

enum class BenchmarkKind {
  truthfulqa,
  bbq,
  sycophancy,
  self_awareness_control,
  xstest_orbench,
  mmlu_control,
};

inline const std::vector<std::pair<BenchmarkKind, std::string>>& benchmark_kind_names() {
  static const std::vector<std::pair<BenchmarkKind, std::string>> names = {
      {BenchmarkKind::truthfulqa, "truthfulqa"},
      {BenchmarkKind::bbq, "bbq"},
      {BenchmarkKind::sycophancy, "sycophancy"},
      {BenchmarkKind::self_awareness_control, "self_awareness_control"},
      {BenchmarkKind::xstest_orbench, "xstest_orbench"},
      {BenchmarkKind::mmlu_control, "mmlu_control"},
  };
  return names;
}

inline std::string to_string(BenchmarkKind k) {
  for (const auto& [kind, name] : benchmark_kind_names())
    if (kind == k) return name;
  throw std::logic_error("unreachable benchmark kind");
}

inline BenchmarkKind benchmark_kind_from(const std::string& s) {
  for (const auto& [kind, name] : benchmark_kind_names())
    if (name == s) return kind;
  throw std::invalid_argument("unknown benchmark kind: '" + s + "'");
}

enum class Ambiguity { ambiguous, disambiguated, not_applicable };

inline std::string to_string(Ambiguity a) {
  switch (a) {
    case Ambiguity::ambiguous: return "ambiguous";
    case Ambiguity::disambiguated: return "disambiguated";
    case Ambiguity::not_applicable: return "n/a";
  }
  throw std::logic_error("unreachable ambiguity");
}

inline Ambiguity ambiguity_from(const std::string& s) {
  if (s == "ambiguous") return Ambiguity::ambiguous;
  if (s == "disambiguated") return Ambiguity::disambiguated;
  if (s == "n/a") return Ambiguity::not_applicable;
  throw std::invalid_argument("unknown ambiguity: '" + s + "'");
}

enum class ItemFormat { MC, OE };

inline std::string to_string(ItemFormat f) { return f == ItemFormat::MC ? "MC" : "OE"; }

inline ItemFormat item_format_from(const std::string& s) {
  if (s == "MC") return ItemFormat::MC;
  if (s == "OE") return ItemFormat::OE;
  throw std::invalid_argument("unknown format: '" + s + "'");
}

enum class ChainLevel { passthrough, minimal, moderate, aggressive };

inline std::string to_string(ChainLevel level) {
  switch (level) {
    case ChainLevel::passthrough: return "passthrough";
    case ChainLevel::minimal: return "minimal";
    case ChainLevel::moderate: return "moderate";
    case ChainLevel::aggressive: return "aggressive";
  }
  throw std::logic_error("unreachable chain level");
}

inline ChainLevel chain_level_from(const std::string& s) {
  if (s == "passthrough") return ChainLevel::passthrough;
  if (s == "minimal") return ChainLevel::minimal;
  if (s == "moderate") return ChainLevel::moderate;
  if (s == "aggressive") return ChainLevel::aggressive;
  throw std::invalid_argument("unknown chain level: '" + s + "'");
}

// Deployment configuration. Intensity chains carry a level; everything else
// is a bare tag. The complexity ordinal is defined only for the four primary
// configurations (direct=0, react=1, multi_agent=2, map_reduce=3).
struct ConfigKind {
  enum class Kind {
    direct,
    react,
    multi_agent,
    map_reduce,
    map_reduce_option_preserving,
    cot,
    intensity_chain,
  };

  Kind kind = Kind::direct;
  ChainLevel level = ChainLevel::passthrough;  // meaningful only for intensity_chain

  static ConfigKind direct() { return {Kind::direct, ChainLevel::passthrough}; }
  static ConfigKind react() { return {Kind::react, ChainLevel::passthrough}; }
  static ConfigKind multi_agent() { return {Kind::multi_agent, ChainLevel::passthrough}; }
  static ConfigKind map_reduce() { return {Kind::map_reduce, ChainLevel::passthrough}; }
  static ConfigKind map_reduce_option_preserving() {
    return {Kind::map_reduce_option_preserving, ChainLevel::passthrough};
  }
  static ConfigKind cot() { return {Kind::cot, ChainLevel::passthrough}; }
  static ConfigKind intensity_chain(ChainLevel level) {
    return {Kind::intensity_chain, level};
  }

  std::optional<int> complexity_ordinal() const {
    switch (kind) {
      case Kind::direct: return 0;
      case Kind::react: return 1;
      case Kind::multi_agent: return 2;
      case Kind::map_reduce: return 3;
      default: return std::nullopt;
    }
  }

  std::string str() const {
    switch (kind) {
      case Kind::direct: return "direct";
      case Kind::react: return "react";
      case Kind::multi_agent: return "multi_agent";
      case Kind::map_reduce: return "map_reduce";
      case Kind::map_reduce_option_preserving: return "map_reduce_option_preserving";
      case Kind::cot: return "cot";
      case Kind::intensity_chain: return "intensity_chain:" + to_string(level);
    }
    throw std::logic_error("unreachable config kind");
  }

  static ConfigKind parse(const std::string& s) {
    if (s == "direct") return direct();
    if (s == "react") return react();
    if (s == "multi_agent") return multi_agent();
    if (s == "map_reduce") return map_reduce();
    if (s == "map_reduce_option_preserving") return map_reduce_option_preserving();
    if (s == "cot") return cot();
    const std::string prefix = "intensity_chain:";
    if (s.rfind(prefix, 0) == 0) return intensity_chain(chain_level_from(s.substr(prefix.size())));
    throw std::invalid_argument("unknown config: '" + s + "'");
  }

  bool operator==(const ConfigKind& o) const { return kind == o.kind && level == o.level; }
  bool operator!=(const ConfigKind& o) const { return !(*this == o); }
  bool operator<(const ConfigKind& o) const {
    if (kind != o.kind) return kind < o.kind;
    return level < o.level;
  }
};

// ---------------------------------------------------------------------------
// Benchmark items

struct BenchmarkItem {
  std::string item_id;
  BenchmarkKind kind = BenchmarkKind::truthfulqa;
  std::string stem;
  std::vector<std::pair<char, std::string>> options;  // ordered (letter, text)
  std::set<char> correct_letters;
  std::set<char> safe_letters;
  Ambiguity ambiguity = Ambiguity::not_applicable;
  ItemFormat format = ItemFormat::MC;
  std::optional<std::string> paired_id;
  std::set<std::string> tags;  // e.g. oe_vague, residual_mc_language, comply_expected

  std::set<char> option_letters() const {
    std::set<char> out;
    for (const auto& [letter, text] : options) out.insert(letter);
    return out;
  }

  // Throws std::invalid_argument naming the offending field.
  void validate() const {
    if (item_id.empty()) throw std::invalid_argument("item_id: empty");
    if (trim(stem).empty()) throw std::invalid_argument(item_id + ".stem: empty");
    if (format == ItemFormat::MC) {
      if (options.empty())
        throw std::invalid_argument(item_id + ".options: MC item requires options");
      auto letters = option_letters();
      if (letters.size() != options.size())
        throw std::invalid_argument(item_id + ".options: duplicate option letters");
      for (char c : correct_letters)
        if (!letters.count(c))
          throw std::invalid_argument(item_id + ".correct_letters: '" + std::string(1, c) +
                                      "' is not an option letter");
      for (char c : safe_letters)
        if (!letters.count(c))
          throw std::invalid_argument(item_id + ".safe_letters: '" + std::string(1, c) +
                                      "' is not an option letter");
    } else if (!options.empty()) {
      throw std::invalid_argument(item_id + ".options: OE item must not carry options");
    }
    if (kind == BenchmarkKind::bbq && format == ItemFormat::MC &&
        ambiguity == Ambiguity::ambiguous && safe_letters.empty())
      throw std::invalid_argument(item_id +
                                  ".safe_letters: ambiguous bbq item needs the unknown option");
  }
};

// ---------------------------------------------------------------------------
// Prompts and transcripts

struct PromptBundle {
  std::string system_text;
  std::string user_text;

  bool operator==(const PromptBundle& o) const {
    return system_text == o.system_text && user_text == o.user_text;
  }
};

enum class SubCallRole {
  single,
  thought_action,
  critic,
  revision,
  decompose,
  map_worker,
  reduce,
  cot,
  chain_step,
};

inline std::string to_string(SubCallRole r) {
  switch (r) {
    case SubCallRole::single: return "single";
    case SubCallRole::thought_action: return "thought_action";
    case SubCallRole::critic: return "critic";
    case SubCallRole::revision: return "revision";
    case SubCallRole::decompose: return "decompose";
    case SubCallRole::map_worker: return "map_worker";
    case SubCallRole::reduce: return "reduce";
    case SubCallRole::cot: return "cot";
    case SubCallRole::chain_step: return "chain_step";
  }
  throw std::logic_error("unreachable subcall role");
}

inline SubCallRole subcall_role_from(const std::string& s) {
  static const std::map<std::string, SubCallRole> table = {
      {"single", SubCallRole::single},
      {"thought_action", SubCallRole::thought_action},
      {"critic", SubCallRole::critic},
      {"revision", SubCallRole::revision},
      {"decompose", SubCallRole::decompose},
      {"map_worker", SubCallRole::map_worker},
      {"reduce", SubCallRole::reduce},
      {"cot", SubCallRole::cot},
      {"chain_step", SubCallRole::chain_step},
  };
  auto it = table.find(s);
  if (it == table.end()) throw std::invalid_argument("unknown subcall role: '" + s + "'");
  return it->second;
}

struct SubCall {
  SubCallRole role = SubCallRole::single;
  int index = 0;  // worker / chain-step position; 0 elsewhere
  PromptBundle bundle;
  std::string response;
  bool options_present = false;
  bool safety_instruction_present = false;
};

struct Transcript {
  ConfigKind config;
  std::string item_id;
  std::vector<SubCall> subcalls;
  std::set<std::string> flags;  // e.g. decompose_fallback, forced_termination

  void validate() const {
    if (subcalls.empty()) throw std::invalid_argument("transcript.subcalls: empty");
  }
};

// ---------------------------------------------------------------------------
// Observations

enum class RunStatus { success, error };

inline std::string to_string(RunStatus s) { return s == RunStatus::success ? "success" : "error"; }

inline RunStatus run_status_from(const std::string& s) {
  if (s == "success") return RunStatus::success;
  if (s == "error") return RunStatus::error;
  throw std::invalid_argument("unknown status: '" + s + "'");
}

enum class ContextCondition { short_context, long_context };

inline std::string to_string(ContextCondition c) {
  return c == ContextCondition::short_context ? "short" : "long";
}

inline ContextCondition context_condition_from(const std::string& s) {
  if (s == "short") return ContextCondition::short_context;
  if (s == "long") return ContextCondition::long_context;
  throw std::invalid_argument("unknown context_condition: '" + s + "'");
}

enum class ParseStatus { parsed, parse_failure };

inline std::string to_string(ParseStatus p) {
  return p == ParseStatus::parsed ? "parsed" : "parse_failure";
}

inline ParseStatus parse_status_from(const std::string& s) {
  if (s == "parsed") return ParseStatus::parsed;
  if (s == "parse_failure") return ParseStatus::parse_failure;
  throw std::invalid_argument("unknown parse_status: '" + s + "'");
}

// Safety labels as stored. `excluded` is a scoring-time overlay used by
// per-protocol analysis and is deliberately not representable here: one
// ledger serves both scoring modes.
enum class SafetyLabel { safe, unsafe };

inline std::string to_string(SafetyLabel l) { return l == SafetyLabel::safe ? "safe" : "unsafe"; }

inline SafetyLabel safety_label_from(const std::string& s) {
  if (s == "safe") return SafetyLabel::safe;
  if (s == "unsafe") return SafetyLabel::unsafe;
  if (s == "excluded")
    throw std::invalid_argument("safety_label 'excluded' is never stored in a ledger");
  throw std::invalid_argument("unknown safety_label: '" + s + "'");
}

struct Observation {
  std::string item_id;
  std::string model_id;
  ConfigKind config;
  ItemFormat format = ItemFormat::MC;
  ContextCondition context_condition = ContextCondition::short_context;
  RunStatus status = RunStatus::success;
  Transcript transcript;
  std::string final_text;
  std::optional<char> extracted_letter;
  std::optional<ParseStatus> parse_status;
  std::optional<SafetyLabel> safety_label;
  int64_t latency_ms = 0;
  int64_t seed = 0;

  // The ledger uniqueness key.
  std::string key() const {
    return item_id + "\x1f" + model_id + "\x1f" + config.str() + "\x1f" + to_string(format) +
           "\x1f" + to_string(context_condition);
  }

  void validate() const {
    if (item_id.empty()) throw std::invalid_argument("observation.item_id: empty");
    if (model_id.empty()) throw std::invalid_argument("observation.model_id: empty");
    if (latency_ms < 0) throw std::invalid_argument("observation.latency_ms: negative");
    transcript.validate();
    if (status == RunStatus::error && safety_label && *safety_label == SafetyLabel::safe)
      throw std::invalid_argument("observation.safety_label: error status cannot be safe");
    if (format == ItemFormat::MC && parse_status) {
      bool parsed = *parse_status == ParseStatus::parsed;
      if (parsed != extracted_letter.has_value())
        throw std::invalid_argument(
            "observation.extracted_letter: present iff parse_status is parsed");
    }
  }
};

// ---------------------------------------------------------------------------
// JSON serialization (schema documented in schemas/ledger.md)

inline json to_json(const SubCall& c) {
  json j;
  j["role"] = to_string(c.role);
  j["index"] = c.index;
  j["system_text"] = c.bundle.system_text;
  j["user_text"] = c.bundle.user_text;
  j["response"] = c.response;
  j["options_present"] = c.options_present;
  j["safety_instruction_present"] = c.safety_instruction_present;
  return j;
}

inline SubCall subcall_from_json(const json& j) {
  SubCall c;
  c.role = subcall_role_from(j.at("role").get<std::string>());
  c.index = j.value("index", 0);
  c.bundle.system_text = j.at("system_text").get<std::string>();
  c.bundle.user_text = j.at("user_text").get<std::string>();
  c.response = j.at("response").get<std::string>();
  c.options_present = j.at("options_present").get<bool>();
  c.safety_instruction_present = j.at("safety_instruction_present").get<bool>();
  return c;
}

inline json to_json(const Observation& o) {
  json j;
  j["item_id"] = o.item_id;
  j["model_id"] = o.model_id;
  j["config"] = o.config.str();
  j["format"] = to_string(o.format);
  j["context_condition"] = to_string(o.context_condition);
  j["status"] = to_string(o.status);
  j["latency_ms"] = o.latency_ms;
  j["seed"] = o.seed;
  j["final_text"] = o.final_text;
  json t;
  t["config"] = o.transcript.config.str();
  t["item_id"] = o.transcript.item_id;
  t["subcalls"] = json::array();
  for (const auto& c : o.transcript.subcalls) t["subcalls"].push_back(to_json(c));
  if (!o.transcript.flags.empty()) {
    t["flags"] = json::array();
    for (const auto& f : o.transcript.flags) t["flags"].push_back(f);
  }
  j["transcript"] = std::move(t);
  if (o.extracted_letter) j["extracted_letter"] = std::string(1, *o.extracted_letter);
  if (o.parse_status) j["parse_status"] = to_string(*o.parse_status);
  if (o.safety_label) j["safety_label"] = to_string(*o.safety_label);
  return j;
}

inline Observation observation_from_json(const json& j) {
  Observation o;
  o.item_id = j.at("item_id").get<std::string>();
  o.model_id = j.at("model_id").get<std::string>();
  o.config = ConfigKind::parse(j.at("config").get<std::string>());
  o.format = item_format_from(j.at("format").get<std::string>());
  o.context_condition = context_condition_from(j.at("context_condition").get<std::string>());
  o.status = run_status_from(j.at("status").get<std::string>());
  o.latency_ms = j.at("latency_ms").get<int64_t>();
  o.seed = j.at("seed").get<int64_t>();
  o.final_text = j.at("final_text").get<std::string>();
  const json& t = j.at("transcript");
  o.transcript.config = ConfigKind::parse(t.at("config").get<std::string>());
  o.transcript.item_id = t.at("item_id").get<std::string>();
  for (const auto& c : t.at("subcalls")) o.transcript.subcalls.push_back(subcall_from_json(c));
  if (t.contains("flags"))
    for (const auto& f : t.at("flags")) o.transcript.flags.insert(f.get<std::string>());
  if (j.contains("extracted_letter")) {
    std::string s = j.at("extracted_letter").get<std::string>();
    if (s.size() != 1) throw std::invalid_argument("extracted_letter: expected single letter");
    o.extracted_letter = s[0];
  }
  if (j.contains("parse_status"))
    o.parse_status = parse_status_from(j.at("parse_status").get<std::string>());
  if (j.contains("safety_label"))
    o.safety_label = safety_label_from(j.at("safety_label").get<std::string>());
  return o;
}

inline std::string serialize_observation(const Observation& o) { return to_json(o).dump(); }

inline Observation parse_observation(const std::string& line) {
  json j = json::parse(line);
  Observation o = observation_from_json(j);
  o.validate();
  return o;
}

// ---------------------------------------------------------------------------
// Run ledger

// Append-only, single-writer ledger. Appends validate the record, enforce
// the (item, model, config, format, context) uniqueness key, and flush per
// line. Readers load immutable snapshots.
class RunLedger {
 public:
  explicit RunLedger(std::filesystem::path path) : path_(std::move(path)) {
    if (std::filesystem::exists(path_)) {
      for (const Observation& o : read_all(path_)) keys_.insert(o.key());
    }
  }

  const std::filesystem::path& path() const { return path_; }
  size_t size() const { return keys_.size(); }
  bool contains_key(const std::string& key) const { return keys_.count(key) > 0; }

  void append(const Observation& obs) {
    obs.validate();
    std::string key = obs.key();
    if (keys_.count(key))
      throw std::invalid_argument("duplicate ledger key: (" + obs.item_id + ", " + obs.model_id +
                                  ", " + obs.config.str() + ", " + to_string(obs.format) + ", " +
                                  to_string(obs.context_condition) + ")");
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw std::runtime_error("cannot open ledger for append: " + path_.string());
    out << serialize_observation(obs) << "\n";
    out.flush();
    if (!out.good()) throw std::runtime_error("ledger append failed: " + path_.string());
    keys_.insert(std::move(key));
  }

  static std::vector<Observation> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open ledger: " + path.string());
    std::vector<Observation> out;
    std::set<std::string> seen;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      Observation o;
      try {
        o = parse_observation(line);
      } catch (const std::exception& e) {
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
      if (!seen.insert(o.key()).second)
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                 ": duplicate key " + o.key());
      out.push_back(std::move(o));
    }
    return out;
  }

 private:
  std::filesystem::path path_;
  std::set<std::string> keys_;
};

// Primary-analysis filter: successful short-context observations, in ledger
// order.
inline std::vector<Observation> filter_primary(const std::vector<Observation>& all) {
  std::vector<Observation> out;
  for (const auto& o : all)
    if (o.status == RunStatus::success && o.context_condition == ContextCondition::short_context)
      out.push_back(o);
  return out;
}

// Digest over the raw ledger bytes; stamped into every analysis output.
inline std::string ledger_digest(const std::filesystem::path& path) {
  return sha256_hex(read_file(path));
}

inline std::filesystem::path manifest_path_for(const std::filesystem::path& ledger_path) {
  std::filesystem::path p = ledger_path;
  p += ".manifest.json";
  return p;
}

inline void write_manifest(const std::filesystem::path& ledger_path, const json& manifest) {
  write_file(manifest_path_for(ledger_path), manifest.dump(2) + "\n");
}

inline json read_manifest(const std::filesystem::path& ledger_path) {
  return json::parse(read_file(manifest_path_for(ledger_path)));
}

}  // namespace scaffeval
