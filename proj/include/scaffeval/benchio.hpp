#pragma once

// Benchmark ingestion, prompt rendering, MC-to-OE conversion, and
// matched-format pairing.
//
// Item files are line-delimited JSON (schemas/items.md). Rendering follows
// the user-embedded policy: benchmark instructions always land in user_text,
// the system prompt stays the standardized neutral one.

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "scaffeval/domain.hpp"
#include "scaffeval/templates.hpp"
#include "scaffeval/util.hpp"

namespace scaffeval {

struct ItemSet {
  BenchmarkKind kind = BenchmarkKind::truthfulqa;
  std::vector<BenchmarkItem> items;
  std::string source_digest;  // sha256 of the raw input file

  const BenchmarkItem* find(const std::string& id) const {
    for (const auto& it : items)
      if (it.item_id == id) return &it;
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// Item (de)serialization

inline json item_to_json(const BenchmarkItem& it) {
  json j;
  j["item_id"] = it.item_id;
  j["kind"] = to_string(it.kind);
  j["format"] = to_string(it.format);
  j["stem"] = it.stem;
  j["options"] = json::array();
  for (const auto& [letter, text] : it.options) {
    json o;
    o["letter"] = std::string(1, letter);
    o["text"] = text;
    j["options"].push_back(std::move(o));
  }
  j["correct_letters"] = json::array();
  for (char c : it.correct_letters) j["correct_letters"].push_back(std::string(1, c));
  j["safe_letters"] = json::array();
  for (char c : it.safe_letters) j["safe_letters"].push_back(std::string(1, c));
  j["ambiguity"] = to_string(it.ambiguity);
  if (it.paired_id) j["paired_id"] = *it.paired_id;
  if (!it.tags.empty()) {
    j["tags"] = json::array();
    for (const auto& t : it.tags) j["tags"].push_back(t);
  }
  return j;
}

inline char letter_field(const json& j, const std::string& field) {
  std::string s = j.at(field).get<std::string>();
  if (s.size() != 1) throw std::invalid_argument(field + ": expected a single letter");
  return s[0];
}

inline BenchmarkItem item_from_json(const json& j) {
  BenchmarkItem it;
  it.item_id = j.at("item_id").get<std::string>();
  it.kind = benchmark_kind_from(j.at("kind").get<std::string>());
  it.format = item_format_from(j.at("format").get<std::string>());
  it.stem = j.at("stem").get<std::string>();
  if (j.contains("options"))
    for (const auto& o : j.at("options"))
      it.options.emplace_back(letter_field(o, "letter"), o.at("text").get<std::string>());
  if (j.contains("correct_letters"))
    for (const auto& c : j.at("correct_letters")) {
      std::string s = c.get<std::string>();
      if (s.size() != 1) throw std::invalid_argument("correct_letters: expected single letters");
      it.correct_letters.insert(s[0]);
    }
  if (j.contains("safe_letters"))
    for (const auto& c : j.at("safe_letters")) {
      std::string s = c.get<std::string>();
      if (s.size() != 1) throw std::invalid_argument("safe_letters: expected single letters");
      it.safe_letters.insert(s[0]);
    }
  it.ambiguity = j.contains("ambiguity")
                     ? ambiguity_from(j.at("ambiguity").get<std::string>())
                     : Ambiguity::not_applicable;
  if (j.contains("paired_id")) it.paired_id = j.at("paired_id").get<std::string>();
  if (j.contains("tags"))
    for (const auto& t : j.at("tags")) it.tags.insert(t.get<std::string>());
  return it;
}

// Loads a line-delimited item file, validating each record. Errors carry the
// file, line number, and offending field.
inline ItemSet load_items(const std::filesystem::path& path, BenchmarkKind kind) {
  std::string raw = read_file(path);
  ItemSet set;
  set.kind = kind;
  set.source_digest = sha256_hex(raw);
  std::set<std::string> ids;
  size_t lineno = 0;
  for (const std::string& line : split_lines(raw)) {
    ++lineno;
    if (trim(line).empty()) continue;
    BenchmarkItem it;
    try {
      it = item_from_json(json::parse(line));
      it.validate();
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (it.kind != kind)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": kind '" +
                               to_string(it.kind) + "' does not match requested '" +
                               to_string(kind) + "'");
    if (!ids.insert(it.item_id).second)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": duplicate item_id '" + it.item_id + "'");
    set.items.push_back(std::move(it));
  }
  if (set.items.empty()) throw std::runtime_error(path.string() + ": no items");
  return set;
}

inline void save_items(const std::filesystem::path& path, const std::vector<BenchmarkItem>& items) {
  std::string out;
  for (const auto& it : items) out += item_to_json(it).dump() + "\n";
  write_file(path, out);
}

// ---------------------------------------------------------------------------
// Prompt rendering

inline std::string render_option_block(const BenchmarkItem& item) {
  std::string out;
  for (const auto& [letter, text] : item.options)
    out += "(" + std::string(1, letter) + ") " + text + "\n";
  return out;
}

// User-embedded policy: stem, then options, then the answer-format
// instruction, all in user_text. OE items carry the stem alone.
inline PromptBundle render_prompt(const BenchmarkItem& item,
                                  const TemplateSet& templates = TemplateSet::defaults()) {
  PromptBundle b;
  b.system_text = templates.get("system_neutral");
  if (item.format == ItemFormat::MC) {
    b.user_text =
        item.stem + "\n\n" + render_option_block(item) + "\n" + templates.get("mc_answer_instruction");
  } else {
    b.user_text = item.stem;
    const std::string& oe = templates.get("oe_answer_instruction");
    if (!oe.empty()) b.user_text += "\n\n" + oe;
  }
  return b;
}

// ---------------------------------------------------------------------------
// MC → OE conversion

// Ordered rewrite table for scrubbing MC-referential phrasing from stems.
// Applied longest-match-first, case-insensitively on the match side, until a
// fixed point; cleaning an option-free stem is the identity.
inline const std::vector<std::pair<std::string, std::string>>& stem_rewrite_table() {
  static const std::vector<std::pair<std::string, std::string>> table = {
      {"which one of the following statements is true about", "what is true about"},
      {"which of the following statements is true about", "what is true about"},
      {"which one of the following is true about", "what is true about"},
      {"which of the following is true about", "what is true about"},
      {"which of the following statements is true", "what is true"},
      {"which of the following is true", "what is true"},
      {"which of the following best describes", "describe"},
      {"which one of the following", "what"},
      {"which of the following", "what"},
      {"select the best option from the list below.", ""},
      {"select one of the options below.", ""},
      {"choose the best answer.", ""},
      {"choose one option.", ""},
  };
  return table;
}

// Phrases that, if still present after rewriting, mark the stem as retaining
// MC-referential language; such items are flagged rather than repaired.
inline const std::vector<std::string>& residual_mc_phrases() {
  static const std::vector<std::string> phrases = {
      "of the following", "the following solutions", "the options", "option letter",
      "listed below",     "listed above",            "select one",
  };
  return phrases;
}

inline size_t find_ci(const std::string& haystack, const std::string& needle, size_t from = 0) {
  std::string h = lower(haystack), n = lower(needle);
  return h.find(n, from);
}

inline std::string normalize_spaces(const std::string& s) {
  std::string out;
  bool prev_space = false;
  for (char c : s) {
    bool space = (c == ' ' || c == '\t');
    if (space && prev_space) continue;
    out += space ? ' ' : c;
    prev_space = space;
  }
  // drop space before sentence punctuation left by phrase removal
  std::string tidy;
  for (size_t i = 0; i < out.size(); ++i) {
    if (out[i] == ' ' && i + 1 < out.size() && (out[i + 1] == '?' || out[i + 1] == '.' ||
                                                out[i + 1] == ',' || out[i + 1] == '!'))
      continue;
    tidy += out[i];
  }
  return trim(tidy);
}

inline std::string clean_stem_once(const std::string& stem) {
  // Longest-match-first: table entries are tried in order, and the table is
  // written longest-first within each phrase family.
  std::string s = stem;
  for (const auto& [phrase, replacement] : stem_rewrite_table()) {
    size_t pos = find_ci(s, phrase);
    while (pos != std::string::npos) {
      std::string repl = replacement;
      // Keep sentence capitalization when the phrase opened the sentence.
      bool sentence_start = pos == 0 || s[pos - 1] == '\n' ||
                            (pos >= 2 && (s[pos - 2] == '.' || s[pos - 2] == '?'));
      if (!repl.empty() && sentence_start) repl[0] = static_cast<char>(std::toupper(repl[0]));
      s = s.substr(0, pos) + repl + s.substr(pos + phrase.size());
      pos = find_ci(s, phrase, pos + (repl.empty() ? 0 : repl.size()));
    }
  }
  return normalize_spaces(s);
}

inline std::string clean_stem(const std::string& stem) {
  std::string cur = stem;
  for (int round = 0; round < 8; ++round) {
    std::string next = clean_stem_once(cur);
    if (next == cur) return cur;
    cur = next;
  }
  return cur;
}

inline bool has_residual_mc_language(const std::string& stem) {
  for (const auto& phrase : residual_mc_phrases())
    if (find_ci(stem, phrase) != std::string::npos) return true;
  return false;
}

inline std::string open_ended_id(const std::string& mc_id) { return mc_id + "-oe"; }

// Derives the open-ended twin of an MC item: options dropped, stem scrubbed
// of MC artifacts, pairing recorded in both id spaces (the OE id is derived
// from the MC id, so the link is recoverable from either side).
inline BenchmarkItem to_open_ended(const BenchmarkItem& mc) {
  if (mc.format != ItemFormat::MC)
    throw std::invalid_argument(mc.item_id + ": to_open_ended requires an MC item");
  BenchmarkItem oe = mc;
  oe.item_id = open_ended_id(mc.item_id);
  oe.format = ItemFormat::OE;
  oe.options.clear();
  oe.correct_letters.clear();
  oe.safe_letters.clear();
  oe.paired_id = mc.item_id;
  oe.stem = clean_stem(mc.stem);
  if (oe.stem.empty())
    throw std::invalid_argument(mc.item_id + ".stem: empty after MC-artifact cleaning");
  if (has_residual_mc_language(oe.stem)) oe.tags.insert("residual_mc_language");
  return oe;
}

// Builds the OE twin set and back-fills paired_id on the MC side.
inline ItemSet derive_open_ended_set(ItemSet& mc_set) {
  ItemSet oe;
  oe.kind = mc_set.kind;
  for (auto& mc : mc_set.items) {
    BenchmarkItem twin = to_open_ended(mc);
    mc.paired_id = twin.item_id;
    oe.items.push_back(std::move(twin));
  }
  std::string concat;
  for (const auto& it : oe.items) concat += item_to_json(it).dump() + "\n";
  oe.source_digest = sha256_hex(concat);
  return oe;
}

// ---------------------------------------------------------------------------
// Matched-format pairing

struct PairingResult {
  std::vector<std::pair<BenchmarkItem, BenchmarkItem>> pairs;  // (MC, OE)
  std::vector<std::string> unpaired_mc;
  std::vector<std::string> unpaired_oe;
};

// Pairs each OE item with the MC item named by its paired_id. A missing MC
// target or two OE items claiming one MC item is an error; items left over
// on either side are reported, not failed.
inline PairingResult pair_formats(const ItemSet& mc, const ItemSet& oe) {
  PairingResult out;
  std::set<std::string> used_mc;
  for (const auto& o : oe.items) {
    if (!o.paired_id) {
      out.unpaired_oe.push_back(o.item_id);
      continue;
    }
    const BenchmarkItem* target = mc.find(*o.paired_id);
    if (!target)
      throw std::invalid_argument("pair_formats: OE item '" + o.item_id +
                                  "' names missing MC id '" + *o.paired_id + "'");
    if (!used_mc.insert(target->item_id).second)
      throw std::invalid_argument("pair_formats: duplicate pairing onto MC id '" +
                                  target->item_id + "'");
    out.pairs.emplace_back(*target, o);
  }
  for (const auto& m : mc.items)
    if (!used_mc.count(m.item_id)) out.unpaired_mc.push_back(m.item_id);
  return out;
}

}  // namespace scaffeval
