#pragma once

// Deployment-configuration engines: direct, ReAct, multi-agent critic,
// map-reduce (plain and option-preserving), chain-of-thought control, and
// the step-intensity chains, plus the sub-call propagation tracer.
//
// Every engine records each model call as a SubCall with two propagation
// flags: whether the item's lettered options are still visible in the
// user text, and whether the standardized safety instruction survived into
// the prompt. Those flags are what the tracer aggregates; they are computed
// here, at construction, never re-derived later from text.

#include <memory>
#include <regex>
#include <string>
#include <vector>

#include "scaffeval/benchio.hpp"
#include "scaffeval/domain.hpp"
#include "scaffeval/modelgw.hpp"
#include "scaffeval/templates.hpp"

namespace scaffeval {

struct ScaffoldResult {
  Transcript transcript;
  std::string final_text;
};

inline bool options_present_in(const std::string& user_text, const BenchmarkItem& item) {
  if (item.options.size() < 2) return false;
  int seen = 0;
  for (const auto& [letter, text] : item.options)
    if (user_text.find("(" + std::string(1, letter) + ")") != std::string::npos) ++seen;
  return seen >= 2;
}

inline bool safety_instruction_in(const PromptBundle& b) {
  return b.system_text.find(kSafetySentinel) != std::string::npos ||
         b.user_text.find(kSafetySentinel) != std::string::npos;
}

inline bool matches_answer_marker(const std::string& text) {
  static const std::regex re(kAnswerMarkerPattern, std::regex::icase);
  return std::regex_search(text, re);
}

// Parses decompose output as a numbered or bulleted list, one sub-problem
// per line. Returns the ordered sub-problem texts; empty when the output is
// not a list.
inline std::vector<std::string> parse_subproblem_list(const std::string& text) {
  static const std::regex line_re(R"(^\s*(?:\d+[.)]|[-*])\s+(.+)$)");
  std::vector<std::string> out;
  for (const std::string& line : split_lines(text)) {
    std::smatch m;
    if (std::regex_match(line, m, line_re)) {
      std::string body = trim(m[1].str());
      if (!body.empty()) out.push_back(body);
    }
  }
  return out;
}

class ScaffoldRunner {
 public:
  ScaffoldRunner(Gateway& gateway, TemplateSet templates = TemplateSet::defaults())
      : gateway_(gateway), templates_(std::move(templates)) {}

  static constexpr int kReactMaxIters = 5;
  static constexpr int kMaxRevisions = 2;
  static constexpr int kMinWorkers = 2;
  static constexpr int kMaxWorkers = 5;

  const TemplateSet& templates() const { return templates_; }

  ScaffoldResult run_config(const ModelSpec& spec, const BenchmarkItem& item,
                            const ConfigKind& config) {
    switch (config.kind) {
      case ConfigKind::Kind::direct: return run_direct(spec, item);
      case ConfigKind::Kind::react: return run_react(spec, item);
      case ConfigKind::Kind::multi_agent: return run_multi_agent(spec, item);
      case ConfigKind::Kind::map_reduce: return run_map_reduce(spec, item, false);
      case ConfigKind::Kind::map_reduce_option_preserving:
        return run_map_reduce(spec, item, true);
      case ConfigKind::Kind::cot: return run_cot(spec, item);
      case ConfigKind::Kind::intensity_chain:
        return run_intensity_chain(spec, item, config.level);
    }
    throw std::logic_error("unreachable config kind");
  }

  // Single standardized call.
  ScaffoldResult run_direct(const ModelSpec& spec, const BenchmarkItem& item) {
    ScaffoldResult r;
    r.transcript.config = ConfigKind::direct();
    r.transcript.item_id = item.item_id;
    PromptBundle b = render_prompt(item, templates_);
    r.final_text = call(r.transcript, spec, item, SubCallRole::single, 0, b);
    return r;
  }

  // Thought/Action/Observation loop without tools. Terminates on the
  // final-answer marker or, failing that, at max_iters with the last
  // response standing in as the final answer (flagged).
  ScaffoldResult run_react(const ModelSpec& spec, const BenchmarkItem& item,
                           int max_iters = kReactMaxIters) {
    if (max_iters < 1) throw std::invalid_argument("run_react: max_iters must be >= 1");
    ScaffoldResult r;
    r.transcript.config = ConfigKind::react();
    r.transcript.item_id = item.item_id;
    std::string task = render_prompt(item, templates_).user_text;
    std::string scratchpad;
    for (int i = 1; i <= max_iters; ++i) {
      PromptBundle b;
      b.system_text = templates_.get("system_neutral");
      b.user_text = fill_template(templates_.get("react_instructions"),
                                  {{"task", task}, {"scratchpad", scratchpad}});
      std::string resp = call(r.transcript, spec, item, SubCallRole::thought_action, i, b);
      if (matches_answer_marker(resp)) {
        r.final_text = resp;
        return r;
      }
      scratchpad += resp + "\nObservation: no tool available.\n\n";
      r.final_text = resp;
    }
    r.transcript.flags.insert("forced_termination");
    return r;
  }

  // Draft, then critic passes with up to `max_revisions` revision rounds.
  // The critic approves by emitting the approval token; otherwise its
  // feedback drives a revision and review repeats until the cap.
  ScaffoldResult run_multi_agent(const ModelSpec& spec, const BenchmarkItem& item,
                                 int max_revisions = kMaxRevisions) {
    if (max_revisions < 0) throw std::invalid_argument("run_multi_agent: negative max_revisions");
    ScaffoldResult r;
    r.transcript.config = ConfigKind::multi_agent();
    r.transcript.item_id = item.item_id;
    std::string task = render_prompt(item, templates_).user_text;
    PromptBundle first = render_prompt(item, templates_);
    std::string candidate = call(r.transcript, spec, item, SubCallRole::single, 0, first);
    for (int round = 1; round <= max_revisions; ++round) {
      PromptBundle critic;
      critic.system_text = templates_.get("system_neutral");
      critic.user_text = fill_template(templates_.get("multi_agent_critic"),
                                       {{"task", task}, {"candidate", candidate}});
      std::string verdict = call(r.transcript, spec, item, SubCallRole::critic, round, critic);
      if (verdict.find(kApproveToken) != std::string::npos) break;
      PromptBundle rev;
      rev.system_text = templates_.get("system_neutral");
      rev.user_text = fill_template(
          templates_.get("multi_agent_revision"),
          {{"task", task}, {"candidate", candidate}, {"feedback", verdict}});
      candidate = call(r.transcript, spec, item, SubCallRole::revision, round, rev);
    }
    r.final_text = candidate;
    return r;
  }

  // Decompose into [2,5] sub-problems, fan out to workers, then reduce.
  // Workers see one sub-problem each; the option block rides along only in
  // the option-preserving variant. Decompose and reduce run under the
  // pipeline-internal system prompt, workers under the standardized one.
  ScaffoldResult run_map_reduce(const ModelSpec& spec, const BenchmarkItem& item,
                                bool preserve_options) {
    ScaffoldResult r;
    r.transcript.config =
        preserve_options ? ConfigKind::map_reduce_option_preserving() : ConfigKind::map_reduce();
    r.transcript.item_id = item.item_id;
    std::string task = render_prompt(item, templates_).user_text;

    PromptBundle dec;
    dec.system_text = templates_.get("system_pipeline");
    dec.user_text = fill_template(templates_.get("map_reduce_decompose"), {{"task", task}});
    std::string dec_out = call(r.transcript, spec, item, SubCallRole::decompose, 0, dec);

    std::vector<std::string> subs = parse_subproblem_list(dec_out);
    if (subs.size() > static_cast<size_t>(kMaxWorkers)) {
      subs.resize(kMaxWorkers);
      r.transcript.flags.insert("decompose_clamped");
    }
    if (subs.size() < static_cast<size_t>(kMinWorkers)) {
      subs = even_stem_split(item.stem);
      r.transcript.flags.insert("decompose_fallback");
    }

    std::string option_block;
    if (preserve_options && item.format == ItemFormat::MC)
      option_block = "\n\nAnswer options:\n" + render_option_block(item);

    std::vector<std::string> worker_outputs;
    for (size_t i = 0; i < subs.size(); ++i) {
      PromptBundle w;
      w.system_text = templates_.get("system_neutral");
      w.user_text = fill_template(templates_.get("map_reduce_worker"),
                                  {{"sub_problem", subs[i]}, {"option_block", option_block}});
      worker_outputs.push_back(call(r.transcript, spec, item, SubCallRole::map_worker,
                                    static_cast<int>(i) + 1, w));
    }

    std::string joined;
    for (size_t i = 0; i < worker_outputs.size(); ++i)
      joined += "Sub-answer " + std::to_string(i + 1) + ":\n" + worker_outputs[i] + "\n\n";
    PromptBundle red;
    red.system_text = templates_.get("system_pipeline");
    red.user_text = fill_template(templates_.get("map_reduce_reduce"),
                                  {{"task", task}, {"worker_outputs", trim(joined)}});
    r.final_text = call(r.transcript, spec, item, SubCallRole::reduce, 0, red);
    return r;
  }

  // Direct prompt with the reasoning-elicitation preamble; nothing else
  // differs from run_direct.
  ScaffoldResult run_cot(const ModelSpec& spec, const BenchmarkItem& item) {
    ScaffoldResult r;
    r.transcript.config = ConfigKind::cot();
    r.transcript.item_id = item.item_id;
    PromptBundle b = render_prompt(item, templates_);
    b.user_text = templates_.get("cot_prefix") + b.user_text;
    r.final_text = call(r.transcript, spec, item, SubCallRole::cot, 0, b);
    return r;
  }

  // Four sequential self-review steps. Step 1 poses the task plainly; steps
  // 2..4 re-present the task plus the previous answer under the level's
  // review wording. Passthrough short-circuits to the direct shape.
  ScaffoldResult run_intensity_chain(const ModelSpec& spec, const BenchmarkItem& item,
                                     ChainLevel level) {
    if (level == ChainLevel::passthrough) {
      ScaffoldResult r = run_direct(spec, item);
      r.transcript.config = ConfigKind::intensity_chain(level);
      return r;
    }
    ScaffoldResult r;
    r.transcript.config = ConfigKind::intensity_chain(level);
    r.transcript.item_id = item.item_id;
    std::string task = render_prompt(item, templates_).user_text;
    PromptBundle first = render_prompt(item, templates_);
    std::string answer = call(r.transcript, spec, item, SubCallRole::chain_step, 1, first);
    std::string step_template = templates_.get("chain_step_" + to_string(level));
    for (int step = 2; step <= 4; ++step) {
      PromptBundle b;
      b.system_text = templates_.get("system_neutral");
      b.user_text =
          fill_template(step_template, {{"task", task}, {"previous_answer", answer}});
      answer = call(r.transcript, spec, item, SubCallRole::chain_step, step, b);
    }
    r.final_text = answer;
    return r;
  }

 private:
  static std::vector<std::string> even_stem_split(const std::string& stem) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : stem + " ") {
      if (c == ' ' || c == '\n' || c == '\t') {
        if (!cur.empty()) words.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    size_t half = (words.size() + 1) / 2;
    std::string a, b;
    for (size_t i = 0; i < words.size(); ++i) {
      std::string& dst = i < half ? a : b;
      if (!dst.empty()) dst += ' ';
      dst += words[i];
    }
    if (b.empty()) b = a;  // single-word stems still need two workers
    return {a, b};
  }

  std::string call(Transcript& t, const ModelSpec& spec, const BenchmarkItem& item,
                   SubCallRole role, int index, const PromptBundle& bundle) {
    GatewayResult res = gateway_.complete(spec, bundle);
    SubCall c;
    c.role = role;
    c.index = index;
    c.bundle = bundle;
    c.response = res.text;
    c.options_present = options_present_in(bundle.user_text, item);
    c.safety_instruction_present = safety_instruction_in(bundle);
    t.subcalls.push_back(std::move(c));
    return res.text;
  }

  Gateway& gateway_;
  TemplateSet templates_;
};

// ---------------------------------------------------------------------------
// Propagation tracing

struct RoleStats {
  int64_t n = 0;
  int64_t with_options = 0;
  int64_t with_safety = 0;

  double options_rate() const { return n == 0 ? 0.0 : static_cast<double>(with_options) / n; }
  double safety_rate() const { return n == 0 ? 0.0 : static_cast<double>(with_safety) / n; }
};

struct PropagationReport {
  std::map<std::string, RoleStats> per_role;
  RoleStats overall;

  json to_json() const {
    json j;
    j["overall"] = {{"n", overall.n},
                    {"options_rate", overall.options_rate()},
                    {"safety_rate", overall.safety_rate()}};
    j["per_role"] = json::object();
    for (const auto& [role, s] : per_role)
      j["per_role"][role] = {{"n", s.n},
                             {"options_rate", s.options_rate()},
                             {"safety_rate", s.safety_rate()}};
    return j;
  }
};

inline PropagationReport trace_propagation(const std::vector<Transcript>& transcripts) {
  if (transcripts.empty())
    throw std::invalid_argument("trace_propagation: no transcripts");
  PropagationReport rep;
  for (const auto& t : transcripts) {
    for (const auto& c : t.subcalls) {
      RoleStats& r = rep.per_role[to_string(c.role)];
      for (RoleStats* s : {&r, &rep.overall}) {
        s->n += 1;
        s->with_options += c.options_present ? 1 : 0;
        s->with_safety += c.safety_instruction_present ? 1 : 0;
      }
    }
  }
  return rep;
}

}  // namespace scaffeval
