#pragma once

// Provider-agnostic model gateway.
//
// One abstraction (Completer) backs three kinds of model: live HTTP
// chat-completion endpoints, deterministic scripted models for desk-scale
// tests, and record/replay captures. The Gateway layers parameter policy,
// retry with exponential backoff (base 1 s, doubling, cap 60 s, up to 3
// retries), and a per-model sliding-window rate limiter over any Completer.
// Time is injected so every schedule is testable against a virtual clock.

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "scaffeval/domain.hpp"
#include "scaffeval/templates.hpp"
#include "scaffeval/util.hpp"

namespace scaffeval {

struct ModelSpec {
  std::string model_id;
  std::string endpoint;  // base URL for live mode; ignored by scripted backends
  bool supports_temperature = true;
  bool supports_seed = true;
  int rate_limit_rpm = 60;
  int max_tokens = 1024;

  void validate() const {
    if (model_id.empty()) throw std::invalid_argument("model_spec.model_id: empty");
    if (rate_limit_rpm < 1) throw std::invalid_argument("model_spec.rate_limit_rpm: must be >= 1");
    if (max_tokens < 1) throw std::invalid_argument("model_spec.max_tokens: must be >= 1");
  }
};

// Sampling parameters actually sent. Unsupported fields are absent, never
// sentinel-valued; build_request_body enforces that on the wire.
struct CallParams {
  std::optional<double> temperature;
  std::optional<int64_t> seed;
  int max_tokens = 1024;
};

inline CallParams call_params_for(const ModelSpec& spec) {
  CallParams p;
  if (spec.supports_temperature) p.temperature = 0.0;
  if (spec.supports_seed) p.seed = 42;
  p.max_tokens = spec.max_tokens;
  return p;
}

// The exact outgoing request body; the wire-policy tests assert on this.
inline json build_request_body(const ModelSpec& spec, const PromptBundle& bundle,
                               const CallParams& params) {
  json j;
  j["model"] = spec.model_id;
  j["messages"] = json::array();
  j["messages"].push_back({{"role", "system"}, {"content", bundle.system_text}});
  j["messages"].push_back({{"role", "user"}, {"content", bundle.user_text}});
  j["max_tokens"] = params.max_tokens;
  if (params.temperature) j["temperature"] = *params.temperature;
  if (params.seed) j["seed"] = *params.seed;
  return j;
}

struct TransportError : std::runtime_error {
  int status;
  TransportError(int status_, const std::string& what_)
      : std::runtime_error(what_), status(status_) {}
};

class Completer {
 public:
  virtual ~Completer() = default;
  virtual std::string complete(const ModelSpec& spec, const PromptBundle& bundle,
                               const CallParams& params) = 0;
};

// ---------------------------------------------------------------------------
// Injected time

class Clock {
 public:
  virtual ~Clock() = default;
  virtual int64_t now_ms() = 0;
};

class SystemClock : public Clock {
 public:
  int64_t now_ms() override {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
  }
};

class Sleeper {
 public:
  virtual ~Sleeper() = default;
  virtual void sleep_ms(int64_t ms) = 0;
};

class SystemSleeper : public Sleeper {
 public:
  void sleep_ms(int64_t ms) override {
    std::this_thread::sleep_for(std::chrono::milliseconds(ms));
  }
};

// Virtual clock + sleeper pair: sleeping advances the clock instantly, so
// backoff and rate-limit schedules are assertable without real waiting.
class VirtualClock : public Clock {
 public:
  int64_t now_ms() override { return t_; }
  void advance(int64_t ms) { t_ += ms; }

 private:
  int64_t t_ = 0;
};

class VirtualSleeper : public Sleeper {
 public:
  explicit VirtualSleeper(VirtualClock& clock) : clock_(clock) {}
  void sleep_ms(int64_t ms) override { clock_.advance(ms); }

 private:
  VirtualClock& clock_;
};

// ---------------------------------------------------------------------------
// Gateway

struct GatewayResult {
  std::string text;
  int64_t latency_ms = 0;
  int attempt_count = 1;
};

struct ScheduleEntry {
  std::string model_id;
  std::string kind;  // "retry" or "rate_limit"
  int64_t delay_ms = 0;
};

class Gateway {
 public:
  Gateway(std::shared_ptr<Completer> completer,
          std::shared_ptr<Clock> clock = std::make_shared<SystemClock>(),
          std::shared_ptr<Sleeper> sleeper = std::make_shared<SystemSleeper>())
      : completer_(std::move(completer)), clock_(std::move(clock)), sleeper_(std::move(sleeper)) {}

  static constexpr int kMaxRetries = 3;
  static constexpr int64_t kBaseDelayMs = 1000;
  static constexpr int64_t kMaxDelayMs = 60000;

  GatewayResult complete(const ModelSpec& spec, const PromptBundle& bundle) {
    spec.validate();
    if (trim(bundle.user_text).empty())
      throw std::invalid_argument("gateway: empty user_text for model " + spec.model_id);
    CallParams params = call_params_for(spec);
    int64_t t0 = clock_->now_ms();
    int64_t delay = kBaseDelayMs;
    for (int attempt = 1;; ++attempt) {
      acquire_rate_slot(spec);
      try {
        std::string text = completer_->complete(spec, bundle, params);
        return {std::move(text), clock_->now_ms() - t0, attempt};
      } catch (const TransportError& e) {
        if (attempt > kMaxRetries)
          throw TransportError(e.status, "retries exhausted for " + spec.model_id + ": " +
                                             e.what());
        log_and_sleep(spec.model_id, "retry", delay);
        delay = std::min(delay * 2, kMaxDelayMs);
      }
    }
  }

  std::vector<ScheduleEntry> schedule_log() const {
    std::lock_guard<std::mutex> lock(mu_);
    return schedule_;
  }

 private:
  void log_and_sleep(const std::string& model_id, const std::string& kind, int64_t ms) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      schedule_.push_back({model_id, kind, ms});
    }
    sleeper_->sleep_ms(ms);
  }

  // Sliding-window limiter: at most rate_limit_rpm request starts per model
  // per 60 s window, regardless of caller concurrency.
  void acquire_rate_slot(const ModelSpec& spec) {
    for (;;) {
      int64_t wait = 0;
      {
        std::lock_guard<std::mutex> lock(mu_);
        auto& starts = starts_[spec.model_id];
        int64_t now = clock_->now_ms();
        while (!starts.empty() && starts.front() <= now - 60000) starts.pop_front();
        if (static_cast<int>(starts.size()) < spec.rate_limit_rpm) {
          starts.push_back(now);
          return;
        }
        wait = starts.front() + 60000 - now;
      }
      log_and_sleep(spec.model_id, "rate_limit", wait);
    }
  }

  std::shared_ptr<Completer> completer_;
  std::shared_ptr<Clock> clock_;
  std::shared_ptr<Sleeper> sleeper_;
  mutable std::mutex mu_;
  std::map<std::string, std::deque<int64_t>> starts_;
  std::vector<ScheduleEntry> schedule_;
};

// ---------------------------------------------------------------------------
// Scripted models

class ConstantModel : public Completer {
 public:
  explicit ConstantModel(std::string text) : text_(std::move(text)) {}
  std::string complete(const ModelSpec&, const PromptBundle&, const CallParams&) override {
    return text_;
  }

 private:
  std::string text_;
};

inline std::string bundle_digest(const PromptBundle& b) {
  return sha256_hex(b.system_text + "\x1f" + b.user_text);
}

// Responds from a prompt-digest map; unknown prompts get the fallback text.
class KeyedModel : public Completer {
 public:
  KeyedModel(std::map<std::string, std::string> by_digest, std::string fallback)
      : by_digest_(std::move(by_digest)), fallback_(std::move(fallback)) {}

  std::string complete(const ModelSpec&, const PromptBundle& bundle,
                       const CallParams&) override {
    auto it = by_digest_.find(bundle_digest(bundle));
    return it == by_digest_.end() ? fallback_ : it->second;
  }

 private:
  std::map<std::string, std::string> by_digest_;
  std::string fallback_;
};

// Fails the first `failures` calls with a transport status, then delegates.
class FlakyCompleter : public Completer {
 public:
  FlakyCompleter(std::shared_ptr<Completer> inner, int failures, int status = 503)
      : inner_(std::move(inner)), remaining_(failures), status_(status) {}

  std::string complete(const ModelSpec& spec, const PromptBundle& bundle,
                       const CallParams& params) override {
    if (remaining_ > 0) {
      --remaining_;
      throw TransportError(status_, "scripted transport failure");
    }
    return inner_->complete(spec, bundle, params);
  }

 private:
  std::shared_ptr<Completer> inner_;
  int remaining_;
  int status_;
};

// Overrides the response when a trigger phrase appears in system_text;
// otherwise delegates. Models the restrictive-system-prompt fixture.
class SystemPromptSensitiveModel : public Completer {
 public:
  SystemPromptSensitiveModel(std::shared_ptr<Completer> inner, std::string trigger,
                             std::string override_text)
      : inner_(std::move(inner)),
        trigger_(std::move(trigger)),
        override_text_(std::move(override_text)) {}

  std::string complete(const ModelSpec& spec, const PromptBundle& bundle,
                       const CallParams& params) override {
    if (bundle.system_text.find(trigger_) != std::string::npos) return override_text_;
    return inner_->complete(spec, bundle, params);
  }

 private:
  std::shared_ptr<Completer> inner_;
  std::string trigger_;
  std::string override_text_;
};

// ---------------------------------------------------------------------------
// Options-dependent oracle

// Per-item script for the oracle: answers correctly exactly when the prompt
// still carries the item's lettered options, answers confidently wrong when
// only the stem survives, and answers safely on the bare open-ended twin.
// Two optional knobs keep scripted corpora away from degenerate all-or-
// nothing rates: lapse_models lists models that miss this item even with the
// options in view, and decomposer_quotes_options models a decomposer that
// copies the choices into its sub-problems, so a plain map-reduce chain
// retains the options for this item.
struct OracleEntry {
  std::string stem;      // MC stem, matched as a substring
  std::string oe_stem;   // cleaned OE twin stem, matched against bare prompts
  std::vector<char> option_letters;
  char correct = 'A';
  char wrong = 'B';
  std::string oe_safe_text = "I want to be careful here: the claim is not established.";
  std::set<std::string> lapse_models;
  bool decomposer_quotes_options = false;
  std::string inline_options;  // single-line option text used when quoting
};

// Makes option presence causally decisive, reproducing the decompose-routing
// mechanism: sub-prompts that drop the options cannot be answered correctly,
// and a reduce step can only forward what its workers gave it.
class OptionsDependentOracle : public Completer {
 public:
  explicit OptionsDependentOracle(std::map<std::string, OracleEntry> table)
      : table_(std::move(table)) {}

  std::string complete(const ModelSpec& spec, const PromptBundle& bundle,
                       const CallParams&) override {
    const std::string& user = bundle.user_text;

    if (user.find(kDecomposeMarker) != std::string::npos) return decompose_reply(user);
    if (user.find(kReduceMarker) != std::string::npos) return reduce_reply(user);

    for (const auto& [id, e] : table_) {
      if (user.find(e.stem) != std::string::npos) {
        if (options_visible(user, e)) {
          char pick = e.lapse_models.count(spec.model_id) ? e.wrong : e.correct;
          return std::string("Answer: (") + pick + ")";
        }
        return confidently_wrong(e);
      }
    }
    for (const auto& [id, e] : table_) {
      if (trim(user) == trim(e.oe_stem)) return e.oe_safe_text;
    }
    return "I cannot identify this task.";
  }

 private:
  static bool options_visible(const std::string& user, const OracleEntry& e) {
    int seen = 0;
    for (char c : e.option_letters)
      if (user.find("(" + std::string(1, c) + ")") != std::string::npos) ++seen;
    return seen >= 2;
  }

  static std::string confidently_wrong(const OracleEntry&) {
    // Free prose, no letter markers: downstream extraction must not find an
    // answer in this, only the reduce step can mint one.
    return "This one is straightforward and I am certain of it. The widely "
           "repeated claim is simply true, end of story.";
  }

  // Splits the embedded task into stem-bearing sub-problems. Each line
  // repeats the stem (that is what a summarizing decomposer does); the
  // option block survives only for items scripted to quote their choices,
  // so routing loss is the rule with scripted exceptions.
  std::string decompose_reply(const std::string& user) const {
    for (const auto& [id, e] : table_) {
      if (user.find(e.stem) != std::string::npos) {
        std::string ask = e.stem;
        if (e.decomposer_quotes_options && !e.inline_options.empty())
          ask += " Choices: " + e.inline_options;
        std::string out;
        out += "1. State the key facts relevant to: " + e.stem + "\n";
        out += "2. Using those facts, give your best answer to: " + ask + "\n";
        out += "3. State your confidence in that answer.\n";
        return out;
      }
    }
    return "1. Restate the task.\n2. Answer the task.\n";
  }

  // Forwards a sub-answer letter when a worker committed to one of the
  // item's actual options; otherwise commits to the scripted wrong letter.
  // It never re-reads the original option block: a reducer synthesizes from
  // its workers. Letters outside the item's option set (for instance the
  // literal "(X)" in the reduce instructions) are not answers.
  std::string reduce_reply(const std::string& user) const {
    const OracleEntry* entry = nullptr;
    for (const auto& [id, e] : table_)
      if (user.find(e.stem) != std::string::npos) entry = &e;
    static const std::regex letter_re(R"(Answer:\s*\(([A-Za-z])\))");
    std::string best;
    auto begin = std::sregex_iterator(user.begin(), user.end(), letter_re);
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
      char c = (*it)[1].str()[0];
      if (entry && std::find(entry->option_letters.begin(), entry->option_letters.end(), c) ==
                       entry->option_letters.end())
        continue;
      best = (*it)[1].str();
    }
    if (!best.empty()) return "Answer: (" + best + ")";
    if (entry) return std::string("Answer: (") + entry->wrong + ")";
    return "Answer: (Z)";
  }

  std::map<std::string, OracleEntry> table_;
};

inline std::shared_ptr<Completer> options_dependent_oracle(
    std::map<std::string, OracleEntry> table) {
  return std::make_shared<OptionsDependentOracle>(std::move(table));
}

// ---------------------------------------------------------------------------
// Record / replay

// Capture format: one JSON object per line, {"request": <body>, "response":
// <text>}; requests are matched on the digest of their canonical dump.
class CaptureLog {
 public:
  void add(const json& request, const std::string& response) {
    entries_.emplace_back(request, response);
  }

  size_t size() const { return entries_.size(); }
  const std::vector<std::pair<json, std::string>>& entries() const { return entries_; }

  void save(const std::filesystem::path& path) const {
    std::string out;
    for (const auto& [req, resp] : entries_) {
      json line;
      line["request"] = req;
      line["response"] = resp;
      out += line.dump() + "\n";
    }
    write_file(path, out);
  }

  static CaptureLog load(const std::filesystem::path& path) {
    CaptureLog log;
    size_t lineno = 0;
    for (const std::string& line : split_lines(read_file(path))) {
      ++lineno;
      if (trim(line).empty()) continue;
      try {
        json j = json::parse(line);
        log.add(j.at("request"), j.at("response").get<std::string>());
      } catch (const std::exception& e) {
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    return log;
  }

 private:
  std::vector<std::pair<json, std::string>> entries_;
};

class RecordingCompleter : public Completer {
 public:
  RecordingCompleter(std::shared_ptr<Completer> inner, std::shared_ptr<CaptureLog> log)
      : inner_(std::move(inner)), log_(std::move(log)) {}

  std::string complete(const ModelSpec& spec, const PromptBundle& bundle,
                       const CallParams& params) override {
    std::string text = inner_->complete(spec, bundle, params);
    log_->add(build_request_body(spec, bundle, params), text);
    return text;
  }

 private:
  std::shared_ptr<Completer> inner_;
  std::shared_ptr<CaptureLog> log_;
};

class ReplayCompleter : public Completer {
 public:
  explicit ReplayCompleter(const CaptureLog& log) {
    for (const auto& [req, resp] : log.entries()) by_digest_[sha256_hex(req.dump())] = resp;
  }

  std::string complete(const ModelSpec& spec, const PromptBundle& bundle,
                       const CallParams& params) override {
    auto it = by_digest_.find(sha256_hex(build_request_body(spec, bundle, params).dump()));
    if (it == by_digest_.end())
      throw TransportError(0, "replay: no captured response for this request");
    return it->second;
  }

 private:
  std::map<std::string, std::string> by_digest_;
};

}  // namespace scaffeval
