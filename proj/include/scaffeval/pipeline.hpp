#pragma once

// Command implementations behind the CLI: factorial run with resume,
// blinding, blinded scoring, unblinding, the analysis bundle, scorecards,
// and propagation tracing. Each command is a function returning a process
// exit code so the CLI shim stays thin and tests can drive commands
// in-process.
//
// Exit code contract: 0 success, 2 configuration or input problem,
// 3 sealed-map digest mismatch, 4 run completed with recorded errors.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "scaffeval/analysis.hpp"
#include "scaffeval/benchio.hpp"
#include "scaffeval/domain.hpp"
#include "scaffeval/httpgw.hpp"
#include "scaffeval/modelgw.hpp"
#include "scaffeval/scaffolds.hpp"
#include "scaffeval/scoring.hpp"
#include "scaffeval/stats/anova.hpp"

namespace scaffeval {

struct RunConfig {
  std::vector<ModelSpec> models;
  std::vector<ConfigKind> configs;
  std::vector<std::pair<BenchmarkKind, std::string>> benchmarks;
  uint64_t seed = 42;
  int concurrency = 1;
  std::string out_dir = "out";
  std::string mode = "scripted";  // "live" or "scripted"
  std::string fixture;            // replay log for scripted mode
  std::string scoring = "both";   // "itt", "pp", or "both"
  std::string prompts_dir;        // optional template override directory
  std::string base_dir;           // directory of the config file, for relative paths

  std::string resolve(const std::string& path) const {
    if (path.empty() || std::filesystem::path(path).is_absolute() || base_dir.empty())
      return path;
    return (std::filesystem::path(base_dir) / path).string();
  }

  TemplateSet templates() const {
    if (prompts_dir.empty()) return TemplateSet::defaults();
    return TemplateSet::load_dir(resolve(prompts_dir));
  }

  static RunConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigurationError("cannot open config file: " + path);
    json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      throw ConfigurationError("config parse error in " + path + ": " + e.what());
    }
    RunConfig cfg;
    cfg.base_dir = std::filesystem::path(path).parent_path().string();
    try {
      for (const auto& jm : j.at("models")) {
        ModelSpec m;
        m.model_id = jm.at("model_id").get<std::string>();
        m.endpoint = jm.value("endpoint", std::string("http://localhost:8000"));
        m.rate_limit_rpm = jm.value("rate_limit_rpm", 60);
        m.max_tokens = jm.value("max_tokens", 1024);
        m.supports_temperature = jm.value("supports_temperature", true);
        m.supports_seed = jm.value("supports_seed", true);
        m.validate();
        cfg.models.push_back(std::move(m));
      }
      for (const auto& jc : j.at("configs"))
        cfg.configs.push_back(ConfigKind::parse(jc.get<std::string>()));
      for (const auto& jb : j.at("benchmarks"))
        cfg.benchmarks.emplace_back(benchmark_kind_from(jb.at("kind").get<std::string>()),
                                    jb.at("path").get<std::string>());
      cfg.seed = j.value("seed", uint64_t{42});
      cfg.concurrency = j.value("concurrency", 1);
      cfg.out_dir = j.value("out", std::string("out"));
      cfg.mode = j.value("mode", std::string("scripted"));
      cfg.fixture = j.value("fixture", std::string());
      cfg.scoring = j.value("scoring", std::string("both"));
      cfg.prompts_dir = j.value("prompts_dir", std::string());
    } catch (const ConfigurationError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigurationError("config error in " + path + ": " + e.what());
    }
    if (cfg.models.empty()) throw ConfigurationError("config lists no models");
    if (cfg.configs.empty()) throw ConfigurationError("config lists no configurations");
    if (cfg.benchmarks.empty()) throw ConfigurationError("config lists no benchmarks");
    if (cfg.mode != "live" && cfg.mode != "scripted")
      throw ConfigurationError("mode must be 'live' or 'scripted', got '" + cfg.mode + "'");
    if (cfg.mode == "scripted" && cfg.fixture.empty())
      throw ConfigurationError("scripted mode requires a 'fixture' replay log");
    if (cfg.scoring != "itt" && cfg.scoring != "pp" && cfg.scoring != "both")
      throw ConfigurationError("scoring must be 'itt', 'pp', or 'both'");
    if (cfg.concurrency < 1) throw ConfigurationError("concurrency must be >= 1");
    return cfg;
  }
};

// Loads every benchmark file named in the config; item ids must be unique
// across benchmarks because they key the run ledger.
inline std::map<std::string, BenchmarkItem> load_all_items(const RunConfig& cfg) {
  std::map<std::string, BenchmarkItem> items;
  for (const auto& [kind, path] : cfg.benchmarks) {
    ItemSet set = load_items(cfg.resolve(path), kind);
    for (auto& item : set.items) {
      if (items.count(item.item_id))
        throw ConfigurationError("duplicate item id across benchmarks: " + item.item_id);
      items[item.item_id] = std::move(item);
    }
  }
  return items;
}

inline std::string ledger_path_for(const RunConfig& cfg) {
  return (std::filesystem::path(cfg.out_dir) / "ledger.jsonl").string();
}

// ---------------------------------------------------------------------------
// run

struct RunOutcome {
  int exit_code = 0;
  size_t n_completed = 0;
  size_t n_resumed = 0;
  size_t n_errors = 0;
  std::string ledger_path;
};

inline RunOutcome cmd_run(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  auto items = load_all_items(cfg);
  TemplateSet templates = cfg.templates();

  // Scripted runs use a virtual clock so latencies, and therefore ledger
  // bytes, are identical across reruns.
  std::shared_ptr<Completer> completer;
  std::shared_ptr<Clock> clock;
  std::shared_ptr<Sleeper> sleeper;
  if (cfg.mode == "scripted") {
    CaptureLog replay_log = CaptureLog::load(cfg.resolve(cfg.fixture));
    completer = std::make_shared<ReplayCompleter>(replay_log);
    auto vclock = std::make_shared<VirtualClock>();
    sleeper = std::make_shared<VirtualSleeper>(*vclock);
    clock = vclock;
  } else {
    completer = std::make_shared<HttpCompleter>();
    clock = std::make_shared<SystemClock>();
    sleeper = std::make_shared<SystemSleeper>();
  }
  Gateway gateway(completer, clock, sleeper);
  ScaffoldRunner runner(gateway, templates);

  RunOutcome outcome;
  outcome.ledger_path = ledger_path_for(cfg);
  RunLedger ledger(outcome.ledger_path);

  struct WorkItem {
    const BenchmarkItem* item;
    const ModelSpec* model;
    ConfigKind config;
  };
  std::vector<WorkItem> work;
  for (const auto& [id, item] : items)
    for (const auto& model : cfg.models)
      for (const auto& config : cfg.configs) {
        Observation probe;
        probe.item_id = id;
        probe.model_id = model.model_id;
        probe.config = config;
        probe.format = item.format;
        probe.context_condition = ContextCondition::short_context;
        if (ledger.contains_key(probe.key())) {
          ++outcome.n_resumed;
          continue;
        }
        work.push_back(WorkItem{&item, &model, config});
      }

  auto run_one = [&](const WorkItem& w) {
    Observation o;
    o.item_id = w.item->item_id;
    o.model_id = w.model->model_id;
    o.config = w.config;
    o.format = w.item->format;
    o.context_condition = ContextCondition::short_context;
    o.seed = cfg.seed;
    auto started = clock->now_ms();
    try {
      ScaffoldResult res = runner.run_config(*w.model, *w.item, w.config);
      o.status = RunStatus::success;
      o.transcript = std::move(res.transcript);
      o.final_text = std::move(res.final_text);
    } catch (const std::exception& e) {
      o.status = RunStatus::error;
      o.transcript.config = w.config;
      o.transcript.item_id = w.item->item_id;
      SubCall sc;
      sc.role = SubCallRole::single;
      sc.bundle = render_prompt(*w.item, templates);
      sc.response = "";
      o.transcript.subcalls.push_back(std::move(sc));
      o.transcript.flags.insert("run_error");
      o.final_text = "";
      (void)e;
    }
    o.latency_ms = clock->now_ms() - started;
    return o;
  };

  if (cfg.concurrency <= 1 || cfg.mode == "scripted") {
    for (const auto& w : work) {
      Observation o = run_one(w);
      if (o.status == RunStatus::error) ++outcome.n_errors;
      ledger.append(o);
      ++outcome.n_completed;
    }
  } else {
    // Live mode worker pool; results land in work order so the ledger is
    // deterministic given identical responses.
    std::vector<Observation> results(work.size());
    std::atomic<size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= work.size()) return;
        results[i] = run_one(work[i]);
      }
    };
    std::vector<std::thread> pool;
    int n_threads = std::min<int>(cfg.concurrency, static_cast<int>(work.size()));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (auto& o : results) {
      if (o.status == RunStatus::error) ++outcome.n_errors;
      ledger.append(o);
      ++outcome.n_completed;
    }
  }

  // Run manifest: everything needed to audit what was executed.
  json manifest;
  manifest["seed"] = cfg.seed;
  manifest["mode"] = cfg.mode;
  manifest["prompt_version"] = kPromptVersion;
  manifest["template_digests"] = json::object();
  for (const auto& [name, digest] : templates.digests())
    manifest["template_digests"][name] = digest;
  manifest["models"] = json::array();
  for (const auto& m : cfg.models) manifest["models"].push_back(m.model_id);
  manifest["configs"] = json::array();
  for (const auto& c : cfg.configs) manifest["configs"].push_back(c.str());
  manifest["benchmarks"] = json::array();
  for (const auto& [kind, path] : cfg.benchmarks) {
    json jb;
    jb["kind"] = to_string(kind);
    jb["path"] = path;
    jb["source_digest"] = load_items(cfg.resolve(path), kind).source_digest;
    manifest["benchmarks"].push_back(jb);
  }
  manifest["n_items"] = items.size();
  manifest["n_observations_completed"] = outcome.n_completed;
  manifest["n_observations_resumed"] = outcome.n_resumed;
  manifest["n_errors"] = outcome.n_errors;
  manifest["answer_instruction"] = templates.get("mc_answer_instruction");
  write_manifest(outcome.ledger_path, manifest);

  outcome.exit_code = outcome.n_errors > 0 ? 4 : 0;
  return outcome;
}

// ---------------------------------------------------------------------------
// blind

inline int cmd_blind(const RunConfig& cfg, const std::string& ledger_path,
                     const std::string& out_dir, uint64_t seed,
                     const std::string& sealed_at_override, std::string* digest_out = nullptr) {
  std::filesystem::create_directories(out_dir);
  auto observations = RunLedger::read_all(ledger_path);
  auto items = load_all_items(cfg);
  std::string sealed_at = sealed_at_override.empty() ? iso8601_utc_now() : sealed_at_override;
  SealResult sealed = seal_blind_map(observations, items, seed, sealed_at);

  std::string blinded_path = (std::filesystem::path(out_dir) / "blinded_records.jsonl").string();
  std::string map_path = (std::filesystem::path(out_dir) / "sealed_map.json").string();
  save_blinded_records(blinded_path, sealed.blinded);
  write_file(map_path, sealed.map.to_json().dump(2) + "\n");

  json manifest;
  manifest["seed"] = seed;
  manifest["ledger_digest"] = ledger_digest(ledger_path);
  manifest["sealed_map_digest"] = sealed.map.digest();
  manifest["n_records"] = sealed.blinded.size();
  manifest["sealed_at"] = sealed_at;
  write_manifest(blinded_path, manifest);
  if (digest_out) *digest_out = sealed.map.digest();
  return 0;
}

// ---------------------------------------------------------------------------
// score (operates on blinded records only)

struct VerdictRecord {
  std::string uuid;
  ParseStatus parse_status = ParseStatus::parsed;
  std::optional<char> extracted_letter;
  SafetyLabel label = SafetyLabel::unsafe;  // intent-to-treat label
  bool excluded_pp = false;                 // true when PP drops this record
};

// External judgments for open-ended and refusal benchmarks: JSONL of
// {"uuid": ..., "verdict": ...}. MC records never consult the judge.
inline std::map<std::string, std::string> load_judge_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open judge file: " + path);
  std::map<std::string, std::string> verdicts;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      json j = json::parse(line);
      verdicts[j.at("uuid").get<std::string>()] = j.at("verdict").get<std::string>();
    } catch (const std::exception& e) {
      throw ConfigurationError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return verdicts;
}

inline int cmd_score(const RunConfig& cfg, const std::string& blinded_path,
                     const std::string& verdicts_out, const std::string& judge_file) {
  auto records = load_blinded_records(blinded_path);
  auto items = load_all_items(cfg);
  std::map<std::string, std::string> judge_map;
  if (!judge_file.empty()) judge_map = load_judge_file(judge_file);

  std::ofstream out(verdicts_out, std::ios::trunc);
  if (!out) throw ConfigurationError("cannot open verdicts output: " + verdicts_out);
  for (const auto& rec : records) {
    auto it = items.find(rec.item_id);
    if (it == items.end())
      throw ConfigurationError("blinded record references unknown item: " + rec.item_id);
    const BenchmarkItem& item = it->second;

    JudgeFn judge;
    if (judge_map.count(rec.uuid))
      judge = [&](const BenchmarkItem&, const std::string&) { return judge_map.at(rec.uuid); };

    // Blinded scoring cannot see run status; an empty sanitized text scores
    // as a parse failure for MC, which matches the intent-to-treat label a
    // transport error receives.
    ScoredResponse scored =
        score_response(item, rec.sanitized_text, RunStatus::success, ScoringMode::ITT, judge);

    json j;
    j["uuid"] = rec.uuid;
    j["parse_status"] = scored.parse_status == ParseStatus::parsed ? "parsed" : "parse_failure";
    if (scored.extracted_letter) j["extracted_letter"] = std::string(1, *scored.extracted_letter);
    j["label"] = scored.label == ScoreLabel::safe ? "safe" : "unsafe";
    out << j.dump() << "\n";
  }
  return 0;
}

inline std::map<std::string, VerdictRecord> load_verdicts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open verdicts file: " + path);
  std::map<std::string, VerdictRecord> verdicts;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      json j = json::parse(line);
      VerdictRecord v;
      v.uuid = j.at("uuid").get<std::string>();
      v.parse_status = j.at("parse_status").get<std::string>() == "parsed"
                           ? ParseStatus::parsed
                           : ParseStatus::parse_failure;
      if (j.count("extracted_letter"))
        v.extracted_letter = j["extracted_letter"].get<std::string>().at(0);
      v.label = safety_label_from(j.at("label").get<std::string>());
      verdicts[v.uuid] = std::move(v);
    } catch (const std::exception& e) {
      throw ConfigurationError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return verdicts;
}

// ---------------------------------------------------------------------------
// unblind

inline int cmd_unblind(const std::string& map_path, const std::string& verdicts_path,
                       const std::string& raw_ledger_path, const std::string& labeled_out) {
  json jmap = json::parse(read_file(map_path));
  SealedBlindMap map = SealedBlindMap::from_json(jmap);
  const std::map<std::string, SealedBlindMap::Entry>* entries = nullptr;
  try {
    entries = &map.unblind_all();
  } catch (const std::runtime_error&) {
    return 3;  // digest mismatch: tampered or corrupted map
  }
  auto verdicts = load_verdicts(verdicts_path);

  auto observations = RunLedger::read_all(raw_ledger_path);
  // Sealed entries carry (item, model, config); format and context live on
  // the stored observation, so join on that triple.
  std::map<std::string, std::vector<size_t>> obs_index;
  for (size_t i = 0; i < observations.size(); ++i) {
    const Observation& o = observations[i];
    obs_index[o.item_id + "\x1f" + o.model_id + "\x1f" + o.config.str()].push_back(i);
  }

  size_t joined = 0;
  for (const auto& [uuid, entry] : *entries) {
    auto vit = verdicts.find(uuid);
    if (vit == verdicts.end()) continue;
    auto oit = obs_index.find(entry.item_id + "\x1f" + entry.model_id + "\x1f" + entry.config);
    if (oit == obs_index.end() || oit->second.empty()) continue;
    size_t idx = oit->second.front();
    oit->second.erase(oit->second.begin());
    Observation& o = observations[idx];
    if (o.status == RunStatus::error) {
      o.safety_label = SafetyLabel::unsafe;
      o.extracted_letter.reset();
      o.parse_status.reset();
    } else {
      o.parse_status = vit->second.parse_status;
      o.extracted_letter = vit->second.extracted_letter;
      o.safety_label = vit->second.label;
    }
    ++joined;
  }
  if (joined < entries->size())
    throw ConfigurationError("unblind: " + std::to_string(entries->size() - joined) +
                             " sealed entries had no verdict or no ledger row");

  std::filesystem::create_directories(std::filesystem::path(labeled_out).parent_path().string().empty()
                                          ? "."
                                          : std::filesystem::path(labeled_out).parent_path().string());
  std::ofstream out(labeled_out, std::ios::trunc);
  if (!out) throw ConfigurationError("cannot open labeled ledger output: " + labeled_out);
  for (const auto& o : observations) out << to_json(o).dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// analyze

namespace detail {

inline json stamp_for(const std::string& ledger_path, uint64_t seed, const std::string& scoring) {
  json stamp;
  stamp["seed"] = seed;
  stamp["ledger_digest"] = ledger_digest(ledger_path);
  stamp["prompt_version"] = kPromptVersion;
  stamp["scoring"] = scoring;
  return stamp;
}

inline void put_finite(json& j, const std::string& key, double v) {
  if (std::isfinite(v)) j[key] = v;
}

inline json effect_table_json(const EffectTable& table) {
  json j;
  j["arms"] = json::array();
  for (const auto& a : table.arms) {
    json ja;
    ja["config"] = a.config;
    ja["n_arm"] = a.n_arm;
    ja["safe_arm"] = a.safe_arm;
    ja["n_direct"] = a.n_direct;
    ja["safe_direct"] = a.safe_direct;
    ja["rate_arm"] = a.rate_arm;
    ja["rate_direct"] = a.rate_direct;
    ja["risk_difference"] = a.metrics.risk_difference;
    ja["odds_ratio"] = a.metrics.odds_ratio;
    ja["risk_ratio"] = a.metrics.risk_ratio;
    ja["haldane_applied"] = a.metrics.haldane_applied;
    if (a.metrics.nnh) ja["nnh"] = *a.metrics.nnh;
    if (a.metrics.nnh_from_rounded_rd) ja["nnh_from_rounded_rd"] = *a.metrics.nnh_from_rounded_rd;
    ja["odds_ratio_regression"] = a.or_regression;
    ja["p_raw"] = a.p_raw;
    ja["p_holm"] = a.p_holm;
    ja["rd_ci90"] = {a.rd_ci.ci90.first, a.rd_ci.ci90.second};
    ja["rd_ci95"] = {a.rd_ci.ci95.first, a.rd_ci.ci95.second};
    ja["bootstrap_b"] = a.rd_ci.b;
    ja["bootstrap_redrawn"] = a.rd_ci.redrawn_replicates;
    ja["tost_equivalent_2pp"] = a.tost_equivalent_2pp;
    j["arms"].push_back(std::move(ja));
  }
  if (table.omnibus) {
    j["omnibus"] = json::object();
    j["omnibus"]["chi2"] = table.omnibus->chi2;
    j["omnibus"]["df"] = table.omnibus->df;
    j["omnibus"]["p"] = table.omnibus->p;
  }
  j["notes"] = table.notes;
  return j;
}

inline json interaction_json(const InteractionTest& t) {
  json j;
  if (t.computed) {
    j["chi2"] = t.wald.chi2;
    j["df"] = t.wald.df;
    j["p"] = t.wald.p;
    j["n_interaction_terms"] = t.n_interaction_terms;
  } else {
    j["note"] = t.note;
  }
  return j;
}

inline json dose_response_json(const DoseResponse& d) {
  json j;
  if (!d.computed) {
    j["note"] = d.note;
    return j;
  }
  if (d.trend.logit_computed) {
    j["logit_slope"] = d.trend.logit_slope;
    j["logit_z"] = d.trend.logit_z;
    j["logit_p_one_sided"] = d.trend.logit_p_one_sided;
  } else {
    j["logit_note"] = d.trend.logit_note;
  }
  j["jt_stat"] = d.trend.jt_stat;
  j["jt_z"] = d.trend.jt_z;
  j["jt_p_one_sided"] = d.trend.jt_p_one_sided;
  j["levels"] = json::array();
  for (size_t i = 0; i < d.level_configs.size(); ++i) {
    json jl;
    jl["config"] = d.level_configs[i];
    jl["safe_rate"] = d.level_rates[i];
    jl["isotonic_fit"] = d.isotonic_fit[i];
    j["levels"].push_back(std::move(jl));
  }
  return j;
}

inline json spec_curve_json(const SpecCurveResult& sc) {
  json j;
  j["specs"] = json::array();
  for (const auto& s : sc.specs) {
    json js;
    js["benchmark_subset"] = s.benchmark_subset;
    js["model_subset"] = s.model_subset;
    js["scoring"] = s.scoring;
    js["estimable"] = s.estimable;
    if (s.estimable) {
      js["odds_ratio"] = s.odds_ratio;
      js["p"] = s.p;
    } else {
      js["skip_reason"] = s.skip_reason;
    }
    j["specs"].push_back(std::move(js));
  }
  j["n_estimable"] = sc.n_estimable;
  if (sc.n_estimable > 0) {
    j["median_odds_ratio"] = sc.median_or;
    j["iqr"] = {sc.iqr_lo, sc.iqr_hi};
    j["frac_significant"] = sc.frac_significant;
    j["permutation_p"] = sc.permutation_p;
    j["n_permutations"] = sc.n_perm;
  }
  j["notes"] = sc.notes;
  return j;
}

inline json variance_json(const VarianceDecomposition& vd) {
  json j;
  j["n"] = vd.n;
  j["ss_total"] = vd.ss_total;
  j["sources"] = json::array();
  auto source_json = [](const VarianceSource& s) {
    json js;
    js["name"] = s.name;
    js["ss"] = s.ss;
    js["df"] = s.df;
    put_finite(js, "ms", s.ms);
    put_finite(js, "f", s.f);
    put_finite(js, "eta2", s.eta2);
    put_finite(js, "omega2", s.omega2);
    return js;
  };
  for (const auto& s : vd.sources) j["sources"].push_back(source_json(s));
  j["residual"] = source_json(vd.residual);
  return j;
}

inline json g_study_json(const GStudyResult& g) {
  json j;
  j["variance_components"] = json::object();
  j["variance_components"]["model"] = g.sigma2_p;
  j["variance_components"]["model_x_config"] = g.sigma2_pI;
  j["variance_components"]["model_x_benchmark"] = g.sigma2_pJ;
  j["variance_components"]["model_x_config_x_benchmark"] = g.sigma2_pIJe;
  j["raw_components"] = json::object();
  j["raw_components"]["model"] = g.raw_sigma2_p;
  j["raw_components"]["model_x_config"] = g.raw_sigma2_pI;
  j["raw_components"]["model_x_benchmark"] = g.raw_sigma2_pJ;
  j["raw_components"]["model_x_config_x_benchmark"] = g.raw_sigma2_pIJe;
  j["truncated"] = g.truncated;
  j["g_coefficient"] = g.g;
  j["g_ci95"] = {g.g_ci95.first, g.g_ci95.second};
  j["bootstrap_b"] = g.bootstrap_b;
  j["d_study"] = json::array();
  for (const auto& [ni, nj, gg] : g.d_study) {
    json jd;
    jd["n_configs"] = ni;
    jd["n_benchmarks"] = nj;
    jd["g"] = gg;
    j["d_study"].push_back(std::move(jd));
  }
  return j;
}

inline json flips_json(const std::vector<AnalysisRow>& rows) {
  json j = json::object();
  for (const std::string arm : {"react", "multi_agent", "map_reduce"}) {
    std::map<std::pair<std::string, std::string>, std::pair<std::optional<bool>, std::optional<bool>>>
        paired;
    for (const auto& r : rows) {
      if (r.config == "direct")
        paired[{r.case_id, r.model_id}].first = r.safe;
      else if (r.config == arm)
        paired[{r.case_id, r.model_id}].second = r.safe;
    }
    std::vector<FlipPair> pairs;
    int64_t b = 0, c = 0;  // direct-safe/arm-unsafe and direct-unsafe/arm-safe
    for (const auto& [key, labels] : paired) {
      if (!labels.first || !labels.second) continue;
      pairs.push_back(FlipPair{key.first, key.second, *labels.first, *labels.second});
      if (*labels.first && !*labels.second) ++b;
      if (!*labels.first && *labels.second) ++c;
    }
    json ja;
    if (pairs.empty()) {
      ja["note"] = "skipped: no paired direct/" + arm + " observations";
      j[arm] = std::move(ja);
      continue;
    }
    FlipAnalysis fa = difficulty_flip_analysis(pairs);
    ja["n_pairs"] = fa.n_pairs;
    ja["total_flip_rate"] = fa.total_flip_rate;
    ja["net_flip"] = fa.net_flip;
    McNemarResult mn = mcnemar(b, c);
    ja["mcnemar"] = json::object();
    ja["mcnemar"]["b_degraded"] = b;
    ja["mcnemar"]["c_improved"] = c;
    ja["mcnemar"]["method"] = mn.method;
    if (mn.statistic) ja["mcnemar"]["statistic"] = *mn.statistic;
    if (mn.p) ja["mcnemar"]["p"] = *mn.p;
    ja["quintiles"] = json::array();
    for (const auto& q : fa.quintiles) {
      json jq;
      jq["quintile"] = q.quintile;
      jq["n_items"] = q.n_items;
      jq["mean_baseline"] = q.mean_baseline;
      jq["mean_rd"] = q.mean_rd;
      ja["quintiles"].push_back(std::move(jq));
    }
    if (fa.spearman_rho_baseline_vs_rd)
      ja["spearman_rho_baseline_vs_rd"] = *fa.spearman_rho_baseline_vs_rd;
    j[arm] = std::move(ja);
  }
  return j;
}

}  // namespace detail

inline int cmd_analyze(const RunConfig& cfg, const std::string& labeled_ledger,
                       const std::string& out_dir, uint64_t seed, const std::string& scoring) {
  std::filesystem::create_directories(out_dir);
  auto observations = RunLedger::read_all(labeled_ledger);
  auto items = load_all_items(cfg);

  // Primary frame: short-context observations, errors retained so ITT
  // counts them as unsafe.
  std::vector<Observation> primary;
  for (const auto& o : observations)
    if (o.context_condition == ContextCondition::short_context) primary.push_back(o);
  if (primary.empty()) throw ConfigurationError("analyze: ledger has no short-context rows");
  std::vector<AnalysisRow> rows = rows_from_observations(primary, items);

  std::vector<std::string> modes;
  if (scoring == "both") {
    modes = {"itt", "pp"};
  } else {
    modes = {scoring};
  }

  auto write_json = [&](const std::string& name, json body, const std::string& mode) {
    body["stamp"] = detail::stamp_for(labeled_ledger, seed, mode);
    write_file((std::filesystem::path(out_dir) / name).string(), body.dump(2) + "\n");
  };

  std::vector<std::string> written;
  for (const auto& mode : modes) {
    std::vector<AnalysisRow> view = mode == "pp" ? pp_view(rows) : rows;
    std::string suffix = "_" + mode + ".json";

    EffectTable effects =
        effect_table(view, {"react", "multi_agent", "map_reduce"}, seed);
    write_json("effects" + suffix, detail::effect_table_json(effects), mode);
    written.push_back("effects" + suffix);

    json inter;
    inter["config_by_model"] =
        detail::interaction_json(interaction_wald(view, Interaction::config_by_model));
    inter["config_by_benchmark"] =
        detail::interaction_json(interaction_wald(view, Interaction::config_by_benchmark));
    write_json("interactions" + suffix, inter, mode);
    written.push_back("interactions" + suffix);

    write_json("dose_response" + suffix, detail::dose_response_json(dose_response(view)), mode);
    written.push_back("dose_response" + suffix);

    json vdj;
    try {
      std::map<std::tuple<std::string, std::string, std::string>, std::pair<int64_t, int64_t>>
          cell_map;
      for (const auto& r : view) {
        auto& cell = cell_map[{r.model_id, r.config, r.benchmark}];
        cell.first += 1;
        cell.second += r.safe ? 1 : 0;
      }
      std::vector<CellCount> cells;
      for (const auto& [key, nc] : cell_map)
        cells.push_back(CellCount{std::get<0>(key), std::get<1>(key), std::get<2>(key), nc.first,
                                  nc.second});
      vdj = detail::variance_json(variance_decomposition(cells));
    } catch (const std::exception& e) {
      vdj["note"] = std::string("skipped: ") + e.what();
    }
    write_json("variance_decomposition" + suffix, vdj, mode);
    written.push_back("variance_decomposition" + suffix);

    json gj;
    try {
      std::map<std::tuple<std::string, std::string, std::string>, std::pair<int64_t, int64_t>>
          cell_map;
      for (const auto& r : view) {
        auto& cell = cell_map[{r.model_id, r.config, r.benchmark}];
        cell.first += 1;
        cell.second += r.safe ? 1 : 0;
      }
      std::vector<GCell> gcells;
      for (const auto& [key, nc] : cell_map)
        gcells.push_back(GCell{std::get<0>(key), std::get<1>(key), std::get<2>(key),
                               static_cast<double>(nc.second) / nc.first});
      gj = detail::g_study_json(g_study(gcells, 10000, seed));
    } catch (const std::exception& e) {
      gj["note"] = std::string("skipped: ") + e.what();
    }
    write_json("g_study" + suffix, gj, mode);
    written.push_back("g_study" + suffix);

    write_json("flips" + suffix, detail::flips_json(view), mode);
    written.push_back("flips" + suffix);
  }

  // Mode-spanning outputs.
  json ittpp;
  try {
    ittpp = itt_pp_rates(primary).to_json();
  } catch (const std::exception& e) {
    ittpp["note"] = std::string("skipped: ") + e.what();
  }
  write_json("itt_pp.json", ittpp, "both");
  written.push_back("itt_pp.json");

  write_json("spec_curve.json", detail::spec_curve_json(spec_curve(rows, 200, seed)), "both");
  written.push_back("spec_curve.json");

  json index;
  index["analyses"] = written;
  write_json("analysis_manifest.json", index, scoring);
  return 0;
}

// ---------------------------------------------------------------------------
// scorecard

inline int cmd_scorecard(const RunConfig& cfg, const std::string& labeled_ledger,
                         const std::string& out_path, const std::string& scoring,
                         const std::string& sealed_map_path) {
  auto observations = RunLedger::read_all(labeled_ledger);
  auto items = load_all_items(cfg);
  std::vector<Observation> primary;
  for (const auto& o : observations)
    if (o.context_condition == ContextCondition::short_context) primary.push_back(o);
  std::vector<AnalysisRow> rows = rows_from_observations(primary, items);

  std::vector<std::string> modes;
  if (scoring == "both") {
    modes = {"itt", "pp"};
  } else {
    modes = {scoring};
  }

  json card;
  card["stamp"] = detail::stamp_for(labeled_ledger, cfg.seed, scoring);
  if (!sealed_map_path.empty()) {
    json jmap = json::parse(read_file(sealed_map_path));
    card["stamp"]["sealed_map_digest"] = jmap.at("digest").get<std::string>();
  }
  card["stamp"]["extraction_grammar"] =
      "explicit answer declaration, then parenthesized letter, then bare final-line letter";

  for (const auto& mode : modes) {
    std::vector<AnalysisRow> view = mode == "pp" ? pp_view(rows) : rows;
    json jm = json::object();
    std::set<std::string> model_set;
    for (const auto& r : view) model_set.insert(r.model_id);

    json models_json = json::array();
    for (const auto& model : model_set) {
      json entry;
      entry["model_id"] = model;
      std::map<std::pair<std::string, std::string>, std::pair<int64_t, int64_t>> matrix;
      std::map<std::string, std::pair<int64_t, int64_t>> per_config;
      for (const auto& r : view) {
        if (r.model_id != model) continue;
        auto& cell = matrix[{r.benchmark, r.config}];
        cell.first += 1;
        cell.second += r.safe ? 1 : 0;
        auto& pc = per_config[r.config];
        pc.first += 1;
        pc.second += r.safe ? 1 : 0;
      }
      entry["matrix"] = json::array();
      for (const auto& [key, nc] : matrix) {
        json cell;
        cell["benchmark"] = key.first;
        cell["config"] = key.second;
        cell["n"] = nc.first;
        cell["safe_rate"] = static_cast<double>(nc.second) / nc.first;
        entry["matrix"].push_back(std::move(cell));
      }
      entry["per_config"] = json::array();
      std::optional<std::pair<int64_t, int64_t>> direct_counts;
      if (per_config.count("direct")) direct_counts = per_config["direct"];
      for (const auto& [config, nc] : per_config) {
        json pc;
        pc["config"] = config;
        pc["n"] = nc.first;
        pc["safe"] = nc.second;
        double rate = static_cast<double>(nc.second) / nc.first;
        pc["safe_rate"] = rate;
        if (direct_counts && config != "direct") {
          double rd = rate - static_cast<double>(direct_counts->second) / direct_counts->first;
          pc["rd_vs_direct"] = rd;
          // one shared NNH convention: the integer-exact inversion in
          // effect_metrics, so the rollup never disagrees with the effect
          // table over a ceil at an integer boundary
          auto em = effect_metrics(nc.second, nc.first - nc.second, direct_counts->second,
                                   direct_counts->first - direct_counts->second);
          if (rd < 0.0 && em.nnh) pc["nnh"] = *em.nnh;
        }
        entry["per_config"].push_back(std::move(pc));
      }
      models_json.push_back(std::move(entry));
    }
    jm["models"] = std::move(models_json);
    card[mode] = std::move(jm);
  }

  auto parent = std::filesystem::path(out_path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  write_file(out_path, card.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// trace

inline int cmd_trace(const std::string& ledger_path, const std::string& out_path) {
  auto observations = RunLedger::read_all(ledger_path);
  if (observations.empty()) throw ConfigurationError("trace: ledger is empty");
  std::map<std::string, std::vector<Transcript>> by_config;
  std::vector<Transcript> all;
  for (const auto& o : observations) {
    by_config[o.config.str()].push_back(o.transcript);
    all.push_back(o.transcript);
  }
  json j;
  j["overall"] = trace_propagation(all).to_json();
  j["by_config"] = json::object();
  for (const auto& [config, transcripts] : by_config)
    j["by_config"][config] = trace_propagation(transcripts).to_json();
  j["ledger_digest"] = ledger_digest(ledger_path);

  auto parent = std::filesystem::path(out_path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  write_file(out_path, j.dump(2) + "\n");
  return 0;
}

}  // namespace scaffeval
