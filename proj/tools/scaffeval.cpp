// Command-line front end. All logic lives in the headers; this file parses
// arguments, applies flag overrides to the loaded config, and maps errors
// onto the exit-code contract (0 ok, 2 config/input error, 3 digest
// mismatch, 4 run finished with recorded errors).

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "scaffeval/pipeline.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string ledger;
  std::string out;
  uint64_t seed = 0;
  bool seed_set = false;
  std::string mode;
  int concurrency = 0;
  std::string scoring;
};

scaffeval::RunConfig load_with_overrides(const CommonFlags& f) {
  scaffeval::RunConfig cfg = scaffeval::RunConfig::load(f.config_path);
  if (f.seed_set) cfg.seed = f.seed;
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (!f.mode.empty()) cfg.mode = f.mode;
  if (f.concurrency > 0) cfg.concurrency = f.concurrency;
  if (!f.scoring.empty()) cfg.scoring = f.scoring;
  if (cfg.mode != "live" && cfg.mode != "scripted")
    throw scaffeval::ConfigurationError("mode must be 'live' or 'scripted'");
  if (cfg.scoring != "itt" && cfg.scoring != "pp" && cfg.scoring != "both")
    throw scaffeval::ConfigurationError("scoring must be 'itt', 'pp', or 'both'");
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scaffold-aware safety evaluation harness"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string map_path, verdicts_path, blinded_path, judge_path, sealed_at;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* opt = cmd->add_option("--config", flags.config_path, "run configuration JSON");
    if (needs_config) opt->required();
    cmd->add_option("--seed", flags.seed, "override the configured seed")
        ->each([&](const std::string&) { flags.seed_set = true; });
    cmd->add_option("--out", flags.out, "output directory or file");
  };

  auto* run = app.add_subcommand("run", "execute the factorial design, resuming past work");
  add_common(run, true);
  run->add_option("--mode", flags.mode, "live or scripted");
  run->add_option("--concurrency", flags.concurrency, "parallel live calls");

  auto* blind = app.add_subcommand("blind", "seal condition metadata and emit blinded records");
  add_common(blind, true);
  blind->add_option("--ledger", flags.ledger, "run ledger to blind")->required();
  blind->add_option("--sealed-at", sealed_at, "timestamp override for reproducible seals");

  auto* score = app.add_subcommand("score", "score blinded records");
  add_common(score, true);
  score->add_option("--blinded", blinded_path, "blinded records file")->required();
  score->add_option("--judge", judge_path, "external judge verdicts (uuid -> verdict JSONL)");

  auto* unblind = app.add_subcommand("unblind", "verify the sealed map and join verdicts");
  unblind->add_option("--map", map_path, "sealed map JSON")->required();
  unblind->add_option("--verdicts", verdicts_path, "verdicts JSONL from score")->required();
  unblind->add_option("--ledger", flags.ledger, "raw run ledger")->required();
  unblind->add_option("--out", flags.out, "labeled ledger output path")->required();

  auto* analyze = app.add_subcommand("analyze", "write the analysis bundle");
  add_common(analyze, true);
  analyze->add_option("--ledger", flags.ledger, "labeled ledger")->required();
  analyze->add_option("--scoring", flags.scoring, "itt, pp, or both");

  auto* scorecard = app.add_subcommand("scorecard", "per-model benchmark x config scorecard");
  add_common(scorecard, true);
  scorecard->add_option("--ledger", flags.ledger, "labeled ledger")->required();
  scorecard->add_option("--scoring", flags.scoring, "itt, pp, or both");
  scorecard->add_option("--map", map_path, "sealed map JSON for the methodology stamp");

  auto* trace = app.add_subcommand("trace", "instruction/option propagation report");
  trace->add_option("--ledger", flags.ledger, "run ledger")->required();
  trace->add_option("--out", flags.out, "report output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) {
      scaffeval::RunConfig cfg = load_with_overrides(flags);
      scaffeval::RunOutcome outcome = scaffeval::cmd_run(cfg);
      std::cout << "ledger: " << outcome.ledger_path << "\n"
                << "completed: " << outcome.n_completed << " resumed: " << outcome.n_resumed
                << " errors: " << outcome.n_errors << "\n";
      return outcome.exit_code;
    }
    if (blind->parsed()) {
      scaffeval::RunConfig cfg = load_with_overrides(flags);
      std::string out_dir = flags.out.empty() ? cfg.out_dir : flags.out;
      std::string digest;
      int code = scaffeval::cmd_blind(cfg, flags.ledger, out_dir, cfg.seed, sealed_at, &digest);
      std::cout << "sealed map digest: " << digest << "\n";
      return code;
    }
    if (score->parsed()) {
      scaffeval::RunConfig cfg = load_with_overrides(flags);
      std::string out = flags.out.empty()
                            ? (std::filesystem::path(cfg.out_dir) / "verdicts.jsonl").string()
                            : flags.out;
      return scaffeval::cmd_score(cfg, blinded_path, out, judge_path);
    }
    if (unblind->parsed()) {
      int code = scaffeval::cmd_unblind(map_path, verdicts_path, flags.ledger, flags.out);
      if (code == 3) std::cerr << "sealed map digest mismatch: refusing to unblind\n";
      return code;
    }
    if (analyze->parsed()) {
      scaffeval::RunConfig cfg = load_with_overrides(flags);
      std::string out_dir = flags.out.empty() ? cfg.out_dir : flags.out;
      return scaffeval::cmd_analyze(cfg, flags.ledger, out_dir, cfg.seed, cfg.scoring);
    }
    if (scorecard->parsed()) {
      scaffeval::RunConfig cfg = load_with_overrides(flags);
      std::string out = flags.out.empty()
                            ? (std::filesystem::path(cfg.out_dir) / "scorecard.json").string()
                            : flags.out;
      return scaffeval::cmd_scorecard(cfg, flags.ledger, out, cfg.scoring, map_path);
    }
    if (trace->parsed()) {
      return scaffeval::cmd_trace(flags.ledger, flags.out);
    }
  } catch (const scaffeval::ConfigurationError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
