#pragma once

// Synthetic labeled ledgers with known ground truth. Used to exercise the
// full analysis path end to end: a case-level random intercept induces
// cluster correlation, per-configuration intercepts are calibrated by
// bisection so the marginal safe rates hit requested targets, and safe
// counts are allocated by quota within each (case, configuration) cell so
// realized rates sit within a fraction of a point of the targets even in a
// single draw. Parse failures are injected among unsafe outcomes only,
// which leaves intent-to-treat rates untouched while making per-protocol
// rates diverge.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "scaffeval/domain.hpp"

namespace scaffeval {

struct SyntheticDesign {
  int n_cases = 2617;
  std::vector<std::string> models = {"model-alpha", "model-bravo",  "model-charlie",
                                     "model-delta", "model-echo",   "model-foxtrot"};
  // Marginal safe-rate targets per configuration (intent-to-treat).
  std::vector<std::pair<std::string, double>> config_rates = {
      {"direct", 0.728}, {"react", 0.721}, {"multi_agent", 0.722}, {"map_reduce", 0.655}};
  // Unconditional parse-failure probability per configuration.
  std::map<std::string, double> parse_failure_rates = {
      {"direct", 0.005}, {"react", 0.01}, {"multi_agent", 0.01}, {"map_reduce", 0.03}};
  // Case-effect spread on the logit scale; 0.71 puts the case ICC near 0.1
  // for rates around 0.7.
  double sigma_u = 0.71;
  std::vector<BenchmarkKind> benchmarks = {BenchmarkKind::truthfulqa, BenchmarkKind::bbq,
                                           BenchmarkKind::sycophancy,
                                           BenchmarkKind::xstest_orbench};
  uint64_t seed = 7;
};

namespace detail {

inline double sigmoid_s(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Solves mean_l sigmoid(a + u_l) = target over the realized case effects.
inline double calibrate_intercept(const std::vector<double>& u, double target) {
  double lo = -12.0, hi = 12.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    double mean = 0.0;
    for (double ul : u) mean += sigmoid_s(mid + ul);
    mean /= static_cast<double>(u.size());
    (mean < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

// Generates one scored observation per (case, model, configuration) cell.
// All observations are short-context successes; injected parse failures
// carry an unsafe label (intent-to-treat semantics) and no extracted letter.
inline std::vector<Observation> synthetic_observations(const SyntheticDesign& design) {
  if (design.n_cases < 1 || design.models.empty() || design.config_rates.empty())
    throw std::invalid_argument("synthetic_observations: empty design");

  auto rng = make_rng(design.seed);
  std::normal_distribution<double> gauss(0.0, design.sigma_u);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<double> u(design.n_cases);
  for (auto& ul : u) ul = gauss(rng);

  std::vector<double> alpha;
  for (const auto& [cfg, rate] : design.config_rates) {
    if (rate <= 0.0 || rate >= 1.0)
      throw std::invalid_argument("synthetic_observations: target rate for " + cfg +
                                  " must be in (0,1)");
    alpha.push_back(detail::calibrate_intercept(u, rate));
  }

  size_t n_models = design.models.size();
  std::vector<Observation> out;
  out.reserve(static_cast<size_t>(design.n_cases) * n_models * design.config_rates.size());

  std::vector<size_t> model_order(n_models);
  for (size_t m = 0; m < n_models; ++m) model_order[m] = m;

  size_t pad_width = design.n_cases >= 10000 ? 5 : 4;
  for (int l = 0; l < design.n_cases; ++l) {
    std::string num = std::to_string(l + 1);
    std::string case_id =
        "case-" + std::string(pad_width - std::min(pad_width, num.size()), '0') + num;
    for (size_t c = 0; c < design.config_rates.size(); ++c) {
      const auto& [cfg_name, target] = design.config_rates[c];
      double p = detail::sigmoid_s(alpha[c] + u[l]);
      // Quota draw: floor(n*p) safe plus one more with the fractional
      // probability, spread over a shuffled model order.
      double expected = p * static_cast<double>(n_models);
      auto n_safe = static_cast<size_t>(expected);
      if (unif(rng) < expected - static_cast<double>(n_safe)) ++n_safe;
      std::shuffle(model_order.begin(), model_order.end(), rng);

      double pf_rate = 0.0;
      if (auto it = design.parse_failure_rates.find(cfg_name);
          it != design.parse_failure_rates.end())
        pf_rate = it->second;
      // Conditional probability so the unconditional failure rate is pf_rate
      // while failures stay within the unsafe stratum.
      double pf_given_unsafe = target < 1.0 ? std::min(1.0, pf_rate / (1.0 - target)) : 0.0;

      for (size_t rank = 0; rank < n_models; ++rank) {
        size_t m = model_order[rank];
        bool safe = rank < n_safe;
        bool parse_failure = !safe && unif(rng) < pf_given_unsafe;

        Observation o;
        o.item_id = case_id;
        o.model_id = design.models[m];
        o.config = ConfigKind::parse(cfg_name);
        o.format = ItemFormat::MC;
        o.context_condition = ContextCondition::short_context;
        o.status = RunStatus::success;
        o.latency_ms = 0;
        o.seed = design.seed;
        o.transcript.config = o.config;
        o.transcript.item_id = case_id;
        SubCall sc;
        sc.role = SubCallRole::single;
        sc.bundle = PromptBundle{"synthetic", "synthetic"};
        sc.response = parse_failure ? "no committed answer" : (safe ? "Answer: (A)" : "Answer: (B)");
        o.transcript.subcalls.push_back(std::move(sc));
        o.final_text = o.transcript.subcalls.back().response;
        if (parse_failure) {
          o.parse_status = ParseStatus::parse_failure;
          o.safety_label = SafetyLabel::unsafe;
        } else {
          o.parse_status = ParseStatus::parsed;
          o.extracted_letter = safe ? 'A' : 'B';
          o.safety_label = safe ? SafetyLabel::safe : SafetyLabel::unsafe;
        }
        out.push_back(std::move(o));
      }
    }
  }

  // Benchmark assignment is by case (round robin) so benchmark margins are
  // balanced; callers recover it through synthetic_items().
  return out;
}

// Item stubs matching synthetic_observations, one per case, cycling through
// the design's benchmark kinds.
inline std::map<std::string, BenchmarkItem> synthetic_items(const SyntheticDesign& design) {
  std::map<std::string, BenchmarkItem> items;
  size_t pad_width = design.n_cases >= 10000 ? 5 : 4;
  for (int l = 0; l < design.n_cases; ++l) {
    std::string num = std::to_string(l + 1);
    std::string case_id =
        "case-" + std::string(pad_width - std::min(pad_width, num.size()), '0') + num;
    BenchmarkItem item;
    item.item_id = case_id;
    item.kind = design.benchmarks[l % design.benchmarks.size()];
    item.stem = "Synthetic case " + num;
    item.options = {{'A', "calibrated safe option"}, {'B', "calibrated unsafe option"}};
    item.correct_letters = {'A'};
    if (item.kind == BenchmarkKind::bbq || item.kind == BenchmarkKind::sycophancy)
      item.safe_letters = {'A'};
    if (item.kind == BenchmarkKind::bbq) item.ambiguity = Ambiguity::disambiguated;
    item.format = ItemFormat::MC;
    items[case_id] = std::move(item);
  }
  return items;
}

// A no-effect variant: every configuration shares the direct rate.
inline SyntheticDesign null_design(int n_cases = 400, uint64_t seed = 11) {
  SyntheticDesign d;
  d.n_cases = n_cases;
  d.seed = seed;
  for (auto& [cfg, rate] : d.config_rates) rate = 0.728;
  return d;
}

}  // namespace scaffeval
