#pragma once

// The analysis frame: turns labeled observations into the primary logistic
// model (treatment dummies for the scaffold configurations with model and
// benchmark fixed effects, case-clustered errors), per-arm effect tables
// with multiplicity control and bootstrap CIs, interaction Wald tests,
// dose-response over the complexity ordinal, and the specification curve.
//
// Everything here consumes AnalysisRow, one row per (case, model, config)
// under intent-to-treat labels with a per-protocol inclusion flag, so ITT
// and PP views derive from the same vector and a permutation scheme can act
// on both consistently.

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "scaffeval/domain.hpp"
#include "scaffeval/stats/adjust.hpp"
#include "scaffeval/stats/effects.hpp"
#include "scaffeval/stats/flips.hpp"
#include "scaffeval/stats/logistic.hpp"
#include "scaffeval/stats/trend.hpp"

namespace scaffeval {

struct AnalysisRow {
  std::string case_id;
  std::string model_id;
  std::string config;     // ConfigKind string form
  std::string benchmark;  // BenchmarkKind string form
  bool safe = false;      // intent-to-treat label
  bool pp_included = true;  // false: parse failure or error, excluded under PP
};

// Builds analysis rows from scored observations. ITT labels parse failures
// unsafe; the PP flag marks them excluded instead. Callers normally pass
// filter_primary output.
inline std::vector<AnalysisRow> rows_from_observations(
    const std::vector<Observation>& observations,
    const std::map<std::string, BenchmarkItem>& items) {
  std::vector<AnalysisRow> rows;
  for (const auto& o : observations) {
    auto it = items.find(o.item_id);
    if (it == items.end())
      throw std::invalid_argument("rows_from_observations: unknown item '" + o.item_id + "'");
    if (!o.safety_label)
      throw std::invalid_argument("rows_from_observations: unscored observation for item '" +
                                  o.item_id + "' (run the scoring stage first)");
    AnalysisRow r;
    r.case_id = o.item_id;
    r.model_id = o.model_id;
    r.config = o.config.str();
    r.benchmark = to_string(it->second.kind);
    r.safe = *o.safety_label == SafetyLabel::safe;
    bool parsed = o.status == RunStatus::success &&
                  (!o.parse_status || *o.parse_status == ParseStatus::parsed);
    r.pp_included = parsed;
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<AnalysisRow> pp_view(const std::vector<AnalysisRow>& rows) {
  std::vector<AnalysisRow> out;
  for (const auto& r : rows)
    if (r.pp_included) out.push_back(r);
  return out;
}

// Canonical ordering for configuration columns: the complexity ladder first,
// then any extra configurations alphabetically.
inline std::vector<std::string> canonical_config_order(const std::set<std::string>& present) {
  std::vector<std::string> out;
  for (const char* c : {"direct", "react", "multi_agent", "map_reduce"})
    if (present.count(c)) out.push_back(c);
  for (const auto& c : present)
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  return out;
}

// ---------------------------------------------------------------------------
// Primary model

enum class Interaction { none, config_by_model, config_by_benchmark };

struct Eq1Fit {
  std::vector<std::string> colnames;
  Eigen::VectorXd beta;
  Eigen::MatrixXd vcov;  // cluster-robust at the case level
  std::map<std::string, int> col_index;
  std::vector<int> config_indices;       // treatment-dummy columns
  std::vector<int> interaction_indices;  // interaction block, if any
  int64_t n_rows = 0;
  size_t n_cases = 0;
  double deviance = 0.0;

  double se(int idx) const { return std::sqrt(vcov(idx, idx)); }
};

// Fits the primary logistic frame on grouped covariate cells (identical
// estimates to the row-level fit, far fewer rows) and computes the
// case-clustered sandwich from per-(case, cell) counts.
inline Eq1Fit fit_eq1(const std::vector<AnalysisRow>& rows,
                      Interaction interaction = Interaction::none) {
  if (rows.empty()) throw std::invalid_argument("fit_eq1: no rows");

  std::set<std::string> config_set, model_set, bench_set;
  for (const auto& r : rows) {
    config_set.insert(r.config);
    model_set.insert(r.model_id);
    bench_set.insert(r.benchmark);
  }
  if (!config_set.count("direct"))
    throw std::invalid_argument("fit_eq1: reference configuration 'direct' missing");
  std::vector<std::string> configs = canonical_config_order(config_set);
  std::vector<std::string> models(model_set.begin(), model_set.end());
  std::vector<std::string> benches(bench_set.begin(), bench_set.end());

  std::map<std::string, int> cfg_idx, mod_idx, ben_idx;
  for (size_t i = 0; i < configs.size(); ++i) cfg_idx[configs[i]] = static_cast<int>(i);
  for (size_t i = 0; i < models.size(); ++i) mod_idx[models[i]] = static_cast<int>(i);
  for (size_t i = 0; i < benches.size(); ++i) ben_idx[benches[i]] = static_cast<int>(i);

  Eq1Fit fit;
  fit.colnames.push_back("intercept");
  for (size_t c = 1; c < configs.size(); ++c) fit.colnames.push_back("config:" + configs[c]);
  for (size_t m = 1; m < models.size(); ++m) fit.colnames.push_back("model:" + models[m]);
  for (size_t b = 1; b < benches.size(); ++b) fit.colnames.push_back("benchmark:" + benches[b]);
  size_t inter_start = fit.colnames.size();
  if (interaction == Interaction::config_by_model) {
    for (size_t c = 1; c < configs.size(); ++c)
      for (size_t m = 1; m < models.size(); ++m)
        fit.colnames.push_back("config:" + configs[c] + "-x-model:" + models[m]);
  } else if (interaction == Interaction::config_by_benchmark) {
    for (size_t c = 1; c < configs.size(); ++c)
      for (size_t b = 1; b < benches.size(); ++b)
        fit.colnames.push_back("config:" + configs[c] + "-x-benchmark:" + benches[b]);
  }
  size_t ncol = fit.colnames.size();
  for (size_t i = 0; i < ncol; ++i) fit.col_index[fit.colnames[i]] = static_cast<int>(i);
  for (size_t c = 1; c < configs.size(); ++c)
    fit.config_indices.push_back(fit.col_index.at("config:" + configs[c]));
  for (size_t i = inter_start; i < ncol; ++i) fit.interaction_indices.push_back(static_cast<int>(i));

  auto design_row = [&](int c, int m, int b) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(ncol);
    x[0] = 1.0;
    if (c > 0) x[fit.col_index.at("config:" + configs[c])] = 1.0;
    if (m > 0) x[fit.col_index.at("model:" + models[m])] = 1.0;
    if (b > 0) x[fit.col_index.at("benchmark:" + benches[b])] = 1.0;
    if (interaction == Interaction::config_by_model && c > 0 && m > 0)
      x[fit.col_index.at("config:" + configs[c] + "-x-model:" + models[m])] = 1.0;
    if (interaction == Interaction::config_by_benchmark && c > 0 && b > 0)
      x[fit.col_index.at("config:" + configs[c] + "-x-benchmark:" + benches[b])] = 1.0;
    return x;
  };

  // Grouped cells: one fitting row per observed covariate pattern.
  int nm = static_cast<int>(models.size()), nb = static_cast<int>(benches.size());
  auto pattern_of = [&](int c, int m, int b) { return (c * nm + m) * nb + b; };
  std::map<int, std::pair<int64_t, int64_t>> cells;  // pattern -> (n, safe)
  std::map<std::string, std::map<int, std::pair<int64_t, int64_t>>> by_case;
  for (const auto& r : rows) {
    int pat = pattern_of(cfg_idx.at(r.config), mod_idx.at(r.model_id), ben_idx.at(r.benchmark));
    auto& cell = cells[pat];
    cell.first += 1;
    cell.second += r.safe ? 1 : 0;
    auto& cc = by_case[r.case_id][pat];
    cc.first += 1;
    cc.second += r.safe ? 1 : 0;
  }
  fit.n_rows = static_cast<int64_t>(rows.size());
  fit.n_cases = by_case.size();
  if (fit.n_cases < 2) throw std::invalid_argument("fit_eq1: need >= 2 cases for clustering");

  Eigen::MatrixXd X(cells.size(), ncol);
  Eigen::VectorXd y(cells.size()), w(cells.size());
  std::map<int, Eigen::Index> pattern_row;
  Eigen::Index row_i = 0;
  for (const auto& [pat, cell] : cells) {
    int b = pat % nb, m = (pat / nb) % nm, c = pat / (nb * nm);
    X.row(row_i) = design_row(c, m, b).transpose();
    w[row_i] = static_cast<double>(cell.first);
    y[row_i] = static_cast<double>(cell.second) / cell.first;
    pattern_row[pat] = row_i;
    ++row_i;
  }

  LogisticFit lf = fit_logistic_irls(X, y, w, fit.colnames);
  fit.beta = lf.beta;
  fit.deviance = lf.deviance;

  // Case-clustered sandwich from per-case score sums over the cell grid.
  Eigen::VectorXd eta = X * lf.beta;
  Eigen::VectorXd phat(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) phat[i] = logistic_sigmoid(eta[i]);
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(ncol, ncol);
  for (const auto& [case_id, pats] : by_case) {
    Eigen::VectorXd score = Eigen::VectorXd::Zero(ncol);
    for (const auto& [pat, cc] : pats) {
      Eigen::Index ri = pattern_row.at(pat);
      double resid = static_cast<double>(cc.second) - cc.first * phat[ri];
      score += resid * X.row(ri).transpose();
    }
    meat += score * score.transpose();
  }
  fit.vcov = lf.bread * meat * lf.bread;
  return fit;
}

// ---------------------------------------------------------------------------
// Per-arm effects with Holm and bootstrap CIs

struct ArmEffect {
  std::string config;
  int64_t n_arm = 0, safe_arm = 0, n_direct = 0, safe_direct = 0;
  double rate_arm = 0.0, rate_direct = 0.0;
  EffectMetrics metrics;
  double or_regression = 1.0;  // exp(beta) from the primary model
  double p_raw = 1.0;
  double p_holm = 1.0;
  BootstrapCi rd_ci;
  bool tost_equivalent_2pp = false;
};

struct EffectTable {
  std::vector<ArmEffect> arms;
  std::optional<WaldResult> omnibus;
  std::vector<std::string> notes;
};

// H1-style effect table: each scaffold arm against direct, regression ORs
// and raw p-values from the case-clustered primary model, Holm across arms,
// case-bootstrap percentile CIs for the risk difference, and a 2 pp TOST
// call from the 90% interval.
inline EffectTable effect_table(const std::vector<AnalysisRow>& rows,
                                const std::vector<std::string>& arm_configs,
                                uint64_t seed = 42, int bootstrap_b = 2000) {
  EffectTable table;

  std::set<std::string> present;
  for (const auto& r : rows) present.insert(r.config);
  if (!present.count("direct")) {
    table.notes.push_back("skipped: no direct arm in the data");
    return table;
  }

  std::vector<std::string> arms;
  for (const auto& a : arm_configs) {
    if (present.count(a))
      arms.push_back(a);
    else
      table.notes.push_back("arm " + a + " skipped: configuration absent");
  }
  if (arms.empty()) return table;

  // One shared fit restricted to direct + requested arms.
  std::vector<AnalysisRow> sub;
  for (const auto& r : rows)
    if (r.config == "direct" || std::find(arms.begin(), arms.end(), r.config) != arms.end())
      sub.push_back(r);

  std::optional<Eq1Fit> fit;
  try {
    fit = fit_eq1(sub);
    if (fit->config_indices.size() >= 1) {
      std::vector<int> idx = fit->config_indices;
      table.omnibus = wald_test(fit->beta, fit->vcov, idx);
    }
  } catch (const std::exception& e) {
    table.notes.push_back(std::string("regression skipped: ") + e.what());
  }

  // Case-level counts per arm for the bootstrap statistic.
  struct CaseCounts {
    std::map<std::string, std::pair<int64_t, int64_t>> by_config;  // config -> (n, safe)
  };
  std::map<std::string, CaseCounts> case_map;
  for (const auto& r : sub) {
    auto& cc = case_map[r.case_id].by_config[r.config];
    cc.first += 1;
    cc.second += r.safe ? 1 : 0;
  }
  std::vector<const CaseCounts*> cases;
  for (const auto& [id, cc] : case_map) cases.push_back(&cc);

  std::vector<double> raw_ps;
  for (const auto& arm : arms) {
    ArmEffect e;
    e.config = arm;
    for (const auto& r : sub) {
      if (r.config == arm) {
        e.n_arm += 1;
        e.safe_arm += r.safe ? 1 : 0;
      } else if (r.config == "direct") {
        e.n_direct += 1;
        e.safe_direct += r.safe ? 1 : 0;
      }
    }
    e.rate_arm = static_cast<double>(e.safe_arm) / e.n_arm;
    e.rate_direct = static_cast<double>(e.safe_direct) / e.n_direct;
    e.metrics = effect_metrics(e.safe_arm, e.n_arm - e.safe_arm, e.safe_direct,
                               e.n_direct - e.safe_direct);
    if (fit) {
      int idx = fit->col_index.at("config:" + arm);
      double z = fit->beta[idx] / fit->se(idx);
      e.or_regression = std::exp(fit->beta[idx]);
      boost::math::normal norm;
      e.p_raw = 2.0 * boost::math::cdf(norm, -std::abs(z));
    }
    auto stat = [&](const std::vector<size_t>& chosen) -> std::optional<double> {
      int64_t na = 0, sa = 0, nd = 0, sd = 0;
      for (size_t ci : chosen) {
        const auto& bc = cases[ci]->by_config;
        auto ita = bc.find(arm);
        if (ita != bc.end()) {
          na += ita->second.first;
          sa += ita->second.second;
        }
        auto itd = bc.find("direct");
        if (itd != bc.end()) {
          nd += itd->second.first;
          sd += itd->second.second;
        }
      }
      if (na == 0 || nd == 0) return std::nullopt;
      return static_cast<double>(sa) / na - static_cast<double>(sd) / nd;
    };
    e.rd_ci = cluster_bootstrap_ci(cases.size(), stat, bootstrap_b, seed);
    e.tost_equivalent_2pp = tost_equivalence(e.rd_ci.ci90.first, e.rd_ci.ci90.second, 0.02);
    raw_ps.push_back(e.p_raw);
    table.arms.push_back(std::move(e));
  }

  std::vector<double> adj = holm_adjust(raw_ps);
  for (size_t i = 0; i < table.arms.size(); ++i) table.arms[i].p_holm = adj[i];
  return table;
}

// ---------------------------------------------------------------------------
// Interaction Wald tests (effect heterogeneity)

struct InteractionTest {
  bool computed = false;
  std::string note;
  WaldResult wald;
  int n_interaction_terms = 0;
};

inline InteractionTest interaction_wald(const std::vector<AnalysisRow>& rows,
                                        Interaction interaction) {
  InteractionTest out;
  try {
    Eq1Fit fit = fit_eq1(rows, interaction);
    if (fit.interaction_indices.empty()) {
      out.note = "skipped: no interaction terms (single-level factor)";
      return out;
    }
    out.wald = wald_test(fit.beta, fit.vcov, fit.interaction_indices);
    out.n_interaction_terms = static_cast<int>(fit.interaction_indices.size());
    out.computed = true;
  } catch (const std::exception& e) {
    out.note = std::string("skipped: ") + e.what();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dose-response over the complexity ordinal

struct DoseResponse {
  bool computed = false;
  std::string note;
  TrendResult trend;
  std::vector<std::string> level_configs;  // configs in ordinal order
  std::vector<double> level_rates;
  std::vector<double> isotonic_fit;  // nonincreasing fit to level_rates
};

inline DoseResponse dose_response(const std::vector<AnalysisRow>& rows) {
  DoseResponse out;
  std::map<int, std::pair<std::string, std::pair<int64_t, int64_t>>> levels;
  std::vector<int> lv;
  std::vector<int> yv;
  for (const auto& r : rows) {
    auto ord = ConfigKind::parse(r.config).complexity_ordinal();
    if (!ord) continue;
    auto& entry = levels[*ord];
    entry.first = r.config;
    entry.second.first += 1;
    entry.second.second += r.safe ? 1 : 0;
    lv.push_back(*ord);
    yv.push_back(r.safe ? 1 : 0);
  }
  if (levels.size() < 2) {
    out.note = "skipped: fewer than 2 complexity levels present";
    return out;
  }
  try {
    out.trend = trend_tests(lv, yv);
  } catch (const std::exception& e) {
    out.note = std::string("skipped: ") + e.what();
    return out;
  }
  std::vector<double> weights;
  for (const auto& [level, entry] : levels) {
    out.level_configs.push_back(entry.first);
    out.level_rates.push_back(static_cast<double>(entry.second.second) / entry.second.first);
    weights.push_back(static_cast<double>(entry.second.first));
  }
  out.isotonic_fit = pava_isotonic(out.level_rates, Monotone::decreasing, weights);
  out.computed = true;
  return out;
}

// ---------------------------------------------------------------------------
// Specification curve

struct SpecOutcome {
  std::string benchmark_subset;
  std::string model_subset;
  std::string scoring;
  bool estimable = false;
  std::string skip_reason;
  double odds_ratio = 1.0;  // map-reduce vs direct
  double p = 1.0;
};

struct SpecCurveResult {
  std::vector<SpecOutcome> specs;
  int n_estimable = 0;
  double median_or = 1.0;
  double iqr_lo = 1.0, iqr_hi = 1.0;
  double frac_significant = 0.0;
  double permutation_p = 1.0;
  int n_perm = 0;
  std::vector<std::string> notes;
};

namespace detail {

struct CompactRows {
  std::vector<int> case_idx;
  std::vector<int> model_idx;
  std::vector<int> bench_idx;
  std::vector<int> config_idx;  // 0 direct, 1 react, 2 multi_agent, 3 map_reduce
  std::vector<char> safe;
  std::vector<char> pp_inc;
  std::vector<std::string> models, benches, cases;
};

// A fast grouped fit that returns only the map-reduce log-odds coefficient,
// used inside the permutation loop. Returns nullopt when the subset is not
// estimable (missing arm, separation, rank problems).
inline std::optional<double> beta_mr_only(const CompactRows& cr,
                                          const std::vector<int>& config_override,
                                          const std::vector<char>& keep_model,
                                          const std::vector<char>& keep_bench, bool pp) {
  int nm = static_cast<int>(cr.models.size());
  int nb = static_cast<int>(cr.benches.size());
  std::vector<std::pair<int64_t, int64_t>> cells(4 * nm * nb, {0, 0});
  for (size_t i = 0; i < cr.case_idx.size(); ++i) {
    if (pp && !cr.pp_inc[i]) continue;
    if (!keep_model[cr.model_idx[i]] || !keep_bench[cr.bench_idx[i]]) continue;
    int cfg = config_override.empty() ? cr.config_idx[i] : config_override[i];
    auto& cell = cells[(cfg * nm + cr.model_idx[i]) * nb + cr.bench_idx[i]];
    cell.first += 1;
    cell.second += cr.safe[i] ? 1 : 0;
  }

  // Column layout mirrors fit_eq1 for the four primary configurations.
  std::vector<char> model_used(nm, 0), bench_used(nb, 0);
  std::array<int64_t, 4> arm_n{0, 0, 0, 0};
  for (int cfg = 0; cfg < 4; ++cfg)
    for (int m = 0; m < nm; ++m)
      for (int b = 0; b < nb; ++b) {
        const auto& cell = cells[(cfg * nm + m) * nb + b];
        if (cell.first > 0) {
          arm_n[cfg] += cell.first;
          model_used[m] = 1;
          bench_used[b] = 1;
        }
      }
  for (int cfg = 0; cfg < 4; ++cfg)
    if (arm_n[cfg] == 0) return std::nullopt;

  std::vector<int> mcol(nm, -1), bcol(nb, -1);
  int ncol = 4;  // intercept + 3 config dummies
  int first_model = -1, first_bench = -1;
  for (int m = 0; m < nm; ++m)
    if (model_used[m]) {
      if (first_model < 0)
        first_model = m;
      else
        mcol[m] = ncol++;
    }
  for (int b = 0; b < nb; ++b)
    if (bench_used[b]) {
      if (first_bench < 0)
        first_bench = b;
      else
        bcol[b] = ncol++;
    }

  std::vector<Eigen::VectorXd> xs;
  std::vector<double> ys, ws;
  for (int cfg = 0; cfg < 4; ++cfg)
    for (int m = 0; m < nm; ++m)
      for (int b = 0; b < nb; ++b) {
        const auto& cell = cells[(cfg * nm + m) * nb + b];
        if (cell.first == 0) continue;
        Eigen::VectorXd x = Eigen::VectorXd::Zero(ncol);
        x[0] = 1.0;
        if (cfg > 0) x[cfg] = 1.0;
        if (mcol[m] >= 0) x[mcol[m]] = 1.0;
        if (bcol[b] >= 0) x[bcol[b]] = 1.0;
        xs.push_back(std::move(x));
        ws.push_back(static_cast<double>(cell.first));
        ys.push_back(static_cast<double>(cell.second) / cell.first);
      }
  Eigen::MatrixXd X(xs.size(), ncol);
  Eigen::VectorXd y(xs.size()), w(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) {
    X.row(i) = xs[i].transpose();
    y[i] = ys[i];
    w[i] = ws[i];
  }
  try {
    LogisticFit lf = fit_logistic_irls(X, y, w);
    return lf.beta[3];  // map_reduce dummy
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace detail

// Runs the primary-DOF specification grid: benchmark subset x model subset
// x scoring mode, recording the map-reduce odds ratio and its clustered p
// per spec, then a permutation test that shuffles configuration labels
// within (case, model) blocks and compares the observed |log median OR|
// against the permuted distribution.
inline SpecCurveResult spec_curve(const std::vector<AnalysisRow>& rows, int n_perm = 200,
                                  uint64_t seed = 42) {
  SpecCurveResult out;
  out.n_perm = n_perm;

  // Restrict to the four primary configurations.
  std::vector<AnalysisRow> prim;
  for (const auto& r : rows)
    if (r.config == "direct" || r.config == "react" || r.config == "multi_agent" ||
        r.config == "map_reduce")
      prim.push_back(r);
  if (prim.empty()) {
    out.notes.push_back("skipped: no primary-configuration rows");
    return out;
  }

  std::set<std::string> model_set, bench_set, case_set;
  for (const auto& r : prim) {
    model_set.insert(r.model_id);
    bench_set.insert(r.benchmark);
    case_set.insert(r.case_id);
  }
  std::vector<std::string> models(model_set.begin(), model_set.end());
  std::vector<std::string> benches(bench_set.begin(), bench_set.end());

  auto subset_names = [](const std::vector<std::string>& levels) {
    std::vector<std::pair<std::string, std::set<std::string>>> subs;
    std::set<std::string> all(levels.begin(), levels.end());
    subs.emplace_back("all", all);
    if (levels.size() >= 2) {
      std::set<std::string> drop_first = all, drop_last = all;
      drop_first.erase(levels.front());
      drop_last.erase(levels.back());
      subs.emplace_back("drop:" + levels.front(), drop_first);
      subs.emplace_back("drop:" + levels.back(), drop_last);
    } else {
      subs.emplace_back("all(2)", all);
      subs.emplace_back("all(3)", all);
    }
    return subs;
  };
  auto bench_subsets = subset_names(benches);
  auto model_subsets = subset_names(models);

  // Observed pass: full fits with clustered p-values.
  std::vector<double> observed_ors;
  for (const auto& [bname, bset] : bench_subsets) {
    for (const auto& [mname, mset] : model_subsets) {
      for (const std::string scoring : {"itt", "pp"}) {
        SpecOutcome spec;
        spec.benchmark_subset = bname;
        spec.model_subset = mname;
        spec.scoring = scoring;
        std::vector<AnalysisRow> sub;
        for (const auto& r : prim) {
          if (!bset.count(r.benchmark) || !mset.count(r.model_id)) continue;
          if (scoring == std::string("pp") && !r.pp_included) continue;
          sub.push_back(r);
        }
        try {
          Eq1Fit fit = fit_eq1(sub);
          auto it = fit.col_index.find("config:map_reduce");
          if (it == fit.col_index.end())
            throw std::invalid_argument("map_reduce arm absent");
          double beta = fit.beta[it->second];
          double z = beta / fit.se(it->second);
          boost::math::normal norm;
          spec.odds_ratio = std::exp(beta);
          spec.p = 2.0 * boost::math::cdf(norm, -std::abs(z));
          spec.estimable = true;
          observed_ors.push_back(spec.odds_ratio);
        } catch (const std::exception& e) {
          spec.skip_reason = e.what();
          out.notes.push_back("spec (" + bname + ", " + mname + ", " + scoring +
                              ") skipped: " + e.what());
        }
        out.specs.push_back(std::move(spec));
      }
    }
  }
  out.n_estimable = static_cast<int>(observed_ors.size());
  if (observed_ors.empty()) {
    out.notes.push_back("no estimable specs; summary and permutation skipped");
    return out;
  }
  std::sort(observed_ors.begin(), observed_ors.end());
  out.median_or = quantile_sorted(observed_ors, 0.5);
  out.iqr_lo = quantile_sorted(observed_ors, 0.25);
  out.iqr_hi = quantile_sorted(observed_ors, 0.75);
  int sig = 0;
  for (const auto& s : out.specs)
    if (s.estimable && s.p < 0.05) ++sig;
  out.frac_significant = static_cast<double>(sig) / out.n_estimable;

  // Permutation test on |log median OR|.
  detail::CompactRows cr;
  std::map<std::string, int> mi, bi, ci;
  for (size_t i = 0; i < models.size(); ++i) mi[models[i]] = static_cast<int>(i);
  for (size_t i = 0; i < benches.size(); ++i) bi[benches[i]] = static_cast<int>(i);
  for (const auto& c : case_set) {
    ci[c] = static_cast<int>(cr.cases.size());
    cr.cases.push_back(c);
  }
  cr.models = models;
  cr.benches = benches;
  std::map<std::string, int> cfg_code = {
      {"direct", 0}, {"react", 1}, {"multi_agent", 2}, {"map_reduce", 3}};
  for (const auto& r : prim) {
    cr.case_idx.push_back(ci.at(r.case_id));
    cr.model_idx.push_back(mi.at(r.model_id));
    cr.bench_idx.push_back(bi.at(r.benchmark));
    cr.config_idx.push_back(cfg_code.at(r.config));
    cr.safe.push_back(r.safe ? 1 : 0);
    cr.pp_inc.push_back(r.pp_included ? 1 : 0);
  }

  // (case, model) blocks for the within-block label shuffle.
  std::map<std::pair<int, int>, std::vector<size_t>> blocks;
  for (size_t i = 0; i < cr.case_idx.size(); ++i)
    blocks[{cr.case_idx[i], cr.model_idx[i]}].push_back(i);
  std::vector<std::vector<size_t>> block_rows;
  for (auto& [key, idxs] : blocks) block_rows.push_back(std::move(idxs));

  auto median_abs_log_or = [&](const std::vector<int>& config_override) -> std::optional<double> {
    std::vector<double> ors;
    for (const auto& [bname, bset] : bench_subsets) {
      std::vector<char> keep_b(benches.size(), 0);
      for (size_t b = 0; b < benches.size(); ++b) keep_b[b] = bset.count(benches[b]) ? 1 : 0;
      for (const auto& [mname, mset] : model_subsets) {
        std::vector<char> keep_m(models.size(), 0);
        for (size_t m = 0; m < models.size(); ++m) keep_m[m] = mset.count(models[m]) ? 1 : 0;
        for (bool pp : {false, true}) {
          auto beta = detail::beta_mr_only(cr, config_override, keep_m, keep_b, pp);
          if (beta) ors.push_back(*beta);
        }
      }
    }
    if (ors.empty()) return std::nullopt;
    std::sort(ors.begin(), ors.end());
    return std::abs(quantile_sorted(ors, 0.5));
  };

  auto observed_stat = median_abs_log_or({});
  if (!observed_stat) {
    out.notes.push_back("permutation skipped: statistic undefined on observed data");
    return out;
  }

  int hits = 0, valid = 0;
  for (int perm = 0; perm < n_perm; ++perm) {
    auto rng = make_rng(seed, static_cast<uint64_t>(perm) + 1);
    std::vector<int> cfg = cr.config_idx;
    for (const auto& idxs : block_rows) {
      std::vector<int> labels;
      for (size_t i : idxs) labels.push_back(cfg[i]);
      std::shuffle(labels.begin(), labels.end(), rng);
      for (size_t k = 0; k < idxs.size(); ++k) cfg[idxs[k]] = labels[k];
    }
    auto stat = median_abs_log_or(cfg);
    if (!stat) continue;
    ++valid;
    if (*stat >= *observed_stat - 1e-12) ++hits;
  }
  out.permutation_p = (1.0 + hits) / (valid + 1.0);
  if (valid < n_perm)
    out.notes.push_back(std::to_string(n_perm - valid) + " permutation replicates undefined");
  return out;
}

}  // namespace scaffeval
