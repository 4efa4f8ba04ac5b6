// Design-level statistics: the crossed variance decomposition, the
// generalizability study, item flip analysis, and the analysis frame that
// ties the primary model, effect tables, trend, and specification curve
// together over synthetic data with known ground truth.

#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "oracles.hpp"
#include "scaffeval/analysis.hpp"
#include "scaffeval/stats/anova.hpp"
#include "scaffeval/stats/flips.hpp"
#include "scaffeval/synthfix.hpp"

using namespace scaffeval;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

// Expands factorial cell counts into per-observation 0/1 vectors and computes
// the classic balanced-design sums of squares longhand. Independent of the
// cell-mean bookkeeping inside variance_decomposition.
struct LonghandSS {
  double total = 0.0;
  std::map<std::string, double> main_ss;     // dim name -> SS
  std::map<std::string, double> two_way_ss;  // "a:b" -> SS
};

LonghandSS longhand_decomposition(const std::vector<CellCount>& cells) {
  auto key3 = [](const CellCount& c) {
    return std::array<std::string, 3>{c.model, c.config, c.benchmark};
  };
  int64_t N = 0, S = 0;
  for (const auto& c : cells) {
    N += c.n;
    S += c.safe;
  }
  double grand = static_cast<double>(S) / N;

  auto margin_mean = [&](int d) {
    std::map<std::string, std::pair<int64_t, int64_t>> acc;
    for (const auto& c : cells) {
      auto& a = acc[key3(c)[d]];
      a.first += c.n;
      a.second += c.safe;
    }
    return acc;
  };
  auto pair_mean = [&](int d1, int d2) {
    std::map<std::pair<std::string, std::string>, std::pair<int64_t, int64_t>> acc;
    for (const auto& c : cells) {
      auto& a = acc[{key3(c)[d1], key3(c)[d2]}];
      a.first += c.n;
      a.second += c.safe;
    }
    return acc;
  };

  LonghandSS out;
  out.total = static_cast<double>(S) - N * grand * grand;  // sum y^2 = S for 0/1 data

  const char* names[3] = {"model", "config", "benchmark"};
  std::array<std::map<std::string, std::pair<int64_t, int64_t>>, 3> margins;
  for (int d = 0; d < 3; ++d) {
    margins[d] = margin_mean(d);
    double ss = 0.0;
    for (const auto& [lvl, a] : margins[d]) {
      double m = static_cast<double>(a.second) / a.first;
      ss += a.first * (m - grand) * (m - grand);
    }
    out.main_ss[names[d]] = ss;
  }
  int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  for (auto [d1, d2] : pairs) {
    double ss = 0.0;
    for (const auto& [lvls, a] : pair_mean(d1, d2)) {
      double m = static_cast<double>(a.second) / a.first;
      double m1 = static_cast<double>(margins[d1].at(lvls.first).second) /
                  margins[d1].at(lvls.first).first;
      double m2 = static_cast<double>(margins[d2].at(lvls.second).second) /
                  margins[d2].at(lvls.second).first;
      ss += a.first * (m - m1 - m2 + grand) * (m - m1 - m2 + grand);
    }
    out.two_way_ss[std::string(names[d1]) + ":" + names[d2]] = ss;
  }
  return out;
}

std::vector<CellCount> random_balanced_cells(uint64_t seed) {
  auto rng = make_rng(seed);
  std::vector<CellCount> cells;
  for (const char* m : {"m-one", "m-two", "m-three"})
    for (const char* g : {"direct", "react", "map_reduce"})
      for (const char* b : {"truthfulqa", "bbq"}) {
        CellCount c;
        c.model = m;
        c.config = g;
        c.benchmark = b;
        c.n = 60;
        c.safe = static_cast<int64_t>(rng() % 61);
        cells.push_back(c);
      }
  return cells;
}

}  // namespace

TEST_CASE("variance decomposition reproduces longhand sums of squares") {
  auto cells = random_balanced_cells(3001);
  auto vd = variance_decomposition(cells);
  auto lh = longhand_decomposition(cells);

  CHECK(vd.n == 3 * 3 * 2 * 60);
  CHECK_THAT(vd.ss_total, WithinAbs(lh.total, 1e-8));
  REQUIRE(vd.sources.size() == 6);
  std::map<std::string, const VarianceSource*> by_name;
  for (const auto& s : vd.sources) by_name[s.name] = &s;
  CHECK_THAT(by_name.at("model")->ss, WithinAbs(lh.main_ss.at("model"), 1e-8));
  CHECK_THAT(by_name.at("config")->ss, WithinAbs(lh.main_ss.at("config"), 1e-8));
  CHECK_THAT(by_name.at("benchmark")->ss, WithinAbs(lh.main_ss.at("benchmark"), 1e-8));
  CHECK_THAT(by_name.at("model:config")->ss, WithinAbs(lh.two_way_ss.at("model:config"), 1e-8));
  CHECK_THAT(by_name.at("model:benchmark")->ss,
             WithinAbs(lh.two_way_ss.at("model:benchmark"), 1e-8));
  CHECK_THAT(by_name.at("config:benchmark")->ss,
             WithinAbs(lh.two_way_ss.at("config:benchmark"), 1e-8));

  // degrees of freedom and the additive residual
  CHECK(by_name.at("model")->df == 2);
  CHECK(by_name.at("config")->df == 2);
  CHECK(by_name.at("benchmark")->df == 1);
  CHECK(by_name.at("model:config")->df == 4);
  double ss_modeled = 0.0;
  double eta_sum = vd.residual.eta2;
  for (const auto& s : vd.sources) {
    ss_modeled += s.ss;
    eta_sum += s.eta2;
  }
  CHECK_THAT(vd.residual.ss, WithinAbs(vd.ss_total - ss_modeled, 1e-8));
  CHECK(vd.residual.df == vd.n - 1 - 2 - 2 - 1 - 4 - 2 - 2);
  CHECK_THAT(eta_sum, WithinAbs(1.0, 1e-9));
  for (const auto& s : vd.sources) {
    CHECK(s.ms >= 0.0);
    CHECK(s.f >= 0.0);
  }
}

TEST_CASE("variance decomposition rejects incomplete or malformed tables") {
  auto cells = random_balanced_cells(3002);
  cells.pop_back();  // drops (m-three, map_reduce, bbq)
  try {
    variance_decomposition(cells);
    FAIL("expected a missing-cell error");
  } catch (const std::invalid_argument& e) {
    CHECK_THAT(e.what(), ContainsSubstring("empty cell"));
    CHECK_THAT(e.what(), ContainsSubstring("m-three"));
  }

  CHECK_THROWS_AS(variance_decomposition({}), std::invalid_argument);
  CellCount bad{"m", "g", "b", 10, 11};
  CHECK_THROWS_AS(variance_decomposition({bad}), std::invalid_argument);

  // duplicate rows for one cell accumulate instead of erroring
  auto doubled = random_balanced_cells(3003);
  auto extra = doubled;
  doubled.insert(doubled.end(), extra.begin(), extra.end());
  auto vd = variance_decomposition(doubled);
  CHECK(vd.n == 2 * 3 * 3 * 2 * 60);
}

TEST_CASE("raw G-study components invert the expected mean squares") {
  // random cell means on a 3 x 2 x 2 crossed layout
  auto rng = make_rng(3004);
  std::uniform_real_distribution<double> unif(0.3, 0.9);
  const char* ms[] = {"p1", "p2", "p3"};
  const char* is[] = {"direct", "react"};
  const char* js[] = {"truthfulqa", "bbq"};
  std::vector<GCell> cells;
  double x[3][2][2];
  for (int p = 0; p < 3; ++p)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        x[p][i][j] = unif(rng);
        cells.push_back({ms[p], is[i], js[j], x[p][i][j]});
      }
  auto g = g_study(cells, 50, 42);

  // longhand mean squares from the definitional margin tables
  double grand = 0.0, mp[3] = {}, mi[2] = {}, mj[2] = {};
  double mpi[3][2] = {}, mpj[3][2] = {};
  for (int p = 0; p < 3; ++p)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        grand += x[p][i][j] / 12.0;
        mp[p] += x[p][i][j] / 4.0;
        mi[i] += x[p][i][j] / 6.0;
        mj[j] += x[p][i][j] / 6.0;
        mpi[p][i] += x[p][i][j] / 2.0;
        mpj[p][j] += x[p][i][j] / 2.0;
      }
  double ss_p = 0.0, ss_pi = 0.0, ss_pj = 0.0;
  for (int p = 0; p < 3; ++p) ss_p += 4.0 * (mp[p] - grand) * (mp[p] - grand);
  for (int p = 0; p < 3; ++p)
    for (int i = 0; i < 2; ++i) {
      double d = mpi[p][i] - mp[p] - mi[i] + grand;
      ss_pi += 2.0 * d * d;
    }
  for (int p = 0; p < 3; ++p)
    for (int j = 0; j < 2; ++j) {
      double d = mpj[p][j] - mp[p] - mj[j] + grand;
      ss_pj += 2.0 * d * d;
    }
  double ms_p = ss_p / 2.0, ms_pi = ss_pi / 2.0, ms_pj = ss_pj / 2.0;

  // residual MS via the EMS identity instead of the four-way deviation sum
  CHECK_THAT(g.raw_sigma2_pI, WithinAbs((ms_pi - g.raw_sigma2_pIJe) / 2.0, 1e-9));
  CHECK_THAT(g.raw_sigma2_pJ, WithinAbs((ms_pj - g.raw_sigma2_pIJe) / 2.0, 1e-9));
  CHECK_THAT(g.raw_sigma2_p,
             WithinAbs((ms_p - ms_pi - ms_pj + g.raw_sigma2_pIJe) / 4.0, 1e-9));

  CHECK(g.g >= 0.0);
  CHECK(g.g <= 1.0);
  CHECK(g.g_ci95.first <= g.g_ci95.second);
  CHECK(g.g_ci95.first >= 0.0);
  CHECK(g.g_ci95.second <= 1.0);
  CHECK(g.bootstrap_b == 50);
  CHECK(g.d_study.size() == 16);  // 4 x 4 hypothetical facet sizes
}

TEST_CASE("interaction-dominated measurements earn a zero G coefficient") {
  // model margins identical, all signal in the model x config interaction
  std::vector<GCell> cells;
  for (const char* j : {"truthfulqa", "bbq"}) {
    cells.push_back({"p1", "direct", j, 0.9});
    cells.push_back({"p1", "react", j, 0.5});
    cells.push_back({"p2", "direct", j, 0.5});
    cells.push_back({"p2", "react", j, 0.9});
  }
  auto g = g_study(cells, 50, 42);
  CHECK(g.truncated);
  CHECK(g.raw_sigma2_p < 0.0);
  CHECK(g.g == 0.0);
  CHECK(g.sigma2_p == 0.0);
  CHECK(g.sigma2_pI > 0.0);
}

TEST_CASE("additive measurements earn a G coefficient near one") {
  // purely additive cell means: model spread is real, facets shift everyone
  double ap[3] = {-0.15, 0.0, 0.15};
  double bi[2] = {-0.02, 0.02};
  double cj[2] = {-0.01, 0.01};
  const char* ms[] = {"p1", "p2", "p3"};
  const char* is[] = {"direct", "react"};
  const char* js[] = {"truthfulqa", "bbq"};
  std::vector<GCell> cells;
  for (int p = 0; p < 3; ++p)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) cells.push_back({ms[p], is[i], js[j], 0.7 + ap[p] + bi[i] + cj[j]});
  auto g = g_study(cells, 50, 42);
  CHECK(g.g >= 0.9);

  // projected G improves with more facet levels when facet noise exists
  std::map<std::pair<int, int>, double> d;
  for (const auto& [di, dj, gg] : g.d_study) d[{di, dj}] = gg;
  CHECK(d.at({8, 8}) >= d.at({1, 1}));
}

TEST_CASE("g_study validates its inputs") {
  std::vector<GCell> one_model = {{"p1", "direct", "tqa", 0.5}, {"p1", "react", "tqa", 0.6},
                                  {"p1", "direct", "bbq", 0.5}, {"p1", "react", "bbq", 0.6}};
  CHECK_THROWS_AS(g_study(one_model, 10, 1), std::invalid_argument);

  std::vector<GCell> missing = {{"p1", "direct", "tqa", 0.5}, {"p1", "react", "bbq", 0.6},
                                {"p2", "direct", "tqa", 0.5}, {"p2", "react", "bbq", 0.6}};
  CHECK_THROWS_WITH(g_study(missing, 10, 1), ContainsSubstring("missing cell"));
}

TEST_CASE("spearman helper matches the rank-table oracle") {
  auto rng = make_rng(3005);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int rep = 0; rep < 40; ++rep) {
    size_t n = 5 + rng() % 20;
    std::vector<double> x(n), y(n);
    for (size_t i = 0; i < n; ++i) {
      x[i] = std::round(unif(rng) * 10.0) / 10.0;  // coarse grid: force ties
      y[i] = x[i] * 0.5 + unif(rng);
    }
    CHECK_THAT(spearman_rho(x, y), WithinAbs(oracle::spearman(x, y), 1e-10));
  }
  CHECK_THAT(spearman_rho({1, 2, 3}, {3, 2, 1}), WithinAbs(-1.0, 1e-12));
  CHECK_THROWS_AS(spearman_rho({1.0, 1.0}, {1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(spearman_rho({1.0}, {1.0}), std::invalid_argument);
}

TEST_CASE("flip analysis counts degradations and ranks difficulty") {
  std::vector<FlipPair> pairs = {
      {"item-a", "m1", true, false}, {"item-a", "m2", true, false},
      {"item-b", "m1", false, true}, {"item-b", "m2", true, true},
      {"item-c", "m1", true, true},  {"item-c", "m2", true, true},
  };
  auto fa = difficulty_flip_analysis(pairs);
  CHECK(fa.n_pairs == 6);
  CHECK_THAT(fa.total_flip_rate, WithinAbs(0.5, 1e-12));
  CHECK_THAT(fa.net_flip, WithinAbs(1.0 / 6.0, 1e-12));
  CHECK(fa.per_item.at("item-a").degraded == 2);
  CHECK(fa.per_item.at("item-a").improved == 0);
  CHECK(fa.per_item.at("item-b").improved == 1);
  CHECK(fa.per_item.at("item-c").degraded == 0);

  // three items -> three difficulty groups, hardest (lowest baseline) first
  REQUIRE(fa.quintiles.size() == 3);
  CHECK_THAT(fa.quintiles[0].mean_baseline, WithinAbs(0.5, 1e-12));  // item-b
  CHECK_THAT(fa.quintiles[0].mean_rd, WithinAbs(0.5, 1e-12));
  CHECK_THAT(fa.quintiles[1].mean_rd, WithinAbs(-1.0, 1e-12));  // item-a
  CHECK_THAT(fa.quintiles[2].mean_rd, WithinAbs(0.0, 1e-12));   // item-c
  REQUIRE(fa.spearman_rho_baseline_vs_rd.has_value());
  double expected = oracle::spearman({0.5, 1.0, 1.0}, {0.5, -1.0, 0.0});
  CHECK_THAT(*fa.spearman_rho_baseline_vs_rd, WithinAbs(expected, 1e-12));
}

TEST_CASE("flip quintiles split ten items into five pairs") {
  std::vector<FlipPair> pairs;
  for (int i = 0; i < 10; ++i) {
    std::string id = "item-" + std::to_string(i);
    // baseline ladder: item i is direct-safe on i of 10 models
    for (int m = 0; m < 10; ++m)
      pairs.push_back({id, "m" + std::to_string(m), m < i, m < 5});
  }
  auto fa = difficulty_flip_analysis(pairs);
  REQUIRE(fa.quintiles.size() == 5);
  for (const auto& q : fa.quintiles) CHECK(q.n_items == 2);
  CHECK_THAT(fa.quintiles[0].mean_baseline, WithinAbs(0.05, 1e-12));  // items 0,1
  CHECK_THAT(fa.quintiles[4].mean_baseline, WithinAbs(0.85, 1e-12));  // items 8,9
  for (size_t q = 1; q < 5; ++q)
    CHECK(fa.quintiles[q].mean_baseline > fa.quintiles[q - 1].mean_baseline);
}

TEST_CASE("flip correlation is left unset when ranks are constant") {
  std::vector<FlipPair> pairs;
  for (const char* id : {"item-a", "item-b", "item-c"})
    for (const char* m : {"m1", "m2"}) pairs.push_back({id, m, true, true});
  auto fa = difficulty_flip_analysis(pairs);
  CHECK(fa.total_flip_rate == 0.0);
  CHECK_FALSE(fa.spearman_rho_baseline_vs_rd.has_value());

  CHECK_THROWS_AS(difficulty_flip_analysis({}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Analysis frame over synthetic ledgers

namespace {

std::vector<AnalysisRow> synthetic_rows(const SyntheticDesign& d) {
  return rows_from_observations(synthetic_observations(d), synthetic_items(d));
}

}  // namespace

TEST_CASE("primary fit recovers near-zero arm effects on a null design") {
  auto d = null_design(300, 11);
  auto rows = synthetic_rows(d);
  CHECK(rows.size() == 300u * 6 * 4);

  auto fit = fit_eq1(rows);
  CHECK(fit.n_cases == 300);
  CHECK(fit.n_rows == static_cast<int64_t>(rows.size()));
  REQUIRE(fit.config_indices.size() == 3);
  CHECK(fit.colnames[0] == "intercept");
  CHECK(fit.col_index.count("config:react") == 1);
  CHECK(fit.col_index.count("config:map_reduce") == 1);
  CHECK(fit.col_index.count("model:" + d.models[1]) == 1);
  for (int idx : fit.config_indices) CHECK(std::abs(fit.beta[idx]) < 0.15);

  auto omnibus = wald_test(fit.beta, fit.vcov, fit.config_indices);
  CHECK(omnibus.df == 3);
  CHECK(omnibus.p > 0.001);  // no arm differences were injected
}

TEST_CASE("fit_eq1 validates the frame") {
  auto d = null_design(40, 5);
  auto rows = synthetic_rows(d);

  std::vector<AnalysisRow> no_direct;
  for (const auto& r : rows)
    if (r.config != "direct") no_direct.push_back(r);
  CHECK_THROWS_WITH(fit_eq1(no_direct), ContainsSubstring("'direct' missing"));

  std::vector<AnalysisRow> one_case;
  for (const auto& r : rows)
    if (r.case_id == rows.front().case_id) one_case.push_back(r);
  CHECK_THROWS_WITH(fit_eq1(one_case), ContainsSubstring(">= 2 cases"));

  CHECK_THROWS_AS(fit_eq1({}), std::invalid_argument);
}

TEST_CASE("effect table recovers injected arm effects with honest intervals") {
  SyntheticDesign d;
  d.n_cases = 400;
  d.seed = 7;
  auto rows = synthetic_rows(d);

  auto table = effect_table(rows, {"react", "multi_agent", "map_reduce"}, 42, 400);
  REQUIRE(table.arms.size() == 3);
  REQUIRE(table.omnibus.has_value());
  CHECK(table.omnibus->df == 3);
  CHECK(table.omnibus->p < 1e-6);

  const auto& mr = table.arms[2];
  CHECK(mr.config == "map_reduce");
  CHECK_THAT(mr.metrics.risk_difference, WithinAbs(-0.073, 0.015));
  CHECK(mr.rd_ci.ci95.first <= -0.073);
  CHECK(-0.073 <= mr.rd_ci.ci95.second);
  CHECK(mr.or_regression < 0.85);
  CHECK(mr.p_raw < 1e-6);
  CHECK_FALSE(mr.tost_equivalent_2pp);
  REQUIRE(mr.metrics.nnh.has_value());
  CHECK(*mr.metrics.nnh >= 12);
  CHECK(*mr.metrics.nnh <= 17);

  // the two mild arms are within the 2 pp equivalence margin
  CHECK(table.arms[0].config == "react");
  CHECK(std::abs(table.arms[0].metrics.risk_difference) < 0.02);
  CHECK(table.arms[0].tost_equivalent_2pp);
  CHECK(table.arms[1].tost_equivalent_2pp);

  // Holm keeps the raw ordering and never shrinks a p-value
  for (const auto& arm : table.arms) CHECK(arm.p_holm >= arm.p_raw);

  // requesting an absent arm yields a note, not an error
  auto partial = effect_table(rows, {"react", "cot"}, 42, 100);
  CHECK(partial.arms.size() == 1);
  REQUIRE_FALSE(partial.notes.empty());
  CHECK_THAT(partial.notes[0], ContainsSubstring("cot"));
}

TEST_CASE("interaction tests report their term count and stay in bounds") {
  SyntheticDesign d;
  d.n_cases = 250;
  d.seed = 13;
  auto rows = synthetic_rows(d);

  auto by_model = interaction_wald(rows, Interaction::config_by_model);
  REQUIRE(by_model.computed);
  CHECK(by_model.n_interaction_terms == 3 * 5);
  CHECK(by_model.wald.df == 15);
  CHECK(by_model.wald.p >= 0.0);
  CHECK(by_model.wald.p <= 1.0);

  auto by_bench = interaction_wald(rows, Interaction::config_by_benchmark);
  REQUIRE(by_bench.computed);
  CHECK(by_bench.n_interaction_terms == 3 * 3);

  auto none = interaction_wald(rows, Interaction::none);
  CHECK_FALSE(none.computed);
  CHECK_THAT(none.note, ContainsSubstring("no interaction terms"));
}

TEST_CASE("dose response orders levels and fits a nonincreasing curve") {
  SyntheticDesign d;
  d.n_cases = 400;
  d.seed = 7;
  auto rows = synthetic_rows(d);

  // configurations without a complexity ordinal are ignored
  AnalysisRow cot_row = rows.front();
  cot_row.config = "cot";
  rows.push_back(cot_row);

  auto dr = dose_response(rows);
  REQUIRE(dr.computed);
  REQUIRE(dr.level_configs.size() == 4);
  CHECK(dr.level_configs[0] == "direct");
  CHECK(dr.level_configs[3] == "map_reduce");
  CHECK_THAT(dr.level_rates[0], WithinAbs(0.728, 0.02));
  CHECK_THAT(dr.level_rates[3], WithinAbs(0.655, 0.02));
  CHECK(dr.trend.logit_slope < 0.0);
  CHECK(dr.trend.logit_p_one_sided < 1e-6);
  CHECK(dr.trend.jt_z < 0.0);
  REQUIRE(dr.isotonic_fit.size() == 4);
  for (size_t i = 1; i < 4; ++i) CHECK(dr.isotonic_fit[i] <= dr.isotonic_fit[i - 1] + 1e-12);

  std::vector<AnalysisRow> only_direct;
  for (const auto& r : rows)
    if (r.config == "direct") only_direct.push_back(r);
  auto skipped = dose_response(only_direct);
  CHECK_FALSE(skipped.computed);
  CHECK_THAT(skipped.note, ContainsSubstring("fewer than 2"));
}

TEST_CASE("specification curve runs the full grid and a calibrated permutation test") {
  SyntheticDesign d;
  d.n_cases = 200;
  d.seed = 17;
  auto rows = synthetic_rows(d);

  auto sc = spec_curve(rows, 40, 42);
  CHECK(sc.specs.size() == 18);  // 3 benchmark subsets x 3 model subsets x 2 scoring modes
  CHECK(sc.n_estimable == 18);
  CHECK(sc.median_or < 0.85);
  CHECK(sc.iqr_lo <= sc.median_or);
  CHECK(sc.median_or <= sc.iqr_hi);
  CHECK(sc.frac_significant == 1.0);
  CHECK(sc.n_perm == 40);
  CHECK(sc.permutation_p < 0.05);  // a real effect survives the label shuffle
  for (const auto& s : sc.specs) {
    CHECK(s.estimable);
    CHECK(s.odds_ratio < 1.0);
  }
}

TEST_CASE("specification curve stays at 18 specs when an axis has one level") {
  auto d = null_design(120, 23);
  d.benchmarks = {BenchmarkKind::truthfulqa};
  auto rows = synthetic_rows(d);

  auto sc = spec_curve(rows, 10, 42);
  CHECK(sc.specs.size() == 18);
  // the benchmark axis cannot be subset, so its slots repeat the full set
  int repeats = 0;
  for (const auto& s : sc.specs)
    if (s.benchmark_subset == "all(2)" || s.benchmark_subset == "all(3)") ++repeats;
  CHECK(repeats == 12);
  CHECK(sc.n_estimable == 18);
  CHECK(sc.median_or > 0.85);
  CHECK(sc.median_or < 1.2);
  CHECK(sc.permutation_p > 0.02);  // no injected effect

  std::vector<AnalysisRow> none;
  auto empty = spec_curve(none, 5, 1);
  CHECK(empty.specs.empty());
  REQUIRE_FALSE(empty.notes.empty());
}
