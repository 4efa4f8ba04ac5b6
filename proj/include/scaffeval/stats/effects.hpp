#pragma once

// Effect-size machinery: odds ratios, risk differences, number needed to
// harm, cluster bootstrap CIs, TOST equivalence, two-proportion power, Wald
// CIs for risk differences, McNemar's test, agreement statistics, and
// Cohen's h.

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "scaffeval/util.hpp"

namespace scaffeval {

// ---------------------------------------------------------------------------
// Odds ratio / risk difference / NNH

struct EffectMetrics {
  double odds_ratio = 1.0;
  double risk_difference = 0.0;  // arm1 rate - arm2 rate
  double risk_ratio = 1.0;
  std::optional<int64_t> nnh;                  // ceil(1/|RD|), unrounded RD
  std::optional<int64_t> nnh_from_rounded_rd;  // same, RD first rounded to 0.1 pp
  bool haldane_applied = false;                // 0.5 added to all cells for OR/RR
};

// Two-by-two effect metrics; arm1 = (a safe, b unsafe), arm2 = (c safe,
// d unsafe). NNH comes in two conventions because published tables round RD
// before inverting it and the repo reports both rather than guessing.
inline EffectMetrics effect_metrics(int64_t a, int64_t b, int64_t c, int64_t d) {
  if (a < 0 || b < 0 || c < 0 || d < 0)
    throw std::invalid_argument("effect_metrics: negative cell");
  if (a + b == 0 || c + d == 0) throw std::invalid_argument("effect_metrics: empty arm");
  EffectMetrics m;
  double p1 = static_cast<double>(a) / (a + b);
  double p2 = static_cast<double>(c) / (c + d);
  m.risk_difference = p1 - p2;

  double aa = a, bb = b, cc = c, dd = d;
  if (a == 0 || b == 0 || c == 0 || d == 0) {
    aa += 0.5;
    bb += 0.5;
    cc += 0.5;
    dd += 0.5;
    m.haldane_applied = true;
  }
  m.odds_ratio = (aa * dd) / (bb * cc);
  double q1 = aa / (aa + bb), q2 = cc / (cc + dd);
  m.risk_ratio = m.haldane_applied ? q1 / q2 : p1 / p2;

  // Both inversions are done in integer arithmetic: 1/|RD| sits exactly on an
  // integer whenever the counts divide evenly, and a ceil on the floating
  // quotient would overshoot there (1/0.1 computes as 10.000000000000002).
  auto ceil_div = [](int64_t num, int64_t den) { return (num + den - 1) / den; };
  int64_t n1 = a + b, n2 = c + d;
  int64_t cross = a * n2 - c * n1;  // sign of the exact risk difference
  if (cross != 0) m.nnh = ceil_div(n1 * n2, std::abs(cross));
  int64_t per_mille = std::llround(m.risk_difference * 1000.0);
  if (per_mille != 0) m.nnh_from_rounded_rd = ceil_div(1000, std::abs(per_mille));
  return m;
}

// ---------------------------------------------------------------------------
// Cluster bootstrap

struct BootstrapCi {
  double point = 0.0;
  std::pair<double, double> ci90{0.0, 0.0};
  std::pair<double, double> ci95{0.0, 0.0};
  int redrawn_replicates = 0;  // replicates whose statistic was undefined
  int b = 0;
};

// Percentile bootstrap over clusters (cases). The statistic receives the
// resampled cluster indices (with multiplicity) and may return nullopt when
// undefined on that replicate, in which case the replicate is redrawn from
// its own (seed, index, attempt) stream and the redraw counted. Replicate
// RNG streams depend only on (seed, index, attempt), so any evaluation
// schedule gives identical CIs.
inline BootstrapCi cluster_bootstrap_ci(
    size_t n_clusters, const std::function<std::optional<double>(const std::vector<size_t>&)>& stat,
    int B = 2000, uint64_t seed = 42) {
  if (n_clusters < 2) throw std::invalid_argument("cluster_bootstrap_ci: need >= 2 clusters");
  if (B < 1) throw std::invalid_argument("cluster_bootstrap_ci: B must be positive");

  std::vector<size_t> all(n_clusters);
  for (size_t i = 0; i < n_clusters; ++i) all[i] = i;
  auto point = stat(all);
  if (!point)
    throw std::invalid_argument("cluster_bootstrap_ci: statistic undefined on the full sample");

  BootstrapCi out;
  out.point = *point;
  out.b = B;
  std::vector<double> reps;
  reps.reserve(B);
  for (int rep = 0; rep < B; ++rep) {
    std::optional<double> value;
    for (uint64_t attempt = 0; attempt < 100; ++attempt) {
      auto rng = make_rng(seed, static_cast<uint64_t>(rep), attempt);
      std::uniform_int_distribution<size_t> pick(0, n_clusters - 1);
      std::vector<size_t> chosen(n_clusters);
      for (size_t i = 0; i < n_clusters; ++i) chosen[i] = pick(rng);
      value = stat(chosen);
      if (value) {
        if (attempt > 0) out.redrawn_replicates += static_cast<int>(attempt);
        break;
      }
    }
    if (!value)
      throw std::runtime_error("cluster_bootstrap_ci: replicate undefined after 100 redraws");
    reps.push_back(*value);
  }
  std::sort(reps.begin(), reps.end());
  out.ci90 = {quantile_sorted(reps, 0.05), quantile_sorted(reps, 0.95)};
  out.ci95 = {quantile_sorted(reps, 0.025), quantile_sorted(reps, 0.975)};
  return out;
}

// ---------------------------------------------------------------------------
// Equivalence, power, Wald CI

// TOST via the CI-inclusion equivalence: the contrast is equivalent to zero
// at margin m iff its 90% CI lies strictly inside (-m, +m).
inline bool tost_equivalence(double ci90_lo, double ci90_hi, double margin = 0.02) {
  if (!(margin > 0.0)) throw std::invalid_argument("tost_equivalence: margin must be > 0");
  if (ci90_lo > ci90_hi) throw std::invalid_argument("tost_equivalence: malformed CI");
  return ci90_lo > -margin && ci90_hi < margin;
}

struct PowerResult {
  double mdd = 0.0;             // planning convention: variance at the degraded rate
  double mdd_two_sample = 0.0;  // classic unpooled two-sample formula
};

namespace detail {

inline double z_quantile(double p) {
  boost::math::normal norm;
  return boost::math::quantile(norm, p);
}

}  // namespace detail

// Minimal detectable drop from a baseline safe rate at given per-cell n.
// The primary convention solves drop = (z_{a/2} + z_power) * sqrt(q(1-q)/n)
// with q the degraded rate (baseline - drop); the classic unpooled
// two-sample solution is reported alongside.
inline PowerResult power_two_prop(double baseline, int64_t n, double alpha = 0.05,
                                  double power = 0.80) {
  if (!(baseline > 0.0 && baseline < 1.0))
    throw std::invalid_argument("power_two_prop: baseline must lie in (0,1)");
  if (n < 2) throw std::invalid_argument("power_two_prop: n must be >= 2");
  double k = detail::z_quantile(1.0 - alpha / 2.0) + detail::z_quantile(power);

  auto solve = [&](auto se_of_drop) {
    double lo = 0.0, hi = baseline - 1e-9;
    for (int iter = 0; iter < 200; ++iter) {
      double mid = 0.5 * (lo + hi);
      if (mid - k * se_of_drop(mid) < 0.0)
        lo = mid;
      else
        hi = mid;
    }
    return 0.5 * (lo + hi);
  };

  PowerResult out;
  out.mdd = solve([&](double drop) {
    double q = baseline - drop;
    return std::sqrt(q * (1.0 - q) / static_cast<double>(n));
  });
  out.mdd_two_sample = solve([&](double drop) {
    double q = baseline - drop;
    return std::sqrt((baseline * (1.0 - baseline) + q * (1.0 - q)) / static_cast<double>(n));
  });
  return out;
}

// Power of the two-sided z-test at a given true drop, same variance
// convention as the planning formula; a zero drop recovers alpha exactly.
inline double power_at_drop(double baseline, int64_t n, double drop, double alpha = 0.05) {
  if (!(baseline > 0.0 && baseline < 1.0))
    throw std::invalid_argument("power_at_drop: baseline must lie in (0,1)");
  double q = baseline - drop;
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("power_at_drop: degenerate rate");
  double se = std::sqrt(q * (1.0 - q) / static_cast<double>(n));
  double zcrit = detail::z_quantile(1.0 - alpha / 2.0);
  boost::math::normal norm;
  return boost::math::cdf(norm, drop / se - zcrit) +
         boost::math::cdf(norm, -drop / se - zcrit);
}

// Wald CI for the risk difference p_s - p_d under the naive independence
// assumption (no clustering).
inline std::pair<double, double> wald_rd_ci(double p_d, int64_t n_d, double p_s, int64_t n_s,
                                            double level = 0.95) {
  if (n_d < 2 || n_s < 2) throw std::invalid_argument("wald_rd_ci: n must be >= 2");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("wald_rd_ci: bad level");
  double se = std::sqrt(p_d * (1.0 - p_d) / n_d + p_s * (1.0 - p_s) / n_s);
  double z = detail::z_quantile(1.0 - (1.0 - level) / 2.0);
  double rd = p_s - p_d;
  return {rd - z * se, rd + z * se};
}

// ---------------------------------------------------------------------------
// McNemar

struct McNemarResult {
  std::optional<double> statistic;
  std::optional<double> p;
  std::string method;  // "exact", "chi2", or "no_information"
};

// Paired flip test on discordant counts b (0→1) and c (1→0). Exact binomial
// below b+c = 25, chi-square without continuity correction at or above it.
inline McNemarResult mcnemar(int64_t b, int64_t c) {
  if (b < 0 || c < 0) throw std::invalid_argument("mcnemar: negative count");
  McNemarResult out;
  int64_t n = b + c;
  if (n == 0) {
    out.method = "no_information";
    return out;
  }
  if (n < 25) {
    out.method = "exact";
    boost::math::binomial dist(static_cast<double>(n), 0.5);
    double tail = boost::math::cdf(dist, static_cast<double>(std::min(b, c)));
    out.statistic = static_cast<double>(std::min(b, c));
    out.p = std::min(1.0, 2.0 * tail);
    return out;
  }
  out.method = "chi2";
  double chi2 = static_cast<double>((b - c) * (b - c)) / static_cast<double>(n);
  out.statistic = chi2;
  boost::math::chi_squared dist(1);
  out.p = boost::math::cdf(boost::math::complement(dist, chi2));
  return out;
}

// ---------------------------------------------------------------------------
// Agreement and Cohen's h

struct AgreementResult {
  double percent_agreement = 0.0;
  std::optional<double> kappa;  // absent when chance agreement is 1
};

// Percent agreement and Cohen's kappa over paired categorical labels.
inline AgreementResult agreement_stats(const std::vector<std::pair<std::string, std::string>>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("agreement_stats: no pairs");
  std::map<std::string, double> rows, cols;
  double agree = 0.0, n = static_cast<double>(pairs.size());
  for (const auto& [x, y] : pairs) {
    rows[x] += 1.0;
    cols[y] += 1.0;
    if (x == y) agree += 1.0;
  }
  AgreementResult out;
  out.percent_agreement = agree / n;
  double pe = 0.0;
  for (const auto& [cat, count] : rows) {
    auto it = cols.find(cat);
    if (it != cols.end()) pe += (count / n) * (it->second / n);
  }
  if (pe < 1.0) out.kappa = (out.percent_agreement - pe) / (1.0 - pe);
  return out;
}

// Cohen's h for two proportions: the arcsine-transformed difference.
inline double effect_size_h(double p1, double p2) {
  if (!(p1 >= 0.0 && p1 <= 1.0 && p2 >= 0.0 && p2 <= 1.0))
    throw std::invalid_argument("effect_size_h: proportions must lie in [0,1]");
  return 2.0 * std::asin(std::sqrt(p1)) - 2.0 * std::asin(std::sqrt(p2));
}

}  // namespace scaffeval
