#pragma once

// Independent reference implementations used to cross-check the statistics
// engine. Everything here is deliberately written the slow, obvious way
// (exhaustive enumeration, textbook formulas, O(n^2) loops) so a bug in the
// library cannot hide in a shared code path. Test files freeze expected
// values computed through these.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace oracle {

// Holm step-down by definition: find the sorted order, scale each sorted
// p-value by its remaining-hypothesis count, enforce monotonicity with a
// running maximum, cap at 1, undo the sort.
inline std::vector<double> holm(const std::vector<double>& p) {
  size_t m = p.size();
  std::vector<size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return p[a] < p[b]; });
  std::vector<double> adj(m, 0.0);
  double running = 0.0;
  for (size_t rank = 0; rank < m; ++rank) {
    double scaled = static_cast<double>(m - rank) * p[order[rank]];
    running = std::max(running, scaled);
    adj[order[rank]] = std::min(1.0, running);
  }
  return adj;
}

// Benjamini-Hochberg by definition, same order-preserving contract.
inline std::vector<double> bh(const std::vector<double>& p) {
  size_t m = p.size();
  std::vector<size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return p[a] < p[b]; });
  std::vector<double> adj(m, 0.0);
  double running = 1.0;
  for (size_t rank = m; rank-- > 0;) {
    double scaled = p[order[rank]] * static_cast<double>(m) / static_cast<double>(rank + 1);
    running = std::min(running, std::min(1.0, scaled));
    adj[order[rank]] = running;
  }
  return adj;
}

// Closed-form slope for a saturated two-cell logistic model: the log odds
// ratio between the x=1 and x=0 cells. The MLE of an intercept+slope fit on
// two binomial cells reproduces the cell odds exactly.
inline std::pair<double, double> two_cell_logit(int64_t n0, int64_t s0, int64_t n1, int64_t s1) {
  double odds0 = static_cast<double>(s0) / static_cast<double>(n0 - s0);
  double odds1 = static_cast<double>(s1) / static_cast<double>(n1 - s1);
  return {std::log(odds0), std::log(odds1) - std::log(odds0)};  // intercept, slope
}

// Isotonic regression by exhaustive search over contiguous level-set
// partitions (2^(n-1) of them); returns the weighted least-squares monotone
// nondecreasing fit. Feasible for n <= ~16, used up to 6.
inline std::vector<double> isotonic_exhaustive(const std::vector<double>& y,
                                               const std::vector<double>& w) {
  size_t n = y.size();
  if (n == 0 || w.size() != n) throw std::invalid_argument("isotonic_exhaustive: bad input");
  double best_sse = std::numeric_limits<double>::infinity();
  std::vector<double> best(n, 0.0);
  for (uint32_t mask = 0; mask < (1u << (n - 1)); ++mask) {
    // Bit k set means a block boundary between k and k+1.
    std::vector<double> fit(n, 0.0);
    size_t start = 0;
    double prev_mean = -std::numeric_limits<double>::infinity();
    bool monotone = true;
    for (size_t k = 0; k <= n - 1; ++k) {
      bool boundary = k == n - 1 || (mask >> k) & 1u;
      if (!boundary) continue;
      double sw = 0.0, sy = 0.0;
      for (size_t i = start; i <= k; ++i) {
        sw += w[i];
        sy += w[i] * y[i];
      }
      double mean = sy / sw;
      if (mean < prev_mean - 1e-12) {
        monotone = false;
        break;
      }
      for (size_t i = start; i <= k; ++i) fit[i] = mean;
      prev_mean = mean;
      start = k + 1;
    }
    if (!monotone) continue;
    double sse = 0.0;
    for (size_t i = 0; i < n; ++i) sse += w[i] * (y[i] - fit[i]) * (y[i] - fit[i]);
    if (sse < best_sse - 1e-15) {
      best_sse = sse;
      best = fit;
    }
  }
  return best;
}

// Mann-Whitney U with normal approximation and the standard tie correction.
// Returns (U for group 2 minus expectation direction, z). Group labels are
// 0/1 over per-observation values.
struct MannWhitney {
  double u = 0.0;
  double mean = 0.0;
  double var = 0.0;
  double z = 0.0;
};

inline MannWhitney mann_whitney(const std::vector<double>& g0, const std::vector<double>& g1) {
  MannWhitney mw;
  double n0 = static_cast<double>(g0.size()), n1 = static_cast<double>(g1.size());
  for (double a : g0)
    for (double b : g1) {
      if (b > a)
        mw.u += 1.0;
      else if (b == a)
        mw.u += 0.5;
    }
  mw.mean = n0 * n1 / 2.0;
  // Tie correction over the pooled sample.
  std::vector<double> pooled = g0;
  pooled.insert(pooled.end(), g1.begin(), g1.end());
  std::sort(pooled.begin(), pooled.end());
  double n = n0 + n1;
  double tie_term = 0.0;
  size_t i = 0;
  while (i < pooled.size()) {
    size_t j = i;
    while (j + 1 < pooled.size() && pooled[j + 1] == pooled[i]) ++j;
    double t = static_cast<double>(j - i + 1);
    tie_term += t * (t * t - 1.0);
    i = j + 1;
  }
  mw.var = n0 * n1 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  if (mw.var <= 0.0) throw std::invalid_argument("mann_whitney: zero variance");
  mw.z = (mw.u - mw.mean) / std::sqrt(mw.var);
  return mw;
}

// Jonckheere-Terpstra by direct enumeration: sum of pairwise Mann-Whitney
// counts over ordered group pairs, with ties counted half.
inline double jt_statistic(const std::vector<std::vector<double>>& groups) {
  double jt = 0.0;
  for (size_t i = 0; i < groups.size(); ++i)
    for (size_t j = i + 1; j < groups.size(); ++j)
      for (double a : groups[i])
        for (double b : groups[j]) {
          if (b > a)
            jt += 1.0;
          else if (b == a)
            jt += 0.5;
        }
  return jt;
}

// Spearman by explicit rank tables, average ranks for ties, then Pearson.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto rank_of = [](const std::vector<double>& v) {
    std::vector<double> r(v.size(), 0.0);
    for (size_t i = 0; i < v.size(); ++i) {
      double less = 0.0, equal = 0.0;
      for (size_t j = 0; j < v.size(); ++j) {
        if (v[j] < v[i]) ++less;
        if (v[j] == v[i]) ++equal;
      }
      r[i] = less + (equal + 1.0) / 2.0;
    }
    return r;
  };
  std::vector<double> rx = rank_of(x), ry = rank_of(y);
  double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / rx.size();
  double my = std::accumulate(ry.begin(), ry.end(), 0.0) / ry.size();
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// Exact binomial(n, 1/2) lower tail, exact arithmetic in doubles via the
// recurrence on C(n, k); fine for the n < 25 regime it verifies.
inline double binom_half_cdf(int64_t k, int64_t n) {
  double total = 0.0;
  double coeff = 1.0;  // C(n, 0)
  for (int64_t i = 0; i <= k; ++i) {
    if (i > 0) coeff = coeff * static_cast<double>(n - i + 1) / static_cast<double>(i);
    total += coeff;
  }
  return total * std::pow(0.5, static_cast<double>(n));
}

// Weighted percentile with the linear-interpolation convention (the one
// numpy calls 'linear' and R calls type 7), independent second opinion.
inline double quantile_linear(std::vector<double> sorted_values, double q) {
  if (sorted_values.empty()) throw std::invalid_argument("quantile_linear: empty");
  double h = (static_cast<double>(sorted_values.size()) - 1.0) * q;
  auto lo = static_cast<size_t>(std::floor(h));
  auto hi = static_cast<size_t>(std::ceil(h));
  return sorted_values[lo] + (h - static_cast<double>(lo)) * (sorted_values[hi] - sorted_values[lo]);
}

// Cohen's kappa from a confusion matrix over two raters with arbitrary
// label sets, done with explicit marginals.
inline double kappa(const std::vector<std::pair<int, int>>& labels, int n_levels) {
  double n = static_cast<double>(labels.size());
  std::vector<double> row(n_levels, 0.0), col(n_levels, 0.0);
  double agree = 0.0;
  for (auto [a, b] : labels) {
    row[a] += 1.0;
    col[b] += 1.0;
    if (a == b) agree += 1.0;
  }
  double po = agree / n;
  double pe = 0.0;
  for (int k = 0; k < n_levels; ++k) pe += (row[k] / n) * (col[k] / n);
  return (po - pe) / (1.0 - pe);
}

// Logistic log-likelihood gradient at beta, computed longhand; a fitted
// IRLS solution must zero this out.
inline std::vector<double> logit_gradient(const std::vector<std::vector<double>>& X,
                                          const std::vector<double>& y,
                                          const std::vector<double>& w,
                                          const std::vector<double>& beta) {
  size_t ncol = beta.size();
  std::vector<double> g(ncol, 0.0);
  for (size_t i = 0; i < X.size(); ++i) {
    double eta = 0.0;
    for (size_t k = 0; k < ncol; ++k) eta += X[i][k] * beta[k];
    double p = 1.0 / (1.0 + std::exp(-eta));
    for (size_t k = 0; k < ncol; ++k) g[k] += w[i] * (y[i] - p) * X[i][k];
  }
  return g;
}

}  // namespace oracle
