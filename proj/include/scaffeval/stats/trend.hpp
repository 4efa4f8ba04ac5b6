#pragma once

// Dose-response tooling over the scaffold complexity ordinal: weighted
// isotonic regression (pool-adjacent-violators) and ordered-alternative
// trend tests (logistic slope and Jonckheere-Terpstra with tie-corrected
// variance).

#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "scaffeval/stats/logistic.hpp"

namespace scaffeval {

enum class Monotone { increasing, decreasing };

// Weighted least-squares isotonic fit by pool-adjacent-violators. Returns
// fitted values at each input position; equal weights when none given.
inline std::vector<double> pava_isotonic(const std::vector<double>& y,
                                         Monotone direction = Monotone::increasing,
                                         std::vector<double> weights = {}) {
  if (y.empty()) return {};
  if (weights.empty()) weights.assign(y.size(), 1.0);
  if (weights.size() != y.size())
    throw std::invalid_argument("pava_isotonic: weight size mismatch");

  std::vector<double> vals;
  if (direction == Monotone::decreasing) {
    for (double v : y) vals.push_back(-v);
  } else {
    vals = y;
  }

  struct Block {
    double mean;
    double weight;
    size_t count;
  };
  std::vector<Block> blocks;
  for (size_t i = 0; i < vals.size(); ++i) {
    blocks.push_back({vals[i], weights[i], 1});
    while (blocks.size() >= 2 &&
           blocks[blocks.size() - 2].mean >= blocks.back().mean - 1e-15) {
      Block b = blocks.back();
      blocks.pop_back();
      Block& a = blocks.back();
      double w = a.weight + b.weight;
      a.mean = (a.mean * a.weight + b.mean * b.weight) / w;
      a.weight = w;
      a.count += b.count;
    }
  }

  // The running pooled means above decide the block boundaries; the fitted
  // values are recomputed per block from the original data so rounding does
  // not accumulate across merge cascades.
  std::vector<double> fitted;
  size_t start = 0;
  for (const Block& b : blocks) {
    double sw = 0.0, sy = 0.0;
    for (size_t i = start; i < start + b.count; ++i) {
      sw += weights[i];
      sy += weights[i] * vals[i];
    }
    double mean = sy / sw;
    for (size_t i = 0; i < b.count; ++i)
      fitted.push_back(direction == Monotone::decreasing ? -mean : mean);
    start += b.count;
  }
  return fitted;
}

// ---------------------------------------------------------------------------
// Trend tests

struct TrendResult {
  // A clean corpus can separate perfectly (every high-complexity outcome
  // unsafe), which leaves the logistic slope unbounded while the rank test
  // stays valid, so the logit side carries its own availability flag.
  bool logit_computed = false;
  std::string logit_note;
  double logit_slope = 0.0;
  double logit_z = 0.0;
  double logit_p_one_sided = 1.0;  // alternative: safety decreasing in level
  double jt_stat = 0.0;
  double jt_z = 0.0;
  double jt_p_one_sided = 1.0;
};

// Logistic slope on the ordinal level plus the Jonckheere-Terpstra test.
// One-sided p-values are against the decreasing alternative (higher level,
// lower safe rate), matching the complexity hypothesis; flip the sign of
// the levels for the opposite direction.
inline TrendResult trend_tests(const std::vector<int>& levels, const std::vector<int>& outcomes) {
  if (levels.size() != outcomes.size())
    throw std::invalid_argument("trend_tests: size mismatch");
  if (levels.empty()) throw std::invalid_argument("trend_tests: empty input");

  std::map<int, std::pair<int64_t, int64_t>> by_level;  // level -> (n, ones)
  int64_t total_ones = 0;
  for (size_t i = 0; i < levels.size(); ++i) {
    if (outcomes[i] != 0 && outcomes[i] != 1)
      throw std::invalid_argument("trend_tests: outcomes must be binary");
    auto& cell = by_level[levels[i]];
    cell.first += 1;
    cell.second += outcomes[i];
    total_ones += outcomes[i];
  }
  if (by_level.size() < 2) throw std::invalid_argument("trend_tests: need >= 2 ordinal levels");
  int64_t n = static_cast<int64_t>(levels.size());
  if (total_ones == 0 || total_ones == n)
    throw std::invalid_argument("trend_tests: degenerate outcomes (all equal)");

  TrendResult res;
  boost::math::normal norm;

  // Logistic trend: grouped fit of outcome on intercept + level.
  {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(by_level.size()), 2);
    Eigen::VectorXd yv(X.rows()), w(X.rows());
    Eigen::Index r = 0;
    for (const auto& [level, cell] : by_level) {
      X(r, 0) = 1.0;
      X(r, 1) = static_cast<double>(level);
      w[r] = static_cast<double>(cell.first);
      yv[r] = static_cast<double>(cell.second) / static_cast<double>(cell.first);
      ++r;
    }
    try {
      LogisticFit fit = fit_logistic_irls(X, yv, w, {"intercept", "level"});
      res.logit_slope = fit.beta[1];
      double se = std::sqrt(fit.bread(1, 1));
      res.logit_z = fit.beta[1] / se;
      res.logit_p_one_sided = boost::math::cdf(norm, res.logit_z);
      res.logit_computed = true;
    } catch (const SeparationError& e) {
      res.logit_note = e.what();
    }
  }

  // Jonckheere-Terpstra with the Hollander & Wolfe tie-corrected variance.
  // For binary outcomes the between-group Mann-Whitney counts reduce to the
  // closed forms below.
  {
    double jt = 0.0, mean = 0.0;
    std::vector<std::pair<int64_t, int64_t>> cells;
    for (const auto& [level, cell] : by_level) cells.push_back(cell);
    for (size_t i = 0; i < cells.size(); ++i) {
      for (size_t j = i + 1; j < cells.size(); ++j) {
        auto [ni, si] = cells[i];
        auto [nj, sj] = cells[j];
        int64_t zi = ni - si, zj = nj - sj;
        jt += static_cast<double>(zi) * sj + 0.5 * (static_cast<double>(zi) * zj +
                                                    static_cast<double>(si) * sj);
        mean += static_cast<double>(ni) * nj / 2.0;
      }
    }
    double N = static_cast<double>(n);
    auto f1 = [](double t) { return t * (t - 1.0) * (2.0 * t + 5.0); };
    auto f2 = [](double t) { return t * (t - 1.0) * (t - 2.0); };
    auto f3 = [](double t) { return t * (t - 1.0); };
    double sum1_groups = 0.0, sum2_groups = 0.0, sum3_groups = 0.0;
    for (const auto& [ni, si] : cells) {
      double g = static_cast<double>(ni);
      sum1_groups += f1(g);
      sum2_groups += f2(g);
      sum3_groups += f3(g);
    }
    double ties[2] = {static_cast<double>(n - total_ones), static_cast<double>(total_ones)};
    double sum1_ties = f1(ties[0]) + f1(ties[1]);
    double sum2_ties = f2(ties[0]) + f2(ties[1]);
    double sum3_ties = f3(ties[0]) + f3(ties[1]);
    double var = (f1(N) - sum1_groups - sum1_ties) / 72.0 +
                 sum2_groups * sum2_ties / (36.0 * N * (N - 1.0) * (N - 2.0)) +
                 sum3_groups * sum3_ties / (8.0 * N * (N - 1.0));
    if (var <= 0.0) throw std::runtime_error("trend_tests: zero JT variance");
    res.jt_stat = jt;
    res.jt_z = (jt - mean) / std::sqrt(var);
    res.jt_p_one_sided = boost::math::cdf(norm, res.jt_z);
  }

  return res;
}

}  // namespace scaffeval
