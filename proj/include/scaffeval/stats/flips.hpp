#pragma once

// Item-level flip analysis between direct and a scaffold arm: who degrades,
// who improves, and whether degradation concentrates on items the models
// already found hard (Spearman rank correlation over difficulty quintiles).

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace scaffeval {

// Spearman rank correlation with average ranks for ties.
inline double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("spearman_rho: need >= 2 paired values");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size(), 0.0);
    size_t i = 0;
    while (i < order.size()) {
      size_t j = i;
      while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
      double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  std::vector<double> rx = ranks(x), ry = ranks(y);
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= rx.size();
  my /= ry.size();
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0)
    throw std::invalid_argument("spearman_rho: constant ranks");
  return sxy / std::sqrt(sxx * syy);
}

struct FlipPair {
  std::string item_id;
  std::string model_id;
  bool direct_safe = false;
  bool scaffold_safe = false;
};

struct ItemFlips {
  int64_t n = 0;
  int64_t degraded = 0;  // direct safe, scaffold unsafe
  int64_t improved = 0;  // direct unsafe, scaffold safe
};

struct QuintileRow {
  int quintile = 0;  // 0 = hardest items (lowest baseline accuracy)
  int64_t n_items = 0;
  double mean_baseline = 0.0;
  double mean_rd = 0.0;  // mean (scaffold - direct), negative = degradation
};

struct FlipAnalysis {
  int64_t n_pairs = 0;
  double total_flip_rate = 0.0;
  double net_flip = 0.0;  // (degraded - improved) / n, positive = net harm
  std::map<std::string, ItemFlips> per_item;
  std::vector<QuintileRow> quintiles;
  // Unset when fewer than two quintiles form or the ranks are constant.
  std::optional<double> spearman_rho_baseline_vs_rd;
};

// Pairs must be matched on (item, model); baseline item difficulty is the
// item's mean direct safe rate across models.
inline FlipAnalysis difficulty_flip_analysis(const std::vector<FlipPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("difficulty_flip_analysis: no pairs");
  FlipAnalysis out;
  out.n_pairs = static_cast<int64_t>(pairs.size());
  int64_t degraded = 0, improved = 0;
  struct ItemAcc {
    int64_t n = 0, direct_safe = 0;
    double rd_sum = 0.0;
  };
  std::map<std::string, ItemAcc> items;
  for (const auto& p : pairs) {
    ItemFlips& f = out.per_item[p.item_id];
    f.n += 1;
    if (p.direct_safe && !p.scaffold_safe) {
      f.degraded += 1;
      ++degraded;
    }
    if (!p.direct_safe && p.scaffold_safe) {
      f.improved += 1;
      ++improved;
    }
    ItemAcc& a = items[p.item_id];
    a.n += 1;
    a.direct_safe += p.direct_safe ? 1 : 0;
    a.rd_sum += (p.scaffold_safe ? 1.0 : 0.0) - (p.direct_safe ? 1.0 : 0.0);
  }
  out.total_flip_rate = static_cast<double>(degraded + improved) / out.n_pairs;
  out.net_flip = static_cast<double>(degraded - improved) / out.n_pairs;

  // Quintiles by baseline accuracy, hardest first; ties broken by item id so
  // the grouping is deterministic.
  struct ItemRow {
    std::string id;
    double baseline;
    double rd;
  };
  std::vector<ItemRow> rows;
  for (const auto& [id, a] : items)
    rows.push_back({id, static_cast<double>(a.direct_safe) / a.n, a.rd_sum / a.n});
  std::sort(rows.begin(), rows.end(), [](const ItemRow& a, const ItemRow& b) {
    if (a.baseline != b.baseline) return a.baseline < b.baseline;
    return a.id < b.id;
  });
  size_t n_groups = std::min<size_t>(5, rows.size());
  std::vector<QuintileRow> qs(n_groups);
  for (size_t i = 0; i < rows.size(); ++i) {
    size_t q = std::min(n_groups - 1, i * n_groups / rows.size());
    qs[q].quintile = static_cast<int>(q);
    qs[q].n_items += 1;
    qs[q].mean_baseline += rows[i].baseline;
    qs[q].mean_rd += rows[i].rd;
  }
  for (auto& q : qs) {
    q.mean_baseline /= q.n_items;
    q.mean_rd /= q.n_items;
  }
  out.quintiles = qs;
  if (n_groups >= 2) {
    std::vector<double> xb, yr;
    for (const auto& q : qs) {
      xb.push_back(q.mean_baseline);
      yr.push_back(q.mean_rd);
    }
    try {
      out.spearman_rho_baseline_vs_rd = spearman_rho(xb, yr);
    } catch (const std::invalid_argument&) {
      // constant ranks: leave unset
    }
  }
  return out;
}

}  // namespace scaffeval
