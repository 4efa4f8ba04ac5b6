#pragma once

// Multiplicity control: Holm-Bonferroni step-down and Benjamini-Hochberg
// step-up adjustment. Both return adjusted p-values in the input order; the
// rejection rule is then simply "adjusted <= alpha" (or q).

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace scaffeval {

inline void check_probabilities(const std::vector<double>& p) {
  for (double v : p)
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("p-values must lie in [0,1]");
}

// Holm step-down: sort ascending, multiply the i-th smallest by (m - i),
// enforce monotonicity with a running max, cap at 1.
inline std::vector<double> holm_adjust(const std::vector<double>& p) {
  check_probabilities(p);
  size_t m = p.size();
  std::vector<size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return p[a] < p[b]; });
  std::vector<double> adjusted(m, 0.0);
  double running = 0.0;
  for (size_t rank = 0; rank < m; ++rank) {
    double scaled = std::min(1.0, static_cast<double>(m - rank) * p[order[rank]]);
    running = std::max(running, scaled);
    adjusted[order[rank]] = running;
  }
  return adjusted;
}

struct BhResult {
  std::vector<double> adjusted;
  std::vector<bool> rejected;
};

// Benjamini-Hochberg step-up at false-discovery rate q: adjusted value for
// the i-th smallest is min over j >= i of p_(j) * m / j; reject when the
// adjusted value is <= q.
inline BhResult bh_fdr(const std::vector<double>& p, double q = 0.05) {
  check_probabilities(p);
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("bh_fdr: q must lie in (0,1)");
  size_t m = p.size();
  std::vector<size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return p[a] < p[b]; });
  BhResult out;
  out.adjusted.assign(m, 0.0);
  out.rejected.assign(m, false);
  double running = 1.0;
  for (size_t rank = m; rank-- > 0;) {
    double scaled =
        std::min(1.0, p[order[rank]] * static_cast<double>(m) / static_cast<double>(rank + 1));
    running = std::min(running, scaled);
    out.adjusted[order[rank]] = running;
  }
  for (size_t i = 0; i < m; ++i) out.rejected[i] = out.adjusted[i] <= q;
  return out;
}

}  // namespace scaffeval
