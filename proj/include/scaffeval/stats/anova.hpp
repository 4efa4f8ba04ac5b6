#pragma once

// Crossed-design variance accounting over model x configuration x benchmark:
// eta/omega-squared decomposition of the binary outcome, and a
// generalizability study treating models as the object of measurement with
// two random facets.

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "scaffeval/util.hpp"

namespace scaffeval {

// ---------------------------------------------------------------------------
// Variance decomposition (eta-squared / omega-squared)

struct CellCount {
  std::string model;
  std::string config;
  std::string benchmark;
  int64_t n = 0;
  int64_t safe = 0;
};

struct VarianceSource {
  std::string name;
  double ss = 0.0;
  int64_t df = 0;
  double ms = 0.0;
  double f = 0.0;
  double eta2 = 0.0;
  double omega2 = 0.0;
};

struct VarianceDecomposition {
  std::vector<VarianceSource> sources;  // 3 mains, 3 two-way interactions
  VarianceSource residual;              // within-cell + three-way, pooled
  double ss_total = 0.0;
  int64_t n = 0;
};

// Decomposes the binary safe outcome into main effects and two-way
// interactions by cell-mean algebra; the three-way term is pooled into the
// residual. Exact on balanced designs, which is what the factorial run
// produces. Requires every (model, config, benchmark) cell nonempty.
inline VarianceDecomposition variance_decomposition(const std::vector<CellCount>& cells) {
  if (cells.empty()) throw std::invalid_argument("variance_decomposition: no cells");
  std::set<std::string> models, configs, benchmarks;
  std::map<std::array<std::string, 3>, std::pair<int64_t, int64_t>> table;
  for (const auto& c : cells) {
    if (c.n <= 0)
      throw std::invalid_argument("variance_decomposition: empty cell (" + c.model + ", " +
                                  c.config + ", " + c.benchmark + ")");
    if (c.safe < 0 || c.safe > c.n)
      throw std::invalid_argument("variance_decomposition: bad safe count in (" + c.model +
                                  ", " + c.config + ", " + c.benchmark + ")");
    models.insert(c.model);
    configs.insert(c.config);
    benchmarks.insert(c.benchmark);
    auto key = std::array<std::string, 3>{c.model, c.config, c.benchmark};
    auto& cell = table[key];
    cell.first += c.n;
    cell.second += c.safe;
  }
  for (const auto& m : models)
    for (const auto& g : configs)
      for (const auto& b : benchmarks)
        if (!table.count({m, g, b}))
          throw std::invalid_argument("variance_decomposition: empty cell (" + m + ", " + g +
                                      ", " + b + ")");

  int64_t N = 0, S = 0;
  for (const auto& [key, cell] : table) {
    N += cell.first;
    S += cell.second;
  }
  double grand = static_cast<double>(S) / N;

  auto margin = [&](int dims_mask) {
    // Accumulates (n, safe) over cells keyed by the masked dimensions.
    std::map<std::array<std::string, 3>, std::pair<int64_t, int64_t>> acc;
    for (const auto& [key, cell] : table) {
      std::array<std::string, 3> masked = key;
      for (int d = 0; d < 3; ++d)
        if (!(dims_mask & (1 << d))) masked[d] = "*";
      auto& a = acc[masked];
      a.first += cell.first;
      a.second += cell.second;
    }
    return acc;
  };

  auto mean_of_margin = [&](const std::map<std::array<std::string, 3>,
                                           std::pair<int64_t, int64_t>>& acc) {
    std::map<std::array<std::string, 3>, double> out;
    for (const auto& [key, cell] : acc)
      out[key] = static_cast<double>(cell.second) / cell.first;
    return out;
  };

  auto m1 = margin(1), m2 = margin(2), m4 = margin(4);
  auto m12 = margin(3), m14 = margin(5), m24 = margin(6);
  auto mean1 = mean_of_margin(m1), mean2 = mean_of_margin(m2), mean4 = mean_of_margin(m4);
  auto mean12 = mean_of_margin(m12), mean14 = mean_of_margin(m14), mean24 = mean_of_margin(m24);

  auto main_ss = [&](const std::map<std::array<std::string, 3>, std::pair<int64_t, int64_t>>& acc,
                     const std::map<std::array<std::string, 3>, double>& means) {
    double ss = 0.0;
    for (const auto& [key, cell] : acc) {
      double d = means.at(key) - grand;
      ss += static_cast<double>(cell.first) * d * d;
    }
    return ss;
  };

  auto mask_key = [](const std::array<std::string, 3>& key, int dims_mask) {
    std::array<std::string, 3> masked = key;
    for (int d = 0; d < 3; ++d)
      if (!(dims_mask & (1 << d))) masked[d] = "*";
    return masked;
  };

  auto two_way_ss = [&](const std::map<std::array<std::string, 3>,
                                       std::pair<int64_t, int64_t>>& acc,
                        int mask_a, int mask_b,
                        const std::map<std::array<std::string, 3>, double>& means_a,
                        const std::map<std::array<std::string, 3>, double>& means_b) {
    double ss = 0.0;
    for (const auto& [key, cell] : acc) {
      double m = static_cast<double>(cell.second) / cell.first;
      double d = m - means_a.at(mask_key(key, mask_a)) - means_b.at(mask_key(key, mask_b)) + grand;
      ss += static_cast<double>(cell.first) * d * d;
    }
    return ss;
  };

  double ss_total = static_cast<double>(S) - static_cast<double>(N) * grand * grand;

  VarianceDecomposition out;
  out.n = N;
  out.ss_total = ss_total;

  auto a = static_cast<int64_t>(models.size());
  auto g = static_cast<int64_t>(configs.size());
  auto b = static_cast<int64_t>(benchmarks.size());

  std::vector<VarianceSource> rows(6);
  rows[0] = {"model", main_ss(m1, mean1), a - 1, 0, 0, 0, 0};
  rows[1] = {"config", main_ss(m2, mean2), g - 1, 0, 0, 0, 0};
  rows[2] = {"benchmark", main_ss(m4, mean4), b - 1, 0, 0, 0, 0};
  rows[3] = {"model:config", two_way_ss(m12, 1, 2, mean1, mean2), (a - 1) * (g - 1), 0, 0, 0, 0};
  rows[4] = {"model:benchmark", two_way_ss(m14, 1, 4, mean1, mean4), (a - 1) * (b - 1),
             0, 0, 0, 0};
  rows[5] = {"config:benchmark", two_way_ss(m24, 2, 4, mean2, mean4), (g - 1) * (b - 1),
             0, 0, 0, 0};

  double ss_modeled = 0.0;
  int64_t df_modeled = 0;
  for (const auto& r : rows) {
    ss_modeled += r.ss;
    df_modeled += r.df;
  }
  out.residual.name = "residual";
  out.residual.ss = std::max(0.0, ss_total - ss_modeled);
  out.residual.df = N - 1 - df_modeled;
  if (out.residual.df <= 0)
    throw std::invalid_argument("variance_decomposition: no residual degrees of freedom");
  out.residual.ms = out.residual.ss / out.residual.df;
  out.residual.eta2 = ss_total > 0 ? out.residual.ss / ss_total : 0.0;

  double ms_res = out.residual.ms;
  for (auto& r : rows) {
    r.ms = r.df > 0 ? r.ss / r.df : 0.0;
    r.f = ms_res > 0 ? r.ms / ms_res : 0.0;
    r.eta2 = ss_total > 0 ? r.ss / ss_total : 0.0;
    r.omega2 = (ss_total + ms_res) > 0 ? (r.ss - r.df * ms_res) / (ss_total + ms_res) : 0.0;
  }
  out.sources = std::move(rows);
  return out;
}

// ---------------------------------------------------------------------------
// Generalizability study

struct GCell {
  std::string model;      // object of measurement, random
  std::string config;     // facet I
  std::string benchmark;  // facet J
  double mean = 0.0;      // cell safe rate
};

struct GStudyResult {
  // Variance components after truncation, with the raw estimates kept.
  double sigma2_p = 0.0, sigma2_pI = 0.0, sigma2_pJ = 0.0, sigma2_pIJe = 0.0;
  double raw_sigma2_p = 0.0, raw_sigma2_pI = 0.0, raw_sigma2_pJ = 0.0, raw_sigma2_pIJe = 0.0;
  bool truncated = false;
  double g = 0.0;
  std::pair<double, double> g_ci95{0.0, 0.0};
  int bootstrap_b = 0;
  // (n_I', n_J') -> projected G for hypothetical facet sizes.
  std::vector<std::tuple<int, int, double>> d_study;
};

namespace detail {

struct GComponents {
  double p = 0.0, pI = 0.0, pJ = 0.0, pIJe = 0.0;  // raw, possibly negative
};

// Expected-mean-square estimation on a p x I x J table of cell means, one
// observation per cell, everything crossed.
inline GComponents g_components(const std::vector<std::vector<std::vector<double>>>& x) {
  size_t np = x.size(), ni = x[0].size(), nj = x[0][0].size();
  double grand = 0.0;
  std::vector<double> mp(np, 0.0), mi(ni, 0.0), mj(nj, 0.0);
  std::vector<std::vector<double>> mpi(np, std::vector<double>(ni, 0.0));
  std::vector<std::vector<double>> mpj(np, std::vector<double>(nj, 0.0));
  std::vector<std::vector<double>> mij(ni, std::vector<double>(nj, 0.0));
  for (size_t p = 0; p < np; ++p)
    for (size_t i = 0; i < ni; ++i)
      for (size_t j = 0; j < nj; ++j) {
        double v = x[p][i][j];
        grand += v;
        mp[p] += v;
        mi[i] += v;
        mj[j] += v;
        mpi[p][i] += v;
        mpj[p][j] += v;
        mij[i][j] += v;
      }
  grand /= np * ni * nj;
  for (auto& v : mp) v /= ni * nj;
  for (auto& v : mi) v /= np * nj;
  for (auto& v : mj) v /= np * ni;
  for (auto& row : mpi)
    for (auto& v : row) v /= nj;
  for (auto& row : mpj)
    for (auto& v : row) v /= ni;
  for (auto& row : mij)
    for (auto& v : row) v /= np;

  double ss_p = 0.0, ss_pi = 0.0, ss_pj = 0.0, ss_pij = 0.0;
  for (size_t p = 0; p < np; ++p) ss_p += (mp[p] - grand) * (mp[p] - grand);
  ss_p *= ni * nj;
  for (size_t p = 0; p < np; ++p)
    for (size_t i = 0; i < ni; ++i) {
      double d = mpi[p][i] - mp[p] - mi[i] + grand;
      ss_pi += d * d;
    }
  ss_pi *= nj;
  for (size_t p = 0; p < np; ++p)
    for (size_t j = 0; j < nj; ++j) {
      double d = mpj[p][j] - mp[p] - mj[j] + grand;
      ss_pj += d * d;
    }
  ss_pj *= ni;
  for (size_t p = 0; p < np; ++p)
    for (size_t i = 0; i < ni; ++i)
      for (size_t j = 0; j < nj; ++j) {
        double d = x[p][i][j] - mpi[p][i] - mpj[p][j] - mij[i][j] + mp[p] + mi[i] + mj[j] - grand;
        ss_pij += d * d;
      }

  double ms_p = ss_p / (np - 1);
  double ms_pi = ss_pi / ((np - 1) * (ni - 1));
  double ms_pj = ss_pj / ((np - 1) * (nj - 1));
  double ms_pij = ss_pij / ((np - 1) * (ni - 1) * (nj - 1));

  GComponents c;
  c.pIJe = ms_pij;
  c.pI = (ms_pi - ms_pij) / nj;
  c.pJ = (ms_pj - ms_pij) / ni;
  c.p = (ms_p - ms_pi - ms_pj + ms_pij) / (ni * nj);
  return c;
}

inline double g_coefficient(const GComponents& raw, double ni, double nj) {
  double p = std::max(0.0, raw.p);
  double pI = std::max(0.0, raw.pI);
  double pJ = std::max(0.0, raw.pJ);
  double pIJe = std::max(0.0, raw.pIJe);
  double denom = p + pI / ni + pJ / nj + pIJe / (ni * nj);
  return denom > 0.0 ? p / denom : 0.0;
}

}  // namespace detail

// G study with models as the object of measurement and configurations and
// benchmarks as random facets. Negative component estimates truncate to 0
// (the raw values are reported); the bootstrap resamples models.
inline GStudyResult g_study(const std::vector<GCell>& cells, int bootstrap_b = 10000,
                            uint64_t seed = 42,
                            const std::vector<int>& d_study_sizes = {1, 2, 4, 8}) {
  std::set<std::string> models, configs, benchmarks;
  for (const auto& c : cells) {
    models.insert(c.model);
    configs.insert(c.config);
    benchmarks.insert(c.benchmark);
  }
  if (models.size() < 2) throw std::invalid_argument("g_study: need >= 2 models");
  if (configs.size() < 2 || benchmarks.size() < 2)
    throw std::invalid_argument("g_study: need >= 2 levels per facet");

  std::map<std::string, size_t> pm, im, jm;
  for (const auto& m : models) pm[m] = pm.size();
  for (const auto& i : configs) im[i] = im.size();
  for (const auto& j : benchmarks) jm[j] = jm.size();
  size_t np = models.size(), ni = configs.size(), nj = benchmarks.size();

  std::vector<std::vector<std::vector<double>>> x(
      np, std::vector<std::vector<double>>(ni, std::vector<double>(nj,
                                                                   std::nan(""))));
  for (const auto& c : cells) x[pm[c.model]][im[c.config]][jm[c.benchmark]] = c.mean;
  for (size_t p = 0; p < np; ++p)
    for (size_t i = 0; i < ni; ++i)
      for (size_t j = 0; j < nj; ++j)
        if (std::isnan(x[p][i][j])) throw std::invalid_argument("g_study: missing cell");

  detail::GComponents raw = detail::g_components(x);
  GStudyResult out;
  out.raw_sigma2_p = raw.p;
  out.raw_sigma2_pI = raw.pI;
  out.raw_sigma2_pJ = raw.pJ;
  out.raw_sigma2_pIJe = raw.pIJe;
  out.sigma2_p = std::max(0.0, raw.p);
  out.sigma2_pI = std::max(0.0, raw.pI);
  out.sigma2_pJ = std::max(0.0, raw.pJ);
  out.sigma2_pIJe = std::max(0.0, raw.pIJe);
  out.truncated = raw.p < 0.0 || raw.pI < 0.0 || raw.pJ < 0.0 || raw.pIJe < 0.0;
  out.g = detail::g_coefficient(raw, static_cast<double>(ni), static_cast<double>(nj));

  // Bootstrap over the object of measurement.
  out.bootstrap_b = bootstrap_b;
  std::vector<double> reps;
  reps.reserve(bootstrap_b);
  for (int rep = 0; rep < bootstrap_b; ++rep) {
    auto rng = make_rng(seed, static_cast<uint64_t>(rep));
    std::uniform_int_distribution<size_t> pick(0, np - 1);
    std::vector<std::vector<std::vector<double>>> xb;
    xb.reserve(np);
    for (size_t p = 0; p < np; ++p) xb.push_back(x[pick(rng)]);
    reps.push_back(detail::g_coefficient(detail::g_components(xb), static_cast<double>(ni),
                                         static_cast<double>(nj)));
  }
  std::sort(reps.begin(), reps.end());
  out.g_ci95 = {quantile_sorted(reps, 0.025), quantile_sorted(reps, 0.975)};

  for (int di : d_study_sizes)
    for (int dj : d_study_sizes)
      out.d_study.emplace_back(di, dj, detail::g_coefficient(raw, di, dj));
  return out;
}

}  // namespace scaffeval
