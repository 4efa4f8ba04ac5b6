#pragma once

// Binary-outcome logistic regression by iteratively reweighted least
// squares, with cluster-robust (sandwich) covariance and Wald tests.
//
// Rows may be grouped: y is then the within-group safe proportion and the
// weight the group size, which is how the factorial designs stay small (one
// row per covariate cell) without changing any estimate. Step-halving keeps
// the deviance nonincreasing; separation and rank problems are reported as
// typed errors, never as quietly absurd coefficients.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

namespace scaffeval {

struct SeparationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RankError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LogisticFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd bread;  // (X' W X)^{-1}: the model-based covariance
  double deviance = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> column_names;
};

inline double logistic_sigmoid(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  double e = std::exp(eta);
  return e / (1.0 + e);
}

namespace detail {

inline double binomial_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                                const Eigen::VectorXd& eta) {
  double dev = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double p = std::min(1.0 - 1e-12, std::max(1e-12, logistic_sigmoid(eta[i])));
    dev += -2.0 * w[i] * (y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p));
  }
  return dev;
}

inline void check_rank(const Eigen::MatrixXd& X, const std::vector<std::string>& names) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-9);
  if (qr.rank() == X.cols()) return;
  // The pivot order puts the dependent columns last; name them.
  std::string cols;
  const auto& perm = qr.colsPermutation().indices();
  for (Eigen::Index k = qr.rank(); k < X.cols(); ++k) {
    Eigen::Index j = perm[k];
    if (!cols.empty()) cols += ", ";
    cols += j < static_cast<Eigen::Index>(names.size()) ? names[j]
                                                        : "col" + std::to_string(j);
  }
  throw RankError("design matrix is rank deficient; collinear columns: " + cols);
}

}  // namespace detail

// Fits logit(P(y=1)) = X beta. `y` entries in [0,1] (proportions allowed),
// `weights` are row multiplicities (empty = all ones). Convergence is a max
// coefficient step below tol; any |beta| > 15 is treated as separation.
inline LogisticFit fit_logistic_irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                     Eigen::VectorXd weights = {},
                                     std::vector<std::string> column_names = {},
                                     int max_iter = 100, double tol = 1e-8) {
  if (X.rows() != y.size()) throw std::invalid_argument("fit_logistic_irls: X/y size mismatch");
  if (weights.size() == 0) weights = Eigen::VectorXd::Ones(X.rows());
  if (weights.size() != X.rows())
    throw std::invalid_argument("fit_logistic_irls: weight size mismatch");
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y[i] < 0.0 || y[i] > 1.0)
      throw std::invalid_argument("fit_logistic_irls: outcomes must lie in [0,1]");
  if (column_names.empty())
    for (Eigen::Index j = 0; j < X.cols(); ++j) column_names.push_back("col" + std::to_string(j));

  detail::check_rank(X, column_names);

  LogisticFit fit;
  fit.column_names = column_names;
  fit.beta = Eigen::VectorXd::Zero(X.cols());
  Eigen::VectorXd eta = X * fit.beta;
  fit.deviance = detail::binomial_deviance(y, weights, eta);

  constexpr double kSeparationLogit = 15.0;
  for (int iter = 1; iter <= max_iter; ++iter) {
    fit.iterations = iter;
    Eigen::VectorXd p(y.size()), wirls(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      p[i] = logistic_sigmoid(eta[i]);
      wirls[i] = std::max(1e-12, weights[i] * p[i] * (1.0 - p[i]));
    }
    Eigen::MatrixXd xtwx = X.transpose() * wirls.asDiagonal() * X;
    Eigen::VectorXd score = X.transpose() * (weights.array() * (y - p).array()).matrix();
    Eigen::LDLT<Eigen::MatrixXd> solver(xtwx);
    if (solver.info() != Eigen::Success)
      throw RankError("fit_logistic_irls: weighted normal equations not solvable");
    Eigen::VectorXd step = solver.solve(score);

    // Step-halving: never accept an uphill deviance move.
    double scale = 1.0;
    Eigen::VectorXd beta_new;
    double dev_new = 0.0;
    for (int half = 0; half < 40; ++half) {
      beta_new = fit.beta + scale * step;
      dev_new = detail::binomial_deviance(y, weights, X * beta_new);
      if (dev_new <= fit.deviance + 1e-10) break;
      scale *= 0.5;
    }
    double max_step = (scale * step).cwiseAbs().maxCoeff();
    fit.beta = beta_new;
    eta = X * fit.beta;
    fit.deviance = dev_new;

    if (fit.beta.cwiseAbs().maxCoeff() > kSeparationLogit)
      throw SeparationError(
          "separation detected: a coefficient exceeded 15 on the logit scale");
    if (max_step < tol) {
      fit.converged = true;
      break;
    }
  }
  if (!fit.converged)
    throw std::runtime_error("fit_logistic_irls: no convergence in " +
                             std::to_string(max_iter) + " iterations");

  Eigen::VectorXd p(y.size()), wirls(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    p[i] = logistic_sigmoid(eta[i]);
    wirls[i] = std::max(1e-12, weights[i] * p[i] * (1.0 - p[i]));
  }
  Eigen::MatrixXd xtwx = X.transpose() * wirls.asDiagonal() * X;
  fit.bread = xtwx.ldlt().solve(Eigen::MatrixXd::Identity(X.cols(), X.cols()));
  return fit;
}

// Cluster-robust sandwich covariance with scores summed within clusters.
// With every row its own cluster this is exactly HC0; no small-sample
// factor is applied (that identity is load-bearing for the tests).
template <typename ClusterId>
inline Eigen::MatrixXd cluster_robust_cov(const LogisticFit& fit, const Eigen::MatrixXd& X,
                                          const Eigen::VectorXd& y,
                                          const std::vector<ClusterId>& cluster_ids,
                                          Eigen::VectorXd weights = {}) {
  if (static_cast<Eigen::Index>(cluster_ids.size()) != X.rows())
    throw std::invalid_argument("cluster_robust_cov: cluster id count mismatch");
  if (weights.size() == 0) weights = Eigen::VectorXd::Ones(X.rows());

  std::map<ClusterId, Eigen::VectorXd> sums;
  Eigen::VectorXd eta = X * fit.beta;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    double resid = weights[i] * (y[i] - logistic_sigmoid(eta[i]));
    auto it = sums.try_emplace(cluster_ids[i], Eigen::VectorXd::Zero(X.cols())).first;
    it->second += resid * X.row(i).transpose();
  }
  if (sums.size() < 2) throw std::invalid_argument("cluster_robust_cov: need >= 2 clusters");

  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(X.cols(), X.cols());
  for (const auto& [id, s] : sums) meat += s * s.transpose();
  return fit.bread * meat * fit.bread;
}

struct WaldResult {
  double chi2 = 0.0;
  int df = 0;
  double p = 1.0;
};

// Wald test of H0: beta[idx] = 0 jointly over the given coefficient
// indices, using the supplied covariance.
inline WaldResult wald_test(const Eigen::VectorXd& beta, const Eigen::MatrixXd& cov,
                            const std::vector<int>& indices) {
  if (indices.empty()) throw std::invalid_argument("wald_test: no restrictions");
  for (int idx : indices)
    if (idx < 0 || idx >= beta.size())
      throw std::invalid_argument("wald_test: restriction index out of range");
  Eigen::VectorXd b(indices.size());
  Eigen::MatrixXd v(indices.size(), indices.size());
  for (size_t r = 0; r < indices.size(); ++r) {
    b[r] = beta[indices[r]];
    for (size_t c = 0; c < indices.size(); ++c) v(r, c) = cov(indices[r], indices[c]);
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(v);
  if (!lu.isInvertible())
    throw std::invalid_argument("wald_test: singular restricted covariance");
  WaldResult res;
  res.chi2 = std::max(0.0, b.dot(lu.solve(b)));
  res.df = static_cast<int>(indices.size());
  boost::math::chi_squared dist(res.df);
  res.p = boost::math::cdf(boost::math::complement(dist, res.chi2));
  return res;
}

}  // namespace scaffeval
