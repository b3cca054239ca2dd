#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

#include "diveoff/rng.hpp"
#include "diveoff/tensor.hpp"

namespace diveoff {

struct GmmComponent {
  double weight = 0.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

struct GmmModel {
  std::vector<GmmComponent> components;
  int dim = 0;
  double log_likelihood = 0.0;
  int n_samples = 0;
  double bic = 0.0;

  void validate() const {
    require(!components.empty(), "gmm: no components");
    double wsum = 0.0;
    for (const auto& c : components) {
      require(c.weight > 0.0, "gmm: component weight must be positive");
      wsum += c.weight;
    }
    require(std::abs(wsum - 1.0) <= 1e-9, "gmm: weights must sum to 1");
  }
};

namespace gmm_detail {

constexpr double kCovEigenFloor = 1e-6;

inline Eigen::MatrixXd floor_spd(const Eigen::MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (cov + cov.transpose()));
  Eigen::VectorXd ev = es.eigenvalues();
  for (int i = 0; i < ev.size(); ++i) ev[i] = std::max(ev[i], kCovEigenFloor);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

struct CompDensity {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double log_norm = 0.0;  // -(D/2) log(2 pi) - 0.5 log det
  Eigen::VectorXd mean;

  explicit CompDensity(const GmmComponent& c) : llt(c.cov), mean(c.mean) {
    double half_logdet = 0.0;
    for (int i = 0; i < c.cov.rows(); ++i) half_logdet += std::log(llt.matrixL()(i, i));
    log_norm = -0.5 * c.cov.rows() * 1.8378770664093454836 - half_logdet;
  }

  double log_density(const Eigen::VectorXd& x) const {
    Eigen::VectorXd u = llt.matrixL().solve(x - mean);
    return log_norm - 0.5 * u.squaredNorm();
  }
};

// k-means++ seeding for the component means.
inline std::vector<Eigen::VectorXd> kmeanspp_means(const Eigen::MatrixXd& x, int k, RngStream& rng) {
  const int n = static_cast<int>(x.rows());
  std::vector<Eigen::VectorXd> means;
  means.push_back(x.row(static_cast<int>(rng.index(n))).transpose());
  Eigen::VectorXd d2 = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  while (static_cast<int>(means.size()) < k) {
    for (int i = 0; i < n; ++i) {
      const double d = (x.row(i).transpose() - means.back()).squaredNorm();
      if (d < d2[i]) d2[i] = d;
    }
    const double total = d2.sum();
    if (total <= 0.0) {
      means.push_back(x.row(static_cast<int>(rng.index(n))).transpose());
      continue;
    }
    double pick = rng.uniform01() * total;
    int chosen = n - 1;
    for (int i = 0; i < n; ++i) {
      pick -= d2[i];
      if (pick <= 0.0) {
        chosen = i;
        break;
      }
    }
    means.push_back(x.row(chosen).transpose());
  }
  return means;
}

struct EmFit {
  GmmModel model;
  bool ok = false;
};

inline EmFit em_fit(const Eigen::MatrixXd& x, int k, RngStream& rng, int max_iters, double tol,
                    std::vector<double>* ll_trace = nullptr) {
  const int n = static_cast<int>(x.rows());
  const int dim = static_cast<int>(x.cols());
  EmFit fit;
  GmmModel& m = fit.model;
  m.dim = dim;
  m.n_samples = n;

  Eigen::RowVectorXd global_mean = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - global_mean;
  Eigen::MatrixXd global_cov = floor_spd((centered.transpose() * centered) / n);

  auto means = kmeanspp_means(x, k, rng);
  for (int j = 0; j < k; ++j) m.components.push_back(GmmComponent{1.0 / k, means[j], global_cov});

  Eigen::MatrixXd resp(n, k);
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0;; ++iter) {
    // E-step: responsibilities via log-sum-exp; the likelihood always refers
    // to the current parameters
    std::vector<CompDensity> dens;
    dens.reserve(k);
    for (const auto& c : m.components) dens.emplace_back(c);
    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd lp(k);
      const Eigen::VectorXd xi = x.row(i).transpose();
      for (int j = 0; j < k; ++j) lp[j] = std::log(m.components[j].weight) + dens[j].log_density(xi);
      const double mx = lp.maxCoeff();
      double sum = 0.0;
      for (int j = 0; j < k; ++j) sum += std::exp(lp[j] - mx);
      const double lse = mx + std::log(sum);
      ll += lse;
      for (int j = 0; j < k; ++j) resp(i, j) = std::exp(lp[j] - lse);
    }
    if (!std::isfinite(ll)) return fit;
    m.log_likelihood = ll;
    if (ll_trace) ll_trace->push_back(ll);
    if (iter >= max_iters || std::abs(ll - prev_ll) < tol) break;
    prev_ll = ll;

    // M-step
    for (int j = 0; j < k; ++j) {
      const double nj = resp.col(j).sum();
      if (!(nj > 0.0)) return fit;
      Eigen::VectorXd mu = (resp.col(j).transpose() * x).transpose() / nj;
      Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
      for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd d = x.row(i).transpose() - mu;
        cov.noalias() += resp(i, j) * (d * d.transpose());
      }
      cov /= nj;
      m.components[j].weight = nj / n;
      m.components[j].mean = mu;
      m.components[j].cov = floor_spd(cov);
    }
    double wsum = 0.0;
    for (auto& c : m.components) wsum += c.weight;
    for (auto& c : m.components) c.weight /= wsum;
  }
  // free parameters: (k-1) mixture weights + k*D means + k*D(D+1)/2 covariances
  const double params = (k - 1) + k * dim + k * dim * (dim + 1) / 2.0;
  m.bic = -2.0 * m.log_likelihood + params * std::log(static_cast<double>(n));
  fit.ok = std::isfinite(m.bic);
  return fit;
}

}  // namespace gmm_detail

// EM fit for each component count 1..max_components; returns the model with
// the smallest Bayesian information criterion.
inline GmmModel gmm_fit_bic(const Tensor& samples, int max_components, uint64_t seed, int max_iters = 100,
                            double tol = 1e-6) {
  require(samples.rank() == 2, "gmm_fit_bic: samples must be a matrix");
  const int n = samples.rows(), dim = samples.cols();
  require(max_components >= 1, "gmm_fit_bic: max_components must be >= 1");
  require(n > dim * max_components, "gmm_fit_bic: sample count must exceed dim * max_components");

  Eigen::MatrixXd x(n, dim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < dim; ++j) x(i, j) = samples(i, j);

  GmmModel best;
  bool have = false;
  for (int k = 1; k <= max_components; ++k) {
    RngStream rng(seed, "gmm/k" + std::to_string(k));
    gmm_detail::EmFit fit = gmm_detail::em_fit(x, k, rng, max_iters, tol);
    if (!fit.ok) continue;
    if (!have || fit.model.bic < best.bic) {
      best = fit.model;
      have = true;
    }
  }
  if (!have) throw std::runtime_error("gmm_fit_bic: all fits degenerate");
  best.validate();
  return best;
}

// EM log-likelihood trajectory for a fixed component count (test hook for
// the monotonicity property).
inline std::vector<double> gmm_em_log_likelihood_trace(const Tensor& samples, int k, uint64_t seed,
                                                       int max_iters = 100, double tol = 1e-6) {
  const int n = samples.rows(), dim = samples.cols();
  Eigen::MatrixXd x(n, dim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < dim; ++j) x(i, j) = samples(i, j);
  RngStream rng(seed, "gmm/k" + std::to_string(k));
  std::vector<double> trace;
  gmm_detail::em_fit(x, k, rng, max_iters, tol, &trace);
  return trace;
}

// Entropy upper bound of a Gaussian mixture, evaluated exactly as
// sum_i w_i ( (D/2) log(1 + 2 pi) + 0.5 log det(Sigma_i) - log w_i ).
inline double entropy_upper_bound(const GmmModel& gmm) {
  gmm.validate();
  double bound = 0.0;
  for (const auto& c : gmm.components) {
    Eigen::LLT<Eigen::MatrixXd> llt(c.cov);
    require(llt.info() == Eigen::Success, "entropy_upper_bound: covariance not positive-definite");
    double half_logdet = 0.0;
    for (int i = 0; i < c.cov.rows(); ++i) half_logdet += std::log(llt.matrixL()(i, i));
    const double d = static_cast<double>(gmm.dim);
    bound += c.weight * (0.5 * d * std::log1p(2.0 * 3.14159265358979323846) + half_logdet - std::log(c.weight));
  }
  return bound;
}

}  // namespace diveoff
