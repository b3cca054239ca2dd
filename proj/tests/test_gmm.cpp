#include <gtest/gtest.h>

#include <cmath>

#include "diveoff/gmm.hpp"
#include "diveoff/rng.hpp"

using namespace diveoff;

namespace {

Tensor gaussian_cloud(int n, double cx, double cy, double sd, RngStream& rng) {
  Tensor t = Tensor::zeros({n, 2});
  for (int i = 0; i < n; ++i) {
    t(i, 0) = cx + sd * rng.normal();
    t(i, 1) = cy + sd * rng.normal();
  }
  return t;
}

Tensor vstack(const Tensor& a, const Tensor& b) {
  Tensor out = Tensor::zeros({a.rows() + b.rows(), a.cols()});
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out(i, j) = a(i, j);
  for (int i = 0; i < b.rows(); ++i)
    for (int j = 0; j < b.cols(); ++j) out(a.rows() + i, j) = b(i, j);
  return out;
}

GmmModel single_component(double w, double m0, double m1, const Eigen::MatrixXd& cov) {
  GmmModel g;
  g.dim = 2;
  GmmComponent c;
  c.weight = w;
  c.mean = Eigen::Vector2d(m0, m1);
  c.cov = cov;
  g.components.push_back(c);
  return g;
}

}  // namespace

TEST(GmmFit, SingleTightGaussianSelectsOneComponent) {
  RngStream rng(1, "gmm");
  Tensor x = gaussian_cloud(1000, 0.3, -0.2, 0.05, rng);
  GmmModel m = gmm_fit_bic(x, 5, 7);
  EXPECT_EQ(m.components.size(), 1u);
  EXPECT_NEAR(m.components[0].mean[0], 0.3, 0.01);
  EXPECT_NEAR(m.components[0].mean[1], -0.2, 0.01);
}

TEST(GmmFit, TwoWellSeparatedClustersSelectTwoComponents) {
  RngStream rng(2, "gmm");
  // centers 10 standard deviations apart
  Tensor x = vstack(gaussian_cloud(500, 0.0, 0.0, 0.1, rng), gaussian_cloud(500, 1.0, 0.0, 0.1, rng));
  GmmModel m = gmm_fit_bic(x, 5, 11);
  EXPECT_EQ(m.components.size(), 2u);
  for (const auto& c : m.components) EXPECT_NEAR(c.weight, 0.5, 0.05);
}

TEST(GmmFit, AllIdenticalPointsFloorTheCovariance) {
  Tensor x = Tensor::zeros({50, 2});
  for (int i = 0; i < 50; ++i) {
    x(i, 0) = 0.42;
    x(i, 1) = 0.13;
  }
  GmmModel m = gmm_fit_bic(x, 2, 5);
  ASSERT_GE(m.components.size(), 1u);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.components[0].cov);
  EXPECT_GE(es.eigenvalues().minCoeff(), 1e-6 - 1e-12);
  EXPECT_NO_THROW(entropy_upper_bound(m));
}

TEST(GmmFit, KnownSingleGaussianLikelihood) {
  // for k = 1 EM reduces to the Gaussian MLE, whose log-likelihood has the
  // closed form -n/2 (D log(2 pi) + log det(Sigma_hat) + D)
  RngStream rng(3, "gmm");
  Tensor x = gaussian_cloud(2000, 0.0, 0.0, 0.2, rng);
  GmmModel m = gmm_fit_bic(x, 1, 3);
  const int n = 2000;
  Eigen::MatrixXd xm(n, 2);
  for (int i = 0; i < n; ++i) {
    xm(i, 0) = x(i, 0);
    xm(i, 1) = x(i, 1);
  }
  Eigen::RowVector2d mean = xm.colwise().mean();
  Eigen::MatrixXd centered = xm.rowwise() - mean;
  Eigen::Matrix2d cov = (centered.transpose() * centered) / n;
  const double expected_ll =
      -0.5 * n * (2.0 * std::log(2.0 * 3.14159265358979323846) + std::log(cov.determinant()) + 2.0);
  EXPECT_NEAR(m.log_likelihood, expected_ll, std::abs(expected_ll) * 1e-6);
  const double expected_bic = -2.0 * expected_ll + 5.0 * std::log(static_cast<double>(n));
  EXPECT_NEAR(m.bic, expected_bic, std::abs(expected_bic) * 1e-6);
}

TEST(GmmFit, LogLikelihoodNonDecreasingAcrossIterations) {
  RngStream rng(4, "gmm");
  Tensor x = vstack(gaussian_cloud(300, 0.0, 0.0, 0.15, rng), gaussian_cloud(300, 0.8, 0.5, 0.1, rng));
  for (int k = 1; k <= 3; ++k) {
    std::vector<double> trace = gmm_em_log_likelihood_trace(x, k, 13);
    ASSERT_GE(trace.size(), 2u);
    for (size_t i = 1; i < trace.size(); ++i) EXPECT_GE(trace[i], trace[i - 1] - 1e-9) << "k=" << k;
  }
}

TEST(GmmFit, RejectsTooFewSamples) {
  Tensor x = Tensor::zeros({5, 2});
  EXPECT_THROW(gmm_fit_bic(x, 3, 1), std::invalid_argument);
}

TEST(GmmFit, DeterministicUnderSeed) {
  RngStream rng(5, "gmm");
  Tensor x = vstack(gaussian_cloud(200, 0.0, 0.0, 0.2, rng), gaussian_cloud(200, 1.0, 1.0, 0.2, rng));
  GmmModel a = gmm_fit_bic(x, 4, 21);
  GmmModel b = gmm_fit_bic(x, 4, 21);
  ASSERT_EQ(a.components.size(), b.components.size());
  EXPECT_EQ(a.log_likelihood, b.log_likelihood);
  for (size_t i = 0; i < a.components.size(); ++i) {
    EXPECT_EQ(a.components[i].weight, b.components[i].weight);
    EXPECT_EQ(a.components[i].mean, b.components[i].mean);
  }
}

// --- entropy upper bound ---

TEST(EntropyBound, SingleUnitGaussianInTwoD) {
  GmmModel g = single_component(1.0, 0.0, 0.0, Eigen::Matrix2d::Identity());
  const double e = entropy_upper_bound(g);
  EXPECT_NEAR(e, std::log(1.0 + 2.0 * 3.14159265358979323846), 1e-12);
  EXPECT_NEAR(e, 1.9856, 1e-4);
}

TEST(EntropyBound, TwoEqualCopiesAddLogTwo) {
  GmmModel g = single_component(1.0, 0.0, 0.0, Eigen::Matrix2d::Identity());
  const double base = entropy_upper_bound(g);
  GmmModel two;
  two.dim = 2;
  GmmComponent c;
  c.weight = 0.5;
  c.mean = Eigen::Vector2d(0.0, 0.0);
  c.cov = Eigen::Matrix2d::Identity();
  two.components = {c, c};
  EXPECT_NEAR(entropy_upper_bound(two), base + std::log(2.0), 1e-12);
}

TEST(EntropyBound, DeterminantScalingAddsLogC) {
  const double c = 3.0;
  GmmModel base = single_component(1.0, 0.0, 0.0, Eigen::Matrix2d::Identity());
  Eigen::Matrix2d scaled = Eigen::Matrix2d::Identity();
  scaled(0, 0) = c * c;  // det scaled by c^2
  GmmModel big = single_component(1.0, 0.0, 0.0, scaled);
  EXPECT_NEAR(entropy_upper_bound(big), entropy_upper_bound(base) + std::log(c), 1e-12);
}

TEST(EntropyBound, InvariantToComponentRelabeling) {
  GmmComponent a;
  a.weight = 0.3;
  a.mean = Eigen::Vector2d(0.0, 0.0);
  a.cov = Eigen::Matrix2d::Identity() * 0.5;
  GmmComponent b;
  b.weight = 0.7;
  b.mean = Eigen::Vector2d(1.0, -1.0);
  b.cov = Eigen::Matrix2d::Identity() * 2.0;
  GmmModel ab, ba;
  ab.dim = ba.dim = 2;
  ab.components = {a, b};
  ba.components = {b, a};
  EXPECT_DOUBLE_EQ(entropy_upper_bound(ab), entropy_upper_bound(ba));
}

TEST(EntropyBound, NonPositiveDefiniteCovarianceThrows) {
  Eigen::Matrix2d bad;
  bad << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3 and -1
  GmmModel g = single_component(1.0, 0.0, 0.0, bad);
  EXPECT_THROW(entropy_upper_bound(g), std::invalid_argument);
}

TEST(EntropyBound, RejectsBadWeights) {
  GmmModel g = single_component(0.5, 0.0, 0.0, Eigen::Matrix2d::Identity());
  EXPECT_THROW(entropy_upper_bound(g), std::invalid_argument);
}
