#pragma once

#include <cmath>

#include "diveoff/tensor.hpp"

namespace diveoff {

constexpr double kLogStdMin = -5.0;
constexpr double kLogStdMax = 2.0;
constexpr double kLog2Pi = 1.8378770664093454836;

inline double clamp_log_std(double v) {
  return v < kLogStdMin ? kLogStdMin : (v > kLogStdMax ? kLogStdMax : v);
}

// Diagonal Gaussian over a vector; log_std is clamped at construction.
struct DiagGaussian {
  Tensor mean;
  Tensor log_std;

  DiagGaussian(Tensor mean_, Tensor log_std_) : mean(std::move(mean_)), log_std(std::move(log_std_)) {
    require(mean.size() == log_std.size(), "DiagGaussian: mean/log_std length mismatch");
    for (auto& v : log_std.data) v = clamp_log_std(v);
  }

  int dim() const { return static_cast<int>(mean.size()); }
};

// Log density summed over dimensions.
inline double gaussian_log_prob(const DiagGaussian& d, const Tensor& x) {
  require(x.size() == d.mean.size(), "gaussian_log_prob: dimension mismatch");
  double lp = -0.5 * d.dim() * kLog2Pi;
  for (int64_t i = 0; i < x.size(); ++i) {
    const double s = std::exp(d.log_std[i]);
    const double u = (x[i] - d.mean[i]) / s;
    lp += -0.5 * u * u - d.log_std[i];
  }
  return lp;
}

// mean + exp(log_std) .* noise; the caller supplies standard-normal noise.
inline Tensor gaussian_sample_reparam(const DiagGaussian& d, const Tensor& noise) {
  require(noise.size() == d.mean.size(), "gaussian_sample_reparam: dimension mismatch");
  Tensor out = d.mean;
  for (int64_t i = 0; i < out.size(); ++i) out[i] += std::exp(d.log_std[i]) * noise[i];
  return out;
}

// KL( N(mu, diag sigma^2) || N(0, I) ), summed over dimensions.
inline double kl_to_standard_normal(const DiagGaussian& d) {
  double kl = 0.0;
  for (int64_t i = 0; i < d.mean.size(); ++i) {
    const double s2 = std::exp(2.0 * d.log_std[i]);
    kl += 0.5 * (d.mean[i] * d.mean[i] + s2 - 1.0) - d.log_std[i];
  }
  return kl;
}

}  // namespace diveoff
