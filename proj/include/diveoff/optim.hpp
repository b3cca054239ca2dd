#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "diveoff/tensor.hpp"

namespace diveoff {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction over a fixed parameter group. Moment shapes
// mirror the parameters; the step count strictly increases.
class AdamState {
 public:
  AdamState(std::vector<Tensor*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor* p : params_) {
      m_.push_back(Tensor::zeros(p->shape));
      v_.push_back(Tensor::zeros(p->shape));
    }
  }

  void step(const std::vector<Tensor>& grads) {
    require(grads.size() == params_.size(), "adam: gradient count mismatch");
    for (size_t p = 0; p < params_.size(); ++p) {
      require(grads[p].same_shape(*params_[p]), "adam: gradient shape mismatch");
      if (!grads[p].all_finite()) throw std::runtime_error("training diverged: non-finite gradient");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t p = 0; p < params_.size(); ++p) {
      Tensor& w = *params_[p];
      for (int64_t i = 0; i < w.size(); ++i) {
        const double g = grads[p][i];
        m_[p][i] = cfg_.beta1 * m_[p][i] + (1.0 - cfg_.beta1) * g;
        v_[p][i] = cfg_.beta2 * v_[p][i] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m_[p][i] / bc1;
        const double vhat = v_[p][i] / bc2;
        w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
      if (!w.all_finite()) throw std::runtime_error("training diverged: non-finite parameter after Adam step");
    }
  }

  int64_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor*> params_;
  std::vector<Tensor> m_, v_;
  AdamConfig cfg_;
  int64_t t_ = 0;
};

// target <- (1 - tau) * target + tau * online, elementwise.
inline void polyak_update(std::vector<Tensor*> target, const std::vector<const Tensor*>& online, double tau) {
  require(tau >= 0.0 && tau <= 1.0, "polyak: tau must be in [0, 1]");
  require(target.size() == online.size(), "polyak: parameter count mismatch");
  for (size_t p = 0; p < target.size(); ++p) {
    Tensor& t = *target[p];
    const Tensor& o = *online[p];
    require(t.same_shape(o), "polyak: shape mismatch");
    for (int64_t i = 0; i < t.size(); ++i) t[i] = (1.0 - tau) * t[i] + tau * o[i];
  }
}

}  // namespace diveoff
