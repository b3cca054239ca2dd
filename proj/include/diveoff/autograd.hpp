#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "diveoff/tensor.hpp"

namespace diveoff {

// Reverse-mode tape over tensor-level operations. The tape is rebuilt per
// minibatch (define-by-run); node indices double as topological order.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

namespace detail {
using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<EMat>;
using ConstMatMap = Eigen::Map<const EMat>;

inline ConstMatMap as_mat(const Tensor& t) { return ConstMatMap(t.data.data(), t.rows(), t.cols()); }
inline MatMap as_mat(Tensor& t) { return MatMap(t.data.data(), t.rows(), t.cols()); }
}  // namespace detail

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Gradient-tracked input (a parameter).
  Var leaf(const Tensor& t) { return push(t, true, nullptr); }

  // Data input; receives no gradient.
  Var constant(Tensor t) { return push(std::move(t), false, nullptr); }

  const Tensor& val(Var v) const { return nodes_[check(v)].value; }

  // Gradient of the last backward() w.r.t. v; zeros if no gradient reached it.
  Tensor grad(Var v) const {
    const Node& n = nodes_[check(v)];
    if (n.grad.data.empty()) return Tensor::zeros(n.value.shape);
    return n.grad;
  }

  void backward(Var loss) {
    Node& top = nodes_[check(loss)];
    require(top.value.size() == 1, "grad: loss must be a scalar");
    grad_mut(loss)[0] = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.back && n.requires_grad && !n.grad.data.empty()) n.back();
    }
  }

  size_t size() const { return nodes_.size(); }
  bool requires_grad(Var v) const { return nodes_[check(v)].requires_grad; }

  // --- used by op implementations ---
  Var push(Tensor value, bool req, std::function<void()> back) {
    nodes_.push_back(Node{std::move(value), Tensor{}, req, std::move(back)});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }
  void set_back(Var v, std::function<void()> back) { nodes_[check(v)].back = std::move(back); }
  Tensor& grad_mut(Var v) {
    Node& n = nodes_[check(v)];
    if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
  }
  bool grad_present(Var v) const { return !nodes_[check(v)].grad.data.empty(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::function<void()> back;
  };

  int check(Var v) const {
    require(v.id >= 0 && v.id < static_cast<int>(nodes_.size()), "tape: invalid var");
    return v.id;
  }

  std::vector<Node> nodes_;
};

// ------------------------------ operations ------------------------------
// Each op appends one node; the backward closure scatters the node's grad to
// its parents (accumulating, so parameters may be reused).

// y = x * W + b  with x:[m,k], W:[k,n], b:[n]
inline Var affine(Tape& tp, Var x, Var W, Var b) {
  const Tensor& xv = tp.val(x);
  const Tensor& wv = tp.val(W);
  const Tensor& bv = tp.val(b);
  require(xv.cols() == wv.rows(), "affine: inner dimensions mismatch");
  require(bv.size() == wv.cols(), "affine: bias length mismatch");
  Tensor y = Tensor::zeros({xv.rows(), wv.cols()});
  {
    auto ym = detail::as_mat(y);
    ym.noalias() = detail::as_mat(xv) * detail::as_mat(wv);
    ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bv.data.data(), bv.size());
  }
  bool req = tp.requires_grad(x) || tp.requires_grad(W) || tp.requires_grad(b);
  Var out = tp.push(std::move(y), req, nullptr);
  if (req) {
    tp.set_back(out, [&tp, x, W, b, out]() {
      const Tensor& g = tp.grad_mut(out);
      auto gm = detail::as_mat(g);
      if (tp.requires_grad(x)) detail::as_mat(tp.grad_mut(x)).noalias() += gm * detail::as_mat(tp.val(W)).transpose();
      if (tp.requires_grad(W)) detail::as_mat(tp.grad_mut(W)).noalias() += detail::as_mat(tp.val(x)).transpose() * gm;
      if (tp.requires_grad(b)) {
        Tensor& gb = tp.grad_mut(b);
        Eigen::Map<Eigen::RowVectorXd>(gb.data.data(), gb.size()) += gm.colwise().sum();
      }
    });
  }
  return out;
}

inline Var relu(Tape& tp, Var x) {
  Tensor y = tp.val(x);
  for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
  bool req = tp.requires_grad(x);
  Var out = tp.push(std::move(y), req, nullptr);
  if (req) {
    tp.set_back(out, [&tp, x, out]() {
      const Tensor& g = tp.grad_mut(out);
      const Tensor& xv = tp.val(x);
      Tensor& gx = tp.grad_mut(x);
      for (int64_t i = 0; i < g.size(); ++i) {
        if (xv[i] > 0.0) gx[i] += g[i];
      }
    });
  }
  return out;
}

// Elementwise clamp; gradient is passed through strictly inside [lo, hi].
inline Var clamp(Tape& tp, Var x, double lo, double hi) {
  Tensor y = tp.val(x);
  for (auto& v : y.data) v = v < lo ? lo : (v > hi ? hi : v);
  bool req = tp.requires_grad(x);
  Var out = tp.push(std::move(y), req, nullptr);
  if (req) {
    tp.set_back(out, [&tp, x, out, lo, hi]() {
      const Tensor& g = tp.grad_mut(out);
      const Tensor& xv = tp.val(x);
      Tensor& gx = tp.grad_mut(x);
      for (int64_t i = 0; i < g.size(); ++i) {
        if (xv[i] > lo && xv[i] < hi) gx[i] += g[i];
      }
    });
  }
  return out;
}

inline Var concat_cols(Tape& tp, Var a, Var b) {
  const Tensor& av = tp.val(a);
  const Tensor& bv = tp.val(b);
  require(av.rows() == bv.rows(), "concat_cols: row count mismatch");
  const int m = av.rows(), ca = av.cols(), cb = bv.cols();
  Tensor y = Tensor::zeros({m, ca + cb});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < ca; ++j) y(i, j) = av(i, j);
    for (int j = 0; j < cb; ++j) y(i, ca + j) = bv(i, j);
  }
  bool req = tp.requires_grad(a) || tp.requires_grad(b);
  Var out = tp.push(std::move(y), req, nullptr);
  if (req) {
    tp.set_back(out, [&tp, a, b, out, m, ca, cb]() {
      const Tensor& g = tp.grad_mut(out);
      if (tp.requires_grad(a)) {
        Tensor& ga = tp.grad_mut(a);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < ca; ++j) ga(i, j) += g(i, j);
      }
      if (tp.requires_grad(b)) {
        Tensor& gb = tp.grad_mut(b);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < cb; ++j) gb(i, j) += g(i, ca + j);
      }
    });
  }
  return out;
}

namespace detail {
template <class Fwd, class Bwd>
inline Var binary_elementwise(Tape& tp, Var a, Var b, Fwd fwd, Bwd bwd) {
  const Tensor& av = tp.val(a);
  const Tensor& bv = tp.val(b);
  require(av.same_shape(bv), "elementwise: shape mismatch");
  Tensor y = Tensor::zeros(av.shape);
  for (int64_t i = 0; i < y.size(); ++i) y[i] = fwd(av[i], bv[i]);
  bool req = tp.requires_grad(a) || tp.requires_grad(b);
  Var out = tp.push(std::move(y), req, nullptr);
  if (req) {
    tp.set_back(out, [&tp, a, b, out, bwd]() {
      const Tensor& g = tp.grad_mut(out);
      const Tensor& av2 = tp.val(a);
      const Tensor& bv2 = tp.val(b);
      const bool ga_on = tp.requires_grad(a), gb_on = tp.requires_grad(b);
      Tensor* ga = ga_on ? &tp.grad_mut(a) : nullptr;
      Tensor* gb = gb_on ? &tp.grad_mut(b) : nullptr;
      for (int64_t i = 0; i < g.size(); ++i) {
        auto [da, db] = bwd(av2[i], bv2[i]);
        if (ga_on) (*ga)[i] += g[i] * da;
        if (gb_on) (*gb)[i] += g[i] * db;
      }
    });
  }
  return out;
}
}  // namespace detail

inline Var add(Tape& tp, Var a, Var b) {
  return detail::binary_elementwise(
      tp, a, b, [](double x, double y) { return x + y; },
      [](double, double) { return std::pair<double, double>{1.0, 1.0}; });
}

inline Var sub(Tape& tp, Var a, Var b) {
  return detail::binary_elementwise(
      tp, a, b, [](double x, double y) { return x - y; },
      [](double, double) { return std::pair<double, double>{1.0, -1.0}; });
}

inline Var mul(Tape& tp, Var a, Var b) {
  return detail::binary_elementwise(
      tp, a, b, [](double x, double y) { return x * y; },
      [](double x, double y) { return std::pair<double, double>{y, x}; });
}

inline Var scale(Tape& tp, Var x, double c) {
  Tensor y = tp.val(x);
  for (auto& v : y.data) v *= c;
  bool req = tp.requires_grad(x);
  Var out = tp.push(std::move(y), req, nullptr);
  if (req) {
    tp.set_back(out, [&tp, x, out, c]() {
      const Tensor& g = tp.grad_mut(out);
      Tensor& gx = tp.grad_mut(x);
      for (int64_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
    });
  }
  return out;
}

inline Var square(Tape& tp, Var x) { return mul(tp, x, x); }

inline Var sum_all(Tape& tp, Var x) {
  double s = 0.0;
  for (double v : tp.val(x).data) s += v;
  bool req = tp.requires_grad(x);
  Var out = tp.push(Tensor::scalar(s), req, nullptr);
  if (req) {
    tp.set_back(out, [&tp, x, out]() {
      const double g = tp.grad_mut(out)[0];
      Tensor& gx = tp.grad_mut(x);
      for (int64_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
  }
  return out;
}

inline Var mean_all(Tape& tp, Var x) {
  const int64_t n = tp.val(x).size();
  require(n > 0, "mean_all: empty tensor");
  return scale(tp, sum_all(tp, x), 1.0 / static_cast<double>(n));
}

// Multiplies row i of x by the constant w[i]. Used to apply stop-gradient
// weights to per-row losses.
inline Var scale_rows(Tape& tp, Var x, Tensor w) {
  const Tensor& xv = tp.val(x);
  require(w.size() == xv.rows(), "scale_rows: weight length mismatch");
  Tensor y = xv;
  const int c = xv.cols();
  for (int i = 0; i < xv.rows(); ++i)
    for (int j = 0; j < c; ++j) y(i, j) *= w[i];
  bool req = tp.requires_grad(x);
  Var out = tp.push(std::move(y), req, nullptr);
  if (req) {
    tp.set_back(out, [&tp, x, out, w = std::move(w), c]() {
      const Tensor& g = tp.grad_mut(out);
      Tensor& gx = tp.grad_mut(x);
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < c; ++j) gx(i, j) += g(i, j) * w[i];
    });
  }
  return out;
}

// Row-wise diagonal-Gaussian log density, summed over dimensions:
// out[i] = sum_d [ -0.5*((x-mu)/sigma)^2 - log_std ] - (d/2) log(2*pi).
// Differentiable w.r.t. mean, log_std and x.
inline Var gaussian_log_prob_rows(Tape& tp, Var mean, Var log_std, Var x) {
  const Tensor& mv = tp.val(mean);
  const Tensor& sv = tp.val(log_std);
  const Tensor& xv = tp.val(x);
  require(mv.same_shape(sv) && mv.same_shape(xv), "gaussian_log_prob: shape mismatch");
  const int m = mv.rows(), d = mv.cols();
  constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)
  Tensor y = Tensor::zeros({m, 1});
  for (int i = 0; i < m; ++i) {
    double lp = -0.5 * d * kLog2Pi;
    for (int j = 0; j < d; ++j) {
      const double s = std::exp(sv(i, j));
      const double u = (xv(i, j) - mv(i, j)) / s;
      lp += -0.5 * u * u - sv(i, j);
    }
    y(i, 0) = lp;
  }
  bool req = tp.requires_grad(mean) || tp.requires_grad(log_std) || tp.requires_grad(x);
  Var out = tp.push(std::move(y), req, nullptr);
  if (req) {
    tp.set_back(out, [&tp, mean, log_std, x, out, m, d]() {
      const Tensor& g = tp.grad_mut(out);
      const Tensor& mv2 = tp.val(mean);
      const Tensor& sv2 = tp.val(log_std);
      const Tensor& xv2 = tp.val(x);
      const bool gm_on = tp.requires_grad(mean), gs_on = tp.requires_grad(log_std), gx_on = tp.requires_grad(x);
      Tensor* gm = gm_on ? &tp.grad_mut(mean) : nullptr;
      Tensor* gs = gs_on ? &tp.grad_mut(log_std) : nullptr;
      Tensor* gx = gx_on ? &tp.grad_mut(x) : nullptr;
      for (int i = 0; i < m; ++i) {
        const double gi = g(i, 0);
        if (gi == 0.0) continue;
        for (int j = 0; j < d; ++j) {
          const double s = std::exp(sv2(i, j));
          const double diff = xv2(i, j) - mv2(i, j);
          const double inv_var = 1.0 / (s * s);
          if (gm_on) (*gm)(i, j) += gi * diff * inv_var;
          if (gx_on) (*gx)(i, j) += -gi * diff * inv_var;
          if (gs_on) (*gs)(i, j) += gi * (diff * diff * inv_var - 1.0);
        }
      }
    });
  }
  return out;
}

// mean + exp(log_std) .* noise, with noise held constant.
inline Var reparam_sample(Tape& tp, Var mean, Var log_std, Tensor noise) {
  const Tensor& mv = tp.val(mean);
  const Tensor& sv = tp.val(log_std);
  require(mv.same_shape(sv) && mv.same_shape(noise), "reparam_sample: shape mismatch");
  Tensor y = mv;
  for (int64_t i = 0; i < y.size(); ++i) y[i] += std::exp(sv[i]) * noise[i];
  bool req = tp.requires_grad(mean) || tp.requires_grad(log_std);
  Var out = tp.push(std::move(y), req, nullptr);
  if (req) {
    tp.set_back(out, [&tp, mean, log_std, out, noise = std::move(noise)]() {
      const Tensor& g = tp.grad_mut(out);
      const Tensor& sv2 = tp.val(log_std);
      const bool gm_on = tp.requires_grad(mean), gs_on = tp.requires_grad(log_std);
      Tensor* gm = gm_on ? &tp.grad_mut(mean) : nullptr;
      Tensor* gs = gs_on ? &tp.grad_mut(log_std) : nullptr;
      for (int64_t i = 0; i < g.size(); ++i) {
        if (gm_on) (*gm)[i] += g[i];
        if (gs_on) (*gs)[i] += g[i] * std::exp(sv2[i]) * noise[i];
      }
    });
  }
  return out;
}

// Row-wise KL( N(mu, diag sigma^2) || N(0, I) ) = sum_d 0.5*(mu^2 + s^2 - 1) - log_std.
inline Var kl_std_normal_rows(Tape& tp, Var mean, Var log_std) {
  const Tensor& mv = tp.val(mean);
  const Tensor& sv = tp.val(log_std);
  require(mv.same_shape(sv), "kl_std_normal: shape mismatch");
  const int m = mv.rows(), d = mv.cols();
  Tensor y = Tensor::zeros({m, 1});
  for (int i = 0; i < m; ++i) {
    double kl = 0.0;
    for (int j = 0; j < d; ++j) {
      const double s2 = std::exp(2.0 * sv(i, j));
      kl += 0.5 * (mv(i, j) * mv(i, j) + s2 - 1.0) - sv(i, j);
    }
    y(i, 0) = kl;
  }
  bool req = tp.requires_grad(mean) || tp.requires_grad(log_std);
  Var out = tp.push(std::move(y), req, nullptr);
  if (req) {
    tp.set_back(out, [&tp, mean, log_std, out, m, d]() {
      const Tensor& g = tp.grad_mut(out);
      const Tensor& mv2 = tp.val(mean);
      const Tensor& sv2 = tp.val(log_std);
      const bool gm_on = tp.requires_grad(mean), gs_on = tp.requires_grad(log_std);
      Tensor* gm = gm_on ? &tp.grad_mut(mean) : nullptr;
      Tensor* gs = gs_on ? &tp.grad_mut(log_std) : nullptr;
      for (int i = 0; i < m; ++i) {
        const double gi = g(i, 0);
        if (gi == 0.0) continue;
        for (int j = 0; j < d; ++j) {
          if (gm_on) (*gm)(i, j) += gi * mv2(i, j);
          if (gs_on) (*gs)(i, j) += gi * (std::exp(2.0 * sv2(i, j)) - 1.0);
        }
      }
    });
  }
  return out;
}

// Row-wise unit-variance Gaussian log density of constant target x at pred:
// out[i] = -0.5*||x_i - pred_i||^2 - (d/2) log(2*pi).
inline Var unit_gaussian_log_prob_rows(Tape& tp, Var pred, Tensor x) {
  const Tensor& pv = tp.val(pred);
  require(pv.same_shape(x), "unit_gaussian_log_prob: shape mismatch");
  const int m = pv.rows(), d = pv.cols();
  constexpr double kLog2Pi = 1.8378770664093454836;
  Tensor y = Tensor::zeros({m, 1});
  for (int i = 0; i < m; ++i) {
    double q = 0.0;
    for (int j = 0; j < d; ++j) {
      const double diff = x(i, j) - pv(i, j);
      q += diff * diff;
    }
    y(i, 0) = -0.5 * q - 0.5 * d * kLog2Pi;
  }
  bool req = tp.requires_grad(pred);
  Var out = tp.push(std::move(y), req, nullptr);
  if (req) {
    tp.set_back(out, [&tp, pred, out, x = std::move(x), m, d]() {
      const Tensor& g = tp.grad_mut(out);
      Tensor& gp = tp.grad_mut(pred);
      for (int i = 0; i < m; ++i) {
        const double gi = g(i, 0);
        if (gi == 0.0) continue;
        for (int j = 0; j < d; ++j) gp(i, j) += gi * (x(i, j) - tp.val(pred)(i, j));
      }
    });
  }
  return out;
}

// Mean squared error against a constant target.
inline Var mse_to_const(Tape& tp, Var pred, Tensor target) {
  const Tensor& pv = tp.val(pred);
  require(pv.size() == target.size(), "mse: size mismatch");
  const int64_t n = pv.size();
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double diff = pv[i] - target[i];
    s += diff * diff;
  }
  bool req = tp.requires_grad(pred);
  Var out = tp.push(Tensor::scalar(s / static_cast<double>(n)), req, nullptr);
  if (req) {
    tp.set_back(out, [&tp, pred, out, target = std::move(target), n]() {
      const double g = tp.grad_mut(out)[0];
      Tensor& gp = tp.grad_mut(pred);
      const Tensor& pv2 = tp.val(pred);
      for (int64_t i = 0; i < n; ++i) gp[i] += g * 2.0 * (pv2[i] - target[i]) / static_cast<double>(n);
    });
  }
  return out;
}

// ------------------------------ finite differences ------------------------------

struct LossEval {
  double value = 0.0;
  std::vector<Tensor> grads;  // aligned with the params list; empty unless requested
};

// Central-difference gradient check. loss_fn re-evaluates the loss at the
// current parameter values and, when asked, returns analytic gradients.
// Returns the max over parameters of |analytic - cd| / max(1e-8, |cd|),
// taken in the L2 norm per parameter tensor (for a scalar parameter this is
// exactly the per-value ratio). Single entries with true gradient below the
// f64 difference noise floor would otherwise dominate the ratio.
inline double fd_check(const std::function<LossEval(bool)>& loss_fn, const std::vector<Tensor*>& params,
                       double step) {
  require(step > 0.0, "fd_check: step must be positive");
  LossEval base = loss_fn(true);
  require(base.grads.size() == params.size(), "fd_check: gradient count mismatch");
  double worst = 0.0;
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor& t = *params[p];
    require(base.grads[p].same_shape(t), "fd_check: gradient shape mismatch");
    double diff2 = 0.0, cd2 = 0.0;
    for (int64_t i = 0; i < t.size(); ++i) {
      const double saved = t[i];
      t[i] = saved + step;
      const double up = loss_fn(false).value;
      t[i] = saved - step;
      const double down = loss_fn(false).value;
      t[i] = saved;
      const double cd = (up - down) / (2.0 * step);
      const double diff = base.grads[p][i] - cd;
      diff2 += diff * diff;
      cd2 += cd * cd;
    }
    const double err = std::sqrt(diff2) / std::max(1e-8, std::sqrt(cd2));
    if (err > worst) worst = err;
  }
  return worst;
}

}  // namespace diveoff
