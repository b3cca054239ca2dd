#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "diveoff/autograd.hpp"
#include "diveoff/models.hpp"
#include "diveoff/rng.hpp"

namespace diveoff {

// Every hyperparameter of the training loop plus seed. Learning rates,
// batch size, discount, target rate, update interval, score scalings and
// the info weight follow the published defaults for this method; pretrain
// and total step counts are sized for the toy task.
struct TrainConfig {
  double discount = 0.99;
  int batch_size = 256;
  double critic_lr = 3e-4;
  double actor_lr = 3e-4;
  double vae_lr = 3e-4;     // posterior/decoder pretraining
  double m_info_lr = 9e-5;  // joint M-step + info update
  double tau = 5e-3;
  int d_interval = 2;
  double inv_alpha_pi = 3.0;
  double inv_alpha_q = 1.0;
  double info_weight = 2.0;  // lambda
  int vae_pretrain_steps = 2000;
  int total_steps = 50000;
  double weight_clip = 100.0;  // W_max
  int n_v = 1;                 // policy samples for the value estimate
  int n_z = 1;                 // latent samples per datum in the weighted VAE
  int hidden = 64;
  double diayn_coef = 1.0;
  int log_interval = 500;
  // Policy action samples feeding the critics (bootstrap targets and value
  // estimates) are clipped to the executable action box, as in double-clipped
  // Q-learning. Actions are in normalized units, so the box is [-1, 1].
  double action_clip = 1.0;
  uint64_t seed = 0;

  void validate() const {
    require(discount > 0.0 && discount <= 1.0, "config: discount must be in (0, 1]");
    require(batch_size >= 1, "config: batch_size must be >= 1");
    require(critic_lr > 0 && critic_lr <= 1 && actor_lr > 0 && actor_lr <= 1, "config: lr must be in (0, 1]");
    require(vae_lr > 0 && vae_lr <= 1 && m_info_lr > 0 && m_info_lr <= 1, "config: lr must be in (0, 1]");
    require(tau > 0.0 && tau <= 1.0, "config: tau must be in (0, 1]");
    require(d_interval >= 1, "config: d_interval must be >= 1");
    require(inv_alpha_pi > 0.0 && inv_alpha_q > 0.0, "config: inverse temperatures must be positive");
    require(info_weight >= 0.0, "config: info weight must be >= 0");
    require(vae_pretrain_steps >= 0 && total_steps >= 0, "config: step counts must be >= 0");
    require(weight_clip > 0.0, "config: weight clip must be positive");
    require(n_v >= 1 && n_z >= 1, "config: sample counts must be >= 1");
    require(hidden >= 1, "config: hidden width must be >= 1");
    require(log_interval >= 1, "config: log interval must be >= 1");
  }
};

struct Batch {
  Tensor s, a, r, s_next, done;  // done as 0/1 doubles
  int size() const { return s.rows(); }
};

inline Batch batch_from_indices(const Dataset& d, const std::vector<size_t>& idx) {
  const int m = static_cast<int>(idx.size());
  Batch b;
  b.s = Tensor::zeros({m, 2});
  b.a = Tensor::zeros({m, 2});
  b.r = Tensor::zeros({m});
  b.s_next = Tensor::zeros({m, 2});
  b.done = Tensor::zeros({m});
  for (int i = 0; i < m; ++i) {
    const size_t k = idx[i];
    b.s(i, 0) = d.s(k, 0);
    b.s(i, 1) = d.s(k, 1);
    b.a(i, 0) = d.a(k, 0) / d.norm.action_scale;
    b.a(i, 1) = d.a(k, 1) / d.norm.action_scale;
    b.r[i] = d.r[k];
    b.s_next(i, 0) = d.s_next(k, 0);
    b.s_next(i, 1) = d.s_next(k, 1);
    b.done[i] = d.done[k] ? 1.0 : 0.0;
  }
  return b;
}

// Uniform sample with replacement.
inline Batch sample_batch(const Dataset& d, int batch_size, RngStream& rng) {
  require(d.size() > 0, "sample_batch: empty dataset");
  std::vector<size_t> idx(batch_size);
  for (auto& k : idx) k = rng.index(d.size());
  return batch_from_indices(d, idx);
}

inline Tensor standard_normal(int rows, int cols, RngStream& rng) {
  Tensor t = Tensor::zeros({rows, cols});
  for (auto& v : t.data) v = rng.normal();
  return t;
}

// One z per row from q_phi(z|s, a); carries no gradient.
inline Tensor sample_posterior_z(const ModelBundle& m, const Tensor& s, const Tensor& a, RngStream& rng) {
  auto [mean, log_std] = posterior_dist_batch(m.posterior, s, a);
  Tensor z = mean;
  for (int64_t i = 0; i < z.size(); ++i) z[i] += std::exp(log_std[i]) * rng.normal();
  return z;
}

// Policy sample clipped to the action range actually executable in the env.
inline Tensor clipped_policy_sample(const ModelBundle& m, const Tensor& s, const Tensor& z,
                                    const Tensor& noise, double action_clip) {
  Tensor a = policy_sample_batch(m.policy, s, z, noise);
  for (auto& v : a.data) v = v < -action_clip ? -action_clip : (v > action_clip ? action_clip : v);
  return a;
}

// A = min_j Q_j(s, a, z) - V_hat(s, z), with V_hat the mean over n_v
// reparameterized policy actions of min_j Q_j. Computed entirely off-tape, so
// it never carries gradient when used as a weight.
inline Tensor advantage_batch_with_noise(const ModelBundle& m, const Tensor& s, const Tensor& a,
                                         const Tensor& z, const std::vector<Tensor>& noises,
                                         double action_clip) {
  require(!noises.empty(), "advantage: need at least one value-estimate sample");
  Tensor qa = min_q_batch(m.critics.q1.net, m.critics.q2.net, s, a, z);
  Tensor vhat = Tensor::zeros({s.rows()});
  for (const Tensor& noise : noises) {
    Tensor a_tilde = clipped_policy_sample(m, s, z, noise, action_clip);
    Tensor qv = min_q_batch(m.critics.q1.net, m.critics.q2.net, s, a_tilde, z);
    for (int i = 0; i < s.rows(); ++i) vhat[i] += qv[i];
  }
  Tensor adv = qa;
  for (int i = 0; i < s.rows(); ++i) adv[i] -= vhat[i] / static_cast<double>(noises.size());
  return adv;
}

inline Tensor advantage_batch(const ModelBundle& m, const Tensor& s, const Tensor& a, const Tensor& z,
                              const TrainConfig& cfg, RngStream& rng) {
  std::vector<Tensor> noises;
  noises.reserve(cfg.n_v);
  for (int k = 0; k < cfg.n_v; ++k) noises.push_back(standard_normal(s.rows(), m.dims.action, rng));
  return advantage_batch_with_noise(m, s, a, z, noises, cfg.action_clip);
}

// y_i = r_i + (1 - done_i) * gamma * min_j Q_target_j(s'_i, a'_i, z_i), with
// a' sampled from the policy at the given noise and clipped to the action
// range.
inline Tensor critic_targets(const ModelBundle& m, const Tensor& s_next, const Tensor& z, const Tensor& r,
                             const Tensor& done, double discount, const Tensor& noise, double action_clip) {
  Tensor a_next = clipped_policy_sample(m, s_next, z, noise, action_clip);
  Tensor q_next = target_min_q_batch(m.critics, s_next, a_next, z);
  Tensor y = Tensor::zeros({r.rows()});
  for (int i = 0; i < r.rows(); ++i) y[i] = r[i] + (1.0 - done[i]) * discount * q_next[i];
  return y;
}

// W_pi = min(exp(A / alpha_pi), W_max)
inline Tensor weight_pi_batch(const Tensor& adv, const TrainConfig& cfg) {
  Tensor w = adv;
  for (auto& v : w.data) v = std::min(std::exp(cfg.inv_alpha_pi * v), cfg.weight_clip);
  return w;
}

inline double weight_pi(double adv, const TrainConfig& cfg) {
  require_finite(adv, "weight_pi advantage");
  return std::min(std::exp(cfg.inv_alpha_pi * adv), cfg.weight_clip);
}

// W_q = exp(A / alpha_q) clipped, then normalized so the batch mean is 1
// (the 1/Z_q partition factor approximated per batch).
inline Tensor weight_q_batch(const Tensor& adv, const TrainConfig& cfg) {
  require(adv.size() > 0, "weight_q: empty batch");
  Tensor w = adv;
  double mean = 0.0;
  for (auto& v : w.data) {
    v = std::min(std::exp(cfg.inv_alpha_q * v), cfg.weight_clip);
    mean += v;
  }
  mean /= static_cast<double>(w.size());
  for (auto& v : w.data) v /= mean;
  return w;
}

// ------------------------------ tape-side model views ------------------------------

struct GaussianHeadVars {
  MlpVars trunk, mean_head, log_std_head;
};

inline GaussianHeadVars register_head_net(Tape& tp, const GaussianHeadNet& n) {
  return {register_mlp(tp, n.trunk), register_mlp(tp, n.mean_head), register_mlp(tp, n.log_std_head)};
}

inline void collect_vars(const GaussianHeadVars& v, std::vector<Var>& out) {
  collect_vars(v.trunk, out);
  collect_vars(v.mean_head, out);
  collect_vars(v.log_std_head, out);
}

struct DistVars {
  Var mean, log_std;
};

inline DistVars head_net_dist(Tape& tp, const GaussianHeadVars& net, Var input) {
  Var h = mlp_hidden_forward(tp, net.trunk, input);
  Var mean = mlp_forward(tp, net.mean_head, h);
  Var log_std = clamp(tp, mlp_forward(tp, net.log_std_head, h), kLogStdMin, kLogStdMax);
  return {mean, log_std};
}

struct DecoderVars {
  MlpVars trunk, mean_head;
};

inline DecoderVars register_decoder(Tape& tp, const LikelihoodDecoder& d) {
  return {register_mlp(tp, d.trunk), register_mlp(tp, d.mean_head)};
}

inline void collect_vars(const DecoderVars& v, std::vector<Var>& out) {
  collect_vars(v.trunk, out);
  collect_vars(v.mean_head, out);
}

inline Var decoder_mean(Tape& tp, const DecoderVars& d, Var z) {
  return mlp_forward(tp, d.mean_head, mlp_hidden_forward(tp, d.trunk, z));
}

// ------------------------------ loss builders ------------------------------
// All stochastic inputs (sampled z, actions, noises) and all stop-gradient
// weights are precomputed constants, so each builder is a pure function of
// the registered parameters.

// Critic regression of both heads onto the fixed target y.
inline Var build_critic_loss(Tape& tp, const MlpVars& q1, const MlpVars& q2, const Tensor& s, const Tensor& a,
                             const Tensor& z, const Tensor& y) {
  Var input = tp.constant(hstack(s, a, z));
  Var mse1 = mse_to_const(tp, mlp_forward(tp, q1, input), y);
  Var mse2 = mse_to_const(tp, mlp_forward(tp, q2, input), y);
  return add(tp, mse1, mse2);
}

// E-step: minimizing this maximizes E[W_pi log pi(a|s,z)].
inline Var build_e_step_loss(Tape& tp, const GaussianHeadVars& policy, const Tensor& s, const Tensor& z,
                             const Tensor& a, const Tensor& w_pi) {
  Var input = tp.constant(hstack(s, z));
  DistVars dist = head_net_dist(tp, policy, input);
  Var lp = gaussian_log_prob_rows(tp, dist.mean, dist.log_std, tp.constant(a));
  return scale(tp, mean_all(tp, scale_rows(tp, lp, w_pi)), -1.0);
}

// Posterior weighted maximum likelihood: -mean(W_q log q_phi(z_old | s, a_used)).
inline Var build_posterior_wml_loss(Tape& tp, const GaussianHeadVars& posterior, const Tensor& s,
                                    const Tensor& a_used, const Tensor& z_old, const Tensor& w_q) {
  Var input = tp.constant(hstack(s, a_used));
  DistVars dist = head_net_dist(tp, posterior, input);
  Var lp = gaussian_log_prob_rows(tp, dist.mean, dist.log_std, tp.constant(z_old));
  return scale(tp, mean_all(tp, scale_rows(tp, lp, w_q)), -1.0);
}

// Weighted VAE: -mean(W_pi * (-KL(q || p) + log p_psi(s, a | z))), z drawn by
// reparameterization with fixed eps so the gradient reaches the encoder.
inline Var build_weighted_vae_loss(Tape& tp, const GaussianHeadVars& posterior, const DecoderVars& decoder,
                                   const Tensor& s, const Tensor& a, const Tensor& eps_z, const Tensor& w) {
  Var input = tp.constant(hstack(s, a));
  DistVars enc = head_net_dist(tp, posterior, input);
  Var kl = kl_std_normal_rows(tp, enc.mean, enc.log_std);
  Var z = reparam_sample(tp, enc.mean, enc.log_std, eps_z);
  Var loglik = unit_gaussian_log_prob_rows(tp, decoder_mean(tp, decoder, z), hstack(s, a));
  Var elbo = sub(tp, loglik, kl);
  return scale(tp, mean_all(tp, scale_rows(tp, elbo, w)), -1.0);
}

// Mutual-information term: -mean(log q_phi(z_prior | s, a_tilde)), with
// a_tilde reparameterized from the policy so gradient reaches theta through
// the action and phi through the density.
inline Var build_info_loss(Tape& tp, const GaussianHeadVars& posterior, const GaussianHeadVars& policy,
                           const Tensor& s, const Tensor& z_prior, const Tensor& eps_a) {
  Var policy_input = tp.constant(hstack(s, z_prior));
  DistVars pol = head_net_dist(tp, policy, policy_input);
  Var a_tilde = reparam_sample(tp, pol.mean, pol.log_std, eps_a);
  Var enc_input = concat_cols(tp, tp.constant(s), a_tilde);
  DistVars enc = head_net_dist(tp, posterior, enc_input);
  Var lp = gaussian_log_prob_rows(tp, enc.mean, enc.log_std, tp.constant(z_prior));
  return scale(tp, mean_all(tp, lp), -1.0);
}

// DIAYN auxiliary reward r_info = log q(z|s) under the state-only encoder.
inline double diayn_reward(const StateEncoder& enc, const Vec2& s_norm, const Vec2& z) {
  auto [mean, log_std] = enc.net.dist(row2(s_norm.x, s_norm.y));
  DiagGaussian d(Tensor::vec({mean(0, 0), mean(0, 1)}), Tensor::vec({log_std(0, 0), log_std(0, 1)}));
  return gaussian_log_prob(d, Tensor::vec({z.x, z.y}));
}

inline Tensor diayn_reward_batch(const StateEncoder& enc, const Tensor& s, const Tensor& z) {
  auto [mean, log_std] = enc.net.dist(s);
  const int m = mean.rows(), d = mean.cols();
  Tensor out = Tensor::zeros({m});
  for (int i = 0; i < m; ++i) {
    double lp = -0.5 * d * kLog2Pi;
    for (int j = 0; j < d; ++j) {
      const double sd = std::exp(log_std(i, j));
      const double u = (z(i, j) - mean(i, j)) / sd;
      lp += -0.5 * u * u - log_std(i, j);
    }
    out[i] = lp;
  }
  return out;
}

// Gradients aligned with a var list (the Adam parameter order).
inline std::vector<Tensor> grads_for(Tape& tp, const std::vector<Var>& vars) {
  std::vector<Tensor> out;
  out.reserve(vars.size());
  for (Var v : vars) out.push_back(tp.grad(v));
  return out;
}

}  // namespace diveoff
