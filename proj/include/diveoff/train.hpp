#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>

#include "diveoff/losses.hpp"
#include "diveoff/optim.hpp"

namespace diveoff {

enum class Algo { Diveoff, AwaclVae, AwaclVaeDiayn };

inline std::string algo_name(Algo a) {
  switch (a) {
    case Algo::Diveoff: return "diveoff";
    case Algo::AwaclVae: return "awacl-vae";
    case Algo::AwaclVaeDiayn: return "awacl-vae-diayn";
  }
  return "diveoff";
}

inline Algo algo_from_name(const std::string& s) {
  if (s == "diveoff") return Algo::Diveoff;
  if (s == "awacl-vae") return Algo::AwaclVae;
  if (s == "awacl-vae-diayn") return Algo::AwaclVaeDiayn;
  throw std::invalid_argument("unknown algorithm: " + s);
}

using MetricsSink = std::function<void(const json&)>;
// invoked at every log interval with the current models and step
using SnapshotFn = std::function<void(const ModelBundle&, int64_t)>;

struct MInfoLosses {
  double posterior_wml = 0.0;
  double weighted_vae = 0.0;
  double info = 0.0;
  double total = 0.0;
};

// Owns the models and one Adam state per loss group (critic / e-step /
// m-info, plus the pretraining group), matching the per-loss learning rates.
class Trainer {
 public:
  Trainer(const Dataset& dataset, const TrainConfig& cfg, Algo algo)
      : dataset_(dataset), cfg_(cfg), algo_(algo) {
    cfg.validate();
    require(dataset.norm.applied, "train: dataset must be normalized");
    RngStream init_rng(cfg.seed, "train/init");
    ModelDims dims;
    dims.hidden = cfg.hidden;
    models_ = ModelBundle::init(dims, init_rng);
    models_.norm = dataset.norm;
    if (algo == Algo::AwaclVaeDiayn) {
      RngStream diayn_rng(cfg.seed, "train/diayn");
      diayn_.net = GaussianHeadNet::init(dims.state, dims.hidden, dims.latent, diayn_rng);
      std::vector<Tensor*> dp;
      diayn_.net.collect(dp);
      adam_diayn_.emplace(dp, AdamConfig{cfg.vae_lr});
    }
    adam_critic_.emplace(models_.critic_params(), AdamConfig{cfg.critic_lr});
    adam_actor_.emplace(models_.policy_params(), AdamConfig{cfg.actor_lr});
    adam_vae_.emplace(models_.vae_params(), AdamConfig{cfg.vae_lr});
    std::vector<Tensor*> m_info_params = models_.vae_params();
    for (Tensor* t : models_.policy_params()) m_info_params.push_back(t);
    adam_m_info_.emplace(m_info_params, AdamConfig{cfg.m_info_lr});
  }

  ModelBundle& models() { return models_; }
  const ModelBundle& models() const { return models_; }
  const StateEncoder& diayn_encoder() const { return diayn_; }
  int64_t step() const { return step_; }

  // Unweighted VAE objective on phi, psi; used verbatim for pretraining.
  double vae_pretrain_step(const Batch& batch, RngStream& rng) {
    Tensor eps = standard_normal(batch.size(), models_.dims.latent, rng);
    Tensor ones = Tensor::full({batch.size()}, 1.0);
    Tape tp;
    GaussianHeadVars post = register_head_net(tp, models_.posterior.net);
    DecoderVars dec = register_decoder(tp, models_.decoder);
    Var loss = build_weighted_vae_loss(tp, post, dec, batch.s, batch.a, eps, ones);
    const double value = tp.val(loss)[0];
    require_finite(value, "vae pretrain loss");
    tp.backward(loss);
    std::vector<Var> order;
    collect_vars(post, order);
    collect_vars(dec, order);
    adam_vae_->step(grads_for(tp, order));
    return value;
  }

  void vae_pretrain(int steps, RngStream& rng, const MetricsSink& sink = nullptr) {
    for (int t = 1; t <= steps; ++t) {
      Batch batch = sample_batch(dataset_, cfg_.batch_size, rng);
      const double loss = vae_pretrain_step(batch, rng);
      if (sink && (t % cfg_.log_interval == 0 || t == steps)) {
        sink(json{{"phase", "pretrain"}, {"step", t}, {"vae_loss", loss}});
      }
    }
  }

  // One critic regression step: targets from the frozen target pair with the
  // done mask, one Adam step, then a polyak target update.
  double critic_update(const Batch& batch, const Tensor& z, RngStream& rng) {
    const int m = batch.size();
    Tensor noise = standard_normal(m, models_.dims.action, rng);
    Tensor y = critic_targets(models_, batch.s_next, z, effective_reward(batch, z), batch.done,
                              cfg_.discount, noise, cfg_.action_clip);

    Tape tp;
    MlpVars q1 = register_mlp(tp, models_.critics.q1.net);
    MlpVars q2 = register_mlp(tp, models_.critics.q2.net);
    Var loss = build_critic_loss(tp, q1, q2, batch.s, batch.a, z, y);
    const double value = tp.val(loss)[0];
    require_finite(value, "critic loss");
    tp.backward(loss);
    std::vector<Var> order;
    collect_vars(q1, order);
    collect_vars(q2, order);
    adam_critic_->step(grads_for(tp, order));

    std::vector<const Tensor*> online;
    models_.critics.q1.net.collect(online);
    models_.critics.q2.net.collect(online);
    polyak_update(models_.critic_target_params(), online, cfg_.tau);
    ++step_;
    return value;
  }

  struct EStepResult {
    double loss = 0.0;
    double w_mean = 0.0;
    double w_max = 0.0;
  };

  // Advantage-weighted log-likelihood step on the policy.
  EStepResult e_step_update(const Batch& batch, const Tensor& z, RngStream& rng) {
    Tensor adv = advantage_batch(models_, batch.s, batch.a, z, cfg_, rng);
    Tensor w = weight_pi_batch(adv, cfg_);
    EStepResult res;
    for (int i = 0; i < batch.size(); ++i) {
      res.w_mean += w[i];
      res.w_max = std::max(res.w_max, w[i]);
    }
    res.w_mean /= batch.size();

    Tape tp;
    GaussianHeadVars pol = register_head_net(tp, models_.policy.net);
    Var loss = build_e_step_loss(tp, pol, batch.s, z, batch.a, w);
    res.loss = tp.val(loss)[0];
    require_finite(res.loss, "e-step loss");
    tp.backward(loss);
    std::vector<Var> order;
    collect_vars(pol, order);
    adam_actor_->step(grads_for(tp, order));
    return res;
  }

  // Joint M-step + mutual-information step on phi, psi, theta at the m-info
  // learning rate. z targets come from a frozen snapshot of the posterior
  // taken at the start of the update.
  MInfoLosses m_info_update(const Batch& batch, RngStream& rng) {
    const int m = batch.size();
    const GaussianHeadNet q_old = models_.posterior.net;  // per-update frozen copy

    // p^{beta,pi} mixture: per row, keep the dataset action with prob 0.5,
    // else swap in a policy action at a prior-sampled latent (stop-gradient).
    Tensor coin = Tensor::zeros({m});
    for (int i = 0; i < m; ++i) coin[i] = rng.uniform01();
    Tensor z_prior_mix = standard_normal(m, models_.dims.latent, rng);
    Tensor mix_noise = standard_normal(m, models_.dims.action, rng);
    Tensor a_policy = clipped_policy_sample(models_, batch.s, z_prior_mix, mix_noise, cfg_.action_clip);
    Tensor a_used = batch.a;
    for (int i = 0; i < m; ++i) {
      if (coin[i] >= 0.5) {
        a_used(i, 0) = a_policy(i, 0);
        a_used(i, 1) = a_policy(i, 1);
      }
    }
    // z ~ q_old(.|s, a_used), treated as data
    Tensor z_old = Tensor::zeros({m, models_.dims.latent});
    {
      auto [mean, log_std] = q_old.dist(hstack(batch.s, a_used));
      for (int64_t i = 0; i < z_old.size(); ++i) z_old[i] = mean[i] + std::exp(log_std[i]) * rng.normal();
    }
    Tensor adv_wml = advantage_batch(models_, batch.s, a_used, z_old, cfg_, rng);
    Tensor w_q = weight_q_batch(adv_wml, cfg_);

    // weighted VAE inputs; the weight uses the same reparameterized z value
    Tensor w_vae = Tensor::zeros({m});
    Tensor eps_vae = standard_normal(m, models_.dims.latent, rng);
    {
      auto [mean, log_std] = posterior_dist_batch(models_.posterior, batch.s, batch.a);
      Tensor z_vae = mean;
      for (int64_t i = 0; i < z_vae.size(); ++i) z_vae[i] += std::exp(log_std[i]) * eps_vae[i];
      Tensor adv_vae = advantage_batch(models_, batch.s, batch.a, z_vae, cfg_, rng);
      w_vae = weight_pi_batch(adv_vae, cfg_);
    }

    // info term inputs
    Tensor z_info = standard_normal(m, models_.dims.latent, rng);
    Tensor eps_info = standard_normal(m, models_.dims.action, rng);

    Tape tp;
    GaussianHeadVars post = register_head_net(tp, models_.posterior.net);
    DecoderVars dec = register_decoder(tp, models_.decoder);
    GaussianHeadVars pol = register_head_net(tp, models_.policy.net);

    Var l_wml = build_posterior_wml_loss(tp, post, batch.s, a_used, z_old, w_q);
    Var l_vae = build_weighted_vae_loss(tp, post, dec, batch.s, batch.a, eps_vae, w_vae);
    Var l_info = build_info_loss(tp, post, pol, batch.s, z_info, eps_info);
    Var loss = add(tp, add(tp, l_wml, l_vae), scale(tp, l_info, cfg_.info_weight));

    MInfoLosses out;
    out.posterior_wml = tp.val(l_wml)[0];
    out.weighted_vae = tp.val(l_vae)[0];
    out.info = tp.val(l_info)[0];
    out.total = tp.val(loss)[0];
    require_finite(out.total, "m-info loss");
    tp.backward(loss);
    std::vector<Var> order;
    collect_vars(post, order);
    collect_vars(dec, order);
    collect_vars(pol, order);
    adam_m_info_->step(grads_for(tp, order));
    return out;
  }

  // Maximum-likelihood update of the DIAYN state-only encoder on (s, z).
  double diayn_update(const Batch& batch, const Tensor& z) {
    Tape tp;
    GaussianHeadVars enc = register_head_net(tp, diayn_.net);
    DistVars dist = head_net_dist(tp, enc, tp.constant(batch.s));
    Var lp = gaussian_log_prob_rows(tp, dist.mean, dist.log_std, tp.constant(z));
    Var loss = scale(tp, mean_all(tp, lp), -1.0);
    const double value = tp.val(loss)[0];
    require_finite(value, "diayn encoder loss");
    tp.backward(loss);
    std::vector<Var> order;
    collect_vars(enc, order);
    adam_diayn_->step(grads_for(tp, order));
    return value;
  }

 private:
  Tensor effective_reward(const Batch& batch, const Tensor& z) {
    if (algo_ != Algo::AwaclVaeDiayn || cfg_.diayn_coef == 0.0) return batch.r;
    Tensor aux = diayn_reward_batch(diayn_, batch.s, z);
    Tensor r = batch.r;
    for (int i = 0; i < batch.size(); ++i) r[i] += cfg_.diayn_coef * aux[i];
    return r;
  }

  const Dataset& dataset_;
  TrainConfig cfg_;
  Algo algo_;
  ModelBundle models_;
  StateEncoder diayn_;
  std::optional<AdamState> adam_critic_, adam_actor_, adam_vae_, adam_m_info_, adam_diayn_;
  int64_t step_ = 0;
};

struct TrainResult {
  ModelBundle models;
  StateEncoder diayn;
  int64_t steps_done = 0;
};

// Algorithm: pretrain the VAE, then per step sample a batch, draw z from the
// posterior, update the critic, and every d_interval steps run the policy
// E-step followed by the joint m-info update (DiveOff) or the E-step alone
// (baselines, whose posterior stays frozen after pretraining).
inline TrainResult train_impl(const Dataset& dataset, const TrainConfig& cfg, Algo algo,
                              const MetricsSink& sink = nullptr, const SnapshotFn& snapshot = nullptr) {
  Trainer trainer(dataset, cfg, algo);
  RngStream pre_rng(cfg.seed, "train/pretrain");
  trainer.vae_pretrain(cfg.vae_pretrain_steps, pre_rng, sink);

  RngStream loop_rng(cfg.seed, "train/loop");
  double critic_loss = 0.0;
  Trainer::EStepResult e_step;
  MInfoLosses m_info;
  double diayn_loss = 0.0;
  for (int t = 1; t <= cfg.total_steps; ++t) {
    Batch batch = sample_batch(dataset, cfg.batch_size, loop_rng);
    Tensor z = sample_posterior_z(trainer.models(), batch.s, batch.a, loop_rng);
    critic_loss = trainer.critic_update(batch, z, loop_rng);
    if (algo == Algo::AwaclVaeDiayn) diayn_loss = trainer.diayn_update(batch, z);
    if (t % cfg.d_interval == 0) {
      e_step = trainer.e_step_update(batch, z, loop_rng);
      if (algo == Algo::Diveoff) m_info = trainer.m_info_update(batch, loop_rng);
    }
    if (t % cfg.log_interval == 0 || t == cfg.total_steps) {
      if (sink) {
        json rec{{"phase", "train"},         {"step", t},
                 {"critic_loss", critic_loss}, {"e_step_loss", e_step.loss},
                 {"w_pi_mean", e_step.w_mean}, {"w_pi_max", e_step.w_max}};
        if (algo == Algo::Diveoff) {
          rec["posterior_wml_loss"] = m_info.posterior_wml;
          rec["weighted_vae_loss"] = m_info.weighted_vae;
          rec["info_loss"] = m_info.info;
        }
        if (algo == Algo::AwaclVaeDiayn) rec["diayn_loss"] = diayn_loss;
        sink(rec);
      }
      if (snapshot) snapshot(trainer.models(), t);
    }
  }
  return TrainResult{trainer.models(), trainer.diayn_encoder(), trainer.step()};
}

inline TrainResult train(const Dataset& dataset, const TrainConfig& cfg, const MetricsSink& sink = nullptr,
                         const SnapshotFn& snapshot = nullptr) {
  return train_impl(dataset, cfg, Algo::Diveoff, sink, snapshot);
}

inline TrainResult train_baseline(const Dataset& dataset, const TrainConfig& cfg, Algo variant,
                                  const MetricsSink& sink = nullptr, const SnapshotFn& snapshot = nullptr) {
  require(variant == Algo::AwaclVae || variant == Algo::AwaclVaeDiayn,
          "train_baseline: variant must be awacl-vae or awacl-vae-diayn");
  return train_impl(dataset, cfg, variant, sink, snapshot);
}

}  // namespace diveoff
