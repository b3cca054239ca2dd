#include <gtest/gtest.h>

#include <cmath>

#include "diveoff/train.hpp"

using namespace diveoff;

namespace {

TrainConfig small_config(uint64_t seed = 0) {
  TrainConfig cfg;
  cfg.hidden = 8;
  cfg.batch_size = 16;
  cfg.vae_pretrain_steps = 20;
  cfg.total_steps = 40;
  cfg.log_interval = 10;
  cfg.seed = seed;
  return cfg;
}

Dataset toy_dataset(uint64_t seed = 1) {
  EnvConfig cfg;
  Dataset d = generate_dataset(cfg, default_styles(2), 6, seed);
  normalize_states(d);
  return d;
}

uint64_t hash_params(std::vector<Tensor*> params) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (Tensor* t : params) h = fnv1a64(t->data.data(), t->data.size() * sizeof(double), h);
  return h;
}

// Two-transition deterministic chain: s0 -> s1 (r = 0), s1 -> terminal
// (r = 1). The value-iteration fixed point is Q(s0) = gamma, Q(s1) = 1.
Dataset chain_dataset() {
  Dataset d;
  d.s = Tensor::matrix(2, 2, {0.2, 0.5, 0.8, 0.5});
  d.a = Tensor::matrix(2, 2, {0.05, 0.0, 0.05, 0.0});
  d.r = Tensor::vec({0.0, 1.0});
  d.s_next = Tensor::matrix(2, 2, {0.8, 0.5, 0.8, 0.5});
  d.done = {0, 1};
  d.meta.env = EnvConfig{};
  normalize_states(d);
  return d;
}

std::array<double, 2> value_iteration_oracle(double gamma) {
  // independent fixed-point iteration over the tabular chain
  double q0 = 0.0, q1 = 0.0;
  for (int it = 0; it < 10000; ++it) {
    const double n0 = 0.0 + gamma * q1;  // bootstraps from s1
    const double n1 = 1.0;               // terminal transition
    q0 = n0;
    q1 = n1;
  }
  return {q0, q1};
}

}  // namespace

TEST(CriticOracle, ChainConvergesToValueIteration) {
  Dataset d = chain_dataset();
  TrainConfig cfg;
  cfg.hidden = 32;
  cfg.batch_size = 32;
  cfg.seed = 3;
  Trainer trainer(d, cfg, Algo::Diveoff);

  // pin the policy at the dataset action and collapse sampling spread so the
  // bootstrap action matches the data
  ModelBundle& m = trainer.models();
  m.policy.net.mean_head.biases[0] = Tensor::vec({1.0, 0.0});  // dataset action in normalized units
  for (auto& v : m.policy.net.log_std_head.biases[0].data) v = kLogStdMin - 1.0;
  for (auto& v : m.posterior.net.log_std_head.biases[0].data) v = kLogStdMin - 1.0;

  RngStream rng(cfg.seed, "chain");
  Batch full = batch_from_indices(d, {0, 1});
  for (int t = 0; t < 5000; ++t) {
    Batch b = sample_batch(d, cfg.batch_size, rng);
    Tensor z = sample_posterior_z(trainer.models(), b.s, b.a, rng);
    trainer.critic_update(b, z, rng);
  }

  const auto oracle = value_iteration_oracle(cfg.discount);
  EXPECT_NEAR(oracle[0], 0.99, 1e-12);
  EXPECT_NEAR(oracle[1], 1.0, 1e-12);

  Tensor z = sample_posterior_z(trainer.models(), full.s, full.a, rng);
  auto [q1, q2] = critic_q_batch(trainer.models().critics, full.s, full.a, z);
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(q1(i, 0), oracle[i], 1e-2) << "q1 state " << i;
    EXPECT_NEAR(q2(i, 0), oracle[i], 1e-2) << "q2 state " << i;
  }
}

TEST(Train, ZeroStepsReturnsPretrainedModelsOnly) {
  Dataset d = toy_dataset();
  TrainConfig cfg = small_config();
  cfg.total_steps = 0;
  TrainResult r = train(d, cfg);
  EXPECT_EQ(r.steps_done, 0);
  // policy untouched by pretraining: heads still zero
  DiagGaussian pd = policy_dist(r.models.policy, {0.0, 0.0}, {0.0, 0.0});
  EXPECT_DOUBLE_EQ(pd.mean[0], 0.0);
  EXPECT_DOUBLE_EQ(pd.log_std[0], 0.0);
}

TEST(Train, PretrainZeroStepsLeavesVaeUntouched) {
  Dataset d = toy_dataset();
  TrainConfig cfg = small_config();
  cfg.vae_pretrain_steps = 0;
  cfg.total_steps = 0;
  RngStream init(cfg.seed, "train/init");
  ModelDims dims;
  dims.hidden = cfg.hidden;
  ModelBundle fresh = ModelBundle::init(dims, init);
  TrainResult r = train(d, cfg);
  EXPECT_EQ(hash_params(r.models.vae_params()), hash_params(fresh.vae_params()));
}

TEST(Train, PretrainLowersHeldOutVaeLoss) {
  Dataset d = toy_dataset(7);
  TrainConfig cfg = small_config(5);
  cfg.hidden = 16;
  Trainer trainer(d, cfg, Algo::Diveoff);
  RngStream held_rng(99, "heldout");
  Batch held = sample_batch(d, 64, held_rng);
  Tensor eps = standard_normal(held.size(), 2, held_rng);
  Tensor ones = Tensor::full({held.size()}, 1.0);

  auto vae_loss = [&]() {
    Tape tp;
    GaussianHeadVars post = register_head_net(tp, trainer.models().posterior.net);
    DecoderVars dec = register_decoder(tp, trainer.models().decoder);
    return tp.val(build_weighted_vae_loss(tp, post, dec, held.s, held.a, eps, ones))[0];
  };

  const double before = vae_loss();
  RngStream pre(cfg.seed, "train/pretrain");
  trainer.vae_pretrain(400, pre);
  EXPECT_LT(vae_loss(), before);
}

TEST(Train, PretrainedEncoderSeparatesOppositeStyles) {
  // posterior means of transitions from the two opposite arcs form clusters
  // whose centroid distance exceeds the mean intra-style spread
  EnvConfig env;
  Dataset d = generate_dataset(env, {BehaviorStyle{-0.3, 0.01}, BehaviorStyle{0.3, 0.01}}, 40, 11);
  normalize_states(d);
  TrainConfig cfg;
  cfg.hidden = 32;
  cfg.seed = 2;
  Trainer trainer(d, cfg, Algo::Diveoff);
  RngStream pre(cfg.seed, "train/pretrain");
  trainer.vae_pretrain(1500, pre);

  // label transitions by their arc: the dataset keeps styles in generation order
  auto [mean, log_std] = posterior_dist_batch(trainer.models().posterior, d.s, d.a);
  std::vector<std::array<double, 2>> mu_down, mu_up;
  for (size_t i = 0; i < d.size(); ++i) {
    const Vec2 raw = d.norm.denormalize({d.s(static_cast<int>(i), 0), d.s(static_cast<int>(i), 1)});
    if (std::abs(raw.x - 0.5) > 0.25) continue;  // mid-course transitions identify the arc
    if (raw.y < 0.5)
      mu_down.push_back({mean(static_cast<int>(i), 0), mean(static_cast<int>(i), 1)});
    else
      mu_up.push_back({mean(static_cast<int>(i), 0), mean(static_cast<int>(i), 1)});
  }
  ASSERT_GT(mu_down.size(), 50u);
  ASSERT_GT(mu_up.size(), 50u);
  auto centroid = [](const std::vector<std::array<double, 2>>& v) {
    std::array<double, 2> c{0, 0};
    for (const auto& p : v) {
      c[0] += p[0];
      c[1] += p[1];
    }
    c[0] /= v.size();
    c[1] /= v.size();
    return c;
  };
  auto spread = [](const std::vector<std::array<double, 2>>& v, const std::array<double, 2>& c) {
    double s = 0;
    for (const auto& p : v) s += std::hypot(p[0] - c[0], p[1] - c[1]);
    return s / v.size();
  };
  const auto cd = centroid(mu_down), cu = centroid(mu_up);
  const double inter = std::hypot(cd[0] - cu[0], cd[1] - cu[1]);
  const double intra = 0.5 * (spread(mu_down, cd) + spread(mu_up, cu));
  EXPECT_GT(inter, intra);
}

TEST(Train, DeterministicUnderSeedAndConfig) {
  Dataset d = toy_dataset();
  TrainConfig cfg = small_config(9);
  std::string metrics_a, metrics_b;
  TrainResult a = train(d, cfg, [&](const json& j) { metrics_a += j.dump() + "\n"; });
  TrainResult b = train(d, cfg, [&](const json& j) { metrics_b += j.dump() + "\n"; });
  EXPECT_EQ(metrics_a, metrics_b);
  EXPECT_EQ(hash_params(a.models.all_params()), hash_params(b.models.all_params()));
  EXPECT_FALSE(metrics_a.empty());
}

TEST(Train, MInfoWithZeroLambdaLeavesPolicyAlone) {
  Dataset d = toy_dataset();
  TrainConfig cfg = small_config(13);
  cfg.info_weight = 0.0;
  Trainer trainer(d, cfg, Algo::Diveoff);
  RngStream rng(1, "m");
  Batch b = sample_batch(d, cfg.batch_size, rng);
  const uint64_t pol_before = hash_params(trainer.models().policy_params());
  const uint64_t vae_before = hash_params(trainer.models().vae_params());
  trainer.m_info_update(b, rng);
  EXPECT_EQ(hash_params(trainer.models().policy_params()), pol_before);
  EXPECT_NE(hash_params(trainer.models().vae_params()), vae_before);

  TrainConfig cfg2 = small_config(13);  // default lambda = 2.0
  EXPECT_DOUBLE_EQ(cfg2.info_weight, 2.0);
  Trainer trainer2(d, cfg2, Algo::Diveoff);
  // the info gradient reaches the policy only once the encoder reads its
  // action input, so move the encoder heads off their zero init
  RngStream jr(2, "enc-jitter");
  for (Tensor* t : trainer2.models().vae_params())
    for (auto& v : t->data) v += 0.05 * jr.normal();
  RngStream rng2(1, "m");
  Batch b2 = sample_batch(d, cfg2.batch_size, rng2);
  const uint64_t pol2_before = hash_params(trainer2.models().policy_params());
  trainer2.m_info_update(b2, rng2);
  EXPECT_NE(hash_params(trainer2.models().policy_params()), pol2_before);
}

TEST(Train, MInfoUpdateDecreasesCombinedLossOnSameBatch) {
  Dataset d = toy_dataset(3);
  TrainConfig cfg = small_config(17);
  cfg.hidden = 16;
  Trainer trainer(d, cfg, Algo::Diveoff);
  RngStream rng(4, "m");
  Batch b = sample_batch(d, cfg.batch_size, rng);
  RngStream update_rng(5, "mupd");
  RngStream replay_rng = update_rng;  // identical stream: same sampled constants
  MInfoLosses first = trainer.m_info_update(b, update_rng);
  MInfoLosses second = trainer.m_info_update(b, replay_rng);
  EXPECT_LT(second.total, first.total);
}

TEST(Baselines, SharePretrainingWithDiveoffAtSeedParity) {
  Dataset d = toy_dataset();
  TrainConfig cfg = small_config(21);
  cfg.total_steps = 0;
  TrainResult dive = train(d, cfg);
  TrainResult base = train_baseline(d, cfg, Algo::AwaclVae);
  EXPECT_EQ(hash_params(dive.models.vae_params()), hash_params(base.models.vae_params()));
}

TEST(Baselines, EncoderFrozenThroughoutTraining) {
  Dataset d = toy_dataset();
  TrainConfig cfg = small_config(23);
  cfg.total_steps = 0;
  TrainResult pretrained = train_baseline(d, cfg, Algo::AwaclVae);
  cfg.total_steps = 60;
  TrainResult full = train_baseline(d, cfg, Algo::AwaclVae);
  EXPECT_EQ(hash_params(pretrained.models.vae_params()), hash_params(full.models.vae_params()));
}

TEST(Baselines, DiaynWithZeroCoefficientMatchesPlainBaseline) {
  Dataset d = toy_dataset();
  TrainConfig cfg = small_config(25);
  cfg.total_steps = 50;
  TrainResult plain = train_baseline(d, cfg, Algo::AwaclVae);
  cfg.diayn_coef = 0.0;
  TrainResult diayn = train_baseline(d, cfg, Algo::AwaclVaeDiayn);
  EXPECT_EQ(hash_params(plain.models.all_params()), hash_params(diayn.models.all_params()));
}

TEST(Baselines, DiaynRewardChangesCriticTraining) {
  Dataset d = toy_dataset();
  TrainConfig cfg = small_config(27);
  cfg.total_steps = 50;
  TrainResult plain = train_baseline(d, cfg, Algo::AwaclVae);
  TrainResult diayn = train_baseline(d, cfg, Algo::AwaclVaeDiayn);  // coef 1.0
  EXPECT_NE(hash_params(plain.models.critic_params()), hash_params(diayn.models.critic_params()));
}

TEST(Train, NanRewardRaisesDivergenceError) {
  Dataset d = toy_dataset();
  d.r[0] = std::nan("");
  TrainConfig cfg = small_config(31);
  cfg.vae_pretrain_steps = 0;
  cfg.batch_size = static_cast<int>(d.size());  // guarantees the NaN row is sampled
  EXPECT_THROW(train(d, cfg), std::runtime_error);
}

TEST(Train, StepCounterMatchesCriticUpdates) {
  Dataset d = toy_dataset();
  TrainConfig cfg = small_config(33);
  TrainResult r = train(d, cfg);
  EXPECT_EQ(r.steps_done, cfg.total_steps);
}
