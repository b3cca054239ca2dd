#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "diveoff/dataset.hpp"
#include "diveoff/gaussian.hpp"
#include "diveoff/mlp.hpp"
#include "diveoff/rng.hpp"

namespace diveoff {

struct ModelDims {
  int state = 2;
  int action = 2;
  int latent = 2;
  int hidden = 64;
};

// Trunk with ReLU everywhere feeding two linear heads; log_std head output is
// clamped to [kLogStdMin, kLogStdMax].
struct GaussianHeadNet {
  MlpParams trunk;      // in -> hidden -> hidden (ReLU after each layer)
  MlpParams mean_head;  // hidden -> out (linear)
  MlpParams log_std_head;

  static GaussianHeadNet init(int in, int hidden, int out, RngStream& rng) {
    GaussianHeadNet n;
    n.trunk = MlpParams::init({in, hidden, hidden}, rng);
    n.mean_head = MlpParams::init({hidden, out}, rng, 0.0);
    n.log_std_head = MlpParams::init({hidden, out}, rng, 0.0);
    return n;
  }

  void collect(std::vector<Tensor*>& out) {
    trunk.collect(out);
    mean_head.collect(out);
    log_std_head.collect(out);
  }
  void collect(std::vector<const Tensor*>& out) const {
    trunk.collect(out);
    mean_head.collect(out);
    log_std_head.collect(out);
  }

  // batched forward: rows of (mean, clamped log_std)
  std::pair<Tensor, Tensor> dist(const Tensor& input) const {
    Tensor h = mlp_hidden_forward(trunk, input);
    Tensor mean = mlp_forward(mean_head, h);
    Tensor log_std = mlp_forward(log_std_head, h);
    for (auto& v : log_std.data) v = clamp_log_std(v);
    return {std::move(mean), std::move(log_std)};
  }
};

struct LatentPolicy {
  GaussianHeadNet net;  // input concat(s, z), output over actions
};

struct Critic {
  MlpParams net;  // concat(s, a, z) -> 1
};

struct CriticPair {
  Critic q1, q2;
  Critic q1_target, q2_target;
};

struct PosteriorEncoder {
  GaussianHeadNet net;  // concat(s, a) -> DiagGaussian over z
};

struct LikelihoodDecoder {
  MlpParams trunk;      // z -> hidden -> hidden
  MlpParams mean_head;  // hidden -> state+action dims; unit output variance
};

// State-only encoder q(z|s) for the DIAYN baseline reward.
struct StateEncoder {
  GaussianHeadNet net;
};

struct ModelBundle {
  ModelDims dims;
  LatentPolicy policy;
  CriticPair critics;
  PosteriorEncoder posterior;
  LikelihoodDecoder decoder;
  NormStats norm;

  static ModelBundle init(const ModelDims& dims, RngStream& rng) {
    ModelBundle m;
    m.dims = dims;
    m.policy.net = GaussianHeadNet::init(dims.state + dims.latent, dims.hidden, dims.action, rng);
    m.critics.q1.net = MlpParams::init({dims.state + dims.action + dims.latent, dims.hidden, dims.hidden, 1}, rng);
    m.critics.q2.net = MlpParams::init({dims.state + dims.action + dims.latent, dims.hidden, dims.hidden, 1}, rng);
    m.critics.q1_target = m.critics.q1;
    m.critics.q2_target = m.critics.q2;
    m.posterior.net = GaussianHeadNet::init(dims.state + dims.action, dims.hidden, dims.latent, rng);
    m.decoder.trunk = MlpParams::init({dims.latent, dims.hidden, dims.hidden}, rng);
    m.decoder.mean_head = MlpParams::init({dims.hidden, dims.state + dims.action}, rng, 0.0);
    return m;
  }

  std::vector<Tensor*> policy_params() {
    std::vector<Tensor*> v;
    policy.net.collect(v);
    return v;
  }
  std::vector<Tensor*> critic_params() {
    std::vector<Tensor*> v;
    critics.q1.net.collect(v);
    critics.q2.net.collect(v);
    return v;
  }
  std::vector<Tensor*> critic_target_params() {
    std::vector<Tensor*> v;
    critics.q1_target.net.collect(v);
    critics.q2_target.net.collect(v);
    return v;
  }
  std::vector<Tensor*> vae_params() {
    std::vector<Tensor*> v;
    posterior.net.collect(v);
    decoder.trunk.collect(v);
    decoder.mean_head.collect(v);
    return v;
  }
  // parameter order for checkpoints: policy, critics (q1, q2, targets), posterior, decoder
  std::vector<Tensor*> all_params() {
    std::vector<Tensor*> v;
    policy.net.collect(v);
    critics.q1.net.collect(v);
    critics.q2.net.collect(v);
    critics.q1_target.net.collect(v);
    critics.q2_target.net.collect(v);
    posterior.net.collect(v);
    decoder.trunk.collect(v);
    decoder.mean_head.collect(v);
    return v;
  }
};

// ------------------------------ batched raw ops ------------------------------

inline Tensor hstack(const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows(), "hstack: row mismatch");
  Tensor out = Tensor::zeros({a.rows(), a.cols() + b.cols()});
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < a.cols(); ++j) out(i, j) = a(i, j);
    for (int j = 0; j < b.cols(); ++j) out(i, a.cols() + j) = b(i, j);
  }
  return out;
}

inline Tensor hstack(const Tensor& a, const Tensor& b, const Tensor& c) { return hstack(hstack(a, b), c); }

// policy head over actions for a batch of (s, z) rows
inline std::pair<Tensor, Tensor> policy_dist_batch(const LatentPolicy& p, const Tensor& s, const Tensor& z) {
  return p.net.dist(hstack(s, z));
}

inline Tensor policy_mean_action_batch(const LatentPolicy& p, const Tensor& s, const Tensor& z) {
  return policy_dist_batch(p, s, z).first;
}

inline Tensor policy_sample_batch(const LatentPolicy& p, const Tensor& s, const Tensor& z, const Tensor& noise) {
  auto [mean, log_std] = policy_dist_batch(p, s, z);
  require(noise.same_shape(mean), "policy_sample: noise shape mismatch");
  Tensor out = mean;
  for (int64_t i = 0; i < out.size(); ++i) out[i] += std::exp(log_std[i]) * noise[i];
  return out;
}

inline Tensor policy_log_prob_batch(const LatentPolicy& p, const Tensor& s, const Tensor& z, const Tensor& a) {
  auto [mean, log_std] = policy_dist_batch(p, s, z);
  const int m = mean.rows(), d = mean.cols();
  Tensor lp = Tensor::zeros({m});
  for (int i = 0; i < m; ++i) {
    double v = -0.5 * d * kLog2Pi;
    for (int j = 0; j < d; ++j) {
      const double sd = std::exp(log_std(i, j));
      const double u = (a(i, j) - mean(i, j)) / sd;
      v += -0.5 * u * u - log_std(i, j);
    }
    lp[i] = v;
  }
  return lp;
}

inline std::pair<Tensor, Tensor> critic_q_batch(const CriticPair& c, const Tensor& s, const Tensor& a,
                                                const Tensor& z) {
  Tensor input = hstack(s, a, z);
  return {mlp_forward(c.q1.net, input), mlp_forward(c.q2.net, input)};
}

inline Tensor min_q_batch(const MlpParams& q1, const MlpParams& q2, const Tensor& s, const Tensor& a,
                          const Tensor& z) {
  Tensor input = hstack(s, a, z);
  Tensor v1 = mlp_forward(q1, input);
  Tensor v2 = mlp_forward(q2, input);
  Tensor out = Tensor::zeros({v1.rows()});
  for (int i = 0; i < v1.rows(); ++i) out[i] = std::min(v1(i, 0), v2(i, 0));
  return out;
}

// min over the two target networks
inline Tensor target_min_q_batch(const CriticPair& c, const Tensor& s, const Tensor& a, const Tensor& z) {
  return min_q_batch(c.q1_target.net, c.q2_target.net, s, a, z);
}

inline std::pair<Tensor, Tensor> posterior_dist_batch(const PosteriorEncoder& e, const Tensor& s,
                                                      const Tensor& a) {
  return e.net.dist(hstack(s, a));
}

inline Tensor decoder_mean_batch(const LikelihoodDecoder& d, const Tensor& z) {
  return mlp_forward(d.mean_head, mlp_hidden_forward(d.trunk, z));
}

// log p(s, a | z) under the unit-variance decoder: -0.5 ||x - x_hat||^2 - (D/2) log(2 pi)
inline Tensor decoder_log_likelihood_batch(const LikelihoodDecoder& d, const Tensor& z, const Tensor& s,
                                           const Tensor& a) {
  Tensor x = hstack(s, a);
  Tensor mean = decoder_mean_batch(d, z);
  require(mean.same_shape(x), "decoder_log_likelihood: shape mismatch");
  const int m = x.rows(), c = x.cols();
  Tensor lp = Tensor::zeros({m});
  for (int i = 0; i < m; ++i) {
    double q = 0.0;
    for (int j = 0; j < c; ++j) {
      const double diff = x(i, j) - mean(i, j);
      q += diff * diff;
    }
    lp[i] = -0.5 * q - 0.5 * c * kLog2Pi;
  }
  return lp;
}

// ------------------------------ single-sample wrappers ------------------------------

inline Tensor row2(double a, double b) { return Tensor::matrix(1, 2, {a, b}); }

inline DiagGaussian policy_dist(const LatentPolicy& p, const Vec2& s_norm, const Vec2& z) {
  auto [mean, log_std] = policy_dist_batch(p, row2(s_norm.x, s_norm.y), row2(z.x, z.y));
  return DiagGaussian(Tensor::vec({mean(0, 0), mean(0, 1)}), Tensor::vec({log_std(0, 0), log_std(0, 1)}));
}

inline Vec2 policy_mean_action(const LatentPolicy& p, const Vec2& s_norm, const Vec2& z) {
  DiagGaussian d = policy_dist(p, s_norm, z);
  return {d.mean[0], d.mean[1]};
}

inline double policy_log_prob(const LatentPolicy& p, const Vec2& s_norm, const Vec2& z, const Vec2& a) {
  return gaussian_log_prob(policy_dist(p, s_norm, z), Tensor::vec({a.x, a.y}));
}

inline Vec2 policy_sample(const LatentPolicy& p, const Vec2& s_norm, const Vec2& z, const Vec2& noise) {
  DiagGaussian d = policy_dist(p, s_norm, z);
  Tensor out = gaussian_sample_reparam(d, Tensor::vec({noise.x, noise.y}));
  return {out[0], out[1]};
}

inline DiagGaussian posterior_dist(const PosteriorEncoder& e, const Vec2& s_norm, const Vec2& a) {
  auto [mean, log_std] = posterior_dist_batch(e, row2(s_norm.x, s_norm.y), row2(a.x, a.y));
  return DiagGaussian(Tensor::vec({mean(0, 0), mean(0, 1)}), Tensor::vec({log_std(0, 0), log_std(0, 1)}));
}

// ------------------------------ checkpoint io ------------------------------
// Layout: 12-byte magic "DIVEOFFCKPT1", u64 little-endian header length, JSON
// header, then every parameter array as little-endian f64 in the all_params()
// order (policy, critics online, critic targets, posterior, decoder).

constexpr char kCheckpointMagic[12] = {'D', 'I', 'V', 'E', 'O', 'F', 'F', 'C', 'K', 'P', 'T', '1'};

struct Checkpoint {
  ModelBundle models;
  EnvConfig env;
  std::string algo = "diveoff";
  uint64_t config_hash = 0;
  int64_t step_count = 0;
};

inline void checkpoint_write(const Checkpoint& ck, const std::filesystem::path& path) {
  json header{{"version", 1},
              {"dims",
               {{"state", ck.models.dims.state},
                {"action", ck.models.dims.action},
                {"latent", ck.models.dims.latent},
                {"hidden", ck.models.dims.hidden}}},
              {"norm",
               {{"mean", ck.models.norm.mean},
                {"std", ck.models.norm.std},
                {"applied", ck.models.norm.applied},
                {"action_scale", ck.models.norm.action_scale}}},
              {"env", env_to_json(ck.env)},
              {"algo", ck.algo},
              {"config_hash", ck.config_hash},
              {"step_count", ck.step_count}};
  const std::string head = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint_write: cannot open " + path.string());
  os.write(kCheckpointMagic, 12);
  detail::write_u64(os, head.size());
  os.write(head.data(), static_cast<std::streamsize>(head.size()));
  std::vector<const Tensor*> params;
  ModelBundle& m = const_cast<ModelBundle&>(ck.models);
  for (Tensor* t : m.all_params()) params.push_back(t);
  for (const Tensor* t : params) {
    require_finite(*t, "checkpoint parameter");
    detail::write_f64_array(os, t->data);
  }
  if (!os) throw std::runtime_error("checkpoint_write: write failed for " + path.string());
}

inline Checkpoint checkpoint_read(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint_read: cannot open " + path.string());
  char magic[12];
  is.read(magic, 12);
  if (!is || std::memcmp(magic, kCheckpointMagic, 12) != 0) {
    throw std::runtime_error("checkpoint_read: bad magic in " + path.string());
  }
  const uint64_t head_len = detail::read_u64(is);
  std::string head(head_len, '\0');
  is.read(head.data(), static_cast<std::streamsize>(head_len));
  if (!is) throw std::runtime_error("checkpoint_read: truncated file");
  json header;
  try {
    header = json::parse(head);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint_read: bad header: ") + e.what());
  }
  if (header.at("version").get<int>() != 1) throw std::runtime_error("checkpoint_read: unsupported version");

  Checkpoint ck;
  const json& jd = header.at("dims");
  ModelDims dims{jd.at("state").get<int>(), jd.at("action").get<int>(), jd.at("latent").get<int>(),
                 jd.at("hidden").get<int>()};
  RngStream dummy(0, "checkpoint");  // parameters are overwritten below
  ck.models = ModelBundle::init(dims, dummy);
  const json& jn = header.at("norm");
  ck.models.norm.mean = {jn.at("mean")[0].get<double>(), jn.at("mean")[1].get<double>()};
  ck.models.norm.std = {jn.at("std")[0].get<double>(), jn.at("std")[1].get<double>()};
  ck.models.norm.applied = jn.at("applied").get<bool>();
  ck.models.norm.action_scale = jn.at("action_scale").get<double>();
  ck.env = env_from_json(header.at("env"));
  ck.algo = header.at("algo").get<std::string>();
  ck.config_hash = header.at("config_hash").get<uint64_t>();
  ck.step_count = header.at("step_count").get<int64_t>();

  for (Tensor* t : ck.models.all_params()) {
    detail::read_f64_array(is, t->data, static_cast<size_t>(Tensor::count(t->shape)));
    require_finite(*t, "checkpoint parameter");
  }
  return ck;
}

}  // namespace diveoff
