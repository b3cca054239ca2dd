#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "diveoff/dataset.hpp"
#include "diveoff/env.hpp"
#include "diveoff/gmm.hpp"
#include "diveoff/models.hpp"

namespace diveoff {

struct RolloutResult {
  std::vector<double> returns;                 // undiscounted episode sums
  std::vector<std::vector<Vec2>> trajectories; // visited states incl. start
  std::vector<bool> reached_goal;

  double mean_return() const {
    double s = 0.0;
    for (double r : returns) s += r;
    return returns.empty() ? 0.0 : s / returns.size();
  }
  double success_rate() const {
    double s = 0.0;
    for (bool b : reached_goal) s += b ? 1.0 : 0.0;
    return reached_goal.empty() ? 0.0 : s / reached_goal.size();
  }
};

// Deterministic mean-action rollouts; z stays fixed for the whole episode.
// States are normalized with the model's stats before each policy call.
inline RolloutResult rollout(const ModelBundle& models, const Vec2& z, const EnvConfig& env, int episodes,
                             uint64_t seed) {
  require(episodes >= 0, "rollout: episodes must be >= 0");
  RngStream rng(seed, "eval/rollout");
  RolloutResult out;
  for (int ep = 0; ep < episodes; ++ep) {
    Vec2 s = env_reset(env, rng, /*jitter=*/false);
    std::vector<Vec2> traj{s};
    double ret = 0.0;
    bool reached = false;
    for (int t = 0; t < env.horizon; ++t) {
      const Vec2 a =
          models.norm.denormalize_action(policy_mean_action(models.policy, models.norm.normalize(s), z));
      const StepResult r = env_step(s, a, env);
      ret += r.reward;
      s = r.next;
      traj.push_back(s);
      if (r.done) {
        reached = true;
        break;
      }
    }
    out.returns.push_back(ret);
    out.trajectories.push_back(std::move(traj));
    out.reached_goal.push_back(reached);
  }
  return out;
}

// D4RL-style normalization to [0, 100] between the anchors.
inline double normalized_score(double raw, double min_return, double max_return) {
  require(max_return > min_return, "normalized_score: degenerate anchor range");
  return 100.0 * (raw - min_return) / (max_return - min_return);
}

// min = mean return of a uniform-random policy; max = mean return of the best
// noise-free scripted arc. 100 episodes each.
inline std::pair<double, double> toy_score_anchors(const EnvConfig& env, uint64_t seed) {
  env.validate();
  RngStream rng(seed, "eval/anchors");
  const int episodes = 100;
  double random_sum = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    Vec2 s = env_reset(env, rng, /*jitter=*/false);
    for (int t = 0; t < env.horizon; ++t) {
      const Vec2 a{rng.uniform(-env.max_step, env.max_step), rng.uniform(-env.max_step, env.max_step)};
      const StepResult r = env_step(s, a, env);
      random_sum += r.reward;
      s = r.next;
      if (r.done) break;
    }
  }
  const double min_return = random_sum / episodes;

  double best = -std::numeric_limits<double>::infinity();
  for (const BehaviorStyle& style : default_styles(4, /*noise_std=*/0.0)) {
    double style_sum = 0.0;
    for (int ep = 0; ep < episodes; ++ep) {
      Vec2 s = env_reset(env, rng, /*jitter=*/false);
      for (int t = 0; t < env.horizon; ++t) {
        const StepResult r = env_step(s, scripted_policy(style, s, env, rng), env);
        style_sum += r.reward;
        s = r.next;
        if (r.done) break;
      }
    }
    best = std::max(best, style_sum / episodes);
  }
  return {min_return, best};
}

// Mean visited state across completed rollouts, in raw env coordinates.
struct PolicyEmbedding {
  Vec2 phi;
  int episodes = 0;
  Vec2 z;
};

inline PolicyEmbedding policy_embedding(const ModelBundle& models, const Vec2& z, const EnvConfig& env,
                                        int episodes, uint64_t seed) {
  require(episodes >= 1, "policy_embedding: episodes must be >= 1");
  RolloutResult rr = rollout(models, z, env, episodes, seed);
  PolicyEmbedding e;
  e.z = z;
  e.episodes = episodes;
  double sx = 0.0, sy = 0.0;
  int64_t count = 0;
  for (const auto& traj : rr.trajectories) {
    for (const Vec2& s : traj) {
      sx += s.x;
      sy += s.y;
      ++count;
    }
  }
  e.phi = {sx / count, sy / count};
  return e;
}

inline PolicyEmbedding embedding_from_rollout(const RolloutResult& rr, const Vec2& z) {
  PolicyEmbedding e;
  e.z = z;
  e.episodes = static_cast<int>(rr.trajectories.size());
  double sx = 0.0, sy = 0.0;
  int64_t count = 0;
  for (const auto& traj : rr.trajectories) {
    for (const Vec2& s : traj) {
      sx += s.x;
      sy += s.y;
      ++count;
    }
  }
  require(count > 0, "embedding: empty rollouts");
  e.phi = {sx / count, sy / count};
  return e;
}

// Squared-exponential kernel exp(-||a-b||^2 / (2 h^2)).
inline double se_kernel(const Vec2& a, const Vec2& b, double h) {
  require(h > 0.0, "se_kernel: bandwidth must be positive");
  const double d2 = (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y);
  return std::exp(-d2 / (2.0 * h * h));
}

// Median of pairwise embedding distances, floored to stay usable when many
// embeddings coincide.
inline double median_bandwidth(const std::vector<PolicyEmbedding>& embeddings) {
  std::vector<double> d;
  for (size_t i = 0; i < embeddings.size(); ++i)
    for (size_t j = i + 1; j < embeddings.size(); ++j)
      d.push_back(dist(embeddings[i].phi, embeddings[j].phi));
  if (d.empty()) return 1.0;
  std::sort(d.begin(), d.end());
  const size_t n = d.size();
  const double med = n % 2 == 1 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
  return std::max(med, 1e-6);
}

// Determinant of the kernel Gram matrix over the policy embeddings, clamped
// below at zero against numerical negatives.
inline double diversity_score(const std::vector<PolicyEmbedding>& embeddings, double h) {
  require(!embeddings.empty(), "diversity_score: need at least one embedding");
  const int m = static_cast<int>(embeddings.size());
  Eigen::MatrixXd k(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) k(i, j) = se_kernel(embeddings[i].phi, embeddings[j].phi, h);
  const double det = k.determinant();
  return det < 0.0 ? 0.0 : det;
}

// g x g grid over [-1, 1]^2, row-major from (-1, -1).
inline std::vector<Vec2> z_grid(int g) {
  require(g >= 1, "z_grid: size must be >= 1");
  std::vector<Vec2> out;
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < g; ++j) {
      const double zx = g == 1 ? 0.0 : -1.0 + 2.0 * j / (g - 1);
      const double zy = g == 1 ? 0.0 : -1.0 + 2.0 * i / (g - 1);
      out.push_back({zx, zy});
    }
  }
  return out;
}

enum class ModeLabel { Upper, Lower, Stalled };

inline std::string mode_label_name(ModeLabel m) {
  switch (m) {
    case ModeLabel::Upper: return "UPPER";
    case ModeLabel::Lower: return "LOWER";
    default: return "STALLED";
  }
}

// Mean y over the middle third of the trajectory: above 0.55 is UPPER,
// below 0.45 is LOWER, the rest lands in the stalled/center bucket.
inline ModeLabel trajectory_mode_label(const std::vector<Vec2>& traj) {
  if (traj.empty()) return ModeLabel::Stalled;
  const size_t n = traj.size();
  const size_t lo = n / 3;
  const size_t hi = std::max(lo + 1, 2 * n / 3);
  double sum = 0.0;
  size_t count = 0;
  for (size_t i = lo; i < hi && i < n; ++i) {
    sum += traj[i].y;
    ++count;
  }
  const double mean_y = sum / count;
  if (mean_y > 0.55) return ModeLabel::Upper;
  if (mean_y < 0.45) return ModeLabel::Lower;
  return ModeLabel::Stalled;
}

// K single-episode probes at uniform z, then 10 evaluation episodes at the
// best probe's z (first maximal return wins ties).
struct AdaptResult {
  Vec2 z_max;
  double adapted_mean_return = 0.0;
  std::vector<Vec2> probe_zs;
  std::vector<double> probe_returns;
  std::vector<double> adapted_returns;
};

inline AdaptResult few_shot_adapt(const ModelBundle& models, const EnvConfig& variant_env, int budget,
                                  uint64_t seed) {
  require(budget >= 1, "few_shot_adapt: budget must be >= 1");
  RngStream rng(seed, "adapt/probe");
  AdaptResult out;
  double best = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < budget; ++k) {
    const Vec2 z{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    RolloutResult rr = rollout(models, z, variant_env, 1, seed + static_cast<uint64_t>(k));
    out.probe_zs.push_back(z);
    out.probe_returns.push_back(rr.returns[0]);
    if (rr.returns[0] > best) {
      best = rr.returns[0];
      out.z_max = z;
    }
  }
  RolloutResult final_rr = rollout(models, out.z_max, variant_env, 10, seed);
  out.adapted_returns = final_rr.returns;
  out.adapted_mean_return = final_rr.mean_return();
  return out;
}

// ------------------------------ report assembly ------------------------------

struct EvalOptions {
  int grid = 3;
  int episodes = 10;
  uint64_t seed = 0;
  double bandwidth = 0.0;  // <= 0: median heuristic
};

// Full evaluation over the z grid: per-cell raw returns, success rates and
// mode labels, score anchors, normalized scores and the diversity score.
inline json build_eval_report(const ModelBundle& models, const EnvConfig& env, const EvalOptions& opt) {
  require(opt.grid >= 1 && opt.episodes >= 1, "eval: grid and episodes must be >= 1");
  const auto [min_ret, max_ret] = toy_score_anchors(env, opt.seed);

  std::vector<PolicyEmbedding> embeddings;
  json cells = json::array();
  double total_success = 0.0, total_return = 0.0;
  int total_episodes = 0;
  json mode_hist{{"UPPER", 0}, {"LOWER", 0}, {"STALLED", 0}};
  for (const Vec2& z : z_grid(opt.grid)) {
    RolloutResult rr = rollout(models, z, env, opt.episodes, opt.seed);
    PolicyEmbedding emb = embedding_from_rollout(rr, z);
    embeddings.push_back(emb);
    const ModeLabel label = trajectory_mode_label(rr.trajectories.front());
    mode_hist[mode_label_name(label)] = mode_hist[mode_label_name(label)].get<int>() + 1;
    json cell{{"z", {z.x, z.y}},
              {"returns", rr.returns},
              {"mean_return", rr.mean_return()},
              {"success_rate", rr.success_rate()},
              {"normalized_score", normalized_score(rr.mean_return(), min_ret, max_ret)},
              {"mode", mode_label_name(label)},
              {"embedding", {emb.phi.x, emb.phi.y}}};
    cells.push_back(cell);
    total_success += rr.success_rate() * rr.returns.size();
    for (double r : rr.returns) total_return += r;
    total_episodes += static_cast<int>(rr.returns.size());
  }

  const bool fixed_h = opt.bandwidth > 0.0;
  const double h = fixed_h ? opt.bandwidth : median_bandwidth(embeddings);
  const double diversity = diversity_score(embeddings, h);

  const double overall_success = total_success / total_episodes;
  const double overall_return = total_return / total_episodes;
  return json{{"grid", opt.grid},
              {"episodes_per_z", opt.episodes},
              {"seed", opt.seed},
              {"env", env_to_json(env)},
              {"anchors", {{"min_return", min_ret}, {"max_return", max_ret}}},
              {"bandwidth", h},
              {"bandwidth_mode", fixed_h ? "fixed" : "median"},
              {"cells", cells},
              {"overall",
               {{"success_rate", overall_success},
                {"mean_return", overall_return},
                {"normalized_score", normalized_score(overall_return, min_ret, max_ret)},
                {"diversity_score", diversity},
                {"mode_histogram", mode_hist}}}};
}

}  // namespace diveoff
