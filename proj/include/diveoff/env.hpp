#pragma once

#include <cmath>
#include <string>

#include "diveoff/rng.hpp"
#include "diveoff/tensor.hpp"

namespace diveoff {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline double dist(const Vec2& a, const Vec2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

enum class EnvVariant { None, WallUpper, WallLower };

inline std::string variant_name(EnvVariant v) {
  switch (v) {
    case EnvVariant::WallUpper: return "wall-upper";
    case EnvVariant::WallLower: return "wall-lower";
    default: return "none";
  }
}

inline EnvVariant variant_from_name(const std::string& s) {
  if (s == "wall-upper") return EnvVariant::WallUpper;
  if (s == "wall-lower") return EnvVariant::WallLower;
  if (s == "none") return EnvVariant::None;
  throw std::invalid_argument("unknown env variant: " + s);
}

// 2D point-mass path-planning task on the unit square. The agent starts on
// the left, the goal sits on the right; each step costs a little and reaching
// the goal pays +1 and terminates.
struct EnvConfig {
  Vec2 start{0.1, 0.5};
  Vec2 goal{0.9, 0.5};
  double goal_radius = 0.05;
  double max_step = 0.05;   // per-axis displacement cap
  int horizon = 100;
  double step_cost = -0.01;
  double goal_reward = 1.0;
  EnvVariant variant = EnvVariant::None;

  // wall slab geometry shared by both variants
  static constexpr double kWallXLo = 0.45;
  static constexpr double kWallXHi = 0.55;
  static constexpr double kWallYMid = 0.5;

  void validate() const {
    require(start.x >= 0.0 && start.x <= 1.0 && start.y >= 0.0 && start.y <= 1.0, "env: start outside bounds");
    require(goal.x >= 0.0 && goal.x <= 1.0 && goal.y >= 0.0 && goal.y <= 1.0, "env: goal outside bounds");
    require(goal_radius < dist(start, goal), "env: goal radius must be smaller than start-goal distance");
    require(horizon >= 1, "env: horizon must be >= 1");
    require(max_step > 0.0, "env: max_step must be positive");
  }

  // Strict interior of the blocked slab; points on the faces are allowed.
  bool in_wall(const Vec2& p) const {
    if (variant == EnvVariant::None) return false;
    if (p.x <= kWallXLo || p.x >= kWallXHi) return false;
    return variant == EnvVariant::WallUpper ? p.y > kWallYMid : p.y < kWallYMid;
  }
};

// Start position, optionally jittered by +-0.02 per axis (on for dataset
// generation, off for evaluation).
inline Vec2 env_reset(const EnvConfig& config, RngStream& rng, bool jitter) {
  Vec2 s = config.start;
  if (jitter) {
    s.x += rng.uniform(-0.02, 0.02);
    s.y += rng.uniform(-0.02, 0.02);
  }
  return s;
}

struct StepResult {
  Vec2 next;
  double reward = 0.0;
  bool done = false;
};

inline double clip(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

namespace detail {
// Time span t in [0, 1] during which a coordinate moving from p0 towards p1
// satisfies a strict one- or two-sided interior condition. inside0 records
// whether the condition already held at t = 0.
struct AxisSpan {
  double t0 = 1.0, t1 = 0.0;  // empty unless t0 < t1
  bool inside0 = false;
};

inline AxisSpan span_between(double p0, double p1, double lo, double hi) {
  AxisSpan s;
  s.inside0 = p0 > lo && p0 < hi;
  const double d = p1 - p0;
  if (d == 0.0) {
    if (s.inside0) {
      s.t0 = 0.0;
      s.t1 = 1.0;
    }
    return s;
  }
  double ta = (lo - p0) / d, tb = (hi - p0) / d;
  if (ta > tb) std::swap(ta, tb);
  s.t0 = std::max(0.0, ta);
  s.t1 = std::min(1.0, tb);
  return s;
}

inline AxisSpan span_beyond(double p0, double p1, double edge, bool greater) {
  // condition: p > edge (greater) or p < edge
  return greater ? span_between(p0, p1, edge, 1e300) : span_between(p0, p1, -1e300, edge);
}
}  // namespace detail

// Resolves the straight move from a legal state to cand against the wall
// slab. The face crossed at first penetration blocks its axis; the other
// component completes, so the agent slides along faces.
inline Vec2 resolve_wall(const EnvConfig& config, const Vec2& state, Vec2 cand) {
  if (config.variant == EnvVariant::None) return cand;
  const detail::AxisSpan sx =
      detail::span_between(state.x, cand.x, EnvConfig::kWallXLo, EnvConfig::kWallXHi);
  const detail::AxisSpan sy = detail::span_beyond(state.y, cand.y, EnvConfig::kWallYMid,
                                                  config.variant == EnvVariant::WallUpper);
  const double lo = std::max(sx.t0, sy.t0);
  const double hi = std::min(sx.t1, sy.t1);
  if (lo >= hi) return cand;          // no interior penetration (grazing a face is fine)
  if (sx.inside0 && sy.inside0) return state;  // started inside the slab; refuse to move
  const bool block_x = !sx.inside0 && (sy.inside0 || sx.t0 >= sy.t0);
  const bool block_y = !sy.inside0 && (sx.inside0 || sy.t0 >= sx.t0);
  if (block_x) cand.x = cand.x > state.x ? EnvConfig::kWallXLo : EnvConfig::kWallXHi;
  if (block_y) cand.y = EnvConfig::kWallYMid;
  return cand;
}

inline StepResult env_step(const Vec2& state, const Vec2& action, const EnvConfig& config) {
  require(state.x >= 0.0 && state.x <= 1.0 && state.y >= 0.0 && state.y <= 1.0, "env_step: state outside bounds");
  const double ax = clip(action.x, -config.max_step, config.max_step);
  const double ay = clip(action.y, -config.max_step, config.max_step);

  Vec2 next{clip(state.x + ax, 0.0, 1.0), clip(state.y + ay, 0.0, 1.0)};
  next = resolve_wall(config, state, next);

  StepResult r;
  r.next = next;
  if (dist(next, config.goal) <= config.goal_radius) {
    r.reward = config.goal_reward;
    r.done = true;
  } else {
    r.reward = config.step_cost;
    r.done = false;
  }
  return r;
}

// A behavior style follows a quadratic arc from start to goal whose peak
// vertical offset sits at x = 0.5.
struct BehaviorStyle {
  double waypoint_offset = 0.0;  // in [-0.35, 0.35]
  double noise_std = 0.01;
};

// Height of the style's arc at horizontal position x.
inline double arc_y(const BehaviorStyle& style, const EnvConfig& config, double x) {
  const double half_span = 0.5 * (config.goal.x - config.start.x);
  const double u = (x - 0.5) / half_span;
  return config.start.y + style.waypoint_offset * (1.0 - u * u);
}

inline double arc_slope(const BehaviorStyle& style, const EnvConfig& config, double x) {
  const double half_span = 0.5 * (config.goal.x - config.start.x);
  return -2.0 * style.waypoint_offset * (x - 0.5) / (half_span * half_span);
}

// Proportional pursuit of the next arc point. The x advance shrinks where the
// arc is steep so the noise-free action stays inside the per-axis cap and the
// tracked point remains exactly on the arc.
inline Vec2 scripted_policy(const BehaviorStyle& style, const Vec2& state, const EnvConfig& config,
                            RngStream& rng) {
  require(state.x >= 0.0 && state.x <= 1.0 && state.y >= 0.0 && state.y <= 1.0,
          "scripted_policy: state outside bounds");
  double dx = config.max_step;
  for (int it = 0; it < 3; ++it) {
    const double slope = std::abs(arc_slope(style, config, state.x + 0.5 * dx));
    dx = config.max_step / std::max(1.0, slope);
  }
  // Shrink until the arc rise over dx fits the cap, so the noise-free action
  // is never clipped and a tracked point stays exactly on the arc.
  while (std::abs(arc_y(style, config, state.x + dx) - arc_y(style, config, state.x)) > config.max_step) {
    dx *= 0.9;
  }
  const double wx = std::min(state.x + dx, config.goal.x);
  const Vec2 waypoint{wx, arc_y(style, config, wx)};
  Vec2 a{waypoint.x - state.x, waypoint.y - state.y};
  if (style.noise_std > 0.0) {
    a.x += style.noise_std * rng.normal();
    a.y += style.noise_std * rng.normal();
  }
  a.x = clip(a.x, -config.max_step, config.max_step);
  a.y = clip(a.y, -config.max_step, config.max_step);
  return a;
}

}  // namespace diveoff
