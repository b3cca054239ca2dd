#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "diveoff/env.hpp"
#include "diveoff/rng.hpp"
#include "diveoff/tensor.hpp"

namespace diveoff {

static_assert(std::endian::native == std::endian::little, "dataset format is little-endian");

using json = nlohmann::json;

inline json env_to_json(const EnvConfig& c) {
  return json{{"start", {c.start.x, c.start.y}},
              {"goal", {c.goal.x, c.goal.y}},
              {"goal_radius", c.goal_radius},
              {"max_step", c.max_step},
              {"horizon", c.horizon},
              {"step_cost", c.step_cost},
              {"goal_reward", c.goal_reward},
              {"variant", variant_name(c.variant)}};
}

inline EnvConfig env_from_json(const json& j) {
  EnvConfig c;
  c.start = {j.at("start")[0].get<double>(), j.at("start")[1].get<double>()};
  c.goal = {j.at("goal")[0].get<double>(), j.at("goal")[1].get<double>()};
  c.goal_radius = j.at("goal_radius").get<double>();
  c.max_step = j.at("max_step").get<double>();
  c.horizon = j.at("horizon").get<int>();
  c.step_cost = j.at("step_cost").get<double>();
  c.goal_reward = j.at("goal_reward").get<double>();
  c.variant = variant_from_name(j.at("variant").get<std::string>());
  c.validate();
  return c;
}

inline uint64_t env_config_hash(const EnvConfig& c) { return fnv1a64(env_to_json(c).dump()); }

struct NormStats {
  std::array<double, 2> mean{0.0, 0.0};
  std::array<double, 2> std{1.0, 1.0};
  bool applied = false;
  // Actions are scaled by the env's per-axis cap at the model boundary, so
  // networks see the action box as [-1, 1]^2; files keep raw actions.
  double action_scale = 1.0;

  Vec2 normalize(const Vec2& s) const { return {(s.x - mean[0]) / std[0], (s.y - mean[1]) / std[1]}; }
  Vec2 denormalize(const Vec2& s) const { return {s.x * std[0] + mean[0], s.y * std[1] + mean[1]}; }
  Vec2 normalize_action(const Vec2& a) const { return {a.x / action_scale, a.y / action_scale}; }
  Vec2 denormalize_action(const Vec2& a) const { return {a.x * action_scale, a.y * action_scale}; }
};

struct DatasetMeta {
  EnvConfig env;
  std::vector<double> style_offsets;
  double noise_std = 0.01;
  uint64_t seed = 0;
  int episodes_per_style = 0;
  int episode_count = 0;
};

// Offline transition store as flat arrays; the only training input.
struct Dataset {
  Tensor s;                   // [N, 2]
  Tensor a;                   // [N, 2]
  Tensor r;                   // [N]
  Tensor s_next;              // [N, 2]
  std::vector<uint8_t> done;  // [N]
  NormStats norm;
  DatasetMeta meta;

  size_t size() const { return done.size(); }

  void check_consistent() const {
    const auto n = static_cast<int>(size());
    require(s.rows() == n && a.rows() == n && r.size() == n && s_next.rows() == n,
            "dataset: array lengths differ");
    require(s.cols() == 2 && a.cols() == 2 && s_next.cols() == 2, "dataset: dimension mismatch");
  }
};

namespace detail {
struct EpisodeRollout {
  std::vector<Vec2> states, actions, next_states;
  std::vector<double> rewards;
  std::vector<uint8_t> dones;
  double ret = 0.0;
};

inline EpisodeRollout roll_scripted_episode(const EnvConfig& config, const BehaviorStyle& style,
                                            RngStream& rng, bool jitter) {
  EpisodeRollout ep;
  Vec2 s = env_reset(config, rng, jitter);
  for (int t = 0; t < config.horizon; ++t) {
    const Vec2 a = scripted_policy(style, s, config, rng);
    const StepResult sr = env_step(s, a, config);
    ep.states.push_back(s);
    ep.actions.push_back(a);
    ep.rewards.push_back(sr.reward);
    ep.next_states.push_back(sr.next);
    ep.dones.push_back(sr.done ? 1 : 0);
    ep.ret += sr.reward;
    s = sr.next;
    if (sr.done) break;
  }
  return ep;
}
}  // namespace detail

// Rolls out each style; episodes with negative return are discarded and
// re-sampled (up to 10 retries each).
inline Dataset generate_dataset(const EnvConfig& config, const std::vector<BehaviorStyle>& styles,
                                int episodes_per_style, uint64_t seed, bool jitter = true) {
  config.validate();
  require(episodes_per_style >= 1, "generate_dataset: episodes_per_style must be >= 1");
  for (const auto& st : styles) {
    require(std::abs(st.waypoint_offset) <= 0.35, "generate_dataset: waypoint offset outside [-0.35, 0.35]");
  }
  RngStream rng(seed, "data");

  Dataset d;
  d.meta.env = config;
  d.meta.seed = seed;
  d.meta.episodes_per_style = episodes_per_style;
  d.meta.noise_std = styles.empty() ? 0.0 : styles.front().noise_std;
  for (const auto& st : styles) d.meta.style_offsets.push_back(st.waypoint_offset);

  std::vector<Vec2> ss, aa, sn;
  std::vector<double> rr;
  std::vector<uint8_t> dd;
  int kept_episodes = 0;
  for (const auto& style : styles) {
    for (int ep = 0; ep < episodes_per_style; ++ep) {
      bool kept = false;
      for (int attempt = 0; attempt < 10; ++attempt) {
        detail::EpisodeRollout roll = detail::roll_scripted_episode(config, style, rng, jitter);
        if (roll.ret < 0.0) continue;
        ss.insert(ss.end(), roll.states.begin(), roll.states.end());
        aa.insert(aa.end(), roll.actions.begin(), roll.actions.end());
        sn.insert(sn.end(), roll.next_states.begin(), roll.next_states.end());
        rr.insert(rr.end(), roll.rewards.begin(), roll.rewards.end());
        dd.insert(dd.end(), roll.dones.begin(), roll.dones.end());
        kept = true;
        ++kept_episodes;
        break;
      }
      if (!kept) {
        throw std::runtime_error("generate_dataset: retry budget exhausted for style with offset " +
                                 std::to_string(style.waypoint_offset));
      }
    }
  }
  d.meta.episode_count = kept_episodes;

  const int n = static_cast<int>(ss.size());
  d.s = Tensor::zeros({n, 2});
  d.a = Tensor::zeros({n, 2});
  d.r = Tensor::zeros({n});
  d.s_next = Tensor::zeros({n, 2});
  d.done = std::move(dd);
  for (int i = 0; i < n; ++i) {
    d.s(i, 0) = ss[i].x;
    d.s(i, 1) = ss[i].y;
    d.a(i, 0) = aa[i].x;
    d.a(i, 1) = aa[i].y;
    d.r[i] = rr[i];
    d.s_next(i, 0) = sn[i].x;
    d.s_next(i, 1) = sn[i].y;
  }
  d.check_consistent();
  return d;
}

inline std::vector<BehaviorStyle> default_styles(int count = 4, double noise_std = 0.01) {
  require(count >= 1, "default_styles: count must be >= 1");
  std::vector<BehaviorStyle> out;
  for (int i = 0; i < count; ++i) {
    const double offset = count == 1 ? -0.3 : -0.3 + 0.6 * i / (count - 1);
    out.push_back(BehaviorStyle{offset, noise_std});
  }
  return out;
}

// Replaces stored states by (s - mean) / std with a 1e-3 floor on std. Stats
// stay in the dataset so states can be round-tripped.
inline void normalize_states(Dataset& d) {
  require(d.size() > 0, "normalize_states: empty dataset");
  require(!d.norm.applied, "normalize_states: dataset already normalized");
  const int n = static_cast<int>(d.size());
  for (int j = 0; j < 2; ++j) {
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += d.s(i, j);
    mean /= n;
    double var = 0.0;
    for (int i = 0; i < n; ++i) {
      const double diff = d.s(i, j) - mean;
      var += diff * diff;
    }
    const double sd = std::max(1e-3, std::sqrt(var / n));
    d.norm.mean[j] = mean;
    d.norm.std[j] = sd;
    for (int i = 0; i < n; ++i) {
      d.s(i, j) = (d.s(i, j) - mean) / sd;
      d.s_next(i, j) = (d.s_next(i, j) - mean) / sd;
    }
  }
  d.norm.action_scale = d.meta.env.max_step;
  d.norm.applied = true;
}

// ------------------------------ persistence ------------------------------
// Layout: 8-byte magic "DIVEOFF1", u64 little-endian header length, UTF-8
// JSON header, then f64 little-endian arrays s, a, r, s_next and a byte
// array for done. All lengths are declared in the header.

constexpr char kDatasetMagic[8] = {'D', 'I', 'V', 'E', 'O', 'F', 'F', '1'};

namespace detail {
inline void write_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline uint64_t read_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  if (!is) throw std::runtime_error("dataset: truncated file");
  return v;
}
template <class Alloc>
inline void write_f64_array(std::ostream& os, const std::vector<double, Alloc>& v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
}
template <class Alloc>
inline void read_f64_array(std::istream& is, std::vector<double, Alloc>& v, size_t count) {
  v.resize(count);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * 8));
  if (!is) throw std::runtime_error("dataset: truncated file");
}
}  // namespace detail

inline void dataset_write(const Dataset& d, const std::filesystem::path& path) {
  d.check_consistent();
  json header{{"version", 1},
              {"count", d.size()},
              {"state_dim", 2},
              {"action_dim", 2},
              {"norm",
               {{"mean", d.norm.mean},
                {"std", d.norm.std},
                {"applied", d.norm.applied},
                {"action_scale", d.norm.action_scale}}},
              {"meta",
               {{"env", env_to_json(d.meta.env)},
                {"env_config_hash", env_config_hash(d.meta.env)},
                {"style_offsets", d.meta.style_offsets},
                {"noise_std", d.meta.noise_std},
                {"seed", d.meta.seed},
                {"episodes_per_style", d.meta.episodes_per_style},
                {"episode_count", d.meta.episode_count}}}};
  const std::string head = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("dataset_write: cannot open " + path.string());
  os.write(kDatasetMagic, 8);
  detail::write_u64(os, head.size());
  os.write(head.data(), static_cast<std::streamsize>(head.size()));
  detail::write_f64_array(os, d.s.data);
  detail::write_f64_array(os, d.a.data);
  detail::write_f64_array(os, d.r.data);
  detail::write_f64_array(os, d.s_next.data);
  os.write(reinterpret_cast<const char*>(d.done.data()), static_cast<std::streamsize>(d.done.size()));
  if (!os) throw std::runtime_error("dataset_write: write failed for " + path.string());
}

inline Dataset dataset_read(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("dataset_read: cannot open " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kDatasetMagic, 8) != 0) {
    throw std::runtime_error("dataset_read: bad magic in " + path.string());
  }
  const uint64_t head_len = detail::read_u64(is);
  std::string head(head_len, '\0');
  is.read(head.data(), static_cast<std::streamsize>(head_len));
  if (!is) throw std::runtime_error("dataset: truncated file");

  json header;
  try {
    header = json::parse(head);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("dataset_read: bad header: ") + e.what());
  }
  if (header.at("version").get<int>() != 1) throw std::runtime_error("dataset_read: unsupported version");
  const size_t n = header.at("count").get<size_t>();

  Dataset d;
  d.s.shape = {static_cast<int>(n), 2};
  d.a.shape = {static_cast<int>(n), 2};
  d.r.shape = {static_cast<int>(n)};
  d.s_next.shape = {static_cast<int>(n), 2};
  detail::read_f64_array(is, d.s.data, n * 2);
  detail::read_f64_array(is, d.a.data, n * 2);
  detail::read_f64_array(is, d.r.data, n);
  detail::read_f64_array(is, d.s_next.data, n * 2);
  d.done.resize(n);
  if (n > 0) {
    is.read(reinterpret_cast<char*>(d.done.data()), static_cast<std::streamsize>(n));
    if (!is) throw std::runtime_error("dataset: truncated file");
  }

  const json& norm = header.at("norm");
  d.norm.mean = {norm.at("mean")[0].get<double>(), norm.at("mean")[1].get<double>()};
  d.norm.std = {norm.at("std")[0].get<double>(), norm.at("std")[1].get<double>()};
  d.norm.applied = norm.at("applied").get<bool>();
  d.norm.action_scale = norm.at("action_scale").get<double>();

  const json& meta = header.at("meta");
  d.meta.env = env_from_json(meta.at("env"));
  d.meta.style_offsets = meta.at("style_offsets").get<std::vector<double>>();
  d.meta.noise_std = meta.at("noise_std").get<double>();
  d.meta.seed = meta.at("seed").get<uint64_t>();
  d.meta.episodes_per_style = meta.at("episodes_per_style").get<int>();
  d.meta.episode_count = meta.at("episode_count").get<int>();
  d.check_consistent();
  return d;
}

}  // namespace diveoff
