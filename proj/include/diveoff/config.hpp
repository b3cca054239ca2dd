#pragma once

#include <fstream>
#include <map>
#include <string>

#include "diveoff/dataset.hpp"
#include "diveoff/losses.hpp"

namespace diveoff {

// Dataset generation settings (gen.* keys).
struct GenConfig {
  int styles = 4;
  int episodes_per_style = 250;
  double noise_std = 0.01;
  bool jitter = true;
};

struct RunConfig {
  TrainConfig train;
  EnvConfig env;
  GenConfig gen;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double as_number(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + value + "'");
  }
}

inline bool as_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw std::invalid_argument("config: key '" + key + "' expects true/false, got '" + value + "'");
}

}  // namespace config_detail

// Applies one flat key = value setting.
inline void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  using config_detail::as_bool;
  using config_detail::as_number;
  TrainConfig& t = cfg.train;
  EnvConfig& e = cfg.env;
  GenConfig& g = cfg.gen;
  if (key == "discount") t.discount = as_number(key, value);
  else if (key == "batch_size") t.batch_size = static_cast<int>(as_number(key, value));
  else if (key == "critic_lr") t.critic_lr = as_number(key, value);
  else if (key == "actor_lr") t.actor_lr = as_number(key, value);
  else if (key == "vae_lr") t.vae_lr = as_number(key, value);
  else if (key == "m_info_lr") t.m_info_lr = as_number(key, value);
  else if (key == "tau") t.tau = as_number(key, value);
  else if (key == "d_interval") t.d_interval = static_cast<int>(as_number(key, value));
  else if (key == "inv_alpha_pi") t.inv_alpha_pi = as_number(key, value);
  else if (key == "inv_alpha_q") t.inv_alpha_q = as_number(key, value);
  else if (key == "info_weight") t.info_weight = as_number(key, value);
  else if (key == "vae_pretrain_steps") t.vae_pretrain_steps = static_cast<int>(as_number(key, value));
  else if (key == "total_steps") t.total_steps = static_cast<int>(as_number(key, value));
  else if (key == "weight_clip") t.weight_clip = as_number(key, value);
  else if (key == "n_v") t.n_v = static_cast<int>(as_number(key, value));
  else if (key == "n_z") t.n_z = static_cast<int>(as_number(key, value));
  else if (key == "hidden") t.hidden = static_cast<int>(as_number(key, value));
  else if (key == "diayn_coef") t.diayn_coef = as_number(key, value);
  else if (key == "log_interval") t.log_interval = static_cast<int>(as_number(key, value));
  else if (key == "env.goal_radius") e.goal_radius = as_number(key, value);
  else if (key == "env.max_step") e.max_step = as_number(key, value);
  else if (key == "env.horizon") e.horizon = static_cast<int>(as_number(key, value));
  else if (key == "env.step_cost") e.step_cost = as_number(key, value);
  else if (key == "env.goal_reward") e.goal_reward = as_number(key, value);
  else if (key == "env.variant") e.variant = variant_from_name(value);
  else if (key == "env.start_x") e.start.x = as_number(key, value);
  else if (key == "env.start_y") e.start.y = as_number(key, value);
  else if (key == "env.goal_x") e.goal.x = as_number(key, value);
  else if (key == "env.goal_y") e.goal.y = as_number(key, value);
  else if (key == "gen.styles") g.styles = static_cast<int>(as_number(key, value));
  else if (key == "gen.episodes_per_style") g.episodes_per_style = static_cast<int>(as_number(key, value));
  else if (key == "gen.noise_std") g.noise_std = as_number(key, value);
  else if (key == "gen.jitter") g.jitter = as_bool(key, value);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

// Flat key = value file; '#' starts a comment.
inline RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = RunConfig{}) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: line " + std::to_string(lineno) + " is not 'key = value'");
    }
    const std::string key = config_detail::trim(line.substr(0, eq));
    const std::string value = config_detail::trim(line.substr(eq + 1));
    apply_config_entry(base, key, value);
  }
  return base;
}

inline json config_to_json(const RunConfig& cfg) {
  const TrainConfig& t = cfg.train;
  return json{{"train",
               {{"discount", t.discount},
                {"batch_size", t.batch_size},
                {"critic_lr", t.critic_lr},
                {"actor_lr", t.actor_lr},
                {"vae_lr", t.vae_lr},
                {"m_info_lr", t.m_info_lr},
                {"tau", t.tau},
                {"d_interval", t.d_interval},
                {"inv_alpha_pi", t.inv_alpha_pi},
                {"inv_alpha_q", t.inv_alpha_q},
                {"info_weight", t.info_weight},
                {"vae_pretrain_steps", t.vae_pretrain_steps},
                {"total_steps", t.total_steps},
                {"weight_clip", t.weight_clip},
                {"n_v", t.n_v},
                {"n_z", t.n_z},
                {"hidden", t.hidden},
                {"diayn_coef", t.diayn_coef},
                {"log_interval", t.log_interval},
                {"seed", t.seed}}},
              {"env", env_to_json(cfg.env)},
              {"gen",
               {{"styles", cfg.gen.styles},
                {"episodes_per_style", cfg.gen.episodes_per_style},
                {"noise_std", cfg.gen.noise_std},
                {"jitter", cfg.gen.jitter}}}};
}

}  // namespace diveoff
