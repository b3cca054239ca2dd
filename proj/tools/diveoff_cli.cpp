// Command-line entry points wiring dataset generation, training, evaluation,
// few-shot adaptation and dataset entropy into reproducible experiments.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "diveoff/config.hpp"
#include "diveoff/eval.hpp"
#include "diveoff/manifest.hpp"
#include "diveoff/train.hpp"

namespace fs = std::filesystem;
using namespace diveoff;

namespace {

struct CommonFlags {
  std::string config_file;
  uint64_t seed = 0;
};

RunConfig effective_config(const CommonFlags& common) {
  RunConfig cfg;
  if (!common.config_file.empty()) cfg = load_config_file(common.config_file);
  cfg.train.seed = common.seed;
  return cfg;
}

void write_json_file(const json& doc, const fs::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  os << doc.dump(2) << "\n";
}

int cmd_gen_data(const CommonFlags& common, const std::string& out, int styles_flag, int episodes_flag,
                 double noise_flag, const std::string& variant_flag, bool no_jitter) {
  RunConfig cfg = effective_config(common);
  if (styles_flag > 0) cfg.gen.styles = styles_flag;
  if (episodes_flag > 0) cfg.gen.episodes_per_style = episodes_flag;
  if (noise_flag >= 0.0) cfg.gen.noise_std = noise_flag;
  if (!variant_flag.empty()) cfg.env.variant = variant_from_name(variant_flag);
  if (no_jitter) cfg.gen.jitter = false;
  cfg.env.validate();

  RunManifest manifest("gen-data", config_to_json(cfg), common.seed);
  if (!common.config_file.empty()) manifest.add_input(common.config_file);

  log_info("generating dataset: " + std::to_string(cfg.gen.styles) + " styles x " +
           std::to_string(cfg.gen.episodes_per_style) + " episodes");
  Dataset d = generate_dataset(cfg.env, default_styles(cfg.gen.styles, cfg.gen.noise_std),
                               cfg.gen.episodes_per_style, common.seed, cfg.gen.jitter);
  normalize_states(d);
  dataset_write(d, out);
  manifest.add_output(out);
  manifest.write(out + ".manifest.json");
  std::printf("wrote %s (%zu transitions, %d episodes, fnv1a64 %s)\n", out.c_str(), d.size(),
              d.meta.episode_count, hex64(file_fnv1a(out)).c_str());
  return 0;
}

int cmd_train(const CommonFlags& common, const std::string& algo_flag, const std::string& data,
              const std::string& out_dir, int steps_flag, int pretrain_flag, int hidden_flag) {
  RunConfig cfg = effective_config(common);
  if (steps_flag >= 0) cfg.train.total_steps = steps_flag;
  if (pretrain_flag >= 0) cfg.train.vae_pretrain_steps = pretrain_flag;
  if (hidden_flag > 0) cfg.train.hidden = hidden_flag;
  const Algo algo = algo_from_name(algo_flag);
  cfg.train.validate();

  RunManifest manifest("train", config_to_json(cfg), common.seed);
  manifest.add_input(data);
  if (!common.config_file.empty()) manifest.add_input(common.config_file);

  Dataset dataset = dataset_read(data);
  fs::create_directories(out_dir);
  const fs::path ckpt_path = fs::path(out_dir) / "checkpoint.bin";
  const fs::path metrics_path = fs::path(out_dir) / "metrics.jsonl";
  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot open " + metrics_path.string());

  const uint64_t config_hash = fnv1a64(config_to_json(cfg).dump());
  std::optional<ModelBundle> last_good;
  int64_t last_good_step = 0;
  auto sink = [&](const json& rec) {
    metrics << rec.dump() << "\n";
    log_debug(rec.dump());
  };
  auto snapshot = [&](const ModelBundle& m, int64_t step) {
    last_good = m;
    last_good_step = step;
  };

  auto write_ckpt = [&](const ModelBundle& models, int64_t steps) {
    Checkpoint ck;
    ck.models = models;
    ck.env = dataset.meta.env;
    ck.algo = algo_name(algo);
    ck.config_hash = config_hash;
    ck.step_count = steps;
    checkpoint_write(ck, ckpt_path);
  };

  try {
    log_info("training " + algo_name(algo) + " for " + std::to_string(cfg.train.total_steps) + " steps");
    TrainResult result = algo == Algo::Diveoff ? train(dataset, cfg.train, sink, snapshot)
                                               : train_baseline(dataset, cfg.train, algo, sink, snapshot);
    write_ckpt(result.models, result.steps_done);
  } catch (const std::runtime_error& e) {
    metrics.flush();
    if (last_good) {
      write_ckpt(*last_good, last_good_step);
      std::cerr << "error: " << e.what() << " (checkpoint retained at step " << last_good_step << ")\n";
    } else {
      std::cerr << "error: " << e.what() << "\n";
    }
    return 1;
  }
  metrics.close();
  manifest.add_output(ckpt_path);
  manifest.add_output(metrics_path);
  manifest.write(fs::path(out_dir) / "manifest.json");
  std::printf("wrote %s (fnv1a64 %s)\n", ckpt_path.string().c_str(),
              hex64(file_fnv1a(ckpt_path)).c_str());
  return 0;
}

int cmd_eval(const CommonFlags& common, const std::string& ckpt, int episodes, int grid,
             const std::string& report_path, double bandwidth) {
  RunManifest manifest("eval", json{{"episodes", episodes}, {"z_grid", grid}, {"bandwidth", bandwidth}},
                       common.seed);
  manifest.add_input(ckpt);
  Checkpoint ck = checkpoint_read(ckpt);

  EvalOptions opt;
  opt.grid = grid;
  opt.episodes = episodes;
  opt.seed = common.seed;
  opt.bandwidth = bandwidth;
  json report = build_eval_report(ck.models, ck.env, opt);
  report["checkpoint"] = {{"path", ckpt}, {"fnv1a64", hex64(file_fnv1a(ckpt))}, {"algo", ck.algo},
                          {"step_count", ck.step_count}};
  write_json_file(report, report_path);
  manifest.add_output(report_path);
  manifest.write(report_path + ".manifest.json");

  // summary printed from the report document itself
  for (const auto& cell : report.at("cells")) {
    std::printf("z=(%+.2f, %+.2f)  return %+8.4f  success %5.1f%%  score %6.2f  mode %s\n",
                cell.at("z")[0].get<double>(), cell.at("z")[1].get<double>(),
                cell.at("mean_return").get<double>(), 100.0 * cell.at("success_rate").get<double>(),
                cell.at("normalized_score").get<double>(), cell.at("mode").get<std::string>().c_str());
  }
  const auto& overall = report.at("overall");
  std::printf("overall: success %5.1f%%  return %+.4f  score %.2f  diversity %.4f (h=%.4g)\n",
              100.0 * overall.at("success_rate").get<double>(), overall.at("mean_return").get<double>(),
              overall.at("normalized_score").get<double>(), overall.at("diversity_score").get<double>(),
              report.at("bandwidth").get<double>());
  return 0;
}

int cmd_adapt(const CommonFlags& common, const std::string& ckpt, const std::string& variant, int budget,
              const std::string& report_path) {
  RunManifest manifest("adapt", json{{"variant", variant}, {"budget", budget}}, common.seed);
  manifest.add_input(ckpt);
  Checkpoint ck = checkpoint_read(ckpt);
  EnvConfig env = ck.env;
  env.variant = variant_from_name(variant);
  env.validate();

  AdaptResult res = few_shot_adapt(ck.models, env, budget, common.seed);
  RolloutResult at_zmax = rollout(ck.models, res.z_max, env, 1, common.seed);
  const std::string mode = mode_label_name(trajectory_mode_label(at_zmax.trajectories.front()));

  double probe_mean = 0.0;
  json probes = json::array();
  for (size_t i = 0; i < res.probe_zs.size(); ++i) {
    probes.push_back({{"z", {res.probe_zs[i].x, res.probe_zs[i].y}}, {"return", res.probe_returns[i]}});
    probe_mean += res.probe_returns[i];
  }
  probe_mean /= res.probe_returns.size();

  json report{{"variant", variant},
              {"budget", budget},
              {"seed", common.seed},
              {"probes", probes},
              {"probe_mean_return", probe_mean},
              {"z_max", {res.z_max.x, res.z_max.y}},
              {"adapted_returns", res.adapted_returns},
              {"adapted_mean_return", res.adapted_mean_return},
              {"adapted_mode", mode},
              {"checkpoint", {{"path", ckpt}, {"fnv1a64", hex64(file_fnv1a(ckpt))}}}};
  write_json_file(report, report_path);
  manifest.add_output(report_path);
  manifest.write(report_path + ".manifest.json");

  std::printf("probes: %d, probe mean return %+.4f\n", budget, probe_mean);
  std::printf("z_max = (%+.4f, %+.4f), adapted mean return %+.4f, mode %s\n", res.z_max.x, res.z_max.y,
              res.adapted_mean_return, mode.c_str());
  return 0;
}

int cmd_dataset_entropy(const CommonFlags& common, const std::string& data, int max_components,
                        int batch_size, int batches, const std::string& report_path) {
  RunManifest manifest("dataset-entropy",
                       json{{"max_components", max_components}, {"batch_size", batch_size}, {"batches", batches}},
                       common.seed);
  manifest.add_input(data);
  Dataset d = dataset_read(data);
  require(d.size() > 0, "dataset-entropy: empty dataset");

  RngStream rng(common.seed, "entropy");
  json per_batch = json::array();
  std::vector<double> bounds;
  for (int b = 0; b < batches; ++b) {
    const int n = std::min<int>(batch_size, static_cast<int>(d.size()));
    Tensor states = Tensor::zeros({n, 2});
    for (int i = 0; i < n; ++i) {
      const auto k = static_cast<int>(rng.index(d.size()));
      Vec2 s{d.s(k, 0), d.s(k, 1)};
      if (d.norm.applied) s = d.norm.denormalize(s);  // entropy in raw env coordinates
      states(i, 0) = s.x;
      states(i, 1) = s.y;
    }
    GmmModel gmm = gmm_fit_bic(states, max_components, common.seed + static_cast<uint64_t>(b));
    const double bound = entropy_upper_bound(gmm);
    bounds.push_back(bound);
    per_batch.push_back({{"entropy_upper_bound", bound}, {"components", gmm.components.size()}, {"samples", n}});
  }
  double mean = 0.0;
  for (double v : bounds) mean += v;
  mean /= bounds.size();
  double var = 0.0;
  for (double v : bounds) var += (v - mean) * (v - mean);
  const double stddev = std::sqrt(var / bounds.size());

  json report{{"data", data},
              {"seed", common.seed},
              {"max_components", max_components},
              {"batches", per_batch},
              {"entropy_mean", mean},
              {"entropy_std", stddev}};
  write_json_file(report, report_path);
  manifest.add_output(report_path);
  manifest.write(report_path + ".manifest.json");
  std::printf("state entropy upper bound: %.4f +- %.4f nats (%d batches)\n", mean, stddev, batches);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DiveOff: discovering multiple solutions in offline RL on a 2D path-planning task"};
  app.require_subcommand(1);

  CommonFlags common;

  auto* gen = app.add_subcommand("gen-data", "Generate and normalize an offline dataset");
  std::string gen_out;
  int gen_styles = -1, gen_episodes = -1;
  double gen_noise = -1.0;
  std::string gen_variant;
  bool gen_no_jitter = false;
  gen->add_option("--out", gen_out, "Output dataset file")->required();
  gen->add_option("--seed", common.seed, "Run seed");
  gen->add_option("--config", common.config_file, "Config file (flat key = value)");
  gen->add_option("--styles", gen_styles, "Number of behavior styles (default 4)");
  gen->add_option("--episodes", gen_episodes, "Episodes per style (default 250)");
  gen->add_option("--noise", gen_noise, "Scripted policy action noise (default 0.01)");
  gen->add_option("--variant", gen_variant, "Env variant: none|wall-upper|wall-lower");
  gen->add_flag("--no-jitter", gen_no_jitter, "Disable start-position jitter");

  auto* train_cmd = app.add_subcommand("train", "Train DiveOff or a baseline on a dataset");
  std::string train_algo = "diveoff", train_data, train_out;
  int train_steps = -1, train_pretrain = -1, train_hidden = -1;
  train_cmd->add_option("--algo", train_algo, "diveoff|awacl-vae|awacl-vae-diayn");
  train_cmd->add_option("--data", train_data, "Dataset file")->required();
  train_cmd->add_option("--out", train_out, "Output run directory")->required();
  train_cmd->add_option("--steps", train_steps, "Total training steps (default 50000)");
  train_cmd->add_option("--pretrain-steps", train_pretrain, "VAE pretraining steps (default 2000)");
  train_cmd->add_option("--hidden", train_hidden, "Hidden width (default 64)");
  train_cmd->add_option("--seed", common.seed, "Run seed");
  train_cmd->add_option("--config", common.config_file, "Config file (flat key = value)");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint over the latent grid");
  std::string eval_ckpt, eval_report = "eval_report.json";
  int eval_episodes = 10, eval_grid = 3;
  double eval_bandwidth = 0.0;
  eval_cmd->add_option("--ckpt", eval_ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--episodes", eval_episodes, "Episodes per z cell (default 10)");
  eval_cmd->add_option("--z-grid", eval_grid, "Grid size g for the g x g latent grid (default 3)");
  eval_cmd->add_option("--report", eval_report, "Report JSON path");
  eval_cmd->add_option("--bandwidth", eval_bandwidth, "Fixed kernel bandwidth (default: median heuristic)");
  eval_cmd->add_option("--seed", common.seed, "Run seed");

  auto* adapt_cmd = app.add_subcommand("adapt", "Few-shot adaptation to a wall variant");
  std::string adapt_ckpt, adapt_variant, adapt_report = "adapt_report.json";
  int adapt_budget = 25;
  adapt_cmd->add_option("--ckpt", adapt_ckpt, "Checkpoint file")->required();
  adapt_cmd->add_option("--variant", adapt_variant, "wall-upper|wall-lower")->required();
  adapt_cmd->add_option("--budget", adapt_budget, "Probe budget K (default 25)");
  adapt_cmd->add_option("--report", adapt_report, "Report JSON path");
  adapt_cmd->add_option("--seed", common.seed, "Run seed");

  auto* entropy_cmd = app.add_subcommand("dataset-entropy", "GMM/BIC state entropy upper bound");
  std::string entropy_data, entropy_report = "entropy_report.json";
  int entropy_max_components = 8, entropy_batch = 5000, entropy_batches = 5;
  entropy_cmd->add_option("--data", entropy_data, "Dataset file")->required();
  entropy_cmd->add_option("--max-components", entropy_max_components, "Max GMM components (default 8)");
  entropy_cmd->add_option("--batch-size", entropy_batch, "Samples per batch (default 5000)");
  entropy_cmd->add_option("--batches", entropy_batches, "Number of batches (default 5)");
  entropy_cmd->add_option("--report", entropy_report, "Report JSON path");
  entropy_cmd->add_option("--seed", common.seed, "Run seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen_data(common, gen_out, gen_styles, gen_episodes, gen_noise, gen_variant, gen_no_jitter);
    }
    if (train_cmd->parsed()) {
      return cmd_train(common, train_algo, train_data, train_out, train_steps, train_pretrain, train_hidden);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(common, eval_ckpt, eval_episodes, eval_grid, eval_report, eval_bandwidth);
    }
    if (adapt_cmd->parsed()) {
      return cmd_adapt(common, adapt_ckpt, adapt_variant, adapt_budget, adapt_report);
    }
    if (entropy_cmd->parsed()) {
      return cmd_dataset_entropy(common, entropy_data, entropy_max_components, entropy_batch,
                                 entropy_batches, entropy_report);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
