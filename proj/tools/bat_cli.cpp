// Command-line front end: train, eval, diagnose, verify, sweep-epsilon.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "bat/config.hpp"
#include "bat/errors.hpp"
#include "bat/theorycheck.hpp"
#include "bat/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Loaded {
  bat::Checkpoint ckpt;
  bat::TrainConfig cfg;
  bat::Dataset test;
};

// Rebuilds the held-out split a checkpoint was trained against. Relative data
// paths resolve against the checkpoint's directory first, then the cwd.
Loaded load_for_eval(const fs::path& ckpt_path, const std::string& split) {
  Loaded out;
  out.ckpt = bat::load_checkpoint(ckpt_path);
  out.cfg = bat::train_config_from_json(out.ckpt.config);
  const fs::path base = fs::exists(ckpt_path.parent_path() / out.cfg.data.images) ? ckpt_path.parent_path() : fs::path();
  auto [train, test] = bat::load_data(out.cfg.data, base);
  out.test = split == "train" || test.labels.empty() ? std::move(train) : std::move(test);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw bat::IoError("cannot write " + path.string());
  out << text;
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  const bat::TrainConfig cfg = bat::load_train_config(config_path);
  auto [train, test] = bat::load_data(cfg.data, fs::path(config_path).parent_path());
  fs::create_directories(out_dir);

  bat::TrainHooks hooks;
  hooks.on_epoch = [](const bat::MetricsRow& r) {
    std::fprintf(stderr, "epoch %d loss %.4f clean %.4f robust %.4f\n", r.epoch, r.train_loss, r.clean_acc,
                 r.robust_acc);
  };
  const bat::TrainResult result = bat::train(cfg, train, test, hooks);

  // Absolute data paths keep the checkpoint usable from any directory.
  bat::Checkpoint final_ckpt = result.final_checkpoint;
  auto absolutize = [&](json& c) {
    for (const char* key : {"images", "labels"}) {
      const std::string p = c["data"][key].get<std::string>();
      if (!p.empty()) c["data"][key] = fs::absolute(fs::path(config_path).parent_path() / p).lexically_normal().string();
    }
  };
  absolutize(final_ckpt.config);
  bat::save_checkpoint(fs::path(out_dir) / "checkpoint.json", final_ckpt);
  if (result.best_checkpoint) {
    bat::Checkpoint best = *result.best_checkpoint;
    absolutize(best.config);
    bat::save_checkpoint(fs::path(out_dir) / "best_checkpoint.json", best);
  }
  write_text(fs::path(out_dir) / "metrics.csv", bat::metrics_csv(result.metrics));
  write_text(fs::path(out_dir) / "config.json", final_ckpt.config.dump(2) + "\n");
  return 0;
}

int cmd_eval(const std::string& ckpt_path, double epsilon, int steps, int restarts, double step_size,
             std::uint64_t seed, const std::string& split) {
  const Loaded l = load_for_eval(ckpt_path, split);
  bat::AttackConfig attack;
  attack.epsilon = epsilon;
  attack.steps = steps;
  attack.restarts = restarts;
  attack.random_start = restarts > 1;
  attack.step_size = step_size > 0.0 ? step_size : (steps > 0 ? 2.5 * epsilon / steps : 0.0);
  if (steps > 0 && attack.step_size == 0.0) attack.step_size = 1e-3;
  bat::Rng rng(seed);
  const bat::EvalResult r = bat::evaluate(l.ckpt, l.test, attack, rng);
  std::cout << json{{"examples", r.records.size()},
                    {"epsilon", epsilon},
                    {"steps", steps},
                    {"restarts", restarts},
                    {"step_size", attack.step_size},
                    {"clean_acc", r.clean_acc},
                    {"robust_acc", r.robust_acc},
                    {"r_nat", r.decomposition.r_nat},
                    {"r_bdy", r.decomposition.r_bdy},
                    {"r_rob", r.decomposition.r_rob}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_diagnose(const std::string& ckpt_path, const std::string& out_csv, std::uint64_t seed,
                 const std::string& split) {
  const Loaded l = load_for_eval(ckpt_path, split);
  bat::Rng rng(seed);
  const bat::EvalResult r = bat::evaluate(l.ckpt, l.test, l.cfg.eval_attack, rng);
  std::ofstream out(out_csv, std::ios::binary);
  if (!out) throw bat::IoError("cannot write " + out_csv);
  bat::write_diagnostics_csv(out, r.records);
  std::cout << json{{"examples", r.records.size()},
                    {"clean_acc", r.clean_acc},
                    {"robust_acc", r.robust_acc},
                    {"r_nat", r.decomposition.r_nat},
                    {"r_bdy", r.decomposition.r_bdy},
                    {"r_rob", r.decomposition.r_rob}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_verify(int trials, std::uint64_t seed) {
  bool ok = true;
  for (const auto& r : bat::run_all_checks(trials, seed)) {
    std::cout << r.to_json().dump() << '\n';
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  if (out.empty()) throw bat::ConfigError("empty epsilon list");
  return out;
}

int cmd_sweep(const std::string& config_path, const std::string& eps_list, const std::string& methods,
              const std::string& out_csv) {
  const bat::TrainConfig base = bat::load_train_config(config_path);
  auto [train, test] = bat::load_data(base.data, fs::path(config_path).parent_path());
  const std::vector<double> epsilons = parse_list(eps_list);
  std::vector<bat::Method> method_list;
  if (methods.empty()) {
    method_list.push_back(base.loss.method);
  } else {
    std::stringstream ss(methods);
    std::string item;
    while (std::getline(ss, item, ',')) method_list.push_back(bat::method_from_string(item));
  }

  std::ostringstream csv;
  csv << "method,epsilon,clean_acc,robust_acc,r_nat,r_bdy,r_rob,mean_log_alpha_y,mean_neg_log_alpha_t\n";
  for (bat::Method method : method_list) {
    for (double eps : epsilons) {
      bat::TrainConfig cfg = base;
      cfg.loss.method = method;
      // Train and evaluate at the same radius, scaling step sizes with it.
      const double train_scale = base.attack.epsilon > 0.0 ? eps / base.attack.epsilon : 1.0;
      const double eval_scale = base.eval_attack.epsilon > 0.0 ? eps / base.eval_attack.epsilon : 1.0;
      cfg.attack.epsilon = eps;
      cfg.attack.step_size = base.attack.step_size * train_scale;
      cfg.eval_attack.epsilon = eps;
      cfg.eval_attack.step_size = base.eval_attack.step_size * eval_scale;
      if (cfg.attack.steps > 0 && cfg.attack.step_size <= 0.0) cfg.attack.step_size = 2.5 * eps / cfg.attack.steps;
      if (cfg.eval_attack.steps > 0 && cfg.eval_attack.step_size <= 0.0) {
        cfg.eval_attack.step_size = 2.5 * eps / cfg.eval_attack.steps;
      }
      const bat::TrainResult result = bat::train(cfg, train, test);
      bat::Rng rng(cfg.seed);
      const bat::EvalResult r = bat::evaluate(result.final_checkpoint, test, cfg.eval_attack, rng);
      double la_y = 0.0;
      double la_t = 0.0;
      for (const auto& rec : r.records) {
        la_y += rec.log_alpha_y;
        la_t -= rec.log_alpha_t;
      }
      const auto n = static_cast<double>(r.records.size());
      char line[256];
      std::snprintf(line, sizeof line, "%s,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", bat::to_string(method),
                    eps, r.clean_acc, r.robust_acc, r.decomposition.r_nat, r.decomposition.r_bdy,
                    r.decomposition.r_rob, la_y / n, la_t / n);
      csv << line;
      std::fprintf(stderr, "%s", line);
    }
  }
  if (out_csv.empty()) {
    std::cout << csv.str();
  } else {
    write_text(out_csv, csv.str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial training with AT, TRADES and bridged (BAT) objectives"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  auto* train = app.add_subcommand("train", "Train a model from a JSON config");
  train->add_option("--config", config_path, "Training config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out_dir, "Output directory")->required();

  std::string ckpt_path, split = "test";
  double epsilon = 0.0, step_size = 0.0;
  int steps = 20, restarts = 1;
  std::uint64_t seed = 0;
  auto* eval = app.add_subcommand("eval", "Clean and robust accuracy of a checkpoint");
  eval->add_option("--checkpoint", ckpt_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--epsilon", epsilon)->required();
  eval->add_option("--steps", steps)->required();
  eval->add_option("--restarts", restarts)->required();
  eval->add_option("--step-size", step_size, "PGD step size (default 2.5 * epsilon / steps)");
  eval->add_option("--seed", seed);
  eval->add_option("--split", split)->check(CLI::IsMember({"train", "test"}));

  std::string diag_out;
  auto* diagnose = app.add_subcommand("diagnose", "Per-example margin/smoothness records as CSV");
  diagnose->add_option("--checkpoint", ckpt_path)->required()->check(CLI::ExistingFile);
  diagnose->add_option("--out", diag_out)->required();
  diagnose->add_option("--seed", seed);
  diagnose->add_option("--split", split)->check(CLI::IsMember({"train", "test"}));

  int trials = 100;
  auto* verify = app.add_subcommand("verify", "Numerical checks of the gradient identity and chain bounds");
  verify->add_option("--trials", trials)->check(CLI::PositiveNumber);
  verify->add_option("--seed", seed);

  std::string eps_list, methods, sweep_out;
  auto* sweep = app.add_subcommand("sweep-epsilon", "Train and evaluate across perturbation radii");
  sweep->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  sweep->add_option("--epsilons", eps_list, "Comma-separated radii")->required();
  sweep->add_option("--methods", methods, "Comma-separated subset of AT,TRADES,BAT (default: config's)");
  sweep->add_option("--out", sweep_out, "CSV path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config_path, out_dir);
    if (*eval) return cmd_eval(ckpt_path, epsilon, steps, restarts, step_size, seed, split);
    if (*diagnose) return cmd_diagnose(ckpt_path, diag_out, seed, split);
    if (*verify) return cmd_verify(trials, seed);
    if (*sweep) return cmd_sweep(config_path, eps_list, methods, sweep_out);
  } catch (const bat::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
