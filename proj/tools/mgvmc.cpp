// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>

#include "mgvmc/checks.hpp"
#include "mgvmc/config.hpp"
#include "mgvmc/errors.hpp"
#include "mgvmc/parallel.hpp"
#include "mgvmc/runner.hpp"

using namespace mgvmc;
namespace fs = std::filesystem;

namespace {

RunConfig read_config(const std::string& path) {
  RunConfig config = load_config(path);
  apply_environment(config);
  return config;
}

// Everything that shapes the trajectory must agree between a checkpoint and the config resuming it.
void require_compatible(const RunConfig& saved, const RunConfig& given) {
  auto strip = [](nlohmann::json j) {
    j["optimizer"].erase("iterations");
    j["optimizer"].erase("checkpoint_every");
    j.erase("output_dir");
    j.erase("log_file");
    j.erase("evaluation");
    return j;
  };
  if (strip(to_json(saved)) != strip(to_json(given))) {
    throw ConfigError("config differs from the checkpoint in more than iterations, checkpointing, output or evaluation");
  }
}

int cmd_train(const std::string& config_path, const std::string& resume) {
  RunConfig config = read_config(config_path);
  std::unique_ptr<Trainer> trainer;
  if (resume.empty()) {
    trainer = std::make_unique<Trainer>(config);
  } else {
    Checkpoint ckpt = load_checkpoint(resume);
    require_compatible(ckpt.config, config);
    ckpt.config = config;
    trainer = std::make_unique<Trainer>(std::move(ckpt));
  }
  fs::create_directories(config.output_dir);
  EnergyLog log((fs::path(config.output_dir) / config.log_file).string(), !resume.empty());
  const std::int64_t every = std::max<std::int64_t>(1, config.train.iterations / 50);
  run_training(*trainer, log, [&](const std::vector<EnergyRecord>& records) {
    if (records.front().step % every != 0) return;
    double e = 0.0, var = 0.0;
    for (const auto& r : records) {
      e += r.energy;
      var += r.variance;
    }
    std::cout << "step " << records.front().step << "  mean E " << std::setprecision(8) << e / records.size()
              << "  mean Var " << std::setprecision(4) << var / records.size() << "  " << records.front().seconds
              << " s/step" << std::endl;
  });
  std::cout << "wrote " << (fs::path(config.output_dir) / "final.ckpt").string() << std::endl;
  return 0;
}

int cmd_pretrain(const std::string& config_path) {
  RunConfig config = read_config(config_path);
  Trainer trainer(config);
  const auto losses = trainer.pretrain(config.pretrain.iterations);
  if (!losses.empty()) {
    std::cout << "pretraining loss " << losses.front() << " -> " << losses.back() << " after " << losses.size()
              << " steps" << std::endl;
  }
  fs::create_directories(config.output_dir);
  const std::string path = (fs::path(config.output_dir) / "pretrained.ckpt").string();
  save_checkpoint(path, trainer.checkpoint());
  std::cout << "wrote " << path << std::endl;
  return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& geometry, std::int64_t samples) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const auto stats = evaluate_checkpoint(ckpt, parse_geometry(geometry, ckpt.config), samples);
  std::cout << std::setprecision(10) << "energy_hartree " << stats.mean << "\nstderr_hartree " << stats.std_error
            << "\nvariance " << stats.variance << "\nsamples " << stats.n_samples << std::endl;
  return 0;
}

int cmd_scan(const std::string& ckpt_path, const std::string& grid, const std::string& out, std::int64_t samples) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const auto points = scan(ckpt, parse_grid(grid), samples);
  write_scan_csv(out, points);
  int failed = 0;
  for (const auto& p : points) {
    if (p.error.empty()) {
      std::cout << std::setprecision(10) << p.param << "  " << p.stats.mean << " +- " << p.stats.std_error << "\n";
    } else {
      ++failed;
      std::cerr << "point " << p.param << " failed: " << p.error << "\n";
    }
  }
  std::cout << "wrote " << out << std::endl;
  return failed == 0 ? 0 : 1;
}

int cmd_check(const std::string& config_path) {
  RunConfig config = preset("desk");
  if (config_path.empty()) {
    config = config_from_json(nlohmann::json::parse(R"({
      "preset": "desk",
      "system": {"geometries": [
        {"charges": [1, 2, 1], "positions": [[0.1, 0.2, -0.3], [1.4, -0.2, 0.5], [-0.6, 1.1, 0.9]],
         "n_up": 2, "n_dn": 2}]}})"));
  } else {
    config = read_config(config_path);
  }
  apply_environment(config);
  return print_report(std::cout, run_checks(config)) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* threads = std::getenv("MGVMC_THREADS")) set_num_threads(std::atoi(threads));

  CLI::App app{"Multi-geometry variational Monte Carlo"};
  app.require_subcommand(1);

  std::string config_path, resume, ckpt, geometry, grid, out;
  std::int64_t samples = 0;

  auto* train = app.add_subcommand("train", "Pretrain and optimize a wave function");
  train->add_option("--config", config_path, "Run configuration")->required();
  train->add_option("--resume", resume, "Checkpoint to continue from");

  auto* evaluate = app.add_subcommand("evaluate", "Energy of a checkpoint at one geometry");
  evaluate->add_option("--ckpt", ckpt, "Checkpoint")->required();
  evaluate->add_option("--geometry", geometry, "Template parameter, inline JSON or geometry file")->required();
  evaluate->add_option("--samples", samples, "Local energy samples");

  auto* scan_cmd = app.add_subcommand("scan", "Energies over a grid of template parameters");
  scan_cmd->add_option("--ckpt", ckpt, "Checkpoint")->required();
  scan_cmd->add_option("--grid", grid, "a:b:n or x1,x2,...")->required();
  scan_cmd->add_option("--out", out, "CSV output")->required();
  scan_cmd->add_option("--samples", samples, "Local energy samples per point");

  auto* pretrain = app.add_subcommand("pretrain", "Orbital pretraining only");
  pretrain->add_option("--config", config_path, "Run configuration")->required();

  auto* check = app.add_subcommand("check", "Invariant self-checks on a freshly initialized model");
  check->add_option("--config", config_path, "Run configuration");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_path, resume);
    if (evaluate->parsed()) return cmd_evaluate(ckpt, geometry, samples);
    if (scan_cmd->parsed()) return cmd_scan(ckpt, grid, out, samples);
    if (pretrain->parsed()) return cmd_pretrain(config_path);
    if (check->parsed()) return cmd_check(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
