// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mgvmc/geometry.hpp"
#include "mgvmc/metagnn.hpp"
#include "mgvmc/optimizer.hpp"
#include "mgvmc/pretraining.hpp"
#include "mgvmc/sampler.hpp"
#include "mgvmc/wfmodel.hpp"

namespace mgvmc {

/// Either a geometry template scanned over bins or an explicit geometry list.
/// Positions and template parameters are stored in bohr.
struct SystemConfig {
  std::string template_name;
  std::vector<int> charges;
  int n_up = 0;
  int n_dn = 0;
  double lower = 0.0;
  double upper = 0.0;
  int bins = 0;  // 0: one bin per geometry walker
  std::vector<MolecularConfiguration> geometries;

  bool uses_template() const { return !template_name.empty(); }
};

struct SamplerConfig {
  double step_size = 0.02;
  int steps_per_update = 40;
  int n_geometry_walkers = 16;
  int burn_in = 1000;
  bool adapt_step_size = false;
  double target_acceptance = 0.5;
  double jitter_scale = 1.0;
};

struct TrainConfig {
  int batch_size = 4096;  // split equally over geometries
  std::int64_t iterations = 60000;
  double clip_window = 5.0;
  OptimizerConfig optimizer;
  std::int64_t checkpoint_every = 1000;
};

struct PretrainConfig {
  bool enabled = true;
  int iterations = 2000;
  LambConfig lamb;
  std::string provider = "lcao";
  std::string file;
  int sweeps_per_step = 1;
};

struct EvalConfig {
  std::int64_t samples = 1000000;
  int burn_in = 200;
  int walkers = 4096;
  int thinning = 1;  // sweeps between measurements
};

struct RunConfig {
  std::string preset = "paper";
  std::uint64_t seed = 0;
  SystemConfig system;
  WfConfig model;
  GnnConfig gnn;
  SamplerConfig sampler;
  TrainConfig train;
  PretrainConfig pretrain;
  EvalConfig eval;
  std::string output_dir = "run";
  std::string log_file = "energy.csv";

  int n_up() const;
  int n_dn() const;
  int n_nuclei() const;
  int n_geometries() const;
  int walkers_per_geometry() const;
};

/// Defaults: "paper" (published hyperparameters) or "desk" (laptop scale).
RunConfig preset(const std::string& name);

/// Reads a run configuration document on top of its "preset" (default
/// "paper"). Unknown keys and invalid values raise ConfigError.
RunConfig config_from_json(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);
nlohmann::json to_json(const RunConfig& config);

/// Checks every invariant of a configuration; throws ConfigError.
void validate(const RunConfig& config);

/// Geometry document {"charges", "positions", "n_up", "n_dn", "units"}.
MolecularConfiguration geometry_from_json(const nlohmann::json& doc);
nlohmann::json geometry_to_json(const MolecularConfiguration& config);

std::optional<GeometryTemplate> system_template(const SystemConfig& system);

/// Applies MGVMC_SEED when set.
void apply_environment(RunConfig& config);

}  // namespace mgvmc
