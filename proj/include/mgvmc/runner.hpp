// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mgvmc/ansatz.hpp"
#include "mgvmc/config.hpp"
#include "mgvmc/hamiltonian.hpp"
#include "mgvmc/optimizer.hpp"
#include "mgvmc/sampler.hpp"

namespace mgvmc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Independent stream seed for (seed, stream); splitmix64 finalizer.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct EnergyRecord {
  std::int64_t step = 0;
  int geom_id = 0;
  double param = 0.0;  // template parameter, NaN for explicit geometry lists
  double energy = 0.0;
  double variance = 0.0;
  double std_error = 0.0;
  double acceptance = 0.0;
  double seconds = 0.0;
};

/// Append-only CSV sink: step,geom_id,param,energy,variance,stderr,acceptance,seconds
class EnergyLog {
 public:
  static constexpr const char* kHeader = "step,geom_id,param,energy,variance,stderr,acceptance,seconds";

  /// Starts a new file, or appends to an existing one (header written only
  /// when the file is empty).
  EnergyLog(const std::string& path, bool append);
  void write(const std::vector<EnergyRecord>& records);

 private:
  std::ofstream out_;
};

struct Checkpoint {
  RunConfig config;
  TrainState state;
  bool pretrained = false;
  bool burned_in = false;
  std::vector<GeometryWalker> geometry_walkers;  // empty for explicit geometry lists
  std::vector<WalkerState> walkers;              // one per geometry; caches are not stored
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
/// Throws ConfigError on a bad magic, a version mismatch or a truncated file.
Checkpoint load_checkpoint(const std::string& path);

std::unique_ptr<Ansatz> make_ansatz(const RunConfig& config);

/// Owns the ansatz, parameters and every sampler state of one training run.
class Trainer {
 public:
  explicit Trainer(RunConfig config);
  explicit Trainer(Checkpoint ckpt);

  const RunConfig& config() const { return config_; }
  const Ansatz& ansatz() const { return *ansatz_; }
  const TrainState& state() const { return state_; }
  bool pretrained() const { return pretrained_; }
  bool burned_in() const { return burned_in_; }

  const std::vector<MolecularConfiguration>& geometries() const { return geometries_; }
  double geometry_param(int k) const;

  /// Orbital pretraining on the configured provider; returns the loss of every step.
  std::vector<double> pretrain(int iterations);
  /// Equilibrates the electron walkers with the current parameters.
  void burn_in();
  /// One VMC update; returns one record per geometry.
  std::vector<EnergyRecord> step();

  Checkpoint checkpoint() const;

 private:
  void move_geometries();

  RunConfig config_;
  std::unique_ptr<Ansatz> ansatz_;
  std::optional<GeometryTemplate> template_;
  TrainState state_;
  bool pretrained_ = false;
  bool burned_in_ = false;
  std::vector<GeometryWalker> geometry_walkers_;
  std::vector<MolecularConfiguration> geometries_;
  std::vector<WalkerState> walkers_;
};

/// Pretraining (when enabled and not done), burn-in and the VMC loop up to
/// config.train.iterations, with checkpoints in config.output_dir. A
/// NumericalError saves <output_dir>/failed.ckpt before propagating.
void run_training(Trainer& trainer, EnergyLog& log,
                  const std::function<void(const std::vector<EnergyRecord>&)>& on_step = {});

/// Burn-in (step size adapted towards 0.5 acceptance every 10 sweeps), then
/// `eval.samples` local energies taken every `eval.thinning` sweeps.
EnergyStatistics evaluate_energy(const WaveFunction& wf, const MolecularConfiguration& config,
                                 const EvalConfig& eval, double step_size, std::uint64_t seed);

/// Energy of a trained checkpoint at any geometry with its spin counts.
/// `samples` overrides the configured sample count when positive.
EnergyStatistics evaluate_checkpoint(const Checkpoint& ckpt, const MolecularConfiguration& config,
                                     std::int64_t samples = 0);

/// "a:b:n" (n evenly spaced points, ends included) or "x1,x2,...".
std::vector<double> parse_grid(const std::string& spec);
/// A template parameter, an inline JSON geometry or a path to a geometry file.
MolecularConfiguration parse_geometry(const std::string& spec, const RunConfig& config);

struct ScanPoint {
  double param = 0.0;
  EnergyStatistics stats;
  std::string error;  // empty on success
};

/// Evaluates every grid point of the checkpoint's template with the same seed.
/// Failing points are reported and skipped.
std::vector<ScanPoint> scan(const Checkpoint& ckpt, const std::vector<double>& grid, std::int64_t samples = 0);
/// param,energy_hartree,stderr_hartree,variance (failed points as nan).
void write_scan_csv(const std::string& path, const std::vector<ScanPoint>& points);

}  // namespace mgvmc
