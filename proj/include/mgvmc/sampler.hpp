// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mgvmc/geometry.hpp"
#include "mgvmc/wfmodel.hpp"

namespace mgvmc {

/// One Metropolis chain per row of `positions`. `log_abs`/`sign` cache the
/// amplitude of the current positions and must be refreshed whenever the
/// wave function changes.
struct WalkerState {
  ElectronBatch positions;
  Eigen::VectorXd log_abs;
  std::vector<int> sign;
  std::mt19937_64 rng;
  double step_size = 0.02;
  std::int64_t accepted = 0;  // since the last reset_acceptance
  std::int64_t proposed = 0;

  Eigen::Index n_walkers() const { return positions.rows(); }
  double acceptance() const { return proposed > 0 ? static_cast<double>(accepted) / proposed : 0.0; }
  void reset_acceptance() { accepted = proposed = 0; }
};

/// Electrons at nuclei (round robin over a charge-weighted nucleus list, up
/// spins first) plus N(0, 1) noise; cache filled from `wf`.
WalkerState init_walkers(const MolecularConfiguration& config, Eigen::Index n_walkers, std::uint64_t seed,
                         double step_size, const WaveFunction& wf);

void refresh(WalkerState& state, const WaveFunction& wf);

/// One all-electron Gaussian proposal per walker, accepted with
/// probability min(1, |psi(r')/psi(r)|^2).
void mh_step(WalkerState& state, const WaveFunction& wf);

/// Resets the acceptance counters and applies mh_step n_steps times.
void run_chain(WalkerState& state, const WaveFunction& wf, int n_steps);

/// step *= exp(acceptance - target), clamped to [1e-4, 1].
void adapt_step_size(WalkerState& state, double target = 0.5);

inline constexpr double kMinStepSize = 1e-4;
inline constexpr double kMaxStepSize = 1.0;

/// Maps template parameters to a geometry. Built-in names: "diatomic"
/// (one parameter, the bond length along z) and "hydrogen_chain" (one
/// parameter, the uniform spacing along z).
struct GeometryTemplate {
  std::string name;
  std::vector<int> charges;
  int n_up = 0;
  int n_dn = 0;

  int n_params() const { return 1; }
  MolecularConfiguration realize(const Eigen::VectorXd& param) const;
};

GeometryTemplate make_template(const std::string& name, std::vector<int> charges, int n_up, int n_dn);

struct GeometryWalker {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::VectorXd current;
  std::mt19937_64 rng;
};

/// Splits [lower, upper] into n_bins equal bins; walkers start at bin centers.
std::vector<GeometryWalker> make_geometry_walkers(double lower, double upper, int n_bins, std::uint64_t seed);

/// Adds uniform jitter of half-width scale * (bin width) / 10 to every walker,
/// reflecting at the bin bounds, and returns the realized geometries.
std::vector<MolecularConfiguration> step_geometry_walkers(std::vector<GeometryWalker>& walkers,
                                                          const GeometryTemplate& tmpl, double scale = 1.0);

}  // namespace mgvmc
