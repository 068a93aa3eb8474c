// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cstdint>

#include "mgvmc/geometry.hpp"
#include "mgvmc/wfmodel.hpp"

namespace mgvmc {

inline constexpr double kSingularityGuard = 1e-12;

struct EnergyStatistics {
  double mean = 0.0;
  double variance = 0.0;   // unbiased sample variance, hartree^2
  double std_error = 0.0;  // sqrt(variance / n_samples)
  std::int64_t n_samples = 0;
};

/// Streaming mean and variance (Welford).
class RunningStatistics {
 public:
  void add(double x);
  void add(const Eigen::VectorXd& xs);
  EnergyStatistics stats() const;

 private:
  std::int64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

EnergyStatistics statistics(const Eigen::VectorXd& values);

/// Coulomb potential of one electron configuration (3N coordinates); throws
/// SingularityError naming the pair when two particles are closer than the guard.
double potential_energy(const Eigen::Ref<const Eigen::RowVectorXd>& r, const MolecularConfiguration& config);

/// E_L = -1/2 (laplacian + |grad|^2) + V for every walker. Throws NodeError when
/// the amplitude of a walker is exactly zero.
Eigen::VectorXd local_energies(const Derivatives& d, const ElectronBatch& x,
                               const MolecularConfiguration& config);
Eigen::VectorXd local_energies(const WaveFunction& wf, const ElectronBatch& x,
                               const MolecularConfiguration& config);

/// Clamps to mean +/- window * mean absolute deviation.
Eigen::VectorXd clip_local_energies(const Eigen::VectorXd& values, double window = 5.0);

}  // namespace mgvmc
