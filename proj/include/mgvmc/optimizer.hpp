// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

#include "mgvmc/hamiltonian.hpp"

namespace mgvmc {

/// Samples of one geometry: clipped local energies and the per-sample
/// gradients of log|psi| over the joint parameters (one row per sample).
struct GeometryBatch {
  Eigen::VectorXd local_energies;
  Eigen::MatrixXd grad_logpsi;
  Eigen::VectorXd weights;  // optional sample weights; empty means uniform
};

/// Per geometry 2 * mean((E_L - mean E_L) * grad log|psi|) (weighted means when
/// weights are given), averaged over geometries.
Eigen::VectorXd vmc_gradient(const std::vector<GeometryBatch>& batches);

/// (1/S) sum_s g_s (g_s^T x) + lambda x with g_s the rows of `grads`.
Eigen::VectorXd fisher_vector_product(const Eigen::MatrixXd& grads, const Eigen::VectorXd& x, double lambda);

struct CgSettings {
  int max_steps = 100;
  double tolerance = 1e-12;  // relative decrease of the quadratic over the window
  int window = 10;
  double residual_tolerance = 1e-12;  // relative to |b|
};

struct CgResult {
  Eigen::VectorXd x;
  int steps = 0;
};

/// Conjugate gradients from x = 0. Throws NumericalError on non-finite
/// iterates.
CgResult cg_solve(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply_a, const Eigen::VectorXd& b,
                  const CgSettings& settings = {});

struct OptimizerConfig {
  double learning_rate = 0.1;
  double decay_steps = 1000.0;
  double max_step_norm = 1.0;
  double damping_scale = 1e-4;  // lambda = scale * Std[E_L]
  double damping_floor = 1e-8;
  bool centered_fisher = false;
  CgSettings cg;
};

struct TrainState {
  Eigen::VectorXd params;
  std::int64_t step = 0;
};

double learning_rate(const OptimizerConfig& config, std::int64_t step);

/// damping_scale * sqrt(mean within-geometry variance of the clipped energies),
/// at least damping_floor.
double damping(const OptimizerConfig& config, const std::vector<GeometryBatch>& batches);

/// All samples stacked, centered per geometry when requested.
Eigen::MatrixXd fisher_samples(const std::vector<GeometryBatch>& batches, bool centered);

struct UpdateInfo {
  double learning_rate = 0.0;
  double damping = 0.0;
  double step_norm = 0.0;  // before clipping
  int cg_steps = 0;
};

/// Solves (F + lambda) delta = gradient, clips |delta|, steps the parameters.
UpdateInfo apply_update(TrainState& state, const OptimizerConfig& config, const std::vector<GeometryBatch>& batches);

double convergence_metric(const std::vector<EnergyStatistics>& per_geometry);

}  // namespace mgvmc
