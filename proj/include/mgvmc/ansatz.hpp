// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <memory>
#include <random>
#include <vector>

#include "mgvmc/metagnn.hpp"
#include "mgvmc/wfmodel.hpp"

namespace mgvmc {

/// Wave-function model plus the graph network that generates its tagged slots.
/// The trainable vector is [shared wave-function slots..., graph network params...].
class Ansatz {
 public:
  Ansatz(const WfConfig& wf, GnnConfig gnn, int n_up, int n_dn, int n_nuclei);

  const WaveFunctionModel& model() const { return *model_; }
  const MetaGnn& gnn() const { return *gnn_; }

  Eigen::Index n_params() const { return n_shared_ + gnn_->layout().size(); }
  Eigen::Index gnn_offset() const { return n_shared_; }

  Eigen::VectorXd initial_params(std::mt19937_64& rng) const;

  /// Full wave-function parameter vector for one geometry.
  Eigen::VectorXd wf_params(const Eigen::VectorXd& theta, const MolecularConfiguration& config,
                            const EquivariantFrame& frame) const;
  NeuralWaveFunction bind(const Eigen::VectorXd& theta, const MolecularConfiguration& config) const;

  /// d log|psi(x_s)| / d theta for every sample, S x n_params().
  Eigen::MatrixXd per_sample_gradients(const Eigen::VectorXd& theta, const MolecularConfiguration& config,
                                       const EquivariantFrame& frame, const ElectronBatch& x,
                                       Amplitudes* values = nullptr) const;

  /// Maps a gradient on the full wave-function layout (rows = samples) to theta.
  Eigen::MatrixXd to_theta(const Eigen::VectorXd& theta, const MolecularConfiguration& config,
                           const EquivariantFrame& frame, const Eigen::MatrixXd& wf_grad) const;

  /// Indices updated by orbital pretraining: shared wave-function slots and the
  /// final biases of the graph network heads.
  std::vector<Eigen::Index> pretrain_indices() const;

 private:
  std::unique_ptr<WaveFunctionModel> model_;
  std::unique_ptr<MetaGnn> gnn_;
  std::vector<Eigen::Index> shared_wf_index_;  // theta index k -> wave-function index
  Eigen::Index n_shared_ = 0;
};

}  // namespace mgvmc
