// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mgvmc/ansatz.hpp"

namespace mgvmc {

using Eigen::Index;

Ansatz::Ansatz(const WfConfig& wf, GnnConfig gnn, int n_up, int n_dn, int n_nuclei)
    : model_(std::make_unique<WaveFunctionModel>(wf, n_up, n_dn, n_nuclei)),
      gnn_(std::make_unique<MetaGnn>(std::move(gnn), *model_)) {
  for (const auto& slot : model_->layout().slots()) {
    if (slot.kind != SlotKind::Shared) continue;
    for (Index i = 0; i < slot.size(); ++i) shared_wf_index_.push_back(slot.offset + i);
  }
  n_shared_ = static_cast<Index>(shared_wf_index_.size());
}

Eigen::VectorXd Ansatz::initial_params(std::mt19937_64& rng) const {
  const Eigen::VectorXd wf = model_->initial_params(rng);
  Eigen::VectorXd theta(n_params());
  for (Index k = 0; k < n_shared_; ++k) theta(k) = wf(shared_wf_index_[k]);
  theta.tail(gnn_->layout().size()) = gnn_->initial_params(rng);
  return theta;
}

Eigen::VectorXd Ansatz::wf_params(const Eigen::VectorXd& theta, const MolecularConfiguration& config,
                                  const EquivariantFrame& frame) const {
  Eigen::VectorXd wf = Eigen::VectorXd::Zero(model_->layout().size());
  for (Index k = 0; k < n_shared_; ++k) wf(shared_wf_index_[k]) = theta(k);
  gnn_->generate(config, frame, theta.tail(gnn_->layout().size())).apply(wf);
  return wf;
}

NeuralWaveFunction Ansatz::bind(const Eigen::VectorXd& theta, const MolecularConfiguration& config) const {
  return NeuralWaveFunction(*model_, config, wf_params(theta, config, build_frame(config)));
}

Eigen::MatrixXd Ansatz::to_theta(const Eigen::VectorXd& theta, const MolecularConfiguration& config,
                                 const EquivariantFrame& frame, const Eigen::MatrixXd& wf_grad) const {
  Eigen::MatrixXd out(wf_grad.rows(), n_params());
  for (Index k = 0; k < n_shared_; ++k) out.col(k) = wf_grad.col(shared_wf_index_[k]);
  out.rightCols(gnn_->layout().size()) =
      gnn_->pullback(config, frame, theta.tail(gnn_->layout().size()), wf_grad);
  return out;
}

Eigen::MatrixXd Ansatz::per_sample_gradients(const Eigen::VectorXd& theta, const MolecularConfiguration& config,
                                             const EquivariantFrame& frame, const ElectronBatch& x,
                                             Amplitudes* values) const {
  const Eigen::VectorXd wf = wf_params(theta, config, frame);
  return to_theta(theta, config, frame, model_->param_gradients(x, config, frame, wf, values));
}

std::vector<Index> Ansatz::pretrain_indices() const {
  std::vector<Index> out;
  for (Index k = 0; k < n_shared_; ++k) out.push_back(k);
  for (Index i : gnn_->head_bias_indices()) out.push_back(n_shared_ + i);
  return out;
}

}  // namespace mgvmc
