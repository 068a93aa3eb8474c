// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <random>
#include <vector>

#include "mgvmc/autodiff.hpp"
#include "mgvmc/basis.hpp"
#include "mgvmc/geometry.hpp"
#include "mgvmc/params.hpp"
#include "mgvmc/wfmodel.hpp"

namespace mgvmc {

struct GnnConfig {
  int embedding_dim = 64;
  int message_dim = 32;
  int n_steps = 2;
  int mlp_depth = 2;
  int n_sbf = 7;
  int n_rbf = 6;
  double length_scale = 10.0;
  double head_scale = 1e-7;
  std::vector<int> charges{1};
};

/// Values for every graph-generated slot of a wave-function layout, in slot
/// order. Node slots have one row per nucleus in input order.
struct ParameterAssignment {
  std::vector<const ParamSlot*> slots;
  std::vector<Eigen::MatrixXd> values;

  const Eigen::MatrixXd& operator[](const std::string& name) const;
  /// Copies every assigned value into a full wave-function parameter vector.
  void apply(Eigen::VectorXd& wf_params) const;
};

/// Graph network over the nuclei that emits the graph-generated slots of a
/// WaveFunctionModel layout.
class MetaGnn {
 public:
  MetaGnn(GnnConfig config, const WaveFunctionModel& model);

  const GnnConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  const BesselBasis& basis() const { return basis_; }

  Eigen::VectorXd initial_params(std::mt19937_64& rng) const;
  /// Indices of the final biases of every output head.
  std::vector<Eigen::Index> head_bias_indices() const;

  /// l^1 rows in input nucleus order.
  Eigen::MatrixXd initial_embeddings(const MolecularConfiguration& config,
                                     const EquivariantFrame& frame, const Eigen::VectorXd& params) const;

  struct Graph {
    std::vector<const ParamSlot*> slots;
    std::vector<ad::Var> outputs;  // shared nodes, input nucleus order
  };
  Graph build(ad::Tape& tape, const MolecularConfiguration& config, const EquivariantFrame& frame,
              const Eigen::VectorXd& params) const;

  ParameterAssignment generate(const MolecularConfiguration& config, const EquivariantFrame& frame,
                               const Eigen::VectorXd& params) const;

  /// Maps cotangents on the wave-function layout (one row per sample) to
  /// cotangents on this network's parameters through the generated slots.
  Eigen::MatrixXd pullback(const MolecularConfiguration& config, const EquivariantFrame& frame,
                           const Eigen::VectorXd& params, const Eigen::MatrixXd& wf_cotangents) const;

 private:
  Eigen::Index charge_row(int charge) const;
  ad::Var mlp(ad::Tape& tape, ad::Var x, const std::string& prefix, const Eigen::VectorXd& params) const;
  void add_mlp(const std::string& prefix, Eigen::Index in, Eigen::Index hidden);

  GnnConfig config_;
  const WaveFunctionModel* model_;
  BesselBasis basis_;
  ParamLayout layout_;
  std::vector<const ParamSlot*> global_slots_;
  std::vector<const ParamSlot*> node_slots_;
  std::vector<Eigen::Index> head_biases_;
};

}  // namespace mgvmc
