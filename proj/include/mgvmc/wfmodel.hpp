// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <random>
#include <vector>

#include "mgvmc/autodiff.hpp"
#include "mgvmc/geometry.hpp"
#include "mgvmc/params.hpp"

namespace mgvmc {

struct WfConfig {
  int n_layers = 4;
  int single_width = 256;
  int double_width = 32;
  int n_determinants = 16;
  int embedding_dim = 64;
  double orbital_bias_init = 1.0;
};

/// Electron coordinates in bohr, one walker per row: electron i occupies
/// columns 3i..3i+2, spin-up electrons first.
using ElectronBatch = Eigen::MatrixXd;

/// Value, tangent (one block per coordinate direction) and Laplacian of a
/// matrix-valued input, in the layout expected by ad::Tape::walker_input.
struct InputJet {
  Eigen::MatrixXd value;
  Eigen::MatrixXd tangent;
  Eigen::MatrixXd laplacian;
};

/// Rows (walker, electron, nucleus in canonical order): [(r_i - R_m) E, |r_i - R_m|].
InputJet electron_nucleus_features(const ElectronBatch& x, const MolecularConfiguration& config,
                                   const EquivariantFrame& frame, bool jets);
/// Rows (walker, electron i, electron j): [(r_i - r_j) E, |r_i - r_j|].
InputJet electron_electron_features(const ElectronBatch& x, int n_electrons,
                                    const EquivariantFrame& frame, bool jets);
/// Rows (walker, electron in [begin, end)), one column per nucleus in canonical order.
InputJet electron_nucleus_distances(const ElectronBatch& x, const MolecularConfiguration& config,
                                    int begin, int end, bool jets);

struct Amplitudes {
  Eigen::VectorXd log_abs;
  std::vector<int> sign;
};

struct Derivatives {
  Eigen::VectorXd log_abs;
  std::vector<int> sign;
  Eigen::MatrixXd grad;       // B x 3N, d log|psi| / d r
  Eigen::VectorXd laplacian;  // sum of second derivatives of log|psi|
};

/// Neural wave function for a fixed electron count and nucleus count. The
/// parameter vector follows `layout()`; slots tagged GnnGlobal / GnnNode are
/// normally filled in by the graph network before evaluation.
class WaveFunctionModel {
 public:
  WaveFunctionModel(WfConfig config, int n_up, int n_dn, int n_nuclei);

  const WfConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  int n_up() const { return n_up_; }
  int n_dn() const { return n_dn_; }
  int n_electrons() const { return n_up_ + n_dn_; }
  int n_nuclei() const { return n_nuclei_; }

  Eigen::VectorXd initial_params(std::mt19937_64& rng) const;
  /// Initialization value of a graph-generated slot, identical for every geometry.
  Eigen::MatrixXd initial_value(const ParamSlot& slot) const;

  struct Orbitals {
    std::vector<ad::Var> up;  // per determinant, (B * n_up) x n_up, rows electrons
    std::vector<ad::Var> dn;  // empty when n_dn == 0
    ad::Var weights;
  };
  Orbitals build_orbitals(ad::Tape& tape, const ElectronBatch& x, const MolecularConfiguration& config,
                          const EquivariantFrame& frame, const Eigen::VectorXd& params) const;
  ad::Tape::SlaterOutput build(ad::Tape& tape, const ElectronBatch& x,
                               const MolecularConfiguration& config, const EquivariantFrame& frame,
                               const Eigen::VectorXd& params) const;

  Amplitudes evaluate(const ElectronBatch& x, const MolecularConfiguration& config,
                      const EquivariantFrame& frame, const Eigen::VectorXd& params) const;
  Derivatives derivatives(const ElectronBatch& x, const MolecularConfiguration& config,
                          const EquivariantFrame& frame, const Eigen::VectorXd& params) const;
  /// Per-walker gradient of log|psi| with respect to every slot of `layout()`.
  Eigen::MatrixXd param_gradients(const ElectronBatch& x, const MolecularConfiguration& config,
                                  const EquivariantFrame& frame, const Eigen::VectorXd& params,
                                  Amplitudes* values = nullptr) const;

 private:
  void check(const ElectronBatch& x, const MolecularConfiguration& config) const;
  ad::Var param(ad::Tape& tape, const Eigen::VectorXd& params, const std::string& name) const;

  WfConfig config_;
  int n_up_;
  int n_dn_;
  int n_nuclei_;
  ParamLayout layout_;
};

/// Anything that gives log|psi| and its electron-coordinate derivatives.
class WaveFunction {
 public:
  virtual ~WaveFunction() = default;
  virtual int n_electrons() const = 0;
  virtual Amplitudes evaluate(const ElectronBatch& x) const = 0;
  virtual Derivatives derivatives(const ElectronBatch& x) const = 0;
};

/// A model bound to one geometry and one full parameter vector.
class NeuralWaveFunction : public WaveFunction {
 public:
  NeuralWaveFunction(const WaveFunctionModel& model, MolecularConfiguration config,
                     Eigen::VectorXd params);

  int n_electrons() const override { return model_->n_electrons(); }
  Amplitudes evaluate(const ElectronBatch& x) const override;
  Derivatives derivatives(const ElectronBatch& x) const override;

  const MolecularConfiguration& configuration() const { return config_; }
  const EquivariantFrame& frame() const { return frame_; }
  const Eigen::VectorXd& params() const { return params_; }

 private:
  const WaveFunctionModel* model_;
  MolecularConfiguration config_;
  EquivariantFrame frame_;
  Eigen::VectorXd params_;
};

/// log|psi| = -zeta * sum_i |r_i - center|, the exact hydrogen-like ground state
/// for a single electron and zeta = Z.
class HydrogenicStub : public WaveFunction {
 public:
  HydrogenicStub(Eigen::RowVector3d center, double zeta, int n_electrons = 1);

  int n_electrons() const override { return n_electrons_; }
  Amplitudes evaluate(const ElectronBatch& x) const override;
  Derivatives derivatives(const ElectronBatch& x) const override;

 private:
  Eigen::RowVector3d center_;
  double zeta_;
  int n_electrons_;
};

}  // namespace mgvmc
