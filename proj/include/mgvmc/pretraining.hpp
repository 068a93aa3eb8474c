// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mgvmc/ansatz.hpp"
#include "mgvmc/geometry.hpp"

namespace mgvmc {

/// Normalized 1s Slater function norm * exp(-exponent * |r - R_center|).
struct SlaterFunction {
  Eigen::Index center = 0;
  double exponent = 1.0;
  double normalization = 1.0;
};

/// Occupied reference orbitals of one geometry: coefficient columns over the
/// basis, ascending orbital index = ascending determinant column.
struct ReferenceOrbitals {
  MolecularConfiguration config;
  std::vector<SlaterFunction> basis;
  Eigen::MatrixXd up;  // n_basis x n_up
  Eigen::MatrixXd dn;  // n_basis x n_dn

  /// Orbital values at one spin's electrons: (B * n) x n, rows = electrons.
  Eigen::MatrixXd evaluate(const ElectronBatch& x, int spin) const;
};

class ReferenceOrbitalProvider {
 public:
  virtual ~ReferenceOrbitalProvider() = default;
  /// Throws ConfigError when the geometry is not covered.
  virtual ReferenceOrbitals orbitals(const MolecularConfiguration& config) const = 0;
};

/// Slater-rule 1s exponents and an extended Hueckel Hamiltonian
/// (H_mm = -zeta^2 / 2, H_mn = K S_mn (H_mm + H_nn) / 2) solved in the
/// non-orthogonal basis. Charges 1 and 2 only.
class LcaoProvider : public ReferenceOrbitalProvider {
 public:
  explicit LcaoProvider(double hueckel_k = 1.75) : k_(hueckel_k) {}
  ReferenceOrbitals orbitals(const MolecularConfiguration& config) const override;
  static double slater_exponent(int charge);

 private:
  double k_;
};

/// Coefficients read from a JSON document (see README for the schema).
class FileProvider : public ReferenceOrbitalProvider {
 public:
  explicit FileProvider(std::vector<ReferenceOrbitals> sets) : sets_(std::move(sets)) {}
  static FileProvider load(const std::string& path);
  void save(const std::string& path) const;
  ReferenceOrbitals orbitals(const MolecularConfiguration& config) const override;

 private:
  std::vector<ReferenceOrbitals> sets_;
};

std::unique_ptr<ReferenceOrbitalProvider> make_provider(const std::string& kind, const std::string& path = {});

/// <a|b> for two normalized 1s Slater functions.
double slater_overlap(double zeta_a, double zeta_b, double distance);

struct OrbitalTargets {
  std::vector<Eigen::MatrixXd> up;  // one per determinant
  std::vector<Eigen::MatrixXd> dn;
};

/// Determinant k is matched to reference geometry references[k % size].
OrbitalTargets target_orbitals(const ReferenceOrbitalProvider& provider, const ElectronBatch& x,
                               const std::vector<MolecularConfiguration>& references, int n_determinants);

/// Sum over determinants and spins of the mean squared entry difference.
double pretrain_loss(const std::vector<Eigen::MatrixXd>& model_up, const std::vector<Eigen::MatrixXd>& model_dn,
                     const OrbitalTargets& targets);

/// Model orbital matrices of a bound ansatz, same layout as the targets.
OrbitalTargets model_orbitals(const Ansatz& ansatz, const Eigen::VectorXd& theta,
                              const MolecularConfiguration& config, const ElectronBatch& x);

/// Loss and its gradient over the full joint parameter vector.
double pretrain_loss_and_gradient(const Ansatz& ansatz, const Eigen::VectorXd& theta,
                                  const MolecularConfiguration& config, const ElectronBatch& x,
                                  const OrbitalTargets& targets, Eigen::VectorXd* gradient);

struct LambConfig {
  double learning_rate = 0.003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-6;
  double weight_decay = 0.0;
};

struct LambState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t step = 0;
};

/// One Lamb update restricted to `groups` (each group is one layer with its own
/// trust ratio |theta| / |update|, 1 when either norm is zero).
void lamb_step(Eigen::VectorXd& theta, const Eigen::VectorXd& gradient, LambState& state,
               const std::vector<std::vector<Eigen::Index>>& groups, const LambConfig& config);

/// Layers trained during pretraining: each shared wave-function slot and each
/// final head bias of the graph network.
std::vector<std::vector<Eigen::Index>> pretrain_groups(const Ansatz& ansatz);

struct PretrainBatch {
  MolecularConfiguration config;
  ElectronBatch x;
  std::vector<MolecularConfiguration> references;
};

/// Averages loss and gradient over the batches, applies one Lamb step and
/// returns the loss before the step.
double pretrain_step(const Ansatz& ansatz, const ReferenceOrbitalProvider& provider, Eigen::VectorXd& theta,
                     LambState& state, const std::vector<PretrainBatch>& batches, const LambConfig& config);

}  // namespace mgvmc
