// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <vector>

namespace mgvmc {

/// Nuclear positions (bohr, one row per nucleus), charges and spin counts.
/// Electrons 0..n_up-1 are spin-up, the remaining n_dn are spin-down.
struct MolecularConfiguration {
  Eigen::Matrix<double, Eigen::Dynamic, 3> positions;
  std::vector<int> charges;
  int n_up = 0;
  int n_dn = 0;

  Eigen::Index n_nuclei() const { return positions.rows(); }
  int n_electrons() const { return n_up + n_dn; }
};

/// Builds a configuration and checks every invariant; throws ConfigError.
MolecularConfiguration make_configuration(Eigen::Matrix<double, Eigen::Dynamic, 3> positions,
                                          std::vector<int> charges, int n_up, int n_dn);
void validate(const MolecularConfiguration& config);

/// Nucleus indices sorted by (charge, x, y, z). Every reduction over nuclei in
/// this library runs in this order so results do not depend on input order.
std::vector<Eigen::Index> canonical_order(const MolecularConfiguration& config);

/// Which degenerate-case rules were needed to build a frame.
struct FrameFallbacks {
  bool single_atom = false;
  bool degenerate_pca = false;       // eigenvalue tie, stretched-edge PCA used
  bool residual_degeneracy = false;  // tie survived the stretch, subspace canonicalized
  bool canonical_signs = false;      // some axis sign chosen by the canonical rule
  bool cross_product_axis = false;   // one axis orthogonal to v, completed by a cross product

  bool any() const {
    return single_atom || degenerate_pca || residual_degeneracy || canonical_signs ||
           cross_product_axis;
  }
};

/// Orthonormal axes (columns e_1, e_2, e_3) and the geometric center.
/// Transforming every position x -> x U + t transforms the axes into U^T E.
struct EquivariantFrame {
  Eigen::Matrix3d axes = Eigen::Matrix3d::Identity();
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  FrameFallbacks fallbacks;

  /// Row vector x (bohr) expressed in frame coordinates relative to the center.
  Eigen::RowVector3d to_frame(const Eigen::RowVector3d& x) const {
    return (x - center.transpose()) * axes;
  }
};

inline constexpr double kDegeneracyTolerance = 1e-6;
inline constexpr double kSignTolerance = 1e-8;
inline constexpr double kEdgeStretch = 0.5;

Eigen::Vector3d geometric_center(const MolecularConfiguration& config);

/// v = (1/M) sum_m (sum_n |R_m - R_n|^2) Z_m R'_m with R' centered positions.
Eigen::Vector3d equivariant_vector(const MolecularConfiguration& config);

EquivariantFrame build_frame(const MolecularConfiguration& config);

/// Flips v so that its largest-magnitude component is positive; ties go to the
/// lowest coordinate index.
Eigen::Vector3d canonical_sign(const Eigen::Vector3d& v);

/// Applies x -> x U + t to every nucleus.
MolecularConfiguration transformed(const MolecularConfiguration& config, const Eigen::Matrix3d& U,
                                   const Eigen::RowVector3d& t);

/// Reorders nuclei: result nucleus k is input nucleus perm[k].
MolecularConfiguration permuted(const MolecularConfiguration& config,
                                const std::vector<Eigen::Index>& perm);

inline constexpr double kBohrPerAngstrom = 1.8897261254578281;

}  // namespace mgvmc
