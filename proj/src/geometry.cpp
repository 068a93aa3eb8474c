// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mgvmc/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "mgvmc/errors.hpp"

namespace mgvmc {

namespace {

using Eigen::Index;
using Eigen::Matrix3d;
using Eigen::Vector3d;

struct Pca {
  Vector3d values;  // descending
  Matrix3d vectors;
};

Pca principal_axes(const std::vector<Vector3d>& points) {
  Matrix3d cov = Matrix3d::Zero();
  for (const auto& p : points) cov += p * p.transpose();
  cov /= static_cast<double>(points.size());
  Eigen::SelfAdjointEigenSolver<Matrix3d> solver(cov);
  Pca out;
  for (int i = 0; i < 3; ++i) {
    out.values(i) = solver.eigenvalues()(2 - i);
    out.vectors.col(i) = solver.eigenvectors().col(2 - i);
  }
  return out;
}

bool same_eigenvalue(const Vector3d& values, int i, int j) {
  const double scale = std::max(values(0), 1.0);
  return std::abs(values(i) - values(j)) <= kDegeneracyTolerance * scale;
}

bool has_degeneracy(const Vector3d& values) {
  return same_eigenvalue(values, 0, 1) || same_eigenvalue(values, 1, 2) ||
         same_eigenvalue(values, 0, 2);
}

bool lexicographically_greater(const Vector3d& a, const Vector3d& b) {
  for (int k = 0; k < 3; ++k) {
    if (a(k) != b(k)) return a(k) > b(k);
  }
  return false;
}

// Rebuilds a degenerate eigenspace from the lab axes so the choice does not
// depend on what the eigensolver returned inside the subspace.
void canonicalize_subspace(Matrix3d& vectors, int first, int count) {
  if (count == 3) {
    vectors.setIdentity();
    return;
  }
  const Vector3d a = vectors.col(first);
  const Vector3d b = vectors.col(first + 1);
  // Lab axis with the largest projection onto the subspace, lowest index on ties.
  double best_norm = -1.0;
  Vector3d best_proj = Vector3d::Zero();
  for (int c = 0; c < 3; ++c) {
    const Vector3d proj = a * a(c) + b * b(c);
    const double n = proj.norm();
    if (n > best_norm * (1.0 + 1e-12)) {
      best_norm = n;
      best_proj = proj;
    }
  }
  const Vector3d first_axis = best_proj / best_norm;
  const Vector3d normal = a.cross(b);
  const Vector3d second_axis = canonical_sign(normal.cross(first_axis).normalized());
  vectors.col(first) = first_axis;
  vectors.col(first + 1) = second_axis;
}

}  // namespace

void validate(const MolecularConfiguration& config) {
  const Index m = config.n_nuclei();
  if (m < 1) throw ConfigError("configuration needs at least one nucleus");
  if (static_cast<Index>(config.charges.size()) != m) {
    throw ConfigError("got " + std::to_string(config.charges.size()) + " charges for " +
                      std::to_string(m) + " nuclei");
  }
  if (!config.positions.allFinite()) throw ConfigError("nuclear positions must be finite");
  for (int z : config.charges) {
    if (z < 1) throw ConfigError("nuclear charge must be >= 1, got " + std::to_string(z));
  }
  for (Index i = 0; i < m; ++i) {
    for (Index j = i + 1; j < m; ++j) {
      if ((config.positions.row(i) - config.positions.row(j)).norm() <= 1e-10) {
        throw ConfigError("nuclei " + std::to_string(i) + " and " + std::to_string(j) +
                          " coincide");
      }
    }
  }
  if (config.n_dn < 0 || config.n_up < config.n_dn) {
    throw ConfigError("spin counts must satisfy n_up >= n_dn >= 0");
  }
  if (config.n_up + config.n_dn < 1) throw ConfigError("configuration needs at least one electron");
}

MolecularConfiguration make_configuration(Eigen::Matrix<double, Eigen::Dynamic, 3> positions,
                                          std::vector<int> charges, int n_up, int n_dn) {
  MolecularConfiguration config{std::move(positions), std::move(charges), n_up, n_dn};
  validate(config);
  return config;
}

std::vector<Index> canonical_order(const MolecularConfiguration& config) {
  std::vector<Index> order(static_cast<size_t>(config.n_nuclei()));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    if (config.charges[a] != config.charges[b]) return config.charges[a] < config.charges[b];
    for (int k = 0; k < 3; ++k) {
      if (config.positions(a, k) != config.positions(b, k)) {
        return config.positions(a, k) < config.positions(b, k);
      }
    }
    return false;
  });
  return order;
}

Vector3d geometric_center(const MolecularConfiguration& config) {
  Vector3d sum = Vector3d::Zero();
  for (Index m : canonical_order(config)) sum += config.positions.row(m).transpose();
  return sum / static_cast<double>(config.n_nuclei());
}

Vector3d equivariant_vector(const MolecularConfiguration& config) {
  const auto order = canonical_order(config);
  const Vector3d center = geometric_center(config);
  Vector3d v = Vector3d::Zero();
  for (Index m : order) {
    double spread = 0.0;
    for (Index n : order) spread += (config.positions.row(m) - config.positions.row(n)).squaredNorm();
    v += spread * config.charges[m] * (config.positions.row(m).transpose() - center);
  }
  return v / static_cast<double>(config.n_nuclei());
}

Vector3d canonical_sign(const Vector3d& v) {
  int best = 0;
  for (int k = 1; k < 3; ++k) {
    if (std::abs(v(k)) > std::abs(v(best)) * (1.0 + 1e-12)) best = k;
  }
  return v(best) < 0.0 ? Vector3d(-v) : v;
}

EquivariantFrame build_frame(const MolecularConfiguration& config) {
  EquivariantFrame frame;
  frame.center = geometric_center(config);
  if (config.n_nuclei() == 1) {
    frame.fallbacks.single_atom = true;
    return frame;
  }

  const auto order = canonical_order(config);
  std::vector<Vector3d> centered;
  centered.reserve(order.size());
  for (Index m : order) centered.emplace_back(config.positions.row(m).transpose() - frame.center);

  Pca pca = principal_axes(centered);
  if (has_degeneracy(pca.values)) {
    frame.fallbacks.degenerate_pca = true;
    // Shortest edge; equal-length edges are ordered by their canonical direction.
    double shortest = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < centered.size(); ++i) {
      for (size_t j = i + 1; j < centered.size(); ++j) {
        shortest = std::min(shortest, (centered[i] - centered[j]).norm());
      }
    }
    Vector3d edge = Vector3d::Zero();
    bool have_edge = false;
    for (size_t i = 0; i < centered.size(); ++i) {
      for (size_t j = i + 1; j < centered.size(); ++j) {
        const Vector3d d = centered[i] - centered[j];
        if (d.norm() > shortest * (1.0 + 1e-10)) continue;
        const Vector3d u = canonical_sign(d.normalized());
        if (!have_edge || lexicographically_greater(u, edge)) {
          edge = u;
          have_edge = true;
        }
      }
    }
    std::vector<Vector3d> stretched;
    stretched.reserve(centered.size());
    for (const auto& p : centered) stretched.push_back(p + kEdgeStretch * p.dot(edge) * edge);
    pca = principal_axes(stretched);

    if (has_degeneracy(pca.values)) {
      frame.fallbacks.residual_degeneracy = true;
      if (same_eigenvalue(pca.values, 0, 1) && same_eigenvalue(pca.values, 1, 2)) {
        canonicalize_subspace(pca.vectors, 0, 3);
      } else if (same_eigenvalue(pca.values, 0, 1)) {
        canonicalize_subspace(pca.vectors, 0, 2);
      } else {
        canonicalize_subspace(pca.vectors, 1, 2);
      }
    }
  }

  Matrix3d axes = pca.vectors;
  const Vector3d v = equivariant_vector(config);
  const double v_norm = v.norm();
  std::array<bool, 3> resolved{false, false, false};
  if (v_norm >= kSignTolerance) {
    for (int i = 0; i < 3; ++i) {
      const double proj = v.dot(axes.col(i));
      if (std::abs(proj) > kSignTolerance * v_norm) {
        resolved[i] = true;
        if (proj < 0.0) axes.col(i) *= -1.0;
      }
    }
  }
  const int n_resolved = static_cast<int>(std::count(resolved.begin(), resolved.end(), true));
  if (n_resolved == 2) {
    // The remaining axis is orthogonal to v (planar systems); complete a
    // right-handed triple so proper rotations stay covariant.
    frame.fallbacks.cross_product_axis = true;
    const int i = static_cast<int>(std::find(resolved.begin(), resolved.end(), false) - resolved.begin());
    axes.col(i) = axes.col((i + 1) % 3).cross(axes.col((i + 2) % 3));
  } else if (n_resolved < 3) {
    frame.fallbacks.canonical_signs = true;
    for (int i = 0; i < 3; ++i) {
      if (!resolved[i]) axes.col(i) = canonical_sign(axes.col(i));
    }
  }
  frame.axes = axes;
  return frame;
}

MolecularConfiguration transformed(const MolecularConfiguration& config, const Eigen::Matrix3d& U,
                                   const Eigen::RowVector3d& t) {
  MolecularConfiguration out = config;
  out.positions = (config.positions * U).rowwise() + t;
  return out;
}

MolecularConfiguration permuted(const MolecularConfiguration& config,
                                const std::vector<Eigen::Index>& perm) {
  MolecularConfiguration out = config;
  for (size_t k = 0; k < perm.size(); ++k) {
    out.positions.row(static_cast<Index>(k)) = config.positions.row(perm[k]);
    out.charges[k] = config.charges[static_cast<size_t>(perm[k])];
  }
  return out;
}

}  // namespace mgvmc
