// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <vector>

namespace mgvmc {

/// First `count` positive roots of the spherical Bessel function j_l.
std::vector<double> spherical_bessel_roots(int l, int count);

/// Precomputed spherical Fourier-Bessel and Bessel radial bases with length scale c.
class BesselBasis {
 public:
  BesselBasis(int n_sbf, int n_rbf, double length_scale);

  int n_sbf() const { return n_sbf_; }
  int n_rbf() const { return n_rbf_; }
  double length_scale() const { return c_; }

  /// sqrt(2 / (c^3 j_{l+1}(z_ln)^2)) j_l(z_ln d / c) Y_l^0(alpha), n counted from 1.
  double sbf(int l, int n, double d, double cos_alpha) const;

  /// Sum over the three frame axes of every sbf(l, n), laid out at l * n_rbf + (n - 1).
  /// x is already expressed in frame coordinates. At x = 0 the d -> 0 limit is used.
  Eigen::RowVectorXd positional_encoding(const Eigen::RowVector3d& x) const;

  /// sqrt(2 / c) sin(n pi d / c) / d for n = 1..n_rbf, continuous at d = 0.
  Eigen::RowVectorXd radial(double d) const;

 private:
  int n_sbf_;
  int n_rbf_;
  double c_;
  std::vector<std::vector<double>> roots_;  // [l][n-1]
  std::vector<std::vector<double>> norm_;   // [l][n-1]
};

}  // namespace mgvmc
