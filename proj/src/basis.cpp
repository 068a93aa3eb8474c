// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mgvmc/basis.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mgvmc/errors.hpp"

namespace mgvmc {

namespace {

double jl(int l, double x) { return std::sph_bessel(static_cast<unsigned>(l), x); }

double bisect(int l, double lo, double hi) {
  double flo = jl(l, lo);
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = jl(l, mid);
    if (fm == 0.0) return mid;
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double legendre(int l, double x) { return std::legendre(static_cast<unsigned>(l), x); }

}  // namespace

std::vector<double> spherical_bessel_roots(int l, int count) {
  if (l < 0 || count < 0) throw ConfigError("spherical Bessel roots need l >= 0 and count >= 0");
  // Roots of j_l interlace with those of j_{l-1}; start from j_0 (n pi) and
  // bracket each root between consecutive roots of the previous order.
  std::vector<double> prev(static_cast<size_t>(count + l));
  for (int n = 0; n < count + l; ++n) prev[n] = (n + 1) * std::numbers::pi;
  for (int order = 1; order <= l; ++order) {
    std::vector<double> cur(prev.size() - 1);
    for (size_t n = 0; n + 1 < prev.size(); ++n) cur[n] = bisect(order, prev[n], prev[n + 1]);
    prev = std::move(cur);
  }
  prev.resize(static_cast<size_t>(count));
  return prev;
}

BesselBasis::BesselBasis(int n_sbf, int n_rbf, double length_scale)
    : n_sbf_(n_sbf), n_rbf_(n_rbf), c_(length_scale) {
  if (n_sbf < 1 || n_rbf < 1) throw ConfigError("basis sizes must be positive");
  if (!(length_scale > 0.0)) throw ConfigError("basis length scale must be positive");
  for (int l = 0; l < n_sbf; ++l) {
    roots_.push_back(spherical_bessel_roots(l, n_rbf));
    std::vector<double> norm;
    for (double z : roots_.back()) {
      const double j = jl(l + 1, z);
      norm.push_back(std::sqrt(2.0 / (c_ * c_ * c_ * j * j)));
    }
    norm_.push_back(std::move(norm));
  }
}

double BesselBasis::sbf(int l, int n, double d, double cos_alpha) const {
  const double z = roots_.at(l).at(n - 1);
  const double y = std::sqrt((2 * l + 1) / (4.0 * std::numbers::pi)) * legendre(l, cos_alpha);
  return norm_[l][n - 1] * jl(l, z * d / c_) * y;
}

Eigen::RowVectorXd BesselBasis::positional_encoding(const Eigen::RowVector3d& x) const {
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(n_sbf_ * n_rbf_);
  const double d = x.norm();
  if (d == 0.0) {
    const double y0 = std::sqrt(1.0 / (4.0 * std::numbers::pi));
    for (int n = 1; n <= n_rbf_; ++n) out(n - 1) = 3.0 * norm_[0][n - 1] * y0;
    return out;
  }
  for (int i = 0; i < 3; ++i) {
    const double cos_alpha = std::clamp(x(i) / d, -1.0, 1.0);
    for (int l = 0; l < n_sbf_; ++l) {
      for (int n = 1; n <= n_rbf_; ++n) out(l * n_rbf_ + n - 1) += sbf(l, n, d, cos_alpha);
    }
  }
  return out;
}

Eigen::RowVectorXd BesselBasis::radial(double d) const {
  Eigen::RowVectorXd out(n_rbf_);
  const double pref = std::sqrt(2.0 / c_);
  for (int n = 1; n <= n_rbf_; ++n) {
    const double k = n * std::numbers::pi / c_;
    out(n - 1) = d == 0.0 ? pref * k : pref * std::sin(k * d) / d;
  }
  return out;
}

}  // namespace mgvmc
