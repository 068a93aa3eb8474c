// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mgvmc/hamiltonian.hpp"

#include <cmath>
#include <string>

#include "mgvmc/errors.hpp"

namespace mgvmc {

using Eigen::Index;

void RunningStatistics::add(double x) {
  ++n_;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta * (x - mean_);
}

void RunningStatistics::add(const Eigen::VectorXd& xs) {
  for (Index i = 0; i < xs.size(); ++i) add(xs(i));
}

EnergyStatistics RunningStatistics::stats() const {
  EnergyStatistics s;
  s.n_samples = n_;
  s.mean = mean_;
  s.variance = n_ > 1 ? std::max(0.0, m2_ / static_cast<double>(n_ - 1)) : 0.0;
  s.std_error = n_ > 0 ? std::sqrt(s.variance / static_cast<double>(n_)) : 0.0;
  return s;
}

EnergyStatistics statistics(const Eigen::VectorXd& values) {
  RunningStatistics acc;
  acc.add(values);
  return acc.stats();
}

double potential_energy(const Eigen::Ref<const Eigen::RowVectorXd>& r, const MolecularConfiguration& config) {
  const Index n = r.size() / 3;
  const Index m_count = config.n_nuclei();
  auto guard = [](double d, const std::string& what) {
    if (d <= kSingularityGuard) throw SingularityError(what + " coincide (distance " + std::to_string(d) + ")");
    return d;
  };
  double v = 0.0;
  for (Index i = 0; i < n; ++i) {
    const Eigen::RowVector3d ri = r.segment<3>(3 * i);
    for (Index j = i + 1; j < n; ++j) {
      v += 1.0 / guard((ri - r.segment<3>(3 * j)).norm(),
                       "electrons " + std::to_string(i) + " and " + std::to_string(j));
    }
    for (Index m = 0; m < m_count; ++m) {
      v -= config.charges[m] / guard((ri - config.positions.row(m)).norm(),
                                     "electron " + std::to_string(i) + " and nucleus " + std::to_string(m));
    }
  }
  for (Index m = 0; m < m_count; ++m) {
    for (Index k = m + 1; k < m_count; ++k) {
      v += config.charges[m] * config.charges[k] /
           guard((config.positions.row(m) - config.positions.row(k)).norm(),
                 "nuclei " + std::to_string(m) + " and " + std::to_string(k));
    }
  }
  return v;
}

Eigen::VectorXd local_energies(const Derivatives& d, const ElectronBatch& x, const MolecularConfiguration& config) {
  Eigen::VectorXd out(x.rows());
  for (Index b = 0; b < x.rows(); ++b) {
    if (d.sign[b] == 0) throw NodeError("walker " + std::to_string(b) + " sits on a node of the wave function");
    out(b) = -0.5 * (d.laplacian(b) + d.grad.row(b).squaredNorm()) + potential_energy(x.row(b), config);
  }
  return out;
}

Eigen::VectorXd local_energies(const WaveFunction& wf, const ElectronBatch& x, const MolecularConfiguration& config) {
  return local_energies(wf.derivatives(x), x, config);
}

Eigen::VectorXd clip_local_energies(const Eigen::VectorXd& values, double window) {
  if (values.size() == 0) return values;
  const double mu = values.mean();
  const double mad = (values.array() - mu).abs().mean();
  return values.cwiseMax(mu - window * mad).cwiseMin(mu + window * mad);
}

}  // namespace mgvmc
