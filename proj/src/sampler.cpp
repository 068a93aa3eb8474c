// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mgvmc/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "mgvmc/errors.hpp"

namespace mgvmc {

using Eigen::Index;

WalkerState init_walkers(const MolecularConfiguration& config, Index n_walkers, std::uint64_t seed,
                         double step_size, const WaveFunction& wf) {
  if (n_walkers < 1) throw ConfigError("need at least one walker");
  std::vector<Index> sites;
  for (Index m : canonical_order(config)) {
    for (int z = 0; z < config.charges[m]; ++z) sites.push_back(m);
  }
  WalkerState state;
  state.rng.seed(seed);
  state.step_size = step_size;
  const int n = config.n_electrons();
  state.positions.resize(n_walkers, 3 * n);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (Index b = 0; b < n_walkers; ++b) {
    for (int i = 0; i < n; ++i) {
      const Index m = sites[static_cast<size_t>(i) % sites.size()];
      for (int c = 0; c < 3; ++c) state.positions(b, 3 * i + c) = config.positions(m, c) + n01(state.rng);
    }
  }
  refresh(state, wf);
  return state;
}

void refresh(WalkerState& state, const WaveFunction& wf) {
  Amplitudes a = wf.evaluate(state.positions);
  state.log_abs = std::move(a.log_abs);
  state.sign = std::move(a.sign);
}

void mh_step(WalkerState& state, const WaveFunction& wf) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  ElectronBatch proposal = state.positions;
  for (Index b = 0; b < proposal.rows(); ++b) {
    for (Index q = 0; q < proposal.cols(); ++q) proposal(b, q) += state.step_size * n01(state.rng);
  }
  const Amplitudes a = wf.evaluate(proposal);
  for (Index b = 0; b < proposal.rows(); ++b) {
    const double log_u = std::log(u01(state.rng));
    ++state.proposed;
    if (a.sign[b] != 0 && log_u < 2.0 * (a.log_abs(b) - state.log_abs(b))) {
      state.positions.row(b) = proposal.row(b);
      state.log_abs(b) = a.log_abs(b);
      state.sign[b] = a.sign[b];
      ++state.accepted;
    }
  }
}

void run_chain(WalkerState& state, const WaveFunction& wf, int n_steps) {
  if (n_steps <= 0) return;
  state.reset_acceptance();
  for (int s = 0; s < n_steps; ++s) mh_step(state, wf);
}

void adapt_step_size(WalkerState& state, double target) {
  if (state.proposed == 0) return;
  state.step_size = std::clamp(state.step_size * std::exp(state.acceptance() - target), kMinStepSize, kMaxStepSize);
}

MolecularConfiguration GeometryTemplate::realize(const Eigen::VectorXd& param) const {
  if (param.size() != n_params()) throw ConfigError("template '" + name + "' takes one parameter");
  const double p = param(0);
  if (!(p > 0.0)) throw ConfigError("template '" + name + "' parameter must be positive, got " + std::to_string(p));
  const Index m = static_cast<Index>(charges.size());
  Eigen::Matrix<double, Eigen::Dynamic, 3> pos = Eigen::Matrix<double, Eigen::Dynamic, 3>::Zero(m, 3);
  for (Index k = 0; k < m; ++k) pos(k, 2) = p * (static_cast<double>(k) - 0.5 * static_cast<double>(m - 1));
  return make_configuration(std::move(pos), charges, n_up, n_dn);
}

GeometryTemplate make_template(const std::string& name, std::vector<int> charges, int n_up, int n_dn) {
  if (name == "diatomic") {
    if (charges.size() != 2) throw ConfigError("diatomic template needs exactly two charges");
  } else if (name == "hydrogen_chain") {
    if (charges.size() < 2) throw ConfigError("hydrogen_chain template needs at least two atoms");
    for (int z : charges) {
      if (z != 1) throw ConfigError("hydrogen_chain template only takes charge 1");
    }
  } else {
    throw ConfigError("unknown geometry template '" + name + "'");
  }
  GeometryTemplate t{name, std::move(charges), n_up, n_dn};
  t.realize(Eigen::VectorXd::Ones(1));
  return t;
}

std::vector<GeometryWalker> make_geometry_walkers(double lower, double upper, int n_bins, std::uint64_t seed) {
  if (n_bins < 1 || !(upper >= lower)) throw ConfigError("invalid geometry bins");
  std::vector<GeometryWalker> out;
  const double width = (upper - lower) / n_bins;
  for (int k = 0; k < n_bins; ++k) {
    GeometryWalker w;
    w.lower = Eigen::VectorXd::Constant(1, lower + k * width);
    w.upper = Eigen::VectorXd::Constant(1, lower + (k + 1) * width);
    w.current = 0.5 * (w.lower + w.upper);
    w.rng.seed(seed + 7919 * static_cast<std::uint64_t>(k));
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<MolecularConfiguration> step_geometry_walkers(std::vector<GeometryWalker>& walkers,
                                                          const GeometryTemplate& tmpl, double scale) {
  std::vector<MolecularConfiguration> out;
  std::uniform_real_distribution<double> u11(-1.0, 1.0);
  for (auto& w : walkers) {
    for (Index c = 0; c < w.current.size(); ++c) {
      const double lo = w.lower(c), hi = w.upper(c);
      const double jitter = u11(w.rng) * scale * (hi - lo) / 10.0;
      double x = w.current(c) + jitter;
      for (int guard = 0; guard < 64 && (x < lo || x > hi); ++guard) x = x > hi ? 2 * hi - x : 2 * lo - x;
      w.current(c) = std::clamp(x, lo, hi);
    }
    out.push_back(tmpl.realize(w.current));
  }
  return out;
}

}  // namespace mgvmc
