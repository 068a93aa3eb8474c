// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mgvmc/checks.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "mgvmc/ansatz.hpp"
#include "mgvmc/hamiltonian.hpp"
#include "mgvmc/optimizer.hpp"
#include "mgvmc/runner.hpp"
#include "mgvmc/sampler.hpp"

namespace mgvmc {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

class Signless : public WaveFunction {
 public:
  explicit Signless(const WaveFunction& inner) : inner_(inner) {}
  int n_electrons() const override { return inner_.n_electrons(); }
  Amplitudes evaluate(const ElectronBatch& x) const override {
    Amplitudes a = inner_.evaluate(x);
    std::fill(a.sign.begin(), a.sign.end(), 1);
    return a;
  }
  Derivatives derivatives(const ElectronBatch& x) const override {
    Derivatives d = inner_.derivatives(x);
    std::fill(d.sign.begin(), d.sign.end(), 1);
    return d;
  }

 private:
  const WaveFunction& inner_;
};

CheckResult result(std::string name, double measured, double tolerance, std::string detail = {}) {
  return {std::move(name), measured <= tolerance, measured, tolerance, std::move(detail)};
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

ElectronBatch random_electrons(const MolecularConfiguration& config, Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  const Eigen::RowVector3d c = geometric_center(config).transpose();
  ElectronBatch x(n, 3 * config.n_electrons());
  for (Index s = 0; s < n; ++s) {
    for (int i = 0; i < config.n_electrons(); ++i) {
      for (int k = 0; k < 3; ++k) x(s, 3 * i + k) = c(k) + 1.5 * n01(rng);
    }
  }
  return x;
}

Eigen::Matrix3d random_orthogonal(std::mt19937_64& rng, bool proper) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::Matrix3d a;
  for (Index i = 0; i < 9; ++i) a(i) = n01(rng);
  Eigen::Matrix3d q = Eigen::HouseholderQR<Eigen::Matrix3d>(a).householderQ();
  if (proper && q.determinant() < 0) q.col(0) *= -1.0;
  return q;
}

CheckResult antisymmetry(const Ansatz& ansatz, const VectorXd& theta, const MolecularConfiguration& config,
                         int cases, bool corrupt, std::mt19937_64& rng) {
  const auto bound = ansatz.bind(theta, config);
  const Signless signless(bound);
  const WaveFunction& wf = corrupt ? static_cast<const WaveFunction&>(signless) : bound;
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < config.n_up; ++i)
    for (int j = i + 1; j < config.n_up; ++j) pairs.emplace_back(i, j);
  for (int i = config.n_up; i < config.n_electrons(); ++i)
    for (int j = i + 1; j < config.n_electrons(); ++j) pairs.emplace_back(i, j);
  if (pairs.empty()) return result("antisymmetry", 0.0, 1e-12, "no same-spin pair");
  double worst = 0.0;
  std::uniform_int_distribution<size_t> pick(0, pairs.size() - 1);
  for (int c = 0; c < cases; ++c) {
    const ElectronBatch x = random_electrons(config, 1, rng);
    const auto [i, j] = pairs[pick(rng)];
    ElectronBatch y = x;
    y.middleCols(3 * i, 3) = x.middleCols(3 * j, 3);
    y.middleCols(3 * j, 3) = x.middleCols(3 * i, 3);
    const Amplitudes a = wf.evaluate(x), b = wf.evaluate(y);
    worst = std::max(worst, b.sign[0] == -a.sign[0] ? rel(b.log_abs(0), a.log_abs(0)) : kInf);
  }
  return result("antisymmetry", worst, 1e-12, "same-spin transpositions");
}

CheckResult equivariance(const Ansatz& ansatz, const VectorXd& theta, const MolecularConfiguration& config,
                         int cases, std::mt19937_64& rng) {
  const auto fb = build_frame(config).fallbacks;
  const bool rotate = !fb.any() || (fb.cross_product_axis && !fb.single_atom && !fb.degenerate_pca &&
                                    !fb.residual_degeneracy && !fb.canonical_signs);
  const bool improper = !fb.any();
  const std::string group = improper ? "O(3) + translations" : rotate ? "SO(3) + translations" : "translations";
  const auto base = ansatz.bind(theta, config);
  std::normal_distribution<double> n01(0.0, 1.0);
  double worst = 0.0;
  for (int c = 0; c < cases; ++c) {
    const ElectronBatch x = random_electrons(config, 2, rng);
    const Eigen::Matrix3d u = rotate ? random_orthogonal(rng, !improper) : Eigen::Matrix3d::Identity();
    const Eigen::RowVector3d t(2 * n01(rng), 2 * n01(rng), 2 * n01(rng));
    const auto moved = transformed(config, u, t);
    ElectronBatch y = x;
    for (int i = 0; i < config.n_electrons(); ++i) y.middleCols(3 * i, 3) = (x.middleCols(3 * i, 3) * u).rowwise() + t;
    const auto other = ansatz.bind(theta, moved);
    const Amplitudes a = base.evaluate(x), b = other.evaluate(y);
    const VectorXd ea = local_energies(base, x, config), eb = local_energies(other, y, moved);
    for (Index s = 0; s < x.rows(); ++s) {
      worst = std::max(worst, a.sign[s] == b.sign[s] ? rel(b.log_abs(s), a.log_abs(s)) : kInf);
      worst = std::max(worst, rel(eb(s), ea(s)));
    }
  }
  return result("equivariance", worst, 1e-8, group);
}

CheckResult reindexing(const Ansatz& ansatz, const VectorXd& theta, const MolecularConfiguration& config,
                       int cases, std::mt19937_64& rng) {
  std::vector<Index> perm(static_cast<size_t>(config.n_nuclei()));
  const auto base = ansatz.bind(theta, config);
  double worst = 0.0;
  for (int c = 0; c < cases; ++c) {
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const ElectronBatch x = random_electrons(config, 2, rng);
    const Amplitudes a = base.evaluate(x), b = ansatz.bind(theta, permuted(config, perm)).evaluate(x);
    for (Index s = 0; s < x.rows(); ++s) {
      worst = std::max(worst, a.sign[s] == b.sign[s] ? rel(b.log_abs(s), a.log_abs(s)) : kInf);
    }
  }
  return result("nucleus reindexing", worst, 1e-12);
}

std::vector<CheckResult> finite_differences(const Ansatz& ansatz, const VectorXd& theta,
                                            const MolecularConfiguration& config, int cases, std::mt19937_64& rng) {
  const auto wf = ansatz.bind(theta, config);
  auto f = [&](const ElectronBatch& y) { return wf.evaluate(y).log_abs(0); };
  double grad_err = 0.0, lap_err = 0.0;
  for (int c = 0; c < cases; ++c) {
    const ElectronBatch x = random_electrons(config, 1, rng);
    const Derivatives d = wf.derivatives(x);
    const double f0 = f(x);
    double lap = 0.0;
    for (Index q = 0; q < x.cols(); ++q) {
      auto at = [&](double h) {
        ElectronBatch y = x;
        y(0, q) += h;
        return f(y);
      };
      const double g = (at(1e-4) - at(-1e-4)) / 2e-4;
      grad_err = std::max(grad_err, std::abs(d.grad(0, q) - g) / std::max(std::abs(g), 1e-3));
      const double h = 1e-3;
      lap += (-at(2 * h) + 16 * at(h) - 30 * f0 + 16 * at(-h) - at(-2 * h)) / (12 * h * h);
    }
    lap_err = std::max(lap_err, std::abs(d.laplacian(0) - lap) / std::max(std::abs(lap), 1e-3));
  }
  return {result("gradient vs finite differences", grad_err, 1e-5, "central difference, h = 1e-4"),
          result("laplacian vs finite differences", lap_err, 1e-4, "4th-order stencil, h = 1e-3")};
}

CheckResult zero_variance(std::mt19937_64& rng) {
  Eigen::Matrix<double, Eigen::Dynamic, 3> pos = Eigen::RowVector3d::Zero();
  const auto atom = make_configuration(pos, {1}, 1, 0);
  const HydrogenicStub stub(Eigen::RowVector3d::Zero(), 1.0);
  const VectorXd e = local_energies(stub, random_electrons(atom, 10000, rng), atom);
  const double dev = (e.array() + 0.5).abs().maxCoeff();
  const double var = statistics(e).variance;
  return result("zero variance (hydrogen 1s)", std::max(dev, var), 1e-10,
                "max |E_L + 0.5| and Var[E_L] over 1e4 points");
}

CheckResult cg_oracle(std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  const Index s_count = 240, p_count = 60;
  MatrixXd g(s_count, p_count);
  for (Index i = 0; i < g.size(); ++i) g(i) = n01(rng);
  VectorXd b(p_count);
  for (Index i = 0; i < p_count; ++i) b(i) = n01(rng);
  const double lambda = 1e-3;
  const MatrixXd dense = g.transpose() * g / static_cast<double>(s_count) +
                         lambda * MatrixXd::Identity(p_count, p_count);
  const VectorXd exact = dense.ldlt().solve(b);
  const CgResult cg = cg_solve([&](const VectorXd& v) { return fisher_vector_product(g, v, lambda); }, b);
  return result("CG vs dense damped solve", (cg.x - exact).norm() / exact.norm(), 1e-6,
                std::to_string(cg.steps) + " CG steps, 60 parameters");
}

CheckResult sampler_moment(std::uint64_t seed) {
  Eigen::Matrix<double, Eigen::Dynamic, 3> pos = Eigen::RowVector3d::Zero();
  const auto atom = make_configuration(pos, {1}, 1, 0);
  const HydrogenicStub stub(Eigen::RowVector3d::Zero(), 1.0);
  WalkerState s = init_walkers(atom, 1000, seed, 0.5, stub);
  for (int k = 0; k < 10; ++k) {
    run_chain(s, stub, 10);
    adapt_step_size(s);
  }
  RunningStatistics r;
  for (int k = 0; k < 100; ++k) {
    run_chain(s, stub, 5);
    r.add(VectorXd(s.positions.rowwise().norm()));
  }
  return result("sampler E[r] (hydrogen 1s)", std::abs(r.stats().mean - 1.5), 0.02, "1e5 samples, exact 1.5 bohr");
}

}  // namespace

std::vector<CheckResult> run_checks(const RunConfig& config, const CheckOptions& options) {
  const auto ansatz = make_ansatz(config);
  std::mt19937_64 rng(derive_seed(config.seed, 11));
  VectorXd theta = ansatz->initial_params(rng);
  const MolecularConfiguration geom =
      config.system.uses_template()
          ? system_template(config.system)->realize(VectorXd::Constant(1, 0.5 * (config.system.lower + config.system.upper)))
          : config.system.geometries.front();
  std::vector<CheckResult> out;
  out.push_back(antisymmetry(*ansatz, theta, geom, options.cases, options.corrupt_sign, rng));
  out.push_back(equivariance(*ansatz, theta, geom, options.cases, rng));
  out.push_back(reindexing(*ansatz, theta, geom, options.cases, rng));
  for (auto& r : finite_differences(*ansatz, theta, geom, std::max(1, options.cases / 4), rng)) out.push_back(r);
  out.push_back(zero_variance(rng));
  out.push_back(cg_oracle(rng));
  out.push_back(sampler_moment(derive_seed(config.seed, 12)));
  return out;
}

bool print_report(std::ostream& out, const std::vector<CheckResult>& results) {
  bool ok = true;
  for (const auto& r : results) {
    ok = ok && r.passed;
    out << std::left << std::setw(34) << r.name << (r.passed ? "PASS" : "FAIL") << "  measured "
        << std::scientific << std::setprecision(3) << r.measured << "  tolerance " << r.tolerance << "  margin "
        << r.margin() << std::defaultfloat;
    if (!r.detail.empty()) out << "  (" << r.detail << ")";
    out << '\n';
  }
  out << (ok ? "all checks passed" : "some checks FAILED") << std::endl;
  return ok;
}

}  // namespace mgvmc
