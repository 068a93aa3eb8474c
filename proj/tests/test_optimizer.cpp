// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <chrono>
#include <random>

#include "mgvmc/errors.hpp"
#include "mgvmc/optimizer.hpp"

using namespace mgvmc;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_matrix(Index r, Index c, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  MatrixXd m(r, c);
  for (Index i = 0; i < m.size(); ++i) m(i) = n01(rng);
  return m;
}

/// psi = exp(-a x^2 - b x^4) in the harmonic well, sampled on a grid with
/// weights psi^2.
GeometryBatch oscillator(double a, double b) {
  const Index n = 4001;
  GeometryBatch out;
  out.local_energies.resize(n);
  out.grad_logpsi.resize(n, 2);
  out.weights.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double x = -8.0 + 16.0 * static_cast<double>(i) / (n - 1);
    const double g = -2 * a * x - 4 * b * x * x * x;
    const double lap = -2 * a - 12 * b * x * x;
    out.local_energies(i) = -0.5 * (lap + g * g) + 0.5 * x * x;
    out.grad_logpsi(i, 0) = -x * x;
    out.grad_logpsi(i, 1) = -x * x * x * x;
    out.weights(i) = std::exp(2 * (-a * x * x - b * x * x * x * x));
  }
  return out;
}

double rayleigh(double a, double b) {
  const GeometryBatch g = oscillator(a, b);
  return g.weights.dot(g.local_energies) / g.weights.sum();
}

}  // namespace

TEST_CASE("vmc gradient contracts", "[optimizer]") {
  GeometryBatch flat{VectorXd::Constant(6, -1.0), random_matrix(6, 3, 1), {}};
  CHECK(vmc_gradient({flat}).cwiseAbs().maxCoeff() < 1e-15);

  GeometryBatch g1{random_matrix(8, 1, 2).col(0), random_matrix(8, 3, 3), {}};
  GeometryBatch g2{random_matrix(5, 1, 4).col(0), random_matrix(5, 3, 5), {}};
  const VectorXd both = vmc_gradient({g1, g2});
  CHECK((both - 0.5 * (vmc_gradient({g1}) + vmc_gradient({g2}))).norm() < 1e-14);

  GeometryBatch empty{VectorXd(0), MatrixXd(0, 3), {}};
  CHECK_THROWS(vmc_gradient({empty}));
  CHECK_THROWS(vmc_gradient({}));
}

TEST_CASE("vmc gradient matches the derivative of the Rayleigh quotient", "[optimizer]") {
  const double a = 0.4, b = 0.05, h = 1e-5;
  const VectorXd grad = vmc_gradient({oscillator(a, b)});
  const double da = (rayleigh(a + h, b) - rayleigh(a - h, b)) / (2 * h);
  const double db = (rayleigh(a, b + h) - rayleigh(a, b - h)) / (2 * h);
  CHECK(grad(0) == Catch::Approx(da).epsilon(1e-4));
  CHECK(grad(1) == Catch::Approx(db).epsilon(1e-4));
}

TEST_CASE("fisher vector product", "[optimizer]") {
  MatrixXd g(1, 2);
  g << 1, 2;
  CHECK(fisher_vector_product(g, VectorXd::Zero(2), 0.5) == VectorXd::Zero(2));
  CHECK(fisher_vector_product(g, VectorXd::Unit(2, 0), 0.0) == (VectorXd(2) << 1, 2).finished());

  const MatrixXd s = random_matrix(7, 12, 6);
  for (unsigned k = 0; k < 20; ++k) {
    const VectorXd x = random_matrix(12, 1, 100 + k).col(0);
    CHECK(x.dot(fisher_vector_product(s, x, 0.3)) >= 0.3 * x.squaredNorm() - 1e-12);
  }
}

TEST_CASE("conjugate gradient solves", "[optimizer]") {
  const auto diag = [](const VectorXd& x) { return VectorXd((VectorXd(2) << 2 * x(0), 3 * x(1)).finished()); };
  const CgResult r = cg_solve(diag, (VectorXd(2) << 2, 3).finished());
  CHECK((r.x - VectorXd::Ones(2)).norm() < 1e-12);

  const MatrixXd m = random_matrix(5, 5, 7);
  const MatrixXd spd = m * m.transpose() + 0.5 * MatrixXd::Identity(5, 5);
  const VectorXd b = random_matrix(5, 1, 8).col(0);
  const VectorXd direct = spd.ldlt().solve(b);
  const CgResult cg = cg_solve([&](const VectorXd& x) { return VectorXd(spd * x); }, b);
  CHECK((cg.x - direct).norm() / direct.norm() < 1e-6);

  for (int dim = 1; dim <= 8; ++dim) {
    const MatrixXd q = random_matrix(dim, dim, 20 + dim);
    const MatrixXd a = q * q.transpose() + MatrixXd::Identity(dim, dim);
    const VectorXd rhs = random_matrix(dim, 1, 40 + dim).col(0);
    CgSettings tight;
    tight.tolerance = 0.0;
    const CgResult res = cg_solve([&](const VectorXd& x) { return VectorXd(a * x); }, rhs, tight);
    CHECK(res.steps <= dim);
    CHECK((a * res.x - rhs).norm() <= 1e-10 * rhs.norm());
  }

  const auto broken = [](const VectorXd& x) { return VectorXd(x * std::numeric_limits<double>::quiet_NaN()); };
  try {
    cg_solve(broken, VectorXd::Ones(3));
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(e.step() == 1);
  }
}

TEST_CASE("natural-gradient update against a dense solve", "[optimizer]") {
  std::vector<GeometryBatch> batches;
  for (unsigned k = 0; k < 3; ++k) {
    batches.push_back({random_matrix(60, 1, 50 + k).col(0), random_matrix(60, 40, 60 + k), {}});
  }
  OptimizerConfig cfg;
  cfg.max_step_norm = 1e9;
  TrainState state{VectorXd::Zero(40), 0};
  const UpdateInfo info = apply_update(state, cfg, batches);
  const MatrixXd g = fisher_samples(batches, false);
  const MatrixXd f = g.transpose() * g / g.rows() + info.damping * MatrixXd::Identity(40, 40);
  const VectorXd dense = f.ldlt().solve(vmc_gradient(batches));
  CHECK(info.learning_rate == 0.1);
  CHECK(state.step == 1);
  CHECK((-state.params / 0.1 - dense).norm() / dense.norm() < 1e-6);
}

TEST_CASE("learning rate, clipping and convergence metric", "[optimizer]") {
  OptimizerConfig cfg;
  CHECK(learning_rate(cfg, 0) == 0.1);
  CHECK(learning_rate(cfg, 1000) == Catch::Approx(0.05));

  GeometryBatch b{random_matrix(30, 1, 70).col(0), random_matrix(30, 4, 71), {}};
  cfg.max_step_norm = 1e9;
  TrainState free{VectorXd::Zero(4), 0};
  const UpdateInfo unclipped = apply_update(free, cfg, {b});
  cfg.max_step_norm = unclipped.step_norm / 2;
  TrainState clipped{VectorXd::Zero(4), 0};
  apply_update(clipped, cfg, {b});
  CHECK(clipped.params.norm() / 0.1 == Catch::Approx(cfg.max_step_norm).epsilon(1e-12));
  cfg.max_step_norm = unclipped.step_norm * 2;
  TrainState loose{VectorXd::Zero(4), 0};
  apply_update(loose, cfg, {b});
  CHECK(loose.params == free.params);

  EnergyStatistics s1, s2;
  s1.variance = 0.2;
  s2.variance = 0.6;
  CHECK(convergence_metric({s1}) == 0.2);
  CHECK(convergence_metric({s1, s2}) == Catch::Approx(0.4));
}
