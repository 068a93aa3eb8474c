// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mgvmc/optimizer.hpp"

#include <cmath>
#include <deque>
#include <stdexcept>

#include "mgvmc/errors.hpp"

namespace mgvmc {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void check_batches(const std::vector<GeometryBatch>& batches) {
  if (batches.empty()) throw std::invalid_argument("no geometry batches");
  for (const auto& b : batches) {
    if (b.local_energies.size() == 0) throw std::invalid_argument("empty geometry batch");
    if (b.grad_logpsi.rows() != b.local_energies.size() || b.grad_logpsi.cols() != batches[0].grad_logpsi.cols()) {
      throw std::invalid_argument("geometry batch shapes disagree");
    }
    if (b.weights.size() != 0 && (b.weights.size() != b.local_energies.size() || !(b.weights.sum() > 0.0))) {
      throw std::invalid_argument("invalid sample weights");
    }
  }
}

VectorXd normalized_weights(const GeometryBatch& b) {
  const Index n = b.local_energies.size();
  if (b.weights.size() == 0) return VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  return b.weights / b.weights.sum();
}

}  // namespace

VectorXd vmc_gradient(const std::vector<GeometryBatch>& batches) {
  check_batches(batches);
  VectorXd out = VectorXd::Zero(batches[0].grad_logpsi.cols());
  for (const auto& b : batches) {
    const VectorXd w = normalized_weights(b);
    const VectorXd centered = (b.local_energies.array() - w.dot(b.local_energies)) * w.array();
    out += 2.0 * (b.grad_logpsi.transpose() * centered);
  }
  return out / static_cast<double>(batches.size());
}

VectorXd fisher_vector_product(const MatrixXd& grads, const VectorXd& x, double lambda) {
  const VectorXd gx = grads * x;
  return grads.transpose() * gx / static_cast<double>(grads.rows()) + lambda * x;
}

CgResult cg_solve(const std::function<VectorXd(const VectorXd&)>& apply_a, const VectorXd& b,
                  const CgSettings& settings) {
  CgResult out;
  out.x = VectorXd::Zero(b.size());
  const double b_norm = b.norm();
  if (b_norm == 0.0) return out;
  VectorXd r = b, p = b;
  double rr = r.squaredNorm();
  std::deque<double> phi{0.0};
  for (int k = 1; k <= settings.max_steps; ++k) {
    const VectorXd ap = apply_a(p);
    const double pap = p.dot(ap);
    const double alpha = rr / pap;
    if (!std::isfinite(alpha) || !(pap > 0.0)) throw NumericalError("conjugate gradient breakdown", k);
    out.x += alpha * p;
    r -= alpha * ap;
    out.steps = k;
    if (!out.x.allFinite() || !r.allFinite()) throw NumericalError("non-finite conjugate gradient iterate", k);
    const double rr_new = r.squaredNorm();
    if (std::sqrt(rr_new) <= settings.residual_tolerance * b_norm) break;
    // phi(x) = 1/2 x^T A x - b^T x = -1/2 x^T (b + r)
    phi.push_back(-0.5 * out.x.dot(b + r));
    if (static_cast<int>(phi.size()) > settings.window) {
      const double now = phi.back();
      if (now != 0.0 && (phi.front() - now) / std::abs(now) < settings.tolerance) break;
      phi.pop_front();
    }
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  return out;
}

double learning_rate(const OptimizerConfig& config, std::int64_t step) {
  return config.learning_rate / (1.0 + static_cast<double>(step) / config.decay_steps);
}

double damping(const OptimizerConfig& config, const std::vector<GeometryBatch>& batches) {
  check_batches(batches);
  double var = 0.0;
  for (const auto& b : batches) var += statistics(b.local_energies).variance;
  var /= static_cast<double>(batches.size());
  return std::max(config.damping_floor, config.damping_scale * std::sqrt(var));
}

MatrixXd fisher_samples(const std::vector<GeometryBatch>& batches, bool centered) {
  check_batches(batches);
  Index rows = 0;
  for (const auto& b : batches) rows += b.grad_logpsi.rows();
  MatrixXd g(rows, batches[0].grad_logpsi.cols());
  Index at = 0;
  for (const auto& b : batches) {
    const Index n = b.grad_logpsi.rows();
    const VectorXd w = normalized_weights(b);
    auto block = g.middleRows(at, n);
    block = b.grad_logpsi;
    if (centered) block.rowwise() -= (w.transpose() * b.grad_logpsi).eval();
    if (b.weights.size() != 0) block = (w.array() * static_cast<double>(n)).sqrt().matrix().asDiagonal() * block;
    at += b.grad_logpsi.rows();
  }
  return g;
}

UpdateInfo apply_update(TrainState& state, const OptimizerConfig& config, const std::vector<GeometryBatch>& batches) {
  const VectorXd grad = vmc_gradient(batches);
  if (grad.size() != state.params.size()) throw std::invalid_argument("gradient and parameters differ in length");
  const MatrixXd g = fisher_samples(batches, config.centered_fisher);
  UpdateInfo info;
  info.damping = damping(config, batches);
  const CgResult cg = cg_solve([&](const VectorXd& x) { return fisher_vector_product(g, x, info.damping); }, grad,
                               config.cg);
  VectorXd delta = cg.x;
  info.cg_steps = cg.steps;
  info.step_norm = delta.norm();
  if (info.step_norm > config.max_step_norm) delta *= config.max_step_norm / info.step_norm;
  info.learning_rate = learning_rate(config, state.step);
  state.params -= info.learning_rate * delta;
  ++state.step;
  return info;
}

double convergence_metric(const std::vector<EnergyStatistics>& per_geometry) {
  if (per_geometry.empty()) throw std::invalid_argument("no geometry statistics");
  double sum = 0.0;
  for (const auto& s : per_geometry) sum += s.variance;
  return sum / static_cast<double>(per_geometry.size());
}

}  // namespace mgvmc
