// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mgvmc/pretraining.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

#include <json.hpp>

#include "mgvmc/errors.hpp"
#include "mgvmc/parallel.hpp"

namespace mgvmc {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using json = nlohmann::json;

namespace {

// int_{-1}^{1} nu^n exp(-q nu) d nu for n = 0, 2
double aux_b(int n, double q) {
  if (std::abs(q) < 0.5) {
    double sum = 0.0, term = 1.0;
    for (int k = 0; k <= 40; k += 2) {
      if (k > 0) term *= q * q / (static_cast<double>(k) * (k - 1));
      sum += term * 2.0 / (k + n + 1);
    }
    return sum;
  }
  if (n == 0) return 2.0 * std::sinh(q) / q;
  return -std::exp(-q) * (1 / q + 2 / (q * q) + 2 / (q * q * q)) +
         std::exp(q) * (1 / q - 2 / (q * q) + 2 / (q * q * q));
}

// int_1^inf mu^n exp(-p mu) d mu for n = 0, 2
double aux_a(int n, double p) {
  if (n == 0) return std::exp(-p) / p;
  return std::exp(-p) * (1 / p + 2 / (p * p) + 2 / (p * p * p));
}

}  // namespace

double slater_overlap(double zeta_a, double zeta_b, double distance) {
  const double pref = std::pow(zeta_a * zeta_b, 1.5);
  if (distance < 1e-8) return 8.0 * pref / std::pow(zeta_a + zeta_b, 3);
  const double p = 0.5 * distance * (zeta_a + zeta_b);
  const double q = 0.5 * distance * (zeta_a - zeta_b);
  const double r3 = distance * distance * distance;
  return pref * r3 / 4.0 * (aux_a(2, p) * aux_b(0, q) - aux_a(0, p) * aux_b(2, q));
}

MatrixXd ReferenceOrbitals::evaluate(const ElectronBatch& x, int spin) const {
  const int begin = spin == 0 ? 0 : config.n_up;
  const int n = spin == 0 ? config.n_up : config.n_dn;
  const MatrixXd& coeff = spin == 0 ? up : dn;
  if (coeff.cols() != n || coeff.rows() != static_cast<Index>(basis.size())) {
    throw ConfigError("reference coefficient matrix has the wrong shape");
  }
  if (x.cols() != 3 * config.n_electrons()) throw ConfigError("electron batch does not match the reference orbitals");
  MatrixXd ao(x.rows() * n, static_cast<Index>(basis.size()));
  for (Index b = 0; b < x.rows(); ++b) {
    for (int i = 0; i < n; ++i) {
      const Eigen::RowVector3d r = x.block<1, 3>(b, 3 * (begin + i));
      for (size_t mu = 0; mu < basis.size(); ++mu) {
        const auto& f = basis[mu];
        ao(b * n + i, static_cast<Index>(mu)) =
            f.normalization * std::exp(-f.exponent * (r - config.positions.row(f.center)).norm());
      }
    }
  }
  return ao * coeff;
}

double LcaoProvider::slater_exponent(int charge) {
  // Slater's rules for a 1s shell: screening 0.30 per other 1s electron
  if (charge == 1) return 1.0;
  if (charge == 2) return 1.7;
  throw ConfigError("analytic orbital provider supports charges 1 and 2 only, got " + std::to_string(charge) +
                    "; use an external orbital file");
}

ReferenceOrbitals LcaoProvider::orbitals(const MolecularConfiguration& config) const {
  ReferenceOrbitals out;
  out.config = config;
  const Index m = config.n_nuclei();
  for (Index a = 0; a < m; ++a) {
    const double zeta = slater_exponent(config.charges[a]);
    out.basis.push_back({a, zeta, std::pow(zeta, 1.5) / std::sqrt(std::numbers::pi)});
  }
  if (config.n_up > m || config.n_dn > m) {
    throw ConfigError("analytic orbital provider has " + std::to_string(m) + " orbitals per spin, need " +
                      std::to_string(std::max(config.n_up, config.n_dn)));
  }
  MatrixXd s(m, m), h(m, m);
  for (Index a = 0; a < m; ++a) {
    for (Index b = 0; b < m; ++b) {
      const double za = out.basis[a].exponent, zb = out.basis[b].exponent;
      s(a, b) = a == b ? 1.0 : slater_overlap(za, zb, (config.positions.row(a) - config.positions.row(b)).norm());
    }
  }
  for (Index a = 0; a < m; ++a) {
    for (Index b = 0; b < m; ++b) {
      const double ha = -0.5 * out.basis[a].exponent * out.basis[a].exponent;
      const double hb = -0.5 * out.basis[b].exponent * out.basis[b].exponent;
      h(a, b) = a == b ? ha : k_ * s(a, b) * 0.5 * (ha + hb);
    }
  }
  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> solver(h, s);
  if (solver.info() != Eigen::Success) throw ConfigError("extended Hueckel eigensolve failed");
  MatrixXd c = solver.eigenvectors();
  for (Index j = 0; j < m; ++j) {
    Index big = 0;
    for (Index i = 1; i < m; ++i) {
      if (std::abs(c(i, j)) > std::abs(c(big, j)) + 1e-12) big = i;
    }
    if (c(big, j) < 0) c.col(j) *= -1.0;
  }
  out.up = c.leftCols(config.n_up);
  out.dn = c.leftCols(config.n_dn);
  return out;
}

namespace {

bool same_geometry(const MolecularConfiguration& a, const MolecularConfiguration& b) {
  return a.charges == b.charges && a.n_up == b.n_up && a.n_dn == b.n_dn && a.n_nuclei() == b.n_nuclei() &&
         (a.positions - b.positions).cwiseAbs().maxCoeff() <= 1e-6;
}

json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

MatrixXd matrix_from_json(const json& j, Index rows, Index cols, const std::string& what) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows) throw ConfigError(what + " must have " + std::to_string(rows) + " rows");
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    if (!j[i].is_array() || static_cast<Index>(j[i].size()) != cols) {
      throw ConfigError(what + " rows must have " + std::to_string(cols) + " entries");
    }
    for (Index c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

}  // namespace

ReferenceOrbitals FileProvider::orbitals(const MolecularConfiguration& config) const {
  for (const auto& s : sets_) {
    if (same_geometry(s.config, config)) return s;
  }
  throw ConfigError("orbital file does not cover the requested geometry");
}

void FileProvider::save(const std::string& path) const {
  json doc{{"format", "mgvmc-reference-orbitals"}, {"version", 1}, {"geometries", json::array()}};
  for (const auto& s : sets_) {
    json g;
    g["charges"] = s.config.charges;
    g["positions"] = matrix_to_json(s.config.positions);
    g["n_up"] = s.config.n_up;
    g["n_dn"] = s.config.n_dn;
    g["basis"] = json::array();
    for (const auto& f : s.basis) {
      g["basis"].push_back({{"center", f.center}, {"exponent", f.exponent}, {"normalization", f.normalization}});
    }
    g["up"] = matrix_to_json(s.up);
    g["dn"] = matrix_to_json(s.dn);
    doc["geometries"].push_back(g);
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << doc.dump(1) << '\n';
}

FileProvider FileProvider::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read orbital file " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("orbital file " + path + ": " + e.what());
  }
  if (doc.value("format", "") != "mgvmc-reference-orbitals" || doc.value("version", 0) != 1) {
    throw ConfigError("orbital file " + path + " has an unsupported format or version");
  }
  std::vector<ReferenceOrbitals> sets;
  try {
    for (const auto& g : doc.at("geometries")) {
      ReferenceOrbitals s;
      const auto charges = g.at("charges").get<std::vector<int>>();
      const Index m = static_cast<Index>(charges.size());
      s.config = make_configuration(matrix_from_json(g.at("positions"), m, 3, "positions"), charges,
                                    g.at("n_up").get<int>(), g.at("n_dn").get<int>());
      for (const auto& f : g.at("basis")) {
        SlaterFunction sf{f.at("center").get<Index>(), f.at("exponent").get<double>(),
                          f.at("normalization").get<double>()};
        if (sf.center < 0 || sf.center >= m) throw ConfigError("basis function center out of range");
        s.basis.push_back(sf);
      }
      const Index nb = static_cast<Index>(s.basis.size());
      s.up = matrix_from_json(g.at("up"), nb, s.config.n_up, "up coefficients");
      s.dn = matrix_from_json(g.at("dn"), nb, s.config.n_dn, "dn coefficients");
      sets.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw ConfigError("orbital file " + path + ": " + e.what());
  }
  return FileProvider(std::move(sets));
}

std::unique_ptr<ReferenceOrbitalProvider> make_provider(const std::string& kind, const std::string& path) {
  if (kind == "lcao") return std::make_unique<LcaoProvider>();
  if (kind == "file") return std::make_unique<FileProvider>(FileProvider::load(path));
  throw ConfigError("unknown orbital provider '" + kind + "'");
}

OrbitalTargets target_orbitals(const ReferenceOrbitalProvider& provider, const ElectronBatch& x,
                               const std::vector<MolecularConfiguration>& references, int n_determinants) {
  if (references.empty()) throw ConfigError("no reference geometries for pretraining");
  std::vector<ReferenceOrbitals> sets;
  for (const auto& r : references) sets.push_back(provider.orbitals(r));
  OrbitalTargets out;
  for (int k = 0; k < n_determinants; ++k) {
    const auto& s = sets[static_cast<size_t>(k) % sets.size()];
    out.up.push_back(s.evaluate(x, 0));
    if (s.config.n_dn > 0) out.dn.push_back(s.evaluate(x, 1));
  }
  return out;
}

double pretrain_loss(const std::vector<MatrixXd>& model_up, const std::vector<MatrixXd>& model_dn,
                     const OrbitalTargets& targets) {
  if (model_up.size() != targets.up.size() || model_dn.size() != targets.dn.size()) {
    throw ConfigError("pretraining targets and model orbitals differ in determinant count");
  }
  double loss = 0.0;
  auto add = [&](const MatrixXd& a, const MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ConfigError("orbital matrix shapes differ");
    loss += (a - b).squaredNorm() / static_cast<double>(a.size());
  };
  for (size_t k = 0; k < model_up.size(); ++k) add(model_up[k], targets.up[k]);
  for (size_t k = 0; k < model_dn.size(); ++k) add(model_dn[k], targets.dn[k]);
  return loss;
}

OrbitalTargets model_orbitals(const Ansatz& ansatz, const VectorXd& theta, const MolecularConfiguration& config,
                              const ElectronBatch& x) {
  const auto frame = build_frame(config);
  const VectorXd wf = ansatz.wf_params(theta, config, frame);
  ad::Tape tape(x.rows(), 0, false);
  const auto orb = ansatz.model().build_orbitals(tape, x, config, frame, wf);
  OrbitalTargets out;
  for (auto v : orb.up) out.up.push_back(tape.value(v));
  for (auto v : orb.dn) out.dn.push_back(tape.value(v));
  return out;
}

double pretrain_loss_and_gradient(const Ansatz& ansatz, const VectorXd& theta, const MolecularConfiguration& config,
                                  const ElectronBatch& x, const OrbitalTargets& targets, VectorXd* gradient) {
  const auto frame = build_frame(config);
  const VectorXd wf = ansatz.wf_params(theta, config, frame);
  const Index b_count = x.rows();
  const Index n_wf = ansatz.model().layout().size();
  const int n_up = config.n_up, n_dn = config.n_dn;
  const size_t k_count = targets.up.size();
  std::vector<double> partial_loss(static_cast<size_t>(b_count), 0.0);
  std::vector<MatrixXd> partial_grad(static_cast<size_t>(b_count));
  parallel_ranges(b_count, [&](Index begin, Index end) {
    const Index count = end - begin;
    ad::Tape tape(count, 0, gradient != nullptr);
    const auto orb = ansatz.model().build_orbitals(tape, x.middleRows(begin, count), config, frame, wf);
    if (orb.up.size() != k_count || orb.dn.size() != targets.dn.size()) {
      throw ConfigError("pretraining targets and model orbitals differ in determinant count");
    }
    double loss = 0.0;
    auto term = [&](ad::Var v, const MatrixXd& target, int n) {
      const MatrixXd diff = tape.value(v) - target.middleRows(begin * n, count * n);
      const double scale = 1.0 / static_cast<double>(b_count * n * n);
      loss += diff.squaredNorm() * scale;
      if (gradient) tape.seed(v, 2.0 * scale * diff);
    };
    for (size_t k = 0; k < k_count; ++k) term(orb.up[k], targets.up[k], n_up);
    for (size_t k = 0; k < orb.dn.size(); ++k) term(orb.dn[k], targets.dn[k], n_dn);
    partial_loss[static_cast<size_t>(begin)] = loss;
    if (gradient) partial_grad[static_cast<size_t>(begin)] = tape.backward(1, n_wf);
  });
  double loss = 0.0;
  MatrixXd wf_grad = MatrixXd::Zero(1, n_wf);
  for (size_t i = 0; i < partial_loss.size(); ++i) {
    loss += partial_loss[i];
    if (gradient && partial_grad[i].size() > 0) wf_grad += partial_grad[i];
  }
  if (gradient) *gradient = ansatz.to_theta(theta, config, frame, wf_grad).row(0).transpose();
  return loss;
}

void lamb_step(VectorXd& theta, const VectorXd& gradient, LambState& state,
               const std::vector<std::vector<Index>>& groups, const LambConfig& config) {
  if (state.m.size() != theta.size()) {
    state.m = VectorXd::Zero(theta.size());
    state.v = VectorXd::Zero(theta.size());
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (const auto& group : groups) {
    VectorXd update(static_cast<Index>(group.size()));
    double theta_sq = 0.0;
    for (size_t j = 0; j < group.size(); ++j) {
      const Index i = group[j];
      state.m(i) = config.beta1 * state.m(i) + (1 - config.beta1) * gradient(i);
      state.v(i) = config.beta2 * state.v(i) + (1 - config.beta2) * gradient(i) * gradient(i);
      update(static_cast<Index>(j)) =
          (state.m(i) / c1) / (std::sqrt(state.v(i) / c2) + config.epsilon) + config.weight_decay * theta(i);
      theta_sq += theta(i) * theta(i);
    }
    const double w = std::sqrt(theta_sq), u = update.norm();
    const double trust = w > 0.0 && u > 0.0 ? w / u : 1.0;
    for (size_t j = 0; j < group.size(); ++j) {
      theta(group[j]) -= config.learning_rate * trust * update(static_cast<Index>(j));
    }
  }
}

std::vector<std::vector<Index>> pretrain_groups(const Ansatz& ansatz) {
  std::vector<std::vector<Index>> out;
  Index at = 0;
  for (const auto& slot : ansatz.model().layout().slots()) {
    if (slot.kind != SlotKind::Shared) continue;
    std::vector<Index> g;
    for (Index i = 0; i < slot.size(); ++i) g.push_back(at++);
    out.push_back(std::move(g));
  }
  const auto heads = ansatz.gnn().head_bias_indices();
  for (const auto& slot : ansatz.gnn().layout().slots()) {
    if (slot.size() == 0 || std::find(heads.begin(), heads.end(), slot.offset) == heads.end()) continue;
    std::vector<Index> g;
    for (Index i = 0; i < slot.size(); ++i) g.push_back(ansatz.gnn_offset() + slot.offset + i);
    out.push_back(std::move(g));
  }
  return out;
}

double pretrain_step(const Ansatz& ansatz, const ReferenceOrbitalProvider& provider, VectorXd& theta,
                     LambState& state, const std::vector<PretrainBatch>& batches, const LambConfig& config) {
  if (batches.empty()) throw ConfigError("no pretraining batches");
  const int k = ansatz.model().config().n_determinants;
  VectorXd total = VectorXd::Zero(theta.size());
  double loss = 0.0;
  for (const auto& b : batches) {
    VectorXd g;
    const auto targets = target_orbitals(provider, b.x, b.references.empty() ? std::vector{b.config} : b.references, k);
    loss += pretrain_loss_and_gradient(ansatz, theta, b.config, b.x, targets, &g);
    total += g;
  }
  const double n = static_cast<double>(batches.size());
  lamb_step(theta, total / n, state, pretrain_groups(ansatz), config);
  return loss / n;
}

}  // namespace mgvmc
