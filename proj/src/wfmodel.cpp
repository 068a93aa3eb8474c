// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mgvmc/wfmodel.hpp"

#include <cmath>
#include <string>

#include "mgvmc/errors.hpp"
#include "mgvmc/parallel.hpp"

namespace mgvmc {

using ad::Tape;
using ad::Var;
using Eigen::Index;
using Eigen::MatrixXd;

InputJet electron_nucleus_features(const ElectronBatch& x, const MolecularConfiguration& config,
                                   const EquivariantFrame& frame, bool jets) {
  const Index b_count = x.rows();
  const Index n = x.cols() / 3;
  const Index m_count = config.n_nuclei();
  const auto order = canonical_order(config);
  const Index rows = b_count * n * m_count;
  InputJet out;
  out.value.resize(rows, 4);
  if (jets) {
    out.tangent = MatrixXd::Zero(3 * n * rows, 4);
    out.laplacian = MatrixXd::Zero(rows, 4);
  }
  for (Index b = 0; b < b_count; ++b) {
    for (Index i = 0; i < n; ++i) {
      const Eigen::RowVector3d ri = x.block(b, 3 * i, 1, 3);
      for (Index mc = 0; mc < m_count; ++mc) {
        const Index r = (b * n + i) * m_count + mc;
        const Eigen::RowVector3d d = ri - config.positions.row(order[mc]);
        const double norm = d.norm();
        out.value.block(r, 0, 1, 3) = d * frame.axes;
        out.value(r, 3) = norm;
        if (!jets) continue;
        for (Index c = 0; c < 3; ++c) {
          const Index row = (3 * i + c) * rows + r;
          out.tangent.block(row, 0, 1, 3) = frame.axes.row(c);
          out.tangent(row, 3) = norm > 0.0 ? d(c) / norm : 0.0;
        }
        out.laplacian(r, 3) = norm > 0.0 ? 2.0 / norm : 0.0;
      }
    }
  }
  return out;
}

InputJet electron_electron_features(const ElectronBatch& x, int n_electrons,
                                    const EquivariantFrame& frame, bool jets) {
  const Index b_count = x.rows();
  const Index n = n_electrons;
  const Index rows = b_count * n * n;
  InputJet out;
  out.value = MatrixXd::Zero(rows, 4);
  if (jets) {
    out.tangent = MatrixXd::Zero(3 * n * rows, 4);
    out.laplacian = MatrixXd::Zero(rows, 4);
  }
  for (Index b = 0; b < b_count; ++b) {
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const Index r = (b * n + i) * n + j;
        const Eigen::RowVector3d d = x.block(b, 3 * i, 1, 3) - x.block(b, 3 * j, 1, 3);
        const double norm = d.norm();
        out.value.block(r, 0, 1, 3) = d * frame.axes;
        out.value(r, 3) = norm;
        if (!jets) continue;
        for (Index c = 0; c < 3; ++c) {
          const double dn = norm > 0.0 ? d(c) / norm : 0.0;
          const Index ri = (3 * i + c) * rows + r;
          const Index rj = (3 * j + c) * rows + r;
          out.tangent.block(ri, 0, 1, 3) = frame.axes.row(c);
          out.tangent(ri, 3) = dn;
          out.tangent.block(rj, 0, 1, 3) = -frame.axes.row(c);
          out.tangent(rj, 3) = -dn;
        }
        out.laplacian(r, 3) = norm > 0.0 ? 4.0 / norm : 0.0;
      }
    }
  }
  return out;
}

InputJet electron_nucleus_distances(const ElectronBatch& x, const MolecularConfiguration& config,
                                    int begin, int end, bool jets) {
  const Index b_count = x.rows();
  const Index n = x.cols() / 3;
  const Index count = end - begin;
  const Index m_count = config.n_nuclei();
  const auto order = canonical_order(config);
  const Index rows = b_count * count;
  InputJet out;
  out.value.resize(rows, m_count);
  if (jets) {
    out.tangent = MatrixXd::Zero(3 * n * rows, m_count);
    out.laplacian = MatrixXd::Zero(rows, m_count);
  }
  for (Index b = 0; b < b_count; ++b) {
    for (Index j = 0; j < count; ++j) {
      const Index e = begin + j;
      const Index r = b * count + j;
      for (Index mc = 0; mc < m_count; ++mc) {
        const Eigen::RowVector3d d = x.block(b, 3 * e, 1, 3) - config.positions.row(order[mc]);
        const double norm = d.norm();
        out.value(r, mc) = norm;
        if (!jets) continue;
        for (Index c = 0; c < 3; ++c) {
          out.tangent((3 * e + c) * rows + r, mc) = norm > 0.0 ? d(c) / norm : 0.0;
        }
        out.laplacian(r, mc) = norm > 0.0 ? 2.0 / norm : 0.0;
      }
    }
  }
  return out;
}

namespace {

std::string layer_name(int t, const char* part) { return "layer" + std::to_string(t) + "." + part; }

std::string spin_name(int k, const char* kind, int spin, const char* part) {
  return std::string(kind) + std::to_string(k) + (spin == 0 ? ".up." : ".dn.") + part;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

WaveFunctionModel::WaveFunctionModel(WfConfig config, int n_up, int n_dn, int n_nuclei)
    : config_(config), n_up_(n_up), n_dn_(n_dn), n_nuclei_(n_nuclei) {
  if (config.n_layers < 1 || config.single_width < 1 || config.double_width < 1 ||
      config.n_determinants < 1 || config.embedding_dim < 1) {
    throw ConfigError("wave function sizes must be positive");
  }
  if (n_up < n_dn || n_dn < 0 || n_up + n_dn < 1) throw ConfigError("invalid spin counts");
  if (n_nuclei < 1) throw ConfigError("wave function needs at least one nucleus");
  const Index e = config.embedding_dim;
  const Index ws = config.single_width;
  const Index wd = config.double_width;
  layout_.add("proj.w", e, 4);
  layout_.add("nuc.z", n_nuclei, e, SlotKind::GnnNode);
  layout_.add("in.w1", ws, e);
  layout_.add("in.b1", 1, ws, SlotKind::GnnGlobal);
  layout_.add("in.w2", ws, ws);
  layout_.add("in.b2", 1, ws, SlotKind::GnnGlobal);
  for (int t = 1; t <= config.n_layers; ++t) {
    const Index dg = t == 1 ? 4 : wd;
    layout_.add(layer_name(t, "single.w"), ws, ws + 2 * dg);
    layout_.add(layer_name(t, "single.b"), 1, ws, SlotKind::GnnGlobal);
    layout_.add(layer_name(t, "global.w"), ws, 2 * ws);
    if (t < config.n_layers) {
      layout_.add(layer_name(t, "double.w"), wd, dg);
      layout_.add(layer_name(t, "double.b"), 1, wd, SlotKind::GnnGlobal);
    }
  }
  for (int k = 0; k < config.n_determinants; ++k) {
    for (int spin = 0; spin < 2; ++spin) {
      const Index n = spin == 0 ? n_up : n_dn;
      if (n == 0) continue;
      layout_.add(spin_name(k, "orb", spin, "w"), n, ws);
      layout_.add(spin_name(k, "orb", spin, "b"), 1, n, SlotKind::GnnGlobal);
      layout_.add(spin_name(k, "env", spin, "p"), n_nuclei, n, SlotKind::GnnNode);
      layout_.add(spin_name(k, "env", spin, "s"), n_nuclei, n, SlotKind::GnnNode);
    }
  }
  layout_.add("det.w", 1, config.n_determinants, SlotKind::GnnGlobal);
}

MatrixXd WaveFunctionModel::initial_value(const ParamSlot& slot) const {
  if (ends_with(slot.name, ".s") && slot.name.rfind("env", 0) == 0) {
    return MatrixXd::Constant(slot.rows, slot.cols, std::log(std::exp(1.0) - 1.0));
  }
  if (slot.name == "det.w") return MatrixXd::Constant(slot.rows, slot.cols, 1.0 / config_.n_determinants);
  if (slot.name.rfind("orb", 0) == 0 && ends_with(slot.name, ".b")) {
    return MatrixXd::Constant(slot.rows, slot.cols, config_.orbital_bias_init);
  }
  return MatrixXd::Zero(slot.rows, slot.cols);
}

Eigen::VectorXd WaveFunctionModel::initial_params(std::mt19937_64& rng) const {
  Eigen::VectorXd theta(layout_.size());
  for (const auto& slot : layout_.slots()) {
    auto view = slot_view(theta, slot);
    if (slot.kind == SlotKind::Shared) {
      std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(slot.cols)));
      for (Index j = 0; j < slot.cols; ++j) {
        for (Index i = 0; i < slot.rows; ++i) view(i, j) = dist(rng);
      }
    } else {
      view = initial_value(slot);
    }
  }
  return theta;
}

void WaveFunctionModel::check(const ElectronBatch& x, const MolecularConfiguration& config) const {
  if (x.cols() != 3 * n_electrons()) {
    throw ConfigError("electron batch has " + std::to_string(x.cols()) + " columns, expected " +
                      std::to_string(3 * n_electrons()));
  }
  if (config.n_up != n_up_ || config.n_dn != n_dn_) {
    throw ConfigError("geometry spin counts (" + std::to_string(config.n_up) + ", " +
                      std::to_string(config.n_dn) + ") differ from the model's (" +
                      std::to_string(n_up_) + ", " + std::to_string(n_dn_) + ")");
  }
  if (config.n_nuclei() != n_nuclei_) {
    throw ConfigError("geometry has " + std::to_string(config.n_nuclei()) + " nuclei, model expects " +
                      std::to_string(n_nuclei_));
  }
}

Var WaveFunctionModel::param(Tape& tape, const Eigen::VectorXd& params, const std::string& name) const {
  const ParamSlot& slot = layout_.slot(name);
  return tape.param(slot_view(params, slot), slot.offset);
}

WaveFunctionModel::Orbitals WaveFunctionModel::build_orbitals(Tape& tape, const ElectronBatch& x,
                                                              const MolecularConfiguration& config,
                                                              const EquivariantFrame& frame,
                                                              const Eigen::VectorXd& params) const {
  check(x, config);
  if (params.size() != layout_.size()) throw ConfigError("parameter vector has the wrong length");
  const Index b_count = x.rows();
  const Index n = n_electrons();
  const Index m_count = n_nuclei_;
  const bool jets = tape.n_directions() > 0;
  if (jets && tape.n_directions() != 3 * n) throw ConfigError("tape directions must equal 3N");
  const auto order = canonical_order(config);

  InputJet en = electron_nucleus_features(x, config, frame, jets);
  Var feat = tape.walker_input(std::move(en.value), n * m_count, std::move(en.tangent),
                               std::move(en.laplacian));
  std::vector<Index> nucleus_of_row(static_cast<size_t>(b_count * n * m_count));
  for (size_t r = 0; r < nucleus_of_row.size(); ++r) {
    nucleus_of_row[r] = order[static_cast<size_t>(static_cast<Index>(r) % m_count)];
  }
  Var a = tape.add(tape.linear(feat, param(tape, params, "proj.w")),
                   tape.gather_rows(param(tape, params, "nuc.z"), std::move(nucleus_of_row),
                                    ad::Layout::Walker, n * m_count));
  a = tape.tanh(tape.add_bias(tape.linear(a, param(tape, params, "in.w1")), param(tape, params, "in.b1")));
  a = tape.tanh(tape.add_bias(tape.linear(a, param(tape, params, "in.w2")), param(tape, params, "in.b2")));
  Var h = tape.group_sum(a, m_count, 0, m_count);

  InputJet ee = electron_electron_features(x, static_cast<int>(n), frame, jets);
  Var g = tape.walker_input(std::move(ee.value), n * n, std::move(ee.tangent), std::move(ee.laplacian));

  for (int t = 1; t <= config_.n_layers; ++t) {
    Var gu = tape.group_sum(g, n, 0, n_up_);
    Var gd = tape.group_sum(g, n, n_up_, n);
    Var single = tape.add_bias(tape.linear(tape.concat_cols({h, gu, gd}), param(tape, params, layer_name(t, "single.w"))),
                               param(tape, params, layer_name(t, "single.b")));
    Var hu = tape.group_sum(h, n, 0, n_up_);
    Var hd = tape.group_sum(h, n, n_up_, n);
    Var global = tape.repeat_rows(
        tape.linear(tape.concat_cols({hu, hd}), param(tape, params, layer_name(t, "global.w"))), n);
    h = tape.add(tape.tanh(tape.add(single, global)), h);
    if (t < config_.n_layers) {
      Var gn = tape.tanh(tape.add_bias(tape.linear(g, param(tape, params, layer_name(t, "double.w"))),
                                       param(tape, params, layer_name(t, "double.b"))));
      g = tape.value(g).cols() == tape.value(gn).cols() ? tape.add(gn, g) : gn;
    }
  }

  Orbitals out;
  for (int spin = 0; spin < 2; ++spin) {
    const int begin = spin == 0 ? 0 : n_up_;
    const int end = spin == 0 ? n_up_ : static_cast<int>(n);
    if (end == begin) continue;
    Var hs = tape.group_select(h, n, begin, end);
    InputJet dist = electron_nucleus_distances(x, config, begin, end, jets);
    Var dv = tape.walker_input(std::move(dist.value), end - begin, std::move(dist.tangent),
                               std::move(dist.laplacian));
    for (int k = 0; k < config_.n_determinants; ++k) {
      Var lin = tape.add_bias(tape.linear(hs, param(tape, params, spin_name(k, "orb", spin, "w"))),
                              param(tape, params, spin_name(k, "orb", spin, "b")));
      Var p = tape.gather_rows(param(tape, params, spin_name(k, "env", spin, "p")), order, ad::Layout::Shared);
      Var s = tape.gather_rows(param(tape, params, spin_name(k, "env", spin, "s")), order, ad::Layout::Shared);
      Var phi = tape.mul(lin, tape.envelope(dv, p, s));
      (spin == 0 ? out.up : out.dn).push_back(phi);
    }
  }
  out.weights = param(tape, params, "det.w");
  return out;
}

Tape::SlaterOutput WaveFunctionModel::build(Tape& tape, const ElectronBatch& x,
                                            const MolecularConfiguration& config,
                                            const EquivariantFrame& frame,
                                            const Eigen::VectorXd& params) const {
  Orbitals orb = build_orbitals(tape, x, config, frame, params);
  return tape.slater_logpsi(orb.up, orb.dn, orb.weights, n_up_, n_dn_);
}

Amplitudes WaveFunctionModel::evaluate(const ElectronBatch& x, const MolecularConfiguration& config,
                                       const EquivariantFrame& frame,
                                       const Eigen::VectorXd& params) const {
  Amplitudes out;
  out.log_abs.resize(x.rows());
  out.sign.resize(static_cast<size_t>(x.rows()));
  parallel_ranges(x.rows(), [&](Index begin, Index end) {
    Tape tape(end - begin, 0, false);
    auto res = build(tape, x.middleRows(begin, end - begin), config, frame, params);
    out.log_abs.segment(begin, end - begin) = tape.value(res.log_abs).col(0);
    std::copy(res.sign.begin(), res.sign.end(), out.sign.begin() + begin);
  });
  return out;
}

Derivatives WaveFunctionModel::derivatives(const ElectronBatch& x, const MolecularConfiguration& config,
                                           const EquivariantFrame& frame,
                                           const Eigen::VectorXd& params) const {
  const Index d = 3 * n_electrons();
  Derivatives out;
  out.log_abs.resize(x.rows());
  out.sign.resize(static_cast<size_t>(x.rows()));
  out.grad.resize(x.rows(), d);
  out.laplacian.resize(x.rows());
  parallel_ranges(x.rows(), [&](Index begin, Index end) {
    const Index count = end - begin;
    Tape tape(count, d, false);
    auto res = build(tape, x.middleRows(begin, count), config, frame, params);
    out.log_abs.segment(begin, count) = tape.value(res.log_abs).col(0);
    std::copy(res.sign.begin(), res.sign.end(), out.sign.begin() + begin);
    const MatrixXd& tan = tape.tangent(res.log_abs);
    for (Index q = 0; q < d; ++q) out.grad.block(begin, q, count, 1) = tan.middleRows(q * count, count);
    out.laplacian.segment(begin, count) = tape.laplacian(res.log_abs).col(0);
  });
  return out;
}

MatrixXd WaveFunctionModel::param_gradients(const ElectronBatch& x, const MolecularConfiguration& config,
                                            const EquivariantFrame& frame, const Eigen::VectorXd& params,
                                            Amplitudes* values) const {
  MatrixXd grad(x.rows(), layout_.size());
  if (values) {
    values->log_abs.resize(x.rows());
    values->sign.resize(static_cast<size_t>(x.rows()));
  }
  parallel_ranges(x.rows(), [&](Index begin, Index end) {
    const Index count = end - begin;
    Tape tape(count, 0, true);
    auto res = build(tape, x.middleRows(begin, count), config, frame, params);
    tape.seed(res.log_abs, MatrixXd::Ones(count, 1));
    grad.middleRows(begin, count) = tape.backward(count, layout_.size());
    if (values) {
      values->log_abs.segment(begin, count) = tape.value(res.log_abs).col(0);
      std::copy(res.sign.begin(), res.sign.end(), values->sign.begin() + begin);
    }
  });
  return grad;
}

NeuralWaveFunction::NeuralWaveFunction(const WaveFunctionModel& model, MolecularConfiguration config,
                                       Eigen::VectorXd params)
    : model_(&model), config_(std::move(config)), frame_(build_frame(config_)), params_(std::move(params)) {}

Amplitudes NeuralWaveFunction::evaluate(const ElectronBatch& x) const {
  return model_->evaluate(x, config_, frame_, params_);
}

Derivatives NeuralWaveFunction::derivatives(const ElectronBatch& x) const {
  return model_->derivatives(x, config_, frame_, params_);
}

HydrogenicStub::HydrogenicStub(Eigen::RowVector3d center, double zeta, int n_electrons)
    : center_(center), zeta_(zeta), n_electrons_(n_electrons) {}

Amplitudes HydrogenicStub::evaluate(const ElectronBatch& x) const {
  Amplitudes out;
  out.log_abs = Eigen::VectorXd::Zero(x.rows());
  out.sign.assign(static_cast<size_t>(x.rows()), 1);
  for (Index b = 0; b < x.rows(); ++b) {
    for (Index i = 0; i < n_electrons_; ++i) {
      out.log_abs(b) -= zeta_ * (x.block(b, 3 * i, 1, 3) - center_).norm();
    }
  }
  return out;
}

Derivatives HydrogenicStub::derivatives(const ElectronBatch& x) const {
  Derivatives out;
  Amplitudes a = evaluate(x);
  out.log_abs = std::move(a.log_abs);
  out.sign = std::move(a.sign);
  out.grad = MatrixXd::Zero(x.rows(), 3 * n_electrons_);
  out.laplacian = Eigen::VectorXd::Zero(x.rows());
  for (Index b = 0; b < x.rows(); ++b) {
    for (Index i = 0; i < n_electrons_; ++i) {
      const Eigen::RowVector3d d = x.block(b, 3 * i, 1, 3) - center_;
      const double r = d.norm();
      out.grad.block(b, 3 * i, 1, 3) = -zeta_ * d / r;
      out.laplacian(b) -= 2.0 * zeta_ / r;
    }
  }
  return out;
}

}  // namespace mgvmc
