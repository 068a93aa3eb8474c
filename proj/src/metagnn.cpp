// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mgvmc/metagnn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mgvmc/errors.hpp"

namespace mgvmc {

using ad::Tape;
using ad::Var;
using Eigen::Index;
using Eigen::MatrixXd;

const MatrixXd& ParameterAssignment::operator[](const std::string& name) const {
  for (size_t i = 0; i < slots.size(); ++i) {
    if (slots[i]->name == name) return values[i];
  }
  throw ConfigError("no generated slot named '" + name + "'");
}

void ParameterAssignment::apply(Eigen::VectorXd& wf_params) const {
  for (size_t i = 0; i < slots.size(); ++i) slot_view(wf_params, *slots[i]) = values[i];
}

MetaGnn::MetaGnn(GnnConfig config, const WaveFunctionModel& model)
    : config_(std::move(config)),
      model_(&model),
      basis_(config_.n_sbf, config_.n_rbf, config_.length_scale) {
  if (config_.embedding_dim < 1 || config_.message_dim < 1 || config_.n_steps < 1 || config_.mlp_depth < 1) {
    throw ConfigError("graph network sizes must be positive");
  }
  if (config_.charges.empty()) throw ConfigError("charge table is empty");
  std::sort(config_.charges.begin(), config_.charges.end());
  config_.charges.erase(std::unique(config_.charges.begin(), config_.charges.end()), config_.charges.end());

  const Index e = config_.embedding_dim;
  const Index first = e + config_.n_sbf * config_.n_rbf;
  layout_.add("charges", static_cast<Index>(config_.charges.size()), e);
  for (int t = 1; t <= config_.n_steps; ++t) {
    const Index dl = t == 1 ? first : e;
    add_mlp("msg" + std::to_string(t), 2 * dl + config_.n_rbf, config_.message_dim);
    add_mlp("upd" + std::to_string(t), dl + config_.message_dim, e);
  }
  const Index readout = e * config_.n_steps;
  if (config_.mlp_depth > 1) {
    add_mlp("node", readout, e);
    add_mlp("global", readout, e);
  }
  const Index trunk = config_.mlp_depth > 1 ? e : readout;
  for (const auto& slot : model.layout().slots()) {
    if (slot.kind == SlotKind::Shared) continue;
    if (slot.kind == SlotKind::GnnGlobal && slot.rows != 1) {
      throw ConfigError("global slot '" + slot.name + "' must be a row vector");
    }
    (slot.kind == SlotKind::GnnGlobal ? global_slots_ : node_slots_).push_back(&slot);
    layout_.add("head." + slot.name + ".w", slot.cols, trunk);
    head_biases_.push_back(layout_.add("head." + slot.name + ".b", 1, slot.cols).offset);
  }
}

void MetaGnn::add_mlp(const std::string& prefix, Index in, Index hidden) {
  const int layers = std::max(1, config_.mlp_depth - (prefix == "node" || prefix == "global" ? 1 : 0));
  for (int j = 1; j <= layers; ++j) {
    layout_.add(prefix + ".w" + std::to_string(j), hidden, j == 1 ? in : hidden);
    layout_.add(prefix + ".b" + std::to_string(j), 1, hidden);
  }
}

Var MetaGnn::mlp(Tape& tape, Var x, const std::string& prefix, const Eigen::VectorXd& params) const {
  for (int j = 1; layout_.contains(prefix + ".w" + std::to_string(j)); ++j) {
    const ParamSlot& w = layout_.slot(prefix + ".w" + std::to_string(j));
    const ParamSlot& b = layout_.slot(prefix + ".b" + std::to_string(j));
    Var y = tape.tanh(tape.add_bias(tape.linear(x, tape.param(slot_view(params, w), w.offset)),
                                    tape.param(slot_view(params, b), b.offset)));
    x = tape.value(y).cols() == tape.value(x).cols() ? tape.add(y, x) : y;
  }
  return x;
}

Eigen::VectorXd MetaGnn::initial_params(std::mt19937_64& rng) const {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(layout_.size());
  std::normal_distribution<double> n01(0.0, 1.0);
  for (const auto& slot : layout_.slots()) {
    auto view = slot_view(theta, slot);
    const bool head = slot.name.rfind("head.", 0) == 0;
    const bool bias = slot.name[slot.name.rfind('.') + 1] == 'b';
    if (slot.name == "charges") {
      for (Index i = 0; i < view.size(); ++i) view(i) = n01(rng);
    } else if (head && bias) {
      const std::string target = slot.name.substr(5, slot.name.size() - 7);
      view = model_->initial_value(model_->layout().slot(target)).row(0);
    } else if (!bias || head) {
      const double scale = (head ? config_.head_scale : 1.0) / std::sqrt(static_cast<double>(slot.cols));
      for (Index j = 0; j < slot.cols; ++j) {
        for (Index i = 0; i < slot.rows; ++i) view(i, j) = scale * n01(rng);
      }
    }
  }
  return theta;
}

std::vector<Index> MetaGnn::head_bias_indices() const {
  std::vector<Index> out;
  for (const auto& slot : layout_.slots()) {
    if (std::find(head_biases_.begin(), head_biases_.end(), slot.offset) == head_biases_.end()) continue;
    for (Index i = 0; i < slot.size(); ++i) out.push_back(slot.offset + i);
  }
  return out;
}

Index MetaGnn::charge_row(int charge) const {
  auto it = std::lower_bound(config_.charges.begin(), config_.charges.end(), charge);
  if (it == config_.charges.end() || *it != charge) {
    throw ConfigError("nuclear charge " + std::to_string(charge) + " is not in the charge table");
  }
  return it - config_.charges.begin();
}

MatrixXd MetaGnn::initial_embeddings(const MolecularConfiguration& config, const EquivariantFrame& frame,
                                     const Eigen::VectorXd& params) const {
  const Index m_count = config.n_nuclei();
  const auto table = layout_.view(params, "charges");
  MatrixXd out(m_count, config_.embedding_dim + config_.n_sbf * config_.n_rbf);
  for (Index m = 0; m < m_count; ++m) {
    out.row(m) << table.row(charge_row(config.charges[m])),
        basis_.positional_encoding(frame.to_frame(config.positions.row(m)));
  }
  return out;
}

MetaGnn::Graph MetaGnn::build(Tape& tape, const MolecularConfiguration& config, const EquivariantFrame& frame,
                              const Eigen::VectorXd& params) const {
  if (params.size() != layout_.size()) throw ConfigError("graph network parameter vector has the wrong length");
  if (config.n_nuclei() != model_->n_nuclei()) {
    throw ConfigError("geometry has " + std::to_string(config.n_nuclei()) + " nuclei, model expects " +
                      std::to_string(model_->n_nuclei()));
  }
  const Index m_count = config.n_nuclei();
  const auto order = canonical_order(config);

  std::vector<Index> charge_rows;
  MatrixXd fpos(m_count, config_.n_sbf * config_.n_rbf);
  for (Index mc = 0; mc < m_count; ++mc) {
    const Index m = order[mc];
    charge_rows.push_back(charge_row(config.charges[m]));
    fpos.row(mc) = basis_.positional_encoding(frame.to_frame(config.positions.row(m)));
  }
  const ParamSlot& charges = layout_.slot("charges");
  Var l = tape.concat_cols({tape.gather_rows(tape.param(slot_view(params, charges), charges.offset),
                                             std::move(charge_rows), ad::Layout::Shared),
                            tape.shared_input(std::move(fpos))});

  std::vector<Index> src, dst;
  MatrixXd edges(m_count * (m_count - 1), config_.n_rbf);
  for (Index mc = 0; mc < m_count; ++mc) {
    for (Index nc = 0; nc < m_count; ++nc) {
      if (nc == mc) continue;
      edges.row(static_cast<Index>(src.size())) =
          basis_.radial((config.positions.row(order[mc]) - config.positions.row(order[nc])).norm());
      src.push_back(mc);
      dst.push_back(nc);
    }
  }

  std::vector<Var> readout;
  for (int t = 1; t <= config_.n_steps; ++t) {
    Var agg;
    if (m_count > 1) {
      Var msg_in = tape.concat_cols({tape.gather_rows(l, src, ad::Layout::Shared),
                                     tape.gather_rows(l, dst, ad::Layout::Shared), tape.shared_input(edges)});
      agg = tape.group_sum(mlp(tape, msg_in, "msg" + std::to_string(t), params), m_count - 1, 0, m_count - 1);
    } else {
      agg = tape.shared_input(MatrixXd::Zero(1, config_.message_dim));
    }
    Var u = mlp(tape, tape.concat_cols({l, agg}), "upd" + std::to_string(t), params);
    l = tape.value(u).cols() == tape.value(l).cols() ? tape.add(u, l) : u;
    readout.push_back(l);
  }
  Var features = tape.concat_cols(readout);
  Var node_trunk = mlp(tape, features, "node", params);
  Var global_trunk = mlp(tape, tape.group_sum(features, m_count, 0, m_count), "global", params);

  std::vector<Index> to_input(static_cast<size_t>(m_count));
  for (Index mc = 0; mc < m_count; ++mc) to_input[order[mc]] = mc;

  Graph graph;
  for (const auto& slot : model_->layout().slots()) {
    if (slot.kind == SlotKind::Shared) continue;
    const ParamSlot& w = layout_.slot("head." + slot.name + ".w");
    const ParamSlot& b = layout_.slot("head." + slot.name + ".b");
    Var trunk = slot.kind == SlotKind::GnnGlobal ? global_trunk : node_trunk;
    Var out = tape.add_bias(tape.linear(trunk, tape.param(slot_view(params, w), w.offset)),
                            tape.param(slot_view(params, b), b.offset));
    if (slot.kind == SlotKind::GnnNode) out = tape.gather_rows(out, to_input, ad::Layout::Shared);
    graph.slots.push_back(&slot);
    graph.outputs.push_back(out);
  }
  return graph;
}

ParameterAssignment MetaGnn::generate(const MolecularConfiguration& config, const EquivariantFrame& frame,
                                      const Eigen::VectorXd& params) const {
  Tape tape(0, 0, false);
  Graph graph = build(tape, config, frame, params);
  ParameterAssignment out;
  out.slots = graph.slots;
  for (Var v : graph.outputs) out.values.push_back(tape.value(v));
  return out;
}

MatrixXd MetaGnn::pullback(const MolecularConfiguration& config, const EquivariantFrame& frame,
                           const Eigen::VectorXd& params, const MatrixXd& wf_cotangents) const {
  const Index s_count = wf_cotangents.rows();
  Tape tape(0, 0, true);
  Graph graph = build(tape, config, frame, params);
  for (size_t k = 0; k < graph.slots.size(); ++k) {
    const ParamSlot& slot = *graph.slots[k];
    MatrixXd seed(s_count * slot.rows, slot.cols);
    for (Index s = 0; s < s_count; ++s) {
      const Eigen::RowVectorXd row = wf_cotangents.row(s).segment(slot.offset, slot.size());
      seed.middleRows(s * slot.rows, slot.rows) = Eigen::Map<const MatrixXd>(row.data(), slot.rows, slot.cols);
    }
    tape.seed(graph.outputs[k], seed);
  }
  return tape.backward(s_count, layout_.size());
}

}  // namespace mgvmc
