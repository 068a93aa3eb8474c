// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mgvmc/params.hpp"

#include <algorithm>
#include <utility>

#include "mgvmc/errors.hpp"

namespace mgvmc {

ParamSlot ParamLayout::add(std::string name, Eigen::Index rows, Eigen::Index cols,
                                  SlotKind kind) {
  if (contains(name)) throw ConfigError("duplicate parameter slot '" + name + "'");
  slots_.push_back(ParamSlot{std::move(name), rows, cols, size_, kind});
  size_ += rows * cols;
  return slots_.back();
}

const ParamSlot& ParamLayout::slot(const std::string& name) const {
  auto it = std::find_if(slots_.begin(), slots_.end(),
                         [&](const ParamSlot& s) { return s.name == name; });
  if (it == slots_.end()) throw ConfigError("unknown parameter slot '" + name + "'");
  return *it;
}

bool ParamLayout::contains(const std::string& name) const {
  return std::any_of(slots_.begin(), slots_.end(),
                     [&](const ParamSlot& s) { return s.name == name; });
}

Eigen::Map<Eigen::MatrixXd> ParamLayout::view(Eigen::VectorXd& values,
                                              const std::string& name) const {
  return slot_view(values, slot(name));
}

Eigen::Map<const Eigen::MatrixXd> ParamLayout::view(const Eigen::VectorXd& values,
                                                    const std::string& name) const {
  return slot_view(std::as_const(values), slot(name));
}

}  // namespace mgvmc
