// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <string>
#include <type_traits>
#include <vector>

namespace mgvmc {

/// Who owns the value of a wave-function parameter slot.
enum class SlotKind {
  Shared,      // trained directly
  GnnGlobal,   // emitted by the global readout of the graph network
  GnnNode,     // emitted per nucleus by the node readout (one row per nucleus)
};

struct ParamSlot {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index offset = 0;
  SlotKind kind = SlotKind::Shared;

  Eigen::Index size() const { return rows * cols; }
};

/// Ordered list of named matrix slots packed column-major into one vector.
class ParamLayout {
 public:
  ParamSlot add(std::string name, Eigen::Index rows, Eigen::Index cols,
                       SlotKind kind = SlotKind::Shared);

  const ParamSlot& slot(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<ParamSlot>& slots() const { return slots_; }
  Eigen::Index size() const { return size_; }

  Eigen::Map<Eigen::MatrixXd> view(Eigen::VectorXd& values, const std::string& name) const;
  Eigen::Map<const Eigen::MatrixXd> view(const Eigen::VectorXd& values,
                                         const std::string& name) const;

 private:
  std::vector<ParamSlot> slots_;
  Eigen::Index size_ = 0;
};

template <typename Vec>
auto slot_view(Vec& values, const ParamSlot& s) {
  using Scalar = std::remove_const_t<typename std::remove_reference_t<Vec>::Scalar>;
  if constexpr (std::is_const_v<Vec>) {
    return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>(
        values.data() + s.offset, s.rows, s.cols);
  } else {
    return Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>(
        values.data() + s.offset, s.rows, s.cols);
  }
}

}  // namespace mgvmc
