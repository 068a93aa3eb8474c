// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <deque>
#include <functional>
#include <vector>

namespace mgvmc::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Handle to a node of a Tape.
struct Var {
  int id = -1;
};

/// Walker nodes hold `rows_per_walker` rows for each of the tape's walkers, in
/// walker-major order. Shared nodes do not depend on the walker (parameters and
/// anything computed only from them).
enum class Layout { Walker, Shared };

/// Matrix-valued computation graph with two differentiation modes.
///
/// Forward: walker nodes optionally carry a jet with respect to `n_directions`
/// input coordinates: the tangent of every direction stacked vertically,
/// (n_directions * rows) x cols, and the sum of second derivatives over all
/// directions (the Laplacian). Direction q refers to coordinate q of every
/// walker at once; walkers never interact, so each walker's rows hold
/// derivatives with respect to its own coordinates.
///
/// Reverse: first-order adjoints of the values. `backward(n_blocks, ...)` returns
/// an n_blocks x n_params gradient. Walker rows map to block `row / rows_per_walker`
/// when n_blocks > 1 (per-walker gradients) and to block 0 when n_blocks == 1.
/// Shared nodes keep one adjoint block per gradient row, stacked vertically,
/// which also lets a purely shared graph pull back several cotangents at once.
class Tape {
 public:
  Tape(Index n_walkers, Index n_directions, bool record);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Index n_walkers() const { return n_walkers_; }
  Index n_directions() const { return n_directions_; }
  bool recording() const { return record_; }

  Var walker_input(Matrix value, Index rows_per_walker, Matrix tangent = {}, Matrix laplacian = {});
  Var shared_input(Matrix value);
  /// Trainable leaf whose gradient lands in columns [offset, offset + size).
  Var param(Matrix value, Index offset);

  Var linear(Var x, Var w);    // x * w^T
  Var add_bias(Var x, Var b);  // b: 1 x cols, broadcast over rows
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var tanh(Var x);
  Var concat_cols(const std::vector<Var>& parts);
  /// Rows come in consecutive groups of `group`; each output row sums rows
  /// [begin, end) of one group.
  Var group_sum(Var x, Index group, Index begin, Index end);
  /// Keeps rows [begin, end) of every group of `group` consecutive rows.
  Var group_select(Var x, Index group, Index begin, Index end);
  /// Repeats every row `times` times consecutively.
  Var repeat_rows(Var x, Index times);
  /// Output row r is row index[r] of a shared source.
  Var gather_rows(Var source, std::vector<Index> index, Layout layout, Index rows_per_walker = 0);
  /// out(r, i) = sum_m sigmoid(p(m, i)) exp(-softplus(s(m, i)) * d(r, m)).
  Var envelope(Var distances, Var p, Var s);

  struct SlaterOutput {
    Var log_abs;             // walker node, one row per walker
    std::vector<int> sign;   // -1, 0 (exact cancellation) or +1
  };
  /// log|sum_k w_k det(up_k) det(dn_k)| per walker with the sign tracked
  /// separately. Each up_k (dn_k) holds an n_up x n_up (n_dn x n_dn) block per
  /// walker, rows = electrons, columns = orbitals. `dn` may be empty when n_dn == 0.
  SlaterOutput slater_logpsi(const std::vector<Var>& up, const std::vector<Var>& dn, Var weights,
                             Index n_up, Index n_dn);

  const Matrix& value(Var v) const { return node(v).val; }
  /// Empty when the node carries no jet (derivatives are zero).
  const Matrix& tangent(Var v) const { return node(v).tan; }
  const Matrix& laplacian(Var v) const { return node(v).lap; }
  bool has_jet(Var v) const { return node(v).jet; }
  Layout layout(Var v) const { return node(v).layout; }

  /// Adds `adjoint` to the node's adjoint. Walker nodes take a value-shaped
  /// matrix; shared nodes take n_blocks stacked value-shaped blocks.
  void seed(Var v, const Matrix& adjoint);
  Matrix backward(Index n_blocks, Index n_params);

 private:
  struct Node {
    Matrix val;
    Matrix tan;
    Matrix lap;
    Matrix adj;
    bool jet = false;
    bool has_adj = false;
    bool needs_grad = false;
    Layout layout = Layout::Shared;
    Index rpw = 0;
    Index param_offset = -1;
    std::function<void()> backward;
  };

  Node& node(Var v) { return nodes_[static_cast<size_t>(v.id)]; }
  const Node& node(Var v) const { return nodes_[static_cast<size_t>(v.id)]; }
  Var push(Node n);
  Matrix& adjoint(Node& n);
  /// First row and row count of gradient block k inside a walker node.
  std::pair<Index, Index> walker_block(const Node& n, Index k) const;
  Node make_like(const Node& x) const;

  Index n_walkers_;
  Index n_directions_;
  bool record_;
  std::deque<Node> nodes_;
  // valid during backward()
  Index n_blocks_ = 1;
  Matrix* grad_ = nullptr;
};

}  // namespace mgvmc::ad
