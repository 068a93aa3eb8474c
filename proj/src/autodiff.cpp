// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mgvmc/autodiff.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>

namespace mgvmc::ad {

namespace {

Matrix rep(const Matrix& m, Index times) {
  if (times == 1) return m;
  return m.replicate(times, 1);
}

// Sum over directions of a stacked tangent: (D*rows) x cols -> rows x cols.
Matrix direction_sum(const Matrix& stacked, Index directions, Index rows) {
  Matrix out = Matrix::Zero(rows, stacked.cols());
  for (Index q = 0; q < directions; ++q) out += stacked.middleRows(q * rows, rows);
  return out;
}

Matrix group_sum_rows(const Matrix& m, Index group, Index begin, Index end) {
  const Index n = m.rows() / group;
  Matrix out = Matrix::Zero(n, m.cols());
  for (Index g = 0; g < n; ++g) {
    for (Index r = begin; r < end; ++r) out.row(g) += m.row(g * group + r);
  }
  return out;
}

void group_sum_adjoint(Matrix& dx, const Matrix& dy, Index group, Index begin, Index end) {
  for (Index g = 0; g < dy.rows(); ++g) {
    for (Index r = begin; r < end; ++r) dx.row(g * group + r) += dy.row(g);
  }
}

Matrix group_select_rows(const Matrix& m, Index group, Index begin, Index end) {
  const Index n = m.rows() / group;
  const Index count = end - begin;
  Matrix out(n * count, m.cols());
  for (Index g = 0; g < n; ++g) out.middleRows(g * count, count) = m.middleRows(g * group + begin, count);
  return out;
}

Matrix repeat_each_row(const Matrix& m, Index times) {
  Matrix out(m.rows() * times, m.cols());
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index t = 0; t < times; ++t) out.row(r * times + t) = m.row(r);
  }
  return out;
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void require(bool ok, const char* what) {
  if (!ok) throw std::logic_error(std::string("tape: ") + what);
}

}  // namespace

Tape::Tape(Index n_walkers, Index n_directions, bool record)
    : n_walkers_(n_walkers), n_directions_(n_directions), record_(record) {}

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Node Tape::make_like(const Node& x) const {
  Node n;
  n.layout = x.layout;
  n.rpw = x.rpw;
  return n;
}

Matrix& Tape::adjoint(Node& n) {
  if (!n.has_adj) {
    const Index rows = n.layout == Layout::Walker ? n.val.rows() : n_blocks_ * n.val.rows();
    n.adj = Matrix::Zero(rows, n.val.cols());
    n.has_adj = true;
  }
  return n.adj;
}

std::pair<Index, Index> Tape::walker_block(const Node& n, Index k) const {
  if (n_blocks_ == 1) return {0, n.val.rows()};
  return {k * n.rpw, n.rpw};
}

Var Tape::walker_input(Matrix value, Index rows_per_walker, Matrix tangent, Matrix laplacian) {
  require(value.rows() == n_walkers_ * rows_per_walker, "walker input row count");
  Node n;
  n.layout = Layout::Walker;
  n.rpw = rows_per_walker;
  if (tangent.size() > 0 && n_directions_ > 0) {
    require(tangent.rows() == n_directions_ * value.rows() && tangent.cols() == value.cols(),
            "walker input tangent shape");
    require(laplacian.rows() == value.rows() && laplacian.cols() == value.cols(),
            "walker input laplacian shape");
    n.tan = std::move(tangent);
    n.lap = std::move(laplacian);
    n.jet = true;
  }
  n.val = std::move(value);
  return push(std::move(n));
}

Var Tape::shared_input(Matrix value) {
  Node n;
  n.val = std::move(value);
  return push(std::move(n));
}

Var Tape::param(Matrix value, Index offset) {
  Node n;
  n.val = std::move(value);
  n.needs_grad = true;
  n.param_offset = offset;
  Var y = push(std::move(n));
  if (record_) {
    node(y).backward = [this, y] {
      Node& Y = node(y);
      const Index r = Y.val.rows();
      const Index size = Y.val.size();
      for (Index k = 0; k < n_blocks_; ++k) {
        const Matrix block = Y.adj.middleRows(k * r, r);
        grad_->row(k).segment(Y.param_offset, size) +=
            Eigen::Map<const Eigen::RowVectorXd>(block.data(), size);
      }
    };
  }
  return y;
}

Var Tape::linear(Var x, Var w) {
  const Node& X = node(x);
  const Node& W = node(w);
  require(W.layout == Layout::Shared, "linear weight must be shared");
  require(X.val.cols() == W.val.cols(), "linear shape mismatch");
  Node out = make_like(X);
  out.val.noalias() = X.val * W.val.transpose();
  if (X.jet) {
    out.tan.noalias() = X.tan * W.val.transpose();
    out.lap.noalias() = X.lap * W.val.transpose();
    out.jet = true;
  }
  out.needs_grad = X.needs_grad || W.needs_grad;
  Var y = push(std::move(out));
  if (record_ && node(y).needs_grad) {
    node(y).backward = [this, x, w, y] {
      Node& X = node(x);
      Node& W = node(w);
      const Matrix& dy = node(y).adj;
      if (X.needs_grad) adjoint(X).noalias() += dy * W.val;
      if (W.needs_grad) {
        Matrix& dw = adjoint(W);
        const Index o = W.val.rows();
        for (Index k = 0; k < n_blocks_; ++k) {
          if (X.layout == Layout::Walker) {
            const auto [s, c] = walker_block(X, k);
            dw.middleRows(k * o, o).noalias() += dy.middleRows(s, c).transpose() * X.val.middleRows(s, c);
          } else {
            const Index r = X.val.rows();
            dw.middleRows(k * o, o).noalias() += dy.middleRows(k * r, r).transpose() * X.val;
          }
        }
      }
    };
  }
  return y;
}

Var Tape::add_bias(Var x, Var b) {
  const Node& X = node(x);
  const Node& Bn = node(b);
  require(Bn.layout == Layout::Shared && Bn.val.rows() == 1 && Bn.val.cols() == X.val.cols(),
          "bias shape");
  Node out = make_like(X);
  out.val = X.val.rowwise() + Bn.val.row(0);
  if (X.jet) {
    out.tan = X.tan;
    out.lap = X.lap;
    out.jet = true;
  }
  out.needs_grad = X.needs_grad || Bn.needs_grad;
  Var y = push(std::move(out));
  if (record_ && node(y).needs_grad) {
    node(y).backward = [this, x, b, y] {
      Node& X = node(x);
      Node& Bn = node(b);
      const Matrix& dy = node(y).adj;
      if (X.needs_grad) adjoint(X) += dy;
      if (Bn.needs_grad) {
        Matrix& db = adjoint(Bn);
        for (Index k = 0; k < n_blocks_; ++k) {
          if (X.layout == Layout::Walker) {
            const auto [s, c] = walker_block(X, k);
            db.row(k) += dy.middleRows(s, c).colwise().sum();
          } else {
            const Index r = X.val.rows();
            db.row(k) += dy.middleRows(k * r, r).colwise().sum();
          }
        }
      }
    };
  }
  return y;
}

Var Tape::add(Var a, Var b) {
  const Node& A = node(a);
  const Node& Bn = node(b);
  require(A.layout == Bn.layout && A.val.rows() == Bn.val.rows() && A.val.cols() == Bn.val.cols(),
          "add shape mismatch");
  Node out = make_like(A);
  out.val = A.val + Bn.val;
  if (A.jet && Bn.jet) {
    out.tan = A.tan + Bn.tan;
    out.lap = A.lap + Bn.lap;
  } else if (A.jet) {
    out.tan = A.tan;
    out.lap = A.lap;
  } else if (Bn.jet) {
    out.tan = Bn.tan;
    out.lap = Bn.lap;
  }
  out.jet = A.jet || Bn.jet;
  out.needs_grad = A.needs_grad || Bn.needs_grad;
  Var y = push(std::move(out));
  if (record_ && node(y).needs_grad) {
    node(y).backward = [this, a, b, y] {
      const Matrix& dy = node(y).adj;
      if (node(a).needs_grad) adjoint(node(a)) += dy;
      if (node(b).needs_grad) adjoint(node(b)) += dy;
    };
  }
  return y;
}

Var Tape::mul(Var a, Var b) {
  const Node& A = node(a);
  const Node& Bn = node(b);
  require(A.layout == Bn.layout && A.val.rows() == Bn.val.rows() && A.val.cols() == Bn.val.cols(),
          "mul shape mismatch");
  Node out = make_like(A);
  out.val = A.val.cwiseProduct(Bn.val);
  const Index d = n_directions_;
  if (A.jet || Bn.jet) {
    const Index r = A.val.rows();
    out.tan = Matrix::Zero(d * r, A.val.cols());
    out.lap = Matrix::Zero(r, A.val.cols());
    if (A.jet) {
      out.tan += A.tan.cwiseProduct(rep(Bn.val, d));
      out.lap += A.lap.cwiseProduct(Bn.val);
    }
    if (Bn.jet) {
      out.tan += Bn.tan.cwiseProduct(rep(A.val, d));
      out.lap += Bn.lap.cwiseProduct(A.val);
    }
    if (A.jet && Bn.jet) out.lap += 2.0 * direction_sum(A.tan.cwiseProduct(Bn.tan), d, r);
    out.jet = true;
  }
  out.needs_grad = A.needs_grad || Bn.needs_grad;
  Var y = push(std::move(out));
  if (record_ && node(y).needs_grad) {
    node(y).backward = [this, a, b, y] {
      Node& A = node(a);
      Node& Bn = node(b);
      const Matrix& dy = node(y).adj;
      const Index times = A.layout == Layout::Walker ? 1 : n_blocks_;
      if (A.needs_grad) adjoint(A) += dy.cwiseProduct(rep(Bn.val, times));
      if (Bn.needs_grad) adjoint(Bn) += dy.cwiseProduct(rep(A.val, times));
    };
  }
  return y;
}

Var Tape::tanh(Var x) {
  const Node& X = node(x);
  Node out = make_like(X);
  out.val = X.val.array().tanh().matrix();
  if (X.jet) {
    const Index d = n_directions_;
    const Index r = X.val.rows();
    const Matrix d1 = (1.0 - out.val.array().square()).matrix();
    const Matrix d2 = (-2.0 * out.val.array() * d1.array()).matrix();
    out.tan = X.tan.cwiseProduct(rep(d1, d));
    out.lap = X.lap.cwiseProduct(d1) +
              d2.cwiseProduct(direction_sum(X.tan.cwiseAbs2(), d, r));
    out.jet = true;
  }
  out.needs_grad = X.needs_grad;
  Var y = push(std::move(out));
  if (record_ && node(y).needs_grad) {
    node(y).backward = [this, x, y] {
      Node& X = node(x);
      const Node& Y = node(y);
      const Index times = X.layout == Layout::Walker ? 1 : n_blocks_;
      const Matrix d1 = (1.0 - Y.val.array().square()).matrix();
      adjoint(X) += Y.adj.cwiseProduct(rep(d1, times));
    };
  }
  return y;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat of nothing");
  const Node& first = node(parts.front());
  const Index r = first.val.rows();
  Index cols = 0;
  bool jet = false;
  bool needs_grad = false;
  for (Var p : parts) {
    const Node& P = node(p);
    require(P.layout == first.layout && P.val.rows() == r, "concat row mismatch");
    cols += P.val.cols();
    jet = jet || P.jet;
    needs_grad = needs_grad || P.needs_grad;
  }
  Node out = make_like(first);
  out.val.resize(r, cols);
  if (jet) {
    out.tan = Matrix::Zero(n_directions_ * r, cols);
    out.lap = Matrix::Zero(r, cols);
    out.jet = true;
  }
  Index c = 0;
  for (Var p : parts) {
    const Node& P = node(p);
    const Index pc = P.val.cols();
    out.val.middleCols(c, pc) = P.val;
    if (P.jet) {
      out.tan.middleCols(c, pc) = P.tan;
      out.lap.middleCols(c, pc) = P.lap;
    }
    c += pc;
  }
  out.needs_grad = needs_grad;
  Var y = push(std::move(out));
  if (record_ && needs_grad) {
    node(y).backward = [this, parts, y] {
      const Matrix& dy = node(y).adj;
      Index c = 0;
      for (Var p : parts) {
        Node& P = node(p);
        const Index pc = P.val.cols();
        if (P.needs_grad) adjoint(P) += dy.middleCols(c, pc);
        c += pc;
      }
    };
  }
  return y;
}

Var Tape::group_sum(Var x, Index group, Index begin, Index end) {
  const Node& X = node(x);
  require(group > 0 && 0 <= begin && begin <= end && end <= group, "group range");
  require(X.val.rows() % group == 0, "rows not divisible by group");
  Node out = make_like(X);
  if (X.layout == Layout::Walker) {
    require(X.rpw % group == 0, "group straddles walkers");
    out.rpw = X.rpw / group;
  }
  out.val = group_sum_rows(X.val, group, begin, end);
  if (X.jet) {
    out.tan = group_sum_rows(X.tan, group, begin, end);
    out.lap = group_sum_rows(X.lap, group, begin, end);
    out.jet = true;
  }
  out.needs_grad = X.needs_grad;
  Var y = push(std::move(out));
  if (record_ && node(y).needs_grad) {
    node(y).backward = [this, x, y, group, begin, end] {
      group_sum_adjoint(adjoint(node(x)), node(y).adj, group, begin, end);
    };
  }
  return y;
}

Var Tape::group_select(Var x, Index group, Index begin, Index end) {
  const Node& X = node(x);
  require(group > 0 && 0 <= begin && begin <= end && end <= group, "group range");
  require(X.val.rows() % group == 0, "rows not divisible by group");
  Node out = make_like(X);
  if (X.layout == Layout::Walker) {
    require(X.rpw % group == 0, "group straddles walkers");
    out.rpw = X.rpw / group * (end - begin);
  }
  out.val = group_select_rows(X.val, group, begin, end);
  if (X.jet) {
    out.tan = group_select_rows(X.tan, group, begin, end);
    out.lap = group_select_rows(X.lap, group, begin, end);
    out.jet = true;
  }
  out.needs_grad = X.needs_grad;
  Var y = push(std::move(out));
  if (record_ && node(y).needs_grad) {
    node(y).backward = [this, x, y, group, begin, end] {
      Matrix& dx = adjoint(node(x));
      const Matrix& dy = node(y).adj;
      const Index count = end - begin;
      const Index n = dy.rows() / std::max<Index>(count, 1);
      for (Index g = 0; g < n && count > 0; ++g) {
        dx.middleRows(g * group + begin, count) += dy.middleRows(g * count, count);
      }
    };
  }
  return y;
}

Var Tape::repeat_rows(Var x, Index times) {
  const Node& X = node(x);
  require(times > 0, "repeat count");
  Node out = make_like(X);
  out.rpw = X.rpw * times;
  out.val = repeat_each_row(X.val, times);
  if (X.jet) {
    out.tan = repeat_each_row(X.tan, times);
    out.lap = repeat_each_row(X.lap, times);
    out.jet = true;
  }
  out.needs_grad = X.needs_grad;
  Var y = push(std::move(out));
  if (record_ && node(y).needs_grad) {
    node(y).backward = [this, x, y, times] {
      Matrix& dx = adjoint(node(x));
      const Matrix& dy = node(y).adj;
      for (Index r = 0; r < dx.rows(); ++r) {
        for (Index t = 0; t < times; ++t) dx.row(r) += dy.row(r * times + t);
      }
    };
  }
  return y;
}

Var Tape::gather_rows(Var source, std::vector<Index> index, Layout layout, Index rows_per_walker) {
  const Node& S = node(source);
  require(S.layout == Layout::Shared, "gather source must be shared");
  const Index n = static_cast<Index>(index.size());
  Node out;
  out.layout = layout;
  if (layout == Layout::Walker) {
    require(n == n_walkers_ * rows_per_walker, "gather walker row count");
    out.rpw = rows_per_walker;
  }
  out.val.resize(n, S.val.cols());
  for (Index r = 0; r < n; ++r) {
    require(index[r] >= 0 && index[r] < S.val.rows(), "gather index out of range");
    out.val.row(r) = S.val.row(index[r]);
  }
  out.needs_grad = S.needs_grad;
  Var y = push(std::move(out));
  if (record_ && node(y).needs_grad) {
    node(y).backward = [this, source, y, idx = std::move(index)] {
      Node& S = node(source);
      const Node& Y = node(y);
      Matrix& ds = adjoint(S);
      const Index sr = S.val.rows();
      const Index n = static_cast<Index>(idx.size());
      for (Index k = 0; k < n_blocks_; ++k) {
        if (Y.layout == Layout::Walker) {
          const auto [s, c] = walker_block(Y, k);
          for (Index r = s; r < s + c; ++r) ds.row(k * sr + idx[r]) += Y.adj.row(r);
        } else {
          for (Index r = 0; r < n; ++r) ds.row(k * sr + idx[r]) += Y.adj.row(k * n + r);
        }
      }
    };
  }
  return y;
}

Var Tape::envelope(Var distances, Var p, Var s) {
  const Node& Dn = node(distances);
  const Node& P = node(p);
  const Node& Sn = node(s);
  require(Dn.layout == Layout::Walker, "envelope distances must be walker rows");
  require(P.layout == Layout::Shared && Sn.layout == Layout::Shared, "envelope parameters must be shared");
  require(!(record_ && Dn.needs_grad), "envelope distances cannot be differentiated in reverse mode");
  const Index r = Dn.val.rows();
  const Index m = Dn.val.cols();
  const Index n = P.val.cols();
  require(P.val.rows() == m && Sn.val.rows() == m && Sn.val.cols() == n, "envelope shape");

  const Matrix pi = P.val.unaryExpr([](double v) { return sigmoid(v); });
  const Matrix sigma = Sn.val.unaryExpr([](double v) { return softplus(v); });
  auto decay = std::make_shared<std::vector<Matrix>>();
  decay->reserve(static_cast<size_t>(m));

  Node out = make_like(Dn);
  out.val = Matrix::Zero(r, n);
  const Index d = n_directions_;
  if (Dn.jet) {
    out.tan = Matrix::Zero(d * r, n);
    out.lap = Matrix::Zero(r, n);
    out.jet = true;
  }
  for (Index mm = 0; mm < m; ++mm) {
    Matrix e = (-(Dn.val.col(mm) * sigma.row(mm))).array().exp().matrix();
    out.val.array() += e.array().rowwise() * pi.row(mm).array();
    if (Dn.jet) {
      const Eigen::RowVectorXd ps = pi.row(mm).cwiseProduct(sigma.row(mm));
      const Eigen::RowVectorXd pss = ps.cwiseProduct(sigma.row(mm));
      out.tan.array() -= rep(e, d).array() * (Dn.tan.col(mm) * ps).array();
      Eigen::VectorXd sumsq = Eigen::VectorXd::Zero(r);
      for (Index q = 0; q < d; ++q) sumsq += Dn.tan.col(mm).segment(q * r, r).cwiseAbs2();
      out.lap.array() += e.array() * (sumsq * pss - Dn.lap.col(mm) * ps).array();
    }
    if (record_) decay->push_back(std::move(e));
  }
  out.needs_grad = P.needs_grad || Sn.needs_grad;
  Var y = push(std::move(out));
  if (record_ && node(y).needs_grad) {
    node(y).backward = [this, distances, p, s, y, decay, pi] {
      const Node& Dn = node(distances);
      Node& P = node(p);
      Node& Sn = node(s);
      const Node& Y = node(y);
      const Index m = P.val.rows();
      Matrix* dp = P.needs_grad ? &adjoint(P) : nullptr;
      Matrix* ds = Sn.needs_grad ? &adjoint(Sn) : nullptr;
      for (Index k = 0; k < n_blocks_; ++k) {
        const auto [st, c] = walker_block(Y, k);
        for (Index mm = 0; mm < m; ++mm) {
          const Matrix weighted = Y.adj.middleRows(st, c).cwiseProduct((*decay)[mm].middleRows(st, c));
          if (dp) {
            const Eigen::RowVectorXd dpi = weighted.colwise().sum();
            dp->row(k * m + mm) += dpi.cwiseProduct(pi.row(mm)).cwiseProduct(
                (1.0 - pi.row(mm).array()).matrix());
          }
          if (ds) {
            const Eigen::RowVectorXd dsig =
                -(Dn.val.col(mm).segment(st, c).transpose() * weighted).cwiseProduct(pi.row(mm));
            const Eigen::RowVectorXd sg = Sn.val.row(mm).unaryExpr([](double v) { return sigmoid(v); });
            ds->row(k * m + mm) += dsig.cwiseProduct(sg);
          }
        }
      }
    };
  }
  return y;
}

namespace {

struct LuResult {
  double log_abs = 0.0;
  int sign = 1;  // 0 when singular
  Matrix inverse;
};

LuResult factorize(const Eigen::Ref<const Matrix>& a, bool want_inverse) {
  LuResult out;
  if (a.rows() == 0) return out;
  Eigen::PartialPivLU<Matrix> lu(a);
  const auto diag = lu.matrixLU().diagonal();
  int sign = static_cast<int>(lu.permutationP().determinant());
  for (Index i = 0; i < diag.size(); ++i) {
    const double v = diag(i);
    if (v == 0.0 || !std::isfinite(v)) {
      out.sign = 0;
      out.log_abs = -std::numeric_limits<double>::infinity();
      return out;
    }
    if (v < 0.0) sign = -sign;
    out.log_abs += std::log(std::abs(v));
  }
  out.sign = sign;
  if (want_inverse) out.inverse = lu.inverse();
  return out;
}

}  // namespace

Tape::SlaterOutput Tape::slater_logpsi(const std::vector<Var>& up, const std::vector<Var>& dn,
                                       Var weights, Index n_up, Index n_dn) {
  const Index kdets = static_cast<Index>(up.size());
  const Index b_count = n_walkers_;
  const Node& Wn = node(weights);
  require(kdets > 0, "no determinants");
  require(Wn.layout == Layout::Shared && Wn.val.rows() == 1 && Wn.val.cols() == kdets,
          "determinant weight shape");
  require(n_dn == 0 ? dn.empty() : static_cast<Index>(dn.size()) == kdets, "spin-down block count");
  for (Var u : up) {
    require(node(u).layout == Layout::Walker && node(u).val.rows() == b_count * n_up &&
                node(u).val.cols() == n_up,
            "spin-up block shape");
  }
  for (Var v : dn) {
    require(node(v).layout == Layout::Walker && node(v).val.rows() == b_count * n_dn &&
                node(v).val.cols() == n_dn,
            "spin-down block shape");
  }

  bool jet = false;
  bool needs_grad = Wn.needs_grad;
  for (Var u : up) { jet = jet || node(u).jet; needs_grad = needs_grad || node(u).needs_grad; }
  for (Var v : dn) { jet = jet || node(v).jet; needs_grad = needs_grad || node(v).needs_grad; }
  const bool keep = record_ && needs_grad;
  const Index d = n_directions_;

  struct Saved {
    // [k * B + b]
    std::vector<Matrix> inv_up, inv_dn;
    Matrix log_det;   // B x K
    Eigen::MatrixXi sign;
    Eigen::VectorXd shift, total;
  };
  auto saved = std::make_shared<Saved>();
  saved->log_det.resize(b_count, kdets);
  saved->sign.resize(b_count, kdets);
  saved->shift.resize(b_count);
  saved->total.resize(b_count);
  if (keep) {
    saved->inv_up.resize(static_cast<size_t>(kdets * b_count));
    saved->inv_dn.resize(static_cast<size_t>(kdets * b_count));
  }

  Node out;
  out.layout = Layout::Walker;
  out.rpw = 1;
  out.val.resize(b_count, 1);
  if (jet) {
    out.tan = Matrix::Zero(d * b_count, 1);
    out.lap = Matrix::Zero(b_count, 1);
    out.jet = true;
  }
  SlaterOutput result;
  result.sign.assign(static_cast<size_t>(b_count), 0);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  const bool want_inverse = jet || keep;
  std::vector<Matrix> grad_l(static_cast<size_t>(kdets));
  Eigen::VectorXd lap_l(kdets);

  for (Index b = 0; b < b_count; ++b) {
    double shift = -std::numeric_limits<double>::infinity();
    for (Index k = 0; k < kdets; ++k) {
      const Node& U = node(up[k]);
      LuResult fu = factorize(U.val.middleRows(b * n_up, n_up), want_inverse);
      LuResult fd;
      if (n_dn > 0) fd = factorize(node(dn[k]).val.middleRows(b * n_dn, n_dn), want_inverse);
      const int sg = fu.sign * fd.sign;
      saved->sign(b, k) = sg;
      saved->log_det(b, k) = sg == 0 ? -std::numeric_limits<double>::infinity() : fu.log_abs + fd.log_abs;
      if (sg != 0) shift = std::max(shift, saved->log_det(b, k));

      if (jet && sg != 0) {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
        double lap = 0.0;
        auto accumulate = [&](const Node& A, const Matrix& inv, Index n) {
          if (!A.jet || n == 0) return;
          const Index rows = A.val.rows();
          const Matrix inv_t = inv.transpose();
          lap += inv_t.cwiseProduct(A.lap.middleRows(b * n, n)).sum();
          for (Index q = 0; q < d; ++q) {
            const auto aq = A.tan.middleRows(q * rows + b * n, n);
            g(q) += inv_t.cwiseProduct(aq).sum();
            const Matrix mq = inv * aq;
            lap -= mq.cwiseProduct(mq.transpose()).sum();
          }
        };
        accumulate(U, fu.inverse, n_up);
        if (n_dn > 0) accumulate(node(dn[k]), fd.inverse, n_dn);
        grad_l[k] = std::move(g);
        lap_l(k) = lap;
      }
      if (keep && sg != 0) {
        saved->inv_up[k * b_count + b] = std::move(fu.inverse);
        if (n_dn > 0) saved->inv_dn[k * b_count + b] = std::move(fd.inverse);
      }
    }

    double total = 0.0;
    if (std::isfinite(shift)) {
      for (Index k = 0; k < kdets; ++k) {
        if (saved->sign(b, k) == 0) continue;
        total += Wn.val(0, k) * saved->sign(b, k) * std::exp(saved->log_det(b, k) - shift);
      }
    }
    saved->shift(b) = shift;
    saved->total(b) = total;
    if (total == 0.0 || !std::isfinite(total)) {
      out.val(b, 0) = -std::numeric_limits<double>::infinity();
      result.sign[b] = 0;
      if (jet) {
        for (Index q = 0; q < d; ++q) out.tan(q * b_count + b, 0) = nan;
        out.lap(b, 0) = nan;
      }
      continue;
    }
    out.val(b, 0) = shift + std::log(std::abs(total));
    result.sign[b] = total > 0.0 ? 1 : -1;
    if (jet) {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
      double lap = 0.0;
      for (Index k = 0; k < kdets; ++k) {
        if (saved->sign(b, k) == 0) continue;
        const double pk = Wn.val(0, k) * saved->sign(b, k) * std::exp(saved->log_det(b, k) - shift) / total;
        g += pk * grad_l[k];
        lap += pk * (lap_l(k) + grad_l[k].squaredNorm());
      }
      lap -= g.squaredNorm();
      for (Index q = 0; q < d; ++q) out.tan(q * b_count + b, 0) = g(q);
      out.lap(b, 0) = lap;
    }
  }

  out.needs_grad = needs_grad;
  Var y = push(std::move(out));
  result.log_abs = y;
  if (keep) {
    node(y).backward = [this, up, dn, weights, y, saved, n_up, n_dn] {
      const Index kdets = static_cast<Index>(up.size());
      const Index b_count = n_walkers_;
      Node& Wn = node(weights);
      const Node& Y = node(y);
      Matrix* dw = Wn.needs_grad ? &adjoint(Wn) : nullptr;
      for (Index b = 0; b < b_count; ++b) {
        const double total = saved->total(b);
        if (total == 0.0 || !std::isfinite(total)) continue;
        const double delta = Y.adj(b, 0);
        if (delta == 0.0) continue;
        const Index blk = n_blocks_ == 1 ? 0 : b;
        for (Index k = 0; k < kdets; ++k) {
          const int sg = saved->sign(b, k);
          if (sg == 0) continue;
          const double ratio = std::exp(saved->log_det(b, k) - saved->shift(b)) / total;
          const double pk = Wn.val(0, k) * sg * ratio;
          Node& U = node(up[k]);
          if (U.needs_grad) {
            adjoint(U).middleRows(b * n_up, n_up) +=
                (delta * pk) * saved->inv_up[k * b_count + b].transpose();
          }
          if (n_dn > 0) {
            Node& Dn = node(dn[k]);
            if (Dn.needs_grad) {
              adjoint(Dn).middleRows(b * n_dn, n_dn) +=
                  (delta * pk) * saved->inv_dn[k * b_count + b].transpose();
            }
          }
          if (dw) (*dw)(blk, k) += delta * sg * ratio;
        }
      }
    };
  }
  return result;
}

void Tape::seed(Var v, const Matrix& adjoint_value) {
  Node& n = node(v);
  if (!n.needs_grad) return;
  if (!n.has_adj) {
    n.adj = adjoint_value;
    n.has_adj = true;
  } else {
    n.adj += adjoint_value;
  }
}

Matrix Tape::backward(Index n_blocks, Index n_params) {
  require(record_, "backward on a tape that did not record");
  require(n_blocks == 1 || n_blocks == n_walkers_ ||
              [&] {
                for (const Node& n : nodes_) {
                  if (n.layout == Layout::Walker) return false;
                }
                return true;
              }(),
          "per-walker blocks must match the walker count");
  Matrix grad = Matrix::Zero(n_blocks, n_params);
  n_blocks_ = n_blocks;
  grad_ = &grad;
  for (const Node& n : nodes_) {
    if (n.has_adj && n.layout == Layout::Shared) {
      require(n.adj.rows() == n_blocks * n.val.rows(), "shared seed must hold one block per gradient row");
    }
  }
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->has_adj && it->backward) it->backward();
  }
  for (Node& n : nodes_) {
    n.adj.resize(0, 0);
    n.has_adj = false;
  }
  grad_ = nullptr;
  n_blocks_ = 1;
  return grad;
}

}  // namespace mgvmc::ad
