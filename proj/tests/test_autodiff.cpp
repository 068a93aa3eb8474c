// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <random>

#include "mgvmc/autodiff.hpp"
#include "mgvmc/params.hpp"

using mgvmc::ParamLayout;
using mgvmc::ad::Index;
using mgvmc::ad::Layout;
using mgvmc::ad::Matrix;
using mgvmc::ad::Tape;
using mgvmc::ad::Var;

namespace {

constexpr Index kRows = 2;  // electrons per walker
constexpr Index kDirs = 3 * kRows;

struct Toy {
  ParamLayout layout;
  Eigen::VectorXd theta;
  Matrix nuclei;  // M x 3

  Toy() {
    layout.add("w1", 4, 3);
    layout.add("b1", 1, 4);
    layout.add("w2", 4, 3);
    layout.add("wo0", 2, 4);
    layout.add("wo1", 2, 4);
    layout.add("p", 2, 2);
    layout.add("s", 2, 2);
    layout.add("w", 1, 2);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n01(0.0, 0.6);
    theta.resize(layout.size());
    for (Index i = 0; i < theta.size(); ++i) theta(i) = n01(rng);
    layout.view(theta, "w") << 0.7, -0.4;
    nuclei.resize(2, 3);
    nuclei << 0.1, -0.2, 0.3, -0.5, 0.4, -0.1;
  }

  Var p(Tape& t, const std::string& name) const {
    return t.param(layout.view(theta, name), layout.slot(name).offset);
  }

  // x: B x (3 * kRows), returns (tape, log|psi| node)
  Var build(Tape& t, const Matrix& x, std::vector<int>* sign = nullptr) const {
    const Index b = x.rows();
    const bool jets = t.n_directions() > 0;
    Matrix val(b * kRows, 3);
    Matrix tan = Matrix::Zero(kDirs * b * kRows, 3);
    Matrix lap = Matrix::Zero(b * kRows, 3);
    Matrix dist(b * kRows, nuclei.rows());
    Matrix dtan = Matrix::Zero(kDirs * b * kRows, nuclei.rows());
    Matrix dlap(b * kRows, nuclei.rows());
    for (Index w = 0; w < b; ++w) {
      for (Index i = 0; i < kRows; ++i) {
        const Index r = w * kRows + i;
        val.row(r) = x.block(w, 3 * i, 1, 3);
        for (Index c = 0; c < 3; ++c) tan((3 * i + c) * b * kRows + r, c) = 1.0;
        for (Index m = 0; m < nuclei.rows(); ++m) {
          const Eigen::RowVector3d d = val.row(r) - nuclei.row(m);
          dist(r, m) = d.norm();
          dlap(r, m) = 2.0 / d.norm();
          for (Index c = 0; c < 3; ++c) dtan((3 * i + c) * b * kRows + r, m) = d(c) / d.norm();
        }
      }
    }
    Var xv = jets ? t.walker_input(val, kRows, tan, lap) : t.walker_input(val, kRows);
    Var dv = jets ? t.walker_input(dist, kRows, dtan, dlap) : t.walker_input(dist, kRows);
    Var h = t.tanh(t.add_bias(t.linear(xv, p(t, "w1")), p(t, "b1")));
    Var pooled = t.repeat_rows(t.group_sum(h, kRows, 0, kRows), kRows);
    Var h2 = t.mul(t.add(h, pooled), t.tanh(t.linear(xv, p(t, "w2"))));
    Var env = t.envelope(dv, p(t, "p"), p(t, "s"));
    std::vector<Var> up{t.mul(t.linear(h2, p(t, "wo0")), env), t.mul(t.linear(h2, p(t, "wo1")), env)};
    auto out = t.slater_logpsi(up, {}, p(t, "w"), kRows, 0);
    if (sign) *sign = out.sign;
    return out.log_abs;
  }

  double value(const Matrix& x) const {
    Tape t(x.rows(), 0, false);
    return t.value(build(t, x))(0, 0);
  }
};

Matrix sample_walkers(Index b, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  Matrix x(b, 3 * kRows);
  for (Index i = 0; i < x.size(); ++i) x(i) = n01(rng);
  return x;
}

}  // namespace

TEST_CASE("forward jets match finite differences of the composite graph", "[autodiff]") {
  Toy toy;
  const Matrix x = sample_walkers(3, 11);
  Tape t(x.rows(), kDirs, false);
  Var out = toy.build(t, x);
  const double h = 1e-4;
  for (Index w = 0; w < x.rows(); ++w) {
    const Matrix xw = x.row(w);
    double fd_lap = 0.0;
    const double f0 = toy.value(xw);
    for (Index q = 0; q < kDirs; ++q) {
      Matrix xp = xw, xm = xw;
      xp(0, q) += h;
      xm(0, q) -= h;
      const double fp = toy.value(xp), fm = toy.value(xm);
      CHECK(t.tangent(out)(q * x.rows() + w, 0) == Catch::Approx((fp - fm) / (2 * h)).epsilon(1e-6));
      fd_lap += (fp - 2 * f0 + fm) / (h * h);
    }
    CHECK(t.laplacian(out)(w, 0) == Catch::Approx(fd_lap).epsilon(1e-4));
    CHECK(t.value(out)(w, 0) == Catch::Approx(f0).epsilon(1e-12));
  }
}

TEST_CASE("per-walker reverse gradients match parameter finite differences", "[autodiff]") {
  Toy toy;
  const Matrix x = sample_walkers(3, 5);
  Tape t(x.rows(), 0, true);
  Var out = toy.build(t, x);
  t.seed(out, Matrix::Ones(x.rows(), 1));
  const Matrix g = t.backward(x.rows(), toy.layout.size());

  Tape t2(x.rows(), 0, true);
  Var out2 = toy.build(t2, x);
  t2.seed(out2, Matrix::Ones(x.rows(), 1));
  const Matrix summed = t2.backward(1, toy.layout.size());
  CHECK((summed.row(0) - g.colwise().sum()).cwiseAbs().maxCoeff() < 1e-12);

  const double h = 1e-6;
  for (Index w = 0; w < x.rows(); ++w) {
    for (Index i = 0; i < toy.theta.size(); ++i) {
      Toy tp = toy, tm = toy;
      tp.theta(i) += h;
      tm.theta(i) -= h;
      const double fd = (tp.value(x.row(w)) - tm.value(x.row(w))) / (2 * h);
      CHECK(g(w, i) == Catch::Approx(fd).epsilon(1e-5).margin(1e-8));
    }
  }
}

TEST_CASE("stacked cotangents through a shared graph with gathers", "[autodiff]") {
  ParamLayout layout;
  layout.add("z", 3, 2);
  layout.add("w", 2, 4);
  Eigen::VectorXd theta = Eigen::VectorXd::LinSpaced(layout.size(), -0.8, 0.9);
  auto f = [&](const Eigen::VectorXd& th, Tape& t) {
    Var z = t.param(layout.view(th, "z"), layout.slot("z").offset);
    Var w = t.param(layout.view(th, "w"), layout.slot("w").offset);
    // pairs (m, n != m) gathered from z, then summed back per m
    std::vector<Index> src{0, 0, 1, 1, 2, 2}, dst{1, 2, 0, 2, 0, 1};
    Var a = t.gather_rows(z, src, Layout::Shared);
    Var b = t.gather_rows(z, dst, Layout::Shared);
    Var msg = t.tanh(t.concat_cols({a, t.mul(a, b)}));
    Var agg = t.group_sum(msg, 2, 0, 2);
    Var sel = t.group_select(t.repeat_rows(agg, 2), 2, 1, 2);
    return t.linear(sel, w);
  };
  Tape t(0, 0, true);
  Var y = f(theta, t);
  const Matrix y0 = t.value(y);
  REQUIRE(y0.rows() == 3);
  REQUIRE(y0.cols() == 2);
  // one cotangent per output entry
  const Index n_out = y0.size();
  Matrix seeds = Matrix::Zero(n_out * 3, 2);
  for (Index k = 0; k < n_out; ++k) seeds(k * 3 + k % 3, k / 3) = 1.0;
  t.seed(y, seeds);
  const Matrix jac = t.backward(n_out, layout.size());
  const double h = 1e-6;
  for (Index i = 0; i < theta.size(); ++i) {
    Eigen::VectorXd tp = theta, tm = theta;
    tp(i) += h;
    tm(i) -= h;
    Tape a(0, 0, false), b(0, 0, false);
    const Matrix d = (a.value(f(tp, a)) - b.value(f(tm, b))) / (2 * h);
    for (Index k = 0; k < n_out; ++k) {
      CHECK(jac(k, i) == Catch::Approx(d(k % 3, k / 3)).epsilon(1e-6).margin(1e-9));
    }
  }
}

TEST_CASE("determinant sign flips under row exchange and cancellation is flagged", "[autodiff]") {
  Tape t(1, 0, false);
  Matrix a(2, 2);
  a << 1.0, 2.0, 3.0, 5.0;
  Matrix swapped = a;
  swapped.row(0).swap(swapped.row(1));
  Var w = t.shared_input(Matrix::Ones(1, 1));
  auto r1 = t.slater_logpsi({t.walker_input(a, 2)}, {}, w, 2, 0);
  auto r2 = t.slater_logpsi({t.walker_input(swapped, 2)}, {}, w, 2, 0);
  CHECK(r1.sign[0] == -1);
  CHECK(r2.sign[0] == 1);
  CHECK(t.value(r1.log_abs)(0, 0) == Catch::Approx(0.0).margin(1e-14));

  Var w2 = t.shared_input((Matrix(1, 2) << 1.0, 1.0).finished());
  auto r3 = t.slater_logpsi({t.walker_input(a, 2), t.walker_input(swapped, 2)}, {}, w2, 2, 0);
  CHECK(r3.sign[0] == 0);
  CHECK(std::isinf(t.value(r3.log_abs)(0, 0)));
}
