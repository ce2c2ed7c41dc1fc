// Random convex programs with a KKT point planted by construction: the
// optimum and its multipliers are chosen first and the linear cost is back
// solved from stationarity. Strict convexity makes the planted primal unique.
#pragma once

#include "instances.hpp"
#include "tsmarket/qp.hpp"

namespace testsupport {

struct SynthQp {
  tsmarket::StandardProgram prog;
  tsmarket::VectorXd x_star;
};

inline SynthQp make_synth_qp(Rng& rng, int max_vars = 20) {
  using tsmarket::MatrixXd;
  using tsmarket::VectorXd;
  SynthQp out;
  const int n = rng.integer(2, max_vars);
  const int me = rng.integer(0, n / 3);
  const int mi = rng.integer(1, std::max(1, n / 2));

  MatrixXd R(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) R(i, j) = rng.uniform(-1.0, 1.0);
  double delta = rng.uniform(0.5, 2.0);
  out.prog.Q = R.transpose() * R + delta * MatrixXd::Identity(n, n);
  out.prog.Q = 0.5 * (out.prog.Q + out.prog.Q.transpose());

  out.prog.nonneg.assign(n, 0);
  out.x_star.resize(n);
  VectorXd mu_bound = VectorXd::Zero(n);
  for (int j = 0; j < n; ++j) {
    if (rng.coin(0.6)) {
      out.prog.nonneg[j] = 1;
      if (rng.coin(0.3)) {
        out.x_star[j] = 0.0;
        mu_bound[j] = rng.uniform(0.1, 1.0);
      } else {
        out.x_star[j] = rng.uniform(0.1, 2.0);
      }
    } else {
      out.x_star[j] = rng.uniform(-2.0, 2.0);
    }
  }

  out.prog.A_eq.resize(me, n);
  out.prog.b_eq.resize(me);
  VectorXd lam(me);
  for (int r = 0; r < me; ++r) {
    for (int j = 0; j < n; ++j) out.prog.A_eq(r, j) = rng.uniform(-1.0, 1.0);
    out.prog.b_eq[r] = out.prog.A_eq.row(r).dot(out.x_star);
    lam[r] = rng.uniform(-1.0, 1.0);
  }

  out.prog.A_in.resize(mi, n);
  out.prog.b_in.resize(mi);
  VectorXd mu(mi);
  for (int r = 0; r < mi; ++r) {
    for (int j = 0; j < n; ++j) out.prog.A_in(r, j) = rng.uniform(-1.0, 1.0);
    double ax = out.prog.A_in.row(r).dot(out.x_star);
    if (rng.coin(0.4)) {
      out.prog.b_in[r] = ax;  // active
      mu[r] = rng.uniform(0.1, 1.0);
    } else {
      out.prog.b_in[r] = ax + rng.uniform(0.1, 2.0);
      mu[r] = 0.0;
    }
  }

  VectorXd grad = out.prog.Q * out.x_star;
  if (me > 0) grad += out.prog.A_eq.transpose() * lam;
  if (mi > 0) grad += out.prog.A_in.transpose() * mu;
  grad -= mu_bound;
  out.prog.c = -grad;
  return out;
}

}  // namespace testsupport
