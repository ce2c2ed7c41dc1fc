#include "tsmarket/qp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>

namespace tsmarket {

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::MaxIters: return "max-iters";
  }
  return "unknown";
}

bool program_well_formed(const StandardProgram& p) {
  const int n = p.num_vars();
  if (p.Q.rows() != n || p.Q.cols() != n) return false;
  if (p.A_eq.rows() != p.b_eq.size() || (p.num_eq() > 0 && p.A_eq.cols() != n)) return false;
  if (p.A_in.rows() != p.b_in.size() || (p.num_in() > 0 && p.A_in.cols() != n)) return false;
  if (static_cast<int>(p.nonneg.size()) != n) return false;
  if (n > 0) {
    if ((p.Q - p.Q.transpose()).cwiseAbs().maxCoeff() > 1e-12) return false;
    if (p.Q.cwiseAbs().maxCoeff() > 0.0) {
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(p.Q, Eigen::EigenvaluesOnly);
      double floor = -1e-10 * (1.0 + p.Q.cwiseAbs().maxCoeff());
      if (es.eigenvalues().minCoeff() < floor) return false;
    }
  }
  return true;
}

namespace {

double inf_norm(const VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// largest alpha in (0, 1e20] keeping v + alpha*dv >= 0
double max_step(const VectorXd& v, const VectorXd& dv) {
  double a = 1e20;
  for (int i = 0; i < v.size(); ++i)
    if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
  return a;
}

// Inequalities and nonnegativity bounds folded into one block G x <= h;
// bound rows follow the A_in rows.
struct Folded {
  MatrixXd G;
  VectorXd h;
  std::vector<int> bound_cols;  // variable index per bound row
};

Folded fold(const StandardProgram& p) {
  Folded f;
  const int n = p.num_vars();
  const int mi = p.num_in();
  int nb = 0;
  for (int j = 0; j < n; ++j)
    if (p.nonneg[j]) ++nb;
  f.G.setZero(mi + nb, n);
  f.h.setZero(mi + nb);
  if (mi > 0) {
    f.G.topRows(mi) = p.A_in;
    f.h.head(mi) = p.b_in;
  }
  int r = mi;
  for (int j = 0; j < n; ++j)
    if (p.nonneg[j]) {
      f.G(r, j) = -1.0;
      f.bound_cols.push_back(j);
      ++r;
    }
  return f;
}

SolveResult pack_result(const StandardProgram& p, const Folded& f, const VectorXd& x,
                        const VectorXd& lam, const VectorXd& z, SolveStatus status,
                        int iters) {
  SolveResult r;
  r.x = x;
  r.duals.lambda_eq = lam;
  r.duals.mu_in = z.head(p.num_in());
  r.duals.mu_bound = VectorXd::Zero(p.num_vars());
  for (int k = 0; k < static_cast<int>(f.bound_cols.size()); ++k)
    r.duals.mu_bound[f.bound_cols[k]] = z[p.num_in() + k];
  r.status = status;
  r.objective = 0.5 * x.dot(p.Q * x) + p.c.dot(x);
  r.kkt_residual = kkt_residual(p, x, r.duals);
  r.iterations = iters;
  return r;
}

// Equality-only (or unconstrained) programs bypass the interior point loop.
SolveResult solve_equality_only(const StandardProgram& p, const Folded& f,
                                const SolveOptions& opt) {
  const int n = p.num_vars();
  const int me = p.num_eq();
  MatrixXd K(n + me, n + me);
  K.setZero();
  K.topLeftCorner(n, n) = p.Q;
  if (me > 0) {
    K.topRightCorner(n, me) = p.A_eq.transpose();
    K.bottomLeftCorner(me, n) = p.A_eq;
  }
  VectorXd rhs(n + me);
  rhs.head(n) = -p.c;
  if (me > 0) rhs.tail(me) = p.b_eq;

  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(K);
  VectorXd sol = cod.solve(rhs);
  VectorXd x = sol.head(n);
  VectorXd lam = me > 0 ? VectorXd(sol.tail(me)) : VectorXd();
  SolveResult r = pack_result(p, f, x, lam, VectorXd::Zero(0), SolveStatus::Optimal, 0);
  const double scale = 1.0 + std::max(inf_norm(p.b_eq), inf_norm(p.c));
  if (!(r.kkt_residual <= opt.tol * scale * 10.0)) {
    // stationarity unattainable: descent direction in the feasible subspace
    VectorXd feas_res = me > 0 ? VectorXd(p.A_eq * x - p.b_eq) : VectorXd();
    r.status = inf_norm(feas_res) > opt.tol * scale ? SolveStatus::Infeasible
                                                    : SolveStatus::Unbounded;
  }
  return r;
}

}  // namespace

double kkt_residual(const StandardProgram& p, const VectorXd& x, const Multipliers& m) {
  const int n = p.num_vars();
  if (x.size() != n) throw std::invalid_argument("kkt_residual: x dimension mismatch");
  if (m.lambda_eq.size() != p.num_eq() || m.mu_in.size() != p.num_in() ||
      m.mu_bound.size() != n)
    throw std::invalid_argument("kkt_residual: multiplier dimension mismatch");
  if (n == 0) return 0.0;

  double r = 0.0;
  VectorXd grad = p.Q * x + p.c;
  if (p.num_eq() > 0) grad += p.A_eq.transpose() * m.lambda_eq;
  if (p.num_in() > 0) grad += p.A_in.transpose() * m.mu_in;
  grad -= m.mu_bound;
  r = std::max(r, inf_norm(grad));

  if (p.num_eq() > 0) r = std::max(r, inf_norm(p.A_eq * x - p.b_eq));
  if (p.num_in() > 0) {
    VectorXd slack = p.b_in - p.A_in * x;
    for (int i = 0; i < slack.size(); ++i) {
      r = std::max(r, std::max(0.0, -slack[i]));          // primal feasibility
      r = std::max(r, std::max(0.0, -m.mu_in[i]));        // dual feasibility
      r = std::max(r, std::abs(m.mu_in[i] * slack[i]));   // complementarity
    }
  }
  for (int j = 0; j < n; ++j) {
    if (!p.nonneg[j]) {
      r = std::max(r, std::abs(m.mu_bound[j]));
      continue;
    }
    r = std::max(r, std::max(0.0, -x[j]));
    r = std::max(r, std::max(0.0, -m.mu_bound[j]));
    r = std::max(r, std::abs(m.mu_bound[j] * x[j]));
  }
  return r;
}

double dual_objective(const StandardProgram& p, const VectorXd& x, const Multipliers& m) {
  double g = -0.5 * x.dot(p.Q * x);
  if (p.num_eq() > 0) g -= p.b_eq.dot(m.lambda_eq);
  if (p.num_in() > 0) g -= p.b_in.dot(m.mu_in);
  return g;
}

SolveResult solve(const StandardProgram& p, double tol, int max_iters) {
  SolveOptions opt;
  opt.tol = tol;
  opt.max_iters = max_iters;
  return solve(p, opt);
}

SolveResult solve(const StandardProgram& p, const SolveOptions& opt) {
  if (!program_well_formed(p)) throw std::invalid_argument("solve: malformed program");
  if (!(opt.tol > 0.0 && opt.tol <= 1e-2))
    throw std::invalid_argument("solve: tol must lie in (0, 1e-2]");

  const int n = p.num_vars();
  const int me = p.num_eq();
  Folded f = fold(p);
  const int m = static_cast<int>(f.h.size());

  if (n == 0) {
    SolveResult r;
    r.x = VectorXd();
    r.duals = {VectorXd::Zero(me), VectorXd::Zero(0), VectorXd::Zero(0)};
    r.status = SolveStatus::Optimal;
    r.objective = 0.0;
    r.kkt_residual = 0.0;
    return r;
  }
  if (m == 0) return solve_equality_only(p, f, opt);

  const double prim_scale = 1.0 + std::max(inf_norm(p.b_eq), inf_norm(f.h));
  const double dual_scale = 1.0 + inf_norm(p.c);
  const double scale = std::max(prim_scale, dual_scale);

  // Initial point: the minimum-norm solution of the equalities (the cost
  // plays no part, steep objectives would otherwise plant the start far from
  // feasibility), slacks shifted into the positive orthant, duals scaled to
  // the objective so steep problems do not crawl up from unity.
  VectorXd x = VectorXd::Zero(n), lam = VectorXd::Zero(me);
  if (me > 0) {
    MatrixXd K(n + me, n + me);
    K.setZero();
    K.topLeftCorner(n, n) = MatrixXd::Identity(n, n);
    K.topRightCorner(n, me) = p.A_eq.transpose();
    K.bottomLeftCorner(me, n) = p.A_eq;
    K.bottomRightCorner(me, me) = -1e-10 * MatrixXd::Identity(me, me);
    VectorXd rhs(n + me);
    rhs.head(n).setZero();
    rhs.tail(me) = p.b_eq;
    VectorXd sol = K.partialPivLu().solve(rhs);
    if (sol.allFinite()) x = sol.head(n);
  }
  VectorXd s_raw = f.h - f.G * x;
  double shift = std::max(0.0, -1.5 * (s_raw.size() ? s_raw.minCoeff() : 0.0));
  VectorXd s = (s_raw.array() + shift + 1.0).matrix() * opt.init_scale;
  double dual_init = std::max(1.0, std::min(inf_norm(p.c), 1e6) / 10.0);
  VectorXd z = VectorXd::Ones(m) * (dual_init * opt.init_scale);

  double best_merit = std::numeric_limits<double>::infinity();
  SolveStatus status = SolveStatus::MaxIters;
  int iters = 0;
  double divergence = 0.0;
  int centering_done = 0;

  for (int k = 0; k < opt.max_iters; ++k) {
    iters = k;
    VectorXd r_d = p.Q * x + p.c + f.G.transpose() * z;
    if (me > 0) r_d += p.A_eq.transpose() * lam;
    VectorXd r_p = me > 0 ? VectorXd(p.A_eq * x - p.b_eq) : VectorXd();
    VectorXd r_g = f.G * x + s - f.h;
    double mu = s.dot(z) / m;

    double prim = std::max(inf_norm(r_p), inf_norm(r_g));
    double dual = inf_norm(r_d);
    double merit = prim + dual + mu;
    best_merit = std::min(best_merit, merit);
    if (std::getenv("TSMARKET_QP_TRACE"))
      std::fprintf(stderr,
                   "it=%d prim=%.3e dual=%.3e mu=%.3e xn=%.3e zn=%.3e smin=%.3e "
                   "zmin=%.3e\n",
                   k, prim, dual, mu, inf_norm(x), inf_norm(z),
                   s.size() ? s.minCoeff() : 0.0, z.size() ? z.minCoeff() : 0.0);

    bool converged = prim <= opt.tol * prim_scale && dual <= opt.tol * dual_scale &&
                     mu <= opt.tol * scale;
    if (converged && centering_done >= opt.centering_rounds) {
      status = SolveStatus::Optimal;
      break;
    }

    // divergence and stall classification
    double xnorm = inf_norm(x);
    double znorm = inf_norm(z);
    double obj = 0.5 * x.dot(p.Q * x) + p.c.dot(x);
    bool exploded = xnorm > 1e10 * scale || inf_norm(s) > 1e10 * scale ||
                    znorm > 1e10 * scale || obj < -1e12 * scale;
    bool stalled = mu <= opt.tol * scale &&
                   (prim > std::sqrt(opt.tol) * prim_scale ||
                    dual > std::sqrt(opt.tol) * dual_scale);
    bool merit_diverged = std::isfinite(best_merit) && merit > 1e8 * (best_merit + 1.0);
    if (exploded || stalled || merit_diverged) {
      // primal iterates escaping while feasible means an unbounded ray;
      // otherwise the residuals certify infeasibility
      bool primal_ok = prim <= std::sqrt(opt.tol) * prim_scale;
      status = primal_ok ? SolveStatus::Unbounded : SolveStatus::Infeasible;
      divergence = std::isfinite(best_merit) && best_merit > 0.0 ? merit / best_merit
                                                                 : merit;
      break;
    }

    // full Newton system in (dx, dlam, dz); the slack block is eliminated
    // analytically, the rest stays unsquared so late-iteration scaling
    // spreads do not wreck the factorization
    const int dim = n + me + m;
    VectorXd d = s.cwiseQuotient(z);
    MatrixXd M = MatrixXd::Zero(dim, dim);
    M.topLeftCorner(n, n) = p.Q;
    if (me > 0) {
      M.block(0, n, n, me) = p.A_eq.transpose();
      M.block(n, 0, me, n) = p.A_eq;
      // static dual regularization keeps redundant-but-consistent equality
      // rows from letting their multipliers drift
      M.block(n, n, me, me) = -1e-12 * MatrixXd::Identity(me, me);
    }
    M.block(0, n + me, n, m) = f.G.transpose();
    M.block(n + me, 0, m, n) = f.G;
    M.block(n + me, n + me, m, m) = -MatrixXd(d.asDiagonal());

    Eigen::PartialPivLU<MatrixXd> lu;
    bool factored = false;
    for (double reg : {0.0, 1e-12, 1e-10, 1e-8, 1e-6}) {
      MatrixXd Mreg = M;
      Mreg.topLeftCorner(n, n) += reg * MatrixXd::Identity(n, n);
      if (me > 0)
        Mreg.block(n, n, me, me) -= reg * MatrixXd::Identity(me, me);
      Mreg.block(n + me, n + me, m, m) -= reg * MatrixXd::Identity(m, m);
      lu.compute(Mreg);
      VectorXd probe = lu.solve(VectorXd::Ones(dim));
      if (probe.allFinite()) {
        factored = true;
        break;
      }
    }
    if (!factored) break;  // classified from the current residuals below

    bool direction_bad = false;
    auto solve_dir = [&](const VectorXd& rs, VectorXd& dx, VectorXd& dlam,
                         VectorXd& ds, VectorXd& dz) {
      VectorXd rhs(dim);
      rhs.head(n) = -r_d;
      if (me > 0) rhs.segment(n, me) = -r_p;
      rhs.tail(m) = -r_g + rs.cwiseQuotient(z);
      VectorXd sol = lu.solve(rhs);
      VectorXd resid = rhs - M * sol;
      sol += lu.solve(resid);  // one refinement pass
      if (!sol.allFinite()) {
        direction_bad = true;
        sol.setZero();
      }
      dx = sol.head(n);
      dlam = me > 0 ? VectorXd(sol.segment(n, me)) : VectorXd();
      dz = sol.tail(m);
      ds = -r_g - f.G * dx;
    };

    VectorXd dx, dlam, ds, dz;
    double sigma = 1.0;
    if (converged) {
      // polishing round: hold the gap and recentre the products so the
      // iterate settles at the analytic center of the optimal face
      status = SolveStatus::Optimal;
      ++centering_done;
      VectorXd rs_c = s.cwiseProduct(z) - mu * VectorXd::Ones(m);
      solve_dir(rs_c, dx, dlam, ds, dz);
    } else {
      // predictor
      VectorXd rs_aff = s.cwiseProduct(z);
      VectorXd dx_a, dlam_a, ds_a, dz_a;
      solve_dir(rs_aff, dx_a, dlam_a, ds_a, dz_a);
      double ap_a = std::min(1.0, max_step(s, ds_a));
      double ad_a = std::min(1.0, max_step(z, dz_a));
      double mu_aff = (s + ap_a * ds_a).dot(z + ad_a * dz_a) / m;
      sigma = std::min(1.0, std::pow(std::max(0.0, mu_aff / mu), 3.0));

      // corrector
      VectorXd rs_cor =
          rs_aff + ds_a.cwiseProduct(dz_a) - sigma * mu * VectorXd::Ones(m);
      solve_dir(rs_cor, dx, dlam, ds, dz);
    }
    if (direction_bad) break;  // numerical breakdown, keep the last iterate

    const double tau = 0.995;
    double ap = std::min(1.0, tau * max_step(s, ds));
    double ad = std::min(1.0, tau * max_step(z, dz));
    if (std::getenv("TSMARKET_QP_TRACE"))
      std::fprintf(stderr, "   step: sigma=%.3e ap=%.3e ad=%.3e dxn=%.3e dzn=%.3e\n",
                   sigma, ap, ad, inf_norm(dx), inf_norm(dz));
    x += ap * dx;
    s += ap * ds;
    if (me > 0) lam += ad * dlam;
    z += ad * dz;
    iters = k + 1;
  }

  SolveResult r = pack_result(p, f, x, lam, z, status, iters);
  r.divergence_ratio = divergence;
  return r;
}

}  // namespace tsmarket
