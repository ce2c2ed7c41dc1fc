// Convex quadratic programming over the standard form
//
//   minimize    0.5 x'Qx + c'x
//   subject to  A_eq x  = b_eq
//               A_in x <= b_in
//               x_j >= 0 for flagged j
//
// Dense primal-dual interior point (Mehrotra predictor-corrector); linear
// programs are the Q = 0 case of the same path. Returns the primal point and
// every dual multiplier. Deterministic: identical inputs give bit-identical
// results. On degenerate programs the duals converge to the analytic center
// of the optimal dual face.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <vector>

namespace tsmarket {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct StandardProgram {
  MatrixXd Q;   // n x n, symmetric PSD (may be zero)
  VectorXd c;   // n
  MatrixXd A_eq;
  VectorXd b_eq;
  MatrixXd A_in;
  VectorXd b_in;
  std::vector<std::uint8_t> nonneg;  // per-variable x >= 0 flag

  int num_vars() const { return static_cast<int>(c.size()); }
  int num_eq() const { return static_cast<int>(b_eq.size()); }
  int num_in() const { return static_cast<int>(b_in.size()); }
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, MaxIters };

const char* to_string(SolveStatus s);

// Multiplier sign convention: at a KKT point of the minimization,
//   Qx + c + A_eq' lambda_eq + A_in' mu_in - mu_bound = 0,
// with mu_in >= 0 and mu_bound >= 0 (mu_bound zero on unflagged variables).
struct Multipliers {
  VectorXd lambda_eq;
  VectorXd mu_in;
  VectorXd mu_bound;
};

struct SolveOptions {
  double tol = 1e-8;        // in (0, 1e-2]
  int max_iters = 200;
  double init_scale = 1.0;  // scales the initial slack/dual interior point
  // pure centering rounds after convergence; they pin degenerate optima to
  // the analytic center so independent assemblies of the same problem agree
  int centering_rounds = 2;
};

struct SolveResult {
  VectorXd x;
  Multipliers duals;
  SolveStatus status = SolveStatus::MaxIters;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double kkt_residual = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  // set when status is Unbounded/Infeasible and a diverging direction or
  // stalled residual identified the classification
  double divergence_ratio = 0.0;
};

SolveResult solve(const StandardProgram& p, const SolveOptions& opt = {});
SolveResult solve(const StandardProgram& p, double tol, int max_iters);

// Infinity norm over stationarity, primal/dual feasibility violations and
// complementarity products. Zero at an exact KKT point. Never throws on
// value errors; dimension mismatches throw std::invalid_argument.
double kkt_residual(const StandardProgram& p, const VectorXd& x, const Multipliers& m);

// Lagrangian dual objective at a KKT candidate, for duality-gap checks:
//   -0.5 x'Qx - b_eq'lambda - b_in'mu.
double dual_objective(const StandardProgram& p, const VectorXd& x, const Multipliers& m);

// Verifies Q is symmetric (to 1e-12) and all dimensions are consistent.
// Returns false rather than throwing; solve() rejects invalid programs.
bool program_well_formed(const StandardProgram& p);

}  // namespace tsmarket
