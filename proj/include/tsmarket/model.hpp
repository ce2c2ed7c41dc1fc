// Domain types for the two-stage electricity market: DC network, agents,
// renewable scenarios and dispatch allocations, plus structural validation.
#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace tsmarket {

using Eigen::VectorXd;

// Quadratic cost curve a*x^2 + b*x on x >= 0.
struct QuadCost {
  double a = 0.0;  // curvature (currency/MWh^2), > 0
  double b = 0.0;  // marginal intercept (currency/MWh), >= 0

  double value(double x) const { return (a * x + b) * x; }
  double marginal(double x) const { return 2.0 * a * x + b; }
  // Price-taking supply response: argmax of p*y - cost(y) over y >= 0.
  double inverse_marginal(double p) const { return p <= b ? 0.0 : (p - b) / (2.0 * a); }
};

struct Generator {
  int bus = 0;
  QuadCost primary_cost;    // day-ahead plant, fixed once scheduled
  QuadCost ancillary_cost;  // real-time plant
};

struct Lse {
  int bus = 0;
  double demand = 0.0;         // inelastic aggregate demand (MWh)
  QuadCost dr_cost;            // demand-response compensation
  QuadCost blackout_cost;      // deliberate unserved energy
  double renewable_cap = 1.0;  // upper bound on renewable output, > 0
};

struct Line {
  int i = 0, j = 0;          // undirected, stored once
  double susceptance = 1.0;  // > 0
  double flow_limit = 0.0;   // applies to both directions, >= 0
};

struct Network {
  int n_buses = 0;
  std::vector<Line> lines;
  std::vector<Generator> generators;
  std::vector<Lse> lses;
  int reference_bus = 0;  // angle pinned to zero here, both stages
  // When false the real-time stage has no generation or energy purchases;
  // demand response and blackout decisions remain available.
  bool stage2_enabled = true;

  std::vector<int> generators_at(int bus) const;
  std::vector<int> lses_at(int bus) const;
};

struct Scenario {
  VectorXd output;  // renewable output per LSE, within [0, renewable_cap]
  double prob = 0.0;
};

struct ScenarioSet {
  std::vector<Scenario> scenarios;
  int count() const { return static_cast<int>(scenarios.size()); }
};

// Primal decision variables for both stages. Stage-2 blocks are per scenario.
// With stage2 disabled, yG2/yL2/theta2 are empty; xL2/zL2 remain.
struct StageTwoAllocation {
  VectorXd yG2, yL2, xL2, zL2, theta2;
};

struct Allocation {
  VectorXd yG1, yL1, theta1;
  std::vector<StageTwoAllocation> stage2;
};

struct ValidationIssue {
  std::string code;
  std::string message;
};

// Checks every structural invariant; returns one entry per violation.
// Pure and idempotent.
std::vector<ValidationIssue> validate(const Network& net, const ScenarioSet& scen);

enum class Stage { DayAhead, RealTime };

// Signed active power B_ij*(theta_i - theta_j) on the line joining i and j.
// Antisymmetric in (i, j). Throws std::invalid_argument if no such line.
double flow(const Network& net, const VectorXd& theta, int i, int j);

// Per-bus balance residual: generation - consumption - net outflow.
// The real-time stage measures incremental injections against the change
// in line flows relative to day-ahead. Zero vector iff balance holds.
VectorXd nodal_imbalance(const Network& net, const Allocation& alloc, Stage stage,
                         int scenario = -1);

}  // namespace tsmarket
