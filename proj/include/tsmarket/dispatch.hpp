// Assembly and solution of the market optimization problems: the planner's
// deterministic equivalent (in cost form and in consumption-utility form),
// the LSE recourse subproblem with its closed-form split, and the agents'
// price-taking best responses. All functions are pure; inputs are never
// mutated and concurrent calls on distinct data are safe.
#pragma once

#include "tsmarket/model.hpp"
#include "tsmarket/qp.hpp"

namespace tsmarket {

// Column/row layout of an assembled planner program. Row indices are split
// between the equality block (balances, reference pins) and the inequality
// block (directed line limits, demand service rows).
struct SppLayout {
  int nG = 0, nL = 0, N = 0, S = 0, L = 0;
  bool stage2 = true;
  bool service_tail = false;  // utility-form ordering: x/z grouped at the end

  int num_vars() const;
  int yG1(int k) const;
  int yL1(int k) const;
  int th1(int i) const;
  int yG2(int w, int k) const;
  int yL2(int w, int k) const;
  int x2(int w, int k) const;
  int z2(int w, int k) const;
  int th2(int w, int i) const;

  int eq_bal1(int i) const;
  int eq_pin1() const;
  int eq_bal2(int w, int i) const;
  int eq_pin2(int w) const;
  int num_eq() const;

  int in_line1(int l, int dir) const;  // dir 0: i->j, 1: j->i
  int in_line2(int w, int l, int dir) const;
  int in_demand(int w, int k) const;
  int num_in() const;
};

struct SppProgram {
  StandardProgram prog;
  SppLayout layout;
};

// Cost-form planner program: generation, consumption, demand response and
// blackout decisions for all scenarios in one deterministic equivalent.
SppProgram assemble_spp(const Network& net, const ScenarioSet& scen);

// Utility-form planner program: identical feasible set with the recourse
// service variables grouped in a tail block; the reported solution carries
// only dispatch quantities, with DR/blackout recovered in closed form.
SppProgram assemble_spp_u(const Network& net, const ScenarioSet& scen);

struct PlannerSolution {
  Allocation allocation;
  VectorXd lambda1;               // nodal day-ahead prices, per bus
  std::vector<VectorXd> lambda2;  // per scenario, per bus (probability-unscaled)
  std::vector<VectorXd> mu;       // demand-constraint duals per scenario, per LSE
  VectorXd gamma1;                // congestion duals per directed line [2l+dir]
  std::vector<VectorXd> gamma2;   // per scenario
  double welfare = 0.0;           // negated optimal cost
  double kkt = 0.0;               // residual of the assembled program

  // raw certificate of the underlying solve, for independent re-verification
  VectorXd raw_x;
  Multipliers raw_duals;
};

// Solves the cost-form planner program. Throws std::runtime_error when the
// solver fails (infeasibility is impossible: blackout slack always exists).
// The tolerance is relative; the default leaves absolute dual residuals well
// under the 1e-7 certificate threshold even for steep blackout penalties.
PlannerSolution solve_spp(const Network& net, const ScenarioSet& scen,
                          double tol = 1e-10);

// Solves the utility-form program; welfare and consumption match solve_spp,
// DR/blackout are recovered through lse_service_split.
PlannerSolution solve_spp_u(const Network& net, const ScenarioSet& scen,
                            double tol = 1e-10);

// Value and derivative interval of the consumption utility: the negated
// least-cost DR/blackout response to total purchased energy y1 + y2 given
// renewable output w. Concave, nonsmooth where the residual hits zero.
struct UtilityValue {
  double value = 0.0;
  double d_lo = 0.0, d_hi = 0.0;  // subgradient interval w.r.t. y1 + y2
};
UtilityValue lse_utility(const Lse& lse, double y1, double y2, double w);

// Optimal DR/blackout split per scenario for fixed purchases, with the
// service-price multiplier that certifies it. lse_index selects the LSE's
// column in the scenario output vectors.
struct ServiceSplit {
  VectorXd x, z, mu;  // one entry per scenario
};
ServiceSplit lse_service_split(const Lse& lse, int lse_index, double y1,
                               const VectorXd& y2, const ScenarioSet& scen);

// Prices seen by a single bus: day-ahead scalar plus one real-time price per
// scenario (empty when the real-time stage is disabled).
struct BusPrices {
  double p1 = 0.0;
  VectorXd p2;
};

struct GenResponse {
  double y1 = 0.0;
  VectorXd y2;
  double profit = 0.0;
};

struct LseResponse {
  double y1 = 0.0;
  VectorXd y2, x, z;
  VectorXd mu;           // service multiplier per scenario
  double utility = 0.0;  // expected payoff at the given prices
};

// Closed form: each stage and scenario responds independently with
// inverse marginal pricing.
GenResponse gen_best_response(const Generator& gen, const BusPrices& prices,
                              const ScenarioSet& scen);

// Two-stage purchase/DR/blackout program solved with the embedded QP engine.
LseResponse lse_best_response(const Lse& lse, int lse_index, const BusPrices& prices,
                              const ScenarioSet& scen, bool stage2_enabled = true,
                              double tol = 1e-9);

// Generator profit / LSE payoff of fixed quantities at given prices.
double gen_objective_at(const Generator& gen, const BusPrices& prices,
                        const ScenarioSet& scen, double y1, const VectorXd& y2);
double lse_objective_at(const Lse& lse, const BusPrices& prices,
                        const ScenarioSet& scen, double y1, const VectorXd& y2,
                        const VectorXd& x, const VectorXd& z);

// Expected aggregate welfare of a full allocation (negated total cost).
double evaluate_welfare(const Network& net, const ScenarioSet& scen,
                        const Allocation& alloc);

// Welfare of an energy-only dispatch, valuing consumption through the
// closed-form utility (DR/blackout implied, not part of the argument).
double dispatch_welfare(const Network& net, const ScenarioSet& scen,
                        const Allocation& alloc);

// Maps a planner program's solve result into domain quantities.
PlannerSolution extract_planner(const Network& net, const ScenarioSet& scen,
                                const SppProgram& sp, const SolveResult& res);

}  // namespace tsmarket
