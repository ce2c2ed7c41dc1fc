// The strategic layer: economic-dispatch clearing under scalar linear bids
// with locational marginal pricing, efficient-bid construction from planner
// duals, the congestion-free and monopoly-free predicates, unilateral
// deviation search, and the single-stage variant where LSEs bid directly on
// their demand-response costs.
#pragma once

#include "tsmarket/dispatch.hpp"
#include "tsmarket/equilibrium.hpp"
#include "tsmarket/model.hpp"

namespace tsmarket {

struct BidProfile {
  VectorXd gen_b1;         // one scalar per generator
  Eigen::MatrixXd gen_b2;  // nG x S (zero columns when stage 2 disabled)
  VectorXd lse_b1;
  Eigen::MatrixXd lse_b2;  // nL x S
};

struct ClearingOutcome {
  // energy-only dispatch: xL2/zL2 are left empty by design
  Allocation allocation;
  VectorXd lambda1;
  std::vector<VectorXd> lambda2;
  VectorXd gamma1;
  std::vector<VectorXd> gamma2;
  VectorXd gen_payoff;  // true-cost payoffs at cleared quantities and prices
  VectorXd lse_payoff;  // true-utility payoffs
  double bid_objective = 0.0;   // optimal value of the bid-based program
  double true_welfare = 0.0;    // welfare of the dispatch under true costs
  SolveStatus status = SolveStatus::MaxIters;
  std::vector<std::string> notes;  // offending bids for unbounded programs
};

// Clears the bid-based dispatch program. Among bid-optimal dispatches the
// reported allocation maximizes true welfare (a second, tie-breaking solve),
// so degenerate faces settle deterministically on the efficient point when
// one exists. Prices come from the first solve's balance duals.
ClearingOutcome clear_ded(const Network& net, const ScenarioSet& scen,
                          const BidProfile& bids, double tol = 1e-9);

// Every agent bids its bus's planner dual price, stage by stage and scenario
// by scenario.
BidProfile efficient_bids(const Network& net, const ScenarioSet& scen);
BidProfile efficient_bids(const Network& net, const PlannerSolution& planner);

// True iff no directed line flow reaches its limit (within a relative slack)
// in any stage or scenario of the planner optimum.
bool congestion_free(const PlannerSolution& planner, const Network& net,
                     double slack_rel = 1e-6);

// True iff every bus hosts zero-or-at-least-two generators and
// zero-or-at-least-two LSEs.
bool monopoly_free(const Network& net);

struct AgentRef {
  AgentKind kind = AgentKind::Generator;
  int index = 0;
};

struct DeviationSearchSpec {
  int grid_points = 50;        // log-uniform probes per coordinate
  double lo_factor = 0.1;      // grid lower bound relative to the current bid
  double hi_factor = 10.0;     // grid upper bound relative to the current bid
  double zero_bid_span = 1.0;  // grid upper bound when the current bid is zero
  double refine_rel = 1e-4;    // golden-section relative width target
  bool probe_zero = true;
};

struct DeviationProbe {
  int coordinate = 0;  // 0 = day-ahead bid, 1 + w = scenario-w bid
  double bid = 0.0;
  double payoff = 0.0;
  bool valid = false;  // cleared to optimality
};

struct DeviationResult {
  AgentRef agent;
  double base_payoff = 0.0;
  double best_payoff = 0.0;
  double best_bid = 0.0;
  int best_coordinate = 0;
  double gain = 0.0;  // max(0, best - base)
  int skipped = 0;    // probes whose clearing failed (recorded, not fatal)
  std::vector<DeviationProbe> probes;
};

// Coordinate-wise grid search with golden-section refinement over one
// agent's bids, all other bids held fixed. Probes that fail to clear
// (typically unbounded programs) are recorded and skipped.
DeviationResult best_deviation(const Network& net, const ScenarioSet& scen,
                               const BidProfile& bids, const AgentRef& agent,
                               const DeviationSearchSpec& spec = {});

// Single-stage game where LSEs bid scalar prices on their own demand
// response and generators bid energy prices; demand response quantities are
// dispatch variables. Requires one scenario and a disabled second stage.
struct DrBidOutcome {
  VectorXd yG, yL, x, theta;
  VectorXd lambda;  // per bus
  VectorXd mu;      // per LSE service constraint
  VectorXd gamma;   // per directed line
  VectorXd gen_payoff, lse_payoff;
  double bid_cost = 0.0;      // optimal reported service cost
  double true_welfare = 0.0;
  SolveStatus status = SolveStatus::MaxIters;
  std::vector<std::string> notes;
};

DrBidOutcome clear_dr_bid_game(const Network& net, const ScenarioSet& scen,
                               const VectorXd& gen_bids, const VectorXd& lse_dr_bids,
                               double tol = 1e-9);

// Deviation search over one LSE's demand-response bid in the single-stage
// bidding game.
DeviationResult best_dr_bid_deviation(const Network& net, const ScenarioSet& scen,
                                      const VectorXd& gen_bids,
                                      const VectorXd& lse_dr_bids, int lse_index,
                                      const DeviationSearchSpec& spec = {});

// Precondition for any equilibrium claim: the system remains solvable with
// any single generator removed.
bool feasible_without_each_generator(const Network& net, const ScenarioSet& scen);

// Assembled bid-based programs, exposed for certificate verification.
struct DedProgram {
  StandardProgram prog;
  SppLayout layout;  // x2/z2 unused (energy-only)
};
DedProgram assemble_ded(const Network& net, const ScenarioSet& scen,
                        const BidProfile& bids);

struct DrBidLayout {
  int nG = 0, nL = 0, N = 0, L = 0;
  int yG(int k) const { return k; }
  int yL(int k) const { return nG + k; }
  int x(int k) const { return nG + nL + k; }
  int th(int i) const { return nG + 2 * nL + i; }
  int num_vars() const { return nG + 2 * nL + N; }
  int eq_bal(int i) const { return i; }
  int eq_pin() const { return N; }
  int in_line(int l, int dir) const { return 2 * l + dir; }
  int in_demand(int k) const { return 2 * L + k; }
};
struct DrBidProgram {
  StandardProgram prog;
  DrBidLayout layout;
};
DrBidProgram assemble_dr_bid(const Network& net, const ScenarioSet& scen,
                             const VectorXd& gen_bids, const VectorXd& lse_dr_bids);

}  // namespace tsmarket
