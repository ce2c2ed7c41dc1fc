// Sequential competitive equilibrium construction from planner duals,
// verification of candidate (allocation, prices) tuples through per-agent
// best-response gaps, and the welfare-theorem checks via the system
// operator's surplus problem.
#pragma once

#include "tsmarket/dispatch.hpp"
#include "tsmarket/model.hpp"

namespace tsmarket {

struct PriceSystem {
  VectorXd p1;                // day-ahead nodal prices
  std::vector<VectorXd> p2;   // real-time nodal prices per scenario

  BusPrices at_bus(int bus) const {
    BusPrices b;
    b.p1 = p1[bus];
    b.p2.resize(static_cast<int>(p2.size()));
    for (int w = 0; w < static_cast<int>(p2.size()); ++w) b.p2[w] = p2[w][bus];
    return b;
  }
};

enum class AgentKind { Generator, Lse };

struct AgentGap {
  AgentKind kind = AgentKind::Generator;
  int index = 0;
  int bus = 0;
  double best_objective = 0.0;
  double objective_at_allocation = 0.0;
  double gap = 0.0;  // max(0, best - at allocation)
};

struct SceqCertificate {
  PriceSystem prices;
  std::vector<AgentGap> gaps;
  double stage1_clearing = 0.0;   // |total generation - total consumption|
  VectorXd stage2_clearing;       // per scenario
  double max_gap = 0.0;
  double max_clearing = 0.0;
  bool pass = false;
  std::vector<std::string> reasons;
  double gap_tol = 0.0, clearing_tol = 0.0;
};

struct SceqPoint {
  Allocation allocation;
  PriceSystem prices;
  PlannerSolution planner;
};

struct VerifyOptions {
  double gap_tol = 1e-6;       // scaled by 1 + |allocation welfare|
  double clearing_tol = 1e-7;  // absolute
  double solve_tol = 1e-9;
};

// Theorem-style construction: the planner optimum priced at its balance duals.
SceqPoint construct_sceq(const Network& net, const ScenarioSet& scen);

// Checks each agent's best-response gap at the given prices and the clearing
// of both stages in every scenario. Failures are verdicts, never exceptions.
SceqCertificate verify_sceq(const Network& net, const ScenarioSet& scen,
                            const Allocation& alloc, const PriceSystem& prices,
                            const VerifyOptions& opt = {});

struct IsoSurplus {
  double at_allocation = 0.0;  // merchandising surplus of the given dispatch
  double optimal = 0.0;        // optimum of the operator's surplus program
  double gap = 0.0;            // optimal - at_allocation
};

// Evaluates and optimizes the operator's revenue from nodal price
// differences over network-feasible dispatches at fixed prices.
IsoSurplus iso_surplus(const Network& net, const ScenarioSet& scen,
                       const PriceSystem& prices, const Allocation& alloc);

struct WelfareReport {
  double planner_welfare = 0.0;
  double sceq_welfare = 0.0;        // agent objectives plus operator surplus
  double welfare_gap = 0.0;
  double iso_gap = 0.0;
  double support_residual = 0.0;    // KKT residual of the price certificate
  SceqCertificate certificate;
  bool first_ok = false;            // equilibrium supports an efficient allocation
  bool second_ok = false;           // efficient allocation is price-supportable
  bool pass = false;
};

WelfareReport check_welfare_theorems(const Network& net, const ScenarioSet& scen,
                                     double tol = 1e-6);

}  // namespace tsmarket
