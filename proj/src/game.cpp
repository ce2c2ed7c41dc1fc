#include "tsmarket/game.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tsmarket {

// ---------------------------------------------------------------------------
// bid-based dispatch program

DedProgram assemble_ded(const Network& net, const ScenarioSet& scen,
                        const BidProfile& bids) {
  DedProgram dp;
  SppLayout& l = dp.layout;
  l.nG = static_cast<int>(net.generators.size());
  l.nL = static_cast<int>(net.lses.size());
  l.N = net.n_buses;
  l.S = scen.count();
  l.L = static_cast<int>(net.lines.size());
  l.stage2 = net.stage2_enabled;
  l.service_tail = true;  // energy-only: core ordering, no service block

  const int n = l.nG + l.nL + l.N + (l.stage2 ? l.S * (l.nG + l.nL + l.N) : 0);
  StandardProgram& p = dp.prog;
  p.Q = MatrixXd::Zero(n, n);
  p.c = VectorXd::Zero(n);
  p.A_eq = MatrixXd::Zero(l.stage2 ? (l.N + 1) * (l.S + 1) : l.N + 1, n);
  p.b_eq = VectorXd::Zero(p.A_eq.rows());
  p.A_in = MatrixXd::Zero(2 * l.L * (l.stage2 ? l.S + 1 : 1), n);
  p.b_in = VectorXd::Zero(p.A_in.rows());
  p.nonneg.assign(n, 1);
  for (int i = 0; i < l.N; ++i) p.nonneg[l.th1(i)] = 0;
  if (l.stage2)
    for (int w = 0; w < l.S; ++w)
      for (int i = 0; i < l.N; ++i) p.nonneg[l.th2(w, i)] = 0;

  // maximize bid welfare -> minimize generation bids minus consumption bids
  for (int k = 0; k < l.nG; ++k) p.c[l.yG1(k)] = bids.gen_b1[k];
  for (int k = 0; k < l.nL; ++k) p.c[l.yL1(k)] = -bids.lse_b1[k];
  if (l.stage2)
    for (int w = 0; w < l.S; ++w) {
      double pw = scen.scenarios[w].prob;
      for (int k = 0; k < l.nG; ++k) p.c[l.yG2(w, k)] = pw * bids.gen_b2(k, w);
      for (int k = 0; k < l.nL; ++k) p.c[l.yL2(w, k)] = -pw * bids.lse_b2(k, w);
    }

  for (int k = 0; k < l.nG; ++k) p.A_eq(l.eq_bal1(net.generators[k].bus), l.yG1(k)) = -1.0;
  for (int k = 0; k < l.nL; ++k) p.A_eq(l.eq_bal1(net.lses[k].bus), l.yL1(k)) = 1.0;
  for (const Line& ln : net.lines) {
    p.A_eq(l.eq_bal1(ln.i), l.th1(ln.i)) += ln.susceptance;
    p.A_eq(l.eq_bal1(ln.i), l.th1(ln.j)) -= ln.susceptance;
    p.A_eq(l.eq_bal1(ln.j), l.th1(ln.j)) += ln.susceptance;
    p.A_eq(l.eq_bal1(ln.j), l.th1(ln.i)) -= ln.susceptance;
  }
  p.A_eq(l.eq_pin1(), l.th1(net.reference_bus)) = 1.0;
  if (l.stage2)
    for (int w = 0; w < l.S; ++w) {
      for (int k = 0; k < l.nG; ++k)
        p.A_eq(l.eq_bal2(w, net.generators[k].bus), l.yG2(w, k)) = -1.0;
      for (int k = 0; k < l.nL; ++k)
        p.A_eq(l.eq_bal2(w, net.lses[k].bus), l.yL2(w, k)) = 1.0;
      for (const Line& ln : net.lines) {
        p.A_eq(l.eq_bal2(w, ln.i), l.th2(w, ln.i)) += ln.susceptance;
        p.A_eq(l.eq_bal2(w, ln.i), l.th2(w, ln.j)) -= ln.susceptance;
        p.A_eq(l.eq_bal2(w, ln.i), l.th1(ln.i)) -= ln.susceptance;
        p.A_eq(l.eq_bal2(w, ln.i), l.th1(ln.j)) += ln.susceptance;
        p.A_eq(l.eq_bal2(w, ln.j), l.th2(w, ln.j)) += ln.susceptance;
        p.A_eq(l.eq_bal2(w, ln.j), l.th2(w, ln.i)) -= ln.susceptance;
        p.A_eq(l.eq_bal2(w, ln.j), l.th1(ln.j)) -= ln.susceptance;
        p.A_eq(l.eq_bal2(w, ln.j), l.th1(ln.i)) += ln.susceptance;
      }
      p.A_eq(l.eq_pin2(w), l.th2(w, net.reference_bus)) = 1.0;
    }

  for (int li = 0; li < l.L; ++li) {
    const Line& ln = net.lines[li];
    p.A_in(l.in_line1(li, 0), l.th1(ln.i)) = ln.susceptance;
    p.A_in(l.in_line1(li, 0), l.th1(ln.j)) = -ln.susceptance;
    p.b_in[l.in_line1(li, 0)] = ln.flow_limit;
    p.A_in(l.in_line1(li, 1), l.th1(ln.j)) = ln.susceptance;
    p.A_in(l.in_line1(li, 1), l.th1(ln.i)) = -ln.susceptance;
    p.b_in[l.in_line1(li, 1)] = ln.flow_limit;
    if (l.stage2)
      for (int w = 0; w < l.S; ++w) {
        p.A_in(l.in_line2(w, li, 0), l.th2(w, ln.i)) = ln.susceptance;
        p.A_in(l.in_line2(w, li, 0), l.th2(w, ln.j)) = -ln.susceptance;
        p.b_in[l.in_line2(w, li, 0)] = ln.flow_limit;
        p.A_in(l.in_line2(w, li, 1), l.th2(w, ln.j)) = ln.susceptance;
        p.A_in(l.in_line2(w, li, 1), l.th2(w, ln.i)) = -ln.susceptance;
        p.b_in[l.in_line2(w, li, 1)] = ln.flow_limit;
      }
  }
  return dp;
}

namespace {

double inf_norm(const VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// candidate explanations for an unbounded bid program: a consumption bid at
// or above some generation bid makes balanced trade profitable without limit
std::vector<std::string> unbounded_notes(const Network& net, const ScenarioSet& scen,
                                         const BidProfile& bids) {
  std::vector<std::string> notes;
  const int nG = static_cast<int>(net.generators.size());
  const int nL = static_cast<int>(net.lses.size());
  double min_g1 = std::numeric_limits<double>::infinity();
  for (int k = 0; k < nG; ++k) min_g1 = std::min(min_g1, bids.gen_b1[k]);
  for (int k = 0; k < nL; ++k)
    if (bids.lse_b1[k] > min_g1)
      notes.push_back("lse " + std::to_string(k) + " day-ahead bid " +
                      std::to_string(bids.lse_b1[k]) +
                      " exceeds the cheapest generation bid " + std::to_string(min_g1));
  if (net.stage2_enabled)
    for (int w = 0; w < scen.count(); ++w) {
      double min_g2 = std::numeric_limits<double>::infinity();
      for (int k = 0; k < nG; ++k) min_g2 = std::min(min_g2, bids.gen_b2(k, w));
      for (int k = 0; k < nL; ++k)
        if (bids.lse_b2(k, w) > min_g2)
          notes.push_back("lse " + std::to_string(k) + " scenario " +
                          std::to_string(w) + " bid " +
                          std::to_string(bids.lse_b2(k, w)) +
                          " exceeds the cheapest generation bid " +
                          std::to_string(min_g2));
    }
  if (notes.empty()) notes.push_back("bid program diverged without a bid witness");
  return notes;
}

}  // namespace

ClearingOutcome clear_ded(const Network& net, const ScenarioSet& scen,
                          const BidProfile& bids, double tol) {
  ClearingOutcome out;
  DedProgram dp = assemble_ded(net, scen, bids);
  SolveResult res = solve(dp.prog, tol, 300);
  out.status = res.status;
  if (res.status == SolveStatus::Unbounded) {
    out.notes = unbounded_notes(net, scen, bids);
    return out;
  }
  if (res.status != SolveStatus::Optimal) {
    out.notes.push_back(std::string("bid clearing failed: ") + to_string(res.status));
    return out;
  }
  const SppLayout& l = dp.layout;
  out.bid_objective = -res.objective;

  // prices from the bid program's balance duals
  out.lambda1.resize(l.N);
  for (int i = 0; i < l.N; ++i) out.lambda1[i] = res.duals.lambda_eq[l.eq_bal1(i)];
  out.gamma1.resize(2 * l.L);
  for (int li = 0; li < l.L; ++li)
    for (int d = 0; d < 2; ++d) out.gamma1[2 * li + d] = res.duals.mu_in[l.in_line1(li, d)];
  out.lambda2.resize(l.stage2 ? l.S : 0);
  out.gamma2.resize(l.stage2 ? l.S : 0);
  if (l.stage2)
    for (int w = 0; w < l.S; ++w) {
      double pw = scen.scenarios[w].prob;
      out.lambda2[w].resize(l.N);
      for (int i = 0; i < l.N; ++i)
        out.lambda2[w][i] = res.duals.lambda_eq[l.eq_bal2(w, i)] / pw;
      out.gamma2[w].resize(2 * l.L);
      for (int li = 0; li < l.L; ++li)
        for (int d = 0; d < 2; ++d)
          out.gamma2[w][2 * li + d] = res.duals.mu_in[l.in_line2(w, li, d)] / pw;
    }

  // Tie-break the dispatch: maximize true welfare over the bid-optimal face.
  // The face is read off the interior-point duals, which are strictly
  // complementary in the limit: variables with positive reduced cost are
  // fixed at zero and line rows carrying positive congestion duals stay
  // tight. Within that face the planner objective selects the dispatch.
  SppProgram tie = assemble_spp(net, scen);
  {
    double price_scale = inf_norm(out.lambda1);
    for (const VectorXd& v : out.lambda2) price_scale = std::max(price_scale, inf_norm(v));
    const double act = 1e-6 * (1.0 + price_scale);
    const SppLayout& tl = tie.layout;

    std::vector<int> fixed_vars;
    for (int k = 0; k < tl.nG; ++k) {
      if (bids.gen_b1[k] - out.lambda1[net.generators[k].bus] > act)
        fixed_vars.push_back(tl.yG1(k));
      if (tl.stage2)
        for (int w = 0; w < tl.S; ++w)
          if (bids.gen_b2(k, w) - out.lambda2[w][net.generators[k].bus] > act)
            fixed_vars.push_back(tl.yG2(w, k));
    }
    for (int k = 0; k < tl.nL; ++k) {
      if (out.lambda1[net.lses[k].bus] - bids.lse_b1[k] > act)
        fixed_vars.push_back(tl.yL1(k));
      if (tl.stage2)
        for (int w = 0; w < tl.S; ++w)
          if (out.lambda2[w][net.lses[k].bus] - bids.lse_b2(k, w) > act)
            fixed_vars.push_back(tl.yL2(w, k));
    }
    std::vector<int> pinned_rows;
    for (int li = 0; li < tl.L; ++li) {
      // at most one direction per line and stage keeps the pins independent
      int d1 = out.gamma1[2 * li] > act ? 0 : (out.gamma1[2 * li + 1] > act ? 1 : -1);
      if (d1 >= 0) pinned_rows.push_back(tl.in_line1(li, d1));
      if (tl.stage2)
        for (int w = 0; w < tl.S; ++w) {
          int d2 = out.gamma2[w][2 * li] > act
                       ? 0
                       : (out.gamma2[w][2 * li + 1] > act ? 1 : -1);
          if (d2 >= 0) pinned_rows.push_back(tl.in_line2(w, li, d2));
        }
    }

    const int n = tl.num_vars();
    const int base = static_cast<int>(tie.prog.A_eq.rows());
    const int extra = static_cast<int>(fixed_vars.size() + pinned_rows.size());
    MatrixXd Aeq(base + extra, n);
    Aeq.topRows(base) = tie.prog.A_eq;
    VectorXd beq(base + extra);
    beq.head(base) = tie.prog.b_eq;
    int r = base;
    for (int v : fixed_vars) {
      Aeq.row(r).setZero();
      Aeq(r, v) = 1.0;
      beq[r] = 0.0;
      ++r;
    }
    for (int row : pinned_rows) {
      Aeq.row(r) = tie.prog.A_in.row(row);
      beq[r] = tie.prog.b_in[row];
      ++r;
    }
    tie.prog.A_eq = Aeq;
    tie.prog.b_eq = beq;
  }
  SolveResult tied = solve(tie.prog, tol, 300);
  Allocation& a = out.allocation;
  a.stage2.resize(l.S);
  if (tied.status == SolveStatus::Optimal) {
    PlannerSolution sel = extract_planner(net, scen, tie, tied);
    a.yG1 = sel.allocation.yG1;
    a.yL1 = sel.allocation.yL1;
    a.theta1 = sel.allocation.theta1;
    for (int w = 0; w < l.S; ++w)
      if (l.stage2) {
        a.stage2[w].yG2 = sel.allocation.stage2[w].yG2;
        a.stage2[w].yL2 = sel.allocation.stage2[w].yL2;
        a.stage2[w].theta2 = sel.allocation.stage2[w].theta2;
      }
  } else {
    // fall back to the first solve's dispatch; only degenerate ties lose
    // their welfare-based selection
    out.notes.push_back(std::string("tie-breaking solve returned ") +
                        to_string(tied.status) + ", reporting the raw dispatch");
    a.yG1.resize(l.nG);
    a.yL1.resize(l.nL);
    a.theta1.resize(l.N);
    for (int k = 0; k < l.nG; ++k) a.yG1[k] = res.x[l.yG1(k)];
    for (int k = 0; k < l.nL; ++k) a.yL1[k] = res.x[l.yL1(k)];
    for (int i = 0; i < l.N; ++i) a.theta1[i] = res.x[l.th1(i)];
    for (int w = 0; w < l.S; ++w)
      if (l.stage2) {
        a.stage2[w].yG2.resize(l.nG);
        a.stage2[w].yL2.resize(l.nL);
        a.stage2[w].theta2.resize(l.N);
        for (int k = 0; k < l.nG; ++k) a.stage2[w].yG2[k] = res.x[l.yG2(w, k)];
        for (int k = 0; k < l.nL; ++k) a.stage2[w].yL2[k] = res.x[l.yL2(w, k)];
        for (int i = 0; i < l.N; ++i) a.stage2[w].theta2[i] = res.x[l.th2(w, i)];
      }
  }
  out.true_welfare = dispatch_welfare(net, scen, a);

  // payoffs with true costs and utilities at the cleared prices
  out.gen_payoff.resize(l.nG);
  for (int k = 0; k < l.nG; ++k) {
    const Generator& g = net.generators[k];
    double v = out.lambda1[g.bus] * a.yG1[k] - g.primary_cost.value(a.yG1[k]);
    if (l.stage2)
      for (int w = 0; w < l.S; ++w) {
        double pw = scen.scenarios[w].prob;
        v += pw * (out.lambda2[w][g.bus] * a.stage2[w].yG2[k] -
                   g.ancillary_cost.value(a.stage2[w].yG2[k]));
      }
    out.gen_payoff[k] = v;
  }
  out.lse_payoff.resize(l.nL);
  for (int k = 0; k < l.nL; ++k) {
    const Lse& s = net.lses[k];
    double v = -out.lambda1[s.bus] * a.yL1[k];
    for (int w = 0; w < l.S; ++w) {
      double pw = scen.scenarios[w].prob;
      double y2 = l.stage2 ? a.stage2[w].yL2[k] : 0.0;
      v += pw * lse_utility(s, a.yL1[k], y2, scen.scenarios[w].output[k]).value;
      if (l.stage2) v -= pw * out.lambda2[w][s.bus] * y2;
    }
    out.lse_payoff[k] = v;
  }
  return out;
}

BidProfile efficient_bids(const Network& net, const PlannerSolution& planner) {
  BidProfile b;
  const int nG = static_cast<int>(net.generators.size());
  const int nL = static_cast<int>(net.lses.size());
  const int S = static_cast<int>(planner.mu.size());
  const int S2 = net.stage2_enabled ? S : 0;
  b.gen_b1.resize(nG);
  b.lse_b1.resize(nL);
  b.gen_b2.resize(nG, S2);
  b.lse_b2.resize(nL, S2);
  for (int k = 0; k < nG; ++k) {
    b.gen_b1[k] = planner.lambda1[net.generators[k].bus];
    for (int w = 0; w < S2; ++w) b.gen_b2(k, w) = planner.lambda2[w][net.generators[k].bus];
  }
  for (int k = 0; k < nL; ++k) {
    b.lse_b1[k] = planner.lambda1[net.lses[k].bus];
    for (int w = 0; w < S2; ++w) b.lse_b2(k, w) = planner.lambda2[w][net.lses[k].bus];
  }
  return b;
}

BidProfile efficient_bids(const Network& net, const ScenarioSet& scen) {
  return efficient_bids(net, solve_spp(net, scen));
}

bool congestion_free(const PlannerSolution& planner, const Network& net,
                     double slack_rel) {
  const Allocation& a = planner.allocation;
  for (const Line& ln : net.lines) {
    double slack = slack_rel * ln.flow_limit;
    double f1 = ln.susceptance * (a.theta1[ln.i] - a.theta1[ln.j]);
    if (!(f1 <= ln.flow_limit - slack) || !(-f1 <= ln.flow_limit - slack)) return false;
    if (!net.stage2_enabled) continue;
    for (const StageTwoAllocation& st : a.stage2) {
      double f2 = ln.susceptance * (st.theta2[ln.i] - st.theta2[ln.j]);
      if (!(f2 <= ln.flow_limit - slack) || !(-f2 <= ln.flow_limit - slack)) return false;
    }
  }
  return true;
}

bool monopoly_free(const Network& net) {
  for (int i = 0; i < net.n_buses; ++i) {
    int g = static_cast<int>(net.generators_at(i).size());
    int l = static_cast<int>(net.lses_at(i).size());
    if (g == 1 || l == 1) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// demand-response bidding game (single stage)

DrBidProgram assemble_dr_bid(const Network& net, const ScenarioSet& scen,
                             const VectorXd& gen_bids, const VectorXd& lse_dr_bids) {
  DrBidProgram gp;
  DrBidLayout& l = gp.layout;
  l.nG = static_cast<int>(net.generators.size());
  l.nL = static_cast<int>(net.lses.size());
  l.N = net.n_buses;
  l.L = static_cast<int>(net.lines.size());
  const int n = l.num_vars();
  StandardProgram& p = gp.prog;
  p.Q = MatrixXd::Zero(n, n);
  p.c = VectorXd::Zero(n);
  p.A_eq = MatrixXd::Zero(l.N + 1, n);
  p.b_eq = VectorXd::Zero(l.N + 1);
  p.A_in = MatrixXd::Zero(2 * l.L + l.nL, n);
  p.b_in = VectorXd::Zero(2 * l.L + l.nL);
  p.nonneg.assign(n, 1);
  for (int i = 0; i < l.N; ++i) p.nonneg[l.th(i)] = 0;

  // minimize reported service cost: generation at energy bids, demand
  // response at DR bids; delivery itself is unpriced
  for (int k = 0; k < l.nG; ++k) p.c[l.yG(k)] = gen_bids[k];
  for (int k = 0; k < l.nL; ++k) p.c[l.x(k)] = lse_dr_bids[k];

  for (int k = 0; k < l.nG; ++k) p.A_eq(l.eq_bal(net.generators[k].bus), l.yG(k)) = -1.0;
  for (int k = 0; k < l.nL; ++k) p.A_eq(l.eq_bal(net.lses[k].bus), l.yL(k)) = 1.0;
  for (const Line& ln : net.lines) {
    p.A_eq(l.eq_bal(ln.i), l.th(ln.i)) += ln.susceptance;
    p.A_eq(l.eq_bal(ln.i), l.th(ln.j)) -= ln.susceptance;
    p.A_eq(l.eq_bal(ln.j), l.th(ln.j)) += ln.susceptance;
    p.A_eq(l.eq_bal(ln.j), l.th(ln.i)) -= ln.susceptance;
  }
  p.A_eq(l.eq_pin(), l.th(net.reference_bus)) = 1.0;

  for (int li = 0; li < l.L; ++li) {
    const Line& ln = net.lines[li];
    p.A_in(l.in_line(li, 0), l.th(ln.i)) = ln.susceptance;
    p.A_in(l.in_line(li, 0), l.th(ln.j)) = -ln.susceptance;
    p.b_in[l.in_line(li, 0)] = ln.flow_limit;
    p.A_in(l.in_line(li, 1), l.th(ln.j)) = ln.susceptance;
    p.A_in(l.in_line(li, 1), l.th(ln.i)) = -ln.susceptance;
    p.b_in[l.in_line(li, 1)] = ln.flow_limit;
  }
  for (int k = 0; k < l.nL; ++k) {
    p.A_in(l.in_demand(k), l.yL(k)) = -1.0;
    p.A_in(l.in_demand(k), l.x(k)) = -1.0;
    p.b_in[l.in_demand(k)] = -(net.lses[k].demand - scen.scenarios[0].output[k]);
  }
  return gp;
}

DrBidOutcome clear_dr_bid_game(const Network& net, const ScenarioSet& scen,
                               const VectorXd& gen_bids, const VectorXd& lse_dr_bids,
                               double tol) {
  if (scen.count() != 1 || net.stage2_enabled)
    throw std::invalid_argument(
        "clear_dr_bid_game requires a single scenario and a disabled second stage");
  DrBidOutcome out;
  DrBidProgram gp = assemble_dr_bid(net, scen, gen_bids, lse_dr_bids);
  SolveResult res = solve(gp.prog, tol, 300);
  out.status = res.status;
  if (res.status != SolveStatus::Optimal) {
    out.notes.push_back(std::string("bid clearing failed: ") + to_string(res.status));
    return out;
  }
  const DrBidLayout& l = gp.layout;
  out.bid_cost = res.objective;
  out.lambda.resize(l.N);
  for (int i = 0; i < l.N; ++i) out.lambda[i] = res.duals.lambda_eq[l.eq_bal(i)];
  out.mu.resize(l.nL);
  for (int k = 0; k < l.nL; ++k) out.mu[k] = res.duals.mu_in[l.in_demand(k)];
  out.gamma.resize(2 * l.L);
  for (int li = 0; li < l.L; ++li)
    for (int d = 0; d < 2; ++d) out.gamma[2 * li + d] = res.duals.mu_in[l.in_line(li, d)];

  // tie-break by true cost over the bid-optimal face, read off the strictly
  // complementary duals: zero out positive reduced costs, keep tight rows tight
  {
    StandardProgram p = gp.prog;
    for (int k = 0; k < l.nG; ++k) {
      p.Q(l.yG(k), l.yG(k)) = 2.0 * net.generators[k].primary_cost.a;
      p.c[l.yG(k)] = net.generators[k].primary_cost.b;
    }
    for (int k = 0; k < l.nL; ++k) {
      p.Q(l.x(k), l.x(k)) = 2.0 * net.lses[k].dr_cost.a;
      p.c[l.x(k)] = net.lses[k].dr_cost.b;
    }
    const double act = 1e-6 * (1.0 + std::max(inf_norm(out.lambda), inf_norm(out.mu)));
    std::vector<int> fixed_vars;
    for (int k = 0; k < l.nG; ++k)
      if (gen_bids[k] - out.lambda[net.generators[k].bus] > act)
        fixed_vars.push_back(l.yG(k));
    for (int k = 0; k < l.nL; ++k) {
      if (out.lambda[net.lses[k].bus] - out.mu[k] > act) fixed_vars.push_back(l.yL(k));
      if (lse_dr_bids[k] - out.mu[k] > act) fixed_vars.push_back(l.x(k));
    }
    std::vector<int> pinned_rows;
    for (int li = 0; li < l.L; ++li) {
      int d = out.gamma[2 * li] > act ? 0 : (out.gamma[2 * li + 1] > act ? 1 : -1);
      if (d >= 0) pinned_rows.push_back(l.in_line(li, d));
    }
    for (int k = 0; k < l.nL; ++k)
      if (out.mu[k] > act) pinned_rows.push_back(l.in_demand(k));

    const int n = l.num_vars();
    const int base = static_cast<int>(p.A_eq.rows());
    MatrixXd Aeq(base + fixed_vars.size() + pinned_rows.size(), n);
    Aeq.topRows(base) = p.A_eq;
    VectorXd beq(Aeq.rows());
    beq.head(base) = p.b_eq;
    int r = base;
    for (int v : fixed_vars) {
      Aeq.row(r).setZero();
      Aeq(r, v) = 1.0;
      beq[r] = 0.0;
      ++r;
    }
    for (int row : pinned_rows) {
      Aeq.row(r) = p.A_in.row(row);
      beq[r] = p.b_in[row];
      ++r;
    }
    p.A_eq = Aeq;
    p.b_eq = beq;
    SolveResult tied = solve(p, tol, 300);
    const VectorXd& sel = tied.status == SolveStatus::Optimal ? tied.x : res.x;
    if (tied.status != SolveStatus::Optimal)
      out.notes.push_back(std::string("tie-breaking solve returned ") +
                          to_string(tied.status) + ", reporting the raw dispatch");
    out.yG.resize(l.nG);
    out.yL.resize(l.nL);
    out.x.resize(l.nL);
    out.theta.resize(l.N);
    for (int k = 0; k < l.nG; ++k) out.yG[k] = sel[l.yG(k)];
    for (int k = 0; k < l.nL; ++k) out.yL[k] = sel[l.yL(k)];
    for (int k = 0; k < l.nL; ++k) out.x[k] = sel[l.x(k)];
    for (int i = 0; i < l.N; ++i) out.theta[i] = sel[l.th(i)];
  }

  out.gen_payoff.resize(l.nG);
  for (int k = 0; k < l.nG; ++k) {
    const Generator& g = net.generators[k];
    out.gen_payoff[k] = out.lambda[g.bus] * out.yG[k] - g.primary_cost.value(out.yG[k]);
  }
  out.lse_payoff.resize(l.nL);
  double welfare = 0.0;
  for (int k = 0; k < l.nG; ++k)
    welfare -= net.generators[k].primary_cost.value(out.yG[k]);
  for (int k = 0; k < l.nL; ++k) {
    const Lse& s = net.lses[k];
    out.lse_payoff[k] = -out.lambda[s.bus] * out.yL[k] - s.dr_cost.value(out.x[k]);
    welfare -= s.dr_cost.value(out.x[k]);
  }
  out.true_welfare = welfare;
  return out;
}

// ---------------------------------------------------------------------------
// deviation search

namespace {

// log-uniform grid over [lo_factor, hi_factor] x current, with optional zero
std::vector<double> probe_grid(double current, const DeviationSearchSpec& spec) {
  std::vector<double> g;
  double base = current > 0.0 ? current : spec.zero_bid_span;
  double lo = spec.lo_factor * base;
  double hi = spec.hi_factor * base;
  int m = std::max(2, spec.grid_points);
  double ratio = std::pow(hi / lo, 1.0 / (m - 1));
  double v = lo;
  for (int i = 0; i < m; ++i) {
    g.push_back(v);
    v *= ratio;
  }
  if (spec.probe_zero) g.insert(g.begin(), 0.0);
  g.push_back(current);
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

constexpr double kInvalidPayoff = -1e300;

// deterministic golden-section refinement of a payoff maximum
double golden_refine(const std::function<double(double)>& payoff, double lo, double hi,
                     double rel_width, double& best_bid, double& best_val) {
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double x1 = b - phi * (b - a);
  double x2 = a + phi * (b - a);
  double f1 = payoff(x1), f2 = payoff(x2);
  for (int it = 0; it < 80 && (b - a) > rel_width * (1.0 + std::abs(0.5 * (a + b)));
       ++it) {
    if (f1 >= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = payoff(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = payoff(x2);
    }
  }
  if (f1 >= f2 && f1 > best_val) {
    best_val = f1;
    best_bid = x1;
  } else if (f2 > f1 && f2 > best_val) {
    best_val = f2;
    best_bid = x2;
  }
  return best_val;
}

DeviationResult search_one_agent(
    const std::function<double(int, double, bool&)>& payoff_at, double base_payoff,
    const std::vector<double>& current_bids, const DeviationSearchSpec& spec,
    const AgentRef& agent) {
  DeviationResult out;
  out.agent = agent;
  out.base_payoff = base_payoff;
  out.best_payoff = base_payoff;
  out.best_bid = current_bids.empty() ? 0.0 : current_bids[0];
  out.best_coordinate = 0;

  for (int coord = 0; coord < static_cast<int>(current_bids.size()); ++coord) {
    std::vector<double> grid = probe_grid(current_bids[coord], spec);
    std::vector<double> vals(grid.size(), kInvalidPayoff);
    for (size_t i = 0; i < grid.size(); ++i) {
      bool ok = false;
      double v = payoff_at(coord, grid[i], ok);
      DeviationProbe probe{coord, grid[i], ok ? v : 0.0, ok};
      out.probes.push_back(probe);
      if (!ok) {
        ++out.skipped;
        continue;
      }
      vals[i] = v;
    }
    // best grid point, ties to the lowest bid
    int best_i = -1;
    for (size_t i = 0; i < grid.size(); ++i)
      if (vals[i] > kInvalidPayoff &&
          (best_i < 0 || vals[i] > vals[best_i] + 0.0)) {
        best_i = static_cast<int>(i);
      }
    if (best_i < 0) continue;
    double cand_bid = grid[best_i];
    double cand_val = vals[best_i];
    // refine between the neighbouring grid points
    double lo = best_i > 0 ? grid[best_i - 1] : grid[best_i];
    double hi = best_i + 1 < static_cast<int>(grid.size()) ? grid[best_i + 1]
                                                           : grid[best_i];
    if (hi > lo) {
      auto f = [&](double bidv) {
        bool ok = false;
        double v = payoff_at(coord, bidv, ok);
        out.probes.push_back({coord, bidv, ok ? v : 0.0, ok});
        if (!ok) {
          ++out.skipped;
          return kInvalidPayoff;
        }
        return v;
      };
      golden_refine(f, lo, hi, spec.refine_rel, cand_bid, cand_val);
    }
    if (cand_val > out.best_payoff ||
        (cand_val == out.best_payoff && cand_bid < out.best_bid)) {
      out.best_payoff = cand_val;
      out.best_bid = cand_bid;
      out.best_coordinate = coord;
    }
  }
  out.gain = std::max(0.0, out.best_payoff - out.base_payoff);
  return out;
}

}  // namespace

DeviationResult best_deviation(const Network& net, const ScenarioSet& scen,
                               const BidProfile& bids, const AgentRef& agent,
                               const DeviationSearchSpec& spec) {
  ClearingOutcome base = clear_ded(net, scen, bids);
  if (base.status != SolveStatus::Optimal)
    throw std::runtime_error("best_deviation: base profile does not clear");

  const bool is_gen = agent.kind == AgentKind::Generator;
  double base_payoff =
      is_gen ? base.gen_payoff[agent.index] : base.lse_payoff[agent.index];
  const int S2 = net.stage2_enabled ? scen.count() : 0;
  std::vector<double> current(1 + S2);
  current[0] = is_gen ? bids.gen_b1[agent.index] : bids.lse_b1[agent.index];
  for (int w = 0; w < S2; ++w)
    current[1 + w] = is_gen ? bids.gen_b2(agent.index, w) : bids.lse_b2(agent.index, w);

  auto payoff_at = [&](int coord, double bid, bool& ok) {
    BidProfile probe = bids;
    if (is_gen) {
      if (coord == 0)
        probe.gen_b1[agent.index] = bid;
      else
        probe.gen_b2(agent.index, coord - 1) = bid;
    } else {
      if (coord == 0)
        probe.lse_b1[agent.index] = bid;
      else
        probe.lse_b2(agent.index, coord - 1) = bid;
    }
    ok = false;
    try {
      ClearingOutcome o = clear_ded(net, scen, probe);
      ok = o.status == SolveStatus::Optimal;
      if (ok) return is_gen ? o.gen_payoff[agent.index] : o.lse_payoff[agent.index];
    } catch (const std::exception&) {
      // recorded against the probe and skipped
    }
    return 0.0;
  };
  return search_one_agent(payoff_at, base_payoff, current, spec, agent);
}

DeviationResult best_dr_bid_deviation(const Network& net, const ScenarioSet& scen,
                                      const VectorXd& gen_bids,
                                      const VectorXd& lse_dr_bids, int lse_index,
                                      const DeviationSearchSpec& spec) {
  DrBidOutcome base = clear_dr_bid_game(net, scen, gen_bids, lse_dr_bids);
  if (base.status != SolveStatus::Optimal)
    throw std::runtime_error("best_dr_bid_deviation: base profile does not clear");
  std::vector<double> current{lse_dr_bids[lse_index]};
  auto payoff_at = [&](int, double bid, bool& ok) {
    VectorXd probe = lse_dr_bids;
    probe[lse_index] = bid;
    ok = false;
    try {
      DrBidOutcome o = clear_dr_bid_game(net, scen, gen_bids, probe);
      ok = o.status == SolveStatus::Optimal;
      if (ok) return o.lse_payoff[lse_index];
    } catch (const std::exception&) {
      // recorded against the probe and skipped
    }
    return 0.0;
  };
  AgentRef ref{AgentKind::Lse, lse_index};
  return search_one_agent(payoff_at, base.lse_payoff[lse_index], current, spec, ref);
}

bool feasible_without_each_generator(const Network& net, const ScenarioSet& scen) {
  for (int k = 0; k < static_cast<int>(net.generators.size()); ++k) {
    Network reduced = net;
    reduced.generators.erase(reduced.generators.begin() + k);
    try {
      solve_spp_u(reduced, scen);
    } catch (const std::exception&) {
      return false;
    }
  }
  return true;
}

}  // namespace tsmarket
