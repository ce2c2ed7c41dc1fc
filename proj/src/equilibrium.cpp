#include "tsmarket/equilibrium.hpp"

#include <cmath>
#include <stdexcept>

namespace tsmarket {

SceqPoint construct_sceq(const Network& net, const ScenarioSet& scen) {
  SceqPoint out;
  out.planner = solve_spp(net, scen);
  out.allocation = out.planner.allocation;
  out.prices.p1 = out.planner.lambda1;
  out.prices.p2 = out.planner.lambda2;
  return out;
}

SceqCertificate verify_sceq(const Network& net, const ScenarioSet& scen,
                            const Allocation& alloc, const PriceSystem& prices,
                            const VerifyOptions& opt) {
  SceqCertificate cert;
  cert.prices = prices;
  cert.gap_tol = opt.gap_tol;
  cert.clearing_tol = opt.clearing_tol;

  const int S = scen.count();
  const double welfare = evaluate_welfare(net, scen, alloc);
  const double gap_scale = 1.0 + std::abs(welfare);

  for (int k = 0; k < static_cast<int>(net.generators.size()); ++k) {
    const Generator& g = net.generators[k];
    BusPrices bp = prices.at_bus(g.bus);
    GenResponse best = gen_best_response(g, bp, scen);
    VectorXd y2 = VectorXd::Zero(bp.p2.size());
    if (net.stage2_enabled)
      for (int w = 0; w < S && w < static_cast<int>(y2.size()); ++w)
        y2[w] = alloc.stage2[w].yG2[k];
    AgentGap a;
    a.kind = AgentKind::Generator;
    a.index = k;
    a.bus = g.bus;
    a.best_objective = best.profit;
    a.objective_at_allocation = gen_objective_at(g, bp, scen, alloc.yG1[k], y2);
    a.gap = std::max(0.0, a.best_objective - a.objective_at_allocation);
    cert.gaps.push_back(a);
  }
  for (int k = 0; k < static_cast<int>(net.lses.size()); ++k) {
    const Lse& s = net.lses[k];
    BusPrices bp = prices.at_bus(s.bus);
    AgentGap a;
    a.kind = AgentKind::Lse;
    a.index = k;
    a.bus = s.bus;
    try {
      LseResponse best = lse_best_response(s, k, bp, scen, net.stage2_enabled,
                                           opt.solve_tol);
      a.best_objective = best.utility;
    } catch (const std::exception& e) {
      cert.reasons.push_back("lse " + std::to_string(k) +
                             " best response failed: " + e.what());
      a.best_objective = std::numeric_limits<double>::infinity();
    }
    VectorXd y2 = VectorXd::Zero(S), x(S), z(S);
    for (int w = 0; w < S; ++w) {
      if (net.stage2_enabled) y2[w] = alloc.stage2[w].yL2[k];
      x[w] = alloc.stage2[w].xL2[k];
      z[w] = alloc.stage2[w].zL2[k];
    }
    a.objective_at_allocation =
        lse_objective_at(s, bp, scen, alloc.yL1[k], net.stage2_enabled ? y2 : VectorXd(),
                         x, z);
    a.gap = std::max(0.0, a.best_objective - a.objective_at_allocation);
    cert.gaps.push_back(a);
  }

  cert.stage1_clearing = std::abs(alloc.yG1.sum() - alloc.yL1.sum());
  cert.stage2_clearing = VectorXd::Zero(net.stage2_enabled ? S : 0);
  for (int w = 0; w < cert.stage2_clearing.size(); ++w)
    cert.stage2_clearing[w] =
        std::abs(alloc.stage2[w].yG2.sum() - alloc.stage2[w].yL2.sum());

  cert.max_gap = 0.0;
  for (const AgentGap& a : cert.gaps) cert.max_gap = std::max(cert.max_gap, a.gap);
  cert.max_clearing = cert.stage1_clearing;
  for (int w = 0; w < cert.stage2_clearing.size(); ++w)
    cert.max_clearing = std::max(cert.max_clearing, cert.stage2_clearing[w]);

  bool gaps_ok = cert.max_gap <= opt.gap_tol * gap_scale;
  bool clearing_ok = cert.max_clearing <= opt.clearing_tol;
  if (!gaps_ok)
    for (const AgentGap& a : cert.gaps)
      if (a.gap > opt.gap_tol * gap_scale)
        cert.reasons.push_back(
            std::string(a.kind == AgentKind::Generator ? "generator " : "lse ") +
            std::to_string(a.index) + " at bus " + std::to_string(a.bus) +
            " has best-response gap " + std::to_string(a.gap));
  if (!clearing_ok)
    cert.reasons.push_back("market clearing residual " +
                           std::to_string(cert.max_clearing));
  cert.pass = gaps_ok && clearing_ok && cert.reasons.empty();
  return cert;
}

namespace {

// surplus of a dispatch: sum_i P_i * (consumption_i - generation_i), staged
double surplus_at(const Network& net, const ScenarioSet& scen,
                  const PriceSystem& prices, const Allocation& alloc) {
  double v = 0.0;
  for (int k = 0; k < static_cast<int>(net.generators.size()); ++k)
    v -= prices.p1[net.generators[k].bus] * alloc.yG1[k];
  for (int k = 0; k < static_cast<int>(net.lses.size()); ++k)
    v += prices.p1[net.lses[k].bus] * alloc.yL1[k];
  if (!net.stage2_enabled) return v;
  for (int w = 0; w < scen.count(); ++w) {
    double pw = scen.scenarios[w].prob;
    for (int k = 0; k < static_cast<int>(net.generators.size()); ++k)
      v -= pw * prices.p2[w][net.generators[k].bus] * alloc.stage2[w].yG2[k];
    for (int k = 0; k < static_cast<int>(net.lses.size()); ++k)
      v += pw * prices.p2[w][net.lses[k].bus] * alloc.stage2[w].yL2[k];
  }
  return v;
}

}  // namespace

IsoSurplus iso_surplus(const Network& net, const ScenarioSet& scen,
                       const PriceSystem& prices, const Allocation& alloc) {
  IsoSurplus out;
  out.at_allocation = surplus_at(net, scen, prices, alloc);

  // operator's program over network-feasible dispatches at fixed prices:
  // same constraint structure as the dispatch problems, linear objective
  SppLayout l;
  l.nG = static_cast<int>(net.generators.size());
  l.nL = static_cast<int>(net.lses.size());
  l.N = net.n_buses;
  l.S = scen.count();
  l.L = static_cast<int>(net.lines.size());
  l.stage2 = net.stage2_enabled;
  l.service_tail = true;  // core dispatch ordering; service block unused below

  const int core1 = l.nG + l.nL + l.N;
  const int n = core1 + (l.stage2 ? l.S * (l.nG + l.nL + l.N) : 0);
  StandardProgram p;
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

  // maximize surplus -> minimize its negation
  for (int k = 0; k < l.nG; ++k) p.c[l.yG1(k)] = prices.p1[net.generators[k].bus];
  for (int k = 0; k < l.nL; ++k) p.c[l.yL1(k)] = -prices.p1[net.lses[k].bus];
  if (l.stage2)
    for (int w = 0; w < l.S; ++w) {
      double pw = scen.scenarios[w].prob;
      for (int k = 0; k < l.nG; ++k)
        p.c[l.yG2(w, k)] = pw * prices.p2[w][net.generators[k].bus];
      for (int k = 0; k < l.nL; ++k)
        p.c[l.yL2(w, k)] = -pw * prices.p2[w][net.lses[k].bus];
    }

  // reuse the planner row builders via a scratch assembly of matching shape
  {
    MatrixXd Aeq = MatrixXd::Zero(p.A_eq.rows(), n);
    for (int k = 0; k < l.nG; ++k) Aeq(l.eq_bal1(net.generators[k].bus), l.yG1(k)) = -1.0;
    for (int k = 0; k < l.nL; ++k) Aeq(l.eq_bal1(net.lses[k].bus), l.yL1(k)) = 1.0;
    for (const Line& ln : net.lines) {
      Aeq(l.eq_bal1(ln.i), l.th1(ln.i)) += ln.susceptance;
      Aeq(l.eq_bal1(ln.i), l.th1(ln.j)) -= ln.susceptance;
      Aeq(l.eq_bal1(ln.j), l.th1(ln.j)) += ln.susceptance;
      Aeq(l.eq_bal1(ln.j), l.th1(ln.i)) -= ln.susceptance;
    }
    Aeq(l.eq_pin1(), l.th1(net.reference_bus)) = 1.0;
    if (l.stage2)
      for (int w = 0; w < l.S; ++w) {
        for (int k = 0; k < l.nG; ++k)
          Aeq(l.eq_bal2(w, net.generators[k].bus), l.yG2(w, k)) = -1.0;
        for (int k = 0; k < l.nL; ++k)
          Aeq(l.eq_bal2(w, net.lses[k].bus), l.yL2(w, k)) = 1.0;
        for (const Line& ln : net.lines) {
          Aeq(l.eq_bal2(w, ln.i), l.th2(w, ln.i)) += ln.susceptance;
          Aeq(l.eq_bal2(w, ln.i), l.th2(w, ln.j)) -= ln.susceptance;
          Aeq(l.eq_bal2(w, ln.i), l.th1(ln.i)) -= ln.susceptance;
          Aeq(l.eq_bal2(w, ln.i), l.th1(ln.j)) += ln.susceptance;
          Aeq(l.eq_bal2(w, ln.j), l.th2(w, ln.j)) += ln.susceptance;
          Aeq(l.eq_bal2(w, ln.j), l.th2(w, ln.i)) -= ln.susceptance;
          Aeq(l.eq_bal2(w, ln.j), l.th1(ln.j)) -= ln.susceptance;
          Aeq(l.eq_bal2(w, ln.j), l.th1(ln.i)) += ln.susceptance;
        }
        Aeq(l.eq_pin2(w), l.th2(w, net.reference_bus)) = 1.0;
      }
    p.A_eq = Aeq;
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

  SolveResult res = solve(p, 1e-9, 300);
  if (res.status != SolveStatus::Optimal)
    throw std::runtime_error(std::string("iso surplus solve failed: ") +
                             to_string(res.status));
  out.optimal = -res.objective;
  out.gap = out.optimal - out.at_allocation;
  return out;
}

WelfareReport check_welfare_theorems(const Network& net, const ScenarioSet& scen,
                                     double tol) {
  WelfareReport rep;
  SceqPoint eq = construct_sceq(net, scen);
  rep.planner_welfare = eq.planner.welfare;

  VerifyOptions vo;
  vo.gap_tol = tol;
  rep.certificate = verify_sceq(net, scen, eq.allocation, eq.prices, vo);

  // welfare carried by the equilibrium: agent objectives plus operator surplus
  double total = 0.0;
  for (const AgentGap& a : rep.certificate.gaps) total += a.objective_at_allocation;
  IsoSurplus surplus = iso_surplus(net, scen, eq.prices, eq.allocation);
  rep.sceq_welfare = total + surplus.at_allocation;
  rep.welfare_gap = std::abs(rep.sceq_welfare - rep.planner_welfare);
  rep.iso_gap = std::abs(surplus.gap);

  double scale = 1.0 + std::abs(rep.planner_welfare);
  rep.first_ok = rep.certificate.pass && rep.welfare_gap <= tol * scale &&
                 rep.iso_gap <= tol * scale;

  // supportability: the planner optimum together with its balance duals is a
  // KKT point of the planner program
  SppProgram sp = assemble_spp(net, scen);
  rep.support_residual = kkt_residual(sp.prog, eq.planner.raw_x, eq.planner.raw_duals);
  rep.second_ok = rep.support_residual <= tol * scale;
  rep.pass = rep.first_ok && rep.second_ok;
  return rep;
}

}  // namespace tsmarket
