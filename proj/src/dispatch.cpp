#include "tsmarket/dispatch.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>

namespace tsmarket {

// ---------------------------------------------------------------------------
// layout

int SppLayout::num_vars() const {
  int core2 = stage2 ? nG + nL + N : 0;
  return nG + nL + N + S * (core2 + 2 * nL);
}

namespace {
// per-scenario block sizes for the two orderings
int spp_block(const SppLayout& l) {
  return l.stage2 ? l.nG + 3 * l.nL + l.N : 2 * l.nL;  // cost-form block
}
int core_block(const SppLayout& l) { return l.stage2 ? l.nG + l.nL + l.N : 0; }
}  // namespace

int SppLayout::yG1(int k) const { return k; }
int SppLayout::yL1(int k) const { return nG + k; }
int SppLayout::th1(int i) const { return nG + nL + i; }

int SppLayout::yG2(int w, int k) const {
  if (!stage2) return -1;
  int base = nG + nL + N;
  return service_tail ? base + w * core_block(*this) + k : base + w * spp_block(*this) + k;
}
int SppLayout::yL2(int w, int k) const {
  if (!stage2) return -1;
  return yG2(w, 0) + nG + k;
}
int SppLayout::th2(int w, int i) const {
  if (!stage2) return -1;
  if (service_tail) return nG + nL + N + w * core_block(*this) + nG + nL + i;
  return nG + nL + N + w * spp_block(*this) + nG + 3 * nL + i;
}
int SppLayout::x2(int w, int k) const {
  int base = nG + nL + N;
  if (service_tail) return base + S * core_block(*this) + w * 2 * nL + k;
  if (!stage2) return base + w * 2 * nL + k;
  return base + w * spp_block(*this) + nG + nL + k;
}
int SppLayout::z2(int w, int k) const { return x2(w, k) + nL; }

int SppLayout::eq_bal1(int i) const { return i; }
int SppLayout::eq_pin1() const { return N; }
int SppLayout::eq_bal2(int w, int i) const { return stage2 ? (N + 1) * (w + 1) + i : -1; }
int SppLayout::eq_pin2(int w) const { return stage2 ? (N + 1) * (w + 1) + N : -1; }
int SppLayout::num_eq() const { return stage2 ? (N + 1) * (S + 1) : N + 1; }

int SppLayout::in_line1(int l, int dir) const { return 2 * l + dir; }
int SppLayout::in_line2(int w, int l, int dir) const {
  return stage2 ? 2 * L + w * 2 * L + 2 * l + dir : -1;
}
int SppLayout::in_demand(int w, int k) const {
  return 2 * L * (stage2 ? S + 1 : 1) + w * nL + k;
}
int SppLayout::num_in() const { return 2 * L * (stage2 ? S + 1 : 1) + S * nL; }

// ---------------------------------------------------------------------------
// assembly

namespace {

SppLayout make_layout(const Network& net, const ScenarioSet& scen, bool service_tail) {
  SppLayout l;
  l.nG = static_cast<int>(net.generators.size());
  l.nL = static_cast<int>(net.lses.size());
  l.N = net.n_buses;
  l.S = scen.count();
  l.L = static_cast<int>(net.lines.size());
  l.stage2 = net.stage2_enabled;
  l.service_tail = service_tail;
  return l;
}

// balance row: consumption + net outflow - generation = 0
void fill_balance_rows(const Network& net, const SppLayout& l, MatrixXd& A) {
  for (int k = 0; k < l.nG; ++k) A(l.eq_bal1(net.generators[k].bus), l.yG1(k)) = -1.0;
  for (int k = 0; k < l.nL; ++k) A(l.eq_bal1(net.lses[k].bus), l.yL1(k)) = 1.0;
  for (const Line& ln : net.lines) {
    A(l.eq_bal1(ln.i), l.th1(ln.i)) += ln.susceptance;
    A(l.eq_bal1(ln.i), l.th1(ln.j)) -= ln.susceptance;
    A(l.eq_bal1(ln.j), l.th1(ln.j)) += ln.susceptance;
    A(l.eq_bal1(ln.j), l.th1(ln.i)) -= ln.susceptance;
  }
  A(l.eq_pin1(), l.th1(net.reference_bus)) = 1.0;
  if (!l.stage2) return;
  for (int w = 0; w < l.S; ++w) {
    for (int k = 0; k < l.nG; ++k) A(l.eq_bal2(w, net.generators[k].bus), l.yG2(w, k)) = -1.0;
    for (int k = 0; k < l.nL; ++k) A(l.eq_bal2(w, net.lses[k].bus), l.yL2(w, k)) = 1.0;
    for (const Line& ln : net.lines) {
      // incremental flow: stage-2 angles against day-ahead angles
      A(l.eq_bal2(w, ln.i), l.th2(w, ln.i)) += ln.susceptance;
      A(l.eq_bal2(w, ln.i), l.th2(w, ln.j)) -= ln.susceptance;
      A(l.eq_bal2(w, ln.i), l.th1(ln.i)) -= ln.susceptance;
      A(l.eq_bal2(w, ln.i), l.th1(ln.j)) += ln.susceptance;
      A(l.eq_bal2(w, ln.j), l.th2(w, ln.j)) += ln.susceptance;
      A(l.eq_bal2(w, ln.j), l.th2(w, ln.i)) -= ln.susceptance;
      A(l.eq_bal2(w, ln.j), l.th1(ln.j)) -= ln.susceptance;
      A(l.eq_bal2(w, ln.j), l.th1(ln.i)) += ln.susceptance;
    }
    A(l.eq_pin2(w), l.th2(w, net.reference_bus)) = 1.0;
  }
}

void fill_line_rows(const Network& net, const SppLayout& l, MatrixXd& A, VectorXd& b) {
  for (int li = 0; li < l.L; ++li) {
    const Line& ln = net.lines[li];
    A(l.in_line1(li, 0), l.th1(ln.i)) = ln.susceptance;
    A(l.in_line1(li, 0), l.th1(ln.j)) = -ln.susceptance;
    b[l.in_line1(li, 0)] = ln.flow_limit;
    A(l.in_line1(li, 1), l.th1(ln.j)) = ln.susceptance;
    A(l.in_line1(li, 1), l.th1(ln.i)) = -ln.susceptance;
    b[l.in_line1(li, 1)] = ln.flow_limit;
  }
  if (!l.stage2) return;
  for (int w = 0; w < l.S; ++w)
    for (int li = 0; li < l.L; ++li) {
      const Line& ln = net.lines[li];
      A(l.in_line2(w, li, 0), l.th2(w, ln.i)) = ln.susceptance;
      A(l.in_line2(w, li, 0), l.th2(w, ln.j)) = -ln.susceptance;
      b[l.in_line2(w, li, 0)] = ln.flow_limit;
      A(l.in_line2(w, li, 1), l.th2(w, ln.j)) = ln.susceptance;
      A(l.in_line2(w, li, 1), l.th2(w, ln.i)) = -ln.susceptance;
      b[l.in_line2(w, li, 1)] = ln.flow_limit;
    }
}

// service row: -(y1 + y2 + x + z) <= -(D - w)
void fill_demand_rows(const Network& net, const ScenarioSet& scen, const SppLayout& l,
                      MatrixXd& A, VectorXd& b) {
  for (int w = 0; w < l.S; ++w)
    for (int k = 0; k < l.nL; ++k) {
      int r = l.in_demand(w, k);
      A(r, l.yL1(k)) = -1.0;
      if (l.stage2) A(r, l.yL2(w, k)) = -1.0;
      A(r, l.x2(w, k)) = -1.0;
      A(r, l.z2(w, k)) = -1.0;
      b[r] = -(net.lses[k].demand - scen.scenarios[w].output[k]);
    }
}

SppProgram assemble_planner(const Network& net, const ScenarioSet& scen,
                            bool service_tail) {
  SppProgram sp;
  sp.layout = make_layout(net, scen, service_tail);
  const SppLayout& l = sp.layout;
  const int n = l.num_vars();
  StandardProgram& p = sp.prog;
  p.Q = MatrixXd::Zero(n, n);
  p.c = VectorXd::Zero(n);
  p.A_eq = MatrixXd::Zero(l.num_eq(), n);
  p.b_eq = VectorXd::Zero(l.num_eq());
  p.A_in = MatrixXd::Zero(l.num_in(), n);
  p.b_in = VectorXd::Zero(l.num_in());
  p.nonneg.assign(n, 1);
  for (int i = 0; i < l.N; ++i) p.nonneg[l.th1(i)] = 0;
  if (l.stage2)
    for (int w = 0; w < l.S; ++w)
      for (int i = 0; i < l.N; ++i) p.nonneg[l.th2(w, i)] = 0;

  for (int k = 0; k < l.nG; ++k) {
    const QuadCost& c1 = net.generators[k].primary_cost;
    p.Q(l.yG1(k), l.yG1(k)) = 2.0 * c1.a;
    p.c[l.yG1(k)] = c1.b;
  }
  for (int w = 0; w < l.S; ++w) {
    double pw = scen.scenarios[w].prob;
    if (l.stage2)
      for (int k = 0; k < l.nG; ++k) {
        const QuadCost& c2 = net.generators[k].ancillary_cost;
        p.Q(l.yG2(w, k), l.yG2(w, k)) = 2.0 * c2.a * pw;
        p.c[l.yG2(w, k)] = c2.b * pw;
      }
    for (int k = 0; k < l.nL; ++k) {
      const QuadCost& dr = net.lses[k].dr_cost;
      const QuadCost& bo = net.lses[k].blackout_cost;
      p.Q(l.x2(w, k), l.x2(w, k)) = 2.0 * dr.a * pw;
      p.c[l.x2(w, k)] = dr.b * pw;
      p.Q(l.z2(w, k), l.z2(w, k)) = 2.0 * bo.a * pw;
      p.c[l.z2(w, k)] = bo.b * pw;
    }
  }
  fill_balance_rows(net, l, p.A_eq);
  fill_line_rows(net, l, p.A_in, p.b_in);
  fill_demand_rows(net, scen, l, p.A_in, p.b_in);
  return sp;
}

}  // namespace

SppProgram assemble_spp(const Network& net, const ScenarioSet& scen) {
  return assemble_planner(net, scen, false);
}

SppProgram assemble_spp_u(const Network& net, const ScenarioSet& scen) {
  return assemble_planner(net, scen, true);
}

// ---------------------------------------------------------------------------
// extraction

PlannerSolution extract_planner([[maybe_unused]] const Network& net,
                                const ScenarioSet& scen, const SppProgram& sp,
                                const SolveResult& res) {
  const SppLayout& l = sp.layout;
  PlannerSolution out;
  Allocation& a = out.allocation;
  a.yG1.resize(l.nG);
  a.yL1.resize(l.nL);
  a.theta1.resize(l.N);
  for (int k = 0; k < l.nG; ++k) a.yG1[k] = res.x[l.yG1(k)];
  for (int k = 0; k < l.nL; ++k) a.yL1[k] = res.x[l.yL1(k)];
  for (int i = 0; i < l.N; ++i) a.theta1[i] = res.x[l.th1(i)];
  a.stage2.resize(l.S);
  for (int w = 0; w < l.S; ++w) {
    StageTwoAllocation& st = a.stage2[w];
    st.xL2.resize(l.nL);
    st.zL2.resize(l.nL);
    for (int k = 0; k < l.nL; ++k) {
      st.xL2[k] = res.x[l.x2(w, k)];
      st.zL2[k] = res.x[l.z2(w, k)];
    }
    if (l.stage2) {
      st.yG2.resize(l.nG);
      st.yL2.resize(l.nL);
      st.theta2.resize(l.N);
      for (int k = 0; k < l.nG; ++k) st.yG2[k] = res.x[l.yG2(w, k)];
      for (int k = 0; k < l.nL; ++k) st.yL2[k] = res.x[l.yL2(w, k)];
      for (int i = 0; i < l.N; ++i) st.theta2[i] = res.x[l.th2(w, i)];
    }
  }

  out.lambda1.resize(l.N);
  for (int i = 0; i < l.N; ++i) out.lambda1[i] = res.duals.lambda_eq[l.eq_bal1(i)];
  out.gamma1.resize(2 * l.L);
  for (int li = 0; li < l.L; ++li)
    for (int d = 0; d < 2; ++d)
      out.gamma1[2 * li + d] = res.duals.mu_in[l.in_line1(li, d)];
  out.lambda2.resize(l.stage2 ? l.S : 0);
  out.gamma2.resize(l.stage2 ? l.S : 0);
  out.mu.resize(l.S);
  for (int w = 0; w < l.S; ++w) {
    double pw = scen.scenarios[w].prob;
    out.mu[w].resize(l.nL);
    for (int k = 0; k < l.nL; ++k)
      out.mu[w][k] = res.duals.mu_in[l.in_demand(w, k)] / pw;
    if (l.stage2) {
      out.lambda2[w].resize(l.N);
      for (int i = 0; i < l.N; ++i)
        out.lambda2[w][i] = res.duals.lambda_eq[l.eq_bal2(w, i)] / pw;
      out.gamma2[w].resize(2 * l.L);
      for (int li = 0; li < l.L; ++li)
        for (int d = 0; d < 2; ++d)
          out.gamma2[w][2 * li + d] = res.duals.mu_in[l.in_line2(w, li, d)] / pw;
    }
  }
  out.welfare = -res.objective;
  out.kkt = res.kkt_residual;
  out.raw_x = res.x;
  out.raw_duals = res.duals;
  return out;
}

namespace {

// The planner optimum is unique in generation, demand response and blackout,
// but when day-ahead and expected real-time prices coincide the split of
// consumption across stages (and across LSEs at equally priced buses) is a
// flat face. Different assemblies of the same program then settle at
// different face points. This picks the least-norm consumption profile on
// that face: totals per LSE and scenario stay fixed, zero variables with
// positive reduced cost stay zero, congested lines stay at their limits.
void canonicalize_consumption(const Network& net, const SppProgram& sp,
                              const SolveResult& res, PlannerSolution& out) {
  if (!net.stage2_enabled) return;  // a single purchase stage has no flat split
  const SppLayout& l = sp.layout;
  const int nL = l.nL, N = l.N, S = l.S;
  // stage-2 purchases are eliminated through the pinned per-scenario totals
  // T_kw, keeping the equality block full rank: y2(w) = T_kw - y1
  const int n = nL + N + S * N;
  auto yl1 = [&](int k) { return k; };
  auto th1 = [&](int i) { return nL + i; };
  auto th2 = [&](int w, int i) { return nL + N + w * N + i; };

  std::vector<std::vector<double>> totals(S, std::vector<double>(nL));
  for (int w = 0; w < S; ++w)
    for (int k = 0; k < nL; ++k)
      totals[w][k] = out.allocation.yL1[k] + out.allocation.stage2[w].yL2[k];

  double price_scale = res.duals.lambda_eq.size()
                           ? res.duals.lambda_eq.cwiseAbs().maxCoeff()
                           : 0.0;
  const double act = 1e-6 * (1.0 + price_scale);

  // per-variable pins from strictly positive reduced costs
  std::vector<std::pair<int, double>> pins;  // (y1 column, value)
  for (int k = 0; k < nL; ++k) {
    if (res.duals.mu_bound[l.yL1(k)] > act) {
      pins.push_back({yl1(k), 0.0});
      continue;
    }
    for (int w = 0; w < S; ++w)
      if (res.duals.mu_bound[l.yL2(w, k)] > act) {
        pins.push_back({yl1(k), totals[w][k]});  // y2(w) stays at zero
        break;
      }
  }
  // congested lines stay at their limits; one direction per line and stage
  struct LinePin {
    int w;  // -1 for the first stage
    int li;
    int dir;
  };
  std::vector<LinePin> pinned;
  for (int li = 0; li < l.L; ++li) {
    int d1 = out.gamma1[2 * li] > act ? 0 : (out.gamma1[2 * li + 1] > act ? 1 : -1);
    if (d1 >= 0) pinned.push_back({-1, li, d1});
    for (int w = 0; w < S; ++w) {
      int d2 = out.gamma2[w][2 * li] > act
                   ? 0
                   : (out.gamma2[w][2 * li + 1] > act ? 1 : -1);
      if (d2 >= 0) pinned.push_back({w, li, d2});
    }
  }

  const int me = N + 1 + S * (N + 1) + static_cast<int>(pins.size()) +
                 static_cast<int>(pinned.size());
  StandardProgram p;
  p.Q = MatrixXd::Zero(n, n);
  p.c = VectorXd::Zero(n);
  p.A_eq = MatrixXd::Zero(me, n);
  p.b_eq = VectorXd::Zero(me);
  // free line rows plus the y2 >= 0 caps y1 <= min_w T_kw
  p.A_in = MatrixXd::Zero(2 * l.L * (S + 1) + nL, n);
  p.b_in = VectorXd::Zero(p.A_in.rows());
  p.nonneg.assign(n, 0);
  for (int k = 0; k < nL; ++k) p.nonneg[yl1(k)] = 1;

  // least-norm profile: 0.5*y1^2 + 0.5*sum_w (T - y1)^2
  for (int k = 0; k < nL; ++k) {
    p.Q(yl1(k), yl1(k)) = 1.0 + S;
    double tsum = 0.0;
    for (int w = 0; w < S; ++w) tsum += totals[w][k];
    p.c[yl1(k)] = -tsum;
  }

  int r = 0;
  for (int i = 0; i < N; ++i, ++r) {
    for (int k = 0; k < nL; ++k)
      if (net.lses[k].bus == i) p.A_eq(r, yl1(k)) = 1.0;
    double gen = 0.0;
    for (int k = 0; k < l.nG; ++k)
      if (net.generators[k].bus == i) gen += out.allocation.yG1[k];
    p.b_eq[r] = gen;
    for (const Line& ln : net.lines) {
      if (ln.i == i) {
        p.A_eq(r, th1(ln.i)) += ln.susceptance;
        p.A_eq(r, th1(ln.j)) -= ln.susceptance;
      }
      if (ln.j == i) {
        p.A_eq(r, th1(ln.j)) += ln.susceptance;
        p.A_eq(r, th1(ln.i)) -= ln.susceptance;
      }
    }
  }
  p.A_eq(r, th1(net.reference_bus)) = 1.0;
  ++r;
  for (int w = 0; w < S; ++w) {
    for (int i = 0; i < N; ++i, ++r) {
      double rhs = 0.0;
      for (int k = 0; k < l.nG; ++k)
        if (net.generators[k].bus == i) rhs += out.allocation.stage2[w].yG2[k];
      for (int k = 0; k < nL; ++k)
        if (net.lses[k].bus == i) {
          p.A_eq(r, yl1(k)) -= 1.0;  // consumption T - y1
          rhs -= totals[w][k];
        }
      p.b_eq[r] = rhs;
      for (const Line& ln : net.lines) {
        if (ln.i == i) {
          p.A_eq(r, th2(w, ln.i)) += ln.susceptance;
          p.A_eq(r, th2(w, ln.j)) -= ln.susceptance;
          p.A_eq(r, th1(ln.i)) -= ln.susceptance;
          p.A_eq(r, th1(ln.j)) += ln.susceptance;
        }
        if (ln.j == i) {
          p.A_eq(r, th2(w, ln.j)) += ln.susceptance;
          p.A_eq(r, th2(w, ln.i)) -= ln.susceptance;
          p.A_eq(r, th1(ln.j)) -= ln.susceptance;
          p.A_eq(r, th1(ln.i)) += ln.susceptance;
        }
      }
    }
    p.A_eq(r, th2(w, net.reference_bus)) = 1.0;
    ++r;
  }
  for (const auto& [col, value] : pins) {
    p.A_eq(r, col) = 1.0;
    p.b_eq[r] = value;
    ++r;
  }
  auto fill_line = [&](int w, int li, int dir, int row, MatrixXd& A) {
    const Line& ln = net.lines[li];
    int a = dir == 0 ? ln.i : ln.j;
    int b = dir == 0 ? ln.j : ln.i;
    if (w < 0) {
      A(row, th1(a)) += ln.susceptance;
      A(row, th1(b)) -= ln.susceptance;
    } else {
      A(row, th2(w, a)) += ln.susceptance;
      A(row, th2(w, b)) -= ln.susceptance;
    }
  };
  for (const LinePin& lp : pinned) {
    fill_line(lp.w, lp.li, lp.dir, r, p.A_eq);
    p.b_eq[r] = net.lines[lp.li].flow_limit;
    ++r;
  }
  int ir = 0;
  for (int li = 0; li < l.L; ++li)
    for (int d = 0; d < 2; ++d) {
      fill_line(-1, li, d, ir, p.A_in);
      p.b_in[ir] = net.lines[li].flow_limit;
      ++ir;
      for (int w = 0; w < S; ++w) {
        fill_line(w, li, d, ir, p.A_in);
        p.b_in[ir] = net.lines[li].flow_limit;
        ++ir;
      }
    }
  for (int k = 0; k < nL; ++k, ++ir) {
    double tmin = totals[0][k];
    for (int w = 1; w < S; ++w) tmin = std::min(tmin, totals[w][k]);
    p.A_in(ir, yl1(k)) = 1.0;
    p.b_in[ir] = tmin;
  }

  // pinned rows are consistent to the tolerance of the original solve, so
  // the polish runs at a matching looser tolerance
  SolveResult canon = solve(p, 1e-7, 200);
  if (std::getenv("TSMARKET_CANON_TRACE"))
    std::fprintf(stderr, "canon: n=%d me=%d status=%s iters=%d kkt=%.3e\n", n, me,
                 to_string(canon.status), canon.iterations, canon.kkt_residual);
  if (canon.status != SolveStatus::Optimal) return;  // keep the solved point
  for (int k = 0; k < nL; ++k) {
    out.allocation.yL1[k] = canon.x[yl1(k)];
    for (int w = 0; w < S; ++w)
      out.allocation.stage2[w].yL2[k] = totals[w][k] - canon.x[yl1(k)];
  }
  for (int i = 0; i < N; ++i) {
    out.allocation.theta1[i] = canon.x[th1(i)];
    for (int w = 0; w < S; ++w) out.allocation.stage2[w].theta2[i] = canon.x[th2(w, i)];
  }
}

PlannerSolution solve_planner(const Network& net, const ScenarioSet& scen, double tol,
                              bool utility_form) {
  SppProgram sp = utility_form ? assemble_spp_u(net, scen) : assemble_spp(net, scen);
  SolveOptions opt;
  opt.tol = tol;
  SolveResult res = solve(sp.prog, opt);
  if (res.status != SolveStatus::Optimal)
    throw std::runtime_error(std::string("planner solve failed: ") +
                             to_string(res.status));
  PlannerSolution out = extract_planner(net, scen, sp, res);
  double b_scale = sp.prog.b_in.size() ? sp.prog.b_in.cwiseAbs().maxCoeff() : 0.0;
  if (!(out.kkt <= 1e-7 * (1.0 + b_scale)))
    throw std::runtime_error("planner solve failed: KKT residual too large");
  canonicalize_consumption(net, sp, res, out);
  if (utility_form) {
    // replace the internal recourse block by the closed-form service split
    for (int k = 0; k < sp.layout.nL; ++k) {
      VectorXd y2 = VectorXd::Zero(scen.count());
      if (net.stage2_enabled)
        for (int w = 0; w < scen.count(); ++w)
          y2[w] = out.allocation.stage2[w].yL2[k];
      ServiceSplit split =
          lse_service_split(net.lses[k], k, out.allocation.yL1[k], y2, scen);
      for (int w = 0; w < scen.count(); ++w) {
        out.allocation.stage2[w].xL2[k] = split.x[w];
        out.allocation.stage2[w].zL2[k] = split.z[w];
      }
    }
  }
  return out;
}

}  // namespace

PlannerSolution solve_spp(const Network& net, const ScenarioSet& scen, double tol) {
  return solve_planner(net, scen, tol, false);
}

PlannerSolution solve_spp_u(const Network& net, const ScenarioSet& scen, double tol) {
  return solve_planner(net, scen, tol, true);
}

// ---------------------------------------------------------------------------
// consumption utility and service split

namespace {

// least-cost split of residual r > 0 between DR and blackout
void split_residual(const Lse& lse, double r, double& x, double& z, double& mu) {
  const QuadCost& dr = lse.dr_cost;
  const QuadCost& bo = lse.blackout_cost;
  double s = dr.a + bo.a;
  double xu = (2.0 * bo.a * r + (bo.b - dr.b)) / (2.0 * s);
  if (xu <= 0.0) {
    x = 0.0;
    z = r;
    mu = bo.marginal(r);
  } else if (xu >= r) {
    x = r;
    z = 0.0;
    mu = dr.marginal(r);
  } else {
    x = xu;
    z = r - xu;
    mu = dr.marginal(xu);
  }
}

}  // namespace

UtilityValue lse_utility(const Lse& lse, double y1, double y2, double w) {
  UtilityValue u;
  double r = lse.demand - w - y1 - y2;
  if (r < 0.0) return u;  // value 0, derivative {0}
  double floor_marginal = std::min(lse.dr_cost.b, lse.blackout_cost.b);
  if (r == 0.0) {
    u.d_lo = 0.0;
    u.d_hi = floor_marginal;
    return u;
  }
  double x, z, mu;
  split_residual(lse, r, x, z, mu);
  u.value = -(lse.dr_cost.value(x) + lse.blackout_cost.value(z));
  u.d_lo = u.d_hi = mu;
  return u;
}

ServiceSplit lse_service_split(const Lse& lse, int lse_index, double y1,
                               const VectorXd& y2, const ScenarioSet& scen) {
  const int S = scen.count();
  if (y2.size() != S && y2.size() != 0)
    throw std::invalid_argument("lse_service_split: y2 dimension mismatch");
  ServiceSplit out;
  out.x = VectorXd::Zero(S);
  out.z = VectorXd::Zero(S);
  out.mu = VectorXd::Zero(S);
  for (int w = 0; w < S; ++w) {
    double y2w = y2.size() == S ? y2[w] : 0.0;
    double r = lse.demand - scen.scenarios[w].output[lse_index] - y1 - y2w;
    if (r <= 0.0) continue;
    split_residual(lse, r, out.x[w], out.z[w], out.mu[w]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// best responses

GenResponse gen_best_response(const Generator& gen, const BusPrices& prices,
                              const ScenarioSet& scen) {
  GenResponse r;
  r.y1 = gen.primary_cost.inverse_marginal(prices.p1);
  r.profit = prices.p1 * r.y1 - gen.primary_cost.value(r.y1);
  const int S = static_cast<int>(prices.p2.size());
  r.y2 = VectorXd::Zero(S);
  for (int w = 0; w < S; ++w) {
    r.y2[w] = gen.ancillary_cost.inverse_marginal(prices.p2[w]);
    r.profit += scen.scenarios[w].prob *
                (prices.p2[w] * r.y2[w] - gen.ancillary_cost.value(r.y2[w]));
  }
  return r;
}

LseResponse lse_best_response(const Lse& lse, int lse_index, const BusPrices& prices,
                              const ScenarioSet& scen, bool stage2_enabled,
                              double tol) {
  const int S = scen.count();
  const bool s2 = stage2_enabled && prices.p2.size() == S;
  // variables: y1, then per scenario [y2?, x, z]
  const int block = s2 ? 3 : 2;
  const int n = 1 + S * block;
  auto y2v = [&](int w) { return 1 + w * block; };
  auto xv = [&](int w) { return 1 + w * block + (s2 ? 1 : 0); };
  auto zv = [&](int w) { return xv(w) + 1; };

  StandardProgram p;
  p.Q = MatrixXd::Zero(n, n);
  p.c = VectorXd::Zero(n);
  p.A_eq = MatrixXd::Zero(0, n);
  p.b_eq = VectorXd::Zero(0);
  p.A_in = MatrixXd::Zero(S, n);
  p.b_in = VectorXd::Zero(S);
  p.nonneg.assign(n, 1);
  p.c[0] = prices.p1;
  for (int w = 0; w < S; ++w) {
    double pw = scen.scenarios[w].prob;
    if (s2) p.c[y2v(w)] = pw * prices.p2[w];
    p.Q(xv(w), xv(w)) = 2.0 * lse.dr_cost.a * pw;
    p.c[xv(w)] = lse.dr_cost.b * pw;
    p.Q(zv(w), zv(w)) = 2.0 * lse.blackout_cost.a * pw;
    p.c[zv(w)] = lse.blackout_cost.b * pw;
    p.A_in(w, 0) = -1.0;
    if (s2) p.A_in(w, y2v(w)) = -1.0;
    p.A_in(w, xv(w)) = -1.0;
    p.A_in(w, zv(w)) = -1.0;
    p.b_in[w] = -(lse.demand - scen.scenarios[w].output[lse_index]);
  }
  SolveOptions opt;
  opt.tol = tol;
  SolveResult res = solve(p, opt);
  if (res.status != SolveStatus::Optimal)
    throw std::runtime_error(std::string("lse best response solve failed: ") +
                             to_string(res.status));
  LseResponse out;
  out.y1 = res.x[0];
  out.y2 = VectorXd::Zero(S);
  out.x = VectorXd::Zero(S);
  out.z = VectorXd::Zero(S);
  out.mu = VectorXd::Zero(S);
  for (int w = 0; w < S; ++w) {
    if (s2) out.y2[w] = res.x[y2v(w)];
    out.x[w] = res.x[xv(w)];
    out.z[w] = res.x[zv(w)];
    out.mu[w] = res.duals.mu_in[w] / scen.scenarios[w].prob;
  }
  out.utility = -res.objective;
  return out;
}

double gen_objective_at(const Generator& gen, const BusPrices& prices,
                        const ScenarioSet& scen, double y1, const VectorXd& y2) {
  double v = prices.p1 * y1 - gen.primary_cost.value(y1);
  for (int w = 0; w < y2.size(); ++w)
    v += scen.scenarios[w].prob *
         (prices.p2[w] * y2[w] - gen.ancillary_cost.value(y2[w]));
  return v;
}

double lse_objective_at(const Lse& lse, const BusPrices& prices,
                        const ScenarioSet& scen, double y1, const VectorXd& y2,
                        const VectorXd& x, const VectorXd& z) {
  double v = -prices.p1 * y1;
  for (int w = 0; w < scen.count(); ++w) {
    double pw = scen.scenarios[w].prob;
    if (y2.size() == scen.count() && prices.p2.size() == scen.count())
      v -= pw * prices.p2[w] * y2[w];
    v -= pw * (lse.dr_cost.value(x[w]) + lse.blackout_cost.value(z[w]));
  }
  return v;
}

// ---------------------------------------------------------------------------
// welfare

double evaluate_welfare(const Network& net, const ScenarioSet& scen,
                        const Allocation& alloc) {
  double cost = 0.0;
  for (int k = 0; k < static_cast<int>(net.generators.size()); ++k)
    cost += net.generators[k].primary_cost.value(alloc.yG1[k]);
  for (int w = 0; w < scen.count(); ++w) {
    double pw = scen.scenarios[w].prob;
    const StageTwoAllocation& st = alloc.stage2[w];
    if (net.stage2_enabled)
      for (int k = 0; k < static_cast<int>(net.generators.size()); ++k)
        cost += pw * net.generators[k].ancillary_cost.value(st.yG2[k]);
    for (int k = 0; k < static_cast<int>(net.lses.size()); ++k)
      cost += pw * (net.lses[k].dr_cost.value(st.xL2[k]) +
                    net.lses[k].blackout_cost.value(st.zL2[k]));
  }
  return -cost;
}

double dispatch_welfare(const Network& net, const ScenarioSet& scen,
                        const Allocation& alloc) {
  double v = 0.0;
  for (int k = 0; k < static_cast<int>(net.generators.size()); ++k)
    v -= net.generators[k].primary_cost.value(alloc.yG1[k]);
  for (int w = 0; w < scen.count(); ++w) {
    double pw = scen.scenarios[w].prob;
    if (net.stage2_enabled)
      for (int k = 0; k < static_cast<int>(net.generators.size()); ++k)
        v -= pw * net.generators[k].ancillary_cost.value(alloc.stage2[w].yG2[k]);
    for (int k = 0; k < static_cast<int>(net.lses.size()); ++k) {
      double y2 = net.stage2_enabled ? alloc.stage2[w].yL2[k] : 0.0;
      v += pw * lse_utility(net.lses[k], alloc.yL1[k], y2,
                            scen.scenarios[w].output[k])
                .value;
    }
  }
  return v;
}

}  // namespace tsmarket
