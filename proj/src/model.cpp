#include "tsmarket/model.hpp"

#include <cstdio>
#include <queue>
#include <set>
#include <stdexcept>

namespace tsmarket {

std::vector<int> Network::generators_at(int bus) const {
  std::vector<int> out;
  for (int k = 0; k < static_cast<int>(generators.size()); ++k)
    if (generators[k].bus == bus) out.push_back(k);
  return out;
}

std::vector<int> Network::lses_at(int bus) const {
  std::vector<int> out;
  for (int k = 0; k < static_cast<int>(lses.size()); ++k)
    if (lses[k].bus == bus) out.push_back(k);
  return out;
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

void check_cost(const QuadCost& q, const std::string& where,
                std::vector<ValidationIssue>& out) {
  if (!(q.a > 0.0) || !(q.b >= 0.0))
    out.push_back({"bad_cost", where + " requires a > 0 and b >= 0, got a=" +
                                    fmt("%.6g", q.a) + " b=" + fmt("%.6g", q.b)});
}

}  // namespace

std::vector<ValidationIssue> validate(const Network& net, const ScenarioSet& scen) {
  std::vector<ValidationIssue> out;
  const int n = net.n_buses;
  if (n < 1) {
    out.push_back({"bad_bus_count", "network must have at least one bus"});
    return out;
  }
  if (net.reference_bus < 0 || net.reference_bus >= n)
    out.push_back({"bad_reference_bus",
                   "reference bus " + std::to_string(net.reference_bus) + " out of range"});

  std::set<std::pair<int, int>> seen;
  for (int l = 0; l < static_cast<int>(net.lines.size()); ++l) {
    const Line& ln = net.lines[l];
    const std::string where = "line " + std::to_string(l);
    if (ln.i < 0 || ln.i >= n || ln.j < 0 || ln.j >= n) {
      out.push_back({"bad_bus_index", where + " endpoint out of range"});
      continue;
    }
    if (ln.i == ln.j) out.push_back({"bad_line", where + " is a self loop"});
    if (!(ln.susceptance > 0.0))
      out.push_back({"bad_line", where + " susceptance must be positive"});
    if (!(ln.flow_limit >= 0.0))
      out.push_back({"bad_line", where + " flow limit must be nonnegative"});
    auto key = std::minmax(ln.i, ln.j);
    if (!seen.insert({key.first, key.second}).second)
      out.push_back({"duplicate_line", where + " duplicates an existing pair"});
  }

  for (int k = 0; k < static_cast<int>(net.generators.size()); ++k) {
    const Generator& g = net.generators[k];
    const std::string where = "generator " + std::to_string(k);
    if (g.bus < 0 || g.bus >= n) out.push_back({"bad_bus_index", where + " bus out of range"});
    check_cost(g.primary_cost, where + " primary cost", out);
    check_cost(g.ancillary_cost, where + " ancillary cost", out);
  }

  for (int k = 0; k < static_cast<int>(net.lses.size()); ++k) {
    const Lse& s = net.lses[k];
    const std::string where = "lse " + std::to_string(k);
    if (s.bus < 0 || s.bus >= n) out.push_back({"bad_bus_index", where + " bus out of range"});
    if (s.demand < 0.0)
      out.push_back({"negative_demand", where + " demand " + fmt("%.6g", s.demand)});
    if (!(s.renewable_cap > 0.0))
      out.push_back({"nonpositive_cap", where + " renewable cap must be positive"});
    check_cost(s.dr_cost, where + " dr cost", out);
    check_cost(s.blackout_cost, where + " blackout cost", out);
  }

  // connectivity over the undirected line graph
  if (n > 1) {
    std::vector<std::vector<int>> adj(n);
    for (const Line& ln : net.lines)
      if (ln.i >= 0 && ln.i < n && ln.j >= 0 && ln.j < n && ln.i != ln.j) {
        adj[ln.i].push_back(ln.j);
        adj[ln.j].push_back(ln.i);
      }
    std::vector<char> vis(n, 0);
    std::queue<int> q;
    q.push(0);
    vis[0] = 1;
    int reached = 1;
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (int v : adj[u])
        if (!vis[v]) {
          vis[v] = 1;
          ++reached;
          q.push(v);
        }
    }
    if (reached != n)
      out.push_back({"disconnected_graph",
                     "only " + std::to_string(reached) + " of " + std::to_string(n) +
                         " buses reachable from bus 0"});
  }

  const int nL = static_cast<int>(net.lses.size());
  if (scen.scenarios.empty()) {
    out.push_back({"no_scenarios", "at least one scenario is required"});
  } else {
    double total = 0.0;
    for (int w = 0; w < scen.count(); ++w) {
      const Scenario& sc = scen.scenarios[w];
      const std::string where = "scenario " + std::to_string(w);
      if (!(sc.prob > 0.0))
        out.push_back({"bad_probability", where + " probability must be positive"});
      total += sc.prob;
      if (sc.output.size() != nL) {
        out.push_back({"bad_scenario_size",
                       where + " has " + std::to_string(sc.output.size()) +
                           " outputs, expected " + std::to_string(nL)});
        continue;
      }
      for (int k = 0; k < nL; ++k) {
        double wk = sc.output[k];
        if (wk < 0.0 || wk > net.lses[k].renewable_cap)
          out.push_back({"renewable_above_cap",
                         where + " output " + fmt("%.6g", wk) + " for lse " +
                             std::to_string(k) + " outside [0, " +
                             fmt("%.6g", net.lses[k].renewable_cap) + "]"});
      }
    }
    if (std::abs(total - 1.0) > 1e-12)
      out.push_back({"probability_mass", "probabilities sum to " + fmt("%.6g", total)});
  }
  return out;
}

double flow(const Network& net, const VectorXd& theta, int i, int j) {
  if (theta.size() != net.n_buses)
    throw std::invalid_argument("theta dimension does not match bus count");
  for (const Line& ln : net.lines) {
    if ((ln.i == i && ln.j == j) || (ln.i == j && ln.j == i))
      return ln.susceptance * (theta[i] - theta[j]);
  }
  throw std::invalid_argument("no line between buses " + std::to_string(i) + " and " +
                              std::to_string(j));
}

VectorXd nodal_imbalance(const Network& net, const Allocation& alloc, Stage stage,
                         int scenario) {
  const int n = net.n_buses;
  const int nG = static_cast<int>(net.generators.size());
  const int nL = static_cast<int>(net.lses.size());
  if (alloc.yG1.size() != nG || alloc.yL1.size() != nL || alloc.theta1.size() != n)
    throw std::invalid_argument("allocation dimensions do not match network");

  VectorXd r = VectorXd::Zero(n);
  if (stage == Stage::DayAhead) {
    for (int k = 0; k < nG; ++k) r[net.generators[k].bus] += alloc.yG1[k];
    for (int k = 0; k < nL; ++k) r[net.lses[k].bus] -= alloc.yL1[k];
    for (const Line& ln : net.lines) {
      double f = ln.susceptance * (alloc.theta1[ln.i] - alloc.theta1[ln.j]);
      r[ln.i] -= f;
      r[ln.j] += f;
    }
    return r;
  }
  if (!net.stage2_enabled)
    throw std::invalid_argument("real-time stage is disabled for this network");
  if (scenario < 0 || scenario >= static_cast<int>(alloc.stage2.size()))
    throw std::invalid_argument("scenario index out of range");
  const StageTwoAllocation& st = alloc.stage2[scenario];
  if (st.yG2.size() != nG || st.yL2.size() != nL || st.theta2.size() != n)
    throw std::invalid_argument("stage-2 allocation dimensions do not match network");
  for (int k = 0; k < nG; ++k) r[net.generators[k].bus] += st.yG2[k];
  for (int k = 0; k < nL; ++k) r[net.lses[k].bus] -= st.yL2[k];
  for (const Line& ln : net.lines) {
    double f2 = ln.susceptance * (st.theta2[ln.i] - st.theta2[ln.j]);
    double f1 = ln.susceptance * (alloc.theta1[ln.i] - alloc.theta1[ln.j]);
    r[ln.i] -= f2 - f1;
    r[ln.j] += f2 - f1;
  }
  return r;
}

}  // namespace tsmarket
