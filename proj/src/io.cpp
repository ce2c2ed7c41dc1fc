#include "tsmarket/io.hpp"

#include <fstream>
#include <stdexcept>

namespace tsmarket {

namespace {

double need_num(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_number())
    throw std::runtime_error(where + ": missing numeric field '" + key + "'");
  return j[key].get<double>();
}

int need_int(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_number_integer())
    throw std::runtime_error(where + ": missing integer field '" + key + "'");
  return j[key].get<int>();
}

QuadCost need_cost(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_object())
    throw std::runtime_error(where + ": missing cost object '" + key + "'");
  QuadCost q;
  q.a = need_num(j[key], "a", where + "." + key);
  q.b = need_num(j[key], "b", where + "." + key);
  return q;
}

json cost_to_json(const QuadCost& q) { return json{{"a", q.a}, {"b", q.b}}; }

json vec_to_json(const VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

VectorXd vec_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw std::runtime_error(where + ": expected an array");
  VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

}  // namespace

Problem parse_problem(const json& j) {
  Problem prob;
  Network& net = prob.network;
  net.n_buses = need_int(j, "buses", "problem");
  net.reference_bus = j.contains("reference_bus") ? need_int(j, "reference_bus", "problem") : 0;
  if (j.contains("stage2")) {
    std::string s = j["stage2"].get<std::string>();
    if (s == "disabled")
      net.stage2_enabled = false;
    else if (s == "enabled")
      net.stage2_enabled = true;
    else
      throw std::runtime_error("problem: stage2 must be 'enabled' or 'disabled'");
  }
  if (j.contains("lines"))
    for (size_t i = 0; i < j["lines"].size(); ++i) {
      const json& lj = j["lines"][i];
      std::string where = "lines[" + std::to_string(i) + "]";
      Line ln;
      ln.i = need_int(lj, "i", where);
      ln.j = need_int(lj, "j", where);
      ln.susceptance = need_num(lj, "b", where);
      ln.flow_limit = need_num(lj, "fmax", where);
      net.lines.push_back(ln);
    }
  if (j.contains("generators"))
    for (size_t i = 0; i < j["generators"].size(); ++i) {
      const json& gj = j["generators"][i];
      std::string where = "generators[" + std::to_string(i) + "]";
      Generator g;
      g.bus = need_int(gj, "bus", where);
      g.primary_cost = need_cost(gj, "c1", where);
      g.ancillary_cost = need_cost(gj, "c2", where);
      net.generators.push_back(g);
    }
  if (j.contains("lses"))
    for (size_t i = 0; i < j["lses"].size(); ++i) {
      const json& sj = j["lses"][i];
      std::string where = "lses[" + std::to_string(i) + "]";
      Lse s;
      s.bus = need_int(sj, "bus", where);
      s.demand = need_num(sj, "demand", where);
      s.dr_cost = need_cost(sj, "dr", where);
      s.blackout_cost = need_cost(sj, "bo", where);
      s.renewable_cap = need_num(sj, "wcap", where);
      net.lses.push_back(s);
    }
  if (!j.contains("scenarios") || !j["scenarios"].is_array())
    throw std::runtime_error("problem: missing 'scenarios' array");
  for (size_t i = 0; i < j["scenarios"].size(); ++i) {
    const json& sj = j["scenarios"][i];
    std::string where = "scenarios[" + std::to_string(i) + "]";
    Scenario sc;
    if (!sj.contains("w")) throw std::runtime_error(where + ": missing 'w'");
    sc.output = vec_from_json(sj["w"], where + ".w");
    sc.prob = need_num(sj, "p", where);
    prob.scenarios.scenarios.push_back(sc);
  }
  return prob;
}

Problem load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open problem file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("parse error in " + path + ": " + e.what());
  }
  return parse_problem(j);
}

json problem_to_json(const Problem& prob) {
  const Network& net = prob.network;
  json j;
  j["buses"] = net.n_buses;
  j["reference_bus"] = net.reference_bus;
  if (!net.stage2_enabled) j["stage2"] = "disabled";
  j["lines"] = json::array();
  for (const Line& ln : net.lines)
    j["lines"].push_back(
        {{"i", ln.i}, {"j", ln.j}, {"b", ln.susceptance}, {"fmax", ln.flow_limit}});
  j["generators"] = json::array();
  for (const Generator& g : net.generators)
    j["generators"].push_back({{"bus", g.bus},
                               {"c1", cost_to_json(g.primary_cost)},
                               {"c2", cost_to_json(g.ancillary_cost)}});
  j["lses"] = json::array();
  for (const Lse& s : net.lses)
    j["lses"].push_back({{"bus", s.bus},
                         {"demand", s.demand},
                         {"dr", cost_to_json(s.dr_cost)},
                         {"bo", cost_to_json(s.blackout_cost)},
                         {"wcap", s.renewable_cap}});
  j["scenarios"] = json::array();
  for (const Scenario& sc : prob.scenarios.scenarios)
    j["scenarios"].push_back({{"w", vec_to_json(sc.output)}, {"p", sc.prob}});
  return j;
}

json allocation_to_json(const Allocation& a) {
  json j;
  j["yG1"] = vec_to_json(a.yG1);
  j["yL1"] = vec_to_json(a.yL1);
  j["theta1"] = vec_to_json(a.theta1);
  j["scenarios"] = json::array();
  for (const StageTwoAllocation& st : a.stage2) {
    json sj;
    sj["yG2"] = vec_to_json(st.yG2);
    sj["yL2"] = vec_to_json(st.yL2);
    sj["xL2"] = vec_to_json(st.xL2);
    sj["zL2"] = vec_to_json(st.zL2);
    sj["theta2"] = vec_to_json(st.theta2);
    j["scenarios"].push_back(sj);
  }
  return j;
}

Allocation allocation_from_json(const json& j) {
  Allocation a;
  a.yG1 = vec_from_json(j.at("yG1"), "allocation.yG1");
  a.yL1 = vec_from_json(j.at("yL1"), "allocation.yL1");
  a.theta1 = vec_from_json(j.at("theta1"), "allocation.theta1");
  for (const json& sj : j.at("scenarios")) {
    StageTwoAllocation st;
    st.yG2 = vec_from_json(sj.at("yG2"), "allocation.yG2");
    st.yL2 = vec_from_json(sj.at("yL2"), "allocation.yL2");
    st.xL2 = vec_from_json(sj.at("xL2"), "allocation.xL2");
    st.zL2 = vec_from_json(sj.at("zL2"), "allocation.zL2");
    st.theta2 = vec_from_json(sj.at("theta2"), "allocation.theta2");
    a.stage2.push_back(st);
  }
  return a;
}

json prices_to_json(const PriceSystem& p) {
  json j;
  j["p1"] = vec_to_json(p.p1);
  j["p2"] = json::array();
  for (const VectorXd& v : p.p2) j["p2"].push_back(vec_to_json(v));
  return j;
}

PriceSystem prices_from_json(const json& j) {
  PriceSystem p;
  p.p1 = vec_from_json(j.at("p1"), "prices.p1");
  for (const json& v : j.at("p2")) p.p2.push_back(vec_from_json(v, "prices.p2"));
  return p;
}

json planner_to_json(const PlannerSolution& p) {
  json j = allocation_to_json(p.allocation);
  j["lambda1"] = vec_to_json(p.lambda1);
  j["lambda2"] = json::array();
  for (const VectorXd& v : p.lambda2) j["lambda2"].push_back(vec_to_json(v));
  j["mu"] = json::array();
  for (const VectorXd& v : p.mu) j["mu"].push_back(vec_to_json(v));
  j["gamma1"] = vec_to_json(p.gamma1);
  j["gamma2"] = json::array();
  for (const VectorXd& v : p.gamma2) j["gamma2"].push_back(vec_to_json(v));
  j["welfare"] = p.welfare;
  j["kkt_residual"] = p.kkt;
  return j;
}

json certificate_to_json(const SceqCertificate& cert) {
  json j;
  j["pass"] = cert.pass;
  j["max_gap"] = cert.max_gap;
  j["max_clearing_residual"] = cert.max_clearing;
  j["stage1_clearing_residual"] = cert.stage1_clearing;
  j["stage2_clearing_residuals"] = vec_to_json(cert.stage2_clearing);
  j["gap_tol"] = cert.gap_tol;
  j["clearing_tol"] = cert.clearing_tol;
  j["agents"] = json::array();
  for (const AgentGap& a : cert.gaps)
    j["agents"].push_back({{"kind", a.kind == AgentKind::Generator ? "generator" : "lse"},
                           {"index", a.index},
                           {"bus", a.bus},
                           {"best_objective", a.best_objective},
                           {"objective_at_allocation", a.objective_at_allocation},
                           {"gap", a.gap}});
  j["reasons"] = cert.reasons;
  return j;
}

json bids_to_json(const BidProfile& b) {
  json j;
  j["generators"] = json::array();
  for (int k = 0; k < b.gen_b1.size(); ++k) {
    json g;
    g["b1"] = b.gen_b1[k];
    g["b2"] = json::array();
    for (int w = 0; w < b.gen_b2.cols(); ++w) g["b2"].push_back(b.gen_b2(k, w));
    j["generators"].push_back(g);
  }
  j["lses"] = json::array();
  for (int k = 0; k < b.lse_b1.size(); ++k) {
    json s;
    s["b1"] = b.lse_b1[k];
    s["b2"] = json::array();
    for (int w = 0; w < b.lse_b2.cols(); ++w) s["b2"].push_back(b.lse_b2(k, w));
    j["lses"].push_back(s);
  }
  return j;
}

BidProfile bids_from_json(const json& j, const Network& net, int scenarios) {
  BidProfile b;
  const int nG = static_cast<int>(net.generators.size());
  const int nL = static_cast<int>(net.lses.size());
  const int S2 = net.stage2_enabled ? scenarios : 0;
  b.gen_b1 = VectorXd::Zero(nG);
  b.lse_b1 = VectorXd::Zero(nL);
  b.gen_b2 = Eigen::MatrixXd::Zero(nG, S2);
  b.lse_b2 = Eigen::MatrixXd::Zero(nL, S2);
  const json& gens = j.at("generators");
  if (static_cast<int>(gens.size()) != nG)
    throw std::runtime_error("bids: generator count mismatch");
  for (int k = 0; k < nG; ++k) {
    b.gen_b1[k] = gens[k].at("b1").get<double>();
    for (int w = 0; w < S2; ++w) b.gen_b2(k, w) = gens[k].at("b2").at(w).get<double>();
  }
  const json& lses = j.at("lses");
  if (static_cast<int>(lses.size()) != nL)
    throw std::runtime_error("bids: lse count mismatch");
  for (int k = 0; k < nL; ++k) {
    b.lse_b1[k] = lses[k].at("b1").get<double>();
    for (int w = 0; w < S2; ++w) b.lse_b2(k, w) = lses[k].at("b2").at(w).get<double>();
  }
  return b;
}

json clearing_to_json(const ClearingOutcome& o) {
  json j;
  j["status"] = to_string(o.status);
  j["notes"] = o.notes;
  if (o.status != SolveStatus::Optimal) return j;
  j["allocation"] = allocation_to_json(o.allocation);
  j["lambda1"] = vec_to_json(o.lambda1);
  j["lambda2"] = json::array();
  for (const VectorXd& v : o.lambda2) j["lambda2"].push_back(vec_to_json(v));
  j["gamma1"] = vec_to_json(o.gamma1);
  j["gamma2"] = json::array();
  for (const VectorXd& v : o.gamma2) j["gamma2"].push_back(vec_to_json(v));
  j["gen_payoff"] = vec_to_json(o.gen_payoff);
  j["lse_payoff"] = vec_to_json(o.lse_payoff);
  j["bid_objective"] = o.bid_objective;
  j["true_welfare"] = o.true_welfare;
  return j;
}

json dr_outcome_to_json(const DrBidOutcome& o) {
  json j;
  j["status"] = to_string(o.status);
  j["notes"] = o.notes;
  if (o.status != SolveStatus::Optimal) return j;
  j["yG"] = vec_to_json(o.yG);
  j["yL"] = vec_to_json(o.yL);
  j["x"] = vec_to_json(o.x);
  j["theta"] = vec_to_json(o.theta);
  j["lambda"] = vec_to_json(o.lambda);
  j["mu"] = vec_to_json(o.mu);
  j["gamma"] = vec_to_json(o.gamma);
  j["gen_payoff"] = vec_to_json(o.gen_payoff);
  j["lse_payoff"] = vec_to_json(o.lse_payoff);
  j["bid_cost"] = o.bid_cost;
  j["true_welfare"] = o.true_welfare;
  return j;
}

json deviation_to_json(const DeviationResult& d) {
  json j;
  j["agent_kind"] = d.agent.kind == AgentKind::Generator ? "generator" : "lse";
  j["agent_index"] = d.agent.index;
  j["base_payoff"] = d.base_payoff;
  j["best_payoff"] = d.best_payoff;
  j["best_bid"] = d.best_bid;
  j["best_coordinate"] = d.best_coordinate;
  j["gain"] = d.gain;
  j["skipped_probes"] = d.skipped;
  j["probe_count"] = d.probes.size();
  return j;
}

json program_to_json(const StandardProgram& p) {
  json j;
  auto mat = [](const MatrixXd& m) {
    json rows = json::array();
    for (int r = 0; r < m.rows(); ++r) {
      json row = json::array();
      for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      rows.push_back(row);
    }
    return rows;
  };
  j["Q"] = mat(p.Q);
  j["c"] = vec_to_json(p.c);
  j["A_eq"] = mat(p.A_eq);
  j["b_eq"] = vec_to_json(p.b_eq);
  j["A_in"] = mat(p.A_in);
  j["b_in"] = vec_to_json(p.b_in);
  j["nonneg"] = p.nonneg;
  return j;
}

}  // namespace tsmarket
