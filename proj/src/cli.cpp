#include "tsmarket/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "tsmarket/io.hpp"

namespace tsmarket::cli {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitSolver = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitFalsified = 3;

std::string money(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

void emit(const Options& opt, std::ostream& os, const std::string& text,
          const json& j) {
  std::string payload = opt.format == "json" ? j.dump(2) + "\n" : text;
  if (opt.out.empty()) {
    os << payload;
    return;
  }
  std::ofstream f(opt.out);
  if (!f) throw std::runtime_error("cannot write output file: " + opt.out);
  f << payload;
}

json header(const Options& opt) {
  return json{{"command", opt.command}, {"input", opt.input}, {"seed", opt.seed}};
}

int cmd_validate(const Options& opt, std::ostream& os) {
  Problem prob = load_problem(opt.input);
  auto issues = validate(prob.network, prob.scenarios);
  json j = header(opt);
  j["issues"] = json::array();
  std::ostringstream text;
  for (const ValidationIssue& is : issues) {
    j["issues"].push_back({{"code", is.code}, {"message", is.message}});
    text << is.code << ": " << is.message << "\n";
  }
  j["ok"] = issues.empty();
  if (issues.empty()) text << "ok\n";
  emit(opt, os, text.str(), j);
  return issues.empty() ? kExitOk : kExitInvalid;
}

// loads and validates, throwing a marker exception with exit semantics
struct InvalidInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Problem load_checked(const Options& opt) {
  Problem prob = load_problem(opt.input);
  auto issues = validate(prob.network, prob.scenarios);
  if (!issues.empty()) {
    std::string msg = "invalid problem:";
    for (const ValidationIssue& is : issues) msg += "\n  " + is.code + ": " + is.message;
    throw InvalidInput(msg);
  }
  return prob;
}

int cmd_solve(const Options& opt, std::ostream& os) {
  Problem prob = load_checked(opt);
  if (!opt.dump_qp.empty()) {
    SppProgram sp = assemble_spp(prob.network, prob.scenarios);
    std::ofstream f(opt.dump_qp);
    f << program_to_json(sp.prog).dump(2) << "\n";
  }
  PlannerSolution sol = solve_spp(prob.network, prob.scenarios);
  json j = header(opt);
  j["solution"] = planner_to_json(sol);
  std::ostringstream text;
  text << "welfare " << money(sol.welfare) << "\n";
  for (int i = 0; i < sol.lambda1.size(); ++i)
    text << "bus " << i << "  price " << money(sol.lambda1[i]) << "\n";
  for (int w = 0; w < static_cast<int>(sol.lambda2.size()); ++w)
    for (int i = 0; i < sol.lambda2[w].size(); ++i)
      text << "scenario " << w << " bus " << i << "  price "
           << money(sol.lambda2[w][i]) << "\n";
  for (int k = 0; k < sol.allocation.yG1.size(); ++k)
    text << "generator " << k << "  y1 " << money(sol.allocation.yG1[k]) << "\n";
  for (int k = 0; k < sol.allocation.yL1.size(); ++k)
    text << "lse " << k << "  y1 " << money(sol.allocation.yL1[k]) << "\n";
  emit(opt, os, text.str(), j);
  return kExitOk;
}

int cmd_verify_sceq(const Options& opt, std::ostream& os) {
  Problem prob = load_checked(opt);
  Allocation alloc;
  PriceSystem prices;
  if (!opt.alloc_path.empty() && !opt.prices_path.empty()) {
    std::ifstream fa(opt.alloc_path);
    if (!fa) throw InvalidInput("cannot open allocation file: " + opt.alloc_path);
    std::ifstream fp(opt.prices_path);
    if (!fp) throw InvalidInput("cannot open prices file: " + opt.prices_path);
    json ja, jp;
    fa >> ja;
    fp >> jp;
    alloc = allocation_from_json(ja);
    prices = prices_from_json(jp);
  } else {
    SceqPoint eq = construct_sceq(prob.network, prob.scenarios);
    alloc = eq.allocation;
    prices = eq.prices;
  }
  VerifyOptions vo;
  if (opt.tol > 0.0) vo.gap_tol = opt.tol;
  SceqCertificate cert = verify_sceq(prob.network, prob.scenarios, alloc, prices, vo);
  json j = header(opt);
  j["certificate"] = certificate_to_json(cert);
  std::ostringstream text;
  text << (cert.pass ? "pass" : "fail") << "  max gap " << money(cert.max_gap)
       << "  max clearing residual " << money(cert.max_clearing) << "\n";
  for (const AgentGap& a : cert.gaps)
    text << (a.kind == AgentKind::Generator ? "generator " : "lse ") << a.index
         << "  bus " << a.bus << "  gap " << money(a.gap) << "  best "
         << money(a.best_objective) << "  at allocation "
         << money(a.objective_at_allocation) << "\n";
  for (const std::string& r : cert.reasons) text << "reason: " << r << "\n";
  emit(opt, os, text.str(), j);
  return cert.pass ? kExitOk : kExitFalsified;
}

int cmd_mechanism(const Options& opt, std::ostream& os) {
  Problem prob = load_checked(opt);
  const Network& net = prob.network;
  const ScenarioSet& scen = prob.scenarios;
  if (opt.scenario < 0 || opt.scenario >= scen.count())
    throw InvalidInput("realized scenario index out of range");
  const int w = opt.scenario;
  double tol = opt.tol > 0.0 ? opt.tol : 1e-6;

  // announce prices from the system problem, then let every agent respond
  PlannerSolution sol = solve_spp(net, scen);
  PriceSystem prices{sol.lambda1, sol.lambda2};
  double scale = 1.0 + std::abs(sol.welfare);

  json j = header(opt);
  j["realized_scenario"] = w;
  j["prices"] = prices_to_json(prices);
  j["welfare"] = sol.welfare;
  std::ostringstream text;
  text << "announced day-ahead prices:";
  for (int i = 0; i < prices.p1.size(); ++i) text << " " << money(prices.p1[i]);
  text << "\n";
  if (net.stage2_enabled) {
    text << "announced real-time prices (scenario " << w << "):";
    for (int i = 0; i < prices.p2[w].size(); ++i) text << " " << money(prices.p2[w][i]);
    text << "\n";
  }

  double max_gap = 0.0;
  json agents = json::array();
  json settlements = json::array();
  for (int k = 0; k < static_cast<int>(net.generators.size()); ++k) {
    const Generator& g = net.generators[k];
    BusPrices bp = prices.at_bus(g.bus);
    GenResponse r = gen_best_response(g, bp, scen);
    double y1 = sol.allocation.yG1[k];
    double y2 = net.stage2_enabled ? sol.allocation.stage2[w].yG2[k] : 0.0;
    VectorXd y2full = VectorXd::Zero(bp.p2.size());
    if (net.stage2_enabled)
      for (int s = 0; s < scen.count(); ++s) y2full[s] = sol.allocation.stage2[s].yG2[k];
    double gap = std::max(0.0, r.profit - gen_objective_at(g, bp, scen, y1, y2full));
    max_gap = std::max(max_gap, gap);
    double da_paid = bp.p1 * y1;
    double rt_paid = net.stage2_enabled ? bp.p2[w] * y2 : 0.0;
    agents.push_back({{"kind", "generator"},
                      {"index", k},
                      {"response_y1", r.y1},
                      {"dispatch_y1", y1},
                      {"gap", gap}});
    settlements.push_back({{"kind", "generator"},
                           {"index", k},
                           {"da_receives", da_paid},
                           {"rt_receives", rt_paid},
                           {"produces", y1 + y2}});
    text << "generator " << k << "  receives DA " << money(da_paid) << "  RT "
         << money(rt_paid) << "  produces " << money(y1 + y2) << "  gap "
         << money(gap) << "\n";
  }
  for (int k = 0; k < static_cast<int>(net.lses.size()); ++k) {
    const Lse& s = net.lses[k];
    BusPrices bp = prices.at_bus(s.bus);
    double gap = 0.0;
    double response_y1 = 0.0;
    try {
      LseResponse r = lse_best_response(s, k, bp, scen, net.stage2_enabled);
      response_y1 = r.y1;
      VectorXd y2(scen.count()), x(scen.count()), z(scen.count());
      for (int sc = 0; sc < scen.count(); ++sc) {
        y2[sc] = net.stage2_enabled ? sol.allocation.stage2[sc].yL2[k] : 0.0;
        x[sc] = sol.allocation.stage2[sc].xL2[k];
        z[sc] = sol.allocation.stage2[sc].zL2[k];
      }
      double at = lse_objective_at(s, bp, scen, sol.allocation.yL1[k],
                                   net.stage2_enabled ? y2 : VectorXd(), x, z);
      gap = std::max(0.0, r.utility - at);
    } catch (const std::exception& e) {
      gap = std::numeric_limits<double>::infinity();
    }
    max_gap = std::max(max_gap, gap);
    double y1 = sol.allocation.yL1[k];
    double y2 = net.stage2_enabled ? sol.allocation.stage2[w].yL2[k] : 0.0;
    double da = bp.p1 * y1;
    double rt = net.stage2_enabled ? bp.p2[w] * y2 : 0.0;
    agents.push_back({{"kind", "lse"},
                      {"index", k},
                      {"response_y1", response_y1},
                      {"dispatch_y1", y1},
                      {"gap", gap}});
    settlements.push_back({{"kind", "lse"},
                           {"index", k},
                           {"da_pays", da},
                           {"rt_pays", rt},
                           {"receives", y1 + y2}});
    text << "lse " << k << "  pays DA " << money(da) << "  RT " << money(rt)
         << "  receives " << money(y1 + y2) << "  gap " << money(gap) << "\n";
  }
  bool consistent = max_gap <= tol * scale;
  j["agents"] = agents;
  j["settlements"] = settlements;
  j["max_gap"] = max_gap;
  j["consistent"] = consistent;
  text << (consistent ? "responses consistent with dispatch"
                      : "MISMATCH: a best response improves on the dispatch")
       << "  max gap " << money(max_gap) << "\n";
  emit(opt, os, text.str(), j);
  return consistent ? kExitOk : kExitFalsified;
}

int cmd_efficient_bids(const Options& opt, std::ostream& os) {
  Problem prob = load_checked(opt);
  BidProfile b = efficient_bids(prob.network, prob.scenarios);
  json j = header(opt);
  j["bids"] = bids_to_json(b);
  std::ostringstream text;
  for (int k = 0; k < b.gen_b1.size(); ++k) {
    text << "generator " << k << "  b1 " << money(b.gen_b1[k]);
    for (int w = 0; w < b.gen_b2.cols(); ++w) text << "  b2[" << w << "] "
                                                   << money(b.gen_b2(k, w));
    text << "\n";
  }
  for (int k = 0; k < b.lse_b1.size(); ++k) {
    text << "lse " << k << "  b1 " << money(b.lse_b1[k]);
    for (int w = 0; w < b.lse_b2.cols(); ++w) text << "  b2[" << w << "] "
                                                   << money(b.lse_b2(k, w));
    text << "\n";
  }
  emit(opt, os, text.str(), j);
  return kExitOk;
}

BidProfile load_bids_or_efficient(const Options& opt, const Problem& prob) {
  if (opt.bids_path.empty()) return efficient_bids(prob.network, prob.scenarios);
  std::ifstream f(opt.bids_path);
  if (!f) throw InvalidInput("cannot open bids file: " + opt.bids_path);
  json j;
  f >> j;
  return bids_from_json(j, prob.network, prob.scenarios.count());
}

int cmd_clear_ded(const Options& opt, std::ostream& os) {
  Problem prob = load_checked(opt);
  BidProfile bids = load_bids_or_efficient(opt, prob);
  ClearingOutcome o = clear_ded(prob.network, prob.scenarios, bids);
  json j = header(opt);
  j["outcome"] = clearing_to_json(o);
  std::ostringstream text;
  text << "status " << to_string(o.status) << "\n";
  for (const std::string& n : o.notes) text << "note: " << n << "\n";
  if (o.status == SolveStatus::Optimal) {
    text << "bid objective " << money(o.bid_objective) << "  true welfare "
         << money(o.true_welfare) << "\n";
    for (int i = 0; i < o.lambda1.size(); ++i)
      text << "bus " << i << "  price " << money(o.lambda1[i]) << "\n";
    for (int k = 0; k < o.gen_payoff.size(); ++k)
      text << "generator " << k << "  payoff " << money(o.gen_payoff[k]) << "\n";
    for (int k = 0; k < o.lse_payoff.size(); ++k)
      text << "lse " << k << "  payoff " << money(o.lse_payoff[k]) << "\n";
  }
  emit(opt, os, text.str(), j);
  return o.status == SolveStatus::Optimal ? kExitOk : kExitSolver;
}

void write_probes_csv(const std::string& path,
                      const std::vector<DeviationResult>& results) {
  if (path.empty()) return;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write probe log: " + path);
  f << "agent,coordinate,bid,payoff,gain\n";
  for (const DeviationResult& d : results) {
    std::string who =
        (d.agent.kind == AgentKind::Generator ? "generator" : "lse") +
        std::string(":") + std::to_string(d.agent.index);
    for (const DeviationProbe& p : d.probes) {
      if (!p.valid) continue;
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%s,%d,%.10g,%.10g,%.10g\n", who.c_str(),
                    p.coordinate, p.bid, p.payoff, p.payoff - d.base_payoff);
      f << buf;
    }
  }
}

int cmd_nash_check(const Options& opt, std::ostream& os) {
  Problem prob = load_checked(opt);
  BidProfile bids = load_bids_or_efficient(opt, prob);
  double thresh = opt.tol > 0.0 ? opt.tol : 1e-5;
  DeviationSearchSpec spec;
  spec.grid_points = opt.grid;

  bool assumption_ok = feasible_without_each_generator(prob.network, prob.scenarios);
  std::vector<DeviationResult> results;
  double max_gain = 0.0;
  const int nG = static_cast<int>(prob.network.generators.size());
  const int nL = static_cast<int>(prob.network.lses.size());
  for (int k = 0; k < nG; ++k)
    results.push_back(best_deviation(prob.network, prob.scenarios, bids,
                                     {AgentKind::Generator, k}, spec));
  for (int k = 0; k < nL; ++k)
    results.push_back(
        best_deviation(prob.network, prob.scenarios, bids, {AgentKind::Lse, k}, spec));
  for (const DeviationResult& d : results) max_gain = std::max(max_gain, d.gain);

  json j = header(opt);
  j["assumption_each_generator_removable"] = assumption_ok;
  j["grid_points"] = opt.grid;
  j["threshold"] = thresh;
  j["search_note"] =
      "bid space: nonnegative scalars; probes span [0.1x, 10x] of each current "
      "bid at the configured grid resolution plus golden-section refinement";
  j["max_gain"] = max_gain;
  j["deviations"] = json::array();
  std::ostringstream text;
  text << "bid space: nonnegative scalars; probes span [0.1x, 10x] of each "
          "current bid at "
       << opt.grid << " log-spaced points plus refinement\n";
  for (const DeviationResult& d : results) {
    j["deviations"].push_back(deviation_to_json(d));
    text << (d.agent.kind == AgentKind::Generator ? "generator " : "lse ")
         << d.agent.index << "  gain " << money(d.gain) << "  best bid "
         << money(d.best_bid) << " (coordinate " << d.best_coordinate
         << ", skipped " << d.skipped << ")\n";
  }
  bool falsified = max_gain > thresh;
  j["verdict"] = falsified ? "deviation found"
                           : "no profitable deviation found at this resolution";
  text << (falsified ? "deviation found" : "no profitable deviation found at this resolution")
       << "  max gain " << money(max_gain) << "\n";
  write_probes_csv(opt.probes_csv, results);
  emit(opt, os, text.str(), j);
  return falsified ? kExitFalsified : kExitOk;
}

int cmd_dr_counterexample(const Options& opt, std::ostream& os) {
  Problem prob = load_checked(opt);
  const Network& net = prob.network;
  const ScenarioSet& scen = prob.scenarios;
  if (scen.count() != 1 || net.stage2_enabled)
    throw InvalidInput(
        "dr-counterexample requires a single scenario and stage2 disabled");
  double thresh = opt.tol > 0.0 ? opt.tol : 1e-5;

  PlannerSolution sol = solve_spp(net, scen);
  const int nG = static_cast<int>(net.generators.size());
  const int nL = static_cast<int>(net.lses.size());
  VectorXd gen_bids(nG), lse_bids(nL);
  for (int k = 0; k < nG; ++k) gen_bids[k] = sol.lambda1[net.generators[k].bus];
  for (int k = 0; k < nL; ++k) lse_bids[k] = sol.mu[0][k];

  // the planner point, transplanted into the bid game, must be a KKT point
  DrBidProgram gp = assemble_dr_bid(net, scen, gen_bids, lse_bids);
  const DrBidLayout& l = gp.layout;
  VectorXd x(l.num_vars());
  for (int k = 0; k < nG; ++k) x[l.yG(k)] = sol.allocation.yG1[k];
  for (int k = 0; k < nL; ++k) x[l.yL(k)] = sol.allocation.yL1[k];
  for (int k = 0; k < nL; ++k) x[l.x(k)] = sol.allocation.stage2[0].xL2[k];
  for (int i = 0; i < net.n_buses; ++i) x[l.th(i)] = sol.allocation.theta1[i];
  Multipliers m;
  m.lambda_eq = VectorXd::Zero(gp.prog.num_eq());
  for (int i = 0; i < net.n_buses; ++i) m.lambda_eq[l.eq_bal(i)] = sol.lambda1[i];
  m.mu_in = VectorXd::Zero(gp.prog.num_in());
  for (int li = 0; li < l.L; ++li)
    for (int d = 0; d < 2; ++d) m.mu_in[l.in_line(li, d)] = sol.gamma1[2 * li + d];
  for (int k = 0; k < nL; ++k) m.mu_in[l.in_demand(k)] = sol.mu[0][k];
  m.mu_bound = VectorXd::Zero(l.num_vars());
  for (int k = 0; k < nG; ++k)
    m.mu_bound[l.yG(k)] = gen_bids[k] - sol.lambda1[net.generators[k].bus];
  for (int k = 0; k < nL; ++k) {
    m.mu_bound[l.yL(k)] = sol.lambda1[net.lses[k].bus] - sol.mu[0][k];
    m.mu_bound[l.x(k)] = lse_bids[k] - sol.mu[0][k];
  }
  double cert_residual = kkt_residual(gp.prog, x, m);

  DrBidOutcome base = clear_dr_bid_game(net, scen, gen_bids, lse_bids);
  if (base.status != SolveStatus::Optimal) throw std::runtime_error("base clearing failed");

  DeviationSearchSpec spec;
  spec.grid_points = opt.grid;
  std::vector<DeviationResult> results;
  double max_gain = 0.0;
  for (int k = 0; k < nL; ++k) {
    results.push_back(best_dr_bid_deviation(net, scen, gen_bids, lse_bids, k, spec));
    max_gain = std::max(max_gain, results.back().gain);
  }

  json j = header(opt);
  j["planner_welfare"] = sol.welfare;
  j["gen_bids"] = json::array();
  for (int k = 0; k < nG; ++k) j["gen_bids"].push_back(gen_bids[k]);
  j["lse_dr_bids"] = json::array();
  for (int k = 0; k < nL; ++k) j["lse_dr_bids"].push_back(lse_bids[k]);
  j["certificate_residual"] = cert_residual;
  j["search_note"] =
      "bid space: nonnegative scalars; probes span [0.1x, 10x] of each current "
      "bid at the configured grid resolution plus golden-section refinement";
  j["base_outcome"] = dr_outcome_to_json(base);
  j["deviations"] = json::array();
  for (const DeviationResult& d : results) j["deviations"].push_back(deviation_to_json(d));
  j["max_gain"] = max_gain;
  j["threshold"] = thresh;
  bool falsified = max_gain > thresh;
  j["verdict"] = falsified
                     ? "deviation found: bidding service costs is not an equilibrium"
                     : "no profitable deviation found at this resolution";

  std::ostringstream text;
  text << "planner welfare " << money(sol.welfare) << "\n";
  text << "certificate residual " << cert_residual << "\n";
  text << "bid space: nonnegative scalars; probes span [0.1x, 10x] of each "
          "current bid at "
       << opt.grid << " log-spaced points plus refinement\n";
  for (int k = 0; k < nL; ++k)
    text << "lse " << k << "  base payoff " << money(base.lse_payoff[k])
         << "  best deviation bid " << money(results[k].best_bid) << "  payoff "
         << money(results[k].best_payoff) << "  gain " << money(results[k].gain)
         << "\n";
  text << j["verdict"].get<std::string>() << "  max gain " << money(max_gain) << "\n";
  write_probes_csv(opt.probes_csv, results);
  emit(opt, os, text.str(), j);
  return falsified ? kExitFalsified : kExitOk;
}

}  // namespace

int run(const Options& opt, std::ostream& os, std::ostream& es) {
  try {
    if (opt.command == "validate") return cmd_validate(opt, os);
    if (opt.command == "solve") return cmd_solve(opt, os);
    if (opt.command == "verify-sceq") return cmd_verify_sceq(opt, os);
    if (opt.command == "mechanism") return cmd_mechanism(opt, os);
    if (opt.command == "clear-ded") return cmd_clear_ded(opt, os);
    if (opt.command == "efficient-bids") return cmd_efficient_bids(opt, os);
    if (opt.command == "nash-check") return cmd_nash_check(opt, os);
    if (opt.command == "dr-counterexample") return cmd_dr_counterexample(opt, os);
    es << "unknown command: " << opt.command << "\n";
    return kExitInvalid;
  } catch (const InvalidInput& e) {
    es << e.what() << "\n";
    return kExitInvalid;
  } catch (const json::exception& e) {
    es << "input error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::runtime_error& e) {
    std::string msg = e.what();
    if (msg.find("cannot open") != std::string::npos ||
        msg.find("parse error") != std::string::npos ||
        msg.find("missing") != std::string::npos) {
      es << msg << "\n";
      return kExitInvalid;
    }
    es << "solver error: " << msg << "\n";
    return kExitSolver;
  } catch (const std::exception& e) {
    es << "error: " << e.what() << "\n";
    return kExitSolver;
  }
}

int main_entry(int argc, char** argv) {
  CLI::App app{"two-stage electricity market clearing and equilibrium analysis"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub, bool needs_input) {
    if (needs_input) sub->add_option("file", opt.input, "problem file")->required();
    sub->add_option("--tol", opt.tol, "tolerance override");
    sub->add_option("--seed", opt.seed, "seed echoed into reports");
    sub->add_option("--out", opt.out, "write the report to this path");
    sub->add_option("--format", opt.format, "text|json")
        ->check(CLI::IsMember({"text", "json"}));
  };

  CLI::App* sub;
  sub = app.add_subcommand("validate", "check a problem file");
  add_common(sub, true);
  sub = app.add_subcommand("solve", "solve the system dispatch problem");
  add_common(sub, true);
  sub->add_option("--dump-qp", opt.dump_qp, "dump the assembled program as JSON");
  sub = app.add_subcommand("verify-sceq", "verify a competitive equilibrium");
  add_common(sub, true);
  sub->add_option("--alloc", opt.alloc_path, "allocation JSON");
  sub->add_option("--prices", opt.prices_path, "prices JSON");
  sub = app.add_subcommand("mechanism", "run the two-stage settlement mechanism");
  add_common(sub, true);
  sub->add_option("--scenario", opt.scenario, "realized scenario index")->required();
  sub = app.add_subcommand("clear-ded", "clear the bid-based dispatch");
  add_common(sub, true);
  sub->add_option("--bids", opt.bids_path, "bid profile JSON (default: efficient)");
  sub = app.add_subcommand("efficient-bids", "emit the efficient bid profile");
  add_common(sub, true);
  sub = app.add_subcommand("nash-check", "search unilateral bid deviations");
  add_common(sub, true);
  sub->add_option("--bids", opt.bids_path, "bid profile JSON (default: efficient)");
  sub->add_option("--grid", opt.grid, "probes per bid coordinate");
  sub->add_option("--probes-csv", opt.probes_csv, "write per-probe CSV log");
  sub = app.add_subcommand("dr-counterexample",
                           "single-stage game where LSEs bid service costs");
  add_common(sub, true);
  sub->add_option("--grid", opt.grid, "probes per bid coordinate");
  sub->add_option("--probes-csv", opt.probes_csv, "write per-probe CSV log");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  opt.command = app.get_subcommands().front()->get_name();
  return run(opt, std::cout, std::cerr);
}

}  // namespace tsmarket::cli
