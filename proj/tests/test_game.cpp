#include <doctest.h>

#include <cmath>

#include "instances.hpp"
#include "tsmarket/game.hpp"

using namespace tsmarket;

TEST_CASE("efficient bids repeat each bus's clearing price") {
  auto prob = testsupport::load_data("dr_counterexample.json");
  BidProfile b = efficient_bids(prob.network, prob.scenarios);
  CHECK(b.gen_b1[0] == doctest::Approx(520.0).epsilon(1e-6));
  CHECK(b.gen_b1[1] == doctest::Approx(180.0).epsilon(1e-6));
  CHECK(b.lse_b1[0] == doctest::Approx(520.0).epsilon(1e-6));
  CHECK(b.lse_b1[1] == doctest::Approx(520.0).epsilon(1e-6));
}

TEST_CASE("bid clearing at efficient bids recovers the efficient dispatch") {
  auto prob = testsupport::load_data("dr_counterexample.json");
  PlannerSolution sol = solve_spp(prob.network, prob.scenarios);
  BidProfile b = efficient_bids(prob.network, sol);
  ClearingOutcome o = clear_ded(prob.network, prob.scenarios, b);
  REQUIRE(o.status == SolveStatus::Optimal);
  CHECK(std::abs(o.true_welfare - sol.welfare) <= 1e-6 * (1.0 + std::abs(sol.welfare)));
  CHECK(o.allocation.yG1[0] == doctest::Approx(3.0).epsilon(1e-5));
  CHECK(o.allocation.yG1[1] == doctest::Approx(2.0).epsilon(1e-5));
  CHECK(o.allocation.yL1[0] == doctest::Approx(5.0).epsilon(1e-5));
  CHECK(o.lse_payoff[0] == doctest::Approx(-9350.0).epsilon(1e-7));
}

TEST_CASE("zero consumption bids clear to zero trade") {
  auto prob = testsupport::load_data("dr_counterexample.json");
  BidProfile b = efficient_bids(prob.network, prob.scenarios);
  b.lse_b1.setZero();
  ClearingOutcome o = clear_ded(prob.network, prob.scenarios, b);
  REQUIRE(o.status == SolveStatus::Optimal);
  CHECK(o.allocation.yG1.cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(o.allocation.yL1.cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(o.gen_payoff.cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("a consumption bid above local generation is reported unbounded") {
  // one bus, generators bidding 10 and 12, an LSE bidding 11: balanced trade
  // with the 10-bidder gains one unit of reported welfare per MWh without
  // limit, so the program has no optimum and the guard must name the bid
  Network net;
  net.n_buses = 1;
  net.stage2_enabled = false;
  net.generators.push_back({0, {1.0, 1.0}, {1.0, 1.0}});
  net.generators.push_back({0, {1.0, 1.0}, {1.0, 1.0}});
  net.lses.push_back({0, 5.0, {1.0, 1.0}, {1.0, 50.0}, 1.0});
  ScenarioSet scen;
  scen.scenarios.push_back({VectorXd::Zero(1), 1.0});
  BidProfile b;
  b.gen_b1.resize(2);
  b.gen_b1 << 10.0, 12.0;
  b.lse_b1 = VectorXd::Constant(1, 11.0);
  b.gen_b2.resize(2, 0);
  b.lse_b2.resize(1, 0);
  ClearingOutcome o = clear_ded(net, scen, b);
  CHECK(o.status == SolveStatus::Unbounded);
  REQUIRE_FALSE(o.notes.empty());
  CHECK(o.notes[0].find("lse 0") != std::string::npos);
}

TEST_CASE("behind a capped line the cheap bidder serves the import limit") {
  // the bounded variant of the (10, 12) vs 11 configuration: the LSE sits
  // across a two-unit line, so the 10-bidder dispatches exactly the import
  // capacity and the LSE's bus clears at its own bid
  Network net;
  net.n_buses = 2;
  net.stage2_enabled = false;
  net.lines.push_back({0, 1, 1.0, 2.0});
  net.generators.push_back({0, {1.0, 1.0}, {1.0, 1.0}});
  net.generators.push_back({0, {1.0, 2.0}, {1.0, 1.0}});
  net.lses.push_back({1, 5.0, {1.0, 1.0}, {1.0, 50.0}, 1.0});
  ScenarioSet scen;
  scen.scenarios.push_back({VectorXd::Zero(1), 1.0});
  BidProfile b;
  b.gen_b1.resize(2);
  b.gen_b1 << 10.0, 12.0;
  b.lse_b1 = VectorXd::Constant(1, 11.0);
  b.gen_b2.resize(2, 0);
  b.lse_b2.resize(1, 0);
  ClearingOutcome o = clear_ded(net, scen, b);
  REQUIRE(o.status == SolveStatus::Optimal);
  CHECK(o.allocation.yG1[0] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(o.allocation.yG1[1] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(o.allocation.yL1[0] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(o.lambda1[0] == doctest::Approx(10.0).epsilon(1e-6));
  CHECK(o.lambda1[1] == doctest::Approx(11.0).epsilon(1e-6));
}

TEST_CASE("service-cost bidding clears the published dispatch at efficient bids") {
  auto prob = testsupport::load_data("dr_counterexample.json");
  PlannerSolution sol = solve_spp(prob.network, prob.scenarios);
  VectorXd gen_bids(2), lse_bids(2);
  gen_bids << sol.lambda1[0], sol.lambda1[1];
  lse_bids << sol.mu[0][0], sol.mu[0][1];
  DrBidOutcome o = clear_dr_bid_game(prob.network, prob.scenarios, gen_bids, lse_bids);
  REQUIRE(o.status == SolveStatus::Optimal);
  CHECK(o.yG[0] == doctest::Approx(3.0).epsilon(1e-5));
  CHECK(o.yG[1] == doctest::Approx(2.0).epsilon(1e-5));
  CHECK(o.x[0] == doctest::Approx(25.0).epsilon(1e-5));
  CHECK(o.x[1] == doctest::Approx(20.0).epsilon(1e-5));
  CHECK(o.lambda[0] == doctest::Approx(520.0).epsilon(1e-6));
  CHECK(o.lambda[1] == doctest::Approx(180.0).epsilon(1e-6));
  CHECK(o.lse_payoff[0] == doctest::Approx(-9350.0).epsilon(1e-7));
}

TEST_CASE("underbidding demand response reshapes the dispatch and price") {
  auto prob = testsupport::load_data("dr_counterexample.json");
  VectorXd gen_bids(2), lse_bids(2);
  gen_bids << 520.0, 180.0;
  lse_bids << 440.0, 430.0;
  DrBidOutcome o = clear_dr_bid_game(prob.network, prob.scenarios, gen_bids, lse_bids);
  REQUIRE(o.status == SolveStatus::Optimal);
  CHECK(o.yG[0] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(o.yG[1] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(o.x[0] == doctest::Approx(28.0).epsilon(1e-6));
  CHECK(o.yL[0] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(o.lambda[0] == doctest::Approx(440.0).epsilon(1e-6));
  CHECK(o.lse_payoff[0] == doctest::Approx(-9280.0).epsilon(1e-7));
}

TEST_CASE("with a dead line and cheap service bids nothing trades") {
  auto prob = testsupport::load_data("dr_counterexample.json");
  prob.network.lines[0].flow_limit = 0.0;
  VectorXd gen_bids(2), lse_bids(2);
  gen_bids << 520.0, 180.0;
  lse_bids << 10.0, 10.0;
  DrBidOutcome o = clear_dr_bid_game(prob.network, prob.scenarios, gen_bids, lse_bids);
  REQUIRE(o.status == SolveStatus::Optimal);
  CHECK(o.yG.cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(o.x[0] == doctest::Approx(30.0).epsilon(1e-6));
  CHECK(o.x[1] == doctest::Approx(20.0).epsilon(1e-6));
}

TEST_CASE("congestion predicate distinguishes binding lines") {
  auto prob = testsupport::load_data("dr_counterexample.json");
  PlannerSolution sol = solve_spp(prob.network, prob.scenarios);
  CHECK_FALSE(congestion_free(sol, prob.network));

  SUBCASE("single bus networks carry no congestion") {
    auto single = testsupport::load_data("single_bus_two_scenarios.json");
    PlannerSolution s2 = solve_spp(single.network, single.scenarios);
    CHECK(congestion_free(s2, single.network));
  }
  SUBCASE("relaxing the limit tenfold clears the flag") {
    prob.network.lines[0].flow_limit = 20.0;
    PlannerSolution s3 = solve_spp(prob.network, prob.scenarios);
    CHECK(congestion_free(s3, prob.network));
  }
}

TEST_CASE("monopoly predicate needs two of each type wherever one exists") {
  auto prob = testsupport::load_data("dr_counterexample.json");
  CHECK_FALSE(monopoly_free(prob.network));

  Network net;
  net.n_buses = 2;
  net.lines.push_back({0, 1, 1.0, 1.0});
  for (int k = 0; k < 2; ++k) {
    net.generators.push_back({0, {1.0, 1.0}, {1.0, 1.0}});
    net.lses.push_back({0, 1.0, {1.0, 1.0}, {1.0, 50.0}, 1.0});
  }
  CHECK(monopoly_free(net));

  Network ring;
  ring.n_buses = 3;
  ring.lines.push_back({0, 1, 1.0, 1.0});
  ring.lines.push_back({1, 2, 1.0, 1.0});
  ring.lines.push_back({0, 2, 1.0, 1.0});
  for (int bus = 0; bus < 3; ++bus)
    for (int k = 0; k < 2; ++k) {
      ring.generators.push_back({bus, {1.0, 1.0}, {1.0, 1.0}});
      ring.lses.push_back({bus, 1.0, {1.0, 1.0}, {1.0, 50.0}, 1.0});
    }
  CHECK(monopoly_free(ring));
}

TEST_CASE("the first LSE profits by underbidding its service cost") {
  auto prob = testsupport::load_data("dr_counterexample.json");
  PlannerSolution sol = solve_spp(prob.network, prob.scenarios);
  VectorXd gen_bids(2), lse_bids(2);
  gen_bids << sol.lambda1[0], sol.lambda1[1];
  lse_bids << sol.mu[0][0], sol.mu[0][1];
  DeviationResult dev =
      best_dr_bid_deviation(prob.network, prob.scenarios, gen_bids, lse_bids, 0);
  CHECK(dev.base_payoff == doctest::Approx(-9350.0).epsilon(1e-7));
  CHECK(dev.gain >= 70.0 - 1e-3);
  CHECK(dev.best_bid >= 429.0);
  CHECK(dev.best_bid <= 521.0);
}

TEST_CASE("payoffs and congestion rent account for the dispatched welfare") {
  auto prob = testsupport::load_data("dr_counterexample.json");
  BidProfile b = efficient_bids(prob.network, prob.scenarios);
  ClearingOutcome o = clear_ded(prob.network, prob.scenarios, b);
  REQUIRE(o.status == SolveStatus::Optimal);
  double surplus = 0.0;
  const Network& net = prob.network;
  for (int k = 0; k < static_cast<int>(net.generators.size()); ++k)
    surplus -= o.lambda1[net.generators[k].bus] * o.allocation.yG1[k];
  for (int k = 0; k < static_cast<int>(net.lses.size()); ++k)
    surplus += o.lambda1[net.lses[k].bus] * o.allocation.yL1[k];
  double total = o.gen_payoff.sum() + o.lse_payoff.sum() + surplus;
  CHECK(std::abs(total - o.true_welfare) <= 1e-6 * (1.0 + std::abs(o.true_welfare)));
}

TEST_CASE("no generator gains from unilateral probes on a congestion-free instance") {
  auto prob = testsupport::make_congestion_free_instance(901);
  BidProfile b = efficient_bids(prob.network, prob.scenarios);
  DeviationSearchSpec spec;
  spec.grid_points = 15;  // coarse probe for the unit suite
  for (int k = 0; k < static_cast<int>(prob.network.generators.size()); ++k) {
    DeviationResult dev = best_deviation(prob.network, prob.scenarios, b,
                                         {AgentKind::Generator, k}, spec);
    CHECK(dev.gain <= 1e-5);
    for (const DeviationProbe& probe : dev.probes)
      if (probe.valid) CHECK(probe.payoff <= dev.base_payoff + 1e-5);
  }
}

TEST_CASE("no LSE gains from unilateral probes on a monopoly-free instance") {
  auto prob = testsupport::make_monopoly_free_instance(902);
  BidProfile b = efficient_bids(prob.network, prob.scenarios);
  DeviationSearchSpec spec;
  spec.grid_points = 15;
  for (int k = 0; k < static_cast<int>(prob.network.lses.size()); ++k) {
    DeviationResult dev =
        best_deviation(prob.network, prob.scenarios, b, {AgentKind::Lse, k}, spec);
    CHECK(dev.gain <= 1e-5);
    for (const DeviationProbe& probe : dev.probes)
      if (probe.valid) CHECK(probe.payoff <= dev.base_payoff + 1e-5);
  }
}

TEST_CASE("payoff accounting holds on a stochastic instance") {
  auto prob = testsupport::make_instance(1004);
  BidProfile b = efficient_bids(prob.network, prob.scenarios);
  ClearingOutcome o = clear_ded(prob.network, prob.scenarios, b);
  REQUIRE(o.status == SolveStatus::Optimal);
  const Network& net = prob.network;
  double surplus = 0.0;
  for (int k = 0; k < static_cast<int>(net.generators.size()); ++k)
    surplus -= o.lambda1[net.generators[k].bus] * o.allocation.yG1[k];
  for (int k = 0; k < static_cast<int>(net.lses.size()); ++k)
    surplus += o.lambda1[net.lses[k].bus] * o.allocation.yL1[k];
  for (int w = 0; w < prob.scenarios.count(); ++w) {
    double pw = prob.scenarios.scenarios[w].prob;
    for (int k = 0; k < static_cast<int>(net.generators.size()); ++k)
      surplus -= pw * o.lambda2[w][net.generators[k].bus] * o.allocation.stage2[w].yG2[k];
    for (int k = 0; k < static_cast<int>(net.lses.size()); ++k)
      surplus += pw * o.lambda2[w][net.lses[k].bus] * o.allocation.stage2[w].yL2[k];
  }
  double total = o.gen_payoff.sum() + o.lse_payoff.sum() + surplus;
  CHECK(std::abs(total - o.true_welfare) <= 1e-6 * (1.0 + std::abs(o.true_welfare)));
}

TEST_CASE("the system solves with any single generator removed") {
  auto prob = testsupport::load_data("dr_counterexample.json");
  CHECK(feasible_without_each_generator(prob.network, prob.scenarios));
}

TEST_CASE("the service-cost game rejects stochastic configurations") {
  auto prob = testsupport::load_data("single_bus_two_scenarios.json");
  VectorXd gen_bids = VectorXd::Constant(1, 5.0);
  VectorXd lse_bids = VectorXd::Constant(1, 5.0);
  CHECK_THROWS_AS(
      clear_dr_bid_game(prob.network, prob.scenarios, gen_bids, lse_bids),
      std::invalid_argument);
}
