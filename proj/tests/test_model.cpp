#include <doctest.h>

#include "instances.hpp"
#include "tsmarket/model.hpp"

using namespace tsmarket;
using testsupport::Rng;

namespace {

Network two_bus_network() {
  return testsupport::load_data("dr_counterexample.json").network;
}

bool has_code(const std::vector<ValidationIssue>& issues, const std::string& code) {
  for (const ValidationIssue& i : issues)
    if (i.code == code) return true;
  return false;
}

}  // namespace

TEST_CASE("validate accepts the bundled two-bus instance") {
  auto prob = testsupport::load_data("dr_counterexample.json");
  CHECK(validate(prob.network, prob.scenarios).empty());
}

TEST_CASE("validate accepts a degenerate single-bus instance") {
  Network net;
  net.n_buses = 1;
  net.generators.push_back({0, {1.0, 0.0}, {1.0, 0.0}});
  net.lses.push_back({0, 1.0, {1.0, 0.0}, {1.0, 5.0}, 1.0});
  ScenarioSet scen;
  scen.scenarios.push_back({VectorXd::Zero(1), 1.0});
  CHECK(validate(net, scen).empty());
}

TEST_CASE("validate reports probability mass defects with the observed sum") {
  auto prob = testsupport::load_data("single_bus_two_scenarios.json");
  prob.scenarios.scenarios[0].prob = 0.5;
  prob.scenarios.scenarios[1].prob = 0.4;
  auto issues = validate(prob.network, prob.scenarios);
  REQUIRE(has_code(issues, "probability_mass"));
  bool found = false;
  for (const ValidationIssue& i : issues)
    if (i.message.find("probabilities sum to 0.9") != std::string::npos) found = true;
  CHECK(found);
}

TEST_CASE("validate flags structural defects") {
  auto prob = testsupport::load_data("dr_counterexample.json");
  SUBCASE("disconnected graph") {
    prob.network.lines.clear();
    CHECK(has_code(validate(prob.network, prob.scenarios), "disconnected_graph"));
  }
  SUBCASE("negative demand") {
    prob.network.lses[0].demand = -1.0;
    CHECK(has_code(validate(prob.network, prob.scenarios), "negative_demand"));
  }
  SUBCASE("output above cap") {
    prob.scenarios.scenarios[0].output[0] = 5.0;  // wcap is 1
    CHECK(has_code(validate(prob.network, prob.scenarios), "renewable_above_cap"));
  }
  SUBCASE("duplicate line") {
    prob.network.lines.push_back(prob.network.lines[0]);
    CHECK(has_code(validate(prob.network, prob.scenarios), "duplicate_line"));
  }
  SUBCASE("nonpositive renewable cap") {
    prob.network.lses[0].renewable_cap = 0.0;
    CHECK(has_code(validate(prob.network, prob.scenarios), "nonpositive_cap"));
  }
}

TEST_CASE("validate is idempotent and side-effect free") {
  auto prob = testsupport::load_data("dr_counterexample.json");
  auto first = validate(prob.network, prob.scenarios);
  auto second = validate(prob.network, prob.scenarios);
  CHECK(first.size() == second.size());
  CHECK(prob.network.lines.size() == 1);
}

TEST_CASE("flow follows susceptance times the angle difference") {
  Network net = two_bus_network();
  VectorXd theta(2);
  theta << 0.0, 2.0;
  // two units arrive at bus 0 when its angle trails bus 1
  CHECK(flow(net, theta, 0, 1) == doctest::Approx(-2.0));
  CHECK(flow(net, theta, 1, 0) == doctest::Approx(2.0));

  theta << 0.7, 0.7;
  CHECK(flow(net, theta, 0, 1) == doctest::Approx(0.0));

  net.lines[0].susceptance = 3.0;
  theta << 0.5, 0.0;
  CHECK(flow(net, theta, 0, 1) == doctest::Approx(1.5));
}

TEST_CASE("flow is antisymmetric and rejects absent lines") {
  Network net = two_bus_network();
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd theta(2);
    theta << rng.uniform(-3, 3), rng.uniform(-3, 3);
    CHECK(flow(net, theta, 0, 1) == doctest::Approx(-flow(net, theta, 1, 0)));
  }
  net.n_buses = 3;
  VectorXd theta = VectorXd::Zero(3);
  CHECK_THROWS_AS(flow(net, theta, 0, 2), std::invalid_argument);
}

TEST_CASE("nodal imbalance vanishes at the known two-bus optimum") {
  Network net = two_bus_network();
  Allocation a;
  a.yG1.resize(2);
  a.yG1 << 3.0, 2.0;
  a.yL1.resize(2);
  a.yL1 << 5.0, 0.0;
  a.theta1.resize(2);
  a.theta1 << 0.0, 2.0;
  VectorXd r = nodal_imbalance(net, a, Stage::DayAhead);
  CHECK(r.cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("nodal imbalance of the zero allocation is zero") {
  Network net = two_bus_network();
  Allocation a;
  a.yG1 = VectorXd::Zero(2);
  a.yL1 = VectorXd::Zero(2);
  a.theta1 = VectorXd::Zero(2);
  CHECK(nodal_imbalance(net, a, Stage::DayAhead).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("an unmatched injection shows up at its bus") {
  Network net = two_bus_network();
  Allocation a;
  a.yG1.resize(2);
  a.yG1 << 1.0, 0.0;
  a.yL1 = VectorXd::Zero(2);
  a.theta1 = VectorXd::Zero(2);
  VectorXd r = nodal_imbalance(net, a, Stage::DayAhead);
  CHECK(r[0] == doctest::Approx(1.0));
  CHECK(r[1] == doctest::Approx(0.0));
}

TEST_CASE("nodal imbalance rejects mismatched dimensions") {
  Network net = two_bus_network();
  Allocation a;
  a.yG1 = VectorXd::Zero(1);
  a.yL1 = VectorXd::Zero(2);
  a.theta1 = VectorXd::Zero(2);
  CHECK_THROWS_AS(nodal_imbalance(net, a, Stage::DayAhead), std::invalid_argument);
}

TEST_CASE("line flows cancel in the network total for any angles") {
  auto prob = testsupport::make_instance(21);
  const Network& net = prob.network;
  Rng rng(3);
  for (int trial = 0; trial < 25; ++trial) {
    Allocation a;
    a.yG1 = VectorXd::Zero(static_cast<int>(net.generators.size()));
    a.yL1 = VectorXd::Zero(static_cast<int>(net.lses.size()));
    a.theta1.resize(net.n_buses);
    for (int i = 0; i < net.n_buses; ++i) a.theta1[i] = rng.uniform(-2, 2);
    // with no injections the residual is exactly the negated flow sum
    VectorXd r = nodal_imbalance(net, a, Stage::DayAhead);
    CHECK(std::abs(r.sum()) <= 1e-9);
  }
}
