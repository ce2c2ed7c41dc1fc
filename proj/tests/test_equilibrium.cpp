#include <doctest.h>

#include <cmath>

#include "instances.hpp"
#include "tsmarket/equilibrium.hpp"

using namespace tsmarket;

TEST_CASE("constructed equilibrium carries the published prices and verifies") {
  auto prob = testsupport::load_data("dr_counterexample.json");
  SceqPoint eq = construct_sceq(prob.network, prob.scenarios);
  CHECK(eq.prices.p1[0] == doctest::Approx(520.0).epsilon(1e-6));
  CHECK(eq.prices.p1[1] == doctest::Approx(180.0).epsilon(1e-6));
  SceqCertificate cert =
      verify_sceq(prob.network, prob.scenarios, eq.allocation, eq.prices);
  CHECK(cert.pass);
  CHECK(cert.max_gap <= 1e-6);
  CHECK(cert.max_clearing <= 1e-7);
}

TEST_CASE("zero-demand equilibrium verifies with zero gaps") {
  auto prob = testsupport::load_data("zero_demand.json");
  SceqPoint eq = construct_sceq(prob.network, prob.scenarios);
  SceqCertificate cert =
      verify_sceq(prob.network, prob.scenarios, eq.allocation, eq.prices);
  CHECK(cert.pass);
  CHECK(cert.max_gap <= 1e-8);
}

TEST_CASE("two-scenario equilibrium verifies") {
  auto prob = testsupport::load_data("single_bus_two_scenarios.json");
  SceqPoint eq = construct_sceq(prob.network, prob.scenarios);
  SceqCertificate cert =
      verify_sceq(prob.network, prob.scenarios, eq.allocation, eq.prices);
  CHECK(cert.pass);
}

TEST_CASE("an inflated day-ahead price falsifies the certificate") {
  auto prob = testsupport::load_data("dr_counterexample.json");
  SceqPoint eq = construct_sceq(prob.network, prob.scenarios);
  SUBCASE("ten units off") {
    eq.prices.p1[0] += 10.0;
    SceqCertificate cert =
        verify_sceq(prob.network, prob.scenarios, eq.allocation, eq.prices);
    CHECK_FALSE(cert.pass);
    CHECK(cert.max_gap > 1e-3);
  }
  SUBCASE("one unit off still has falsification power") {
    eq.prices.p1[0] += 1.0;
    SceqCertificate cert =
        verify_sceq(prob.network, prob.scenarios, eq.allocation, eq.prices);
    CHECK_FALSE(cert.pass);
  }
}

TEST_CASE("a one-unit clearing violation is reported as a residual") {
  auto prob = testsupport::load_data("dr_counterexample.json");
  SceqPoint eq = construct_sceq(prob.network, prob.scenarios);
  eq.allocation.yG1[0] += 1.0;
  SceqCertificate cert =
      verify_sceq(prob.network, prob.scenarios, eq.allocation, eq.prices);
  CHECK_FALSE(cert.pass);
  CHECK(cert.stage1_clearing == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("operator surplus is optimal at the equilibrium point") {
  auto prob = testsupport::load_data("dr_counterexample.json");
  SceqPoint eq = construct_sceq(prob.network, prob.scenarios);
  IsoSurplus s = iso_surplus(prob.network, prob.scenarios, eq.prices, eq.allocation);
  // a congested two-unit line between a 520 and a 180 bus earns 680
  CHECK(s.at_allocation == doctest::Approx(680.0).epsilon(1e-6));
  CHECK(std::abs(s.gap) <= 1e-5);
}

TEST_CASE("uniform prices earn no surplus anywhere") {
  auto prob = testsupport::load_data("dr_counterexample.json");
  SceqPoint eq = construct_sceq(prob.network, prob.scenarios);
  PriceSystem uniform;
  uniform.p1 = VectorXd::Constant(2, 100.0);
  IsoSurplus s = iso_surplus(prob.network, prob.scenarios, uniform, eq.allocation);
  CHECK(std::abs(s.at_allocation) <= 1e-9);
  CHECK(std::abs(s.optimal) <= 1e-6);
}

TEST_CASE("welfare theorems hold on the bundled instances") {
  for (const char* name : {"dr_counterexample.json", "single_bus_two_scenarios.json",
                           "zero_demand.json"}) {
    auto prob = testsupport::load_data(name);
    WelfareReport rep = check_welfare_theorems(prob.network, prob.scenarios);
    CHECK(rep.first_ok);
    CHECK(rep.second_ok);
    CHECK(rep.welfare_gap <= 1e-6 * (1.0 + std::abs(rep.planner_welfare)));
    CHECK(rep.iso_gap <= 1e-5);
  }
}

TEST_CASE("verification only depends on flows, not the angle gauge") {
  auto prob = testsupport::load_data("dr_counterexample.json");
  SceqPoint eq = construct_sceq(prob.network, prob.scenarios);
  SceqCertificate before =
      verify_sceq(prob.network, prob.scenarios, eq.allocation, eq.prices);
  Allocation shifted = eq.allocation;
  shifted.theta1.array() += 3.5;
  shifted.theta1.array() -= shifted.theta1[prob.network.reference_bus];
  SceqCertificate after =
      verify_sceq(prob.network, prob.scenarios, shifted, eq.prices);
  CHECK(before.pass == after.pass);
  CHECK(before.max_gap == doctest::Approx(after.max_gap).epsilon(1e-12));
}

TEST_CASE("random instances construct and verify") {
  for (unsigned long seed : {501UL, 502UL, 503UL, 504UL, 505UL}) {
    auto prob = testsupport::make_instance(seed);
    SceqPoint eq = construct_sceq(prob.network, prob.scenarios);
    SceqCertificate cert =
        verify_sceq(prob.network, prob.scenarios, eq.allocation, eq.prices);
    CHECK(cert.pass);
    CHECK(cert.max_gap <= 1e-5);
    CHECK(cert.max_clearing <= 1e-7);
    WelfareReport rep = check_welfare_theorems(prob.network, prob.scenarios);
    CHECK(rep.pass);
  }
}
