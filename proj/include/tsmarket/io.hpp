// JSON problem files and report serialization.
#pragma once

#include <json.hpp>

#include "tsmarket/dispatch.hpp"
#include "tsmarket/equilibrium.hpp"
#include "tsmarket/game.hpp"
#include "tsmarket/model.hpp"

namespace tsmarket {

using nlohmann::json;

struct Problem {
  Network network;
  ScenarioSet scenarios;
};

// Problem file schema:
//   { "buses": N, "reference_bus": 0,
//     "lines": [{"i":0,"j":1,"b":1.0,"fmax":2.0}],
//     "generators": [{"bus":0,"c1":{"a":80,"b":40},"c2":{"a":1,"b":1}}],
//     "lses": [{"bus":0,"demand":30,"dr":{"a":10,"b":20},
//               "bo":{"a":1,"b":5000},"wcap":1.0}],
//     "scenarios": [{"w":[0.0,0.0],"p":1.0}],
//     "stage2": "enabled" | "disabled" }        (optional, default enabled)
// Throws std::runtime_error with a location message on malformed input.
Problem parse_problem(const json& j);
Problem load_problem(const std::string& path);

json problem_to_json(const Problem& prob);

json allocation_to_json(const Allocation& a);
Allocation allocation_from_json(const json& j);

json prices_to_json(const PriceSystem& p);
PriceSystem prices_from_json(const json& j);

json planner_to_json(const PlannerSolution& p);

json certificate_to_json(const SceqCertificate& cert);

json bids_to_json(const BidProfile& b);
BidProfile bids_from_json(const json& j, const Network& net, int scenarios);

json clearing_to_json(const ClearingOutcome& o);
json dr_outcome_to_json(const DrBidOutcome& o);
json deviation_to_json(const DeviationResult& d);

// Debug dump of an assembled standard-form program.
json program_to_json(const StandardProgram& p);

}  // namespace tsmarket
