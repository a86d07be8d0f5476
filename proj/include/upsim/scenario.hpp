#pragma once

#include <string>

#include "upsim/simulator.hpp"

namespace upsim {

struct Scenario {
  std::string name;
  SimConfig config;
  // Declared outcome, checked by the CLI: "complete" or "incomplete".
  std::optional<std::string> expect;
};

// Parsing throws SchemaError for shape problems (missing or mistyped fields)
// and SemanticError for well-formed input that does not describe a runnable
// scenario (ids out of range, paths that leave the graph, scheme/update
// mismatches, and so on).
Scenario parse_scenario(const json& j);
Scenario load_scenario_file(const std::string& path);
json scenario_to_json(const Scenario& s);

// Ring of `l` nodes around destination 0 where the route flips direction:
// the distributed variant updates one flow along the ring, the central
// variant performs the same flip as a destination-tree update. Both need
// exactly l-2 dependent changes.
SimConfig fig1_chain(unsigned l, bool central);

}  // namespace upsim
