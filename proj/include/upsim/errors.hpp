#pragma once

#include <stdexcept>
#include <string>

namespace upsim {

// Base class for all input-validation failures. Simulation never throws on
// protocol behavior (malformed messages raise alarms instead); bad scenario
// input and violated preconditions do.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define UPSIM_ERROR(Name)                                          \
  struct Name : Error {                                            \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
  }

UPSIM_ERROR(UnknownNode);
UPSIM_ERROR(SelfLoop);
UPSIM_ERROR(DuplicateLink);
UPSIM_ERROR(DisconnectedGraph);
UPSIM_ERROR(UnknownLink);

UPSIM_ERROR(NonSimplePath);
UPSIM_ERROR(NonAdjacentHop);
UPSIM_ERROR(NotATree);
UPSIM_ERROR(InvalidRoute);

UPSIM_ERROR(ScenarioInvalid);
UPSIM_ERROR(SchemaError);
UPSIM_ERROR(SemanticError);
UPSIM_ERROR(ExplosionGuard);

#undef UPSIM_ERROR

}  // namespace upsim
