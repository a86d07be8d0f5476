#pragma once

#include <vector>

#include "upsim/protocols.hpp"
#include "upsim/simulator.hpp"

namespace upsim {

// Longest chain of applications linked by their enabling dependency. An
// application with no recorded enabler counts as a chain of length one.
// This is the number of rounds the update would need if every applicable
// label were applied simultaneously in each round.
unsigned sequential_rounds(const std::vector<Application>& apps);

// Least-squares polynomial fit, lowest degree coefficient first.
struct FitResult {
  std::vector<double> coeffs;
  double r2 = 0.0;
};

FitResult polyfit(const std::vector<double>& x, const std::vector<double>& y,
                  int degree);

// Time from the first controller send (always 0) to the last application.
struct CompletionDelay {
  SimTime delay = 0;
  bool incomplete = false;
};

CompletionDelay completion_delay(const RunResult& r);

// One ring-update instance per length, run once under the one-command-at-a-
// time controller and once under the distance-gated scheme.
struct SpeedupRow {
  unsigned length = 0;
  SimTime delay_central = 0;
  SimTime delay_dist = 0;
  double ratio = 0.0;
};

std::vector<SpeedupRow> speedup_curve(const std::vector<unsigned>& lengths);

}  // namespace upsim
