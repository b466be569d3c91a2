#pragma once

// The eleven acceptance checks, each on freshly seeded random instances.
// Shared by `rbsde verify` and the acceptance test binary.

#include <string>
#include <vector>

#include "rbsde/config.hpp"
#include "rbsde/parallel.hpp"

namespace rbsde {

struct CriterionOutcome {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

std::vector<CriterionOutcome> run_acceptance(const VerifyConfig& config, const Exec& exec = {});

/// "[PASS] 3 penalization bracket: ..." per outcome.
std::string format_outcome(const CriterionOutcome& outcome);

}  // namespace rbsde
