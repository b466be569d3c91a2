#pragma once

// Serial depth-first versions of the backward sweeps. They visit nodes in a
// completely different order from the layer-parallel kernels but perform the
// same per-node arithmetic, so the results must agree bit for bit.

#include "rbsde/reflect.hpp"
#include "rbsde/snell.hpp"

namespace rbsde::reference {

SolutionQuintuple reflected_sweep(const SweepInputs& in);

AdaptedValues snell_envelope(const Tree& tree, const AdaptedValues& payoff, const AdaptedValues& drift);

}  // namespace rbsde::reference
