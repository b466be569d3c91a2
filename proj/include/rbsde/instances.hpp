#pragma once

// Seeded random instances for the acceptance suite, tests and benchmarks.

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "rbsde/game.hpp"
#include "rbsde/model.hpp"

namespace rbsde::instances {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi);

/// Horizon in [0.5, 2], each lambda_j dt in [0.05, 0.3].
std::shared_ptr<const Tree> random_tree(Rng& rng, int steps, std::size_t marks);

/// Uniform values on layers [first, last].
AdaptedValues random_values(Rng& rng, const Tree& tree, int first, int last, double lo, double hi);

struct ProblemOptions {
  bool separated = true;                  // L < U strictly, also at left limits
  std::vector<int> flagged;               // layers carrying predictable jumps (>= 1)
  GeneratorForm form = GeneratorForm::ConstantInState;
  bool z_dependent = false;               // affine only: c != 0
  double left_gap_lo = 0.2;               // width of [L_{t-}, U_{t-}]
  double left_gap_hi = 1.2;
};

/// Random state (sigma, gamma constant), barriers, terminal between the
/// barriers, and a generator level a(t, x) = a0 + a1 x + a2 t.
ProblemSpec random_problem(Rng& rng, std::shared_ptr<const Tree> tree, const ProblemOptions& options);

/// Random subset of layers 1..N whose pre-jump instants keep the number of
/// decision instants at or below `budget`.
std::vector<int> random_flags(Rng& rng, const Tree& tree, std::size_t budget);

/// Game whose Hamiltonian separates as A(u) + B(v), so the grid Isaacs gap is
/// zero up to rounding. |A| = |B| = 2, sigma constant.
GameSpec separable_game(Rng& rng, std::shared_ptr<const Tree> tree, const std::vector<int>& flagged);

/// Running payoff h(u, v) = [[0, 1], [1, 0]] (matching pennies): positive gap.
GameSpec pennies_game(Rng& rng, std::shared_ptr<const Tree> tree);

}  // namespace rbsde::instances
