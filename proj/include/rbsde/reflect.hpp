#pragma once

// Backward sweep shared by every reflected solver. Per non-terminal node:
// represent the children's left-limit values as (a, Z, V), solve the drift
// step y = a + dt f, reflect y at the node's own instant (K^c), and on a
// flagged layer reflect once more against the left limits (K^d). The parent
// continues from the left-limit value.

#include <functional>
#include <vector>

#include "rbsde/lattice.hpp"
#include "rbsde/model.hpp"

namespace rbsde {

enum class Side { Upper, Lower };

/// Nondecreasing pushing process split into its grid-continuous part (acting
/// at unflagged instants) and its predictable-jump part (flagged layers).
struct PushProcess {
  AdaptedValues continuous_step;  // Delta K^c at the node; enters K at the children
  AdaptedValues jump_step;        // Delta K^d at the node; enters K at the node
  AdaptedValues continuous;       // K^c, cumulative, K_0 = 0
  AdaptedValues jump;             // K^d, cumulative

  double total(std::size_t node) const { return continuous[node] + jump[node]; }
};

struct SolutionQuintuple {
  AdaptedValues y;          // Y_t
  AdaptedValues y_left;     // Y_{t-}; equals y off flagged layers
  AdaptedValues unclamped;  // a + dt f before reflection
  AdaptedValues z;
  std::vector<AdaptedValues> v;  // one per mark
  AdaptedValues drift;           // generator value used at each node
  PushProcess k_plus;            // pushes up, keeps Y >= L
  PushProcess k_minus;           // pushes down, keeps Y <= U
};

struct OneBarrierSolution {
  Side side = Side::Upper;
  AdaptedValues y;
  AdaptedValues y_left;
  AdaptedValues unclamped;
  AdaptedValues z;
  std::vector<AdaptedValues> v;
  AdaptedValues drift;
  PushProcess k;
};

/// How each barrier acts at an instant.
enum class BarrierMode { Off, Hard, Penalized };

struct ReflectionRule {
  BarrierMode lower = BarrierMode::Hard;
  BarrierMode upper = BarrierMode::Hard;
  double penalty_weight = 0.0;  // n dt for the penalized side
};

struct InstantOutcome {
  double value = 0.0;
  double push_up = 0.0;    // K^+ increment
  double push_down = 0.0;  // K^- increment
};

/// Reflection at one instant. `slope` is 1 - b dt when the drift is affine in
/// y with coefficient b, else 1; it makes the penalized closed form exact.
/// Penalized values are written as L - slope (L - c) / (slope + w) so they
/// are monotone in c and w under round-to-nearest.
inline InstantOutcome reflect_instant(double c, double lower, double upper, const ReflectionRule& rule,
                                      double slope) {
  InstantOutcome out{c, 0.0, 0.0};
  if (rule.lower == BarrierMode::Penalized && out.value < lower)
    out.value = lower - slope * (lower - out.value) / (slope + rule.penalty_weight);
  if (rule.upper == BarrierMode::Penalized && out.value > upper)
    out.value = upper + slope * (out.value - upper) / (slope + rule.penalty_weight);
  if (rule.lower == BarrierMode::Hard && out.value < lower) {
    out.push_up = lower - out.value;
    out.value = lower;
  }
  if (rule.upper == BarrierMode::Hard && out.value > upper) {
    out.push_down = out.value - upper;
    out.value = upper;
  }
  return out;
}

struct DriftStep {
  double value = 0.0;  // y0 = a + dt f solved at the node, before reflection
  double slope = 1.0;
  double rate = 0.0;   // f used
};

/// Drift solve at one node given its representation (rep.mean is the
/// expectation under the sweep's weights).
using DriftFn = std::function<DriftStep(std::size_t node, int layer, const Representation& rep)>;

/// Frozen per-node drift: y0 = a + dt g.
DriftFn frozen_drift(const Tree& tree, const AdaptedValues& drift);
/// Implicit per-node solve of y = a + dt f(t, x, y, Z, V); closed form for
/// constant-in-state and affine, fixed point otherwise (tol 1e-12, 200 iterations).
DriftFn generator_drift(const Tree& tree, const AdaptedValues& state, const GeneratorSpec& generator);

struct SweepInputs {
  const Tree* tree = nullptr;
  const BarrierPair* barriers = nullptr;
  const AdaptedValues* terminal = nullptr;
  ReflectionRule rule;
  DriftFn drift;
  const BranchWeights* weights = nullptr;  // nullptr = base measure
};

/// Throws SeparationViolated when both barriers are hard and [H] fails.
SolutionQuintuple reflected_sweep(const SweepInputs& in, const Exec& exec = {});

/// Cumulative K^c, K^d from the per-node steps.
void accumulate(const Tree& tree, PushProcess& k);

OneBarrierSolution as_one_barrier(SolutionQuintuple&& s, Side side);

/// Checks L < U everywhere and L_{t-} < U_{t-} on flagged layers; throws
/// SeparationViolated naming the first failing node.
void require_separation(const Tree& tree, const BarrierPair& barriers);

}  // namespace rbsde
