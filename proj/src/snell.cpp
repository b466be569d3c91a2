#include "rbsde/snell.hpp"

#include <algorithm>

#include "rbsde/error.hpp"

namespace rbsde {

StoppingRule StoppingRule::at_horizon(const Tree& tree) {
  StoppingRule rule;
  rule.stop.assign(tree.node_count(), false);
  for (std::size_t n = tree.layer_begin(tree.steps()); n < tree.node_count(); ++n) rule.stop[n] = true;
  return rule;
}

std::size_t StoppingRule::stopping_node(const Tree& tree, std::size_t leaf) const {
  for (std::size_t n : tree.path_to(leaf)) {
    if (!stop_left.empty() && stop_left[n]) return n;
    if (stop[n] || tree.is_terminal(n)) return n;
  }
  return leaf;
}

AdaptedValues snell_envelope(const Tree& tree, const AdaptedValues& payoff, const AdaptedValues& drift,
                             const Exec& exec) {
  const int steps = tree.steps();
  if (!payoff.covers(0) || !payoff.covers(steps))
    throw Error(ErrorKind::LayerMismatch, "payoff must cover layers 0..N");
  if (!drift.covers(0) || !drift.covers(steps - 1))
    throw Error(ErrorKind::LayerMismatch, "drift must cover layers 0..N-1");
  const auto weights = tree.base_weights();
  const std::size_t b = tree.branching();
  const double dt = tree.dt();
  AdaptedValues y(tree);
  for (std::size_t n = tree.layer_begin(steps); n < tree.layer_end(steps); ++n) y[n] = payoff[n];
  for (int k = steps - 1; k >= 0; --k) {
    const std::size_t begin = tree.layer_begin(k);
    parallel_for(exec, tree.layer_size(k), [&](std::size_t i) {
      const std::size_t n = begin + i;
      const std::span<const double> children(y.values().data() + tree.first_child(n), b);
      y[n] = std::max(payoff[n], expect_children(weights, children) + drift[n] * dt);
    });
  }
  return y;
}

OneBarrierSolution solve_one_barrier(const ProblemSpec& problem, Side side, const Exec& exec) {
  if (!problem.tree) throw Error(ErrorKind::InvalidArgument, "problem has no tree");
  const Tree& tree = *problem.tree;
  SweepInputs in;
  in.tree = &tree;
  in.barriers = &problem.barriers;
  in.terminal = &problem.terminal;
  in.rule.lower = side == Side::Lower ? BarrierMode::Hard : BarrierMode::Off;
  in.rule.upper = side == Side::Upper ? BarrierMode::Hard : BarrierMode::Off;
  in.drift = generator_drift(tree, problem.state, problem.generator);
  return as_one_barrier(reflected_sweep(in, exec), side);
}

}  // namespace rbsde
