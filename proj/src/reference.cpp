#include "rbsde/reference.hpp"

#include <algorithm>

#include "rbsde/error.hpp"

namespace rbsde::reference {

namespace {

struct Recursion {
  const SweepInputs& in;
  const Tree& tree;
  const BranchWeights& weights;
  SolutionQuintuple& s;

  void left_instant(std::size_t n, int layer) {
    const BarrierPair& bar = *in.barriers;
    if (!bar.is_flagged(layer)) {
      s.y_left[n] = s.y[n];
      return;
    }
    const InstantOutcome o = reflect_instant(s.y[n], bar.lower_left[n], bar.upper_left[n], in.rule, 1.0);
    if (o.push_up > 0.0 && o.push_down > 0.0)
      throw Error(ErrorKind::SeparationViolated, "both pushes act at node '" + tree.node_id(n) + "'");
    s.y_left[n] = o.value;
    s.k_plus.jump_step[n] = o.push_up;
    s.k_minus.jump_step[n] = o.push_down;
  }

  void visit(std::size_t n) {
    const int k = tree.layer_of(n);
    if (tree.is_terminal(n)) {
      s.y[n] = (*in.terminal)[n];
      s.unclamped[n] = s.y[n];
      left_instant(n, k);
      return;
    }
    const std::size_t b = tree.branching();
    const std::size_t c0 = tree.first_child(n);
    for (std::size_t c = 0; c < b; ++c) visit(c0 + c);
    const std::span<const double> children(s.y_left.values().data() + c0, b);
    Representation rep = represent_increment(tree, children);
    if (!weights.is_base()) rep.mean = expect_children(weights.at(n), children);
    const DriftStep step = in.drift(n, k, rep);
    s.z[n] = rep.z;
    for (std::size_t j = 0; j < tree.mark_count(); ++j) s.v[j][n] = rep.v[j];
    s.drift[n] = step.rate;
    s.unclamped[n] = step.value;
    const BarrierPair& bar = *in.barriers;
    const InstantOutcome o = reflect_instant(step.value, bar.lower[n], bar.upper[n], in.rule, step.slope);
    if (o.push_up > 0.0 && o.push_down > 0.0)
      throw Error(ErrorKind::SeparationViolated, "both pushes act at node '" + tree.node_id(n) + "'");
    s.y[n] = o.value;
    s.k_plus.continuous_step[n] = o.push_up;
    s.k_minus.continuous_step[n] = o.push_down;
    left_instant(n, k);
  }
};

}  // namespace

SolutionQuintuple reflected_sweep(const SweepInputs& in) {
  const Tree& tree = *in.tree;
  const int steps = tree.steps();
  if (!in.terminal->covers(steps)) throw Error(ErrorKind::LayerMismatch, "terminal values must cover layer N");
  if (in.rule.lower == BarrierMode::Hard && in.rule.upper == BarrierMode::Hard) require_separation(tree, *in.barriers);
  SolutionQuintuple s;
  s.y = AdaptedValues(tree);
  s.y_left = AdaptedValues(tree);
  s.unclamped = AdaptedValues(tree);
  s.z = AdaptedValues(tree, 0, steps);
  s.v.assign(tree.mark_count(), AdaptedValues(tree, 0, steps));
  s.drift = AdaptedValues(tree, 0, steps);
  for (PushProcess* k : {&s.k_plus, &s.k_minus}) {
    k->continuous_step = AdaptedValues(tree);
    k->jump_step = AdaptedValues(tree);
  }
  const BranchWeights base = BranchWeights::base(tree);
  Recursion r{in, tree, in.weights != nullptr ? *in.weights : base, s};
  r.visit(0);
  accumulate(tree, s.k_plus);
  accumulate(tree, s.k_minus);
  return s;
}

AdaptedValues snell_envelope(const Tree& tree, const AdaptedValues& payoff, const AdaptedValues& drift) {
  AdaptedValues y(tree);
  const auto weights = tree.base_weights();
  const std::size_t b = tree.branching();
  const double dt = tree.dt();
  auto visit = [&](auto&& self, std::size_t n) -> void {
    if (tree.is_terminal(n)) {
      y[n] = payoff[n];
      return;
    }
    const std::size_t c0 = tree.first_child(n);
    for (std::size_t c = 0; c < b; ++c) self(self, c0 + c);
    const std::span<const double> children(y.values().data() + c0, b);
    y[n] = std::max(payoff[n], expect_children(weights, children) + drift[n] * dt);
  };
  visit(visit, 0);
  return y;
}

}  // namespace rbsde::reference
