#include "rbsde/reflect.hpp"

#include <cmath>
#include <sstream>

#include "rbsde/error.hpp"

namespace rbsde {

namespace {

constexpr int kFixedPointBudget = 200;
constexpr double kFixedPointTol = 1e-12;

}  // namespace

DriftFn frozen_drift(const Tree& tree, const AdaptedValues& drift) {
  if (!drift.covers(0) || !drift.covers(tree.steps() - 1))
    throw Error(ErrorKind::LayerMismatch, "frozen drift must cover layers 0..N-1");
  const double dt = tree.dt();
  return [&drift, dt](std::size_t node, int, const Representation& rep) {
    const double g = drift[node];
    return DriftStep{rep.mean + dt * g, 1.0, g};
  };
}

DriftFn generator_drift(const Tree& tree, const AdaptedValues& state, const GeneratorSpec& generator) {
  const double dt = tree.dt();
  const Tree* t = &tree;
  return [t, &state, &generator, dt](std::size_t node, int layer, const Representation& rep) -> DriftStep {
    const double time = t->time(layer);
    const double x = state[node];
    switch (generator.form) {
      case GeneratorForm::ConstantInState: {
        const double g = evaluate_generator(generator, time, x, 0.0, 0.0, rep.v);
        return {rep.mean + dt * g, 1.0, g};
      }
      case GeneratorForm::Affine: {
        const double slope = 1.0 - generator.b * dt;
        if (!(slope > 0.0)) {
          std::ostringstream msg;
          msg << "b * dt = " << generator.b * dt << " >= 1 at layer " << layer << "; refine grid";
          throw Error(ErrorKind::ImplicitSolveDiverged, msg.str());
        }
        // f without its y-term, then solve y = a + dt (f0 + b y).
        const double f0 = evaluate_generator(generator, time, x, 0.0, rep.z, rep.v);
        const double y = (rep.mean + dt * f0) / slope;
        return {y, slope, f0 + generator.b * y};
      }
      case GeneratorForm::LipschitzClip: {
        double y = rep.mean;
        for (int it = 0; it < kFixedPointBudget; ++it) {
          const double next = rep.mean + dt * evaluate_generator(generator, time, x, y, rep.z, rep.v);
          const bool done = std::abs(next - y) <= kFixedPointTol * (1.0 + std::abs(next));
          y = next;
          if (done) return {y, 1.0, evaluate_generator(generator, time, x, y, rep.z, rep.v)};
        }
        std::ostringstream msg;
        msg << "fixed point did not settle at node '" << t->node_id(node) << "' (C_f * dt = "
            << generator.lipschitz * dt << "); refine grid";
        throw Error(ErrorKind::ImplicitSolveDiverged, msg.str());
      }
    }
    throw Error(ErrorKind::UnknownForm, "unregistered generator form");
  };
}

void require_separation(const Tree& tree, const BarrierPair& barriers) {
  for (int k = 0; k <= tree.steps(); ++k) {
    const bool flagged = barriers.is_flagged(k);
    for (std::size_t n = tree.layer_begin(k); n < tree.layer_end(k); ++n) {
      if (!(barriers.lower[n] < barriers.upper[n]))
        throw Error(ErrorKind::SeparationViolated, "L >= U at node '" + tree.node_id(n) + "'");
      if (flagged && !(barriers.lower_left[n] < barriers.upper_left[n]))
        throw Error(ErrorKind::SeparationViolated, "L_{t-} >= U_{t-} at node '" + tree.node_id(n) + "'");
    }
  }
}

void accumulate(const Tree& tree, PushProcess& k) {
  k.continuous = AdaptedValues(tree);
  k.jump = AdaptedValues(tree);
  k.jump[0] = k.jump_step[0];
  for (std::size_t n = 1; n < tree.node_count(); ++n) {
    const auto p = static_cast<std::size_t>(tree.parent(n));
    k.continuous[n] = k.continuous[p] + k.continuous_step[p];
    k.jump[n] = k.jump[p] + k.jump_step[n];
  }
}

SolutionQuintuple reflected_sweep(const SweepInputs& in, const Exec& exec) {
  const Tree& tree = *in.tree;
  const BarrierPair& bar = *in.barriers;
  const AdaptedValues& xi = *in.terminal;
  const int steps = tree.steps();
  if (!xi.covers(steps)) throw Error(ErrorKind::LayerMismatch, "terminal values must cover layer N");
  if (in.rule.lower == BarrierMode::Hard && in.rule.upper == BarrierMode::Hard) require_separation(tree, bar);

  const std::size_t m = tree.mark_count();
  const std::size_t b = tree.branching();
  SolutionQuintuple s;
  s.y = AdaptedValues(tree);
  s.y_left = AdaptedValues(tree);
  s.unclamped = AdaptedValues(tree);
  s.z = AdaptedValues(tree, 0, steps);
  s.v.assign(m, AdaptedValues(tree, 0, steps));
  s.drift = AdaptedValues(tree, 0, steps);
  for (PushProcess* k : {&s.k_plus, &s.k_minus}) {
    k->continuous_step = AdaptedValues(tree);
    k->jump_step = AdaptedValues(tree);
  }
  const BranchWeights base = BranchWeights::base(tree);
  const BranchWeights& weights = in.weights != nullptr ? *in.weights : base;

  // Left-limit reflection on a flagged layer. No drift acts at this instant.
  auto left_instant = [&](std::size_t n, int layer) {
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
  };

  parallel_for(exec, tree.layer_size(steps), [&](std::size_t i) {
    const std::size_t n = tree.layer_begin(steps) + i;
    s.y[n] = xi[n];
    s.unclamped[n] = xi[n];
    left_instant(n, steps);
  });

  for (int k = steps - 1; k >= 0; --k) {
    const std::size_t begin = tree.layer_begin(k);
    parallel_for(exec, tree.layer_size(k), [&](std::size_t i) {
      const std::size_t n = begin + i;
      const std::size_t c0 = tree.first_child(n);
      const std::span<const double> children(s.y_left.values().data() + c0, b);
      Representation rep = represent_increment(tree, children);
      if (!weights.is_base()) rep.mean = expect_children(weights.at(n), children);
      const DriftStep step = in.drift(n, k, rep);
      s.z[n] = rep.z;
      for (std::size_t j = 0; j < m; ++j) s.v[j][n] = rep.v[j];
      s.drift[n] = step.rate;
      s.unclamped[n] = step.value;
      const InstantOutcome o = reflect_instant(step.value, bar.lower[n], bar.upper[n], in.rule, step.slope);
      if (o.push_up > 0.0 && o.push_down > 0.0)
        throw Error(ErrorKind::SeparationViolated, "both pushes act at node '" + tree.node_id(n) + "'");
      s.y[n] = o.value;
      s.k_plus.continuous_step[n] = o.push_up;
      s.k_minus.continuous_step[n] = o.push_down;
      left_instant(n, k);
    });
  }
  accumulate(tree, s.k_plus);
  accumulate(tree, s.k_minus);
  return s;
}

OneBarrierSolution as_one_barrier(SolutionQuintuple&& s, Side side) {
  OneBarrierSolution out;
  out.side = side;
  out.y = std::move(s.y);
  out.y_left = std::move(s.y_left);
  out.unclamped = std::move(s.unclamped);
  out.z = std::move(s.z);
  out.v = std::move(s.v);
  out.drift = std::move(s.drift);
  out.k = side == Side::Upper ? std::move(s.k_minus) : std::move(s.k_plus);
  return out;
}

}  // namespace rbsde
