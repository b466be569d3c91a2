#include "rbsde/instances.hpp"

#include <algorithm>

namespace rbsde::instances {

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

std::shared_ptr<const Tree> random_tree(Rng& rng, int steps, std::size_t marks) {
  const double horizon = uniform(rng, 0.5, 2.0);
  const double dt = horizon / steps;
  MarkSet set;
  for (std::size_t j = 0; j < marks; ++j)
    set.marks.push_back({{uniform(rng, -1.0, 1.0)}, uniform(rng, 0.05, 0.3) / dt});
  return std::make_shared<const Tree>(TimeGrid::make(horizon, steps), set);
}

AdaptedValues random_values(Rng& rng, const Tree& tree, int first, int last, double lo, double hi) {
  AdaptedValues out(tree, first, last);
  for (std::size_t n = tree.layer_begin(first); n < tree.layer_end(last); ++n) out[n] = uniform(rng, lo, hi);
  return out;
}

std::vector<int> random_flags(Rng& rng, const Tree& tree, std::size_t budget) {
  std::size_t used = tree.layer_begin(tree.steps());  // non-terminal nodes
  std::vector<int> flags;
  for (int k = 1; k <= tree.steps(); ++k) {
    if (std::bernoulli_distribution(0.5)(rng) && used + tree.layer_size(k) <= budget) {
      flags.push_back(k);
      used += tree.layer_size(k);
    }
  }
  return flags;
}

namespace {

BarrierPair random_barriers(Rng& rng, const Tree& tree, const ProblemOptions& o) {
  BarrierPair bar;
  bar.lower = AdaptedValues(tree);
  bar.upper = AdaptedValues(tree);
  bar.flagged.assign(static_cast<std::size_t>(tree.steps()) + 1, false);
  for (int k : o.flagged) bar.flagged[static_cast<std::size_t>(k)] = true;
  for (std::size_t n = 0; n < tree.node_count(); ++n) {
    bar.lower[n] = uniform(rng, -1.0, 0.3);
    bar.upper[n] = o.separated ? bar.lower[n] + uniform(rng, 0.2, 1.5) : bar.lower[n];
  }
  bar.lower_left = bar.lower;
  bar.upper_left = bar.upper;
  for (int k : o.flagged)
    for (std::size_t n = tree.layer_begin(k); n < tree.layer_end(k); ++n) {
      bar.lower_left[n] = uniform(rng, -0.8, 0.5);
      bar.upper_left[n] = o.separated ? bar.lower_left[n] + uniform(rng, o.left_gap_lo, o.left_gap_hi)
                                      : bar.lower_left[n];
    }
  return bar;
}

}  // namespace

ProblemSpec random_problem(Rng& rng, std::shared_ptr<const Tree> tree, const ProblemOptions& o) {
  ProblemSpec p;
  p.tree = std::move(tree);
  const Tree& t = *p.tree;
  const double sigma = uniform(rng, 0.2, 1.0);
  const double gamma = uniform(rng, -0.5, 0.5);
  p.state = forward_state(
      t, [sigma](double, double) { return sigma; }, [gamma](double, std::span<const double>, double) { return gamma; },
      uniform(rng, -0.5, 0.5));
  p.barriers = random_barriers(rng, t, o);
  p.terminal = AdaptedValues(t, t.steps(), t.steps());
  for (std::size_t n = t.layer_begin(t.steps()); n < t.node_count(); ++n)
    p.terminal[n] = p.barriers.lower[n] + uniform(rng, 0.0, 1.0) * (p.barriers.upper[n] - p.barriers.lower[n]);

  GeneratorSpec& g = p.generator;
  g.form = o.form;
  g.level.terms["1"] = uniform(rng, -1.0, 1.0);
  g.level.terms["x"] = uniform(rng, -1.0, 1.0);
  g.level.terms["t"] = uniform(rng, -0.5, 0.5);
  if (o.form != GeneratorForm::ConstantInState) {
    g.b = uniform(rng, -1.0, 0.9);
    if (o.z_dependent) g.c = uniform(rng, -0.5, 0.5);
    if (o.form == GeneratorForm::LipschitzClip) g.clip = uniform(rng, 0.5, 2.0);
    // keep C_f dt <= 1/2 so the implicit step is well posed on coarse grids
    const double room = 0.5 / (std::max(std::abs(g.b), std::abs(g.c)) * t.dt());
    if (room < 1.0) {
      g.b *= room;
      g.c *= room;
    }
    g.lipschitz = std::max(std::abs(g.b), std::abs(g.c));
  }
  return p;
}

namespace {

GameSpec game_shell(Rng& rng, std::shared_ptr<const Tree> tree, const std::vector<int>& flagged) {
  GameSpec game;
  game.tree = std::move(tree);
  const Tree& t = *game.tree;
  const double sigma = uniform(rng, 0.8, 1.2);
  const double gamma = uniform(rng, -0.3, 0.3);
  game.sigma = [sigma](double, double) { return sigma; };
  game.gamma = [gamma](double, std::span<const double>, double) { return gamma; };
  game.x0 = uniform(rng, -0.5, 0.5);
  game.state = forward_state(t, game.sigma, game.gamma, game.x0);
  game.controls = {{-1.0, 1.0}, {-1.0, 1.0}};
  ProblemOptions o;
  o.flagged = flagged;
  game.barriers = random_barriers(rng, t, o);
  game.terminal = AdaptedValues(t, t.steps(), t.steps());
  for (std::size_t n = t.layer_begin(t.steps()); n < t.node_count(); ++n)
    game.terminal[n] =
        game.barriers.lower[n] + uniform(rng, 0.0, 1.0) * (game.barriers.upper[n] - game.barriers.lower[n]);
  return game;
}

}  // namespace

GameSpec separable_game(Rng& rng, std::shared_ptr<const Tree> tree, const std::vector<int>& flagged) {
  GameSpec game = game_shell(rng, std::move(tree), flagged);
  const double fu = uniform(rng, -0.25, 0.25), fv = uniform(rng, -0.25, 0.25);
  const double hu = uniform(rng, -1.0, 1.0), hv = uniform(rng, -1.0, 1.0), h0 = uniform(rng, -0.5, 0.5);
  const double hx = uniform(rng, -0.5, 0.5);
  const double bu = uniform(rng, -0.3, 0.3), bv = uniform(rng, -0.3, 0.3);
  game.drift = [fu, fv](const FormPoint& p) { return fu * p.u + fv * p.v; };
  game.running = [hu, hv, h0, hx](const FormPoint& p) { return h0 + hx * p.x + hu * p.u + hv * p.v; };
  game.tilt = [bu, bv](const FormPoint& p) { return bu * p.u + bv * p.v; };
  return game;
}

GameSpec pennies_game(Rng& rng, std::shared_ptr<const Tree> tree) {
  GameSpec game = game_shell(rng, std::move(tree), {});
  game.drift = [](const FormPoint&) { return 0.0; };
  game.tilt = [](const FormPoint&) { return 0.0; };
  game.running = [](const FormPoint& p) { return p.u_index == p.v_index ? 0.0 : 1.0; };
  return game;
}

}  // namespace rbsde::instances
