#include <doctest.h>

#include "rbsde/drbsde.hpp"
#include "rbsde/game.hpp"
#include "rbsde/instances.hpp"
#include "rbsde/reference.hpp"

using namespace rbsde;

namespace {

void require_same(const Tree& t, const SolutionQuintuple& a, const SolutionQuintuple& b) {
  std::size_t mismatches = 0;
  for (std::size_t n = 0; n < t.node_count(); ++n) {
    mismatches += a.y[n] != b.y[n];
    mismatches += a.y_left[n] != b.y_left[n];
    mismatches += a.k_plus.continuous[n] != b.k_plus.continuous[n] || a.k_plus.jump[n] != b.k_plus.jump[n];
    mismatches += a.k_minus.continuous[n] != b.k_minus.continuous[n] || a.k_minus.jump[n] != b.k_minus.jump[n];
    if (t.is_terminal(n)) continue;
    mismatches += a.z[n] != b.z[n];
    for (std::size_t j = 0; j < a.v.size(); ++j) mismatches += a.v[j][n] != b.v[j][n];
  }
  CHECK(mismatches == 0);
}

}  // namespace

TEST_SUITE("reference") {
  TEST_CASE("reflected sweep under tilted weights") {
    instances::Rng rng(60);
    for (int i = 0; i < 6; ++i) {
      auto t = instances::random_tree(rng, 4 + i % 2, static_cast<std::size_t>(1 + i % 2));
      const GameSpec g = instances::separable_game(rng, t, i % 2 ? std::vector<int>{2} : std::vector<int>{});
      const std::size_t inner = t->layer_begin(t->steps());
      ControlMap u(inner), v(inner);
      for (auto& x : u) x = std::uniform_int_distribution<std::size_t>(0, 1)(rng);
      for (auto& x : v) x = std::uniform_int_distribution<std::size_t>(0, 1)(rng);
      const ControlledMeasure m = controlled_measure(g, u, v);
      SweepInputs in;
      in.tree = t.get();
      in.barriers = &g.barriers;
      in.terminal = &g.terminal;
      in.weights = &m.weights;
      in.drift = frozen_drift(*t, m.running);
      require_same(*t, reflected_sweep(in, Exec{4}), reference::reflected_sweep(in));
    }
  }

  TEST_CASE("reflected sweep with implicit generators and jumps") {
    instances::Rng rng(61);
    for (int i = 0; i < 9; ++i) {
      auto t = instances::random_tree(rng, 5, static_cast<std::size_t>(i % 3));
      instances::ProblemOptions o;
      o.flagged = instances::random_flags(rng, *t, 1000);
      o.form = static_cast<GeneratorForm>(i % 3);
      o.z_dependent = o.form == GeneratorForm::Affine;
      const ProblemSpec p = instances::random_problem(rng, t, o);
      SweepInputs in;
      in.tree = t.get();
      in.barriers = &p.barriers;
      in.terminal = &p.terminal;
      in.drift = generator_drift(*t, p.state, p.generator);
      require_same(*t, reflected_sweep(in, Exec{3}), reference::reflected_sweep(in));
    }
  }

  TEST_CASE("snell envelope") {
    instances::Rng rng(62);
    for (int i = 0; i < 6; ++i) {
      auto t = instances::random_tree(rng, 6, static_cast<std::size_t>(i % 2));
      const AdaptedValues q = instances::random_values(rng, *t, 0, t->steps(), -1.0, 1.0);
      const AdaptedValues d = instances::random_values(rng, *t, 0, t->steps() - 1, -1.0, 1.0);
      const AdaptedValues a = snell_envelope(*t, q, d, Exec{4}), b = reference::snell_envelope(*t, q, d);
      for (std::size_t n = 0; n < t->node_count(); ++n) CHECK(a[n] == b[n]);
    }
  }
}
