#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "rbsde/error.hpp"
#include "rbsde/instances.hpp"
#include "rbsde/reference.hpp"
#include "rbsde/snell.hpp"

using namespace rbsde;

namespace {

std::shared_ptr<const Tree> tree_of(double T, int N, std::vector<double> rates = {}) {
  MarkSet marks;
  for (double r : rates) marks.marks.push_back({{0.5}, r});
  return std::make_shared<const Tree>(TimeGrid::make(T, N), marks);
}

ProblemSpec problem_on(std::shared_ptr<const Tree> t, double lo, double hi) {
  ProblemSpec p;
  p.tree = t;
  p.state = AdaptedValues(*t, 0.0);
  p.barriers = BarrierPair::plain(*t, AdaptedValues(*t, lo), AdaptedValues(*t, hi));
  p.terminal = AdaptedValues(*t, t->steps(), t->steps(), 0.0);
  return p;
}

// Hand-rolled recursion for the upper-reflected equation with f = 0 and
// flagged upper jumps: returns the value passed to the parent (the left limit)
// and records Y and both pushes per node.
struct Hand {
  const ProblemSpec& p;
  AdaptedValues y, dkc, dkd;
  explicit Hand(const ProblemSpec& problem)
      : p(problem), y(*problem.tree), dkc(*problem.tree), dkd(*problem.tree) {}
  double run(std::size_t n) {
    const Tree& t = *p.tree;
    double post;
    if (t.is_terminal(n)) {
      post = p.terminal[n];
    } else {
      double a = 0.0;
      for (std::size_t c = 0; c < t.branching(); ++c) a += t.base_weights()[c] * run(t.child(n, c));
      post = std::min(p.barriers.upper[n], a);
      dkc[n] = a - post;
    }
    y[n] = post;
    if (!p.barriers.is_flagged(t.layer_of(n))) return post;
    const double pre = std::min(post, p.barriers.upper_left[n]);
    dkd[n] = post - pre;
    return pre;
  }
};

}  // namespace

TEST_SUITE("snell") {
  TEST_CASE("snell_envelope examples") {
    const auto t = tree_of(1.0, 3, {0.3});
    const AdaptedValues c(*t, 0.75);
    const AdaptedValues zero(*t, 0, 2, 0.0);
    const AdaptedValues y = snell_envelope(*t, c, zero);
    for (std::size_t n = 0; n < t->node_count(); ++n) CHECK(y[n] == 0.75);

    const auto one = tree_of(1.0, 1);
    AdaptedValues q(*one, 0.0);
    q[one->child(0, kUp)] = 2.0;
    CHECK(snell_envelope(*one, q, AdaptedValues(*one, 0, 0, 0.0))[0] == 1.0);
  }

  TEST_CASE("snell_envelope equals enumerated optimal stopping") {
    instances::Rng rng(2024);
    for (int i = 0; i < 12; ++i) {
      auto t = instances::random_tree(rng, 1 + i % 3, static_cast<std::size_t>(i % 2));
      const AdaptedValues q = instances::random_values(rng, *t, 0, t->steps(), -1.0, 1.0);
      const AdaptedValues f = instances::random_values(rng, *t, 0, t->steps() - 1, -1.0, 1.0);
      const AdaptedValues y = snell_envelope(*t, q, f);
      const AdaptedValues o = optimal_stopping_oracle(*t, q, f, OptimizeMode::Sup);
      for (std::size_t n = 0; n < t->node_count(); ++n) CHECK(std::abs(y[n] - o[n]) <= 1e-10);
    }
  }

  TEST_CASE("snell domination and supermartingale step") {
    instances::Rng rng(8);
    auto t = instances::random_tree(rng, 4, 1);
    const AdaptedValues q = instances::random_values(rng, *t, 0, 4, -1.0, 1.0);
    const AdaptedValues f = instances::random_values(rng, *t, 0, 3, -1.0, 1.0);
    const AdaptedValues y = snell_envelope(*t, q, f);
    for (std::size_t n = 0; n < t->node_count(); ++n) {
      CHECK(y[n] >= q[n]);
      if (t->is_terminal(n)) continue;
      double e = 0.0;
      for (std::size_t c = 0; c < t->branching(); ++c) e += t->base_weights()[c] * y[t->child(n, c)];
      const double cont = e + f[n] * t->dt();
      CHECK(y[n] >= cont - 1e-12);
      // smallest: equals the payoff or the continuation
      CHECK((y[n] == q[n] || std::abs(y[n] - cont) <= 1e-12));
    }
  }

  TEST_CASE("oracle examples") {
    const auto t = tree_of(1.0, 2, {0.3});
    const AdaptedValues c(*t, -0.4);
    const AdaptedValues zero(*t, 0, 1, 0.0);
    for (OptimizeMode m : {OptimizeMode::Sup, OptimizeMode::Inf}) {
      const AdaptedValues o = optimal_stopping_oracle(*t, c, zero, m);
      for (std::size_t n = 0; n < t->node_count(); ++n) CHECK(o[n] == doctest::Approx(-0.4).epsilon(1e-15));
    }
    instances::Rng rng(1);
    const AdaptedValues q = instances::random_values(rng, *t, 0, 2, -1.0, 1.0);
    AdaptedValues neg(*t);
    for (std::size_t n = 0; n < t->node_count(); ++n) neg[n] = -q[n];
    const AdaptedValues sup = optimal_stopping_oracle(*t, q, zero, OptimizeMode::Sup);
    const AdaptedValues inf = optimal_stopping_oracle(*t, neg, zero, OptimizeMode::Inf);
    for (std::size_t n = 0; n < t->node_count(); ++n) CHECK(inf[n] == -sup[n]);

    const auto big = tree_of(1.0, 5, {0.2});
    CHECK_THROWS_AS(optimal_stopping_oracle(*big, AdaptedValues(*big), AdaptedValues(*big, 0, 4), OptimizeMode::Sup),
                    Error);
    try {
      optimal_stopping_oracle(*big, AdaptedValues(*big), AdaptedValues(*big, 0, 4), OptimizeMode::Sup);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::TooLargeToEnumerate);
    }
  }

  TEST_CASE("stopping rules") {
    const auto t = tree_of(1.0, 3);
    StoppingRule r = StoppingRule::at_horizon(*t);
    const std::size_t leaf = t->node_count() - 1;
    CHECK(r.stopping_node(*t, leaf) == leaf);
    const std::size_t mid = t->path_to(leaf)[1];
    r.stop[mid] = true;
    CHECK(r.stopping_node(*t, leaf) == mid);
    r.stop[0] = true;
    CHECK(r.stopping_node(*t, leaf) == 0);
  }

  TEST_CASE("solve_one_barrier examples") {
    // Barrier far away: plain conditional expectation and no push.
    const auto t = tree_of(1.0, 2, {0.4});
    ProblemSpec far = problem_on(t, -1e9, 1e9);
    instances::Rng rng(5);
    far.terminal = instances::random_values(rng, *t, 2, 2, -1.0, 1.0);
    const OneBarrierSolution s = solve_one_barrier(far, Side::Upper);
    AdaptedValues leaf(*t, 2, 2);
    for (std::size_t n = t->layer_begin(2); n < t->node_count(); ++n) leaf[n] = far.terminal[n];
    const BranchWeights base = BranchWeights::base(*t);
    const AdaptedValues e1 = conditional_expectation(*t, leaf, 1, base);
    const AdaptedValues e0 = conditional_expectation(*t, e1, 0, base);
    CHECK(std::abs(s.y[0] - e0[0]) <= 1e-15);
    for (std::size_t n = 0; n < t->node_count(); ++n) {
      CHECK(s.k.continuous_step[n] == 0.0);
      CHECK(s.k.jump_step[n] == 0.0);
    }

    // One step clamp: E[xi] = 1.5 against U = 1 before the horizon.
    const auto one = tree_of(1.0, 1);
    ProblemSpec clamp = problem_on(one, -10.0, 1.0);
    for (std::size_t n = one->layer_begin(1); n < one->node_count(); ++n) {
      clamp.barriers.upper[n] = 3.0;
      clamp.barriers.upper_left[n] = 3.0;
    }
    clamp.terminal[one->child(0, kUp)] = 2.5;
    clamp.terminal[one->child(0, kDown)] = 0.5;
    const OneBarrierSolution c = solve_one_barrier(clamp, Side::Upper);
    CHECK(c.y[0] == 1.0);
    CHECK(c.k.continuous_step[0] == 0.5);
    CHECK(c.k.jump_step[0] == 0.0);
    CHECK(c.k.continuous[one->child(0, kUp)] == 0.5);
    CHECK(c.k.continuous[0] == 0.0);

    const OneBarrierSolution lower = solve_one_barrier(clamp, Side::Lower);
    CHECK(lower.y[0] == 1.5);
  }

  TEST_CASE("flagged upper jump against hand recursion") {
    const auto t = tree_of(1.0, 2, {0.3});
    ProblemSpec p = problem_on(t, -5.0, 0.6);
    instances::Rng rng(17);
    for (std::size_t n = 0; n < t->node_count(); ++n) p.barriers.upper[n] = instances::uniform(rng, 0.2, 0.8);
    p.barriers.upper_left = p.barriers.upper;
    p.barriers.flagged[1] = true;
    for (std::size_t n = t->layer_begin(1); n < t->layer_end(1); ++n)
      p.barriers.upper_left[n] = p.barriers.upper[n] + instances::uniform(rng, -0.5, 0.3);
    for (std::size_t n = t->layer_begin(2); n < t->node_count(); ++n)
      p.terminal[n] = instances::uniform(rng, -1.0, p.barriers.upper[n]);

    Hand hand(p);
    hand.run(0);
    const OneBarrierSolution s = solve_one_barrier(p, Side::Upper);
    std::size_t positive = 0;
    for (std::size_t n = 0; n < t->node_count(); ++n) {
      CHECK(std::abs(s.y[n] - hand.y[n]) <= 1e-14);
      CHECK(std::abs(s.k.continuous_step[n] - hand.dkc[n]) <= 1e-14);
      CHECK(std::abs(s.k.jump_step[n] - hand.dkd[n]) <= 1e-14);
      if (t->layer_of(n) == 1) {
        const double jump = s.y[n] > p.barriers.upper_left[n] && p.barriers.upper[n] > p.barriers.upper_left[n]
                                ? s.y[n] - p.barriers.upper_left[n]
                                : 0.0;
        CHECK(s.k.jump_step[n] == jump);
        if (jump > 0.0) {
          ++positive;
          CHECK(s.y_left[n] == p.barriers.upper_left[n]);  // Y_{t-} binds U_{t-}
        }
      } else {
        CHECK(s.k.jump_step[n] == 0.0);
      }
    }
    CHECK(positive > 0);
  }

  TEST_CASE("upper-side value is the stopping infimum") {
    instances::Rng rng(99);
    for (int i = 0; i < 10; ++i) {
      auto t = instances::random_tree(rng, 1 + i % 3, static_cast<std::size_t>(i % 2));
      instances::ProblemOptions o;
      o.flagged = instances::random_flags(rng, *t, 20);
      const ProblemSpec p = instances::random_problem(rng, t, o);
      const OneBarrierSolution s = solve_one_barrier(p, Side::Upper);
      AdaptedValues payoff = p.barriers.upper;
      for (std::size_t n = t->layer_begin(t->steps()); n < t->node_count(); ++n) payoff[n] = p.terminal[n];
      const LeftPayoff left{&p.barriers.upper_left, &p.barriers.flagged};
      const AdaptedValues o_inf = optimal_stopping_oracle(*t, payoff, s.drift, OptimizeMode::Inf, left);
      CHECK(std::abs(s.y_left[0] - o_inf[0]) <= 1e-10);

      const OneBarrierSolution l = solve_one_barrier(p, Side::Lower);
      AdaptedValues low = p.barriers.lower;
      for (std::size_t n = t->layer_begin(t->steps()); n < t->node_count(); ++n) low[n] = p.terminal[n];
      const LeftPayoff lleft{&p.barriers.lower_left, &p.barriers.flagged};
      const AdaptedValues o_sup = optimal_stopping_oracle(*t, low, l.drift, OptimizeMode::Sup, lleft);
      CHECK(std::abs(l.y_left[0] - o_sup[0]) <= 1e-10);
    }
  }

  TEST_CASE("one-barrier invariants") {
    instances::Rng rng(4);
    for (int i = 0; i < 20; ++i) {
      auto t = instances::random_tree(rng, 2 + i % 3, static_cast<std::size_t>(i % 3 == 0 ? 2 : i % 2));
      instances::ProblemOptions o;
      o.flagged = instances::random_flags(rng, *t, 1000);
      o.form = static_cast<GeneratorForm>(i % 3);
      o.z_dependent = true;
      const ProblemSpec p = instances::random_problem(rng, t, o);
      for (Side side : {Side::Upper, Side::Lower}) {
        const OneBarrierSolution s = solve_one_barrier(p, side);
        const AdaptedValues& bar = side == Side::Upper ? p.barriers.upper : p.barriers.lower;
        for (std::size_t n = 0; n < t->node_count(); ++n) {
          if (side == Side::Upper)
            CHECK(s.y[n] <= bar[n]);
          else
            CHECK(s.y[n] >= bar[n]);
          CHECK(s.k.continuous_step[n] >= 0.0);
          CHECK(s.k.jump_step[n] >= 0.0);
          if (s.k.continuous_step[n] > 0.0) CHECK(s.y[n] == bar[n]);
          if (s.k.jump_step[n] > 0.0) CHECK(p.barriers.is_flagged(t->layer_of(n)));
          const auto parent = t->parent(n);
          const double prev = parent < 0 ? 0.0 : s.k.continuous[static_cast<std::size_t>(parent)];
          if (parent >= 0) CHECK(s.k.continuous[n] == prev + s.k.continuous_step[static_cast<std::size_t>(parent)]);
        }
        CHECK(s.k.continuous[0] == 0.0);
        CHECK(s.k.jump[0] == 0.0);
      }
    }
  }

  TEST_CASE("one-barrier comparison") {
    instances::Rng rng(21);
    for (int i = 0; i < 20; ++i) {
      auto t = instances::random_tree(rng, 3, static_cast<std::size_t>(i % 2));
      instances::ProblemOptions o;
      o.flagged = instances::random_flags(rng, *t, 1000);
      o.form = GeneratorForm::Affine;
      const ProblemSpec p = instances::random_problem(rng, t, o);
      ProblemSpec q = p;
      q.generator.level.terms["1"] += instances::uniform(rng, 0.0, 0.5);
      for (std::size_t n = t->layer_begin(3); n < t->node_count(); ++n)
        q.terminal[n] = std::min(q.barriers.upper[n], q.terminal[n] + instances::uniform(rng, 0.0, 0.3));
      const OneBarrierSolution a = solve_one_barrier(p, Side::Upper), b = solve_one_barrier(q, Side::Upper);
      for (std::size_t n = 0; n < t->node_count(); ++n) {
        CHECK(a.y[n] <= b.y[n]);
        CHECK(a.k.continuous_step[n] <= b.k.continuous_step[n]);  // larger data push harder against U
      }
    }
  }

  TEST_CASE("monotone payoffs give monotone envelopes") {
    instances::Rng rng(12);
    auto t = instances::random_tree(rng, 3, 1);
    const AdaptedValues q = instances::random_values(rng, *t, 0, 3, -1.0, 1.0);
    const AdaptedValues f = instances::random_values(rng, *t, 0, 2, -1.0, 1.0);
    AdaptedValues prev;
    for (int k = 0; k <= 8; ++k) {
      AdaptedValues qk = q;
      for (std::size_t n = 0; n < t->node_count(); ++n) qk[n] -= k == 8 ? 0.0 : std::ldexp(1.0, -k);
      const AdaptedValues y = snell_envelope(*t, qk, f);
      if (k > 0)
        for (std::size_t n = 0; n < t->node_count(); ++n) CHECK(y[n] >= prev[n]);
      prev = y;
    }
    const AdaptedValues limit = snell_envelope(*t, q, f);
    for (std::size_t n = 0; n < t->node_count(); ++n) CHECK(prev[n] == limit[n]);
  }

  TEST_CASE("serial reference envelope is bit-identical") {
    instances::Rng rng(3);
    auto t = instances::random_tree(rng, 6, 1);
    const AdaptedValues q = instances::random_values(rng, *t, 0, 6, -1.0, 1.0);
    const AdaptedValues f = instances::random_values(rng, *t, 0, 5, -1.0, 1.0);
    const AdaptedValues par = snell_envelope(*t, q, f, Exec{4});
    const AdaptedValues ser = reference::snell_envelope(*t, q, f);
    for (std::size_t n = 0; n < t->node_count(); ++n) CHECK(par[n] == ser[n]);
  }
}
