#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "rbsde/drbsde.hpp"
#include "rbsde/error.hpp"
#include "rbsde/instances.hpp"
#include "rbsde/reference.hpp"

using namespace rbsde;

namespace {

std::shared_ptr<const Tree> tree_of(double T, int N, std::vector<double> rates = {}) {
  MarkSet marks;
  for (double r : rates) marks.marks.push_back({{0.5}, r});
  return std::make_shared<const Tree>(TimeGrid::make(T, N), marks);
}

ProblemSpec flat(std::shared_ptr<const Tree> t, double lo, double hi) {
  ProblemSpec p;
  p.tree = t;
  p.state = AdaptedValues(*t, 0.0);
  p.barriers = BarrierPair::plain(*t, AdaptedValues(*t, lo), AdaptedValues(*t, hi));
  p.terminal = AdaptedValues(*t, t->steps(), t->steps(), 0.0);
  return p;
}

// One step, barriers [lo, hi] at the root and wide at the horizon, children
// of xi symmetric around `mean`.
ProblemSpec one_step(double lo, double hi, double mean) {
  auto t = tree_of(1.0, 1);
  ProblemSpec p = flat(t, lo, hi);
  for (std::size_t n = 1; n < 3; ++n) {
    p.barriers.lower[n] = p.barriers.lower_left[n] = -3.0;
    p.barriers.upper[n] = p.barriers.upper_left[n] = 3.0;
  }
  p.terminal[t->child(0, kUp)] = mean + 1.0;
  p.terminal[t->child(0, kDown)] = mean - 1.0;
  return p;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::InvalidArgument;
}

ProblemSpec random_h(instances::Rng& rng, int N, std::size_t m, GeneratorForm form, bool flags = true) {
  auto t = instances::random_tree(rng, N, m);
  instances::ProblemOptions o;
  if (flags) o.flagged = instances::random_flags(rng, *t, 1000);
  o.form = form;
  return instances::random_problem(rng, t, o);
}

}  // namespace

TEST_SUITE("drbsde") {
  TEST_CASE("penalization closed forms") {
    // a + dt g = 0, L = 1, n dt = 1, U = 10 -> y = 0.5
    ProblemSpec inc = one_step(1.0, 10.0, 0.0);
    const OneBarrierSolution a = penalize_increasing(inc, 1.0);
    CHECK(a.y[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(a.k.continuous_step[0] == 0.0);

    // a + dt g = 2, U = 1, n dt = 1, L = -10 -> y = 1.5
    ProblemSpec dec = one_step(-10.0, 1.0, 2.0);
    const OneBarrierSolution b = penalize_decreasing(dec, 1.0);
    CHECK(b.y[0] == doctest::Approx(1.5).epsilon(1e-15));
  }

  TEST_CASE("zero penalty is the one-barrier solution") {
    instances::Rng rng(31);
    const ProblemSpec p = random_h(rng, 3, 1, GeneratorForm::Affine);
    const OneBarrierSolution a = penalize_increasing(p, 0.0), ua = solve_one_barrier(p, Side::Upper);
    const OneBarrierSolution b = penalize_decreasing(p, 0.0), lb = solve_one_barrier(p, Side::Lower);
    for (std::size_t n = 0; n < p.tree->node_count(); ++n) {
      CHECK(std::abs(a.y[n] - ua.y[n]) <= 1e-14);
      CHECK(std::abs(b.y[n] - lb.y[n]) <= 1e-14);
    }
  }

  TEST_CASE("large penalty approaches the clamped solve") {
    instances::Rng rng(32);
    for (int i = 0; i < 5; ++i) {
      const ProblemSpec p = random_h(rng, 2 + i % 2, static_cast<std::size_t>(i % 2), GeneratorForm::ConstantInState);
      const SolutionQuintuple s = backward_clamped_solve(p);
      const OneBarrierSolution a = penalize_increasing(p, 1e6), b = penalize_decreasing(p, 1e6);
      for (std::size_t n = 0; n < p.tree->node_count(); ++n) {
        CHECK(std::abs(a.y[n] - s.y[n]) <= 1e-4);
        CHECK(std::abs(b.y[n] - s.y[n]) <= 1e-4);
        CHECK(a.y[n] <= b.y[n]);
      }
    }
  }

  TEST_CASE("penalization rejects nonlinear generators and bad schedules") {
    instances::Rng rng(33);
    const ProblemSpec clip = random_h(rng, 2, 0, GeneratorForm::LipschitzClip);
    CHECK(kind_of([&] { penalize_increasing(clip, 1.0); }) == ErrorKind::InvalidArgument);
    const ProblemSpec p = random_h(rng, 2, 0, GeneratorForm::Affine);
    CHECK(kind_of([&] { penalization_bracket(p, {1.0, 1.0}); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([&] { penalization_bracket(p, {4.0, 2.0}); }) == ErrorKind::InvalidArgument);
  }

  TEST_CASE("bracket examples") {
    // L never binds: one level, width reported as is.
    ProblemSpec loose = one_step(-10.0, 1.0, 1.5);
    const PenalizationTrace single = penalization_bracket(loose, {0.0});
    REQUIRE(single.levels.size() == 1);
    CHECK(single.levels[0].width == doctest::Approx(0.5).epsilon(1e-15));

    // Two steps with both barriers active: widths strictly decrease.
    auto t = tree_of(1.0, 2);
    ProblemSpec p = flat(t, -0.2, 0.3);
    for (std::size_t n = t->layer_begin(2); n < t->node_count(); ++n) {
      p.barriers.lower[n] = p.barriers.lower_left[n] = -2.0;
      p.barriers.upper[n] = p.barriers.upper_left[n] = 2.0;
    }
    const double xi[] = {1.5, 0.4, -0.1, -1.8};
    for (std::size_t i = 0; i < 4; ++i) p.terminal[t->layer_begin(2) + i] = xi[i];
    const PenalizationTrace tr = penalization_bracket(p, {1.0, 10.0, 100.0, 1000.0});
    REQUIRE(tr.levels.size() == 4);
    for (std::size_t i = 1; i < 4; ++i) CHECK(tr.levels[i].width < tr.levels[i - 1].width);

    // Coincident barriers: no [H], still monotone.
    ProblemSpec same = flat(t, 0.1, 0.1);
    for (std::size_t n = t->layer_begin(2); n < t->node_count(); ++n) same.terminal[n] = 0.1;
    CHECK_NOTHROW(penalization_bracket(same, {1.0, 10.0, 100.0}));
  }

  TEST_CASE("bracket is monotone, sandwiches and shrinks on random instances") {
    instances::Rng rng(34);
    for (int i = 0; i < 10; ++i) {
      const ProblemSpec p = random_h(rng, 2 + i % 3, static_cast<std::size_t>(i % 2),
                                     i % 2 ? GeneratorForm::Affine : GeneratorForm::ConstantInState);
      const PenalizationTrace tr = penalization_bracket(p, default_penalty_schedule());
      const SolutionQuintuple s = backward_clamped_solve(p);
      for (std::size_t k = 1; k < tr.levels.size(); ++k)
        for (std::size_t n = 0; n < p.tree->node_count(); ++n) {
          CHECK(tr.levels[k - 1].lower_scheme[n] <= tr.levels[k].lower_scheme[n]);
          CHECK(tr.levels[k].upper_scheme[n] <= tr.levels[k - 1].upper_scheme[n]);
        }
      // any lower scheme sits below any upper scheme
      for (const auto& a : tr.levels)
        for (const auto& b : tr.levels)
          for (std::size_t n = 0; n < p.tree->node_count(); n += 3) CHECK(a.lower_scheme[n] <= b.upper_scheme[n]);
      const auto& last = tr.levels.back();
      CHECK(last.width <= 1e-4);
      for (std::size_t n = 0; n < p.tree->node_count(); ++n) {
        CHECK(last.lower_scheme[n] <= s.y[n]);
        CHECK(s.y[n] <= last.upper_scheme[n]);
      }
    }
  }

  TEST_CASE("early stop") {
    instances::Rng rng(35);
    const ProblemSpec p = random_h(rng, 2, 0, GeneratorForm::ConstantInState, false);
    const PenalizationTrace tr = penalization_bracket(p, default_penalty_schedule(), 1e-3);
    CHECK(tr.stopped_early);
    CHECK(tr.final_width() < 1e-3);
    CHECK(tr.levels.size() < default_penalty_schedule().size());
  }

  TEST_CASE("clamped solve examples") {
    const SolutionQuintuple a = backward_clamped_solve(one_step(0.0, 1.0, 1.5));
    CHECK(a.y[0] == 1.0);
    CHECK(a.k_minus.continuous_step[0] == 0.5);
    for (std::size_t n = 0; n < 3; ++n) CHECK(a.k_plus.continuous[n] == 0.0);

    const SolutionQuintuple b = backward_clamped_solve(one_step(0.0, 1.0, -0.2));
    CHECK(b.y[0] == 0.0);
    CHECK(b.k_plus.continuous_step[0] == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(b.k_minus.continuous_step[0] == 0.0);

    CHECK(kind_of([] { backward_clamped_solve(one_step(0.5, 0.5, 0.0)); }) == ErrorKind::SeparationViolated);
  }

  TEST_CASE("clamped solve equals the Dynkin game value") {
    instances::Rng rng(36);
    for (int i = 0; i < 15; ++i) {
      auto t = instances::random_tree(rng, 1 + i % 3, static_cast<std::size_t>(i % 2));
      instances::ProblemOptions o;
      o.flagged = instances::random_flags(rng, *t, 11);
      const ProblemSpec p = instances::random_problem(rng, t, o);
      const AdaptedValues g = instances::random_values(rng, *t, 0, t->steps() - 1, -1.0, 1.0);
      const SolutionQuintuple s = backward_clamped_solve(p, g);
      DynkinPayoffs pay{&p.barriers.lower,   &p.barriers.upper,  &p.barriers.lower_left, &p.barriers.upper_left,
                        &p.barriers.flagged, &p.terminal,        &g};
      const DynkinOracleValue v = dynkin_stopping_oracle(*t, pay);
      CHECK(std::abs(s.y[0] - v.inf_sup) <= 1e-10);
      CHECK(std::abs(s.y[0] - v.sup_inf) <= 1e-10);
    }
  }

  TEST_CASE("clamped invariants and decomposition") {
    instances::Rng rng(37);
    for (int i = 0; i < 20; ++i) {
      const ProblemSpec p = random_h(rng, 2 + i % 3, static_cast<std::size_t>(i % 3), static_cast<GeneratorForm>(i % 3));
      const Tree& t = *p.tree;
      const SolutionQuintuple s = backward_clamped_solve(p);
      const BarrierPair& bar = p.barriers;
      for (std::size_t n = 0; n < t.node_count(); ++n) {
        CHECK(bar.lower[n] <= s.y[n]);
        CHECK(s.y[n] <= bar.upper[n]);
        CHECK(s.k_plus.continuous_step[n] * s.k_minus.continuous_step[n] == 0.0);
        CHECK(s.k_plus.jump_step[n] * s.k_minus.jump_step[n] == 0.0);
        if (s.k_plus.continuous_step[n] > 0.0) CHECK(s.y[n] == bar.lower[n]);
        if (s.k_minus.continuous_step[n] > 0.0) CHECK(s.y[n] == bar.upper[n]);
        const int k = t.layer_of(n);
        if (!bar.is_flagged(k)) {
          CHECK(s.k_plus.jump_step[n] == 0.0);
          CHECK(s.k_minus.jump_step[n] == 0.0);
          CHECK(s.y_left[n] == s.y[n]);
        } else {
          const double y = s.y[n];
          CHECK(s.k_minus.jump_step[n] ==
                (bar.upper[n] > bar.upper_left[n] ? std::max(y - bar.upper_left[n], 0.0) : 0.0));
          CHECK(s.k_plus.jump_step[n] ==
                (bar.lower[n] < bar.lower_left[n] ? std::max(bar.lower_left[n] - y, 0.0) : 0.0));
          CHECK(bar.lower_left[n] <= s.y_left[n]);
          CHECK(s.y_left[n] <= bar.upper_left[n]);
        }
        for (const PushProcess* kp : {&s.k_plus, &s.k_minus}) {
          CHECK(kp->total(n) == kp->continuous[n] + kp->jump[n]);
          if (n == 0) {
            CHECK(kp->continuous[0] == 0.0);
          } else {
            const auto par = static_cast<std::size_t>(t.parent(n));
            CHECK(kp->continuous[n] >= kp->continuous[par]);
            CHECK(kp->jump[n] == kp->jump[par] + kp->jump_step[n]);
          }
        }
      }
    }
  }

  TEST_CASE("comparison in the terminal value") {
    instances::Rng rng(38);
    for (int i = 0; i < 10; ++i) {
      const ProblemSpec p = random_h(rng, 3, static_cast<std::size_t>(i % 2), GeneratorForm::Affine);
      ProblemSpec q = p;
      for (std::size_t n = p.tree->layer_begin(3); n < p.tree->node_count(); ++n)
        q.terminal[n] = std::min(q.barriers.upper[n], q.terminal[n] + instances::uniform(rng, 0.0, 0.4));
      const SolutionQuintuple a = backward_clamped_solve(p), b = backward_clamped_solve(q);
      for (std::size_t n = 0; n < p.tree->node_count(); ++n) CHECK(a.y[n] <= b.y[n]);
    }
  }

  TEST_CASE("route equivalence between penalization and clamping") {
    instances::Rng rng(39);
    for (int i = 0; i < 5; ++i) {
      const ProblemSpec p = random_h(rng, 3, 1, GeneratorForm::Affine);
      const PenalizationTrace tr = penalization_bracket(p, default_penalty_schedule());
      const SolutionQuintuple s = backward_clamped_solve(p);
      const auto& last = tr.levels.back();
      for (std::size_t n = 0; n < p.tree->node_count(); ++n) {
        CHECK(std::abs(last.lower_scheme[n] - s.y[n]) <= last.width);
        CHECK(std::abs(last.upper_scheme[n] - s.y[n]) <= last.width);
      }
    }
  }

  TEST_CASE("picard examples") {
    instances::Rng rng(40);
    const ProblemSpec frozen = random_h(rng, 3, 1, GeneratorForm::ConstantInState);
    const PicardResult once = picard_solve(frozen);
    CHECK(once.converged);
    CHECK(once.distances.size() == 1);

    // Affine with b = C_f = 1 on three steps.
    auto t = tree_of(1.0, 3, {0.6});
    ProblemSpec p = flat(t, -1.0, 1.0);
    p.state = forward_state(
        *t, [](double, double) { return 1.0; }, [](double, std::span<const double> e, double) { return e[0]; }, 0.0);
    for (std::size_t n = t->layer_begin(3); n < t->node_count(); ++n) p.terminal[n] = std::clamp(p.state[n], -1.0, 1.0);
    p.generator.form = GeneratorForm::Affine;
    p.generator.level.terms["x"] = 1.0;
    p.generator.b = 1.0;
    p.generator.lipschitz = 1.0;
    const PicardResult lo = picard_solve(p);
    PicardOptions up;
    up.start = PicardStart::Upper;
    const PicardResult hi = picard_solve(p, up);
    REQUIRE(lo.converged);
    REQUIRE(hi.converged);
    CHECK(lo.alpha == default_alpha(1.0));
    CHECK(default_alpha(1.0) == 9.0);
    for (std::size_t i = 1; i < lo.ratios.size(); ++i) CHECK(lo.ratios[i] <= 0.5);
    AdaptedValues diff(*t);
    for (std::size_t n = 0; n < t->node_count(); ++n) diff[n] = lo.solution.y[n] - hi.solution.y[n];
    CHECK(alpha_norm(*t, diff, lo.alpha) <= 10.0 * PicardOptions{}.tol);

    // The fixed point is the implicit clamped solve.
    const SolutionQuintuple s = backward_clamped_solve(p);
    for (std::size_t n = 0; n < t->node_count(); ++n) CHECK(std::abs(lo.solution.y[n] - s.y[n]) <= 1e-9);
  }

  TEST_CASE("picard reports divergence") {
    auto t = tree_of(3.0, 3);
    const double inf = std::numeric_limits<double>::infinity();
    ProblemSpec p = flat(t, -inf, inf);
    for (std::size_t n = t->layer_begin(3); n < t->node_count(); ++n) p.terminal[n] = 1.0;
    p.generator.form = GeneratorForm::Affine;
    p.generator.b = 3.0;
    p.generator.lipschitz = 3.0;
    PicardOptions o;
    o.alpha = 0.0;
    CHECK(kind_of([&] { picard_solve(p, o); }) == ErrorKind::NoContraction);
  }

  TEST_CASE("alpha norm") {
    auto t = tree_of(2.0, 2);
    const AdaptedValues one(*t, 1.0);
    // sum_k e^{alpha t_k} dt with alpha = 0: (N+1) dt
    CHECK(alpha_norm(*t, one, 0.0) == doctest::Approx(std::sqrt(3.0)));
    CHECK(alpha_norm(*t, one, 1.0) == doctest::Approx(std::sqrt(1.0 + std::exp(1.0) + std::exp(2.0))));
  }

  TEST_CASE("first_increase_time examples") {
    auto t = tree_of(1.0, 3, {0.2});
    PushProcess zero{AdaptedValues(*t, 0.0), AdaptedValues(*t, 0.0), AdaptedValues(*t, 0.0), AdaptedValues(*t, 0.0)};
    StoppingRule tau = StoppingRule::at_horizon(*t);
    for (std::size_t n = 0; n < t->layer_begin(3); ++n) tau.stop[n] = t->layer_of(n) == 1;
    const StoppingRule none = first_increase_time(*t, zero, tau);
    for (std::size_t leaf = t->layer_begin(3); leaf < t->node_count(); ++leaf)
      CHECK(t->is_terminal(none.stopping_node(*t, leaf)));

    PushProcess every = zero;
    for (std::size_t n = 0; n < t->node_count(); ++n) every.continuous_step[n] = 0.1;
    const StoppingRule next = first_increase_time(*t, every, tau);
    for (std::size_t leaf = t->layer_begin(3); leaf < t->node_count(); ++leaf)
      CHECK(t->layer_of(next.stopping_node(*t, leaf)) == 1);  // increase acts from tau onward
  }

  TEST_CASE("first increase inequality on penalized solutions") {
    instances::Rng rng(41);
    std::size_t checked = 0;
    for (int i = 0; i < 10; ++i) {
      const ProblemSpec p = random_h(rng, 3, static_cast<std::size_t>(i % 2), GeneratorForm::ConstantInState);
      const Tree& t = *p.tree;
      const OneBarrierSolution s = penalize_increasing(p, 4.0);
      StoppingRule tau = StoppingRule::at_horizon(t);
      for (std::size_t n = 0; n < t.layer_begin(t.steps()); ++n) tau.stop[n] = std::bernoulli_distribution(0.4)(rng);
      const StoppingRule delta = first_increase_time(t, s.k, tau);
      for (std::size_t leaf = t.layer_begin(t.steps()); leaf < t.node_count(); ++leaf) {
        const std::size_t d = delta.stopping_node(t, leaf);
        if (t.is_terminal(d)) continue;
        const std::size_t st = tau.stopping_node(t, leaf);
        const double jump = t.layer_of(st) < t.layer_of(d)
                                ? std::max(p.barriers.upper[d] - p.barriers.upper_left[d], 0.0)
                                : 0.0;
        CHECK(s.y[d] >= p.barriers.upper[d] - jump - 1e-12);
        ++checked;
      }
    }
    CHECK(checked > 0);
  }

  TEST_CASE("mokobodski examples") {
    // No pushes and Y >= 0: h is the conditional expectation of Y at the cutoff.
    auto t = tree_of(1.0, 2, {0.3});
    ProblemSpec p = flat(t, -5.0, 5.0);
    instances::Rng rng(42);
    for (std::size_t n = t->layer_begin(2); n < t->node_count(); ++n) p.terminal[n] = instances::uniform(rng, 0.0, 1.0);
    const SolutionQuintuple s = backward_clamped_solve(p);
    const MokobodskiCertificate c = mokobodski_certificate(*t, p.barriers, s, StoppingRule::at_horizon(*t));
    CHECK(c.passed());
    for (std::size_t n = 0; n < t->node_count(); ++n) {
      CHECK(c.h_prime[n] == 0.0);
      CHECK(std::abs(c.h[n] - s.y[n]) <= 1e-15);
    }

    const ProblemSpec clamp = one_step(0.0, 1.0, 1.5);
    const SolutionQuintuple cs = backward_clamped_solve(clamp);
    const MokobodskiCertificate cc = mokobodski_certificate(*clamp.tree, clamp.barriers, cs,
                                                            StoppingRule::at_horizon(*clamp.tree));
    CHECK(cc.passed());
    CHECK(cc.h[0] - cc.h_prime[0] == 1.0);
  }

  TEST_CASE("mokobodski on random instances") {
    instances::Rng rng(43);
    for (int i = 0; i < 20; ++i) {
      const ProblemSpec p = random_h(rng, 3, static_cast<std::size_t>(i % 2), static_cast<GeneratorForm>(i % 3));
      const Tree& t = *p.tree;
      const SolutionQuintuple s = backward_clamped_solve(p);
      StoppingRule cut = StoppingRule::at_horizon(t);
      for (std::size_t n = 0; n < t.layer_begin(t.steps()); ++n) cut.stop[n] = std::bernoulli_distribution(0.3)(rng);
      for (const StoppingRule& r : {StoppingRule::at_horizon(t), cut}) {
        const MokobodskiCertificate c = mokobodski_certificate(t, p.barriers, s, r);
        CHECK(c.nonnegative);
        CHECK(c.passed());
        for (std::size_t n = 0; n < t.node_count(); ++n) {
          if (!c.covered[n]) continue;
          CHECK(c.h[n] >= 0.0);
          CHECK(c.h_prime[n] >= 0.0);
          CHECK(std::abs(c.h[n] - c.h_prime[n] - s.y[n]) <= 1e-12 * std::max(1.0, c.h[n] + c.h_prime[n]));
        }
      }
    }
  }

  TEST_CASE("serial reference sweep is bit-identical") {
    instances::Rng rng(44);
    for (int i = 0; i < 6; ++i) {
      const ProblemSpec p = random_h(rng, 5, static_cast<std::size_t>(i % 2), static_cast<GeneratorForm>(i % 3));
      SweepInputs in;
      in.tree = p.tree.get();
      in.barriers = &p.barriers;
      in.terminal = &p.terminal;
      in.drift = generator_drift(*p.tree, p.state, p.generator);
      const SolutionQuintuple par = reflected_sweep(in, Exec{4});
      const SolutionQuintuple ser = reference::reflected_sweep(in);
      for (std::size_t n = 0; n < p.tree->node_count(); ++n) {
        CHECK(par.y[n] == ser.y[n]);
        CHECK(par.y_left[n] == ser.y_left[n]);
        CHECK(par.k_plus.continuous[n] == ser.k_plus.continuous[n]);
        CHECK(par.k_minus.jump[n] == ser.k_minus.jump[n]);
        if (!p.tree->is_terminal(n)) CHECK(par.z[n] == ser.z[n]);
      }
    }
  }

  TEST_CASE("worker count does not change results") {
    instances::Rng rng(45);
    const ProblemSpec p = random_h(rng, 6, 1, GeneratorForm::Affine);
    const SolutionQuintuple a = backward_clamped_solve(p, Exec{1});
    const SolutionQuintuple b = backward_clamped_solve(p, Exec{3});
    for (std::size_t n = 0; n < p.tree->node_count(); ++n) CHECK(a.y[n] == b.y[n]);
  }
}
