#include "rbsde/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>

#include "rbsde/drbsde.hpp"
#include "rbsde/error.hpp"
#include "rbsde/game.hpp"
#include "rbsde/instances.hpp"
#include "rbsde/snell.hpp"

namespace rbsde {

namespace {

using instances::Rng;
using instances::uniform;

struct Shape {
  int steps;
  std::size_t marks;
};

CriterionOutcome start(int id, std::string name) {
  CriterionOutcome out;
  out.id = id;
  out.name = std::move(name);
  return out;
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

double max_abs_diff(const Tree& tree, const AdaptedValues& a, const AdaptedValues& b) {
  double worst = 0.0;
  for (std::size_t n = 0; n < tree.node_count(); ++n) worst = std::max(worst, std::abs(a[n] - b[n]));
  return worst;
}

Rng seeded(const VerifyConfig& cfg, int criterion) { return Rng(cfg.seed * 1000003ULL + static_cast<unsigned>(criterion)); }

// Terms of sum (Y - L) dK^{c,+} and sum (U - Y) dK^{c,-} that are not zero.
std::size_t skorokhod_violations(const Tree& tree, const BarrierPair& bar, const AdaptedValues& y,
                                 const PushProcess* up, const PushProcess* down) {
  std::size_t bad = 0;
  for (std::size_t n = 0; n < tree.node_count(); ++n) {
    if (up && up->continuous_step[n] != 0.0 && (y[n] - bar.lower[n]) * up->continuous_step[n] != 0.0) ++bad;
    if (down && down->continuous_step[n] != 0.0 && (bar.upper[n] - y[n]) * down->continuous_step[n] != 0.0) ++bad;
  }
  return bad;
}

// 1) snell_envelope against exhaustive optimal stopping.
CriterionOutcome oracle_equivalence(const VerifyConfig& cfg, const Exec& exec) {
  CriterionOutcome out = start(1, "oracle equivalence (Snell vs enumerated stopping)");
  Rng rng = seeded(cfg, 1);
  const Shape shapes[] = {{1, 0}, {2, 0}, {3, 0}, {1, 1}, {2, 1}, {3, 1}};
  double worst = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < cfg.snell_instances; ++i) {
    const Shape sh = shapes[i % 6];
    auto tree = instances::random_tree(rng, sh.steps, sh.marks);
    const AdaptedValues payoff = instances::random_values(rng, *tree, 0, sh.steps, -1.0, 1.0);
    const AdaptedValues drift = instances::random_values(rng, *tree, 0, sh.steps - 1, -1.0, 1.0);
    const AdaptedValues y = snell_envelope(*tree, payoff, drift, exec);
    const AdaptedValues oracle = optimal_stopping_oracle(*tree, payoff, drift, OptimizeMode::Sup);
    worst = std::max(worst, max_abs_diff(*tree, y, oracle));
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.passed = cfg.snell_instances >= 50 && worst <= 1e-10 && out.seconds < 10.0;
  out.detail = std::to_string(cfg.snell_instances) + " instances, max |diff| " + num(worst);
  return out;
}

// 2) backward_clamped_solve root against the enumerated Dynkin game.
CriterionOutcome dynkin_equivalence(const VerifyConfig& cfg, const Exec& exec) {
  CriterionOutcome out = start(2, "Dynkin oracle equivalence (clamped solve vs stopping-rule pairs)");
  Rng rng = seeded(cfg, 2);
  const Shape shapes[] = {{1, 0}, {2, 0}, {3, 0}, {1, 1}, {2, 1}};
  double worst = 0.0;
  std::size_t flagged = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < cfg.dynkin_instances; ++i) {
    const Shape sh = shapes[i % 5];
    auto tree = instances::random_tree(rng, sh.steps, sh.marks);
    instances::ProblemOptions o;
    o.flagged = instances::random_flags(rng, *tree, 11);
    flagged += o.flagged.empty() ? 0 : 1;
    const ProblemSpec p = instances::random_problem(rng, tree, o);
    const AdaptedValues frozen = instances::random_values(rng, *tree, 0, sh.steps - 1, -1.0, 1.0);
    const SolutionQuintuple s = backward_clamped_solve(p, frozen, exec);
    DynkinPayoffs pay;
    pay.lower = &p.barriers.lower;
    pay.upper = &p.barriers.upper;
    pay.lower_left = &p.barriers.lower_left;
    pay.upper_left = &p.barriers.upper_left;
    pay.flagged = &p.barriers.flagged;
    pay.terminal = &p.terminal;
    pay.drift = &frozen;
    const DynkinOracleValue v = dynkin_stopping_oracle(*tree, pay);
    worst = std::max({worst, std::abs(s.y[0] - v.inf_sup), std::abs(s.y[0] - v.sup_inf)});
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.passed = cfg.dynkin_instances >= 50 && worst <= 1e-10 && out.seconds < 60.0;
  out.detail = std::to_string(cfg.dynkin_instances) + " instances (" + std::to_string(flagged) +
               " with flagged jumps), max |diff| " + num(worst);
  return out;
}

ProblemSpec monotone_instance(Rng& rng, int i) {
  auto tree = instances::random_tree(rng, 2 + i % 3, static_cast<std::size_t>(i / 3 % 2));
  instances::ProblemOptions o;
  o.flagged = instances::random_flags(rng, *tree, 1000);
  o.form = i % 2 == 0 ? GeneratorForm::Affine : GeneratorForm::ConstantInState;
  return instances::random_problem(rng, tree, o);
}

// 3) monotone penalization bracket.
CriterionOutcome penalization_bracket_check(const VerifyConfig& cfg, const Exec& exec) {
  CriterionOutcome out = start(3, "penalization bracket");
  Rng rng = seeded(cfg, 3);
  double widest = 0.0;
  std::size_t outside = 0;
  std::string failure;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    for (int i = 0; i < cfg.penalization_instances; ++i) {
      const ProblemSpec p = monotone_instance(rng, i);
      const PenalizationTrace trace = penalization_bracket(p, default_penalty_schedule(), 0.0, exec);
      const SolutionQuintuple s = backward_clamped_solve(p, exec);
      const PenalizationLevel& last = trace.levels.back();
      widest = std::max(widest, last.width);
      for (std::size_t n = 0; n < p.tree->node_count(); ++n)
        if (!(last.lower_scheme[n] <= s.y[n] && s.y[n] <= last.upper_scheme[n])) ++outside;
    }
  } catch (const Error& e) {
    failure = e.what();
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.passed = failure.empty() && cfg.penalization_instances >= 20 && widest <= 1e-4 && outside == 0;
  out.detail = failure.empty() ? std::to_string(cfg.penalization_instances) + " instances, monotone, width at n=2^20 " +
                                     num(widest) + ", clamped outside bracket at " + std::to_string(outside) + " nodes"
                               : failure;
  return out;
}

// Pairwise step domination and interval domination along every path.
bool pushes_dominated(const Tree& tree, const PushProcess& k, const PushProcess& kp) {
  for (std::size_t n = 0; n < tree.node_count(); ++n)
    if (k.continuous_step[n] > kp.continuous_step[n] || k.jump_step[n] > kp.jump_step[n]) return false;
  const int steps = tree.steps();
  for (std::size_t leaf = tree.layer_begin(steps); leaf < tree.node_count(); ++leaf) {
    // Increment entering K at path position i: c-step of the parent plus d-step of the node.
    const auto path = tree.path_to(leaf);
    for (std::size_t s = 0; s < path.size(); ++s) {
      double acc = 0.0, accp = 0.0;
      for (std::size_t t = s + 1; t < path.size(); ++t) {
        acc += k.continuous_step[path[t - 1]] + k.jump_step[path[t]];
        accp += kp.continuous_step[path[t - 1]] + kp.jump_step[path[t]];
        if (acc > accp) return false;
      }
    }
  }
  return true;
}

// 4) comparison theorem.
CriterionOutcome comparison(const VerifyConfig& cfg, const Exec& exec) {
  CriterionOutcome out = start(4, "comparison theorem");
  Rng rng = seeded(cfg, 4);
  std::size_t y_bad = 0, k_bad = 0, clamped_bad = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < cfg.comparison_pairs; ++i) {
    auto tree = instances::random_tree(rng, 2 + i % 2, static_cast<std::size_t>(i / 2 % 2));
    instances::ProblemOptions o;
    o.flagged = instances::random_flags(rng, *tree, 1000);
    o.form = GeneratorForm::Affine;
    const ProblemSpec p = instances::random_problem(rng, tree, o);
    ProblemSpec q = p;
    q.generator.level.terms["1"] += i % 4 == 0 ? 0.0 : uniform(rng, 0.0, 1.0);
    for (std::size_t n = tree->layer_begin(tree->steps()); n < tree->node_count(); ++n)
      q.terminal[n] = std::min(q.barriers.upper[n], q.terminal[n] + uniform(rng, 0.0, 0.5));
    const OneBarrierSolution a = solve_one_barrier(p, Side::Upper, exec);
    const OneBarrierSolution b = solve_one_barrier(q, Side::Upper, exec);
    for (std::size_t n = 0; n < tree->node_count(); ++n)
      if (a.y[n] > b.y[n]) ++y_bad;
    if (!pushes_dominated(*tree, a.k, b.k)) ++k_bad;
    const SolutionQuintuple ca = backward_clamped_solve(p, exec);
    const SolutionQuintuple cb = backward_clamped_solve(q, exec);
    for (std::size_t n = 0; n < tree->node_count(); ++n)
      if (ca.y[n] > cb.y[n]) ++clamped_bad;
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.passed = cfg.comparison_pairs >= 20 && y_bad == 0 && k_bad == 0 && clamped_bad == 0;
  out.detail = std::to_string(cfg.comparison_pairs) + " pairs; Y > Y' at " + std::to_string(y_bad) +
               " nodes, K not dominated on " + std::to_string(k_bad) + " pairs, clamped Y > Y' at " +
               std::to_string(clamped_bad) + " nodes";
  return out;
}

// 5) predictable jump pushes match their formulas.
CriterionOutcome jump_decomposition(const VerifyConfig& cfg, const Exec& exec) {
  CriterionOutcome out = start(5, "jump decomposition");
  Rng rng = seeded(cfg, 5);
  std::size_t mismatches = 0, active = 0, both = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < cfg.jump_instances; ++i) {
    auto tree = instances::random_tree(rng, 2 + i % 2, static_cast<std::size_t>(i / 2 % 2));
    instances::ProblemOptions o;
    o.flagged = {1 + i % tree->steps()};
    if (i % 3 == 0 && tree->steps() > 1) o.flagged.push_back(tree->steps());
    std::sort(o.flagged.begin(), o.flagged.end());
    o.flagged.erase(std::unique(o.flagged.begin(), o.flagged.end()), o.flagged.end());
    o.left_gap_lo = 0.05;
    o.left_gap_hi = 0.4;
    o.form = i % 2 == 0 ? GeneratorForm::Affine : GeneratorForm::ConstantInState;
    const ProblemSpec p = instances::random_problem(rng, tree, o);
    const SolutionQuintuple s = backward_clamped_solve(p, exec);
    const BarrierPair& bar = p.barriers;
    for (std::size_t n = 0; n < tree->node_count(); ++n) {
      const double dm = s.k_minus.jump_step[n], dp = s.k_plus.jump_step[n];
      if (bar.is_flagged(tree->layer_of(n))) {
        const double y = s.y[n];
        const double want_minus = std::max(y - bar.upper_left[n], 0.0) * (bar.upper[n] - bar.upper_left[n] > 0.0 ? 1.0 : 0.0);
        const double want_plus = std::max(bar.lower_left[n] - y, 0.0) * (bar.lower[n] - bar.lower_left[n] < 0.0 ? 1.0 : 0.0);
        if (dm != want_minus || dp != want_plus) ++mismatches;
        if (dm > 0.0 || dp > 0.0) ++active;
      } else if (dm != 0.0 || dp != 0.0) {
        ++mismatches;
      }
      if (dm * dp != 0.0 || s.k_plus.continuous_step[n] * s.k_minus.continuous_step[n] != 0.0) ++both;
    }
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.passed = mismatches == 0 && both == 0 && active > 0;
  out.detail = std::to_string(cfg.jump_instances) + " flagged instances, " + std::to_string(active) +
               " active jump pushes, " + std::to_string(mismatches) + " formula mismatches, " + std::to_string(both) +
               " instants with both pushes";
  return out;
}

// 6) flat-off condition, on clamped, one-barrier, penalized and game solutions.
CriterionOutcome skorokhod(const VerifyConfig& cfg, const Exec& exec) {
  CriterionOutcome out = start(6, "Skorokhod minimality");
  Rng rng = seeded(cfg, 6);
  std::size_t bad = 0, solved = 0, pushes = 0;
  const auto t0 = std::chrono::steady_clock::now();
  auto count_pushes = [&](const Tree& tree, const PushProcess* k) {
    if (!k) return;
    for (std::size_t n = 0; n < tree.node_count(); ++n) pushes += k->continuous_step[n] > 0.0 ? 1 : 0;
  };
  for (int i = 0; i < cfg.dynkin_instances; ++i) {
    auto tree = instances::random_tree(rng, 1 + i % 4, static_cast<std::size_t>(i / 4 % 2));
    instances::ProblemOptions o;
    o.flagged = instances::random_flags(rng, *tree, 1000);
    o.form = static_cast<GeneratorForm>(i % 3);
    o.z_dependent = i % 2 == 0;
    const ProblemSpec p = instances::random_problem(rng, tree, o);
    const SolutionQuintuple s = backward_clamped_solve(p, exec);
    bad += skorokhod_violations(*tree, p.barriers, s.y, &s.k_plus, &s.k_minus);
    count_pushes(*tree, &s.k_plus);
    count_pushes(*tree, &s.k_minus);
    for (Side side : {Side::Upper, Side::Lower}) {
      const OneBarrierSolution one = solve_one_barrier(p, side, exec);
      const bool upper = side == Side::Upper;
      bad += skorokhod_violations(*tree, p.barriers, one.y, upper ? nullptr : &one.k, upper ? &one.k : nullptr);
    }
    solved += 3;
  }
  for (int i = 0; i < cfg.game_instances; ++i) {
    auto tree = instances::random_tree(rng, 2, static_cast<std::size_t>(i % 2));
    const GameSpec g = instances::separable_game(rng, tree, {});
    const GameResult r = solve_game(g, exec);
    bad += skorokhod_violations(*tree, g.barriers, r.y, &r.k_plus, &r.k_minus);
    ++solved;
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.passed = bad == 0 && pushes > 0;
  out.detail = std::to_string(solved) + " solutions, " + std::to_string(pushes) + " continuous pushes, " +
               std::to_string(bad) + " nonzero terms";
  return out;
}

// The fixed three-step instance used for the contraction check.
ProblemSpec picard_instance() {
  MarkSet marks;
  marks.marks.push_back({{0.5}, 0.6});
  auto tree = std::make_shared<const Tree>(TimeGrid::make(1.0, 3), marks);
  ProblemSpec p;
  p.tree = tree;
  p.state = forward_state(
      *tree, [](double, double) { return 1.0; }, [](double, std::span<const double> e, double) { return e[0]; }, 0.0);
  AdaptedValues lower(*tree), upper(*tree);
  for (std::size_t n = 0; n < tree->node_count(); ++n) {
    lower[n] = -1.0 + 0.3 * p.state[n];
    upper[n] = 1.0 + 0.3 * p.state[n];
  }
  p.barriers = BarrierPair::plain(*tree, lower, upper);
  p.terminal = AdaptedValues(*tree, 3, 3);
  for (std::size_t n = tree->layer_begin(3); n < tree->node_count(); ++n)
    p.terminal[n] = std::clamp(p.state[n], lower[n], upper[n]);
  p.generator.form = GeneratorForm::Affine;
  p.generator.level = ScalarForm::constant(0.5);
  p.generator.level.terms["x"] = 1.0;
  p.generator.b = 1.0;
  p.generator.c = 0.5;
  p.generator.d = {0.5};
  p.generator.lipschitz = 1.0;
  return p;
}

// 7) Picard contraction and uniqueness.
CriterionOutcome picard(const VerifyConfig&, const Exec& exec) {
  CriterionOutcome out = start(7, "Picard contraction");
  const auto t0 = std::chrono::steady_clock::now();
  const ProblemSpec p = picard_instance();
  PicardOptions lo;
  lo.start = PicardStart::Lower;
  PicardOptions hi = lo;
  hi.start = PicardStart::Upper;
  std::string failure;
  double worst_ratio = 0.0, gap = 0.0;
  std::size_t iterations = 0;
  try {
    const PicardResult a = picard_solve(p, lo, exec);
    const PicardResult b = picard_solve(p, hi, exec);
    for (const PicardResult* r : {&a, &b})
      for (std::size_t i = 1; i < r->ratios.size(); ++i) worst_ratio = std::max(worst_ratio, r->ratios[i]);
    AdaptedValues diff(*p.tree);
    for (std::size_t n = 0; n < p.tree->node_count(); ++n) diff[n] = a.solution.y[n] - b.solution.y[n];
    gap = alpha_norm(*p.tree, diff, a.alpha);
    iterations = std::max(a.distances.size(), b.distances.size());
    if (!a.converged || !b.converged) failure = "did not converge";
  } catch (const Error& e) {
    failure = e.what();
  }
  const double tol = PicardOptions{}.tol;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.passed = failure.empty() && worst_ratio <= 0.5 && gap <= 10.0 * tol;
  out.detail = failure.empty() ? "alpha " + num(default_alpha(1.0)) + ", worst ratio after iteration 2 " +
                                     num(worst_ratio) + ", starts differ by " + num(gap) + " in alpha-norm (" +
                                     std::to_string(iterations) + " iterations)"
                               : failure;
  return out;
}

// 8) Mokobodski supermartingale pair.
CriterionOutcome mokobodski(const VerifyConfig& cfg, const Exec& exec) {
  CriterionOutcome out = start(8, "Mokobodski certificate");
  Rng rng = seeded(cfg, 8);
  std::size_t failed = 0, certificates = 0;
  double worst_defect = 0.0, worst_sandwich = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < cfg.dynkin_instances; ++i) {
    auto tree = instances::random_tree(rng, 1 + i % 4, static_cast<std::size_t>(i / 4 % 2));
    instances::ProblemOptions o;
    o.flagged = instances::random_flags(rng, *tree, 1000);
    o.form = static_cast<GeneratorForm>(i % 3);
    const ProblemSpec p = instances::random_problem(rng, tree, o);
    const SolutionQuintuple s = backward_clamped_solve(p, exec);
    StoppingRule random_cut = StoppingRule::at_horizon(*tree);
    for (std::size_t n = 0; n < tree->layer_begin(tree->steps()); ++n)
      random_cut.stop[n] = std::bernoulli_distribution(0.3)(rng);
    for (const StoppingRule* cut : {&random_cut}) {
      const MokobodskiCertificate c = mokobodski_certificate(*tree, p.barriers, s, *cut);
      worst_defect = std::min(worst_defect, c.worst_defect);
      worst_sandwich = std::min(worst_sandwich, c.worst_sandwich);
      if (!c.passed()) ++failed;
      ++certificates;
    }
    const MokobodskiCertificate full = mokobodski_certificate(*tree, p.barriers, s, StoppingRule::at_horizon(*tree));
    worst_defect = std::min(worst_defect, full.worst_defect);
    worst_sandwich = std::min(worst_sandwich, full.worst_sandwich);
    if (!full.passed()) ++failed;
    ++certificates;
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.passed = failed == 0;
  out.detail = std::to_string(certificates) + " certificates, worst defect " + num(worst_defect) +
               ", worst sandwich slack " + num(worst_sandwich) + ", " + std::to_string(failed) + " failed";
  return out;
}

struct GameCase {
  GameSpec game;
  GameResult result;
  GameOracleRecord oracle;
};

std::vector<GameCase> game_cases(const VerifyConfig& cfg, const Exec& exec) {
  Rng rng = seeded(cfg, 9);
  std::vector<GameCase> cases;
  for (int i = 0; i < cfg.game_instances; ++i) {
    auto tree = instances::random_tree(rng, 2, static_cast<std::size_t>(i % 2));
    const std::vector<int> flags = i % 3 == 2 ? std::vector<int>{1} : std::vector<int>{};
    GameCase c{instances::separable_game(rng, tree, flags), {}, {}};
    c.result = solve_game(c.game, exec);
    c.oracle = brute_force_game_oracle(c.game, exec);
    c.oracle.y_root = c.result.y[0];
    cases.push_back(std::move(c));
  }
  return cases;
}

// 9) game value against the brute-force oracle.
CriterionOutcome game_value(const std::vector<GameCase>& cases, double setup_seconds, const VerifyConfig& cfg,
                            const Exec& exec) {
  CriterionOutcome out = start(9, "game value");
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0, max_gap = 0.0;
  for (const GameCase& c : cases) {
    max_gap = std::max(max_gap, c.result.max_gap);
    const double y = c.oracle.y_root;
    worst = std::max({worst, std::abs(y - c.oracle.supinf), std::abs(y - c.oracle.infsup),
                      std::abs(c.oracle.supinf - c.oracle.infsup)});
  }
  Rng rng = seeded(cfg, 90);
  const GameSpec pennies = instances::pennies_game(rng, instances::random_tree(rng, 2, 0));
  const GameResult pr = solve_game(pennies, exec);
  const GameOracleRecord po = brute_force_game_oracle(pennies, exec);
  const bool bracketed = po.supinf <= pr.y[0] + 1e-12 && pr.y[0] <= po.infsup + 1e-12;
  out.seconds = setup_seconds + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.passed = cases.size() >= 10 && max_gap <= kSaddleTol && worst <= 1e-9 && bracketed && pr.max_gap > 0.0 &&
               out.seconds < 300.0;
  out.detail = std::to_string(cases.size()) + " games, max Isaacs gap " + num(max_gap) + ", max disagreement " +
               num(worst) + "; gap instance (gap " + num(pr.max_gap) + "): supinf " + num(po.supinf) + " <= Y_root " +
               num(pr.y[0]) + " <= infsup " + num(po.infsup) + (bracketed ? "" : " FAILS");
  return out;
}

// 10) both routes of dynkin_value on the game instances.
CriterionOutcome girsanov(const std::vector<GameCase>& cases, const VerifyConfig& cfg, const Exec& exec) {
  CriterionOutcome out = start(10, "Girsanov consistency");
  Rng rng = seeded(cfg, 10);
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t runs = 0;
  for (const GameCase& c : cases) {
    const Tree& tree = *c.game.tree;
    const std::size_t inner = tree.layer_begin(tree.steps());
    std::vector<std::pair<ControlMap, ControlMap>> maps{{c.result.u_star, c.result.v_star}};
    for (int r = 0; r < 3; ++r) {
      ControlMap u(inner), v(inner);
      for (auto& x : u) x = std::uniform_int_distribution<std::size_t>(0, c.game.controls.a.size() - 1)(rng);
      for (auto& x : v) x = std::uniform_int_distribution<std::size_t>(0, c.game.controls.b.size() - 1)(rng);
      maps.emplace_back(u, v);
    }
    for (const auto& [u, v] : maps) {
      worst = std::max(worst, dynkin_value(c.game, u, v, exec).max_diff);
      ++runs;
    }
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.passed = !cases.empty() && worst <= 1e-10;
  out.detail = std::to_string(runs) + " control-map pairs, max |R1 - R2| " + num(worst);
  return out;
}

// 11) Snell envelope is monotone under increasing payoffs.
CriterionOutcome monotone_snell(const VerifyConfig& cfg, const Exec& exec) {
  CriterionOutcome out = start(11, "monotone Snell convergence");
  Rng rng = seeded(cfg, 11);
  std::size_t bad = 0;
  const auto t0 = std::chrono::steady_clock::now();
  constexpr int terms = 12;
  for (int i = 0; i < cfg.monotone_sequences; ++i) {
    auto tree = instances::random_tree(rng, 2 + i % 3, static_cast<std::size_t>(i % 2));
    const int steps = tree->steps();
    const AdaptedValues q = instances::random_values(rng, *tree, 0, steps, -1.0, 1.0);
    const AdaptedValues drift = instances::random_values(rng, *tree, 0, steps - 1, -1.0, 1.0);
    const AdaptedValues scale = instances::random_values(rng, *tree, 0, steps, 0.0, 2.0);
    AdaptedValues prev_payoff, prev_env;
    for (int k = 0; k < terms; ++k) {
      AdaptedValues qk = q;
      if (k + 1 < terms)
        for (std::size_t n = 0; n < tree->node_count(); ++n) qk[n] = q[n] - scale[n] * std::ldexp(1.0, -k);
      const AdaptedValues env = snell_envelope(*tree, qk, drift, exec);
      if (k > 0)
        for (std::size_t n = 0; n < tree->node_count(); ++n)
          if (qk[n] < prev_payoff[n] || env[n] < prev_env[n]) ++bad;
      prev_payoff = std::move(qk);
      prev_env = env;
    }
    const AdaptedValues limit = snell_envelope(*tree, q, drift, exec);
    for (std::size_t n = 0; n < tree->node_count(); ++n)
      if (prev_env[n] != limit[n]) ++bad;
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.passed = cfg.monotone_sequences >= 10 && bad == 0;
  out.detail = std::to_string(cfg.monotone_sequences) + " sequences of " + std::to_string(terms) + " payoffs, " +
               std::to_string(bad) + " violations";
  return out;
}

CriterionOutcome guarded(int id, const std::string& name, const std::function<CriterionOutcome()>& run) {
  try {
    return run();
  } catch (const std::exception& e) {
    CriterionOutcome out = start(id, name);
    out.detail = std::string("error: ") + e.what();
    return out;
  }
}

}  // namespace

std::vector<CriterionOutcome> run_acceptance(const VerifyConfig& cfg, const Exec& exec) {
  std::vector<CriterionOutcome> out;
  out.push_back(guarded(1, "oracle equivalence", [&] { return oracle_equivalence(cfg, exec); }));
  out.push_back(guarded(2, "Dynkin oracle equivalence", [&] { return dynkin_equivalence(cfg, exec); }));
  out.push_back(guarded(3, "penalization bracket", [&] { return penalization_bracket_check(cfg, exec); }));
  out.push_back(guarded(4, "comparison theorem", [&] { return comparison(cfg, exec); }));
  out.push_back(guarded(5, "jump decomposition", [&] { return jump_decomposition(cfg, exec); }));
  out.push_back(guarded(6, "Skorokhod minimality", [&] { return skorokhod(cfg, exec); }));
  out.push_back(guarded(7, "Picard contraction", [&] { return picard(cfg, exec); }));
  out.push_back(guarded(8, "Mokobodski certificate", [&] { return mokobodski(cfg, exec); }));

  std::vector<GameCase> cases;
  double setup = 0.0;
  std::string setup_error;
  try {
    const auto t0 = std::chrono::steady_clock::now();
    cases = game_cases(cfg, exec);
    setup = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  } catch (const std::exception& e) {
    setup_error = e.what();
  }
  if (setup_error.empty()) {
    out.push_back(guarded(9, "game value", [&] { return game_value(cases, setup, cfg, exec); }));
    out.push_back(guarded(10, "Girsanov consistency", [&] { return girsanov(cases, cfg, exec); }));
  } else {
    for (auto [id, name] : {std::pair{9, "game value"}, std::pair{10, "Girsanov consistency"}}) {
      out.push_back(start(id, name));
      out.back().detail = "error: " + setup_error;
    }
  }
  out.push_back(guarded(11, "monotone Snell convergence", [&] { return monotone_snell(cfg, exec); }));
  return out;
}

std::string format_outcome(const CriterionOutcome& o) {
  std::ostringstream os;
  os << (o.passed ? "[PASS] " : "[FAIL] ") << o.id << ". " << o.name << ": " << o.detail << " (" << num(o.seconds)
     << " s)";
  return os.str();
}

}  // namespace rbsde
