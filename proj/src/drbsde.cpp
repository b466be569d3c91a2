#include "rbsde/drbsde.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rbsde/error.hpp"

namespace rbsde {

namespace {

const Tree& tree_of(const ProblemSpec& problem) {
  if (!problem.tree) throw Error(ErrorKind::InvalidArgument, "problem has no tree");
  return *problem.tree;
}

OneBarrierSolution penalized(const ProblemSpec& problem, double n, Side reflected, const Exec& exec) {
  const Tree& tree = tree_of(problem);
  if (!(n >= 0.0) || !std::isfinite(n)) throw Error(ErrorKind::InvalidArgument, "penalty level must be finite and >= 0");
  if (problem.generator.form == GeneratorForm::LipschitzClip)
    throw Error(ErrorKind::InvalidArgument, "penalization needs a constant-in-state or affine generator");
  SweepInputs in;
  in.tree = &tree;
  in.barriers = &problem.barriers;
  in.terminal = &problem.terminal;
  in.rule.lower = reflected == Side::Lower ? BarrierMode::Hard : BarrierMode::Penalized;
  in.rule.upper = reflected == Side::Upper ? BarrierMode::Hard : BarrierMode::Penalized;
  in.rule.penalty_weight = n * tree.dt();
  in.drift = generator_drift(tree, problem.state, problem.generator);
  return as_one_barrier(reflected_sweep(in, exec), reflected);
}

SolutionQuintuple clamped(const ProblemSpec& problem, DriftFn drift, const Exec& exec) {
  const Tree& tree = tree_of(problem);
  SweepInputs in;
  in.tree = &tree;
  in.barriers = &problem.barriers;
  in.terminal = &problem.terminal;
  in.drift = std::move(drift);
  return reflected_sweep(in, exec);
}

[[noreturn]] void monotonicity_failure(const Tree& tree, std::size_t node, const std::string& what, double n) {
  std::ostringstream msg;
  msg.precision(17);
  msg << what << " at node '" << tree.node_id(node) << "' for n = " << n;
  throw Error(ErrorKind::MonotonicityViolated, msg.str());
}

double finite_or_zero(double v) { return std::isfinite(v) ? v : 0.0; }

}  // namespace

OneBarrierSolution penalize_increasing(const ProblemSpec& problem, double n, const Exec& exec) {
  return penalized(problem, n, Side::Upper, exec);
}

OneBarrierSolution penalize_decreasing(const ProblemSpec& problem, double n, const Exec& exec) {
  return penalized(problem, n, Side::Lower, exec);
}

std::vector<double> default_penalty_schedule() {
  std::vector<double> out;
  for (int k = 0; k <= 20; ++k) out.push_back(std::ldexp(1.0, k));
  return out;
}

PenalizationTrace penalization_bracket(const ProblemSpec& problem, const std::vector<double>& schedule,
                                       double early_stop, const Exec& exec) {
  const Tree& tree = tree_of(problem);
  if (schedule.empty()) throw Error(ErrorKind::InvalidArgument, "penalty schedule is empty");
  for (std::size_t i = 1; i < schedule.size(); ++i)
    if (!(schedule[i] > schedule[i - 1]))
      throw Error(ErrorKind::InvalidArgument, "penalty schedule must be strictly increasing");

  PenalizationTrace trace;
  for (double n : schedule) {
    PenalizationLevel level;
    level.n = n;
    level.lower_scheme = penalize_increasing(problem, n, exec).y;
    level.upper_scheme = penalize_decreasing(problem, n, exec).y;
    const PenalizationLevel* prev = trace.levels.empty() ? nullptr : &trace.levels.back();
    for (std::size_t node = 0; node < tree.node_count(); ++node) {
      const double lo = level.lower_scheme[node];
      const double up = level.upper_scheme[node];
      if (!(lo <= up)) monotonicity_failure(tree, node, "Y^n > Y'^n", n);
      if (prev != nullptr) {
        if (!(prev->lower_scheme[node] <= lo)) monotonicity_failure(tree, node, "Y^n decreased", n);
        if (!(up <= prev->upper_scheme[node])) monotonicity_failure(tree, node, "Y'^n increased", n);
      }
      level.width = std::max(level.width, up - lo);
    }
    trace.levels.push_back(std::move(level));
    if (early_stop > 0.0 && trace.levels.back().width < early_stop) {
      trace.stopped_early = n != schedule.back();
      break;
    }
  }
  return trace;
}

SolutionQuintuple backward_clamped_solve(const ProblemSpec& problem, const Exec& exec) {
  const Tree& tree = tree_of(problem);
  return clamped(problem, generator_drift(tree, problem.state, problem.generator), exec);
}

SolutionQuintuple backward_clamped_solve(const ProblemSpec& problem, const AdaptedValues& frozen, const Exec& exec) {
  return clamped(problem, frozen_drift(tree_of(problem), frozen), exec);
}

double default_alpha(double lipschitz) { return 4.0 * (lipschitz * lipschitz + lipschitz) + 1.0; }

double alpha_norm(const Tree& tree, const AdaptedValues& y, double alpha) {
  const AdaptedValues prob = node_probabilities(tree, BranchWeights::base(tree));
  double total = 0.0;
  for (int k = 0; k <= tree.steps(); ++k) {
    double second_moment = 0.0;
    for (std::size_t n = tree.layer_begin(k); n < tree.layer_end(k); ++n) second_moment += prob[n] * y[n] * y[n];
    total += std::exp(alpha * tree.time(k)) * second_moment * tree.dt();
  }
  return std::sqrt(total);
}

PicardResult picard_solve(const ProblemSpec& problem, const PicardOptions& options, const Exec& exec) {
  const Tree& tree = tree_of(problem);
  const GeneratorSpec& gen = problem.generator;
  const std::size_t m = tree.mark_count();
  const int steps = tree.steps();
  PicardResult out;
  out.alpha = options.alpha.value_or(default_alpha(gen.lipschitz));

  // Previous iterate: pre-clamp y, Z, V inside f, and Y for the distance.
  const AdaptedValues& start = options.start == PicardStart::Lower ? problem.barriers.lower : problem.barriers.upper;
  AdaptedValues y_pre(tree);
  for (std::size_t n = 0; n < tree.node_count(); ++n) y_pre[n] = finite_or_zero(start[n]);
  AdaptedValues y_post = y_pre;
  AdaptedValues z(tree, 0, steps - 1);
  std::vector<AdaptedValues> v(m, AdaptedValues(tree, 0, steps - 1));

  int rising = 0;
  std::vector<double> vj(m);
  for (int it = 0; it < options.max_iter; ++it) {
    AdaptedValues frozen(tree, 0, steps - 1);
    for (int k = 0; k < steps; ++k) {
      const double t = tree.time(k);
      for (std::size_t n = tree.layer_begin(k); n < tree.layer_end(k); ++n) {
        for (std::size_t j = 0; j < m; ++j) vj[j] = v[j][n];
        frozen[n] = evaluate_generator(gen, t, problem.state[n], y_pre[n], z[n], vj);
      }
    }
    SolutionQuintuple s = backward_clamped_solve(problem, frozen, exec);

    AdaptedValues diff(tree);
    for (std::size_t n = 0; n < tree.node_count(); ++n) diff[n] = s.y[n] - y_post[n];
    const double d = alpha_norm(tree, diff, out.alpha);
    if (!out.distances.empty()) {
      const double ratio = out.distances.back() > 0.0 ? d / out.distances.back() : 0.0;
      out.ratios.push_back(ratio);
      rising = ratio >= 1.0 ? rising + 1 : 0;
    }
    out.distances.push_back(d);

    y_pre = s.unclamped;
    y_post = s.y;
    for (std::size_t n = 0; n < z.size(); ++n) z[n] = s.z[n];
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t n = 0; n < z.size(); ++n) v[j][n] = s.v[j][n];
    out.solution = std::move(s);

    if (!gen.depends_on_solution() || d < options.tol) {
      out.converged = true;
      break;
    }
    if (rising >= 5) {
      std::ostringstream msg;
      msg << "distance ratio >= 1 for 5 consecutive iterations with alpha = " << out.alpha
          << "; increase alpha";
      throw Error(ErrorKind::NoContraction, msg.str());
    }
  }
  return out;
}

StoppingRule first_increase_time(const Tree& tree, const PushProcess& k, const StoppingRule& tau) {
  const std::size_t count = tree.node_count();
  auto tau_at = [&](std::size_t n) {
    return tau.stop[n] || (!tau.stop_left.empty() && tau.stop_left[n]) || tree.is_terminal(n);
  };
  std::vector<bool> reached(count, false);  // tau <= this node
  StoppingRule out;
  out.stop.assign(count, false);
  for (std::size_t n = 0; n < count; ++n) {
    const bool after = n > 0 && reached[static_cast<std::size_t>(tree.parent(n))];
    reached[n] = after || tau_at(n);
    out.stop[n] = tree.is_terminal(n) || (reached[n] && k.continuous_step[n] > 0.0) ||
                  (after && k.jump_step[n] > 0.0);
  }
  return out;
}

MokobodskiCertificate mokobodski_certificate(const Tree& tree, const BarrierPair& barriers,
                                             const SolutionQuintuple& solution, const StoppingRule& cutoff) {
  const std::size_t count = tree.node_count();
  const std::size_t b = tree.branching();
  const double dt = tree.dt();
  const auto weights = tree.base_weights();
  MokobodskiCertificate cert;
  cert.h = AdaptedValues(tree);
  cert.h_prime = AdaptedValues(tree);
  cert.defect = AdaptedValues(tree);
  cert.defect_prime = AdaptedValues(tree);
  cert.covered.assign(count, false);

  auto cut = [&](std::size_t n) { return cutoff.stop[n] || tree.is_terminal(n); };
  cert.covered[0] = true;
  for (std::size_t n = 1; n < count; ++n) {
    const auto p = static_cast<std::size_t>(tree.parent(n));
    cert.covered[n] = cert.covered[p] && !cut(p);
  }

  std::vector<double> up(b), down(b);
  for (std::size_t n = count; n-- > 0;) {
    if (!cert.covered[n]) continue;
    const double y = solution.y[n];
    if (cut(n)) {
      cert.h[n] = std::max(y, 0.0);
      cert.h_prime[n] = std::max(-y, 0.0);
    } else {
      const std::size_t c0 = tree.first_child(n);
      for (std::size_t c = 0; c < b; ++c) {
        up[c] = cert.h[c0 + c] + solution.k_plus.jump_step[c0 + c];
        down[c] = cert.h_prime[c0 + c] + solution.k_minus.jump_step[c0 + c];
      }
      const double run = solution.drift[n] * dt;
      cert.h[n] = std::max(run, 0.0) + solution.k_plus.continuous_step[n] + expect_children(weights, up);
      cert.h_prime[n] = std::max(-run, 0.0) + solution.k_minus.continuous_step[n] + expect_children(weights, down);
      const std::span<const double> hc(cert.h.values().data() + c0, b);
      const std::span<const double> hpc(cert.h_prime.values().data() + c0, b);
      cert.defect[n] = cert.h[n] - expect_children(weights, hc);
      cert.defect_prime[n] = cert.h_prime[n] - expect_children(weights, hpc);
      const double scale = std::max(1.0, cert.h[n] + cert.h_prime[n]);
      cert.worst_defect = std::min({cert.worst_defect, cert.defect[n] / scale, cert.defect_prime[n] / scale});
    }
    if (cert.h[n] < 0.0 || cert.h_prime[n] < 0.0) cert.nonnegative = false;
    const double diff = cert.h[n] - cert.h_prime[n];
    // h and h' accumulate sums of K, so rounding in h - h' grows with them
    const double scale = std::max(1.0, cert.h[n] + cert.h_prime[n]);
    cert.worst_sandwich =
        std::min({cert.worst_sandwich, (diff - barriers.lower[n]) / scale, (barriers.upper[n] - diff) / scale});
  }
  return cert;
}

}  // namespace rbsde
