#pragma once

// Two reflecting barriers: the monotone penalization schemes, the clamped
// backward solve, Picard iteration for solution-dependent generators, and
// the first-increase / Mokobodski diagnostics.

#include <optional>
#include <vector>

#include "rbsde/model.hpp"
#include "rbsde/reflect.hpp"
#include "rbsde/snell.hpp"

namespace rbsde {

/// Upper barrier reflected, lower barrier replaced by the penalty n (L - y)^+.
/// The generator must be constant-in-state or affine (InvalidArgument
/// otherwise) so the per-node equation has a closed form.
OneBarrierSolution penalize_increasing(const ProblemSpec& problem, double n, const Exec& exec = {});
/// Lower barrier reflected, upper barrier replaced by -n (y - U)^+.
OneBarrierSolution penalize_decreasing(const ProblemSpec& problem, double n, const Exec& exec = {});

struct PenalizationLevel {
  double n = 0.0;
  AdaptedValues lower_scheme;  // Y^n, increasing in n
  AdaptedValues upper_scheme;  // Y'^n, decreasing in n
  double width = 0.0;          // max over nodes of |Y'^n - Y^n|
};

struct PenalizationTrace {
  std::vector<PenalizationLevel> levels;
  bool stopped_early = false;

  double final_width() const { return levels.empty() ? 0.0 : levels.back().width; }
};

/// n = 2^k for k = 0..20.
std::vector<double> default_penalty_schedule();

/// Runs both schemes at every level and checks Y^n <= Y^{n+1} <= Y'^{n+1} <= Y'^n
/// exactly; stops once the width falls below `early_stop` (0 disables).
/// Throws MonotonicityViolated naming the node, InvalidArgument if the
/// schedule is not strictly increasing.
PenalizationTrace penalization_bracket(const ProblemSpec& problem, const std::vector<double>& schedule,
                                       double early_stop = 0.0, const Exec& exec = {});

/// Doubly reflected solve with the problem's generator (implicit per node).
/// Throws SeparationViolated when [H] fails.
SolutionQuintuple backward_clamped_solve(const ProblemSpec& problem, const Exec& exec = {});
/// Same with a frozen drift g per non-terminal node.
SolutionQuintuple backward_clamped_solve(const ProblemSpec& problem, const AdaptedValues& frozen, const Exec& exec = {});

/// 4 (C_f^2 + C_f) + 1.
double default_alpha(double lipschitz);

/// (sum_k e^{alpha t_k} E[y_k^2] dt)^{1/2} under the base measure.
double alpha_norm(const Tree& tree, const AdaptedValues& y, double alpha);

enum class PicardStart { Lower, Upper };

struct PicardOptions {
  std::optional<double> alpha;  // default_alpha(C_f) when absent
  double tol = 1e-10;
  int max_iter = 200;
  PicardStart start = PicardStart::Lower;
};

struct PicardResult {
  SolutionQuintuple solution;
  double alpha = 0.0;
  std::vector<double> distances;  // ||Y^i - Y^{i-1}||_alpha, i >= 1
  std::vector<double> ratios;     // distances[i] / distances[i-1]
  bool converged = false;
};

/// Iterates the map that freezes (y, Z, V) of the previous iterate inside f.
/// Throws NoContraction after 5 consecutive ratios >= 1.
PicardResult picard_solve(const ProblemSpec& problem, const PicardOptions& options = {}, const Exec& exec = {});

/// First node at or after tau where the continuous push acts, or strictly
/// after tau where a predictable jump push acts; the horizon otherwise.
StoppingRule first_increase_time(const Tree& tree, const PushProcess& k, const StoppingRule& tau);

struct MokobodskiCertificate {
  AdaptedValues h;
  AdaptedValues h_prime;
  AdaptedValues defect;        // h_k - E[h_{k+1}] on covered non-cutoff nodes
  AdaptedValues defect_prime;
  std::vector<bool> covered;   // node is on or before the cutoff along its path
  double worst_defect = 0.0;    // relative to max(1, h + h')
  double worst_sandwich = 0.0;  // most negative of (h - h') - L and U - (h - h'), over max(1, h + h')
  bool nonnegative = true;

  bool passed(double tol = 1e-12) const {
    return nonnegative && worst_defect >= -tol && worst_sandwich >= -tol;
  }
};

/// h = E[Y^+ at cutoff + future K^+ + future f^+ dt], h' the same with
/// negative parts, so h - h' = Y on covered nodes.
MokobodskiCertificate mokobodski_certificate(const Tree& tree, const BarrierPair& barriers,
                                             const SolutionQuintuple& solution, const StoppingRule& cutoff);

}  // namespace rbsde
