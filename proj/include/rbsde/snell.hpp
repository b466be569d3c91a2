#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

#include "rbsde/lattice.hpp"
#include "rbsde/model.hpp"
#include "rbsde/reflect.hpp"

namespace rbsde {

/// Per-node stop/continue decision; the induced stopping time is the first
/// stop along each path, and the terminal layer always stops. On flagged
/// layers `stop_left` adds a decision at the pre-jump instant, which comes
/// before the node's own instant.
struct StoppingRule {
  std::vector<bool> stop;
  std::vector<bool> stop_left;  // empty when the problem has no flagged layers

  /// Stops only at the terminal layer.
  static StoppingRule at_horizon(const Tree& tree);
  /// First node along the path from the root to `leaf` where the rule stops
  /// (the pre-jump instant counts as stopping at that node).
  std::size_t stopping_node(const Tree& tree, std::size_t leaf) const;
};

/// Smallest system dominating `payoff` with Y_k >= E[Y_{k+1}] + drift dt:
/// Y_N = payoff_N, Y_k = max(payoff_k, E[Y_{k+1} | node] + drift_k dt).
AdaptedValues snell_envelope(const Tree& tree, const AdaptedValues& payoff, const AdaptedValues& drift,
                             const Exec& exec = {});

/// One reflecting barrier (U for Side::Upper, L for Side::Lower); the other
/// barrier is ignored. Generator handled by the implicit per-node solve.
OneBarrierSolution solve_one_barrier(const ProblemSpec& problem, Side side, const Exec& exec = {});

enum class OptimizeMode { Sup, Inf };

/// Left-limit payoffs for flagged layers; absent means no pre-jump instants.
struct LeftPayoff {
  const AdaptedValues* values = nullptr;
  const std::vector<bool>* flagged = nullptr;
};

/// Cap on decision instants (non-terminal nodes plus pre-jump instants) for
/// enumeration; the work is 2^d rules per start node.
inline constexpr std::size_t kMaxEnumerableInstants = 22;

/// Exact optimum over every StoppingRule of E[sum drift dt + payoff at stop],
/// per starting node, by enumerating all rules on the node's subtree. Throws
/// TooLargeToEnumerate beyond kMaxEnumerableInstants.
AdaptedValues optimal_stopping_oracle(const Tree& tree, const AdaptedValues& payoff, const AdaptedValues& drift,
                                      OptimizeMode mode, const LeftPayoff& left = {},
                                      const BranchWeights* weights = nullptr);

struct DynkinPayoffs {
  const AdaptedValues* lower = nullptr;  // paid to the maximizer when it stops first or on a tie
  const AdaptedValues* upper = nullptr;  // paid when the minimizer stops strictly first
  const AdaptedValues* lower_left = nullptr;
  const AdaptedValues* upper_left = nullptr;
  const std::vector<bool>* flagged = nullptr;
  const AdaptedValues* terminal = nullptr;
  const AdaptedValues* drift = nullptr;  // running reward per unit time, non-terminal layers
};

struct DynkinOracleValue {
  double inf_sup = 0.0;  // min over minimizer rules of max over maximizer rules
  double sup_inf = 0.0;
  std::size_t rule_pairs = 0;
};

/// Root value of the stopping game J = int drift + U_tau 1[tau<sigma]
/// + L_sigma 1[sigma<=tau, sigma<T] + xi 1[tau=sigma=T], by enumerating every
/// pair of stopping rules. Throws TooLargeToEnumerate.
DynkinOracleValue dynkin_stopping_oracle(const Tree& tree, const DynkinPayoffs& payoffs,
                                         const BranchWeights* weights = nullptr);

namespace detail {
struct InstantGraph;
}

/// Cap on decision instants for the two-player enumeration (4^d rule pairs).
inline constexpr std::size_t kMaxDynkinDecisions = 13;

/// Enumeration of the stopping instants below the root, built once and
/// evaluated under many control-dependent weights and drifts by the game
/// oracle.
class DynkinEnumerator {
 public:
  /// Throws TooLargeToEnumerate.
  DynkinEnumerator(const Tree& tree, const std::vector<bool>& flagged);
  std::size_t decision_count() const;
  DynkinOracleValue evaluate(const DynkinPayoffs& payoffs, const BranchWeights& weights) const;

 private:
  const Tree* tree_;
  std::shared_ptr<const detail::InstantGraph> graph_;
};

}  // namespace rbsde
