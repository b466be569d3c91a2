// Exhaustive stopping oracles. Every stopping rule (or pair of rules) on the
// subtree is enumerated as a bitmask over decision instants and evaluated by a
// plain backward pass; no dynamic-programming shortcut is taken across rules.

#include <algorithm>
#include <cstdint>
#include <limits>

#include "rbsde/error.hpp"
#include "rbsde/snell.hpp"

namespace rbsde {

namespace detail {

struct InstantGraph {
  struct Instant {
    std::size_t node = 0;
    bool left = false;
    bool terminal = false;  // the node's own instant on layer N: forced stop
    int decision = -1;
    std::size_t next = 0;   // left instant: index of the node's own instant
    std::size_t first_successor = 0;  // own instant of a non-terminal node: into `successors`
  };
  std::vector<Instant> instants;  // successors always have larger indices
  std::vector<std::size_t> successors;
  std::size_t decisions = 0;

  static InstantGraph build(const Tree& tree, std::size_t start, const std::vector<bool>* flagged) {
    InstantGraph g;
    const std::size_t b = tree.branching();
    auto is_flagged = [&](std::size_t node) {
      return flagged != nullptr && !flagged->empty() && (*flagged)[static_cast<std::size_t>(tree.layer_of(node))];
    };
    // Breadth-first by layer keeps successor indices larger than their parents.
    std::vector<std::size_t> frontier{start};
    std::vector<std::size_t> pending_links;  // own-instant indices waiting for child entries
    std::vector<std::size_t> entries;        // entry index for each node of the current frontier
    bool root_layer = true;
    while (!frontier.empty()) {
      entries.assign(frontier.size(), 0);
      for (std::size_t i = 0; i < frontier.size(); ++i) {
        const std::size_t node = frontier[i];
        const bool terminal = tree.is_terminal(node);
        if (!root_layer && is_flagged(node)) {
          Instant left;
          left.node = node;
          left.left = true;
          left.decision = static_cast<int>(g.decisions++);
          left.next = g.instants.size() + 1;
          entries[i] = g.instants.size();
          g.instants.push_back(left);
        } else {
          entries[i] = g.instants.size();
        }
        Instant own;
        own.node = node;
        own.terminal = terminal;
        if (!terminal) own.decision = static_cast<int>(g.decisions++);
        g.instants.push_back(own);
      }
      // Link the previous frontier's own instants to these entries.
      for (std::size_t p = 0; p < pending_links.size(); ++p) {
        g.instants[pending_links[p]].first_successor = g.successors.size();
        for (std::size_t c = 0; c < b; ++c) g.successors.push_back(entries[p * b + c]);
      }
      pending_links.clear();
      std::vector<std::size_t> next;
      for (std::size_t i = 0; i < frontier.size(); ++i) {
        const std::size_t node = frontier[i];
        if (tree.is_terminal(node)) continue;
        const std::size_t own = entries[i] + (g.instants[entries[i]].left ? 1 : 0);
        pending_links.push_back(own);
        for (std::size_t c = 0; c < b; ++c) next.push_back(tree.child(node, c));
      }
      frontier = std::move(next);
      root_layer = false;
    }
    return g;
  }
};

}  // namespace detail

namespace {

using detail::InstantGraph;

// Stop/continue choices below the root: every non-terminal node plus every
// pre-jump instant on a flagged layer (including the terminal one).
std::size_t root_decisions(const Tree& tree, const std::vector<bool>* flagged) {
  std::size_t count = 0;
  for (int k = 0; k <= tree.steps(); ++k) {
    if (k < tree.steps()) count += tree.layer_size(k);
    if (k > 0 && flagged != nullptr && !flagged->empty() && (*flagged)[static_cast<std::size_t>(k)])
      count += tree.layer_size(k);
  }
  return count;
}

struct SinglePayoffs {
  const AdaptedValues* payoff;
  const AdaptedValues* left;
  const AdaptedValues* drift;
};

double evaluate_single(const Tree& tree, const InstantGraph& g, const SinglePayoffs& p, const BranchWeights& w,
                       std::uint64_t mask, std::vector<double>& scratch) {
  const double dt = tree.dt();
  const std::size_t b = tree.branching();
  for (std::size_t i = g.instants.size(); i-- > 0;) {
    const auto& in = g.instants[i];
    if (in.terminal) {
      scratch[i] = (*p.payoff)[in.node];
      continue;
    }
    const bool stop = (mask >> in.decision) & 1U;
    if (in.left) {
      scratch[i] = stop ? (*p.left)[in.node] : scratch[in.next];
      continue;
    }
    if (stop) {
      scratch[i] = (*p.payoff)[in.node];
      continue;
    }
    const auto weights = w.at(in.node);
    double acc = 0.0;
    for (std::size_t c = 0; c < b; ++c) acc += weights[c] * scratch[g.successors[in.first_successor + c]];
    scratch[i] = (*p.drift)[in.node] * dt + acc;
  }
  return scratch[0];
}

double evaluate_pair(const Tree& tree, const InstantGraph& g, const DynkinPayoffs& p, const BranchWeights& w,
                     std::uint64_t minimizer, std::uint64_t maximizer, std::vector<double>& scratch) {
  const double dt = tree.dt();
  const std::size_t b = tree.branching();
  for (std::size_t i = g.instants.size(); i-- > 0;) {
    const auto& in = g.instants[i];
    if (in.terminal) {
      scratch[i] = (*p.terminal)[in.node];
      continue;
    }
    const bool tau = (minimizer >> in.decision) & 1U;
    const bool sigma = (maximizer >> in.decision) & 1U;
    if (sigma) {  // sigma <= tau: L, including ties
      scratch[i] = in.left ? (*p.lower_left)[in.node] : (*p.lower)[in.node];
      continue;
    }
    if (tau) {
      scratch[i] = in.left ? (*p.upper_left)[in.node] : (*p.upper)[in.node];
      continue;
    }
    if (in.left) {
      scratch[i] = scratch[in.next];
      continue;
    }
    const auto weights = w.at(in.node);
    double acc = 0.0;
    for (std::size_t c = 0; c < b; ++c) acc += weights[c] * scratch[g.successors[in.first_successor + c]];
    scratch[i] = (*p.drift)[in.node] * dt + acc;
  }
  return scratch[0];
}

}  // namespace

AdaptedValues optimal_stopping_oracle(const Tree& tree, const AdaptedValues& payoff, const AdaptedValues& drift,
                                      OptimizeMode mode, const LeftPayoff& left, const BranchWeights* weights) {
  if (!payoff.covers(0) || !payoff.covers(tree.steps()))
    throw Error(ErrorKind::LayerMismatch, "payoff must cover every layer");
  if (!drift.covers(0) || !drift.covers(tree.steps() - 1))
    throw Error(ErrorKind::LayerMismatch, "drift must cover layers 0..N-1");
  const std::size_t total = root_decisions(tree, left.flagged);
  if (total > kMaxEnumerableInstants)
    throw Error(ErrorKind::TooLargeToEnumerate, std::to_string(total) + " decision instants exceed the cap of " +
                                                     std::to_string(kMaxEnumerableInstants));
  if (left.flagged != nullptr && left.values == nullptr)
    throw Error(ErrorKind::InvalidArgument, "flagged layers need left-limit payoffs");
  const BranchWeights base = BranchWeights::base(tree);
  const BranchWeights& w = weights != nullptr ? *weights : base;
  const SinglePayoffs p{&payoff, left.values, &drift};

  AdaptedValues out(tree);
  std::vector<double> scratch;
  for (std::size_t start = 0; start < tree.node_count(); ++start) {
    if (tree.is_terminal(start)) {
      out[start] = payoff[start];
      continue;
    }
    const InstantGraph g = InstantGraph::build(tree, start, left.flagged);
    scratch.assign(g.instants.size(), 0.0);
    const std::uint64_t rules = std::uint64_t{1} << g.decisions;
    double best = mode == OptimizeMode::Sup ? -std::numeric_limits<double>::infinity()
                                            : std::numeric_limits<double>::infinity();
    for (std::uint64_t mask = 0; mask < rules; ++mask) {
      const double value = evaluate_single(tree, g, p, w, mask, scratch);
      best = mode == OptimizeMode::Sup ? std::max(best, value) : std::min(best, value);
    }
    out[start] = best;
  }
  return out;
}

DynkinEnumerator::DynkinEnumerator(const Tree& tree, const std::vector<bool>& flagged) : tree_(&tree) {
  const std::size_t total = root_decisions(tree, &flagged);
  if (total > kMaxDynkinDecisions)
    throw Error(ErrorKind::TooLargeToEnumerate, std::to_string(total) + " decision instants exceed the cap of " +
                                                     std::to_string(kMaxDynkinDecisions));
  graph_ = std::make_shared<InstantGraph>(InstantGraph::build(tree, 0, &flagged));
}

std::size_t DynkinEnumerator::decision_count() const { return graph_->decisions; }

DynkinOracleValue DynkinEnumerator::evaluate(const DynkinPayoffs& payoffs, const BranchWeights& weights) const {
  const InstantGraph& g = *graph_;
  std::vector<double> scratch(g.instants.size());
  const std::uint64_t rules = std::uint64_t{1} << g.decisions;
  DynkinOracleValue out;
  constexpr double inf = std::numeric_limits<double>::infinity();

  // min over tau of max over sigma; a tau row is abandoned once its running
  // max can no longer beat the best row, which does not change the optimum.
  double best = inf;
  for (std::uint64_t tau = 0; tau < rules; ++tau) {
    double worst = -inf;
    for (std::uint64_t sigma = 0; sigma < rules; ++sigma) {
      worst = std::max(worst, evaluate_pair(*tree_, g, payoffs, weights, tau, sigma, scratch));
      ++out.rule_pairs;
      if (worst >= best) break;
    }
    best = std::min(best, worst);
  }
  out.inf_sup = best;

  best = -inf;
  for (std::uint64_t sigma = 0; sigma < rules; ++sigma) {
    double worst = inf;
    for (std::uint64_t tau = 0; tau < rules; ++tau) {
      worst = std::min(worst, evaluate_pair(*tree_, g, payoffs, weights, tau, sigma, scratch));
      ++out.rule_pairs;
      if (worst <= best) break;
    }
    best = std::max(best, worst);
  }
  out.sup_inf = best;
  return out;
}

DynkinOracleValue dynkin_stopping_oracle(const Tree& tree, const DynkinPayoffs& payoffs, const BranchWeights* weights) {
  for (const AdaptedValues* a : {payoffs.lower, payoffs.upper, payoffs.terminal, payoffs.drift})
    if (a == nullptr) throw Error(ErrorKind::InvalidArgument, "Dynkin payoffs are incomplete");
  static const std::vector<bool> no_flags;
  const std::vector<bool>& flagged = payoffs.flagged != nullptr ? *payoffs.flagged : no_flags;
  DynkinPayoffs p = payoffs;
  if (p.lower_left == nullptr) p.lower_left = p.lower;
  if (p.upper_left == nullptr) p.upper_left = p.upper;
  const DynkinEnumerator enumerator(tree, flagged);
  const BranchWeights base = BranchWeights::base(tree);
  return enumerator.evaluate(p, weights != nullptr ? *weights : base);
}

}  // namespace rbsde
