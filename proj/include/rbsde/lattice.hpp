#pragma once

// Finite filtration for a Brownian motion plus a marked point process: a
// non-recombining tree whose nodes branch into up, down and one child per
// retained mark. Diffusion and jump never share a branch, so the one-step
// martingale representation has exactly as many unknowns as children.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rbsde/parallel.hpp"

namespace rbsde {

struct TimeGrid {
  double horizon = 1.0;
  int steps = 1;

  /// Throws InvalidArgument unless steps >= 1 and horizon > 0.
  static TimeGrid make(double horizon, int steps);

  double dt() const { return horizon / steps; }
  double time(int layer) const { return layer == steps ? horizon : layer * dt(); }
};

struct Mark {
  std::vector<double> point;  // e_j
  double rate = 0.0;          // lambda_j, per unit time
};

struct MarkSet {
  std::vector<Mark> marks;

  std::size_t size() const { return marks.size(); }
  double total_rate() const;
};

inline constexpr std::size_t kDefaultNodeCap = 2'000'000;

/// Branch labels: 0 = up, 1 = down, 2 + j = mark j.
inline constexpr std::size_t kUp = 0;
inline constexpr std::size_t kDown = 1;
inline constexpr std::size_t mark_branch(std::size_t j) { return 2 + j; }

class Tree {
 public:
  /// Throws IntensityTooLarge if (sum lambda) * dt >= 1, SizeOverflow if the
  /// node count exceeds `node_cap`.
  Tree(TimeGrid grid, MarkSet marks, std::size_t node_cap = kDefaultNodeCap);

  const TimeGrid& grid() const { return grid_; }
  const MarkSet& marks() const { return marks_; }
  std::size_t mark_count() const { return marks_.size(); }
  std::size_t branching() const { return marks_.size() + 2; }
  int steps() const { return grid_.steps; }
  double dt() const { return grid_.dt(); }
  double time(int layer) const { return grid_.time(layer); }

  std::size_t node_count() const { return parent_.size(); }
  std::size_t layer_begin(int layer) const { return offsets_[static_cast<std::size_t>(layer)]; }
  std::size_t layer_end(int layer) const { return offsets_[static_cast<std::size_t>(layer) + 1]; }
  std::size_t layer_size(int layer) const { return layer_end(layer) - layer_begin(layer); }
  int layer_of(std::size_t node) const { return layer_[node]; }
  bool is_terminal(std::size_t node) const { return layer_[node] == grid_.steps; }

  /// Global index of child `branch` of `node`; children of one node are
  /// contiguous and ordered by branch label.
  std::size_t child(std::size_t node, std::size_t branch) const {
    const int k = layer_[node];
    return layer_begin(k + 1) + (node - layer_begin(k)) * branching() + branch;
  }
  std::size_t first_child(std::size_t node) const { return child(node, 0); }
  /// -1 for the root.
  std::int64_t parent(std::size_t node) const { return parent_[node]; }
  std::size_t branch(std::size_t node) const { return branch_[node]; }

  /// Base one-step weights, identical at every node.
  std::span<const double> base_weights() const { return base_weights_; }
  /// Diffusion increment carried by a branch: +sqrt(dt), -sqrt(dt) or 0.
  double increment(std::size_t branch) const { return increments_[branch]; }
  /// Compensated mark indicator 1{branch = mark j} - lambda_j dt.
  double compensated_mark(std::size_t branch, std::size_t j) const {
    return (branch == mark_branch(j) ? 1.0 : 0.0) - marks_.marks[j].rate * dt();
  }

  /// Path string over {u, d, 1..m}; the root is the empty string. Marks
  /// beyond 9 are bracketed, e.g. "u[12]".
  std::string node_id(std::size_t node) const;
  /// Nodes from the root to `node`, inclusive.
  std::vector<std::size_t> path_to(std::size_t node) const;

  /// Sum_{k<=N} b^k, or 0 when it exceeds `cap`.
  static std::size_t count_nodes(int steps, std::size_t branching, std::size_t cap);

 private:
  TimeGrid grid_;
  MarkSet marks_;
  std::vector<std::size_t> offsets_;
  std::vector<std::int64_t> parent_;
  std::vector<std::uint16_t> branch_;
  std::vector<std::int32_t> layer_;
  std::vector<double> base_weights_;
  std::vector<double> increments_;
};

/// One real value per node over a contiguous range of layers.
class AdaptedValues {
 public:
  AdaptedValues() = default;
  AdaptedValues(const Tree& tree, int first_layer, int last_layer, double fill = 0.0);
  /// All layers.
  explicit AdaptedValues(const Tree& tree, double fill = 0.0)
      : AdaptedValues(tree, 0, tree.steps(), fill) {}

  int first_layer() const { return first_; }
  int last_layer() const { return last_; }
  bool covers(int layer) const { return layer >= first_ && layer <= last_; }
  std::size_t size() const { return values_.size(); }

  double& operator[](std::size_t node) { return values_[node - base_]; }
  double operator[](std::size_t node) const { return values_[node - base_]; }

  std::span<double> layer(const Tree& tree, int k);
  std::span<const double> layer(const Tree& tree, int k) const;
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

 private:
  int first_ = 0;
  int last_ = -1;
  std::size_t base_ = 0;
  std::vector<double> values_;
};

/// Per-node branch weights on the non-terminal layers. The base measure is
/// stored once; a reweighted measure stores one row per node.
class BranchWeights {
 public:
  static BranchWeights base(const Tree& tree);
  static BranchWeights per_node(const Tree& tree, std::vector<double> rows);

  std::span<const double> at(std::size_t node) const {
    if (uniform_) return {rows_.data(), width_};
    return {rows_.data() + node * width_, width_};
  }
  bool is_base() const { return uniform_; }

 private:
  std::vector<double> rows_;
  std::size_t width_ = 0;
  bool uniform_ = true;
};

/// Exact E[. | node] for every node of `layer` from values on `layer + 1`.
/// Throws LayerMismatch if `child_values` does not cover `layer + 1`.
AdaptedValues conditional_expectation(const Tree& tree, const AdaptedValues& child_values, int layer,
                                      const BranchWeights& weights, const Exec& exec = {});

/// Probability of reaching each node from the root under `weights`.
AdaptedValues node_probabilities(const Tree& tree, const BranchWeights& weights);

/// Fixed-order weighted mean over one node's children.
double expect_children(std::span<const double> weights, std::span<const double> children);

struct Representation {
  double mean = 0.0;
  double z = 0.0;
  std::vector<double> v;  // one per mark
};

/// Unique (a, Z, V) with a + Z dB(c) + sum_j V_j (1{c=j} - lambda_j dt) = y(c)
/// for every child c. Throws SingularSystem if dt is not positive and
/// LayerMismatch on a size mismatch.
Representation represent_increment(const Tree& tree, std::span<const double> children);

/// Same, for the children of `node` read from `values`.
Representation represent_increment(const Tree& tree, std::size_t node, const AdaptedValues& values);

/// One-step Girsanov densities zeta(c) = 1 + theta dB(c) + sum_j beta_j (1{c=j} - lambda_j dt).
/// Throws DensityNotPositive naming the branch.
std::vector<double> tilt_density(const Tree& tree, double theta, std::span<const double> beta);

/// New weight(c) = p(c) zeta(c) per node. `theta` must cover the non-terminal
/// layers; `beta` holds one AdaptedValues per mark. Throws DensityNotPositive
/// with the offending node id and branch.
BranchWeights reweight(const Tree& tree, const AdaptedValues& theta, const std::vector<AdaptedValues>& beta);

using SigmaFn = std::function<double(double t, double x)>;
using GammaFn = std::function<double(double t, std::span<const double> e, double x)>;

/// x(child) = x + sigma dB + gamma(e_j) 1{child=j} - dt sum_j gamma(e_j) lambda_j.
/// Throws NonFiniteState.
AdaptedValues forward_state(const Tree& tree, const SigmaFn& sigma, const GammaFn& gamma, double x0,
                            const Exec& exec = {});

}  // namespace rbsde
