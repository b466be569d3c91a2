#include "rbsde/lattice.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "rbsde/error.hpp"

namespace rbsde {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::IntensityTooLarge: return "IntensityTooLarge";
    case ErrorKind::SizeOverflow: return "SizeOverflow";
    case ErrorKind::LayerMismatch: return "LayerMismatch";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::DensityNotPositive: return "DensityNotPositive";
    case ErrorKind::NonFiniteState: return "NonFiniteState";
    case ErrorKind::UnknownForm: return "UnknownForm";
    case ErrorKind::ImplicitSolveDiverged: return "ImplicitSolveDiverged";
    case ErrorKind::TooLargeToEnumerate: return "TooLargeToEnumerate";
    case ErrorKind::SeparationViolated: return "SeparationViolated";
    case ErrorKind::MonotonicityViolated: return "MonotonicityViolated";
    case ErrorKind::NoContraction: return "NoContraction";
    case ErrorKind::SingularSigma: return "SingularSigma";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ConfigParse: return "ConfigParse";
  }
  return "Unknown";
}

TimeGrid TimeGrid::make(double horizon, int steps) {
  if (steps < 1) throw Error(ErrorKind::InvalidArgument, "step count must be >= 1");
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw Error(ErrorKind::InvalidArgument, "horizon must be positive and finite");
  return TimeGrid{horizon, steps};
}

double MarkSet::total_rate() const {
  double total = 0.0;
  for (const auto& m : marks) total += m.rate;
  return total;
}

std::size_t Tree::count_nodes(int steps, std::size_t branching, std::size_t cap) {
  std::size_t total = 0;
  std::size_t width = 1;
  for (int k = 0; k <= steps; ++k) {
    total += width;
    if (total > cap) return 0;
    if (k < steps) {
      if (width > cap / branching) return 0;
      width *= branching;
    }
  }
  return total;
}

Tree::Tree(TimeGrid grid, MarkSet marks, std::size_t node_cap) : grid_(grid), marks_(std::move(marks)) {
  if (grid_.steps < 1 || !(grid_.horizon > 0.0))
    throw Error(ErrorKind::InvalidArgument, "grid needs N >= 1 and T > 0");
  for (std::size_t j = 0; j < marks_.size(); ++j) {
    if (!(marks_.marks[j].rate > 0.0))
      throw Error(ErrorKind::InvalidArgument, "mark " + std::to_string(j + 1) + " needs a positive rate");
  }
  const double dt = grid_.dt();
  const double jump_mass = marks_.total_rate() * dt;
  if (jump_mass >= 1.0) {
    std::ostringstream msg;
    msg << "(sum lambda) * dt = " << jump_mass << " must be < 1";
    throw Error(ErrorKind::IntensityTooLarge, msg.str());
  }
  const std::size_t b = branching();
  const std::size_t total = count_nodes(grid_.steps, b, node_cap);
  if (total == 0)
    throw Error(ErrorKind::SizeOverflow, "tree exceeds node cap " + std::to_string(node_cap));

  base_weights_.assign(b, 0.0);
  base_weights_[kUp] = base_weights_[kDown] = 0.5 * (1.0 - jump_mass);
  for (std::size_t j = 0; j < marks_.size(); ++j) base_weights_[mark_branch(j)] = marks_.marks[j].rate * dt;
  increments_.assign(b, 0.0);
  increments_[kUp] = std::sqrt(dt);
  increments_[kDown] = -std::sqrt(dt);

  offsets_.reserve(static_cast<std::size_t>(grid_.steps) + 2);
  parent_.reserve(total);
  branch_.reserve(total);
  layer_.reserve(total);
  offsets_.push_back(0);
  parent_.push_back(-1);
  branch_.push_back(0);
  layer_.push_back(0);
  offsets_.push_back(1);
  for (int k = 0; k < grid_.steps; ++k) {
    for (std::size_t node = offsets_[static_cast<std::size_t>(k)]; node < offsets_[static_cast<std::size_t>(k) + 1];
         ++node) {
      for (std::size_t c = 0; c < b; ++c) {
        parent_.push_back(static_cast<std::int64_t>(node));
        branch_.push_back(static_cast<std::uint16_t>(c));
        layer_.push_back(k + 1);
      }
    }
    offsets_.push_back(parent_.size());
  }
}

std::string Tree::node_id(std::size_t node) const {
  std::string id;
  for (std::size_t n : path_to(node)) {
    if (parent_[n] < 0) continue;
    const std::size_t c = branch_[n];
    if (c == kUp) {
      id += 'u';
    } else if (c == kDown) {
      id += 'd';
    } else {
      const std::size_t j = c - 1;  // 1-based mark label
      if (j <= 9) {
        id += static_cast<char>('0' + j);
      } else {
        id += '[' + std::to_string(j) + ']';
      }
    }
  }
  return id;
}

std::vector<std::size_t> Tree::path_to(std::size_t node) const {
  std::vector<std::size_t> path(static_cast<std::size_t>(layer_[node]) + 1);
  std::int64_t n = static_cast<std::int64_t>(node);
  for (std::size_t i = path.size(); i-- > 0;) {
    path[i] = static_cast<std::size_t>(n);
    n = parent_[static_cast<std::size_t>(n)];
  }
  return path;
}

AdaptedValues::AdaptedValues(const Tree& tree, int first_layer, int last_layer, double fill)
    : first_(first_layer), last_(last_layer) {
  if (first_layer < 0 || last_layer > tree.steps() || first_layer > last_layer)
    throw Error(ErrorKind::LayerMismatch, "invalid layer range");
  base_ = tree.layer_begin(first_layer);
  values_.assign(tree.layer_end(last_layer) - base_, fill);
}

std::span<double> AdaptedValues::layer(const Tree& tree, int k) {
  if (!covers(k)) throw Error(ErrorKind::LayerMismatch, "layer " + std::to_string(k) + " not covered");
  return {values_.data() + (tree.layer_begin(k) - base_), tree.layer_size(k)};
}

std::span<const double> AdaptedValues::layer(const Tree& tree, int k) const {
  if (!covers(k)) throw Error(ErrorKind::LayerMismatch, "layer " + std::to_string(k) + " not covered");
  return {values_.data() + (tree.layer_begin(k) - base_), tree.layer_size(k)};
}

BranchWeights BranchWeights::base(const Tree& tree) {
  BranchWeights w;
  w.rows_.assign(tree.base_weights().begin(), tree.base_weights().end());
  w.width_ = tree.branching();
  w.uniform_ = true;
  return w;
}

BranchWeights BranchWeights::per_node(const Tree& tree, std::vector<double> rows) {
  const std::size_t nonterminal = tree.layer_begin(tree.steps());
  if (rows.size() != nonterminal * tree.branching())
    throw Error(ErrorKind::LayerMismatch, "weight rows must cover every non-terminal node");
  BranchWeights w;
  w.rows_ = std::move(rows);
  w.width_ = tree.branching();
  w.uniform_ = false;
  return w;
}

AdaptedValues node_probabilities(const Tree& tree, const BranchWeights& weights) {
  AdaptedValues prob(tree);
  prob[0] = 1.0;
  for (std::size_t n = 1; n < tree.node_count(); ++n) {
    const auto p = static_cast<std::size_t>(tree.parent(n));
    prob[n] = prob[p] * weights.at(p)[tree.branch(n)];
  }
  return prob;
}

double expect_children(std::span<const double> weights, std::span<const double> children) {
  double acc = 0.0;
  for (std::size_t c = 0; c < weights.size(); ++c) acc += weights[c] * children[c];
  return acc;
}

AdaptedValues conditional_expectation(const Tree& tree, const AdaptedValues& child_values, int layer,
                                      const BranchWeights& weights, const Exec& exec) {
  if (layer < 0 || layer >= tree.steps() || !child_values.covers(layer + 1))
    throw Error(ErrorKind::LayerMismatch, "child values must cover layer " + std::to_string(layer + 1));
  AdaptedValues out(tree, layer, layer);
  const std::size_t begin = tree.layer_begin(layer);
  const std::size_t b = tree.branching();
  parallel_for(exec, tree.layer_size(layer), [&](std::size_t i) {
    const std::size_t node = begin + i;
    const std::size_t c0 = tree.first_child(node);
    double acc = 0.0;
    const auto w = weights.at(node);
    for (std::size_t c = 0; c < b; ++c) acc += w[c] * child_values[c0 + c];
    out[node] = acc;
  });
  return out;
}

Representation represent_increment(const Tree& tree, std::span<const double> children) {
  const std::size_t m = tree.mark_count();
  if (children.size() != m + 2) throw Error(ErrorKind::LayerMismatch, "need one value per branch");
  const double dt = tree.dt();
  if (!(dt > 0.0)) throw Error(ErrorKind::SingularSystem, "dt must be positive");
  // Up and down share the same compensator shift, so their half-sum is the
  // common level c = a - sum_j V_j lambda_j dt and their half-difference is Z.
  Representation r;
  const double level = 0.5 * (children[kUp] + children[kDown]);
  r.z = (children[kUp] - children[kDown]) / (2.0 * std::sqrt(dt));
  r.v.resize(m);
  double shift = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    r.v[j] = children[mark_branch(j)] - level;
    shift += r.v[j] * tree.marks().marks[j].rate * dt;
  }
  r.mean = level + shift;
  return r;
}

Representation represent_increment(const Tree& tree, std::size_t node, const AdaptedValues& values) {
  if (tree.is_terminal(node)) throw Error(ErrorKind::LayerMismatch, "terminal node has no children");
  const std::size_t c0 = tree.first_child(node);
  std::vector<double> children(tree.branching());
  for (std::size_t c = 0; c < children.size(); ++c) children[c] = values[c0 + c];
  return represent_increment(tree, children);
}

std::vector<double> tilt_density(const Tree& tree, double theta, std::span<const double> beta) {
  const std::size_t m = tree.mark_count();
  if (beta.size() != m) throw Error(ErrorKind::LayerMismatch, "need one tilt per mark");
  std::vector<double> zeta(m + 2);
  for (std::size_t c = 0; c < m + 2; ++c) {
    double z = 1.0 + theta * tree.increment(c);
    for (std::size_t j = 0; j < m; ++j) z += beta[j] * tree.compensated_mark(c, j);
    zeta[c] = z;
  }
  return zeta;
}

BranchWeights reweight(const Tree& tree, const AdaptedValues& theta, const std::vector<AdaptedValues>& beta) {
  const int last = tree.steps() - 1;
  if (!theta.covers(0) || !theta.covers(last)) throw Error(ErrorKind::LayerMismatch, "theta must cover layers 0..N-1");
  if (beta.size() != tree.mark_count()) throw Error(ErrorKind::LayerMismatch, "need one beta process per mark");
  for (const auto& bj : beta)
    if (!bj.covers(0) || !bj.covers(last)) throw Error(ErrorKind::LayerMismatch, "beta must cover layers 0..N-1");

  const std::size_t b = tree.branching();
  const std::size_t nonterminal = tree.layer_begin(tree.steps());
  std::vector<double> rows(nonterminal * b);
  const auto base = tree.base_weights();
  std::vector<double> beta_node(tree.mark_count());
  for (std::size_t node = 0; node < nonterminal; ++node) {
    for (std::size_t j = 0; j < beta.size(); ++j) {
      beta_node[j] = beta[j][node];
      if (!(beta_node[j] > -1.0)) {
        std::ostringstream msg;
        msg << "beta_" << j + 1 << " = " << beta_node[j] << " <= -1 at node '" << tree.node_id(node) << "'";
        throw Error(ErrorKind::DensityNotPositive, msg.str());
      }
    }
    const auto zeta = tilt_density(tree, theta[node], beta_node);
    for (std::size_t c = 0; c < b; ++c) {
      if (!(zeta[c] > 0.0)) {
        std::ostringstream msg;
        msg << "density " << zeta[c] << " at node '" << tree.node_id(node) << "' branch " << c
            << "; refine the grid for this drift/tilt";
        throw Error(ErrorKind::DensityNotPositive, msg.str());
      }
      rows[node * b + c] = base[c] * zeta[c];
    }
  }
  return BranchWeights::per_node(tree, std::move(rows));
}

AdaptedValues forward_state(const Tree& tree, const SigmaFn& sigma, const GammaFn& gamma, double x0,
                            const Exec& exec) {
  if (!std::isfinite(x0)) throw Error(ErrorKind::NonFiniteState, "x0 is not finite");
  AdaptedValues x(tree);
  x[0] = x0;
  const std::size_t m = tree.mark_count();
  const std::size_t b = tree.branching();
  const double dt = tree.dt();
  for (int k = 0; k < tree.steps(); ++k) {
    const double t = tree.time(k);
    const std::size_t begin = tree.layer_begin(k);
    parallel_for(exec, tree.layer_size(k), [&](std::size_t i) {
      const std::size_t node = begin + i;
      const double xk = x[node];
      const double s = sigma(t, xk);
      std::vector<double> jumps(m);
      double compensator = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        jumps[j] = gamma(t, tree.marks().marks[j].point, xk);
        compensator += jumps[j] * tree.marks().marks[j].rate;
      }
      compensator *= dt;
      const std::size_t c0 = tree.first_child(node);
      for (std::size_t c = 0; c < b; ++c) {
        double next = xk + s * tree.increment(c) - compensator;
        if (c >= 2) next += jumps[c - 2];
        x[c0 + c] = next;
      }
    });
    for (std::size_t n = tree.layer_begin(k + 1); n < tree.layer_end(k + 1); ++n) {
      if (!std::isfinite(x[n]))
        throw Error(ErrorKind::NonFiniteState, "state is not finite at node '" + tree.node_id(n) + "'");
    }
  }
  return x;
}

}  // namespace rbsde
