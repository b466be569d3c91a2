#include "rbsde/game.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rbsde/error.hpp"
#include "rbsde/snell.hpp"

namespace rbsde {

namespace {

const Tree& tree_of(const GameSpec& game) {
  if (!game.tree) throw Error(ErrorKind::InvalidArgument, "game has no tree");
  if (game.controls.a.empty() || game.controls.b.empty())
    throw Error(ErrorKind::InvalidArgument, "control grids must be non-empty");
  return *game.tree;
}

FormPoint point(const GameSpec& game, double t, double x, std::size_t u, std::size_t v) {
  FormPoint p;
  p.t = t;
  p.x = x;
  p.u = game.controls.a.at(u);
  p.v = game.controls.b.at(v);
  p.u_index = u;
  p.v_index = v;
  return p;
}

double call(const GameFn& fn, const FormPoint& p) { return fn ? fn(p) : 0.0; }

double mark_coordinate(const Mark& mark) { return mark.point.empty() ? 0.0 : mark.point.front(); }

double theta_of(const GameSpec& game, const FormPoint& p) {
  const double s = game.sigma ? game.sigma(p.t, p.x) : 0.0;
  if (s == 0.0 || !std::isfinite(s))
    throw Error(ErrorKind::SingularSigma, "sigma(t, x) is not invertible at t = " + std::to_string(p.t));
  return call(game.drift, p) / s;
}

double tilt_at(const GameSpec& game, FormPoint p, const Mark& mark) {
  p.e = mark_coordinate(mark);
  return call(game.tilt, p);
}

SweepInputs clamped_inputs(const GameSpec& game) {
  SweepInputs in;
  in.tree = game.tree.get();
  in.barriers = &game.barriers;
  in.terminal = &game.terminal;
  return in;
}

}  // namespace

double hamiltonian(const GameSpec& game, double t, double x, double z, std::span<const double> r, std::size_t u,
                   std::size_t v) {
  const Tree& tree = tree_of(game);
  if (r.size() != tree.mark_count()) throw Error(ErrorKind::LayerMismatch, "r must have one entry per mark");
  const FormPoint p = point(game, t, x, u, v);
  double acc = z * theta_of(game, p) + call(game.running, p);
  for (std::size_t j = 0; j < r.size(); ++j) {
    const Mark& mark = tree.marks().marks[j];
    acc += r[j] * tilt_at(game, p, mark) * mark.rate;
  }
  return acc;
}

double lattice_hamiltonian(const GameSpec& game, double t, double x, double z, std::span<const double> r,
                           std::size_t u, std::size_t v) {
  const Tree& tree = tree_of(game);
  if (r.size() != tree.mark_count()) throw Error(ErrorKind::LayerMismatch, "r must have one entry per mark");
  const double dt = tree.dt();
  const FormPoint p = point(game, t, x, u, v);
  double compensator = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) compensator += tree.marks().marks[i].rate * r[i];
  double acc = theta_of(game, p) * z * (1.0 - tree.marks().total_rate() * dt) + call(game.running, p);
  for (std::size_t j = 0; j < r.size(); ++j) {
    const Mark& mark = tree.marks().marks[j];
    acc += tilt_at(game, p, mark) * mark.rate * (r[j] - dt * compensator);
  }
  return acc;
}

Saddle saddle_of(const std::vector<std::vector<double>>& matrix) {
  if (matrix.empty() || matrix.front().empty()) throw Error(ErrorKind::InvalidArgument, "empty Hamiltonian matrix");
  const std::size_t p = matrix.size();
  const std::size_t q = matrix.front().size();
  Saddle s;
  s.infsup = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p; ++i) {
    if (matrix[i].size() != q) throw Error(ErrorKind::InvalidArgument, "ragged Hamiltonian matrix");
    const double row_max = *std::max_element(matrix[i].begin(), matrix[i].end());
    if (row_max < s.infsup) {
      s.infsup = row_max;
      s.u = i;
    }
  }
  s.supinf = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < q; ++j) {
    double col_min = matrix[0][j];
    for (std::size_t i = 1; i < p; ++i) col_min = std::min(col_min, matrix[i][j]);
    if (col_min > s.supinf) {
      s.supinf = col_min;
      s.v = j;
    }
  }
  s.value = s.infsup;
  s.gap = s.infsup - s.supinf;
  if (s.gap <= kSaddleTol) {
    const double at = matrix[s.u][s.v];
    for (std::size_t j = 0; j < q; ++j)
      if (matrix[s.u][j] > at + kSaddleTol) throw std::logic_error("saddle inequality fails in v");
    for (std::size_t i = 0; i < p; ++i)
      if (matrix[i][s.v] < at - kSaddleTol) throw std::logic_error("saddle inequality fails in u");
  }
  return s;
}

Saddle saddle_select(const GameSpec& game, double t, double x, double z, std::span<const double> r) {
  std::vector<std::vector<double>> h(game.controls.a.size(), std::vector<double>(game.controls.b.size()));
  for (std::size_t i = 0; i < h.size(); ++i)
    for (std::size_t j = 0; j < h[i].size(); ++j) h[i][j] = lattice_hamiltonian(game, t, x, z, r, i, j);
  return saddle_of(h);
}

GameResult solve_game(const GameSpec& game, const Exec& exec) {
  const Tree& tree = tree_of(game);
  const double dt = tree.dt();
  const int steps = tree.steps();
  GameResult out;
  out.hstar = AdaptedValues(tree, 0, steps - 1);
  out.gap = AdaptedValues(tree, 0, steps - 1);
  out.u_star.assign(tree.layer_begin(steps), 0);
  out.v_star.assign(tree.layer_begin(steps), 0);

  SweepInputs in = clamped_inputs(game);
  in.drift = [&](std::size_t node, int layer, const Representation& rep) {
    const Saddle s = saddle_select(game, tree.time(layer), game.state[node], rep.z, rep.v);
    out.hstar[node] = s.value;
    out.gap[node] = s.gap;
    out.u_star[node] = s.u;
    out.v_star[node] = s.v;
    return DriftStep{rep.mean + dt * s.value, 1.0, s.value};
  };
  SolutionQuintuple sol = reflected_sweep(in, exec);
  out.y = std::move(sol.y);
  out.y_left = std::move(sol.y_left);
  out.z = std::move(sol.z);
  out.r = std::move(sol.v);
  out.k_plus = std::move(sol.k_plus);
  out.k_minus = std::move(sol.k_minus);
  for (double g : out.gap.values()) out.max_gap = std::max(out.max_gap, g);
  return out;
}

ControlledMeasure controlled_measure(const GameSpec& game, const ControlMap& u_map, const ControlMap& v_map) {
  const Tree& tree = tree_of(game);
  const int steps = tree.steps();
  const std::size_t inner = tree.layer_begin(steps);
  if (u_map.size() < inner || v_map.size() < inner)
    throw Error(ErrorKind::LayerMismatch, "control maps must cover every non-terminal node");
  AdaptedValues theta(tree, 0, steps - 1);
  std::vector<AdaptedValues> beta(tree.mark_count(), AdaptedValues(tree, 0, steps - 1));
  ControlledMeasure out;
  out.running = AdaptedValues(tree, 0, steps - 1);
  for (std::size_t n = 0; n < inner; ++n) {
    const FormPoint p = point(game, tree.time(tree.layer_of(n)), game.state[n], u_map[n], v_map[n]);
    theta[n] = theta_of(game, p);
    out.running[n] = call(game.running, p);
    for (std::size_t j = 0; j < tree.mark_count(); ++j) beta[j][n] = tilt_at(game, p, tree.marks().marks[j]);
  }
  out.weights = reweight(tree, theta, beta);
  return out;
}

DynkinRoutes dynkin_value(const GameSpec& game, const ControlMap& u_map, const ControlMap& v_map,
                          const Exec& exec) {
  const Tree& tree = tree_of(game);
  const double dt = tree.dt();
  const ControlledMeasure measure = controlled_measure(game, u_map, v_map);

  SweepInputs tilted = clamped_inputs(game);
  tilted.weights = &measure.weights;
  tilted.drift = frozen_drift(tree, measure.running);

  SweepInputs base = clamped_inputs(game);
  base.drift = [&](std::size_t node, int layer, const Representation& rep) {
    const double h = lattice_hamiltonian(game, tree.time(layer), game.state[node], rep.z, rep.v, u_map[node],
                                         v_map[node]);
    return DriftStep{rep.mean + dt * h, 1.0, h};
  };

  DynkinRoutes out;
  out.tilted = reflected_sweep(tilted, exec).y;
  out.base = reflected_sweep(base, exec).y;
  for (std::size_t n = 0; n < tree.node_count(); ++n)
    out.max_diff = std::max(out.max_diff, std::abs(out.tilted[n] - out.base[n]));
  return out;
}

namespace {

double map_count(std::size_t choices, std::size_t nodes) {
  return std::pow(static_cast<double>(choices), static_cast<double>(nodes));
}

ControlMap decode(std::size_t index, std::size_t radix, std::size_t nodes) {
  ControlMap map(nodes);
  for (std::size_t n = 0; n < nodes; ++n) {
    map[n] = index % radix;
    index /= radix;
  }
  return map;
}

}  // namespace

bool game_oracle_feasible(const GameSpec& game) {
  const Tree& tree = tree_of(game);
  const std::size_t inner = tree.layer_begin(tree.steps());
  if (map_count(game.controls.a.size(), inner) * map_count(game.controls.b.size(), inner) > kMaxControlPairs)
    return false;
  try {
    DynkinEnumerator probe(tree, game.barriers.flagged);
  } catch (const Error&) {
    return false;
  }
  return true;
}

GameOracleRecord brute_force_game_oracle(const GameSpec& game, const Exec& exec) {
  const Tree& tree = tree_of(game);
  const std::size_t inner = tree.layer_begin(tree.steps());
  const std::size_t p = game.controls.a.size();
  const std::size_t q = game.controls.b.size();
  const double pairs = map_count(p, inner) * map_count(q, inner);
  if (pairs > kMaxControlPairs)
    throw Error(ErrorKind::TooLargeToEnumerate, std::to_string(static_cast<long long>(pairs)) +
                                                     " control-map pairs exceed the cap of 1e6");
  const auto u_maps = static_cast<std::size_t>(map_count(p, inner));
  const auto v_maps = static_cast<std::size_t>(map_count(q, inner));
  const DynkinEnumerator enumerator(tree, game.barriers.flagged);

  std::vector<double> inf_sup(u_maps * v_maps);
  std::vector<double> sup_inf(u_maps * v_maps);
  parallel_for(exec, u_maps * v_maps, [&](std::size_t idx) {
    const std::size_t iu = idx / v_maps;
    const std::size_t iv = idx % v_maps;
    const ControlMap u_map = decode(iu, p, inner);
    const ControlMap v_map = decode(iv, q, inner);
    const ControlledMeasure measure = controlled_measure(game, u_map, v_map);
    DynkinPayoffs payoffs;
    payoffs.lower = &game.barriers.lower;
    payoffs.upper = &game.barriers.upper;
    payoffs.lower_left = &game.barriers.lower_left;
    payoffs.upper_left = &game.barriers.upper_left;
    payoffs.flagged = &game.barriers.flagged;
    payoffs.terminal = &game.terminal;
    payoffs.drift = &measure.running;
    const DynkinOracleValue value = enumerator.evaluate(payoffs, measure.weights);
    inf_sup[idx] = value.inf_sup;
    sup_inf[idx] = value.sup_inf;
  });

  GameOracleRecord out;
  out.control_pairs = u_maps * v_maps;
  out.infsup = std::numeric_limits<double>::infinity();
  for (std::size_t iu = 0; iu < u_maps; ++iu) {
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t iv = 0; iv < v_maps; ++iv) worst = std::max(worst, inf_sup[iu * v_maps + iv]);
    out.infsup = std::min(out.infsup, worst);
  }
  out.supinf = -std::numeric_limits<double>::infinity();
  for (std::size_t iv = 0; iv < v_maps; ++iv) {
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t iu = 0; iu < u_maps; ++iu) worst = std::min(worst, sup_inf[iu * v_maps + iv]);
    out.supinf = std::max(out.supinf, worst);
  }
  return out;
}

}  // namespace rbsde
