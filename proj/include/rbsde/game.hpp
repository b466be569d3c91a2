#pragma once

// Zero-sum mixed control/stopping game on the tree. The minimizer picks u in
// A and stops with tau (collecting U); the maximizer picks v in B and stops
// with sigma (paying L). Controls act through a Girsanov change of branch
// weights, never through the tree geometry.

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "rbsde/lattice.hpp"
#include "rbsde/model.hpp"
#include "rbsde/reflect.hpp"

namespace rbsde {

struct ControlGrid {
  std::vector<double> a;  // minimizer's points
  std::vector<double> b;  // maximizer's points
};

/// Callback of (t, x, e, u, v) plus the control indices.
using GameFn = std::function<double(const FormPoint&)>;

struct GameSpec {
  std::shared_ptr<const Tree> tree;
  SigmaFn sigma;
  GammaFn gamma;
  double x0 = 0.0;
  AdaptedValues state;  // forward_state(tree, sigma, gamma, x0)
  GameFn drift;         // f(t, x, u, v)
  GameFn tilt;          // beta(t, e, x, u, v), > -1
  GameFn running;       // h(t, x, u, v)
  ControlGrid controls;
  BarrierPair barriers;
  AdaptedValues terminal;
};

/// Per-node control choice, an index into A or B. Terminal entries are ignored.
using ControlMap = std::vector<std::size_t>;

/// z f / sigma + h + sum_j r_j beta(e_j) lambda_j. Throws SingularSigma.
double hamiltonian(const GameSpec& game, double t, double x, double z, std::span<const double> r,
                   std::size_t u, std::size_t v);

/// The drift that the one-step tilt actually induces on the tree,
/// E[zeta Y] - E[Y] = dt * (H_dt - h):
/// theta z (1 - Lambda dt) + h + sum_j beta_j lambda_j (r_j - dt sum_i lambda_i r_i),
/// theta = f / sigma. Tends to hamiltonian() as dt -> 0.
double lattice_hamiltonian(const GameSpec& game, double t, double x, double z, std::span<const double> r,
                           std::size_t u, std::size_t v);

struct Saddle {
  std::size_t u = 0;
  std::size_t v = 0;
  double value = 0.0;  // infsup
  double infsup = 0.0;
  double supinf = 0.0;
  double gap = 0.0;
};

inline constexpr double kSaddleTol = 1e-12;

/// Rows are u, columns v. u* = first argmin of the row maxima, v* = first
/// argmax of the column minima. When gap <= kSaddleTol the saddle inequalities
/// are checked and a violation throws std::logic_error.
Saddle saddle_of(const std::vector<std::vector<double>>& matrix);

/// saddle_of over the grid of lattice_hamiltonian values.
Saddle saddle_select(const GameSpec& game, double t, double x, double z, std::span<const double> r);

struct GameOracleRecord {
  double supinf = 0.0;
  double infsup = 0.0;
  double y_root = 0.0;
  std::size_t control_pairs = 0;
};

struct GameResult {
  AdaptedValues y;
  AdaptedValues y_left;
  AdaptedValues z;
  std::vector<AdaptedValues> r;
  PushProcess k_plus;
  PushProcess k_minus;
  AdaptedValues hstar;
  ControlMap u_star;
  ControlMap v_star;
  AdaptedValues gap;
  double max_gap = 0.0;
  std::optional<GameOracleRecord> oracle;
};

/// Doubly reflected sweep with generator H* = min_u max_v H. Throws
/// SeparationViolated, SingularSigma.
GameResult solve_game(const GameSpec& game, const Exec& exec = {});

struct DynkinRoutes {
  AdaptedValues tilted;  // R1: reweighted measure, running payoff h
  AdaptedValues base;    // R2: base measure, generator H(u, v)
  double max_diff = 0.0;
};

/// Value of the stopping game under fixed feedback controls, by both routes.
/// Throws DensityNotPositive.
DynkinRoutes dynkin_value(const GameSpec& game, const ControlMap& u_map, const ControlMap& v_map,
                          const Exec& exec = {});

/// Branch weights and running payoff of the controlled measure for one pair of maps.
struct ControlledMeasure {
  BranchWeights weights;
  AdaptedValues running;
};
ControlledMeasure controlled_measure(const GameSpec& game, const ControlMap& u_map, const ControlMap& v_map);

inline constexpr double kMaxControlPairs = 1e6;

/// Exact supinf (max over v-maps of min over u-maps) and infsup of the
/// Dynkin value, each inner value enumerated over stopping-rule pairs under
/// the tilted weights. Throws TooLargeToEnumerate.
GameOracleRecord brute_force_game_oracle(const GameSpec& game, const Exec& exec = {});

/// Enumeration feasibility without running it.
bool game_oracle_feasible(const GameSpec& game);

}  // namespace rbsde
