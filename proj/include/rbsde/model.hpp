#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rbsde/lattice.hpp"

namespace rbsde {

/// Variables a scalar form may reference.
struct FormPoint {
  double t = 0.0;
  double x = 0.0;
  double e = 0.0;
  double u = 0.0;
  double v = 0.0;
  std::size_t u_index = 0;
  std::size_t v_index = 0;
};

/// Closed polynomial form used for barriers, terminal values, state
/// coefficients and game callbacks: sum of coefficient * monomial, where a
/// monomial is a word over {t, x, e, u, v} ("1" is the constant), plus an
/// optional (u, v)-indexed table, then an optional floor/cap.
struct ScalarForm {
  std::map<std::string, double> terms;
  std::vector<std::vector<double>> table;
  std::optional<double> floor;
  std::optional<double> cap;

  static ScalarForm constant(double c);
  /// Throws UnknownForm for a monomial letter outside {t, x, e, u, v}.
  double operator()(const FormPoint& p) const;
  /// Letters used by any term (table counts as "uv").
  bool uses(char var) const;
};

enum class GeneratorForm { ConstantInState, Affine, LipschitzClip };

/// f(t, x, y, z, v) = level(t, x) + b y + c z + sum_j d_j v_j, optionally
/// clipped to [-clip, clip]. ConstantInState ignores (y, z, v).
struct GeneratorSpec {
  GeneratorForm form = GeneratorForm::ConstantInState;
  ScalarForm level;  // a(t, x)
  double b = 0.0;
  double c = 0.0;
  std::vector<double> d;
  double clip = 0.0;
  double lipschitz = 0.0;  // declared C_f

  /// Throws UnknownForm.
  static GeneratorForm form_from_name(const std::string& name);
  static std::string form_name(GeneratorForm form);

  bool depends_on_solution() const;
  bool depends_on_v() const;
};

/// Throws LayerMismatch when v has the wrong length.
double evaluate_generator(const GeneratorSpec& spec, double t, double x, double y, double z,
                          std::span<const double> v);

/// Barrier declared as time pieces of a form in (t, x), with an optional list
/// of flagged (predictable) jump layers and explicit pre-jump forms.
struct BarrierSpec {
  struct Piece {
    int from_layer = 0;
    ScalarForm form;
  };
  struct Jump {
    int layer = 0;
    std::optional<ScalarForm> pre;
  };
  std::vector<Piece> pieces;
  std::vector<Jump> jumps;

  static BarrierSpec constant(double c);
};

/// Materialized barriers. `*_left` hold the left limits L_{t-}, U_{t-}; they
/// coincide with the values on unflagged layers.
struct BarrierPair {
  AdaptedValues lower;
  AdaptedValues upper;
  AdaptedValues lower_left;
  AdaptedValues upper_left;
  std::vector<bool> flagged;  // per layer, size N+1

  /// No flagged jumps; left limits equal values.
  static BarrierPair plain(const Tree& tree, AdaptedValues lower, AdaptedValues upper);
  bool is_flagged(int layer) const { return flagged[static_cast<std::size_t>(layer)]; }
};

/// Left limit default: the piece in force before the flagged layer, evaluated
/// at (t_k, x). Missing spec means +/- infinity.
BarrierPair materialize_barriers(const Tree& tree, const AdaptedValues& state, const std::optional<BarrierSpec>& lower,
                                 const std::optional<BarrierSpec>& upper);

struct ProblemSpec {
  std::shared_ptr<const Tree> tree;
  AdaptedValues state;  // x per node
  GeneratorSpec generator;
  BarrierPair barriers;
  AdaptedValues terminal;  // xi, terminal layer only
};

struct ValidationCheck {
  std::string name;
  bool passed = true;
  std::string detail;
  double metric = 0.0;
  bool advisory = false;  // reported, but does not fail the report
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;
  bool passed() const;
  const ValidationCheck* find(const std::string& name) const;
};

/// Checks barrier order, strict separation [H] (values and left limits at
/// flagged layers) when `require_separation`, the terminal sandwich, flag
/// placement, and a randomized Lipschitz probe of the generator. Never throws
/// on a failed check.
ValidationReport validate(const ProblemSpec& problem, bool require_separation, std::uint64_t seed = 42);

/// Worst ratio |f - f'| / (|y-y'| + |z-z'| + |v-v'|) over `pairs` random pairs.
double lipschitz_probe(const GeneratorSpec& spec, double horizon, std::size_t marks, std::size_t pairs,
                       std::uint64_t seed);

}  // namespace rbsde
