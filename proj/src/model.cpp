#include "rbsde/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "rbsde/error.hpp"

namespace rbsde {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double variable(const FormPoint& p, char var) {
  switch (var) {
    case 't': return p.t;
    case 'x': return p.x;
    case 'e': return p.e;
    case 'u': return p.u;
    case 'v': return p.v;
    default: throw Error(ErrorKind::UnknownForm, std::string("unknown variable '") + var + "' in form term");
  }
}

const ScalarForm& piece_at(const BarrierSpec& spec, int layer) {
  const BarrierSpec::Piece* chosen = nullptr;
  for (const auto& piece : spec.pieces)
    if (piece.from_layer <= layer && (chosen == nullptr || piece.from_layer >= chosen->from_layer)) chosen = &piece;
  if (chosen == nullptr) throw Error(ErrorKind::InvalidArgument, "barrier has no piece covering layer " + std::to_string(layer));
  return chosen->form;
}

void fill_barrier(const Tree& tree, const AdaptedValues& state, const std::optional<BarrierSpec>& spec, double missing,
                  const std::vector<bool>& flagged, AdaptedValues& value, AdaptedValues& left) {
  value = AdaptedValues(tree, missing);
  left = AdaptedValues(tree, missing);
  if (!spec) return;
  for (int k = 0; k <= tree.steps(); ++k) {
    const ScalarForm& now = piece_at(*spec, k);
    const BarrierSpec::Jump* jump = nullptr;
    for (const auto& j : spec->jumps)
      if (j.layer == k) jump = &j;
    const ScalarForm* before = &now;
    if (flagged[static_cast<std::size_t>(k)] && k > 0) {
      if (jump != nullptr && jump->pre) {
        before = &*jump->pre;
      } else {
        before = &piece_at(*spec, k - 1);
      }
    }
    FormPoint p;
    p.t = tree.time(k);
    for (std::size_t n = tree.layer_begin(k); n < tree.layer_end(k); ++n) {
      p.x = state[n];
      value[n] = now(p);
      left[n] = (before == &now) ? value[n] : (*before)(p);
    }
  }
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

ScalarForm ScalarForm::constant(double c) {
  ScalarForm f;
  f.terms["1"] = c;
  return f;
}

double ScalarForm::operator()(const FormPoint& p) const {
  double acc = 0.0;
  for (const auto& [word, coef] : terms) {
    double mono = 1.0;
    if (word != "1")
      for (char var : word) mono *= variable(p, var);
    acc += coef * mono;
  }
  if (!table.empty()) {
    if (p.u_index >= table.size() || p.v_index >= table[p.u_index].size())
      throw Error(ErrorKind::InvalidArgument, "control index outside the payoff table");
    acc += table[p.u_index][p.v_index];
  }
  if (floor) acc = std::max(acc, *floor);
  if (cap) acc = std::min(acc, *cap);
  return acc;
}

bool ScalarForm::uses(char var) const {
  if (!table.empty() && (var == 'u' || var == 'v')) return true;
  for (const auto& [word, coef] : terms)
    if (coef != 0.0 && word.find(var) != std::string::npos) return true;
  return false;
}

GeneratorForm GeneratorSpec::form_from_name(const std::string& name) {
  if (name == "constant-in-state") return GeneratorForm::ConstantInState;
  if (name == "affine") return GeneratorForm::Affine;
  if (name == "lipschitz-clip") return GeneratorForm::LipschitzClip;
  throw Error(ErrorKind::UnknownForm, "generator form '" + name + "' is not registered");
}

std::string GeneratorSpec::form_name(GeneratorForm form) {
  switch (form) {
    case GeneratorForm::ConstantInState: return "constant-in-state";
    case GeneratorForm::Affine: return "affine";
    case GeneratorForm::LipschitzClip: return "lipschitz-clip";
  }
  return "unknown";
}

bool GeneratorSpec::depends_on_solution() const {
  if (form == GeneratorForm::ConstantInState) return false;
  return b != 0.0 || c != 0.0 || depends_on_v();
}

bool GeneratorSpec::depends_on_v() const {
  if (form == GeneratorForm::ConstantInState) return false;
  return std::any_of(d.begin(), d.end(), [](double dj) { return dj != 0.0; });
}

double evaluate_generator(const GeneratorSpec& spec, double t, double x, double y, double z, std::span<const double> v) {
  FormPoint p;
  p.t = t;
  p.x = x;
  const double level = spec.level(p);
  if (spec.form == GeneratorForm::ConstantInState) return level;
  if (!spec.d.empty() && spec.d.size() != v.size())
    throw Error(ErrorKind::LayerMismatch, "generator has " + std::to_string(spec.d.size()) + " jump coefficients, got " +
                                              std::to_string(v.size()) + " marks");
  double f = level + spec.b * y + spec.c * z;
  for (std::size_t j = 0; j < spec.d.size(); ++j) f += spec.d[j] * v[j];
  if (spec.form == GeneratorForm::LipschitzClip) f = std::clamp(f, -spec.clip, spec.clip);
  return f;
}

BarrierSpec BarrierSpec::constant(double c) {
  BarrierSpec spec;
  spec.pieces.push_back({0, ScalarForm::constant(c)});
  return spec;
}

BarrierPair BarrierPair::plain(const Tree& tree, AdaptedValues lower, AdaptedValues upper) {
  BarrierPair pair;
  pair.lower_left = lower;
  pair.upper_left = upper;
  pair.lower = std::move(lower);
  pair.upper = std::move(upper);
  pair.flagged.assign(static_cast<std::size_t>(tree.steps()) + 1, false);
  return pair;
}

BarrierPair materialize_barriers(const Tree& tree, const AdaptedValues& state, const std::optional<BarrierSpec>& lower,
                                 const std::optional<BarrierSpec>& upper) {
  BarrierPair pair;
  pair.flagged.assign(static_cast<std::size_t>(tree.steps()) + 1, false);
  for (const auto* spec : {&lower, &upper}) {
    if (!*spec) continue;
    for (const auto& jump : (*spec)->jumps) {
      if (jump.layer < 0 || jump.layer > tree.steps())
        throw Error(ErrorKind::InvalidArgument, "flagged jump layer " + std::to_string(jump.layer) + " is off the grid");
      pair.flagged[static_cast<std::size_t>(jump.layer)] = true;
    }
  }
  fill_barrier(tree, state, lower, -kInf, pair.flagged, pair.lower, pair.lower_left);
  fill_barrier(tree, state, upper, kInf, pair.flagged, pair.upper, pair.upper_left);
  return pair;
}

bool ValidationReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const ValidationCheck& c) { return c.passed || c.advisory; });
}

const ValidationCheck* ValidationReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

double lipschitz_probe(const GeneratorSpec& spec, double horizon, std::size_t marks, std::size_t pairs,
                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> when(0.0, horizon);
  double worst = 0.0;
  std::vector<double> v(marks), w(marks);
  for (std::size_t i = 0; i < pairs; ++i) {
    const double t = when(rng);
    const double x = 10.0 * unit(rng);
    // Mix wide and narrow perturbations so clip kinks are crossed.
    const double scale = (i % 2 == 0) ? 10.0 : 0.1;
    const double y = 10.0 * unit(rng), z = 10.0 * unit(rng);
    const double y2 = y + scale * unit(rng), z2 = z + scale * unit(rng);
    double dv2 = 0.0;
    for (std::size_t j = 0; j < marks; ++j) {
      v[j] = 10.0 * unit(rng);
      w[j] = v[j] + scale * unit(rng);
      dv2 += (v[j] - w[j]) * (v[j] - w[j]);
    }
    const double denom = std::abs(y - y2) + std::abs(z - z2) + std::sqrt(dv2);
    if (denom == 0.0) continue;
    const double df = std::abs(evaluate_generator(spec, t, x, y, z, v) - evaluate_generator(spec, t, x, y2, z2, w));
    worst = std::max(worst, df / denom);
  }
  return worst;
}

ValidationReport validate(const ProblemSpec& problem, bool require_separation, std::uint64_t seed) {
  ValidationReport report;
  const Tree& tree = *problem.tree;
  const BarrierPair& bar = problem.barriers;

  {
    ValidationCheck c{"flag_placement", true, "", 0.0};
    if (bar.flagged.size() != static_cast<std::size_t>(tree.steps()) + 1) {
      c.passed = false;
      c.detail = "flag vector does not match the grid";
    } else if (bar.flagged[0]) {
      c.passed = false;
      c.detail = "layer 0 cannot carry a predictable jump";
    }
    report.checks.push_back(c);
  }

  ValidationCheck order{"barrier_order", true, "", 0.0};
  ValidationCheck strict{"strict_separation", true, "", kInf};
  ValidationCheck left{"left_limit_separation", true, "", kInf};
  for (int k = 0; k <= tree.steps(); ++k) {
    const bool flagged = bar.is_flagged(k);
    for (std::size_t n = tree.layer_begin(k); n < tree.layer_end(k); ++n) {
      const double gap = bar.upper[n] - bar.lower[n];
      if (!(bar.lower[n] <= bar.upper[n]) && order.passed) {
        order.passed = false;
        order.detail = "L > U at node '" + tree.node_id(n) + "'";
      }
      if (flagged && !(bar.lower_left[n] <= bar.upper_left[n]) && order.passed) {
        order.passed = false;
        order.detail = "L_{t-} > U_{t-} at node '" + tree.node_id(n) + "'";
      }
      if (gap < strict.metric) strict.metric = gap;
      if (!(bar.lower[n] < bar.upper[n]) && strict.detail.empty())
        strict.detail = "L >= U at node '" + tree.node_id(n) + "'";
      if (flagged) {
        const double lgap = bar.upper_left[n] - bar.lower_left[n];
        if (lgap < left.metric) left.metric = lgap;
        if (!(bar.lower_left[n] < bar.upper_left[n]) && left.detail.empty())
          left.detail = "L_{t-} >= U_{t-} at node '" + tree.node_id(n) + "' (layer " + std::to_string(k) + ")";
      }
    }
  }
  strict.passed = strict.detail.empty();
  left.passed = left.detail.empty();
  if (!require_separation) {
    strict.advisory = true;
    left.advisory = true;
  }
  report.checks.push_back(order);
  report.checks.push_back(strict);
  report.checks.push_back(left);

  {
    ValidationCheck c{"terminal_sandwich", true, "", 0.0};
    const int n_last = tree.steps();
    if (!problem.terminal.covers(n_last)) {
      c.passed = false;
      c.detail = "terminal values missing";
    } else {
      for (std::size_t n = tree.layer_begin(n_last); n < tree.layer_end(n_last); ++n) {
        const double xi = problem.terminal[n];
        if (!std::isfinite(xi) || xi < bar.lower[n] || xi > bar.upper[n]) {
          c.passed = false;
          c.detail = "L_T <= xi <= U_T fails at node '" + tree.node_id(n) + "' (xi = " + fmt(xi) + ")";
          break;
        }
      }
    }
    report.checks.push_back(c);
  }

  {
    ValidationCheck c{"lipschitz_probe", true, "", 0.0};
    c.metric = lipschitz_probe(problem.generator, tree.grid().horizon, tree.mark_count(), 1000, seed);
    const double bound = problem.generator.lipschitz * (1.0 + 1e-9);
    if (c.metric > bound) {
      c.passed = false;
      c.detail = "observed ratio " + fmt(c.metric) + " exceeds declared C_f = " + fmt(problem.generator.lipschitz);
    } else {
      c.detail = "max observed ratio " + fmt(c.metric);
    }
    report.checks.push_back(c);
  }

  {
    ValidationCheck c{"implicit_contraction", true, "", problem.generator.lipschitz * tree.dt()};
    c.advisory = true;
    if (problem.generator.depends_on_solution() && c.metric >= 1.0) {
      c.passed = false;
      c.detail = "C_f * dt >= 1: the per-node implicit solve may not contract; refine the grid";
    }
    report.checks.push_back(c);
  }
  return report;
}

}  // namespace rbsde
