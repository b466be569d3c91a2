#include "rbsde/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "rbsde/drbsde.hpp"
#include "rbsde/error.hpp"

namespace rbsde {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::ConfigParse, (path.empty() ? std::string("/") : path) + ": " + what);
}

void allow_keys(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
  if (!j.is_object()) fail(path, "expected an object");
  std::set<std::string> known(keys.begin(), keys.end());
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) fail(path + "/" + key, "unknown key");
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "must be finite");
  return v;
}

double number_or(const json& j, const char* key, const std::string& path, double fallback) {
  return j.contains(key) ? number(j.at(key), path + "/" + key) : fallback;
}

int integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<int>();
}

std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

std::vector<double> numbers(const json& j, const std::string& path) {
  if (j.is_number()) return {number(j, path)};
  if (!j.is_array()) fail(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], path + "/" + std::to_string(i)));
  return out;
}

const json& required(const json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) fail(path + "/" + key, "missing required key");
  return j.at(key);
}

ScalarForm parse_form(const json& j, const std::string& path) {
  if (j.is_number()) return ScalarForm::constant(number(j, path));
  allow_keys(j, path, {"terms", "table", "floor", "cap"});
  ScalarForm form;
  if (j.contains("terms")) {
    const json& terms = j.at("terms");
    if (!terms.is_object()) fail(path + "/terms", "expected an object of monomial -> coefficient");
    for (const auto& [word, coef] : terms.items()) {
      const std::string at = path + "/terms/" + word;
      if (word.empty()) fail(at, "empty monomial");
      if (word != "1")
        for (char c : word)
          if (std::string("txeuv").find(c) == std::string::npos)
            fail(at, std::string("unknown variable '") + c + "' (allowed: t x e u v, or \"1\")");
      form.terms[word] = number(coef, at);
    }
  }
  if (j.contains("table")) {
    const json& table = j.at("table");
    if (!table.is_array()) fail(path + "/table", "expected an array of rows");
    for (std::size_t i = 0; i < table.size(); ++i)
      form.table.push_back(numbers(table[i], path + "/table/" + std::to_string(i)));
  }
  if (j.contains("floor")) form.floor = number(j.at("floor"), path + "/floor");
  if (j.contains("cap")) form.cap = number(j.at("cap"), path + "/cap");
  return form;
}

BarrierSpec parse_barrier(const json& j, const std::string& path) {
  if (j.is_number() || (j.is_object() && !j.contains("pieces"))) {
    BarrierSpec spec;
    spec.pieces.push_back({0, parse_form(j, path)});
    return spec;
  }
  allow_keys(j, path, {"pieces", "jumps"});
  BarrierSpec spec;
  const json& pieces = j.at("pieces");
  if (!pieces.is_array() || pieces.empty()) fail(path + "/pieces", "expected a non-empty array");
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const std::string at = path + "/pieces/" + std::to_string(i);
    allow_keys(pieces[i], at, {"from", "form"});
    BarrierSpec::Piece piece;
    piece.from_layer = pieces[i].contains("from") ? integer(pieces[i].at("from"), at + "/from") : 0;
    piece.form = parse_form(required(pieces[i], "form", at), at + "/form");
    spec.pieces.push_back(std::move(piece));
  }
  bool from_zero = false;
  for (const auto& piece : spec.pieces) from_zero = from_zero || piece.from_layer == 0;
  if (!from_zero) fail(path + "/pieces", "one piece must start at layer 0");
  if (j.contains("jumps")) {
    const json& jumps = j.at("jumps");
    if (!jumps.is_array()) fail(path + "/jumps", "expected an array");
    for (std::size_t i = 0; i < jumps.size(); ++i) {
      const std::string at = path + "/jumps/" + std::to_string(i);
      allow_keys(jumps[i], at, {"layer", "pre"});
      BarrierSpec::Jump jump;
      jump.layer = integer(required(jumps[i], "layer", at), at + "/layer");
      if (jumps[i].contains("pre")) jump.pre = parse_form(jumps[i].at("pre"), at + "/pre");
      spec.jumps.push_back(std::move(jump));
    }
  }
  return spec;
}

GeneratorSpec parse_generator(const json& j, const std::string& path) {
  allow_keys(j, path, {"form", "level", "b", "c", "d", "clip", "lipschitz"});
  GeneratorSpec g;
  try {
    g.form = GeneratorSpec::form_from_name(text(required(j, "form", path), path + "/form"));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigParse) throw;
    fail(path + "/form", e.what());
  }
  g.level = j.contains("level") ? parse_form(j.at("level"), path + "/level") : ScalarForm::constant(0.0);
  g.b = number_or(j, "b", path, 0.0);
  g.c = number_or(j, "c", path, 0.0);
  if (j.contains("d")) g.d = numbers(j.at("d"), path + "/d");
  g.clip = number_or(j, "clip", path, 0.0);
  if (g.form == GeneratorForm::LipschitzClip && !(g.clip > 0.0)) fail(path + "/clip", "lipschitz-clip needs clip > 0");
  // Smallest constant the affine part guarantees for the sum-of-norms metric.
  double dnorm = 0.0;
  for (double dj : g.d) dnorm += dj * dj;
  const double declared = g.form == GeneratorForm::ConstantInState ? 0.0 : std::max({std::abs(g.b), std::abs(g.c), std::sqrt(dnorm)});
  g.lipschitz = number_or(j, "lipschitz", path, declared);
  if (g.lipschitz < 0.0) fail(path + "/lipschitz", "must be >= 0");
  return g;
}

template <typename T>
T count_or(const json& j, const char* key, const std::string& path, T fallback) {
  if (!j.contains(key)) return fallback;
  const int v = integer(j.at(key), path + "/" + key);
  if (v < 0) fail(path + "/" + key, "must be >= 0");
  return static_cast<T>(v);
}

}  // namespace

RunConfig parse_config(const json& doc) {
  allow_keys(doc, "", {"schema", "grid", "marks", "state", "problem", "game", "solver", "output", "verify"});
  const std::string schema = text(required(doc, "schema", ""), "/schema");
  if (schema != kConfigSchema) fail("/schema", "unsupported schema '" + schema + "', expected " + kConfigSchema);

  RunConfig cfg;
  const json& grid = required(doc, "grid", "");
  allow_keys(grid, "/grid", {"T", "N"});
  cfg.horizon = number(required(grid, "T", "/grid"), "/grid/T");
  cfg.steps = integer(required(grid, "N", "/grid"), "/grid/N");
  if (!(cfg.horizon > 0.0)) fail("/grid/T", "must be > 0");
  if (cfg.steps < 1) fail("/grid/N", "must be >= 1");

  if (doc.contains("marks")) {
    const json& marks = doc.at("marks");
    if (!marks.is_array()) fail("/marks", "expected an array");
    for (std::size_t i = 0; i < marks.size(); ++i) {
      const std::string at = "/marks/" + std::to_string(i);
      allow_keys(marks[i], at, {"e", "lambda"});
      Mark mark;
      mark.point = numbers(required(marks[i], "e", at), at + "/e");
      mark.rate = number(required(marks[i], "lambda", at), at + "/lambda");
      if (!(mark.rate > 0.0)) fail(at + "/lambda", "must be > 0");
      cfg.marks.marks.push_back(std::move(mark));
    }
  }

  if (doc.contains("state")) {
    const json& state = doc.at("state");
    allow_keys(state, "/state", {"x0", "sigma", "gamma"});
    cfg.x0 = number_or(state, "x0", "/state", 0.0);
    if (state.contains("sigma")) cfg.sigma = parse_form(state.at("sigma"), "/state/sigma");
    if (state.contains("gamma")) cfg.gamma = parse_form(state.at("gamma"), "/state/gamma");
  }

  if (doc.contains("problem")) {
    const json& problem = doc.at("problem");
    allow_keys(problem, "/problem", {"generator", "lower", "upper", "terminal"});
    if (problem.contains("generator")) cfg.generator = parse_generator(problem.at("generator"), "/problem/generator");
    if (problem.contains("lower") && !problem.at("lower").is_null())
      cfg.lower = parse_barrier(problem.at("lower"), "/problem/lower");
    if (problem.contains("upper") && !problem.at("upper").is_null())
      cfg.upper = parse_barrier(problem.at("upper"), "/problem/upper");
    cfg.terminal = parse_form(required(problem, "terminal", "/problem"), "/problem/terminal");
    if (!cfg.generator.d.empty() && cfg.generator.d.size() != cfg.marks.size())
      fail("/problem/generator/d", "needs one coefficient per mark");
  } else {
    cfg.terminal = ScalarForm::constant(0.0);
  }

  if (doc.contains("game")) {
    const json& game = doc.at("game");
    allow_keys(game, "/game", {"controls", "drift", "tilt", "running"});
    const json& controls = required(game, "controls", "/game");
    allow_keys(controls, "/game/controls", {"A", "B"});
    GameConfig g;
    g.a = numbers(required(controls, "A", "/game/controls"), "/game/controls/A");
    g.b = numbers(required(controls, "B", "/game/controls"), "/game/controls/B");
    if (g.a.empty()) fail("/game/controls/A", "must be non-empty");
    if (g.b.empty()) fail("/game/controls/B", "must be non-empty");
    g.drift = game.contains("drift") ? parse_form(game.at("drift"), "/game/drift") : ScalarForm::constant(0.0);
    g.tilt = game.contains("tilt") ? parse_form(game.at("tilt"), "/game/tilt") : ScalarForm::constant(0.0);
    g.running = game.contains("running") ? parse_form(game.at("running"), "/game/running") : ScalarForm::constant(0.0);
    cfg.game = std::move(g);
  }

  if (doc.contains("solver")) {
    const json& s = doc.at("solver");
    allow_keys(s, "/solver", {"penalty_schedule", "early_stop", "alpha", "tol", "max_iter", "node_cap"});
    if (s.contains("penalty_schedule")) cfg.solver.penalty_schedule = numbers(s.at("penalty_schedule"), "/solver/penalty_schedule");
    cfg.solver.early_stop = number_or(s, "early_stop", "/solver", cfg.solver.early_stop);
    if (s.contains("alpha") && !s.at("alpha").is_null()) cfg.solver.alpha = number(s.at("alpha"), "/solver/alpha");
    cfg.solver.tol = number_or(s, "tol", "/solver", cfg.solver.tol);
    if (!(cfg.solver.tol > 0.0)) fail("/solver/tol", "must be > 0");
    cfg.solver.max_iter = count_or<int>(s, "max_iter", "/solver", cfg.solver.max_iter);
    cfg.solver.node_cap = count_or<std::size_t>(s, "node_cap", "/solver", cfg.solver.node_cap);
  }
  if (cfg.solver.penalty_schedule.empty()) cfg.solver.penalty_schedule = default_penalty_schedule();
  for (std::size_t i = 1; i < cfg.solver.penalty_schedule.size(); ++i)
    if (!(cfg.solver.penalty_schedule[i] > cfg.solver.penalty_schedule[i - 1]))
      fail("/solver/penalty_schedule/" + std::to_string(i), "schedule must be strictly increasing");

  if (doc.contains("output")) {
    const json& o = doc.at("output");
    allow_keys(o, "/output", {"dir", "format", "plot_path"});
    if (o.contains("dir")) cfg.output.dir = text(o.at("dir"), "/output/dir");
    if (o.contains("format")) cfg.output.format = text(o.at("format"), "/output/format");
    if (cfg.output.format != "json" && cfg.output.format != "csv" && cfg.output.format != "both")
      fail("/output/format", "expected json, csv or both");
    if (o.contains("plot_path") && !o.at("plot_path").is_null())
      cfg.output.plot_path = text(o.at("plot_path"), "/output/plot_path");
  }

  if (doc.contains("verify")) {
    const json& v = doc.at("verify");
    allow_keys(v, "/verify", {"seed", "snell_instances", "dynkin_instances", "penalization_instances",
                              "comparison_pairs", "jump_instances", "game_instances", "monotone_sequences"});
    VerifyConfig& vc = cfg.verify;
    if (v.contains("seed")) {
      if (!v.at("seed").is_number_unsigned()) fail("/verify/seed", "expected a non-negative integer");
      vc.seed = v.at("seed").get<std::uint64_t>();
    }
    vc.snell_instances = count_or<int>(v, "snell_instances", "/verify", vc.snell_instances);
    vc.dynkin_instances = count_or<int>(v, "dynkin_instances", "/verify", vc.dynkin_instances);
    vc.penalization_instances = count_or<int>(v, "penalization_instances", "/verify", vc.penalization_instances);
    vc.comparison_pairs = count_or<int>(v, "comparison_pairs", "/verify", vc.comparison_pairs);
    vc.jump_instances = count_or<int>(v, "jump_instances", "/verify", vc.jump_instances);
    vc.game_instances = count_or<int>(v, "game_instances", "/verify", vc.game_instances);
    vc.monotone_sequences = count_or<int>(v, "monotone_sequences", "/verify", vc.monotone_sequences);
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigParse, path + ": cannot open config file");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ConfigParse, path + ": " + e.what());
  }
  return parse_config(doc);
}

json to_json(const ScalarForm& form) {
  json j = json::object();
  j["terms"] = json::object();
  for (const auto& [word, coef] : form.terms) j["terms"][word] = coef;
  if (!form.table.empty()) j["table"] = form.table;
  if (form.floor) j["floor"] = *form.floor;
  if (form.cap) j["cap"] = *form.cap;
  return j;
}

json to_json(const BarrierSpec& barrier) {
  json j;
  j["pieces"] = json::array();
  for (const auto& piece : barrier.pieces) j["pieces"].push_back({{"from", piece.from_layer}, {"form", to_json(piece.form)}});
  j["jumps"] = json::array();
  for (const auto& jump : barrier.jumps) {
    json e{{"layer", jump.layer}};
    if (jump.pre) e["pre"] = to_json(*jump.pre);
    j["jumps"].push_back(std::move(e));
  }
  return j;
}

json to_json(const RunConfig& cfg) {
  json j;
  j["schema"] = kConfigSchema;
  j["grid"] = {{"T", cfg.horizon}, {"N", cfg.steps}};
  j["marks"] = json::array();
  for (const auto& mark : cfg.marks.marks) j["marks"].push_back({{"e", mark.point}, {"lambda", mark.rate}});
  j["state"] = {{"x0", cfg.x0}, {"sigma", to_json(cfg.sigma)}, {"gamma", to_json(cfg.gamma)}};
  json gen{{"form", GeneratorSpec::form_name(cfg.generator.form)},
           {"level", to_json(cfg.generator.level)},
           {"b", cfg.generator.b},
           {"c", cfg.generator.c},
           {"d", cfg.generator.d},
           {"clip", cfg.generator.clip},
           {"lipschitz", cfg.generator.lipschitz}};
  j["problem"] = {{"generator", gen},
                  {"lower", cfg.lower ? to_json(*cfg.lower) : json()},
                  {"upper", cfg.upper ? to_json(*cfg.upper) : json()},
                  {"terminal", to_json(cfg.terminal)}};
  if (cfg.game) {
    j["game"] = {{"controls", {{"A", cfg.game->a}, {"B", cfg.game->b}}},
                 {"drift", to_json(cfg.game->drift)},
                 {"tilt", to_json(cfg.game->tilt)},
                 {"running", to_json(cfg.game->running)}};
  }
  j["solver"] = {{"penalty_schedule", cfg.solver.penalty_schedule},
                 {"early_stop", cfg.solver.early_stop},
                 {"alpha", cfg.solver.alpha ? json(*cfg.solver.alpha) : json()},
                 {"tol", cfg.solver.tol},
                 {"max_iter", cfg.solver.max_iter},
                 {"node_cap", cfg.solver.node_cap}};
  j["output"] = {{"dir", cfg.output.dir},
                 {"format", cfg.output.format},
                 {"plot_path", cfg.output.plot_path ? json(*cfg.output.plot_path) : json()}};
  const VerifyConfig& v = cfg.verify;
  j["verify"] = {{"seed", v.seed},
                 {"snell_instances", v.snell_instances},
                 {"dynkin_instances", v.dynkin_instances},
                 {"penalization_instances", v.penalization_instances},
                 {"comparison_pairs", v.comparison_pairs},
                 {"jump_instances", v.jump_instances},
                 {"game_instances", v.game_instances},
                 {"monotone_sequences", v.monotone_sequences}};
  return j;
}

std::string config_hash(const RunConfig& config) {
  // The output section only says where results go; it does not change them.
  json canonical = to_json(config);
  canonical.erase("output");
  const std::string text = canonical.dump();
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::shared_ptr<const Tree> build_tree(const RunConfig& config, std::optional<std::size_t> node_cap) {
  return std::make_shared<const Tree>(TimeGrid::make(config.horizon, config.steps), config.marks,
                                      node_cap.value_or(config.solver.node_cap));
}

SigmaFn sigma_fn(const ScalarForm& form) {
  return [form](double t, double x) {
    FormPoint p;
    p.t = t;
    p.x = x;
    return form(p);
  };
}

GammaFn gamma_fn(const ScalarForm& form) {
  return [form](double t, std::span<const double> e, double x) {
    FormPoint p;
    p.t = t;
    p.x = x;
    p.e = e.empty() ? 0.0 : e.front();
    return form(p);
  };
}

namespace {

AdaptedValues terminal_values(const Tree& tree, const AdaptedValues& state, const ScalarForm& form) {
  const int n = tree.steps();
  AdaptedValues xi(tree, n, n);
  FormPoint p;
  p.t = tree.time(n);
  for (std::size_t node = tree.layer_begin(n); node < tree.layer_end(n); ++node) {
    p.x = state[node];
    xi[node] = form(p);
  }
  return xi;
}

}  // namespace

ProblemSpec build_problem(const RunConfig& config, std::optional<std::size_t> node_cap, const Exec& exec) {
  ProblemSpec problem;
  problem.tree = build_tree(config, node_cap);
  const Tree& tree = *problem.tree;
  problem.state = forward_state(tree, sigma_fn(config.sigma), gamma_fn(config.gamma), config.x0, exec);
  problem.generator = config.generator;
  problem.barriers = materialize_barriers(tree, problem.state, config.lower, config.upper);
  problem.terminal = terminal_values(tree, problem.state, config.terminal);
  return problem;
}

GameSpec build_game(const RunConfig& config, std::optional<std::size_t> node_cap, const Exec& exec) {
  if (!config.game) throw Error(ErrorKind::ConfigParse, "/game: missing game section");
  const ProblemSpec problem = build_problem(config, node_cap, exec);
  GameSpec game;
  game.tree = problem.tree;
  game.sigma = sigma_fn(config.sigma);
  game.gamma = gamma_fn(config.gamma);
  game.x0 = config.x0;
  game.state = problem.state;
  auto wrap = [](const ScalarForm& form) -> GameFn { return [form](const FormPoint& p) { return form(p); }; };
  game.drift = wrap(config.game->drift);
  game.tilt = wrap(config.game->tilt);
  game.running = wrap(config.game->running);
  game.controls = {config.game->a, config.game->b};
  game.barriers = problem.barriers;
  game.terminal = problem.terminal;
  return game;
}

}  // namespace rbsde
