#pragma once

// Run configuration: one JSON document with a versioned schema field. Every
// parse failure is an Error(ConfigParse) whose message starts with the JSON
// path of the offending key, e.g. "/problem/lower/pieces/0/form: ...".

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rbsde/game.hpp"
#include "rbsde/model.hpp"

namespace rbsde {

inline constexpr const char* kConfigSchema = "rbsde-config/1";

struct GameConfig {
  std::vector<double> a;
  std::vector<double> b;
  ScalarForm drift;
  ScalarForm tilt;
  ScalarForm running;
};

struct SolverConfig {
  std::vector<double> penalty_schedule;  // default 2^0..2^20
  double early_stop = 1e-6;
  std::optional<double> alpha;
  double tol = 1e-10;
  int max_iter = 200;
  std::size_t node_cap = kDefaultNodeCap;
};

struct OutputConfig {
  std::string dir = "out";
  std::string format = "json";  // json | csv | both
  std::optional<std::string> plot_path;
};

struct VerifyConfig {
  std::uint64_t seed = 42;
  int snell_instances = 50;
  int dynkin_instances = 50;
  int penalization_instances = 20;
  int comparison_pairs = 20;
  int jump_instances = 20;
  int game_instances = 10;
  int monotone_sequences = 10;
};

struct RunConfig {
  double horizon = 1.0;
  int steps = 1;
  MarkSet marks;
  double x0 = 0.0;
  ScalarForm sigma = ScalarForm::constant(1.0);
  ScalarForm gamma = ScalarForm::constant(0.0);
  GeneratorSpec generator;
  std::optional<BarrierSpec> lower;
  std::optional<BarrierSpec> upper;
  ScalarForm terminal;
  std::optional<GameConfig> game;
  SolverConfig solver;
  OutputConfig output;
  VerifyConfig verify;
};

/// Throws Error(ConfigParse) naming the key path.
RunConfig parse_config(const nlohmann::json& doc);
/// Reads and parses a file; unreadable files and JSON syntax errors are ConfigParse too.
RunConfig load_config(const std::string& path);

/// Canonical form: every field present, defaults filled in, keys sorted.
nlohmann::json to_json(const RunConfig& config);
nlohmann::json to_json(const ScalarForm& form);
nlohmann::json to_json(const BarrierSpec& barrier);

/// FNV-1a 64 of the canonical dump, as 16 hex digits.
std::string config_hash(const RunConfig& config);

std::shared_ptr<const Tree> build_tree(const RunConfig& config, std::optional<std::size_t> node_cap = {});
SigmaFn sigma_fn(const ScalarForm& form);
GammaFn gamma_fn(const ScalarForm& form);

ProblemSpec build_problem(const RunConfig& config, std::optional<std::size_t> node_cap = {},
                          const Exec& exec = {});
/// Throws ConfigParse when the config has no game section.
GameSpec build_game(const RunConfig& config, std::optional<std::size_t> node_cap = {}, const Exec& exec = {});

}  // namespace rbsde
