// rbsde: command-line driver. One config file in, a result bundle out.
//
//   rbsde solve    cfg.json   two-barrier solve (+ Picard trace, certificate)
//   rbsde penalize cfg.json   penalization bracket
//   rbsde snell    cfg.json   one reflecting barrier (--side upper|lower)
//   rbsde game     cfg.json   controlled game (+ brute-force oracle when small)
//   rbsde verify   cfg.json   acceptance suite
//
// Exit codes: 0 ok, 1 verify failure, 2 config/usage error, 3 validation
// failure, 4 solver error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "rbsde/acceptance.hpp"
#include "rbsde/bundle.hpp"
#include "rbsde/config.hpp"
#include "rbsde/drbsde.hpp"
#include "rbsde/error.hpp"
#include "rbsde/game.hpp"
#include "rbsde/snell.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rbsde;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit { kOk = 0, kVerifyFailed = 1, kParse = 2, kInvalid = 3, kSolver = 4 };

// Validation failures surface as this so main can pick exit 3.
struct ValidationFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string command;
  std::string config;
  std::optional<std::string> out;
  std::optional<std::string> format;
  std::optional<std::string> plot;
  int workers = 1;
  std::optional<std::size_t> node_cap;
  std::optional<std::uint64_t> seed;
  std::string side = "upper";
  bool dump_tree = false;
  bool quiet = false;
};

void write_file(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + path.string());
  out << body;
}

struct Run {
  Options opt;
  RunConfig cfg;
  Exec exec;
  fs::path dir;

  std::size_t cap() const { return opt.node_cap.value_or(cfg.solver.node_cap); }
  std::string format() const { return opt.format.value_or(cfg.output.format); }
  std::optional<std::string> plot_path() const { return opt.plot ? opt.plot : cfg.output.plot_path; }

  json header() const {
    return {{"schema", "rbsde-result/1"}, {"command", opt.command}, {"config_hash", config_hash(cfg)},
            {"version", kVersion}};
  }

  // Bundle plus the optional flattened files.
  void emit(json bundle, const Tree& tree, const AdaptedValues* state, const BarrierPair* barriers,
            const SolutionView* view) {
    fs::create_directories(dir);
    if (view && state && barriers) bundle["nodes"] = nodes_json(tree, *state, *barriers, *view);
    write_file(dir / "result.json", bundle.dump(2) + "\n");
    if (view && (format() == "csv" || format() == "both")) write_file(dir / "solution.csv", solution_csv(tree, *view));
    if (view && barriers && plot_path()) write_file(dir / "plot.csv", plot_csv(tree, *plot_path(), *view, *barriers));
    if (opt.dump_tree) write_file(dir / "tree.json", tree_json(tree).dump(2) + "\n");
  }
};

json tree_summary(const Tree& tree) {
  return {{"T", tree.grid().horizon}, {"N", tree.steps()}, {"marks", tree.mark_count()},
          {"nodes", tree.node_count()}};
}

ProblemSpec checked_problem(Run& run, bool require_separation, json& bundle) {
  ProblemSpec problem;
  try {
    problem = build_problem(run.cfg, run.cap(), run.exec);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigParse) throw;
    throw ValidationFailed(e.what());
  }
  const ValidationReport report = validate(problem, require_separation, run.cfg.verify.seed);
  bundle["validation"] = validation_json(report);
  if (!report.passed()) {
    run.emit(bundle, *problem.tree, nullptr, nullptr, nullptr);
    std::string why;
    for (const auto& c : report.checks)
      if (!c.passed && !c.advisory) why += (why.empty() ? "" : "; ") + c.name + ": " + c.detail;
    throw ValidationFailed(why);
  }
  return problem;
}

json certificate_json(const MokobodskiCertificate& c) {
  return {{"passed", c.passed()}, {"nonnegative", c.nonnegative}, {"worst_defect", c.worst_defect},
          {"worst_sandwich", c.worst_sandwich}, {"h_root", c.h[0]}, {"h_prime_root", c.h_prime[0]}};
}

int cmd_solve(Run& run) {
  json bundle = run.header();
  const ProblemSpec p = checked_problem(run, true, bundle);
  const Tree& tree = *p.tree;
  bundle["tree"] = tree_summary(tree);
  const SolutionQuintuple s = backward_clamped_solve(p, run.exec);
  if (p.generator.depends_on_solution()) {
    PicardOptions po;
    po.alpha = run.cfg.solver.alpha;
    po.tol = run.cfg.solver.tol;
    po.max_iter = run.cfg.solver.max_iter;
    const PicardResult r = picard_solve(p, po, run.exec);
    double gap = 0.0;
    for (std::size_t n = 0; n < tree.node_count(); ++n) gap = std::max(gap, std::abs(r.solution.y[n] - s.y[n]));
    bundle["picard"] = {{"alpha", r.alpha}, {"iterations", r.distances.size()}, {"distances", r.distances},
                        {"ratios", r.ratios}, {"converged", r.converged}, {"max_diff_to_clamped", gap}};
  }
  bundle["certificate"] = certificate_json(mokobodski_certificate(tree, p.barriers, s, StoppingRule::at_horizon(tree)));
  bundle["root"] = {{"Y", s.y[0]}, {"Z", tree.steps() > 0 ? s.z[0] : 0.0}};
  const SolutionView view = view_of(s);
  run.emit(bundle, tree, &p.state, &p.barriers, &view);
  if (!run.opt.quiet) std::printf("Y_root = %s\n", format_double(s.y[0]).c_str());
  return kOk;
}

int cmd_penalize(Run& run) {
  json bundle = run.header();
  const ProblemSpec p = checked_problem(run, true, bundle);
  const Tree& tree = *p.tree;
  bundle["tree"] = tree_summary(tree);
  const PenalizationTrace trace =
      penalization_bracket(p, run.cfg.solver.penalty_schedule, run.cfg.solver.early_stop, run.exec);
  json levels = json::array();
  for (const auto& l : trace.levels)
    levels.push_back({{"n", l.n}, {"width", l.width}, {"Y_lower_root", l.lower_scheme[0]},
                      {"Y_upper_root", l.upper_scheme[0]}});
  bundle["levels"] = levels;
  bundle["stopped_early"] = trace.stopped_early;
  bundle["final_width"] = trace.final_width();
  const PenalizationLevel& last = trace.levels.back();
  // The bracket midpoint stands in for Y in the flattened outputs.
  AdaptedValues mid(tree);
  for (std::size_t n = 0; n < tree.node_count(); ++n) mid[n] = 0.5 * (last.lower_scheme[n] + last.upper_scheme[n]);
  json nodes = json::array();
  for (std::size_t n = 0; n < tree.node_count(); ++n)
    nodes.push_back({{"id", tree.node_id(n)}, {"Y_lower", last.lower_scheme[n]}, {"Y_upper", last.upper_scheme[n]}});
  bundle["bracket"] = nodes;
  SolutionView view;
  view.y = &mid;
  run.emit(bundle, tree, nullptr, &p.barriers, &view);
  if (!run.opt.quiet)
    std::printf("bracket at n=%s: [%s, %s], width %s\n", format_double(last.n).c_str(),
                format_double(last.lower_scheme[0]).c_str(), format_double(last.upper_scheme[0]).c_str(),
                format_double(last.width).c_str());
  return kOk;
}

int cmd_snell(Run& run) {
  json bundle = run.header();
  const ProblemSpec p = checked_problem(run, false, bundle);
  const Tree& tree = *p.tree;
  bundle["tree"] = tree_summary(tree);
  if (run.opt.side != "upper" && run.opt.side != "lower")
    throw Error(ErrorKind::InvalidArgument, "--side must be upper or lower");
  const Side side = run.opt.side == "upper" ? Side::Upper : Side::Lower;
  const OneBarrierSolution s = solve_one_barrier(p, side, run.exec);
  bundle["side"] = run.opt.side;
  bundle["root"] = {{"Y", s.y[0]}};
  const SolutionView view = view_of(s);
  run.emit(bundle, tree, &p.state, &p.barriers, &view);
  if (!run.opt.quiet) std::printf("Y_root = %s\n", format_double(s.y[0]).c_str());
  return kOk;
}

int cmd_game(Run& run) {
  json bundle = run.header();
  GameSpec g;
  try {
    g = build_game(run.cfg, run.cap(), run.exec);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigParse) throw;
    throw ValidationFailed(e.what());
  }
  const Tree& tree = *g.tree;
  bundle["tree"] = tree_summary(tree);
  const GameResult r = solve_game(g, run.exec);
  json controls = json::array();
  for (std::size_t n = 0; n < r.u_star.size(); ++n)
    controls.push_back({{"id", tree.node_id(n)}, {"u", g.controls.a[r.u_star[n]]}, {"v", g.controls.b[r.v_star[n]]},
                        {"H", r.hstar[n]}, {"gap", r.gap[n]}});
  bundle["controls"] = controls;
  bundle["max_gap"] = r.max_gap;
  bundle["root"] = {{"Y", r.y[0]}};
  if (game_oracle_feasible(g)) {
    const GameOracleRecord o = brute_force_game_oracle(g, run.exec);
    bundle["oracle"] = {{"supinf", o.supinf}, {"infsup", o.infsup}, {"control_pairs", o.control_pairs}};
  } else {
    bundle["oracle"] = nullptr;
  }
  const SolutionView view = view_of(r);
  run.emit(bundle, tree, &g.state, &g.barriers, &view);
  if (!run.opt.quiet)
    std::printf("Y_root = %s, max Isaacs gap %s\n", format_double(r.y[0]).c_str(), format_double(r.max_gap).c_str());
  return kOk;
}

int cmd_verify(Run& run) {
  VerifyConfig v = run.cfg.verify;
  if (run.opt.seed) v.seed = *run.opt.seed;
  json bundle = run.header();
  bundle["seed"] = v.seed;
  json rows = json::array();
  bool all = true;
  json timings = json::array();
  for (const CriterionOutcome& o : run_acceptance(v, run.exec)) {
    std::puts(format_outcome(o).c_str());
    rows.push_back({{"id", o.id}, {"name", o.name}, {"passed", o.passed}, {"detail", o.detail}});
    timings.push_back({{"id", o.id}, {"seconds", o.seconds}});
    all = all && o.passed;
  }
  bundle["criteria"] = rows;
  bundle["passed"] = all;
  fs::create_directories(run.dir);
  write_file(run.dir / "result.json", bundle.dump(2) + "\n");
  write_file(run.dir / "criteria_timing.json", timings.dump(2) + "\n");
  return all ? kOk : kVerifyFailed;
}

int dispatch(Run& run) {
  if (run.opt.command == "solve") return cmd_solve(run);
  if (run.opt.command == "penalize") return cmd_penalize(run);
  if (run.opt.command == "snell") return cmd_snell(run);
  if (run.opt.command == "game") return cmd_game(run);
  return cmd_verify(run);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Doubly reflected BSDEs with jumps on a recombination-free lattice"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Options opt;
  const std::pair<const char*, const char*> commands[] = {
      {"solve", "Clamped backward solve with certificate"},
      {"penalize", "Penalization bracket over the schedule"},
      {"snell", "One-barrier reflected solution"},
      {"game", "Mixed control/stopping game"},
      {"verify", "Run the acceptance criteria"},
  };
  for (const auto& [name, about] : commands) {
    CLI::App* sub = app.add_subcommand(name, about);
    sub->add_option("config,--config,-c", opt.config, "Config JSON")->required();
    sub->add_option("--out,-o", opt.out, "Output directory (overrides output.dir)");
    sub->add_option("--format", opt.format, "json, csv or both")->check(CLI::IsMember({"json", "csv", "both"}));
    sub->add_option("--plot", opt.plot, "Path id for plot.csv, e.g. uud");
    sub->add_option("--workers,-j", opt.workers, "OpenMP workers")->check(CLI::PositiveNumber);
    sub->add_option("--node-cap", opt.node_cap, "Refuse trees larger than this");
    sub->add_option("--seed", opt.seed, "Seed for verify and the Lipschitz probe");
    sub->add_option("--side", opt.side, "snell: barrier to reflect on")->check(CLI::IsMember({"upper", "lower"}));
    sub->add_flag("--dump-tree", opt.dump_tree, "Also write tree.json");
    sub->add_flag("--quiet,-q", opt.quiet, "No summary on stdout");
    sub->callback([&opt, name] { opt.command = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kParse;
  }
  const auto t0 = std::chrono::steady_clock::now();
  Run run;
  run.opt = opt;
  run.exec.workers = opt.workers;
  try {
    run.cfg = load_config(opt.config);
    if (opt.seed && opt.command != "verify") run.cfg.verify.seed = *opt.seed;
    run.dir = opt.out.value_or(run.cfg.output.dir);
    const int code = dispatch(run);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json meta{{"command", opt.command}, {"config", opt.config},      {"config_hash", config_hash(run.cfg)},
              {"version", kVersion},   {"workers", opt.workers},    {"wall_seconds", wall},
              {"exit_code", code}};
    write_file(run.dir / "run_meta.json", meta.dump(2) + "\n");
    return code;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::ConfigParse ? kParse : kSolver;
  } catch (const ValidationFailed& e) {
    std::cerr << "validation failed: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kSolver;
  }
}
