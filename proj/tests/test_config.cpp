#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "rbsde/bundle.hpp"
#include "rbsde/config.hpp"
#include "rbsde/drbsde.hpp"
#include "rbsde/error.hpp"

using namespace rbsde;
using nlohmann::json;

namespace {

json minimal() {
  return json::parse(R"({
    "schema": "rbsde-config/1",
    "grid": {"T": 1.0, "N": 2},
    "marks": [{"e": 0.5, "lambda": 0.3}],
    "state": {"x0": 0.0, "sigma": 1.0},
    "problem": {
      "generator": {"form": "affine", "level": {"terms": {"1": 0.1}}, "b": 0.5},
      "lower": -1.0,
      "upper": {"pieces": [{"from": 0, "form": 1.0}, {"from": 1, "form": 2.0}], "jumps": [{"layer": 1}]},
      "terminal": {"terms": {"x": 0.5}}
    },
    "output": {"dir": "out/x"}
  })");
}

std::string parse_error(const json& doc) {
  try {
    parse_config(doc);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigParse);
    return e.what();
  }
  FAIL("expected ConfigParse");
  return {};
}

bool mentions(const std::string& msg, const std::string& path) { return msg.find(path) != std::string::npos; }

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("parse errors name the key path") {
    json a = minimal();
    a["grid"]["M"] = 3;
    CHECK(mentions(parse_error(a), "/grid/M"));

    json b = minimal();
    b["schema"] = "rbsde-config/2";
    CHECK(mentions(parse_error(b), "/schema"));

    json c = minimal();
    c["problem"]["upper"]["pieces"][1]["form"] = "two";
    CHECK(mentions(parse_error(c), "/problem/upper/pieces/1/form"));

    json d = minimal();
    d["problem"]["generator"]["form"] = "quadratic";
    CHECK(mentions(parse_error(d), "/problem/generator/form"));

    json e = minimal();
    e["grid"]["N"] = -1;
    CHECK(mentions(parse_error(e), "/grid/N"));

    json f = minimal();
    f["marks"][0].erase("lambda");
    CHECK(mentions(parse_error(f), "/marks/0"));
  }

  TEST_CASE("unreadable and malformed files") {
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), Error);
    try {
      load_config("/nonexistent/config.json");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ConfigParse);
    }
  }

  TEST_CASE("canonical round trip and hash") {
    const RunConfig c = parse_config(minimal());
    const json canon = to_json(c);
    const RunConfig again = parse_config(canon);
    CHECK(to_json(again) == canon);
    CHECK(config_hash(again) == config_hash(c));
    CHECK(config_hash(c).size() == 16);

    json moved = minimal();
    moved["output"]["dir"] = "elsewhere";
    moved["output"]["format"] = "both";
    CHECK(config_hash(parse_config(moved)) == config_hash(c));

    json changed = minimal();
    changed["grid"]["T"] = 2.0;
    CHECK(config_hash(parse_config(changed)) != config_hash(c));
  }

  TEST_CASE("defaults") {
    const RunConfig c = parse_config(json::parse(R"({"schema": "rbsde-config/1", "grid": {"T": 1.0, "N": 1}})"));
    CHECK(c.output.format == "json");
    CHECK(c.verify.seed == 42);
    CHECK(c.solver.penalty_schedule.size() == 21);
    CHECK_FALSE(c.lower.has_value());
    CHECK_FALSE(c.game.has_value());
  }

  TEST_CASE("building the problem") {
    const RunConfig c = parse_config(minimal());
    const ProblemSpec p = build_problem(c);
    CHECK(p.tree->steps() == 2);
    CHECK(p.tree->mark_count() == 1);
    CHECK(p.barriers.is_flagged(1));
    CHECK(p.barriers.upper[0] == 1.0);
    for (std::size_t n = p.tree->layer_begin(1); n < p.tree->layer_end(1); ++n) {
      CHECK(p.barriers.upper[n] == 2.0);
      CHECK(p.barriers.upper_left[n] == 1.0);
    }
    CHECK_THROWS_AS(build_game(c), Error);
    CHECK_THROWS_AS(build_problem(c, std::size_t{3}), Error);
  }

  TEST_CASE("node ids") {
    const RunConfig c = parse_config(minimal());
    auto t = build_tree(c);
    for (std::size_t n = 0; n < t->node_count(); ++n) CHECK(node_from_id(*t, t->node_id(n)) == n);
    CHECK(node_from_id(*t, "") == 0);
    CHECK(t->node_id(t->child(0, kUp)) == "u");
    CHECK_THROWS_AS(node_from_id(*t, "x"), Error);
    CHECK_THROWS_AS(node_from_id(*t, "uuu"), Error);
  }

  TEST_CASE("number formatting") {
    CHECK(format_double(0.1) == "0.10000000000000001");
    CHECK(format_double(1.0) == "1");
    CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
    CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
    CHECK(format_double(std::nan("")) == "nan");
  }

  TEST_CASE("solution csv") {
    const RunConfig c = parse_config(minimal());
    const ProblemSpec p = build_problem(c);
    const SolutionQuintuple s = backward_clamped_solve(p);
    const std::string csv = solution_csv(*p.tree, view_of(s));
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "node_id,time,path_prefix,Y,Z,V_1,Kc+,Kd+,Kc-,Kd-");
    std::getline(in, line);
    CHECK(line.rfind("\"\",0,\"\"," + format_double(s.y[0]) + ",", 0) == 0);
    std::size_t rows = 1;
    CHECK(std::count(line.begin(), line.end(), ',') == 9);
    while (std::getline(in, line)) {
      CHECK(std::count(line.begin(), line.end(), ',') == 9);
      ++rows;
    }
    CHECK(rows == p.tree->node_count());
    CHECK(solution_csv(*p.tree, view_of(s)) == csv);
  }

  TEST_CASE("tree and node json") {
    const RunConfig c = parse_config(minimal());
    const ProblemSpec p = build_problem(c);
    const SolutionQuintuple s = backward_clamped_solve(p);
    const json nodes = nodes_json(*p.tree, p.state, p.barriers, view_of(s));
    CHECK(nodes.size() == p.tree->node_count());
    const json tree = tree_json(*p.tree);
    CHECK(tree.dump() == tree_json(*p.tree).dump());
  }
}
