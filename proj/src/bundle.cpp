#include "rbsde/bundle.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "rbsde/error.hpp"

namespace rbsde {

using nlohmann::json;

SolutionView view_of(const SolutionQuintuple& s) {
  return {&s.y, &s.y_left, &s.z, &s.v, &s.k_plus, &s.k_minus};
}

SolutionView view_of(const OneBarrierSolution& s) {
  SolutionView v{&s.y, &s.y_left, &s.z, &s.v, nullptr, nullptr};
  (s.side == Side::Upper ? v.k_minus : v.k_plus) = &s.k;
  return v;
}

SolutionView view_of(const GameResult& g) { return {&g.y, &g.y_left, &g.z, &g.r, &g.k_plus, &g.k_minus}; }

std::size_t node_from_id(const Tree& tree, const std::string& id) {
  std::size_t node = 0;
  for (std::size_t i = 0; i < id.size(); ++i) {
    if (tree.is_terminal(node)) throw Error(ErrorKind::InvalidArgument, "path '" + id + "' is longer than the tree");
    std::size_t branch = 0;
    const char c = id[i];
    if (c == 'u') {
      branch = kUp;
    } else if (c == 'd') {
      branch = kDown;
    } else if (c >= '1' && c <= '9') {
      branch = mark_branch(static_cast<std::size_t>(c - '1'));
    } else if (c == '[') {
      const auto close = id.find(']', i);
      if (close == std::string::npos) throw Error(ErrorKind::InvalidArgument, "unclosed '[' in path '" + id + "'");
      const std::size_t label = std::stoul(id.substr(i + 1, close - i - 1));
      if (label == 0) throw Error(ErrorKind::InvalidArgument, "mark labels start at 1 in path '" + id + "'");
      branch = mark_branch(label - 1);
      i = close;
    } else {
      throw Error(ErrorKind::InvalidArgument, std::string("bad branch '") + c + "' in path '" + id + "'");
    }
    if (branch >= tree.branching())
      throw Error(ErrorKind::InvalidArgument, "path '" + id + "' names a mark the tree does not have");
    node = tree.child(node, branch);
  }
  return node;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json validation_json(const ValidationReport& report) {
  json checks = json::array();
  for (const auto& c : report.checks)
    checks.push_back({{"name", c.name}, {"passed", c.passed}, {"advisory", c.advisory}, {"metric", c.metric},
                      {"detail", c.detail}});
  return {{"passed", report.passed()}, {"checks", checks}};
}

json nodes_json(const Tree& tree, const AdaptedValues& state, const BarrierPair& barriers, const SolutionView& s) {
  json nodes = json::array();
  for (std::size_t n = 0; n < tree.node_count(); ++n) {
    const int k = tree.layer_of(n);
    json row{{"id", tree.node_id(n)}, {"layer", k}, {"t", tree.time(k)}, {"x", state[n]},
             {"L", barriers.lower[n]}, {"U", barriers.upper[n]}};
    if (barriers.is_flagged(k)) {
      row["L_left"] = barriers.lower_left[n];
      row["U_left"] = barriers.upper_left[n];
    }
    if (s.y) row["Y"] = (*s.y)[n];
    if (s.y_left && barriers.is_flagged(k)) row["Y_left"] = (*s.y_left)[n];
    if (!tree.is_terminal(n)) {
      if (s.z) row["Z"] = (*s.z)[n];
      if (s.v) {
        json v = json::array();
        for (const auto& vj : *s.v) v.push_back(vj[n]);
        row["V"] = v;
      }
    }
    auto push = [&](const char* tag, const PushProcess* k) {
      if (!k) return;
      const std::string t(tag);
      row["Kc" + t] = k->continuous[n];
      row["Kd" + t] = k->jump[n];
      row["dKc" + t] = k->continuous_step[n];
      row["dKd" + t] = k->jump_step[n];
    };
    push("+", s.k_plus);
    push("-", s.k_minus);
    nodes.push_back(std::move(row));
  }
  return nodes;
}

json tree_json(const Tree& tree) {
  json nodes = json::array();
  for (std::size_t n = 0; n < tree.node_count(); ++n) {
    const std::int64_t p = tree.parent(n);
    json row{{"id", tree.node_id(n)}, {"layer", tree.layer_of(n)}};
    if (p < 0) {
      row["parent"] = nullptr;
      row["branch"] = nullptr;
      row["weight"] = 1.0;
    } else {
      const std::size_t c = tree.branch(n);
      row["parent"] = tree.node_id(static_cast<std::size_t>(p));
      row["branch"] = c == kUp ? "u" : c == kDown ? "d" : std::to_string(c - 1);
      row["weight"] = tree.base_weights()[c];
    }
    nodes.push_back(std::move(row));
  }
  json marks = json::array();
  for (const auto& m : tree.marks().marks) marks.push_back({{"e", m.point}, {"lambda", m.rate}});
  return {{"T", tree.grid().horizon}, {"N", tree.steps()}, {"marks", marks}, {"nodes", nodes}};
}

namespace {

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string solution_csv(const Tree& tree, const SolutionView& s) {
  std::ostringstream os;
  const std::size_t m = tree.mark_count();
  os << "node_id,time,path_prefix,Y,Z";
  for (std::size_t j = 0; j < m; ++j) os << ",V_" << j + 1;
  os << ",Kc+,Kd+,Kc-,Kd-\n";
  auto cell = [&](const AdaptedValues* a, std::size_t n) { return a && a->covers(tree.layer_of(n)) ? format_double((*a)[n]) : ""; };
  for (std::size_t n = 0; n < tree.node_count(); ++n) {
    const std::int64_t p = tree.parent(n);
    os << quoted(tree.node_id(n)) << ',' << format_double(tree.time(tree.layer_of(n))) << ','
       << quoted(p < 0 ? "" : tree.node_id(static_cast<std::size_t>(p))) << ',' << cell(s.y, n) << ',';
    const bool inner = !tree.is_terminal(n);
    os << (inner ? cell(s.z, n) : "");
    for (std::size_t j = 0; j < m; ++j) os << ',' << (inner && s.v ? cell(&(*s.v)[j], n) : "");
    for (const PushProcess* k : {s.k_plus, s.k_minus})
      os << ',' << (k ? format_double(k->continuous[n]) : "0") << ',' << (k ? format_double(k->jump[n]) : "0");
    os << '\n';
  }
  return os.str();
}

std::string plot_csv(const Tree& tree, const std::string& path, const SolutionView& s, const BarrierPair& barriers) {
  const std::size_t leaf = node_from_id(tree, path);
  std::ostringstream os;
  os << "time,node_id,Y,L,U\n";
  for (std::size_t n : tree.path_to(leaf))
    os << format_double(tree.time(tree.layer_of(n))) << ',' << quoted(tree.node_id(n)) << ','
       << (s.y ? format_double((*s.y)[n]) : "") << ',' << format_double(barriers.lower[n]) << ','
       << format_double(barriers.upper[n]) << '\n';
  return os.str();
}

}  // namespace rbsde
