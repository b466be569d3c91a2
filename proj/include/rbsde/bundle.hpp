#pragma once

// Result serialization. Everything here is a pure function of its inputs so
// repeated runs produce identical bytes; wall-clock data lives elsewhere.

#include <string>
#include <vector>

#include <json.hpp>

#include "rbsde/drbsde.hpp"
#include "rbsde/game.hpp"
#include "rbsde/model.hpp"

namespace rbsde {

/// Borrowed per-node processes of any solver; missing pieces are null.
struct SolutionView {
  const AdaptedValues* y = nullptr;
  const AdaptedValues* y_left = nullptr;
  const AdaptedValues* z = nullptr;
  const std::vector<AdaptedValues>* v = nullptr;
  const PushProcess* k_plus = nullptr;
  const PushProcess* k_minus = nullptr;
};

SolutionView view_of(const SolutionQuintuple& s);
SolutionView view_of(const OneBarrierSolution& s);
SolutionView view_of(const GameResult& g);

/// Node whose path string is `id`; throws InvalidArgument.
std::size_t node_from_id(const Tree& tree, const std::string& id);

/// 17 significant digits, "inf"/"-inf"/"nan" spelled out.
std::string format_double(double v);

nlohmann::json validation_json(const ValidationReport& report);
/// One object per node in storage order, keyed by path id.
nlohmann::json nodes_json(const Tree& tree, const AdaptedValues& state, const BarrierPair& barriers,
                          const SolutionView& s);
nlohmann::json tree_json(const Tree& tree);

/// node_id,time,path_prefix,Y,Z,V_1..V_m,Kc+,Kd+,Kc-,Kd- (cumulative K).
std::string solution_csv(const Tree& tree, const SolutionView& s);
/// time,node_id,Y,L,U along the path from the root to the node `path`.
std::string plot_csv(const Tree& tree, const std::string& path, const SolutionView& s, const BarrierPair& barriers);

}  // namespace rbsde
