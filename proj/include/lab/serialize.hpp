#pragma once

#include <string>

#include "lab/integration.hpp"
#include "lab/ladlag_path.hpp"
#include "lab/limits.hpp"
#include "lab/scenario_tree.hpp"

#include "json.hpp"

namespace lab {

// deterministic shortest-round-trip formatting
std::string format_double(double v);

/// Columnar bundle CSV: scenario, node, node_value, interval_value, weight.
/// interval_value is empty on the terminal row of each scenario.
std::string bundle_to_csv(const PathBundle& bundle);

nlohmann::json bundle_manifest(const PathBundle& bundle);

nlohmann::json grid_to_json(const TimeGrid& grid);
TimeGridPtr grid_from_json(const nlohmann::json& j);

/// Integrand spec: {"phi_c_samples": [[t, v], ...], "jumps": [[t,
/// left_jump, right_jump], ...]}. The continuous part interpolates the
/// samples linearly onto the grid; jump times must be grid nodes.
FVIntegrand integrand_from_json(const TimeGridPtr& grid, const nlohmann::json& j);

/// Tree JSON: {"grid": ..., "weights": [...], "levels": [[atom scenario
/// lists]...]}.
nlohmann::json tree_to_json(const ScenarioTree& tree);
ScenarioTreePtr tree_from_json(const nlohmann::json& j);

std::string convergence_report_to_csv(const ConvergenceReport& report);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

std::uint64_t fnv1a_hash(const std::string& text);

}  // namespace lab
