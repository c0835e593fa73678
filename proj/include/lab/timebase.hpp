#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lab {

class ScenarioTree;

struct LabError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct GridMismatchError : LabError {
    using LabError::LabError;
};
struct RefinementRequiredError : LabError {
    using LabError::LabError;
};

// Exact binary rational t = num / 2^level, used so that membership in a
// dyadic set D_m is an integer test instead of a float comparison.
struct DyadicTag {
    std::int64_t num = 0;
    int level = 0;

    double value() const { return static_cast<double>(num) * std::ldexp(1.0, -level); }

    // reduce to lowest level
    static DyadicTag normalized(std::int64_t num, int level);
    static std::optional<DyadicTag> from_double(double t);
};

/// Strictly increasing grid of times in [0,1] with t_0 = 0 and t_K = 1.
/// Nodes that are exact binary rationals carry a DyadicTag; other nodes
/// are matched by a 1e-12 relative tolerance.
class TimeGrid {
  public:
    static constexpr double kNodeTolerance = 1e-12;

    explicit TimeGrid(std::vector<double> nodes);

    static TimeGrid dyadic(int level);

    // New grid containing all current nodes plus the given times.
    TimeGrid refined_with(std::span<const double> times) const;

    std::size_t size() const { return nodes_.size(); }               // K + 1 nodes
    std::size_t intervals() const { return nodes_.size() - 1; }      // K intervals
    double node(std::size_t k) const { return nodes_[k]; }
    const std::vector<double>& nodes() const { return nodes_; }
    const std::optional<DyadicTag>& tag(std::size_t k) const { return tags_[k]; }

    std::optional<std::size_t> find_node(double t) const;

    // Node indices of the dyadic set D_m = {j 2^-m : j = 0..2^m}, or
    // nullopt when some dyadic of level m is missing from the grid.
    std::optional<std::vector<std::size_t>> dyadic_nodes(int level) const;

    bool same_as(const TimeGrid& other) const;

  private:
    std::vector<double> nodes_;
    std::vector<std::optional<DyadicTag>> tags_;
};

using TimeGridPtr = std::shared_ptr<const TimeGrid>;

inline TimeGridPtr make_grid(std::vector<double> nodes) {
    return std::make_shared<TimeGrid>(std::move(nodes));
}
inline TimeGridPtr make_dyadic_grid(int level) {
    return std::make_shared<TimeGrid>(TimeGrid::dyadic(level));
}

void require_same_grid(const TimeGridPtr& a, const TimeGridPtr& b, const char* where);

enum class Side { Left, Right };

/// Position on the double-arrow time axis: every instant t_k is split
/// into a left point (t_k, 0) and a right point (t_k, 1), ordered
/// lexicographically.
struct DoubleIndex {
    TimeGridPtr grid;
    std::size_t node = 0;
    Side side = Side::Left;
};

// -1, 0, +1 ordering; grids must match.
int compare(const DoubleIndex& a, const DoubleIndex& b);

/// A [0,1]-or-never valued stopping time on a grid: one node index per
/// scenario, with kNever as the infinite sentinel. Callers must handle
/// the sentinel explicitly wherever values are read.
struct GridStoppingTime {
    static constexpr std::uint32_t kNever = std::numeric_limits<std::uint32_t>::max();

    TimeGridPtr grid;
    std::vector<std::uint32_t> node_of;  // per scenario
    Side side_hint = Side::Right;

    std::size_t scenarios() const { return node_of.size(); }
    bool never(std::size_t s) const { return node_of[s] == kNever; }
    double time(std::size_t s) const { return grid->node(node_of[s]); }

    static GridStoppingTime constant(TimeGridPtr grid, std::size_t node, std::size_t n_scenarios);
};

/// Smallest grid node in D_m strictly above tau, capped at the terminal
/// node; scenarios already at the terminal node stay there and never
/// stays never.
GridStoppingTime dyadic_approximation(const GridStoppingTime& tau, int level);

struct AdaptednessCheck {
    bool ok = true;
    // per level k: atoms (ids) on which {tau = t_k}; empty rows where the event is empty
    std::vector<std::vector<std::uint32_t>> certificate;
    // first offender when !ok
    std::size_t violation_level = 0;
    std::uint32_t violation_atom = 0;
    std::string message;
};

/// Checks that {tau = t_k} is a union of level-k atoms for every k.
AdaptednessCheck validate_stopping_time(const GridStoppingTime& tau, const ScenarioTree& tree);

}  // namespace lab
