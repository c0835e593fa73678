#include "lab/timebase.hpp"

#include <algorithm>
#include <cmath>

#include "lab/scenario_tree.hpp"

namespace lab {

DyadicTag DyadicTag::normalized(std::int64_t num, int level) {
    while (level > 0 && (num % 2) == 0) {
        num /= 2;
        --level;
    }
    return DyadicTag{num, level};
}

std::optional<DyadicTag> DyadicTag::from_double(double t) {
    // binary rationals up to level 40 are recognized exactly
    for (int level = 0; level <= 40; ++level) {
        const double scaled = std::ldexp(t, level);
        const double rounded = std::round(scaled);
        if (scaled == rounded && std::abs(rounded) < 9.0e15) {
            return DyadicTag::normalized(static_cast<std::int64_t>(rounded), level);
        }
    }
    return std::nullopt;
}

TimeGrid::TimeGrid(std::vector<double> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.size() < 2) throw LabError("TimeGrid: need at least nodes 0 and 1");
    if (nodes_.front() != 0.0) throw LabError("TimeGrid: first node must be 0");
    if (nodes_.back() != 1.0) throw LabError("TimeGrid: last node must be 1");
    for (std::size_t k = 1; k < nodes_.size(); ++k) {
        if (!(nodes_[k] > nodes_[k - 1])) throw LabError("TimeGrid: nodes must be strictly increasing");
    }
    tags_.reserve(nodes_.size());
    for (double t : nodes_) tags_.push_back(DyadicTag::from_double(t));
}

TimeGrid TimeGrid::dyadic(int level) {
    if (level < 0 || level > 30) throw LabError("TimeGrid::dyadic: level out of range");
    const std::size_t n = (std::size_t{1} << level) + 1;
    std::vector<double> nodes(n);
    for (std::size_t j = 0; j < n; ++j) nodes[j] = std::ldexp(static_cast<double>(j), -level);
    nodes.front() = 0.0;
    nodes.back() = 1.0;
    return TimeGrid(std::move(nodes));
}

TimeGrid TimeGrid::refined_with(std::span<const double> times) const {
    std::vector<double> merged = nodes_;
    for (double t : times) {
        if (t < 0.0 || t > 1.0) continue;
        if (!find_node(t)) merged.push_back(t);
    }
    std::sort(merged.begin(), merged.end());
    merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
    return TimeGrid(std::move(merged));
}

std::optional<std::size_t> TimeGrid::find_node(double t) const {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t - kNodeTolerance);
    if (it == nodes_.end()) return std::nullopt;
    const double scale = std::max(1.0, std::abs(t));
    if (std::abs(*it - t) <= kNodeTolerance * scale) {
        return static_cast<std::size_t>(it - nodes_.begin());
    }
    return std::nullopt;
}

std::optional<std::vector<std::size_t>> TimeGrid::dyadic_nodes(int level) const {
    const std::size_t count = (std::size_t{1} << level) + 1;
    std::vector<std::size_t> out;
    out.reserve(count);
    for (std::size_t j = 0; j < count; ++j) {
        const double t = std::ldexp(static_cast<double>(j), -level);
        // prefer the exact tag test when available
        std::optional<std::size_t> idx;
        const DyadicTag want = DyadicTag::normalized(static_cast<std::int64_t>(j), level);
        for (std::size_t k = out.empty() ? 0 : out.back() + 1; k < nodes_.size(); ++k) {
            if (tags_[k] && tags_[k]->num == want.num && tags_[k]->level == want.level) {
                idx = k;
                break;
            }
            if (nodes_[k] > t + kNodeTolerance) break;
        }
        if (!idx) idx = find_node(t);
        if (!idx) return std::nullopt;
        out.push_back(*idx);
    }
    return out;
}

bool TimeGrid::same_as(const TimeGrid& other) const {
    if (this == &other) return true;
    if (nodes_.size() != other.nodes_.size()) return false;
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
        const double scale = std::max(1.0, std::abs(nodes_[k]));
        if (std::abs(nodes_[k] - other.nodes_[k]) > kNodeTolerance * scale) return false;
    }
    return true;
}

void require_same_grid(const TimeGridPtr& a, const TimeGridPtr& b, const char* where) {
    if (a == b) return;
    if (a && b && a->same_as(*b)) return;
    throw GridMismatchError(std::string(where) + ": operands live on different grids");
}

int compare(const DoubleIndex& a, const DoubleIndex& b) {
    require_same_grid(a.grid, b.grid, "compare");
    if (a.node != b.node) return a.node < b.node ? -1 : 1;
    if (a.side != b.side) return a.side == Side::Left ? -1 : 1;
    return 0;
}

GridStoppingTime GridStoppingTime::constant(TimeGridPtr grid, std::size_t node, std::size_t n_scenarios) {
    if (node >= grid->size()) throw LabError("GridStoppingTime::constant: node out of range");
    GridStoppingTime tau;
    tau.grid = std::move(grid);
    tau.node_of.assign(n_scenarios, static_cast<std::uint32_t>(node));
    return tau;
}

GridStoppingTime dyadic_approximation(const GridStoppingTime& tau, int level) {
    const auto dn = tau.grid->dyadic_nodes(level);
    if (!dn) {
        throw RefinementRequiredError("dyadic_approximation: grid does not contain all dyadics of level " +
                                      std::to_string(level));
    }
    const std::vector<std::size_t>& dyads = *dn;  // node indices of j*2^-level, ascending
    GridStoppingTime out;
    out.grid = tau.grid;
    out.node_of.resize(tau.node_of.size());
    const std::size_t last = tau.grid->size() - 1;
    for (std::size_t s = 0; s < tau.node_of.size(); ++s) {
        if (tau.never(s)) {
            out.node_of[s] = GridStoppingTime::kNever;
            continue;
        }
        const std::size_t k = tau.node_of[s];
        // smallest dyadic node strictly above t_k, capped at 1
        auto it = std::upper_bound(dyads.begin(), dyads.end(), k);
        out.node_of[s] = static_cast<std::uint32_t>(it == dyads.end() ? last : *it);
    }
    return out;
}

AdaptednessCheck validate_stopping_time(const GridStoppingTime& tau, const ScenarioTree& tree) {
    require_same_grid(tau.grid, tree.grid(), "validate_stopping_time");
    if (tau.node_of.size() != tree.n_scenarios())
        throw LabError("validate_stopping_time: scenario count mismatch");

    AdaptednessCheck res;
    res.certificate.resize(tree.n_levels());
    for (std::size_t k = 0; k < tree.n_levels() && res.ok; ++k) {
        const std::size_t n_atoms = tree.n_atoms(k);
        std::vector<int> state(n_atoms, -1);  // -1 unseen, 0 all-out, 1 all-in
        for (std::size_t s = 0; s < tree.n_scenarios(); ++s) {
            const int in = (tau.node_of[s] == k) ? 1 : 0;
            const std::uint32_t a = tree.atom_of(k, s);
            if (state[a] == -1) {
                state[a] = in;
            } else if (state[a] != in) {
                res.ok = false;
                res.violation_level = k;
                res.violation_atom = a;
                res.message = "event {tau = t_" + std::to_string(k) + "} splits atom " +
                              std::to_string(a) + " at level " + std::to_string(k);
                break;
            }
        }
        if (res.ok) {
            for (std::uint32_t a = 0; a < n_atoms; ++a) {
                if (state[a] == 1) res.certificate[k].push_back(a);
            }
        }
    }
    return res;
}

}  // namespace lab
