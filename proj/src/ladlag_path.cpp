#include "lab/ladlag_path.hpp"

#include <algorithm>
#include <cmath>

namespace lab {

LadlagPath::LadlagPath(TimeGridPtr grid, std::vector<double> node_values,
                       std::vector<double> interval_values)
    : grid_(std::move(grid)),
      node_values_(std::move(node_values)),
      interval_values_(std::move(interval_values)) {
    if (!grid_) throw LabError("LadlagPath: null grid");
    if (node_values_.size() != grid_->size())
        throw LabError("LadlagPath: node value count does not match grid");
    if (interval_values_.size() != grid_->intervals())
        throw LabError("LadlagPath: interval value count does not match grid");
}

LadlagPath LadlagPath::cadlag(TimeGridPtr grid, std::vector<double> node_values) {
    std::vector<double> intervals(node_values.begin(), node_values.end() - 1);
    return LadlagPath(std::move(grid), std::move(node_values), std::move(intervals));
}

LadlagPath LadlagPath::constant(TimeGridPtr grid, double c) {
    std::vector<double> nodes(grid->size(), c);
    return cadlag(std::move(grid), std::move(nodes));
}

bool LadlagPath::is_cadlag(double tol) const {
    for (std::size_t k = 0; k + 1 < node_values_.size(); ++k) {
        if (std::abs(node_values_[k] - interval_values_[k]) > tol) return false;
    }
    return true;
}

std::vector<double> LadlagPath::chain_values() const {
    std::vector<double> chain;
    chain.reserve(2 * node_values_.size() - 1);
    for (std::size_t k = 0; k < node_values_.size(); ++k) {
        chain.push_back(node_values_[k]);
        if (k < interval_values_.size()) chain.push_back(interval_values_[k]);
    }
    return chain;
}

LadlagPath& LadlagPath::scale_add(double a, const LadlagPath& other) {
    require_same_grid(grid_, other.grid_, "LadlagPath::scale_add");
    for (std::size_t k = 0; k < node_values_.size(); ++k) node_values_[k] += a * other.node_values_[k];
    for (std::size_t k = 0; k < interval_values_.size(); ++k)
        interval_values_[k] += a * other.interval_values_[k];
    return *this;
}

PathBundle::PathBundle(TimeGridPtr g, std::vector<LadlagPath> p, std::vector<double> w, Provenance prov)
    : grid(std::move(g)), paths(std::move(p)), weights(std::move(w)), provenance(std::move(prov)) {
    validate();
}

std::vector<double> PathBundle::uniform_weights(std::size_t n) {
    return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

void PathBundle::validate() const {
    if (!grid) throw LabError("PathBundle: null grid");
    if (paths.size() != weights.size()) throw LabError("PathBundle: weights/paths size mismatch");
    // compensated summation keeps the tolerance meaningful for large bundles
    double sum = 0.0, carry = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw LabError("PathBundle: negative weight");
        const double y = w - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw LabError("PathBundle: weights must sum to 1");
    for (const auto& p : paths) require_same_grid(grid, p.grid(), "PathBundle");
}

// Exact sweep for the maximal number of eps-moves. For each achievable
// move count c we keep the extreme end-values (lo[c], hi[c]) over all
// chains of >= c moves ending in the processed prefix; both envelopes
// are monotone in c, so the feasibility test below scans downward.
int eps_move_count(std::span<const double> values, double eps) {
    if (eps <= 0.0) throw LabError("eps_move_count: eps must be positive");
    if (values.empty()) return 0;
    std::vector<double> lo{values[0]}, hi{values[0]};
    for (std::size_t i = 1; i < values.size(); ++i) {
        const double x = values[i];
        int reach = -1;
        for (int c = static_cast<int>(lo.size()) - 1; c >= 0; --c) {
            if (x > lo[static_cast<std::size_t>(c)] + eps || x < hi[static_cast<std::size_t>(c)] - eps) {
                reach = c;
                break;
            }
        }
        const std::size_t c_new = static_cast<std::size_t>(reach + 1);
        if (c_new == lo.size()) {
            lo.push_back(x);
            hi.push_back(x);
        }
        for (std::size_t c = 0; c <= c_new; ++c) {
            lo[c] = std::min(lo[c], x);
            hi[c] = std::max(hi[c], x);
        }
    }
    return static_cast<int>(lo.size()) - 1;
}

int eps_move_count(const LadlagPath& path, double eps) {
    const std::vector<double> chain = path.chain_values();
    return eps_move_count(std::span<const double>(chain), eps);
}

int upcrossings(const LadlagPath& path, double a, double b) {
    if (!(a < b)) throw LabError("upcrossings: need a < b");
    int count = 0;
    bool armed = false;  // set once the path has been at or below a
    for (double x : path.chain_values()) {
        if (!armed) {
            if (x <= a) armed = true;
        } else if (x >= b) {
            ++count;
            armed = false;
        }
    }
    return count;
}

std::vector<double> evaluate_at(const PathBundle& bundle, const GridStoppingTime& tau, Side side) {
    require_same_grid(bundle.grid, tau.grid, "evaluate_at");
    if (tau.node_of.size() != bundle.scenarios())
        throw LabError("evaluate_at: scenario count mismatch");
    std::vector<double> out(bundle.scenarios());
    for (std::size_t s = 0; s < bundle.scenarios(); ++s) {
        if (tau.never(s)) {
            throw LabError("evaluate_at: stopping time is infinite on scenario " + std::to_string(s) +
                           "; restrict the bundle first");
        }
        const std::size_t k = tau.node_of[s];
        out[s] = side == Side::Right ? bundle.paths[s].node_value(k) : bundle.paths[s].left_limit(k);
    }
    return out;
}

PathBundle override_at_stopping_times(const PathBundle& bundle,
                                      const std::vector<GridStoppingTime>& taus,
                                      const std::vector<std::vector<double>>& values) {
    if (taus.size() != values.size()) throw LabError("override_at_stopping_times: taus/values mismatch");
    for (const auto& tau : taus) {
        require_same_grid(bundle.grid, tau.grid, "override_at_stopping_times");
        if (tau.node_of.size() != bundle.scenarios())
            throw LabError("override_at_stopping_times: scenario count mismatch");
    }
    // disjoint graphs: no scenario may have two taus finite and equal
    for (std::size_t s = 0; s < bundle.scenarios(); ++s) {
        std::vector<std::uint32_t> seen;
        for (const auto& tau : taus) {
            if (tau.never(s)) continue;
            if (std::find(seen.begin(), seen.end(), tau.node_of[s]) != seen.end()) {
                throw LabError("override_at_stopping_times: graphs overlap on scenario " +
                               std::to_string(s) + " at t = " + std::to_string(tau.time(s)));
            }
            seen.push_back(tau.node_of[s]);
        }
    }
    PathBundle out = bundle;
    for (std::size_t m = 0; m < taus.size(); ++m) {
        if (values[m].size() != bundle.scenarios())
            throw LabError("override_at_stopping_times: value row size mismatch");
        for (std::size_t s = 0; s < bundle.scenarios(); ++s) {
            if (taus[m].never(s)) continue;
            const std::size_t k = taus[m].node_of[s];
            std::vector<double> nv = out.paths[s].node_values();
            nv[k] = values[m][s];
            out.paths[s] = LadlagPath(out.grid, std::move(nv), out.paths[s].interval_values());
        }
    }
    return out;
}

}  // namespace lab
