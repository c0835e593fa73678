#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lab/timebase.hpp"

namespace lab {

/// One realized trajectory, piecewise constant between grid nodes:
/// node_values[k] is the value at t_k and interval_values[k] is the
/// constant value on the open interval (t_k, t_{k+1}). Left and right
/// limits are therefore exact: the left limit at t_k is
/// interval_values[k-1] (0 at t_0 by convention) and the right limit
/// at t_k is interval_values[k] (the terminal value at t_K = 1).
class LadlagPath {
  public:
    LadlagPath(TimeGridPtr grid, std::vector<double> node_values, std::vector<double> interval_values);

    // cadlag staircase from node samples (interval value = node value)
    static LadlagPath cadlag(TimeGridPtr grid, std::vector<double> node_values);
    static LadlagPath constant(TimeGridPtr grid, double c);

    const TimeGridPtr& grid() const { return grid_; }
    std::size_t nodes() const { return node_values_.size(); }
    double node_value(std::size_t k) const { return node_values_[k]; }
    double interval_value(std::size_t k) const { return interval_values_[k]; }
    const std::vector<double>& node_values() const { return node_values_; }
    const std::vector<double>& interval_values() const { return interval_values_; }

    double left_limit(std::size_t k) const { return k == 0 ? 0.0 : interval_values_[k - 1]; }
    double right_limit(std::size_t k) const {
        return k + 1 == node_values_.size() ? node_values_[k] : interval_values_[k];
    }
    // (left jump, right jump) at node k
    std::pair<double, double> jumps(std::size_t k) const {
        return {node_values_[k] - left_limit(k), right_limit(k) - node_values_[k]};
    }

    bool is_cadlag(double tol = 0.0) const;

    // Values in chain order V_0, I_0, V_1, ..., I_{K-1}, V_K (2K+1 points).
    std::vector<double> chain_values() const;

    LadlagPath& scale_add(double a, const LadlagPath& other);  // this += a * other

  private:
    TimeGridPtr grid_;
    std::vector<double> node_values_;
    std::vector<double> interval_values_;
};

struct Provenance {
    std::uint64_t seed = 0;
    std::string tag;
};

/// Ensemble of paths over weighted scenarios; the Monte Carlo unit.
struct PathBundle {
    TimeGridPtr grid;
    std::vector<LadlagPath> paths;
    std::vector<double> weights;
    Provenance provenance;

    PathBundle() = default;
    PathBundle(TimeGridPtr g, std::vector<LadlagPath> p, std::vector<double> w, Provenance prov = {});

    std::size_t scenarios() const { return paths.size(); }
    static std::vector<double> uniform_weights(std::size_t n);

    void validate() const;
};

/// Maximum m such that some double-index subsequence u_0 < ... < u_m has
/// |X_{u_i} - X_{u_{i-1}}| > eps at each step (strict, ties do not count).
int eps_move_count(const LadlagPath& path, double eps);
int eps_move_count(std::span<const double> values, double eps);

/// Classical number of upcrossings of [a, b] along the double-index chain.
int upcrossings(const LadlagPath& path, double a, double b);

/// X_tau (side = Right) or X_{tau-} (side = Left) per scenario.
std::vector<double> evaluate_at(const PathBundle& bundle, const GridStoppingTime& tau, Side side);

/// Replaces the node value at tau_m with values[m] scenario-wise; the
/// stopping times must have disjoint graphs. Interval values are left
/// untouched, so right limits are preserved.
PathBundle override_at_stopping_times(const PathBundle& bundle,
                                      const std::vector<GridStoppingTime>& taus,
                                      const std::vector<std::vector<double>>& values);

}  // namespace lab
