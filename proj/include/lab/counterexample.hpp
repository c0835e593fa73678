#pragma once

#include <cstdint>
#include <vector>

#include "lab/ladlag_path.hpp"
#include "lab/timebase.hpp"

namespace lab {

/// Parameters of the excursion-ladder martingale family used by the
/// almost-sure-convergence counterexample. Each index n is a continuous
/// non-negative martingale built from independent two-point excursion
/// blocks at fixed slot times: every block either ends at -delta
/// (its share of the drop toward 1 - t) or is absorbed at its cap, in
/// which case the whole index freezes there (later blocks are inert).
/// Indices are organised in bands whose caps sit just above the dyadic
/// thresholds 2^m + 1, so the adaptive recursion finds near-critical
/// excursions at every level; past the last band the caps ramp upward,
/// which drives the exceedance at every fixed time to zero.
struct CounterexampleParams {
    std::size_t slots = 63;        // slot times j/(slots+1), all grid nodes
    double residual = 0.01;        // drop profile floor at t = 1
    double cap_margin = 0.0;       // caps sit exactly at their band target by default
    std::vector<std::size_t> band_sizes = {150, 250, 400, 700, 1200};
    double ramp_scale = 400.0;     // cap growth scale past the last band
};

class CounterexampleFamily {
  public:
    CounterexampleFamily(TimeGridPtr base_grid, CounterexampleParams params, std::uint64_t seed);

    const TimeGridPtr& grid() const { return grid_; }
    const CounterexampleParams& params() const { return params_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t max_index() const;            // total band size
    int band_of(std::size_t n) const;         // 1-based level; past-band indices return levels+1
    double slot_time(std::size_t i) const { return slot_times_[i]; }
    std::size_t slot_count() const { return slot_times_.size(); }
    std::size_t slot_node(std::size_t i) const { return slot_nodes_[i]; }
    double drop_before(std::size_t i) const { return drop_before_[i]; }
    double block_scale() const { return delta_; }
    double block_cap(std::size_t n, std::size_t i) const;

    struct BlockDraw {
        double excursion_max = 0.0;  // sup of the block's excursion
        bool won = false;            // absorbed at the cap
        double end = 0.0;            // -delta or +cap
    };
    BlockDraw draw(std::size_t scenario, std::size_t n, std::size_t i) const;

    /// Path of index n on scenario omega, on the family grid.
    LadlagPath path(std::size_t scenario, std::size_t n) const;
    PathBundle materialize(std::size_t n, std::size_t n_scenarios) const;

    /// sup of M^n over [lo, hi] (times), including in-flight excursions.
    double window_sup(std::size_t scenario, std::size_t n, double lo, double hi) const;

    /// M^n at time t (resolved blocks only).
    double value_at(std::size_t scenario, std::size_t n, double t) const;

  private:
    TimeGridPtr grid_;
    CounterexampleParams params_;
    std::uint64_t seed_ = 0;
    double delta_ = 0.0;
    std::vector<double> slot_times_;
    std::vector<std::size_t> slot_nodes_;
    std::vector<double> drop_before_;
    std::vector<std::size_t> band_start_;  // cumulative band offsets
};

struct AdaptiveTauResult {
    GridStoppingTime tau;            // node after the last found slot; terminal node on failure
    double p_tau_lt_1 = 0.0;         // est. P(all levels found, tau < 1)
    double p_tau_lt_1_se = 0.0;
    double p_levels_hold = 0.0;      // est. P(M^{n_m}_tau >= 2^m for all m)
    double p_levels_hold_se = 0.0;
    std::vector<double> mean_n_per_level;
    std::size_t scenarios = 0;
    // hypothesis diagnostics: exceedance of |M^n_t - (1-t)| > eps at probe indices
    std::vector<std::size_t> probe_indices;
    std::vector<double> probe_exceedance;
};

struct HypothesisCheckOptions {
    double eps = 0.05;
    double final_bound = 0.05;
    std::size_t probe_scenarios = 2000;
    std::vector<double> probe_times = {0.25, 0.5, 0.75, 1.0};
};

/// Worst-over-times exceedance per probe index; throws when the profile
/// fails to decrease to the final bound.
std::vector<double> ex2_hypothesis_check(const CounterexampleFamily& family,
                                         const std::vector<std::size_t>& probes,
                                         const HypothesisCheckOptions& opts);

/// The adaptive recursion: per scenario and level m, the first index
/// n > n_{m-1} whose path exceeds 2^m + 1 somewhere in the current
/// window; tau_m is that excursion time, and the window closes at the
/// first drop below 2^m (or inherits the previous endpoint).
AdaptiveTauResult ex2_adaptive_tau(const CounterexampleFamily& family, double eps, int m_max,
                                   std::size_t n_scenarios,
                                   const HypothesisCheckOptions& hypothesis = {},
                                   std::size_t workers = 1);

/// Lower bound ((alpha - 3 eps - (c+1) eps) / (c+1)) * p_A for the
/// excursion probability P(sup M > c + 1); requires alpha > (c+4) eps.
double ex2_gamma_bound(double c, double alpha, double eps, double p_A);

struct ExcursionEstimate {
    double estimate = 0.0;
    double se = 0.0;
};
/// est. P(sup over [lo, hi] of M^n > level) across scenarios.
ExcursionEstimate ex2_excursion_probability(const CounterexampleFamily& family, std::size_t n,
                                            double lo, double hi, double level,
                                            std::size_t n_scenarios);

}  // namespace lab
