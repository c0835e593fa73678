#pragma once

#include <cstdint>
#include <vector>

#include "lab/ladlag_path.hpp"
#include "lab/scenario_tree.hpp"
#include "lab/timebase.hpp"

namespace lab {

/// Conditional jump probabilities per grid node for a randomized jump
/// time; the randomization is independent of everything else, the
/// computable surrogate for total inaccessibility on a grid.
struct HazardSpec {
    std::vector<double> per_level;  // h_k per node, h_0 usually 0
    bool independent = true;

    static HazardSpec proportional(const TimeGrid& grid, double rate);
    void validate(std::size_t n_nodes) const;
};

/// Brownian node samples with cadlag interval convention; deterministic
/// per (seed, scenario).
PathBundle brownian_bundle(TimeGridPtr grid, std::size_t n_scenarios, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Two-point mass-escape martingale family: M^n = 1 + (Y_n - 1) 1_{(c_n,1]}
// with c_n = (1 + 1/n)/2, P(Y_n = n) = 1/n. Coupled across n through one
// uniform per scenario, so per-scenario limits stabilize.
// ---------------------------------------------------------------------------

double ex0_jump_time(int n);
// grid refined so that the jump time is a node
TimeGridPtr ex0_grid(TimeGridPtr base, const std::vector<int>& n_list);

/// Monte Carlo backend (seeded uniforms, equal weights).
PathBundle ex0_bundle(int n, TimeGridPtr grid, std::size_t n_scenarios, std::uint64_t seed);

/// Exact single-n backend: two atoms with weights {1/n, 1 - 1/n} and the
/// filtration splitting at the jump node.
struct Ex0Tree {
    ScenarioTreePtr tree;
    AdaptedProcess martingale;
};
Ex0Tree ex0_tree(int n, TimeGridPtr grid);

/// Exact coupled family on quantile strata of the shared uniform; the
/// per-n expectations are exact and per-scenario values stabilize once
/// 1/n falls below a scenario's stratum.
struct Ex0Family {
    TimeGridPtr grid;
    std::vector<int> n_list;
    std::vector<PathBundle> bundles;
    ScenarioTreePtr tree;  // filtration revealing each indicator at its jump node
};
Ex0Family ex0_family(const std::vector<int>& n_list, TimeGridPtr base);

// ---------------------------------------------------------------------------
// Stopped-integrand building block: the discretized stochastic integral
// of psi_t = 1/(w - (t - rho)) on (rho, rho + w), w = 2^-n, against a
// Brownian carrier, stopped at the first hit of -1 or +k. Simulated in
// quadratic-variation time with Brownian-bridge barrier absorption, so
// recorded paths stay in [-1, k] and every step has exactly zero
// conditional drift.
// ---------------------------------------------------------------------------

struct BlockOptions {
    int geometric_nodes = 18;     // sub-grid doublings toward rho + w
    double step_variance = 0.25;  // per-substep QV cap
    double no_hit_mass = 1e-3;    // target P(neither barrier hit)
};

// times rho + w (1 - 2^-j) for j = 1..geometric_nodes, per start time
std::vector<double> block_refinement_times(const std::vector<double>& rho_values, int n,
                                           const BlockOptions& opts = {});

/// One block bundle: zero on [0, rho], then the stopped martingale.
PathBundle indicator_block_martingales(const GridStoppingTime& rho, int n, double upper_level,
                                       TimeGridPtr grid, std::size_t n_scenarios, std::uint64_t seed,
                                       const BlockOptions& opts = {});

// ---------------------------------------------------------------------------
// Compensated-jump example family: a hazard-randomized jump time sigma
// with compensator A, X1 = 1 - A continuous-like, X2 = X1 + 1_{[[sigma]]},
// and the approximating martingales
//   M1n = 1 - A + Y_n 1_{[[sigma,1]]},
//   M2n = 1 - A + 1_{[[sigma,1]]} + (Y_n - 1) 1_{[[sigma + 1/n,1]]}.
// Exact strata backend: scenario = (jump level) x (uniform stratum).
// The Y-mark is revealed at sigma for M1n but only at sigma + 1/n for
// M2n, so each family has its own filtration over one scenario space.
// ---------------------------------------------------------------------------

struct CompensatorFamily {
    TimeGridPtr grid;
    std::vector<int> n_list;
    GridStoppingTime sigma;
    std::vector<double> hazards;
    ScenarioTreePtr tree_sigma;              // reveals only sigma
    ScenarioTreePtr tree_m1;                 // reveals the mark at sigma
    std::vector<ScenarioTreePtr> tree_m2;    // per n: reveals the mark at sigma + 1/n
    AdaptedProcess compensator;              // A on tree_sigma
    PathBundle x1, x2;
    std::vector<PathBundle> m1, m2;          // per n
    std::vector<std::size_t> jump_levels;    // sigma support (node indices)

    // scenarios where sigma is finite, with renormalized weights
    std::vector<std::size_t> finite_sigma_scenarios() const;
};

/// Indices above refine_max_n do not get their own shifted grid nodes;
/// their delayed jump snaps to the first node at or past sigma + 1/n.
/// With odd_jump_support, sigma's support avoids the even base nodes, so
/// the coarser dyadic sets never hit the jump time exactly.
CompensatorFamily compensator_family(double rate, const std::vector<int>& n_list, TimeGridPtr base,
                                     int refine_max_n = (1 << 20), bool odd_jump_support = true);

/// Monte Carlo backend of the same example for one n.
struct CompensatorExampleMc {
    TimeGridPtr grid;
    GridStoppingTime sigma;
    std::vector<double> hazards;
    PathBundle x1, x2, m1n, m2n;
};
CompensatorExampleMc compensator_example_mc(const HazardSpec& hazard, int n, TimeGridPtr grid,
                                            std::size_t n_scenarios, std::uint64_t seed);

// restriction helper: keep the masked scenarios, renormalize weights
PathBundle restrict_bundle(const PathBundle& bundle, const std::vector<std::size_t>& keep);
GridStoppingTime restrict_stopping_time(const GridStoppingTime& tau,
                                        const std::vector<std::size_t>& keep);

// ---------------------------------------------------------------------------
// Martingale approximation of an optional strong supermartingale on a
// tree. Mertens-decomposes the target, then rebuilds -A from independent
// two-point gamble blocks (win probability 1/(k(n)+1), k(n) = 2^(n+1))
// resolving one node after their stopping times, on a bit-enriched tree
// where every output is an exact martingale.
// ---------------------------------------------------------------------------

struct ApproximationPlan {
    int levels = 5;                    // outputs n = 1..levels
    double left_jump_threshold = 0.2;  // node increments above this count as genuine left jumps
    int ladder_exponent_base = 1;      // k(n) = 2^(base + n)
    std::size_t max_staircase_steps = 8;
    double tol_continuous = 0.1, tol_right = 0.1, tol_left = 0.1;  // reported per-part targets
};

struct ApproximationOutput {
    ScenarioTreePtr tree;          // enriched tree for this index
    AdaptedProcess martingale;     // M^n, exact on `tree`
    AdaptedProcess target;         // X lifted to `tree`
    std::vector<std::size_t> base_scenario;  // enriched -> base scenario map
    double bound = 0.0;            // path bound of M^n
};

struct ApproximationResult {
    std::vector<ApproximationOutput> outputs;  // one per n = 1..levels
};

ApproximationResult approximate_supermartingale(const AdaptedProcess& X, const ApproximationPlan& plan,
                                                std::uint64_t seed);

/// Exceedance of |M^n_tau - X_tau| > eps on the enriched spaces, per n.
std::vector<double> approximation_exceedance(const ApproximationResult& approx,
                                             const GridStoppingTime& tau_base, double eps);

}  // namespace lab
