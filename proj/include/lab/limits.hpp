#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lab/ladlag_path.hpp"
#include "lab/scenario_tree.hpp"
#include "lab/timebase.hpp"

namespace lab {

/// Forward convex combinations: output n is a weight vector over inputs
/// {n, n+1, ...}. Composition of two schemes is again a scheme with
/// forward support.
class ConvexScheme {
  public:
    // weights[n][j] is the weight of input n+j in output n
    explicit ConvexScheme(std::vector<std::vector<double>> weights);

    static ConvexScheme identity(std::size_t n_outputs);
    // output n = uniform average of inputs n..n_inputs-1
    static ConvexScheme tail_uniform(std::size_t n_inputs, std::size_t n_outputs);

    std::size_t outputs() const { return weights_.size(); }
    const std::vector<double>& row(std::size_t n) const { return weights_[n]; }

    // (other ∘ this): apply this scheme first, then other
    ConvexScheme compose(const ConvexScheme& other) const;

    std::vector<std::vector<double>> combine(const std::vector<std::vector<double>>& columns) const;

  private:
    std::vector<std::vector<double>> weights_;
};

/// Rectangular sample array, scenarios x indices.
struct SampleMatrix {
    std::size_t scenarios = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major: data[s * cols + n]

    SampleMatrix() = default;
    SampleMatrix(std::size_t s, std::size_t c) : scenarios(s), cols(c), data(s * c, 0.0) {}
    double& at(std::size_t s, std::size_t n) { return data[s * cols + n]; }
    double at(std::size_t s, std::size_t n) const { return data[s * cols + n]; }
};

/// Running means along a strictly increasing subsequence, per scenario:
/// out(s, J) = mean of samples(s, subsequence[0..J]).
SampleMatrix cesaro_means(const SampleMatrix& samples, const std::vector<std::size_t>& subsequence);

struct KomlosOptions {
    double column_mean_bound = 1e12;  // L1-boundedness guard
    double truncation_base = 0.0;     // 0: derived from the data
    double cauchy_eps = 0.1;          // diagnostic level
    std::size_t max_outputs = 0;      // 0: as many as the subsequence allows
};

struct KomlosResult {
    ConvexScheme scheme = ConvexScheme::identity(0);
    std::vector<std::size_t> subsequence;
    // est. P(|f~_n - f~_{n+1}| > cauchy_eps) for consecutive outputs
    std::vector<double> cauchy_estimates;
};

/// Greedy forward extraction: pick a subsequence on which empirical
/// upper tails P(f_n > C 2^m) fall below 2^-m along a doubling
/// truncation ladder, then take uniform tail averages of the
/// subsequence. Scenario weights are uniform here; weighted callers
/// resample first.
KomlosResult komlos_extract(const SampleMatrix& samples, const KomlosOptions& opts = {});

std::vector<PathBundle> apply_scheme(const std::vector<PathBundle>& bundles, const ConvexScheme& scheme);

struct FatouOptions {
    double node_eps = 1e-9;          // per-scenario stabilization tolerance
    std::size_t window = 3;          // trailing indices that must agree
    double max_unstable_mass = 1e-3; // scenario mass allowed to keep moving
    // When set, scenarios that keep moving inherit the weighted median of
    // the stabilized scenarios in their finest-level atom, keeping the
    // limit measurable; otherwise (or when the atom has no stabilized
    // member) the global weighted median is used.
    ScenarioTreePtr impute_tree;
};

/// Fatou limit along a designated sub-grid: per-node limits Z_q are the
/// stabilized trailing values (scenarios still moving get the weighted
/// median of the stabilized ones, allowed up to max_unstable_mass), and
/// the output at t is Z at the first sub-grid node strictly above t
/// (Z_1 at the terminal node). Output is cadlag by construction.
PathBundle fatou_limit(const std::vector<PathBundle>& bundles,
                       const std::vector<std::size_t>& subgrid_nodes, const FatouOptions& opts = {});

/// Per-node in-probability limits of node values (X1) and of left
/// limits (X0), with the same stabilization rule as fatou_limit.
/// X0's value at node 0 is 0 by the left-limit convention.
struct DoubleLimit {
    PathBundle optional_part;    // X1: limit of values
    PathBundle predictable_part; // X0: limit of left limits
};
DoubleLimit double_limit(const std::vector<PathBundle>& bundles, const FatouOptions& opts = {});

struct ConvergenceCell {
    std::size_t sequence_index = 0;
    std::string tau_id;
    Side side = Side::Right;
    double eps = 0.0;
    double estimate = 0.0;
    double stderr_ = 0.0;
    std::size_t samples = 0;
};

struct ConvergenceReport {
    std::vector<ConvergenceCell> cells;
    std::uint64_t seed = 0;

    // is the estimate sequence for (tau, side, eps) eventually below the bound?
    bool eventually_below(const std::string& tau_id, Side side, double eps, double bound) const;
    double last_estimate(const std::string& tau_id, Side side, double eps) const;
};

struct NamedStoppingTime {
    std::string id;
    GridStoppingTime tau;
};

/// Empirical exceedance P(|X^n_tau - target_tau| > eps) with binomial
/// standard errors, for every (n, tau, eps) cell.
ConvergenceReport convergence_in_probability(const std::vector<PathBundle>& bundles,
                                             const PathBundle& target,
                                             const std::vector<NamedStoppingTime>& taus,
                                             const std::vector<double>& eps_list, Side side);

/// E[(X^n_tau - target_tau)^-] per sequence index.
std::vector<double> one_sided_gap(const std::vector<PathBundle>& bundles, const PathBundle& target,
                                  const GridStoppingTime& tau);

struct LeftLimitCheck {
    ConvergenceReport exceedance;           // left-limit exceedance per n
    std::vector<double> dyadic_gap;         // sup over zoo of P(|X_{tau_m - 2^-m} - X_{tau-}| > eps)
    std::vector<int> dyadic_levels;
    bool gap_decreasing = true;
};

/// Left-limit convergence at a stopping time plus the dyadic-gap
/// diagnostic: for each level m, evaluates the zoo of processes at the
/// node one dyadic step before the m-th dyadic approximation of tau and
/// compares with the left limit at tau.
LeftLimitCheck left_limit_convergence_check(const std::vector<PathBundle>& bundles,
                                            const PathBundle& target, const GridStoppingTime& sigma,
                                            double eps, const std::vector<PathBundle>& zoo,
                                            const std::vector<int>& dyadic_levels);

// weighted exceedance helpers shared by the estimators
double exceedance_estimate(const std::vector<double>& a, const std::vector<double>& b,
                           const std::vector<double>& weights, double eps);
double binomial_stderr(double p, const std::vector<double>& weights);

}  // namespace lab
