#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lab/ladlag_path.hpp"
#include "lab/timebase.hpp"

namespace lab {

/// Finite filtered probability space on a grid: one partition of the
/// scenario set per grid node, refining from level to level, plus
/// scenario weights. Conditional expectations are exact atom-wise
/// weighted averages. Level -1 denotes the trivial partition and models
/// the sigma-algebra strictly before node 0.
class ScenarioTree {
  public:
    ScenarioTree(TimeGridPtr grid, std::vector<std::vector<std::uint32_t>> atom_of_scenario,
                 std::vector<double> weights);

    // one-atom filtration at every level
    static ScenarioTree trivial(TimeGridPtr grid, std::vector<double> weights);

    const TimeGridPtr& grid() const { return grid_; }
    std::size_t n_levels() const { return atom_of_.size(); }
    std::size_t n_scenarios() const { return weights_.size(); }
    std::size_t n_atoms(std::size_t level) const { return n_atoms_[level]; }
    std::uint32_t atom_of(std::size_t level, std::size_t scenario) const {
        return atom_of_[level][scenario];
    }
    const std::vector<double>& weights() const { return weights_; }
    double atom_probability(std::size_t level, std::uint32_t atom) const;
    std::vector<std::vector<std::uint32_t>> atoms(std::size_t level) const;

    /// E[values | F_level], constant per atom; level -1 gives the
    /// all-scenario mean. Throws on zero-probability atoms.
    std::vector<double> conditional_expectation(std::span<const double> values, int level) const;

    double expectation(std::span<const double> values) const;

  private:
    TimeGridPtr grid_;
    std::vector<std::vector<std::uint32_t>> atom_of_;  // level x scenario -> atom id
    std::vector<std::size_t> n_atoms_;
    std::vector<double> weights_;
};

using ScenarioTreePtr = std::shared_ptr<const ScenarioTree>;

/// A path bundle whose node values are measurable at their level and
/// whose interval values are measurable at the interval's left level.
struct AdaptedProcess {
    ScenarioTreePtr tree;
    PathBundle bundle;

    AdaptedProcess() = default;
    AdaptedProcess(ScenarioTreePtr t, PathBundle b);

    std::size_t nodes() const { return bundle.grid->size(); }
    std::vector<double> node_values(std::size_t k) const;
    std::vector<double> interval_values(std::size_t k) const;
};

// measurability helpers
bool is_measurable(const ScenarioTree& tree, std::span<const double> values, int level,
                   double tol = 1e-12);
void require_adapted(const AdaptedProcess& X, const char* where);

struct SupermartingaleViolation {
    std::size_t level = 0;       // node index of the earlier chain point
    bool node_to_interval = false;
    std::uint32_t atom = 0;      // atom at the conditioning level
    double slack = 0.0;          // negative where the inequality fails
};

struct SupermartingaleReport {
    bool ok = true;
    double worst_slack = 0.0;    // most negative slack seen (0 when clean)
    double max_abs_slack = 0.0;  // for martingale checks: largest |deviation|
    std::vector<SupermartingaleViolation> violations;
    std::string message;
};

/// One-step inequalities along the double-index chain:
///   V_k >= E[I_k | F_k] and I_k >= E[V_{k+1} | F_k].
/// On a finite chain these imply the inequality at every pair of grid
/// stopping times by optional sampling.
SupermartingaleReport check_optional_strong_supermartingale(const AdaptedProcess& X, double tol = 1e-12);

/// Equality version of the chain conditions (V_k = I_k and
/// I_k = E[V_{k+1} | F_k]); max_abs_slack reports the worst deviation.
SupermartingaleReport check_martingale(const AdaptedProcess& X, double tol = 1e-12);

/// Predictable variant: node values must be measurable one level early,
/// and the within-node step conditions on the parent level:
///   V_k >= E[I_k | F_{k-1}] and I_k >= E[V_{k+1} | F_k].
/// Throws on non-predictable input.
SupermartingaleReport check_predictable_strong_supermartingale(const AdaptedProcess& X,
                                                               double tol = 1e-12);

struct MertensDecomposition {
    AdaptedProcess martingale;   // cadlag chain martingale M
    AdaptedProcess compensator;  // non-decreasing predictable A, A_0 = 0
};

/// Doob construction along the double-index chain: A accumulates the
/// conditional decrements of X, M = X + A. Unique on a finite tree.
MertensDecomposition mertens_decomposition(const AdaptedProcess& X, double tol = 1e-12);

/// Predictable non-decreasing A with node increments h_k on {sigma >= t_k}
/// (nothing after sigma), making 1_{[[sigma,1]]} - A an exact tree
/// martingale. The per-level hazards must match the tree law
/// P(sigma = t_k | sigma >= t_k, F_{k-1}) exactly.
AdaptedProcess compensator_of_jump_time(const ScenarioTreePtr& tree, const GridStoppingTime& sigma,
                                        std::span<const double> hazards, double tol = 1e-9);

/// Cadlag indicator process 1_{[[sigma,1]]} on the tree's grid.
PathBundle indicator_from(const ScenarioTreePtr& tree, const GridStoppingTime& sigma);

struct RelationViolation {
    std::size_t node = 0;
    std::uint32_t atom = 0;
    int which = 0;  // 1: X1_{t-} >= X0_t, 2: X0_t >= E[X1_t | F_{t-}]
    double slack = 0.0;
};

struct RelationReport {
    bool ok = true;
    double worst_slack = 0.0;
    std::vector<RelationViolation> violations;
};

/// Double-arrow relation at every grid node k >= 1 (grid nodes act as
/// predictable times):  X1_{t_k-} >= X0_{t_k} >= E[X1_{t_k} | F_{k-1}].
/// At node 0 only the first inequality is meaningful (left limits are 0
/// by convention) and the conditional one is skipped.
RelationReport check_double_arrow_relation(const AdaptedProcess& X1, const AdaptedProcess& X0,
                                           double tol = 1e-12);

}  // namespace lab
