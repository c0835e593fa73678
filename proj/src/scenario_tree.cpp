#include "lab/scenario_tree.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace lab {

ScenarioTree::ScenarioTree(TimeGridPtr grid, std::vector<std::vector<std::uint32_t>> atom_of_scenario,
                           std::vector<double> weights)
    : grid_(std::move(grid)), atom_of_(std::move(atom_of_scenario)), weights_(std::move(weights)) {
    if (!grid_) throw LabError("ScenarioTree: null grid");
    if (atom_of_.size() != grid_->size())
        throw LabError("ScenarioTree: need one partition per grid node");
    if (weights_.empty()) throw LabError("ScenarioTree: no scenarios");
    double sum = 0.0, carry = 0.0;
    for (double w : weights_) {
        if (w < 0.0) throw LabError("ScenarioTree: negative weight");
        const double y = w - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw LabError("ScenarioTree: weights must sum to 1");

    n_atoms_.resize(atom_of_.size());
    for (std::size_t k = 0; k < atom_of_.size(); ++k) {
        if (atom_of_[k].size() != weights_.size())
            throw LabError("ScenarioTree: partition row size mismatch");
        std::uint32_t maxa = 0;
        for (std::uint32_t a : atom_of_[k]) maxa = std::max(maxa, a);
        n_atoms_[k] = maxa + 1;
    }
    // partitions must refine: scenarios sharing an atom at level k share one at k-1
    for (std::size_t k = 1; k < atom_of_.size(); ++k) {
        std::vector<std::int64_t> parent_of(n_atoms_[k], -1);
        for (std::size_t s = 0; s < weights_.size(); ++s) {
            const std::uint32_t a = atom_of_[k][s];
            const std::uint32_t p = atom_of_[k - 1][s];
            if (parent_of[a] == -1) {
                parent_of[a] = p;
            } else if (parent_of[a] != p) {
                throw LabError("ScenarioTree: level " + std::to_string(k) +
                               " does not refine level " + std::to_string(k - 1));
            }
        }
    }
}

ScenarioTree ScenarioTree::trivial(TimeGridPtr grid, std::vector<double> weights) {
    std::vector<std::vector<std::uint32_t>> atoms(grid->size(),
                                                  std::vector<std::uint32_t>(weights.size(), 0));
    return ScenarioTree(std::move(grid), std::move(atoms), std::move(weights));
}

double ScenarioTree::atom_probability(std::size_t level, std::uint32_t atom) const {
    double p = 0.0;
    for (std::size_t s = 0; s < weights_.size(); ++s) {
        if (atom_of_[level][s] == atom) p += weights_[s];
    }
    return p;
}

std::vector<std::vector<std::uint32_t>> ScenarioTree::atoms(std::size_t level) const {
    std::vector<std::vector<std::uint32_t>> out(n_atoms_[level]);
    for (std::size_t s = 0; s < weights_.size(); ++s)
        out[atom_of_[level][s]].push_back(static_cast<std::uint32_t>(s));
    return out;
}

std::vector<double> ScenarioTree::conditional_expectation(std::span<const double> values,
                                                          int level) const {
    if (values.size() != weights_.size())
        throw LabError("conditional_expectation: value count mismatch");
    if (level < 0) {
        const double m = expectation(values);
        return std::vector<double>(weights_.size(), m);
    }
    const auto lvl = static_cast<std::size_t>(level);
    if (lvl >= atom_of_.size()) throw LabError("conditional_expectation: level out of range");
    std::vector<double> mass(n_atoms_[lvl], 0.0), acc(n_atoms_[lvl], 0.0);
    for (std::size_t s = 0; s < weights_.size(); ++s) {
        const std::uint32_t a = atom_of_[lvl][s];
        mass[a] += weights_[s];
        acc[a] += weights_[s] * values[s];
    }
    for (std::size_t a = 0; a < mass.size(); ++a) {
        if (mass[a] <= 0.0)
            throw LabError("conditional_expectation: zero-probability atom " + std::to_string(a) +
                           " at level " + std::to_string(level) + "; prune the tree");
    }
    std::vector<double> out(weights_.size());
    for (std::size_t s = 0; s < weights_.size(); ++s) {
        const std::uint32_t a = atom_of_[lvl][s];
        out[s] = acc[a] / mass[a];
    }
    return out;
}

double ScenarioTree::expectation(std::span<const double> values) const {
    double m = 0.0;
    for (std::size_t s = 0; s < weights_.size(); ++s) m += weights_[s] * values[s];
    return m;
}

AdaptedProcess::AdaptedProcess(ScenarioTreePtr t, PathBundle b) : tree(std::move(t)), bundle(std::move(b)) {
    if (!tree) throw LabError("AdaptedProcess: null tree");
    require_same_grid(tree->grid(), bundle.grid, "AdaptedProcess");
    if (bundle.scenarios() != tree->n_scenarios())
        throw LabError("AdaptedProcess: scenario count mismatch");
}

std::vector<double> AdaptedProcess::node_values(std::size_t k) const {
    std::vector<double> v(bundle.scenarios());
    for (std::size_t s = 0; s < v.size(); ++s) v[s] = bundle.paths[s].node_value(k);
    return v;
}

std::vector<double> AdaptedProcess::interval_values(std::size_t k) const {
    std::vector<double> v(bundle.scenarios());
    for (std::size_t s = 0; s < v.size(); ++s) v[s] = bundle.paths[s].interval_value(k);
    return v;
}

bool is_measurable(const ScenarioTree& tree, std::span<const double> values, int level, double tol) {
    if (level < 0) {
        for (std::size_t s = 1; s < values.size(); ++s) {
            if (std::abs(values[s] - values[0]) > tol) return false;
        }
        return true;
    }
    const auto lvl = static_cast<std::size_t>(level);
    std::vector<double> rep(tree.n_atoms(lvl), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t s = 0; s < values.size(); ++s) {
        const std::uint32_t a = tree.atom_of(lvl, s);
        if (std::isnan(rep[a])) {
            rep[a] = values[s];
        } else if (std::abs(rep[a] - values[s]) > tol) {
            return false;
        }
    }
    return true;
}

void require_adapted(const AdaptedProcess& X, const char* where) {
    const std::size_t K = X.nodes() - 1;
    for (std::size_t k = 0; k <= K; ++k) {
        if (!is_measurable(*X.tree, X.node_values(k), static_cast<int>(k)))
            throw LabError(std::string(where) + ": node values at level " + std::to_string(k) +
                           " are not atom-measurable");
        if (k < K && !is_measurable(*X.tree, X.interval_values(k), static_cast<int>(k)))
            throw LabError(std::string(where) + ": interval values at level " + std::to_string(k) +
                           " are not atom-measurable");
    }
}

namespace {

// records per-atom slack of the inequality lhs >= E[rhs | F_cond]
void collect_step(const ScenarioTree& tree, std::span<const double> lhs, std::span<const double> rhs,
                  int cond_level, std::size_t node, bool node_to_interval, bool equality, double tol,
                  SupermartingaleReport& rep) {
    const std::vector<double> ce = tree.conditional_expectation(rhs, cond_level);
    const std::size_t group_level = cond_level < 0 ? 0 : static_cast<std::size_t>(cond_level);
    std::vector<bool> seen(cond_level < 0 ? 1 : tree.n_atoms(group_level), false);
    for (std::size_t s = 0; s < lhs.size(); ++s) {
        const std::uint32_t a = cond_level < 0 ? 0 : tree.atom_of(group_level, s);
        if (seen[a]) continue;
        seen[a] = true;
        const double slack = lhs[s] - ce[s];
        rep.max_abs_slack = std::max(rep.max_abs_slack, std::abs(slack));
        const bool bad = equality ? std::abs(slack) > tol : slack < -tol;
        if (bad) {
            rep.ok = false;
            rep.worst_slack = std::min(rep.worst_slack, equality ? -std::abs(slack) : slack);
            rep.violations.push_back({node, node_to_interval, a, slack});
        } else if (!equality) {
            rep.worst_slack = std::min(rep.worst_slack, slack);
        }
    }
}

SupermartingaleReport run_chain_checks(const AdaptedProcess& X, bool equality, bool predictable,
                                       double tol) {
    require_adapted(X, predictable ? "check_predictable_strong_supermartingale"
                                   : (equality ? "check_martingale"
                                               : "check_optional_strong_supermartingale"));
    if (predictable) {
        const std::size_t K = X.nodes() - 1;
        for (std::size_t k = 0; k <= K; ++k) {
            if (!is_measurable(*X.tree, X.node_values(k), static_cast<int>(k) - 1))
                throw LabError("check_predictable_strong_supermartingale: node values at level " +
                               std::to_string(k) + " are not measurable at the parent level");
        }
    }
    SupermartingaleReport rep;
    const std::size_t K = X.nodes() - 1;
    for (std::size_t k = 0; k <= K; ++k) {
        const std::vector<double> Vk = X.node_values(k);
        if (k < K) {
            const std::vector<double> Ik = X.interval_values(k);
            const int cond = predictable ? static_cast<int>(k) - 1 : static_cast<int>(k);
            // a predictable process carries the left-limit convention at
            // time 0, so its node-0 value constrains nothing
            if (!(predictable && k == 0)) {
                collect_step(*X.tree, Vk, Ik, cond, k, true, equality, tol, rep);
            }
            const std::vector<double> Vnext = X.node_values(k + 1);
            collect_step(*X.tree, Ik, Vnext, static_cast<int>(k), k, false, equality, tol, rep);
        }
    }
    if (!rep.ok) {
        rep.message = std::to_string(rep.violations.size()) + " chain step(s) violated, worst slack " +
                      std::to_string(rep.worst_slack);
    }
    return rep;
}

}  // namespace

SupermartingaleReport check_optional_strong_supermartingale(const AdaptedProcess& X, double tol) {
    return run_chain_checks(X, /*equality=*/false, /*predictable=*/false, tol);
}

SupermartingaleReport check_martingale(const AdaptedProcess& X, double tol) {
    return run_chain_checks(X, /*equality=*/true, /*predictable=*/false, tol);
}

SupermartingaleReport check_predictable_strong_supermartingale(const AdaptedProcess& X, double tol) {
    return run_chain_checks(X, /*equality=*/false, /*predictable=*/true, tol);
}

MertensDecomposition mertens_decomposition(const AdaptedProcess& X, double tol) {
    const SupermartingaleReport pre = check_optional_strong_supermartingale(X, tol);
    if (!pre.ok)
        throw LabError("mertens_decomposition: input is not an optional strong supermartingale (" +
                       pre.message + ")");

    const std::size_t S = X.bundle.scenarios();
    const std::size_t K = X.nodes() - 1;
    std::vector<std::vector<double>> a_node(K + 1, std::vector<double>(S, 0.0));
    std::vector<std::vector<double>> a_intv(K, std::vector<double>(S, 0.0));

    // A_0 = 0; right step at node k adds E[V_k - I_k | F_k] (pointwise,
    // both measurable), node step adds E[I_k - V_{k+1} | F_k].
    for (std::size_t k = 0; k < K; ++k) {
        const std::vector<double> Vk = X.node_values(k);
        const std::vector<double> Ik = X.interval_values(k);
        const std::vector<double> Vn = X.node_values(k + 1);
        std::vector<double> dec(S);
        for (std::size_t s = 0; s < S; ++s) dec[s] = Vk[s] - Ik[s];
        const std::vector<double> right_inc = X.tree->conditional_expectation(dec, static_cast<int>(k));
        for (std::size_t s = 0; s < S; ++s) dec[s] = Ik[s] - Vn[s];
        const std::vector<double> left_inc = X.tree->conditional_expectation(dec, static_cast<int>(k));
        for (std::size_t s = 0; s < S; ++s) {
            a_intv[k][s] = a_node[k][s] + right_inc[s];
            a_node[k + 1][s] = a_intv[k][s] + left_inc[s];
        }
    }

    std::vector<LadlagPath> a_paths, m_paths;
    a_paths.reserve(S);
    m_paths.reserve(S);
    for (std::size_t s = 0; s < S; ++s) {
        std::vector<double> an(K + 1), ai(K), mn(K + 1), mi(K);
        for (std::size_t k = 0; k <= K; ++k) {
            an[k] = a_node[k][s];
            mn[k] = X.bundle.paths[s].node_value(k) + an[k];
        }
        for (std::size_t k = 0; k < K; ++k) {
            ai[k] = a_intv[k][s];
            mi[k] = X.bundle.paths[s].interval_value(k) + ai[k];
        }
        a_paths.emplace_back(X.bundle.grid, std::move(an), std::move(ai));
        m_paths.emplace_back(X.bundle.grid, std::move(mn), std::move(mi));
    }
    MertensDecomposition out;
    out.compensator = AdaptedProcess(
        X.tree, PathBundle(X.bundle.grid, std::move(a_paths), X.bundle.weights, X.bundle.provenance));
    out.martingale = AdaptedProcess(
        X.tree, PathBundle(X.bundle.grid, std::move(m_paths), X.bundle.weights, X.bundle.provenance));
    return out;
}

PathBundle indicator_from(const ScenarioTreePtr& tree, const GridStoppingTime& sigma) {
    require_same_grid(tree->grid(), sigma.grid, "indicator_from");
    const std::size_t S = tree->n_scenarios();
    const std::size_t K = tree->grid()->size() - 1;
    std::vector<LadlagPath> paths;
    paths.reserve(S);
    for (std::size_t s = 0; s < S; ++s) {
        std::vector<double> nodes(K + 1, 0.0);
        if (!sigma.never(s)) {
            for (std::size_t k = sigma.node_of[s]; k <= K; ++k) nodes[k] = 1.0;
        }
        paths.push_back(LadlagPath::cadlag(tree->grid(), std::move(nodes)));
    }
    return PathBundle(tree->grid(), std::move(paths), tree->weights());
}

AdaptedProcess compensator_of_jump_time(const ScenarioTreePtr& tree, const GridStoppingTime& sigma,
                                        std::span<const double> hazards, double tol) {
    require_same_grid(tree->grid(), sigma.grid, "compensator_of_jump_time");
    const std::size_t K = tree->grid()->size() - 1;
    const std::size_t S = tree->n_scenarios();
    if (hazards.size() != K + 1) throw LabError("compensator_of_jump_time: need one hazard per node");
    const AdaptednessCheck adapted = validate_stopping_time(sigma, *tree);
    if (!adapted.ok)
        throw LabError("compensator_of_jump_time: sigma is not a stopping time (" + adapted.message + ")");

    // hazards must reproduce the tree law exactly: per level-(k-1) atom with
    // survivors, P(sigma = t_k | sigma >= t_k, atom) = h_k
    for (std::size_t k = 0; k <= K; ++k) {
        const double h = hazards[k];
        if (h < 0.0 || h > 1.0) throw LabError("compensator_of_jump_time: hazard outside [0,1]");
        double surv_any = 0.0;
        for (std::size_t s = 0; s < S; ++s) {
            if (sigma.never(s) || sigma.node_of[s] > k) surv_any += tree->weights()[s];
        }
        if (h >= 1.0 && surv_any > 0.0)
            throw LabError("compensator_of_jump_time: hazard >= 1 at level " + std::to_string(k) +
                           " while survival continues");
        const std::size_t n_atoms = k == 0 ? 1 : tree->n_atoms(k - 1);
        std::vector<double> at_risk(n_atoms, 0.0), jumped(n_atoms, 0.0);
        for (std::size_t s = 0; s < S; ++s) {
            const std::uint32_t a = k == 0 ? 0 : tree->atom_of(k - 1, s);
            const bool risk = sigma.never(s) || sigma.node_of[s] >= k;
            if (risk) {
                at_risk[a] += tree->weights()[s];
                if (!sigma.never(s) && sigma.node_of[s] == k) jumped[a] += tree->weights()[s];
            }
        }
        for (std::size_t a = 0; a < n_atoms; ++a) {
            if (at_risk[a] <= 0.0) continue;
            if (std::abs(jumped[a] / at_risk[a] - h) > tol)
                throw LabError("compensator_of_jump_time: tree law disagrees with hazard at level " +
                               std::to_string(k) + " (atom " + std::to_string(a) + ": " +
                               std::to_string(jumped[a] / at_risk[a]) + " vs " + std::to_string(h) + ")");
        }
    }

    std::vector<LadlagPath> paths;
    paths.reserve(S);
    for (std::size_t s = 0; s < S; ++s) {
        std::vector<double> nodes(K + 1, 0.0);
        double acc = 0.0;
        for (std::size_t k = 0; k <= K; ++k) {
            const bool at_risk = sigma.never(s) || sigma.node_of[s] >= k;
            if (at_risk) acc += hazards[k];
            nodes[k] = acc;
        }
        paths.push_back(LadlagPath::cadlag(tree->grid(), std::move(nodes)));
    }
    return AdaptedProcess(tree, PathBundle(tree->grid(), std::move(paths), tree->weights()));
}

RelationReport check_double_arrow_relation(const AdaptedProcess& X1, const AdaptedProcess& X0,
                                           double tol) {
    require_same_grid(X1.bundle.grid, X0.bundle.grid, "check_double_arrow_relation");
    if (X1.tree != X0.tree && X1.tree->n_scenarios() != X0.tree->n_scenarios())
        throw LabError("check_double_arrow_relation: scenario spaces differ");
    const ScenarioTree& tree = *X1.tree;
    const std::size_t K = X1.nodes() - 1;
    const std::size_t S = X1.bundle.scenarios();
    RelationReport rep;

    for (std::size_t k = 0; k <= K; ++k) {
        std::vector<double> left(S), x0k(S), x1k(S);
        for (std::size_t s = 0; s < S; ++s) {
            left[s] = X1.bundle.paths[s].left_limit(k);
            x0k[s] = X0.bundle.paths[s].node_value(k);
            x1k[s] = X1.bundle.paths[s].node_value(k);
        }
        const int parent = static_cast<int>(k) - 1;
        const std::size_t group = parent < 0 ? 0 : static_cast<std::size_t>(parent);
        std::vector<bool> seen(parent < 0 ? 1 : tree.n_atoms(group), false);
        const std::vector<double> ce =
            k == 0 ? std::vector<double>(S, 0.0) : tree.conditional_expectation(x1k, parent);
        for (std::size_t s = 0; s < S; ++s) {
            const std::uint32_t a = parent < 0 ? 0 : tree.atom_of(group, s);
            if (seen[a]) continue;
            seen[a] = true;
            const double slack1 = left[s] - x0k[s];
            rep.worst_slack = std::min(rep.worst_slack, slack1);
            if (slack1 < -tol) {
                rep.ok = false;
                rep.violations.push_back({k, a, 1, slack1});
            }
            if (k >= 1) {  // the conditional inequality starts at the first node
                const double slack2 = x0k[s] - ce[s];
                rep.worst_slack = std::min(rep.worst_slack, slack2);
                if (slack2 < -tol) {
                    rep.ok = false;
                    rep.violations.push_back({k, a, 2, slack2});
                }
            }
        }
    }
    return rep;
}

}  // namespace lab
