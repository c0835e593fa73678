#include "lab/constructions.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "lab/rng.hpp"

namespace lab {

HazardSpec HazardSpec::proportional(const TimeGrid& grid, double rate) {
    HazardSpec hz;
    hz.per_level.assign(grid.size(), 0.0);
    for (std::size_t k = 1; k < grid.size(); ++k) {
        hz.per_level[k] = rate * (grid.node(k) - grid.node(k - 1));
    }
    return hz;
}

void HazardSpec::validate(std::size_t n_nodes) const {
    if (per_level.size() != n_nodes) throw LabError("HazardSpec: need one hazard per grid node");
    for (std::size_t k = 0; k < per_level.size(); ++k) {
        const double h = per_level[k];
        if (h < 0.0 || h > 1.0) throw LabError("HazardSpec: hazard outside [0,1]");
        if (h >= 1.0 && k + 1 < per_level.size())
            throw LabError("HazardSpec: hazard 1 before the final level");
    }
}

PathBundle brownian_bundle(TimeGridPtr grid, std::size_t n_scenarios, std::uint64_t seed) {
    if (n_scenarios == 0) throw LabError("brownian_bundle: need scenarios");
    std::vector<LadlagPath> paths;
    paths.reserve(n_scenarios);
    for (std::size_t s = 0; s < n_scenarios; ++s) {
        RngStream rng = RngStream::derive(seed, s);
        std::vector<double> nodes(grid->size());
        nodes[0] = 0.0;
        for (std::size_t k = 1; k < grid->size(); ++k) {
            const double dt = grid->node(k) - grid->node(k - 1);
            nodes[k] = nodes[k - 1] + std::sqrt(dt) * rng.normal();
        }
        paths.push_back(LadlagPath::cadlag(grid, std::move(nodes)));
    }
    return PathBundle(grid, std::move(paths), PathBundle::uniform_weights(n_scenarios),
                      Provenance{seed, "brownian"});
}

// -------------------------------------------------------------------------
// two-point mass-escape family
// -------------------------------------------------------------------------

double ex0_jump_time(int n) {
    if (n < 1) throw LabError("ex0_jump_time: n >= 1");
    return 0.5 * (1.0 + 1.0 / static_cast<double>(n));
}

TimeGridPtr ex0_grid(TimeGridPtr base, const std::vector<int>& n_list) {
    std::vector<double> extra{0.5};
    for (int n : n_list) extra.push_back(ex0_jump_time(n));
    return std::make_shared<TimeGrid>(base->refined_with(extra));
}

namespace {

// The left-open jump interval contains no grid point before the first
// node strictly after the boundary, so on the grid the martingale is the
// cadlag staircase with a left jump there; the left limit at that node
// stays 1 and the mark is revealed exactly when the value moves.
LadlagPath ex0_path(const TimeGridPtr& grid, int n, bool high) {
    const auto jn = grid->find_node(ex0_jump_time(n));
    if (!jn) throw RefinementRequiredError("ex0: jump time is not a grid node");
    const double y = high ? static_cast<double>(n) : 0.0;
    std::vector<double> nodes(grid->size(), 1.0);
    for (std::size_t k = *jn + 1; k < grid->size(); ++k) nodes[k] = y;
    return LadlagPath::cadlag(grid, std::move(nodes));
}

}  // namespace

PathBundle ex0_bundle(int n, TimeGridPtr grid, std::size_t n_scenarios, std::uint64_t seed) {
    if (!grid->find_node(ex0_jump_time(n)))
        throw RefinementRequiredError("ex0_bundle: refine the grid with ex0_grid first");
    std::vector<LadlagPath> paths;
    paths.reserve(n_scenarios);
    for (std::size_t s = 0; s < n_scenarios; ++s) {
        RngStream rng = RngStream::derive(seed, s);
        const bool high = rng.uniform() <= 1.0 / static_cast<double>(n);
        paths.push_back(ex0_path(grid, n, high));
    }
    return PathBundle(grid, std::move(paths), PathBundle::uniform_weights(n_scenarios),
                      Provenance{seed, "ex0 n=" + std::to_string(n)});
}

Ex0Tree ex0_tree(int n, TimeGridPtr grid) {
    const auto jn = grid->find_node(ex0_jump_time(n));
    if (!jn) throw RefinementRequiredError("ex0_tree: refine the grid with ex0_grid first");
    const double p = 1.0 / static_cast<double>(n);
    std::vector<std::vector<std::uint32_t>> atoms(grid->size(), std::vector<std::uint32_t>{0, 0});
    for (std::size_t k = *jn + 1; k < grid->size(); ++k) atoms[k] = {0, 1};
    auto tree = std::make_shared<ScenarioTree>(grid, std::move(atoms), std::vector<double>{p, 1.0 - p});
    std::vector<LadlagPath> paths{ex0_path(grid, n, true), ex0_path(grid, n, false)};
    PathBundle bundle(grid, std::move(paths), {p, 1.0 - p}, Provenance{0, "ex0 tree n=" + std::to_string(n)});
    Ex0Tree out;
    out.tree = tree;
    out.martingale = AdaptedProcess(tree, std::move(bundle));
    return out;
}

Ex0Family ex0_family(const std::vector<int>& n_list, TimeGridPtr base) {
    if (n_list.empty()) throw LabError("ex0_family: empty n list");
    Ex0Family fam;
    fam.n_list = n_list;
    fam.grid = ex0_grid(std::move(base), n_list);

    // quantile strata of the shared uniform: cut points 1/n
    std::vector<double> cuts;
    for (int n : n_list) cuts.push_back(1.0 / static_cast<double>(n));
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    if (cuts.back() < 1.0) cuts.push_back(1.0);
    std::vector<double> weights;
    std::vector<double> upper;  // stratum upper endpoint
    double lo = 0.0;
    for (double c : cuts) {
        weights.push_back(c - lo);
        upper.push_back(c);
        lo = c;
    }
    const std::size_t S = weights.size();

    // jump nodes in time order (largest n jumps first); the filtration
    // reveals each indicator's threshold at its jump node
    std::vector<std::pair<std::size_t, double>> reveals;  // (node, threshold)
    for (int n : n_list) {
        reveals.push_back({*fam.grid->find_node(ex0_jump_time(n)), 1.0 / static_cast<double>(n)});
    }
    std::sort(reveals.begin(), reveals.end());

    std::vector<std::vector<std::uint32_t>> atom_of(fam.grid->size(), std::vector<std::uint32_t>(S, 0));
    for (std::size_t k = 0; k < fam.grid->size(); ++k) {
        // thresholds revealed strictly before or at k define the partition
        std::vector<double> revealed;
        for (const auto& [node, thr] : reveals) {
            if (node < k) revealed.push_back(thr);  // indicator jumps on the interval after its node
        }
        std::sort(revealed.begin(), revealed.end());
        for (std::size_t s = 0; s < S; ++s) {
            const auto it = std::lower_bound(revealed.begin(), revealed.end(), upper[s] - 1e-15);
            atom_of[k][s] = static_cast<std::uint32_t>(it - revealed.begin());
        }
    }
    fam.tree = std::make_shared<ScenarioTree>(fam.grid, std::move(atom_of), weights);

    for (int n : n_list) {
        const double thr = 1.0 / static_cast<double>(n);
        std::vector<LadlagPath> paths;
        paths.reserve(S);
        for (std::size_t s = 0; s < S; ++s) {
            const bool high = upper[s] <= thr + 1e-15;
            paths.push_back(ex0_path(fam.grid, n, high));
        }
        fam.bundles.emplace_back(fam.grid, std::move(paths), weights,
                                 Provenance{0, "ex0 n=" + std::to_string(n)});
    }
    return fam;
}

// -------------------------------------------------------------------------
// stopped-integrand blocks
// -------------------------------------------------------------------------

std::vector<double> block_refinement_times(const std::vector<double>& rho_values, int n,
                                           const BlockOptions& opts) {
    std::vector<double> out;
    const double w = std::ldexp(1.0, -n);
    for (double r : rho_values) {
        for (int j = 1; j <= opts.geometric_nodes; ++j) {
            const double t = r + w * (1.0 - std::ldexp(1.0, -j));
            if (t > 0.0 && t < 1.0) out.push_back(t);
        }
        if (r + w < 1.0) out.push_back(r + w);
    }
    return out;
}

namespace {

// QV of the integrand block at elapsed u in [0, w): 1/(w - u) - 1/w
double block_qv(double w, double u) {
    if (u <= 0.0) return 0.0;
    if (u >= w) return std::numeric_limits<double>::infinity();
    return 1.0 / (w - u) - 1.0 / w;
}

// One Gaussian substep of variance dq from value v, absorbed exactly at
// barriers lo < v < hi via bridge crossing probabilities. Returns the
// new value; absorbed (exactly lo or hi) means stopped.
double bridge_absorbed_step(double v, double dq, double lo, double hi, RngStream& rng) {
    const double sd = std::sqrt(dq);
    const double end = v + sd * rng.normal();
    if (end >= hi) return hi;
    if (end <= lo) return lo;
    // within-step crossing of either barrier
    const double p_hi = std::exp(-2.0 * (hi - v) * (hi - end) / dq);
    if (rng.bernoulli(p_hi)) return hi;
    const double p_lo = std::exp(-2.0 * (v - lo) * (end - lo) / dq);
    if (rng.bernoulli(p_lo)) return lo;
    return end;
}

}  // namespace

PathBundle indicator_block_martingales(const GridStoppingTime& rho, int n, double upper_level,
                                       TimeGridPtr grid, std::size_t n_scenarios, std::uint64_t seed,
                                       const BlockOptions& opts) {
    require_same_grid(grid, rho.grid, "indicator_block_martingales");
    if (upper_level <= 0.0) throw LabError("indicator_block_martingales: upper level must be positive");
    const double w = std::ldexp(1.0, -n);
    // QV budget so that P(no hit) stays below the configured mass
    const double span = 1.0 + upper_level;
    const double qv_target = 2.0 * span * span / 9.8696044 *
                             std::log(2.0 / opts.no_hit_mass);

    std::vector<LadlagPath> paths;
    paths.reserve(n_scenarios);
    for (std::size_t s = 0; s < n_scenarios; ++s) {
        RngStream rng = RngStream::derive(seed, s, 7);
        std::vector<double> nodes(grid->size(), 0.0);
        if (rho.node_of.size() != n_scenarios)
            throw LabError("indicator_block_martingales: scenario count mismatch");
        if (!rho.never(s)) {
            const double r = rho.time(s);
            double value = 0.0;
            bool stopped = false;
            double q_prev = 0.0;
            for (std::size_t k = 0; k < grid->size(); ++k) {
                const double t = grid->node(k);
                if (t <= r) {
                    nodes[k] = 0.0;
                    continue;
                }
                if (!stopped) {
                    double q_here = std::min(block_qv(w, t - r), qv_target);
                    // several capped substeps per grid step keep the
                    // bridge approximation tight
                    while (q_prev < q_here && !stopped) {
                        const double dq = std::min(opts.step_variance, q_here - q_prev);
                        value = bridge_absorbed_step(value, dq, -1.0, upper_level, rng);
                        q_prev += dq;
                        if (value <= -1.0 || value >= upper_level) stopped = true;
                    }
                }
                nodes[k] = value;
            }
        }
        paths.push_back(LadlagPath::cadlag(grid, std::move(nodes)));
    }
    return PathBundle(grid, std::move(paths), PathBundle::uniform_weights(n_scenarios),
                      Provenance{seed, "block n=" + std::to_string(n)});
}

// -------------------------------------------------------------------------
// compensated-jump example
// -------------------------------------------------------------------------

namespace {

struct SigmaLayout {
    std::vector<std::size_t> jump_levels;  // node indices where sigma can jump
    std::vector<double> level_mass;        // P(sigma = that node), exact products
    double never_mass = 0.0;
};

// first node with t_k >= t (tolerance-matched), or size() when past 1
std::size_t first_node_at_or_after(const TimeGrid& grid, double t) {
    if (t > 1.0 + TimeGrid::kNodeTolerance) return grid.size();
    for (std::size_t k = 0; k < grid.size(); ++k) {
        if (grid.node(k) >= t - TimeGrid::kNodeTolerance) return k;
    }
    return grid.size();
}

SigmaLayout sigma_layout(const TimeGrid& grid, const std::vector<double>& hazards) {
    SigmaLayout out;
    double alive = 1.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double h = hazards[k];
        if (h > 0.0) {
            out.jump_levels.push_back(k);
            out.level_mass.push_back(alive * h);
            alive *= (1.0 - h);
        }
    }
    out.never_mass = alive;
    return out;
}

}  // namespace

CompensatorFamily compensator_family(double rate, const std::vector<int>& n_list, TimeGridPtr base,
                                     int refine_max_n, bool odd_jump_support) {
    if (rate <= 0.0 || rate > 1.0) throw LabError("compensator_family: rate in (0,1]");
    CompensatorFamily fam;
    fam.n_list = n_list;

    // sigma jumps at odd-indexed base nodes (keeping its support off the
    // coarser dyadic sets, the grid surrogate of total inaccessibility);
    // the grid gains the shifted evaluation nodes t_k + 1/n. Indices
    // beyond refine_max_n share the coarsest tail node instead, which
    // keeps per-node limits stabilized under a finite index list.
    std::vector<std::size_t> support;
    for (std::size_t k = 1; k < base->size(); ++k) {
        if (!odd_jump_support || k % 2 == 1) support.push_back(k);
    }
    std::vector<double> extra;
    for (std::size_t k : support) {
        for (int n : n_list) {
            if (n > refine_max_n) continue;
            const double t = base->node(k) + 1.0 / static_cast<double>(n);
            if (t < 1.0) extra.push_back(t);
        }
    }
    TimeGridPtr grid = std::make_shared<TimeGrid>(base->refined_with(extra));
    fam.grid = grid;
    const std::size_t K = grid->size() - 1;

    fam.hazards.assign(grid->size(), 0.0);
    double prev_support_time = 0.0;
    for (std::size_t k : support) {
        const auto node = grid->find_node(base->node(k));
        if (!node) throw LabError("compensator_family: lost a base node");
        fam.hazards[*node] = rate * (base->node(k) - prev_support_time);
        prev_support_time = base->node(k);
    }
    const SigmaLayout lay = sigma_layout(*grid, fam.hazards);
    fam.jump_levels = lay.jump_levels;

    // uniform strata for the coupled marks
    std::vector<double> cuts;
    for (int n : n_list) cuts.push_back(1.0 / static_cast<double>(n));
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    if (cuts.back() < 1.0) cuts.push_back(1.0);
    std::vector<double> u_mass, u_upper;
    double lo = 0.0;
    for (double c : cuts) {
        u_mass.push_back(c - lo);
        u_upper.push_back(c);
        lo = c;
    }
    const std::size_t J = lay.jump_levels.size();
    const std::size_t U = u_mass.size();
    const std::size_t S = J * U + 1;  // + never-jump scenario

    auto scen = [&](std::size_t j, std::size_t u) { return j * U + u; };
    const std::size_t never_scen = J * U;

    std::vector<double> weights(S);
    for (std::size_t j = 0; j < J; ++j) {
        for (std::size_t u = 0; u < U; ++u) weights[scen(j, u)] = lay.level_mass[j] * u_mass[u];
    }
    weights[never_scen] = lay.never_mass;

    fam.sigma.grid = grid;
    fam.sigma.node_of.assign(S, GridStoppingTime::kNever);
    for (std::size_t j = 0; j < J; ++j) {
        for (std::size_t u = 0; u < U; ++u) {
            fam.sigma.node_of[scen(j, u)] = static_cast<std::uint32_t>(lay.jump_levels[j]);
        }
    }

    // filtrations: sigma-only, mark-at-sigma, mark-at-(sigma + 1/n)
    auto build_tree = [&](auto mark_reveal_node) {
        std::vector<std::vector<std::uint32_t>> atom_of(grid->size(), std::vector<std::uint32_t>(S, 0));
        for (std::size_t k = 0; k <= K; ++k) {
            std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> ids;
            for (std::size_t s = 0; s < S; ++s) {
                std::uint32_t jumped = 0, mark = 0;
                if (s != never_scen) {
                    const std::size_t j = s / U, u = s % U;
                    const std::size_t jl = lay.jump_levels[j];
                    if (jl <= k) {
                        jumped = static_cast<std::uint32_t>(jl + 1);
                        const std::size_t reveal = mark_reveal_node(j);
                        if (reveal <= k) mark = static_cast<std::uint32_t>(u + 1);
                    }
                }
                const auto key = std::make_pair(jumped, mark);
                auto it = ids.find(key);
                if (it == ids.end()) it = ids.emplace(key, static_cast<std::uint32_t>(ids.size())).first;
                atom_of[k][s] = it->second;
            }
        }
        return std::make_shared<ScenarioTree>(grid, std::move(atom_of), weights);
    };

    fam.tree_sigma = build_tree([&](std::size_t) { return grid->size(); });  // never reveal the mark
    fam.tree_m1 = build_tree([&](std::size_t j) { return lay.jump_levels[j]; });

    // compensator A (at-node accrual) and the two limit processes
    fam.compensator = compensator_of_jump_time(fam.tree_sigma, fam.sigma, fam.hazards);
    {
        std::vector<LadlagPath> x1p, x2p;
        for (std::size_t s = 0; s < S; ++s) {
            std::vector<double> a = fam.compensator.bundle.paths[s].node_values();
            std::vector<double> x1(K + 1), x2(K + 1);
            for (std::size_t k = 0; k <= K; ++k) {
                x1[k] = 1.0 - a[k];
                x2[k] = x1[k];
            }
            if (!fam.sigma.never(s)) x2[fam.sigma.node_of[s]] += 1.0;  // graph indicator
            std::vector<double> x1i(K), x2i(K);
            for (std::size_t k = 0; k < K; ++k) {
                x1i[k] = 1.0 - a[k];  // cadlag staircase
                x2i[k] = x1i[k];
            }
            x1p.emplace_back(grid, std::move(x1), std::move(x1i));
            x2p.emplace_back(grid, std::move(x2), std::move(x2i));
        }
        fam.x1 = PathBundle(grid, std::move(x1p), weights, Provenance{0, "x1"});
        fam.x2 = PathBundle(grid, std::move(x2p), weights, Provenance{0, "x2"});
    }

    for (std::size_t ni = 0; ni < n_list.size(); ++ni) {
        const int n = n_list[ni];
        const double thr = 1.0 / static_cast<double>(n);
        std::vector<LadlagPath> m1p, m2p;
        for (std::size_t s = 0; s < S; ++s) {
            const std::vector<double>& a = fam.compensator.bundle.paths[s].node_values();
            std::vector<double> m1(K + 1), m2(K + 1);
            double y = 0.0;
            std::size_t jl = grid->size(), delayed = grid->size();
            if (s != never_scen) {
                const std::size_t j = s / U, u = s % U;
                y = (u_upper[u] <= thr + 1e-15) ? static_cast<double>(n) : 0.0;
                jl = lay.jump_levels[j];
                delayed = first_node_at_or_after(*grid, grid->node(jl) + thr);
            }
            for (std::size_t k = 0; k <= K; ++k) {
                const double ind = (jl <= k) ? 1.0 : 0.0;
                const double ind_delayed = (delayed <= k) ? 1.0 : 0.0;
                m1[k] = 1.0 - a[k] + y * ind;
                m2[k] = 1.0 - a[k] + ind + (y - 1.0) * ind_delayed;
            }
            m1p.push_back(LadlagPath::cadlag(grid, std::move(m1)));
            m2p.push_back(LadlagPath::cadlag(grid, std::move(m2)));
        }
        fam.m1.emplace_back(grid, std::move(m1p), weights, Provenance{0, "m1 n=" + std::to_string(n)});
        fam.m2.emplace_back(grid, std::move(m2p), weights, Provenance{0, "m2 n=" + std::to_string(n)});

        // filtration revealing the mark at sigma + 1/n
        fam.tree_m2.push_back(build_tree([&](std::size_t j) {
            return first_node_at_or_after(*grid, grid->node(lay.jump_levels[j]) + thr);
        }));
    }
    return fam;
}

std::vector<std::size_t> CompensatorFamily::finite_sigma_scenarios() const {
    std::vector<std::size_t> keep;
    for (std::size_t s = 0; s < sigma.node_of.size(); ++s) {
        if (!sigma.never(s)) keep.push_back(s);
    }
    return keep;
}

CompensatorExampleMc compensator_example_mc(const HazardSpec& hazard, int n, TimeGridPtr grid,
                                            std::size_t n_scenarios, std::uint64_t seed) {
    hazard.validate(grid->size());
    CompensatorExampleMc out;
    out.grid = grid;
    out.hazards = hazard.per_level;
    out.sigma.grid = grid;
    out.sigma.node_of.assign(n_scenarios, GridStoppingTime::kNever);
    const std::size_t K = grid->size() - 1;
    const double thr = 1.0 / static_cast<double>(n);

    std::vector<LadlagPath> x1p, x2p, m1p, m2p;
    for (std::size_t s = 0; s < n_scenarios; ++s) {
        RngStream rng = RngStream::derive(seed, s, 11);
        std::size_t jl = grid->size();
        for (std::size_t k = 0; k < grid->size(); ++k) {
            if (hazard.per_level[k] > 0.0 && rng.uniform() < hazard.per_level[k]) {
                jl = k;
                break;
            }
        }
        const double u = rng.uniform();
        const double y = u <= thr ? static_cast<double>(n) : 0.0;
        if (jl < grid->size()) out.sigma.node_of[s] = static_cast<std::uint32_t>(jl);

        std::size_t delayed = grid->size();
        if (jl < grid->size()) {
            const double td = grid->node(jl) + thr;
            if (td < 1.0 + 1e-15) {
                const auto dn = grid->find_node(std::min(td, 1.0));
                if (!dn) throw RefinementRequiredError("compensator_example_mc: missing delayed node");
                delayed = *dn;
            }
        }
        std::vector<double> a(K + 1, 0.0);
        double acc = 0.0;
        for (std::size_t k = 0; k <= K; ++k) {
            if (jl >= k) acc += hazard.per_level[k];
            a[k] = acc;
        }
        std::vector<double> x1(K + 1), x2(K + 1), m1(K + 1), m2(K + 1);
        for (std::size_t k = 0; k <= K; ++k) {
            const double ind = (jl <= k) ? 1.0 : 0.0;
            const double ind_d = (delayed <= k) ? 1.0 : 0.0;
            x1[k] = 1.0 - a[k];
            x2[k] = x1[k] + ((jl == k) ? 1.0 : 0.0);
            m1[k] = 1.0 - a[k] + y * ind;
            m2[k] = 1.0 - a[k] + ind + (y - 1.0) * ind_d;
        }
        // the graph spike lives at its node only; intervals follow x1
        std::vector<double> x2i(x1.begin(), x1.end() - 1);
        x1p.push_back(LadlagPath::cadlag(grid, std::move(x1)));
        x2p.emplace_back(grid, std::move(x2), std::move(x2i));
        m1p.push_back(LadlagPath::cadlag(grid, std::move(m1)));
        m2p.push_back(LadlagPath::cadlag(grid, std::move(m2)));
    }
    const auto w = PathBundle::uniform_weights(n_scenarios);
    out.x1 = PathBundle(grid, std::move(x1p), w, Provenance{seed, "x1 mc"});
    out.x2 = PathBundle(grid, std::move(x2p), w, Provenance{seed, "x2 mc"});
    out.m1n = PathBundle(grid, std::move(m1p), w, Provenance{seed, "m1 mc"});
    out.m2n = PathBundle(grid, std::move(m2p), w, Provenance{seed, "m2 mc"});
    return out;
}

PathBundle restrict_bundle(const PathBundle& bundle, const std::vector<std::size_t>& keep) {
    if (keep.empty()) throw LabError("restrict_bundle: empty selection");
    double mass = 0.0;
    for (std::size_t s : keep) mass += bundle.weights[s];
    if (mass <= 0.0) throw LabError("restrict_bundle: selected mass is zero");
    std::vector<LadlagPath> paths;
    std::vector<double> weights;
    paths.reserve(keep.size());
    for (std::size_t s : keep) {
        paths.push_back(bundle.paths[s]);
        weights.push_back(bundle.weights[s] / mass);
    }
    return PathBundle(bundle.grid, std::move(paths), std::move(weights), bundle.provenance);
}

GridStoppingTime restrict_stopping_time(const GridStoppingTime& tau,
                                        const std::vector<std::size_t>& keep) {
    GridStoppingTime out;
    out.grid = tau.grid;
    out.node_of.reserve(keep.size());
    for (std::size_t s : keep) out.node_of.push_back(tau.node_of[s]);
    return out;
}

// -------------------------------------------------------------------------
// martingale approximation of a tree supermartingale
// -------------------------------------------------------------------------

namespace {

struct GambleBlock {
    // resolves at `reveal_node[s]` (kNever: inactive on that scenario)
    std::vector<std::uint32_t> reveal_node;  // per base scenario
    std::vector<double> scale;               // per base scenario, >= 0
    double win_prob = 0.0;                   // P(+scale*k), independent bit
    double ladder = 1.0;                     // payoff multiplier k
};

// first-, second-, ... occurrence stopping times of per-scenario jump lists
std::vector<std::vector<std::pair<std::size_t, double>>> per_scenario_jumps(
    const AdaptedProcess& A, bool right_jumps, double min_size, double max_size) {
    const std::size_t S = A.bundle.scenarios();
    const std::size_t K = A.nodes() - 1;
    std::vector<std::vector<std::pair<std::size_t, double>>> out(S);
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t k = 0; k <= K; ++k) {
            const auto [dl, dr] = A.bundle.paths[s].jumps(k);
            const double j = right_jumps ? dr : dl;
            if (j > min_size && j <= max_size) out[s].push_back({k, j});
        }
    }
    return out;
}

}  // namespace

ApproximationResult approximate_supermartingale(const AdaptedProcess& X, const ApproximationPlan& plan,
                                                std::uint64_t seed) {
    (void)seed;
    const MertensDecomposition md = mertens_decomposition(X);
    const AdaptedProcess& M = md.martingale;
    const AdaptedProcess& A = md.compensator;
    const std::size_t S = X.bundle.scenarios();
    const std::size_t K = X.nodes() - 1;
    const double inf = std::numeric_limits<double>::infinity();

    ApproximationResult result;
    for (int n = 1; n <= plan.levels; ++n) {
        const double ladder = std::ldexp(1.0, plan.ladder_exponent_base + n);
        std::vector<GambleBlock> blocks;

        // genuine right jumps of A, one block per occurrence order
        {
            auto jumps = per_scenario_jumps(A, true, 0.0, inf);
            std::size_t max_count = 0;
            for (const auto& v : jumps) max_count = std::max(max_count, v.size());
            for (std::size_t i = 0; i < max_count; ++i) {
                GambleBlock b;
                b.reveal_node.assign(S, GridStoppingTime::kNever);
                b.scale.assign(S, 0.0);
                for (std::size_t s = 0; s < S; ++s) {
                    if (jumps[s].size() > i) {
                        const auto [node, size] = jumps[s][i];
                        if (node + 1 <= K) {
                            b.reveal_node[s] = static_cast<std::uint32_t>(node + 1);
                            b.scale[s] = std::min(size, static_cast<double>(n));
                        }
                    }
                }
                b.win_prob = 1.0 / (ladder + 1.0);
                b.ladder = ladder;
                blocks.push_back(std::move(b));
            }
        }
        // genuine left jumps: announced one node early, resolved at the jump
        // node with the announced conditional size
        {
            auto jumps = per_scenario_jumps(A, false, plan.left_jump_threshold, inf);
            std::size_t max_count = 0;
            for (const auto& v : jumps) max_count = std::max(max_count, v.size());
            for (std::size_t i = 0; i < max_count; ++i) {
                GambleBlock b;
                b.reveal_node.assign(S, GridStoppingTime::kNever);
                b.scale.assign(S, 0.0);
                // group per node for the conditional announcement
                std::vector<double> raw(S, 0.0);
                std::vector<std::size_t> node_of(S, K + 1);
                for (std::size_t s = 0; s < S; ++s) {
                    if (jumps[s].size() > i) {
                        raw[s] = jumps[s][i].second;
                        node_of[s] = jumps[s][i].first;
                    }
                }
                for (std::size_t k = 1; k <= K; ++k) {
                    std::vector<double> masked(S, 0.0);
                    bool any = false;
                    for (std::size_t s = 0; s < S; ++s) {
                        if (node_of[s] == k) {
                            masked[s] = raw[s];
                            any = true;
                        }
                    }
                    if (!any) continue;
                    const std::vector<double> announced =
                        X.tree->conditional_expectation(masked, static_cast<int>(k) - 1);
                    for (std::size_t s = 0; s < S; ++s) {
                        if (node_of[s] == k) {
                            b.reveal_node[s] = static_cast<std::uint32_t>(k);
                            b.scale[s] = std::min(std::max(announced[s], 0.0), static_cast<double>(n));
                        }
                    }
                }
                b.win_prob = 1.0 / (ladder + 1.0);
                b.ladder = ladder;
                blocks.push_back(std::move(b));
            }
        }
        // small left jumps: staircase groups over deterministic node bins
        {
            auto jumps = per_scenario_jumps(A, false, 0.0, plan.left_jump_threshold);
            const std::size_t stairs =
                std::min(plan.max_staircase_steps, static_cast<std::size_t>(K));
            if (stairs > 0) {
                for (std::size_t g = 0; g < stairs; ++g) {
                    const std::size_t k_lo = 1 + g * K / stairs;
                    const std::size_t k_hi = (g + 1) * K / stairs;  // group covers (k_lo-1, k_hi]
                    GambleBlock b;
                    b.reveal_node.assign(S, GridStoppingTime::kNever);
                    b.scale.assign(S, 0.0);
                    for (std::size_t s = 0; s < S; ++s) {
                        double acc = 0.0;
                        for (const auto& [node, size] : jumps[s]) {
                            if (node >= k_lo && node <= k_hi) acc += size;
                        }
                        if (k_hi <= K) {
                            b.reveal_node[s] = static_cast<std::uint32_t>(k_hi);
                            b.scale[s] = std::min(acc, static_cast<double>(n));
                        }
                    }
                    bool trivial = true;
                    for (double sc : b.scale) {
                        if (sc > 0.0) trivial = false;
                    }
                    if (trivial) continue;
                    b.win_prob = 1.0 / (ladder + 1.0);
                    b.ladder = ladder;
                    blocks.push_back(std::move(b));
                }
            }
        }

        // enriched tree: base scenarios x block outcomes
        const std::size_t B = blocks.size();
        if (B > 14) throw LabError("approximate_supermartingale: too many gamble blocks");
        const std::size_t E = S << B;
        std::vector<double> weights(E);
        std::vector<std::size_t> base_of(E);
        std::vector<std::uint32_t> outcome_mask(E);
        for (std::size_t e = 0; e < E; ++e) {
            const std::size_t s = e >> B;
            const std::uint32_t bits = static_cast<std::uint32_t>(e & ((std::size_t{1} << B) - 1u));
            base_of[e] = s;
            outcome_mask[e] = bits;
            double wgt = X.bundle.weights[s];
            for (std::size_t i = 0; i < B; ++i) {
                const bool win = (bits >> i) & 1u;
                wgt *= win ? blocks[i].win_prob : 1.0 - blocks[i].win_prob;
            }
            weights[e] = wgt;
        }
        std::vector<std::vector<std::uint32_t>> atom_of(K + 1, std::vector<std::uint32_t>(E, 0));
        for (std::size_t k = 0; k <= K; ++k) {
            std::map<std::pair<std::uint32_t, std::uint64_t>, std::uint32_t> ids;
            for (std::size_t e = 0; e < E; ++e) {
                const std::size_t s = base_of[e];
                // atom key: base atom + (revealed, outcome) of each block
                std::uint64_t visible = 0;
                for (std::size_t i = 0; i < B; ++i) {
                    const std::uint32_t rn = blocks[i].reveal_node[s];
                    if (rn != GridStoppingTime::kNever && rn <= k) {
                        visible |= std::uint64_t{1} << (2 * i);
                        visible |= std::uint64_t{(outcome_mask[e] >> i) & 1u} << (2 * i + 1);
                    }
                }
                const auto key = std::make_pair(X.tree->atom_of(k, s), visible);
                auto it = ids.find(key);
                if (it == ids.end()) it = ids.emplace(key, static_cast<std::uint32_t>(ids.size())).first;
                atom_of[k][e] = it->second;
            }
        }
        auto etree = std::make_shared<ScenarioTree>(X.bundle.grid, std::move(atom_of), weights);

        // truncated martingale part: E[M_1 clamped | F_k] on the base tree
        std::vector<double> m1(S);
        for (std::size_t s = 0; s < S; ++s)
            m1[s] = std::clamp(M.bundle.paths[s].node_value(K), -ladder, ladder);
        std::vector<std::vector<double>> trunc(K + 1);
        for (std::size_t k = 0; k <= K; ++k)
            trunc[k] = X.tree->conditional_expectation(m1, static_cast<int>(k));

        // assemble M^n on the enriched space
        double bound = 0.0;
        std::vector<LadlagPath> paths;
        paths.reserve(E);
        for (std::size_t e = 0; e < E; ++e) {
            const std::size_t s = base_of[e];
            std::vector<double> nodes(K + 1);
            for (std::size_t k = 0; k <= K; ++k) {
                double v = trunc[k][s];
                for (std::size_t i = 0; i < B; ++i) {
                    const std::uint32_t rn = blocks[i].reveal_node[s];
                    if (rn == GridStoppingTime::kNever || rn > k) continue;
                    const bool win = (outcome_mask[e] >> i) & 1u;
                    v += win ? blocks[i].scale[s] * blocks[i].ladder : -blocks[i].scale[s];
                }
                nodes[k] = v;
                bound = std::max(bound, std::abs(v));
            }
            paths.push_back(LadlagPath::cadlag(X.bundle.grid, std::move(nodes)));
        }
        ApproximationOutput out;
        out.tree = etree;
        out.base_scenario = base_of;
        out.bound = bound;
        out.martingale = AdaptedProcess(
            etree, PathBundle(X.bundle.grid, std::move(paths), weights, Provenance{seed, "approx"}));
        // lift the target
        std::vector<LadlagPath> xpaths;
        xpaths.reserve(E);
        for (std::size_t e = 0; e < E; ++e) xpaths.push_back(X.bundle.paths[base_of[e]]);
        out.target =
            AdaptedProcess(etree, PathBundle(X.bundle.grid, std::move(xpaths), weights, X.bundle.provenance));
        result.outputs.push_back(std::move(out));
    }
    return result;
}

std::vector<double> approximation_exceedance(const ApproximationResult& approx,
                                             const GridStoppingTime& tau_base, double eps) {
    std::vector<double> out;
    for (const auto& o : approx.outputs) {
        GridStoppingTime tau;
        tau.grid = tau_base.grid;
        tau.node_of.reserve(o.base_scenario.size());
        for (std::size_t e : o.base_scenario) tau.node_of.push_back(tau_base.node_of[e]);
        const auto mv = evaluate_at(o.martingale.bundle, tau, Side::Right);
        const auto xv = evaluate_at(o.target.bundle, tau, Side::Right);
        double p = 0.0;
        for (std::size_t e = 0; e < mv.size(); ++e) {
            if (std::abs(mv[e] - xv[e]) > eps) p += o.martingale.bundle.weights[e];
        }
        out.push_back(p);
    }
    return out;
}

}  // namespace lab
