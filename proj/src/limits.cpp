#include "lab/limits.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lab {

ConvexScheme::ConvexScheme(std::vector<std::vector<double>> weights) : weights_(std::move(weights)) {
    for (const auto& row : weights_) {
        if (row.empty()) throw LabError("ConvexScheme: empty weight row");
        double sum = 0.0;
        for (double w : row) {
            if (w < -1e-15) throw LabError("ConvexScheme: negative weight");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw LabError("ConvexScheme: row weights must sum to 1");
    }
}

ConvexScheme ConvexScheme::identity(std::size_t n_outputs) {
    std::vector<std::vector<double>> w(n_outputs, std::vector<double>{1.0});
    return ConvexScheme(std::move(w));
}

ConvexScheme ConvexScheme::tail_uniform(std::size_t n_inputs, std::size_t n_outputs) {
    if (n_outputs > n_inputs) throw LabError("ConvexScheme::tail_uniform: more outputs than inputs");
    std::vector<std::vector<double>> w(n_outputs);
    for (std::size_t n = 0; n < n_outputs; ++n) {
        w[n].assign(n_inputs - n, 1.0 / static_cast<double>(n_inputs - n));
    }
    return ConvexScheme(std::move(w));
}

ConvexScheme ConvexScheme::compose(const ConvexScheme& other) const {
    // output n of the composite = sum_j other[n][j] * (this output n+j)
    std::vector<std::vector<double>> w(other.outputs());
    for (std::size_t n = 0; n < other.outputs(); ++n) {
        std::size_t span = 0;
        for (std::size_t j = 0; j < other.row(n).size(); ++j) {
            if (n + j >= outputs())
                throw LabError("ConvexScheme::compose: outer scheme reaches past inner outputs");
            span = std::max(span, j + weights_[n + j].size());
        }
        w[n].assign(span, 0.0);
        for (std::size_t j = 0; j < other.row(n).size(); ++j) {
            const double wj = other.row(n)[j];
            for (std::size_t i = 0; i < weights_[n + j].size(); ++i) w[n][j + i] += wj * weights_[n + j][i];
        }
    }
    return ConvexScheme(std::move(w));
}

std::vector<std::vector<double>> ConvexScheme::combine(
    const std::vector<std::vector<double>>& columns) const {
    std::vector<std::vector<double>> out(outputs());
    for (std::size_t n = 0; n < outputs(); ++n) {
        const auto& row = weights_[n];
        if (n + row.size() > columns.size())
            throw LabError("ConvexScheme::combine: not enough input columns");
        std::vector<double> acc(columns[n].size(), 0.0);
        for (std::size_t j = 0; j < row.size(); ++j) {
            const auto& col = columns[n + j];
            for (std::size_t s = 0; s < acc.size(); ++s) acc[s] += row[j] * col[s];
        }
        out[n] = std::move(acc);
    }
    return out;
}

SampleMatrix cesaro_means(const SampleMatrix& samples, const std::vector<std::size_t>& subsequence) {
    if (subsequence.empty()) throw LabError("cesaro_means: empty subsequence");
    for (std::size_t j = 1; j < subsequence.size(); ++j) {
        if (subsequence[j] <= subsequence[j - 1])
            throw LabError("cesaro_means: subsequence must be strictly increasing");
    }
    if (subsequence.back() >= samples.cols) throw LabError("cesaro_means: index out of range");
    SampleMatrix out(samples.scenarios, subsequence.size());
    for (std::size_t s = 0; s < samples.scenarios; ++s) {
        double acc = 0.0;
        for (std::size_t j = 0; j < subsequence.size(); ++j) {
            acc += samples.at(s, subsequence[j]);
            out.at(s, j) = acc / static_cast<double>(j + 1);
        }
    }
    return out;
}

KomlosResult komlos_extract(const SampleMatrix& samples, const KomlosOptions& opts) {
    if (samples.cols == 0 || samples.scenarios == 0) throw LabError("komlos_extract: empty input");
    // L1 boundedness guard on empirical column means
    double max_mean = 0.0;
    for (std::size_t n = 0; n < samples.cols; ++n) {
        double m = 0.0;
        for (std::size_t s = 0; s < samples.scenarios; ++s) m += std::abs(samples.at(s, n));
        m /= static_cast<double>(samples.scenarios);
        if (!std::isfinite(m) || m > opts.column_mean_bound)
            throw LabError("komlos_extract: column " + std::to_string(n) +
                           " is not L1-bounded (empirical mean " + std::to_string(m) + ")");
        max_mean = std::max(max_mean, m);
    }
    const double base = opts.truncation_base > 0.0 ? opts.truncation_base : std::max(1.0, 2.0 * max_mean);

    // subsequence: smallest fresh index whose upper tail beyond base*2^m
    // has empirical mass below 2^-m
    std::vector<std::size_t> sub;
    std::size_t next = 0;
    for (std::size_t m = 0; next < samples.cols; ++m) {
        const double cutoff = base * std::ldexp(1.0, static_cast<int>(std::min<std::size_t>(m, 50)));
        const double allowed = std::ldexp(1.0, -static_cast<int>(std::min<std::size_t>(m, 50)));
        bool found = false;
        for (std::size_t n = next; n < samples.cols; ++n) {
            std::size_t over = 0;
            for (std::size_t s = 0; s < samples.scenarios; ++s) {
                if (samples.at(s, n) > cutoff) ++over;
            }
            const double tail = static_cast<double>(over) / static_cast<double>(samples.scenarios);
            if (tail < allowed) {
                sub.push_back(n);
                next = n + 1;
                found = true;
                break;
            }
        }
        if (!found) break;
    }
    if (sub.empty()) throw LabError("komlos_extract: no admissible subsequence index found");

    std::size_t n_out = sub.size();
    if (opts.max_outputs > 0) n_out = std::min(n_out, opts.max_outputs);

    // forward scheme over original indices: output n averages the
    // subsequence entries from position n on; sub[j] >= j keeps the
    // support forward of n
    std::vector<std::vector<double>> w(n_out);
    for (std::size_t n = 0; n < n_out; ++n) {
        const std::size_t count = sub.size() - n;
        w[n].assign(sub.back() - n + 1, 0.0);
        for (std::size_t j = n; j < sub.size(); ++j) w[n][sub[j] - n] = 1.0 / static_cast<double>(count);
    }
    KomlosResult res;
    res.scheme = ConvexScheme(std::move(w));
    res.subsequence = std::move(sub);

    // Cauchy diagnostic on consecutive combined outputs
    std::vector<double> prev, cur;
    for (std::size_t n = 0; n + 1 < n_out; ++n) {
        auto combined = [&](std::size_t out_idx) {
            std::vector<double> v(samples.scenarios, 0.0);
            const auto& row = res.scheme.row(out_idx);
            for (std::size_t j = 0; j < row.size(); ++j) {
                if (row[j] == 0.0) continue;
                const std::size_t col = out_idx + j;
                for (std::size_t s = 0; s < samples.scenarios; ++s) v[s] += row[j] * samples.at(s, col);
            }
            return v;
        };
        prev = combined(n);
        cur = combined(n + 1);
        std::size_t over = 0;
        for (std::size_t s = 0; s < samples.scenarios; ++s) {
            if (std::abs(prev[s] - cur[s]) > opts.cauchy_eps) ++over;
        }
        res.cauchy_estimates.push_back(static_cast<double>(over) /
                                       static_cast<double>(samples.scenarios));
    }
    return res;
}

std::vector<PathBundle> apply_scheme(const std::vector<PathBundle>& bundles, const ConvexScheme& scheme) {
    if (bundles.empty()) throw LabError("apply_scheme: no bundles");
    for (const auto& b : bundles) {
        require_same_grid(bundles.front().grid, b.grid, "apply_scheme");
        if (b.scenarios() != bundles.front().scenarios())
            throw LabError("apply_scheme: bundles are not aligned");
    }
    std::vector<PathBundle> out;
    out.reserve(scheme.outputs());
    for (std::size_t n = 0; n < scheme.outputs(); ++n) {
        const auto& row = scheme.row(n);
        if (n + row.size() > bundles.size()) throw LabError("apply_scheme: scheme reaches past inputs");
        std::vector<LadlagPath> paths;
        paths.reserve(bundles.front().scenarios());
        for (std::size_t s = 0; s < bundles.front().scenarios(); ++s) {
            LadlagPath acc = LadlagPath::constant(bundles.front().grid, 0.0);
            for (std::size_t j = 0; j < row.size(); ++j) {
                if (row[j] != 0.0) acc.scale_add(row[j], bundles[n + j].paths[s]);
            }
            paths.push_back(std::move(acc));
        }
        out.emplace_back(bundles.front().grid, std::move(paths), bundles.front().weights,
                         Provenance{bundles.front().provenance.seed, "combined"});
    }
    return out;
}

namespace {

double weighted_median(std::vector<std::pair<double, double>>& vw /*value, weight*/) {
    if (vw.empty()) throw LabError("weighted_median: empty");
    std::sort(vw.begin(), vw.end());
    double total = 0.0;
    for (const auto& [v, w] : vw) total += w;
    double acc = 0.0;
    for (const auto& [v, w] : vw) {
        acc += w;
        if (acc >= 0.5 * total) return v;
    }
    return vw.back().first;
}

// Stabilized per-scenario limit of a sequence of per-scenario values.
// Scenarios whose trailing window keeps moving get the weighted median
// of the stabilized ones (atom-wise when an impute tree is supplied);
// their mass must stay below max_unstable_mass.
std::vector<double> stabilized_limit(const std::vector<std::vector<double>>& seq,
                                     const std::vector<double>& weights, const FatouOptions& opts,
                                     const std::string& what) {
    const std::size_t S = weights.size();
    const std::size_t N = seq.size();
    const std::size_t W = std::min(opts.window, N);
    std::vector<double> out(S);
    std::vector<char> is_stable(S, 0);
    std::vector<std::pair<double, double>> stable;
    std::vector<std::size_t> moving;
    double moving_mass = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
        bool ok = true;
        for (std::size_t i = N - W; i + 1 < N && ok; ++i) {
            if (std::abs(seq[i][s] - seq[N - 1][s]) > opts.node_eps) ok = false;
        }
        if (ok) {
            out[s] = seq[N - 1][s];
            is_stable[s] = 1;
            stable.push_back({out[s], weights[s]});
        } else {
            moving.push_back(s);
            moving_mass += weights[s];
        }
    }
    if (moving_mass > opts.max_unstable_mass)
        throw LabError(what + ": limits not stabilized (moving scenario mass " +
                       std::to_string(moving_mass) + ")");
    if (!moving.empty()) {
        if (stable.empty()) throw LabError(what + ": no stabilized scenario to impute from");
        const double global_med = weighted_median(stable);
        const ScenarioTree* tree = opts.impute_tree.get();
        const std::size_t finest = tree ? tree->n_levels() - 1 : 0;
        for (std::size_t s : moving) {
            double imputed = global_med;
            if (tree && tree->n_scenarios() == S) {
                std::vector<std::pair<double, double>> peers;
                const std::uint32_t atom = tree->atom_of(finest, s);
                for (std::size_t p = 0; p < S; ++p) {
                    if (is_stable[p] && tree->atom_of(finest, p) == atom)
                        peers.push_back({out[p], weights[p]});
                }
                if (!peers.empty()) imputed = weighted_median(peers);
            }
            out[s] = imputed;
        }
    }
    return out;
}

}  // namespace

PathBundle fatou_limit(const std::vector<PathBundle>& bundles,
                       const std::vector<std::size_t>& subgrid_nodes, const FatouOptions& opts) {
    if (bundles.empty()) throw LabError("fatou_limit: no bundles");
    const TimeGridPtr grid = bundles.front().grid;
    const std::size_t S = bundles.front().scenarios();
    for (const auto& b : bundles) {
        require_same_grid(grid, b.grid, "fatou_limit");
        if (b.scenarios() != S) throw LabError("fatou_limit: bundles are not aligned");
    }
    if (subgrid_nodes.empty()) throw LabError("fatou_limit: empty sub-grid");
    for (std::size_t j = 1; j < subgrid_nodes.size(); ++j) {
        if (subgrid_nodes[j] <= subgrid_nodes[j - 1])
            throw LabError("fatou_limit: sub-grid nodes must be increasing");
    }
    const std::size_t K = grid->size() - 1;
    if (subgrid_nodes.back() != K) throw LabError("fatou_limit: sub-grid must contain the terminal node");

    // per sub-grid node q: stabilized limit Z_q
    std::vector<std::vector<double>> z(subgrid_nodes.size());
    for (std::size_t qi = 0; qi < subgrid_nodes.size(); ++qi) {
        const std::size_t q = subgrid_nodes[qi];
        std::vector<std::vector<double>> seq(bundles.size(), std::vector<double>(S));
        for (std::size_t n = 0; n < bundles.size(); ++n) {
            for (std::size_t s = 0; s < S; ++s) seq[n][s] = bundles[n].paths[s].node_value(q);
        }
        z[qi] = stabilized_limit(seq, bundles.front().weights, opts,
                                 "fatou_limit at node " + std::to_string(q));
    }

    // X_t = Z at the first sub-grid node strictly above t; X_1 = Z_1
    std::vector<LadlagPath> paths;
    paths.reserve(S);
    for (std::size_t s = 0; s < S; ++s) {
        std::vector<double> nodes(K + 1);
        for (std::size_t k = 0; k <= K; ++k) {
            if (k == K) {
                nodes[k] = z.back()[s];
            } else {
                auto it = std::upper_bound(subgrid_nodes.begin(), subgrid_nodes.end(), k);
                nodes[k] = z[static_cast<std::size_t>(it - subgrid_nodes.begin())][s];
            }
        }
        paths.push_back(LadlagPath::cadlag(grid, std::move(nodes)));
    }
    return PathBundle(grid, std::move(paths), bundles.front().weights,
                      Provenance{bundles.front().provenance.seed, "fatou-limit"});
}

DoubleLimit double_limit(const std::vector<PathBundle>& bundles, const FatouOptions& opts) {
    if (bundles.empty()) throw LabError("double_limit: no bundles");
    const TimeGridPtr grid = bundles.front().grid;
    const std::size_t S = bundles.front().scenarios();
    const std::size_t K = grid->size() - 1;
    for (const auto& b : bundles) {
        require_same_grid(grid, b.grid, "double_limit");
        if (b.scenarios() != S) throw LabError("double_limit: bundles are not aligned");
    }

    auto limit_of = [&](auto&& getter, const std::string& what) {
        std::vector<std::vector<double>> out;
        for (std::size_t k = 0; k <= K; ++k) {
            std::vector<std::vector<double>> seq(bundles.size(), std::vector<double>(S));
            for (std::size_t n = 0; n < bundles.size(); ++n) {
                for (std::size_t s = 0; s < S; ++s) seq[n][s] = getter(bundles[n].paths[s], k);
            }
            out.push_back(stabilized_limit(seq, bundles.front().weights, opts,
                                           what + " at node " + std::to_string(k)));
        }
        return out;
    };

    const auto node_lim = limit_of([](const LadlagPath& p, std::size_t k) { return p.node_value(k); },
                                   "double_limit value");
    const auto left_lim = limit_of([](const LadlagPath& p, std::size_t k) { return p.left_limit(k); },
                                   "double_limit left limit");
    std::vector<std::vector<double>> intv_lim;
    {
        std::vector<std::vector<double>> out;
        for (std::size_t k = 0; k < K; ++k) {
            std::vector<std::vector<double>> seq(bundles.size(), std::vector<double>(S));
            for (std::size_t n = 0; n < bundles.size(); ++n) {
                for (std::size_t s = 0; s < S; ++s) seq[n][s] = bundles[n].paths[s].interval_value(k);
            }
            out.push_back(stabilized_limit(seq, bundles.front().weights, opts,
                                           "double_limit interval at node " + std::to_string(k)));
        }
        intv_lim = std::move(out);
    }

    auto build = [&](const std::vector<std::vector<double>>& nodes_by_level) {
        std::vector<LadlagPath> paths;
        paths.reserve(S);
        for (std::size_t s = 0; s < S; ++s) {
            std::vector<double> nv(K + 1), iv(K);
            for (std::size_t k = 0; k <= K; ++k) nv[k] = nodes_by_level[k][s];
            for (std::size_t k = 0; k < K; ++k) iv[k] = intv_lim[k][s];
            paths.emplace_back(grid, std::move(nv), std::move(iv));
        }
        return PathBundle(grid, std::move(paths), bundles.front().weights,
                          Provenance{bundles.front().provenance.seed, "double-limit"});
    };

    DoubleLimit out;
    out.optional_part = build(node_lim);
    out.predictable_part = build(left_lim);
    return out;
}

double exceedance_estimate(const std::vector<double>& a, const std::vector<double>& b,
                           const std::vector<double>& weights, double eps) {
    double p = 0.0;
    for (std::size_t s = 0; s < weights.size(); ++s) {
        if (std::abs(a[s] - b[s]) > eps) p += weights[s];
    }
    return p;
}

double binomial_stderr(double p, const std::vector<double>& weights) {
    double sumsq = 0.0;
    for (double w : weights) sumsq += w * w;
    // effective sample size 1 / sum w^2
    return std::sqrt(std::max(p * (1.0 - p), 0.0) * sumsq);
}

ConvergenceReport convergence_in_probability(const std::vector<PathBundle>& bundles,
                                             const PathBundle& target,
                                             const std::vector<NamedStoppingTime>& taus,
                                             const std::vector<double>& eps_list, Side side) {
    ConvergenceReport rep;
    rep.seed = target.provenance.seed;
    for (const auto& named : taus) {
        const std::vector<double> target_vals = evaluate_at(target, named.tau, side);
        for (std::size_t n = 0; n < bundles.size(); ++n) {
            const std::vector<double> vals = evaluate_at(bundles[n], named.tau, side);
            for (double eps : eps_list) {
                ConvergenceCell cell;
                cell.sequence_index = n;
                cell.tau_id = named.id;
                cell.side = side;
                cell.eps = eps;
                cell.estimate = exceedance_estimate(vals, target_vals, target.weights, eps);
                cell.stderr_ = binomial_stderr(cell.estimate, target.weights);
                cell.samples = target.scenarios();
                rep.cells.push_back(std::move(cell));
            }
        }
    }
    return rep;
}

bool ConvergenceReport::eventually_below(const std::string& tau_id, Side side, double eps,
                                         double bound) const {
    bool any = false;
    bool below = false;
    for (const auto& c : cells) {
        if (c.tau_id == tau_id && c.side == side && c.eps == eps) {
            any = true;
            below = c.estimate < bound;
        }
    }
    return any && below;
}

double ConvergenceReport::last_estimate(const std::string& tau_id, Side side, double eps) const {
    double out = std::numeric_limits<double>::quiet_NaN();
    for (const auto& c : cells) {
        if (c.tau_id == tau_id && c.side == side && c.eps == eps) out = c.estimate;
    }
    return out;
}

std::vector<double> one_sided_gap(const std::vector<PathBundle>& bundles, const PathBundle& target,
                                  const GridStoppingTime& tau) {
    const std::vector<double> target_vals = evaluate_at(target, tau, Side::Right);
    std::vector<double> out;
    out.reserve(bundles.size());
    for (const auto& b : bundles) {
        const std::vector<double> vals = evaluate_at(b, tau, Side::Right);
        double acc = 0.0;
        for (std::size_t s = 0; s < vals.size(); ++s) {
            acc += target.weights[s] * std::max(0.0, target_vals[s] - vals[s]);
        }
        out.push_back(acc);
    }
    return out;
}

LeftLimitCheck left_limit_convergence_check(const std::vector<PathBundle>& bundles,
                                            const PathBundle& target, const GridStoppingTime& sigma,
                                            double eps, const std::vector<PathBundle>& zoo,
                                            const std::vector<int>& dyadic_levels) {
    LeftLimitCheck out;
    out.exceedance = convergence_in_probability(bundles, target, {{"sigma", sigma}},
                                                std::vector<double>{eps}, Side::Left);
    out.dyadic_levels = dyadic_levels;
    for (int m : dyadic_levels) {
        const GridStoppingTime tau_m = dyadic_approximation(sigma, m);
        const auto dn = sigma.grid->dyadic_nodes(m);
        if (!dn) throw RefinementRequiredError("left_limit_convergence_check: missing dyadics");
        double worst = 0.0;
        for (const auto& X : zoo) {
            require_same_grid(X.grid, sigma.grid, "left_limit_convergence_check");
            double p = 0.0;
            for (std::size_t s = 0; s < X.scenarios(); ++s) {
                if (sigma.never(s)) continue;
                // node one dyadic step of level m before tau_m
                const std::size_t tm = tau_m.node_of[s];
                auto it = std::lower_bound(dn->begin(), dn->end(), tm);
                const std::size_t pos = static_cast<std::size_t>(it - dn->begin());
                const std::size_t back = pos == 0 ? 0 : (*dn)[pos - 1];
                const double probe = X.paths[s].node_value(back);
                const double left = X.paths[s].left_limit(sigma.node_of[s]);
                if (std::abs(probe - left) > eps) p += X.weights[s];
            }
            worst = std::max(worst, p);
        }
        out.dyadic_gap.push_back(worst);
    }
    for (std::size_t i = 1; i < out.dyadic_gap.size(); ++i) {
        if (out.dyadic_gap[i] > out.dyadic_gap[i - 1] + 1e-12) out.gap_decreasing = false;
    }
    return out;
}

}  // namespace lab
