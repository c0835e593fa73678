#include "lab/counterexample.hpp"

#include <algorithm>
#include <cmath>

#include "lab/parallel.hpp"
#include "lab/rng.hpp"

namespace lab {

CounterexampleFamily::CounterexampleFamily(TimeGridPtr base_grid, CounterexampleParams params,
                                           std::uint64_t seed)
    : params_(std::move(params)), seed_(seed) {
    if (params_.slots < 8) throw LabError("CounterexampleFamily: need at least 8 slots");
    if (params_.band_sizes.empty()) throw LabError("CounterexampleFamily: need at least one band");
    std::vector<double> slot_times;
    for (std::size_t i = 1; i <= params_.slots; ++i) {
        slot_times.push_back(static_cast<double>(i) / static_cast<double>(params_.slots + 1));
    }
    grid_ = std::make_shared<TimeGrid>(base_grid->refined_with(slot_times));
    delta_ = (1.0 - params_.residual) / static_cast<double>(params_.slots);
    double acc = 0.0;
    for (double t : slot_times) {
        const auto node = grid_->find_node(t);
        if (!node) throw LabError("CounterexampleFamily: slot is not a grid node");
        slot_times_.push_back(t);
        slot_nodes_.push_back(*node);
        drop_before_.push_back(acc);
        acc += delta_;
    }
    band_start_.push_back(0);
    for (std::size_t b : params_.band_sizes) band_start_.push_back(band_start_.back() + b);
}

std::size_t CounterexampleFamily::max_index() const { return band_start_.back(); }

int CounterexampleFamily::band_of(std::size_t n) const {
    for (std::size_t b = 0; b + 1 < band_start_.size(); ++b) {
        if (n < band_start_[b + 1]) return static_cast<int>(b) + 1;
    }
    return static_cast<int>(params_.band_sizes.size()) + 1;
}

double CounterexampleFamily::block_cap(std::size_t n, std::size_t i) const {
    const int levels = static_cast<int>(params_.band_sizes.size());
    const int band = band_of(n);
    const double base_level = std::ldexp(1.0, std::min(band, levels));
    double cap = (base_level + drop_before_[i]) * (1.0 + params_.cap_margin);
    if (band > levels) {
        const double over = static_cast<double>(n - band_start_.back());
        const double g = 1.0 + (over / params_.ramp_scale) * (over / params_.ramp_scale);
        cap *= g;
    }
    return cap;
}

CounterexampleFamily::BlockDraw CounterexampleFamily::draw(std::size_t scenario, std::size_t n,
                                                           std::size_t i) const {
    const double u = RngStream::counter_uniform(seed_, scenario, n + 1, i + 1);
    const double cap = block_cap(n, i);
    // excursion maximum law P(S >= x) = delta / (x + delta), absorbed at the cap
    const double s_raw = delta_ * (1.0 - u) / u;
    BlockDraw d;
    d.won = s_raw >= cap;
    d.excursion_max = d.won ? cap : s_raw;
    d.end = d.won ? cap : -delta_;
    return d;
}

LadlagPath CounterexampleFamily::path(std::size_t scenario, std::size_t n) const {
    std::vector<double> nodes(grid_->size(), 1.0);
    double v = 1.0;
    bool frozen = false;
    std::size_t i = 0;
    for (std::size_t k = 0; k < grid_->size(); ++k) {
        while (i < slot_nodes_.size() && slot_nodes_[i] < k) {
            if (!frozen) {
                const BlockDraw d = draw(scenario, n, i);
                v += d.end;
                frozen = d.won;
            }
            ++i;
        }
        nodes[k] = v;
    }
    return LadlagPath::cadlag(grid_, std::move(nodes));
}

PathBundle CounterexampleFamily::materialize(std::size_t n, std::size_t n_scenarios) const {
    std::vector<LadlagPath> paths;
    paths.reserve(n_scenarios);
    for (std::size_t s = 0; s < n_scenarios; ++s) paths.push_back(path(s, n));
    return PathBundle(grid_, std::move(paths), PathBundle::uniform_weights(n_scenarios),
                      Provenance{seed_, "counterexample n=" + std::to_string(n)});
}

double CounterexampleFamily::window_sup(std::size_t scenario, std::size_t n, double lo,
                                        double hi) const {
    double v = 1.0;
    double sup = lo <= 0.0 ? v : -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < slot_times_.size(); ++i) {
        const double t = slot_times_[i];
        if (t >= hi) break;
        const BlockDraw d = draw(scenario, n, i);
        if (t >= lo) sup = std::max(sup, v + d.excursion_max);
        v += d.end;
        if (t >= lo) sup = std::max(sup, v);
        if (d.won) break;  // absorbed: the path is frozen from here on
    }
    if (hi > lo) sup = std::max(sup, v);  // frozen level persists into the window
    return sup;
}

double CounterexampleFamily::value_at(std::size_t scenario, std::size_t n, double t) const {
    double v = 1.0;
    for (std::size_t i = 0; i < slot_times_.size() && slot_times_[i] < t; ++i) {
        const BlockDraw d = draw(scenario, n, i);
        v += d.end;
        if (d.won) break;
    }
    return v;
}

std::vector<double> ex2_hypothesis_check(const CounterexampleFamily& family,
                                         const std::vector<std::size_t>& probes,
                                         const HypothesisCheckOptions& opts) {
    std::vector<double> out;
    for (std::size_t n : probes) {
        double worst = 0.0;
        for (double t : opts.probe_times) {
            std::size_t over = 0;
            for (std::size_t s = 0; s < opts.probe_scenarios; ++s) {
                const double v = family.value_at(s, n, t + 1e-12);
                if (std::abs(v - (1.0 - t)) > opts.eps) ++over;
            }
            worst = std::max(worst, static_cast<double>(over) /
                                        static_cast<double>(opts.probe_scenarios));
        }
        out.push_back(worst);
    }
    if (out.size() >= 2 && out.back() > opts.final_bound)
        throw LabError("ex2_hypothesis_check: exceedance " + std::to_string(out.back()) +
                       " at the last probe exceeds " + std::to_string(opts.final_bound));
    if (out.size() >= 2 && out.back() > out.front())
        throw LabError("ex2_hypothesis_check: exceedance profile is not decreasing");
    return out;
}

AdaptiveTauResult ex2_adaptive_tau(const CounterexampleFamily& family, double eps, int m_max,
                                   std::size_t n_scenarios,
                                   const HypothesisCheckOptions& hypothesis, std::size_t workers) {
    if (m_max < 0) throw LabError("ex2_adaptive_tau: m_max >= 0");
    AdaptiveTauResult res;
    res.scenarios = n_scenarios;

    // hypothesis first: probe indices spread over the bands and the ramp
    std::vector<std::size_t> probes;
    {
        std::size_t start = 0;
        for (std::size_t b : family.params().band_sizes) {
            probes.push_back(start + b / 2);
            start += b;
        }
        probes.push_back(start + static_cast<std::size_t>(2 * family.params().ramp_scale));
        probes.push_back(start + static_cast<std::size_t>(8 * family.params().ramp_scale));
    }
    res.probe_indices = probes;
    res.probe_exceedance = ex2_hypothesis_check(family, probes, hypothesis);

    const std::size_t K = family.grid()->size() - 1;
    res.tau.grid = family.grid();
    res.tau.node_of.assign(n_scenarios, static_cast<std::uint32_t>(K));
    res.mean_n_per_level.assign(static_cast<std::size_t>(m_max) + 1, 0.0);

    const std::size_t n_limit = family.max_index();
    std::vector<char> scen_success(n_scenarios, 0), scen_hold(n_scenarios, 0);
    std::vector<std::vector<std::size_t>> scen_found_n(n_scenarios);

    parallel_for(n_scenarios, workers, [&](std::size_t s) {
        double tau_prev = 0.0, sigma_prev = 0.5;
        std::size_t n_prev = 0;  // indices are 1-based in the scan
        bool alive = true;
        std::vector<std::size_t> found_n;
        std::vector<double> found_tau;
        for (int m = 1; m <= m_max && alive; ++m) {
            const double threshold = std::ldexp(1.0, m) + 1.0;
            bool found = false;
            for (std::size_t n = n_prev + 1; n <= n_limit && !found; ++n) {
                // walk slots in time order, tracking the realized value;
                // after an absorbed win the index is frozen at its cap
                double v = 1.0;
                double found_tau_m = 0.0;
                for (std::size_t i = 0; i < family.slot_count() && !found; ++i) {
                    const double t = family.slot_time(i);
                    if (t >= sigma_prev) break;
                    const double gap =
                        (i + 1 < family.slot_count() ? family.slot_time(i + 1) : 1.0) - t;
                    if (t > tau_prev && v >= threshold) {
                        // frozen level carried into the window
                        found = true;
                        found_tau_m = t + 0.25 * gap;
                        break;
                    }
                    const auto d = family.draw(s, n, i);
                    if (t > tau_prev && v + d.excursion_max >= threshold) {
                        found = true;
                        found_tau_m = t + 0.25 * gap;
                        if (!d.won) sigma_prev = std::min(sigma_prev, t + 0.5 * gap);
                        break;
                    }
                    v += d.end;
                    if (d.won) {
                        // frozen: later excursions of this index are inert
                        if (v >= threshold && std::max(t, tau_prev) < sigma_prev) {
                            found = true;
                            found_tau_m = std::max(t, tau_prev) +
                                          0.25 * (sigma_prev - std::max(t, tau_prev));
                        }
                        break;
                    }
                }
                if (found) {
                    tau_prev = found_tau_m;
                    n_prev = n;
                    found_n.push_back(n);
                    found_tau.push_back(found_tau_m);
                }
            }
            if (!found) alive = false;
        }
        if (alive) {
            scen_success[s] = 1;
            scen_found_n[s] = found_n;
            const double tau = found_tau.empty() ? 0.0 : found_tau.back();
            // map tau to the next grid node
            std::uint32_t node = static_cast<std::uint32_t>(K);
            for (std::size_t k = 0; k <= K; ++k) {
                if (family.grid()->node(k) >= tau) {
                    node = static_cast<std::uint32_t>(k);
                    break;
                }
            }
            res.tau.node_of[s] = node;
            // do the found excursions still dominate their level at tau?
            // The last one is at its crossing point >= 2^m + 1 by
            // construction; earlier ones are evaluated at tau.
            bool hold = true;
            for (int m = 1; m < m_max; ++m) {
                const std::size_t nm = found_n[static_cast<std::size_t>(m - 1)];
                if (family.value_at(s, nm, tau) < std::ldexp(1.0, m)) hold = false;
            }
            scen_hold[s] = hold ? 1 : 0;
        }
    });

    std::size_t n_success = 0, n_hold = 0;
    std::vector<std::size_t> level_counts(static_cast<std::size_t>(m_max) + 1, 0);
    for (std::size_t s = 0; s < n_scenarios; ++s) {
        n_success += scen_success[s];
        n_hold += scen_hold[s];
        for (std::size_t m = 1; m <= scen_found_n[s].size(); ++m) {
            level_counts[m] += 1;
            res.mean_n_per_level[m] += static_cast<double>(scen_found_n[s][m - 1]);
        }
    }
    for (std::size_t m = 1; m < res.mean_n_per_level.size(); ++m) {
        if (level_counts[m] > 0) res.mean_n_per_level[m] /= static_cast<double>(level_counts[m]);
    }
    const double ns = static_cast<double>(n_scenarios);
    res.p_tau_lt_1 = static_cast<double>(n_success) / ns;
    res.p_levels_hold = static_cast<double>(n_hold) / ns;
    res.p_tau_lt_1_se = std::sqrt(std::max(res.p_tau_lt_1 * (1.0 - res.p_tau_lt_1), 0.0) / ns);
    res.p_levels_hold_se =
        std::sqrt(std::max(res.p_levels_hold * (1.0 - res.p_levels_hold), 0.0) / ns);
    (void)eps;
    return res;
}

double ex2_gamma_bound(double c, double alpha, double eps, double p_A) {
    if (!(eps > 0.0 && eps < 1.0)) throw LabError("ex2_gamma_bound: eps in (0,1)");
    if (!(p_A > 0.0 && p_A <= 1.0)) throw LabError("ex2_gamma_bound: p_A in (0,1]");
    if (!(alpha > (c + 4.0) * eps))
        throw LabError("ex2_gamma_bound: need alpha > (c+4) eps");
    return (alpha - 3.0 * eps - (c + 1.0) * eps) / (c + 1.0) * p_A;
}

ExcursionEstimate ex2_excursion_probability(const CounterexampleFamily& family, std::size_t n,
                                            double lo, double hi, double level,
                                            std::size_t n_scenarios) {
    std::size_t over = 0;
    for (std::size_t s = 0; s < n_scenarios; ++s) {
        if (family.window_sup(s, n, lo, hi) > level) ++over;
    }
    ExcursionEstimate est;
    est.estimate = static_cast<double>(over) / static_cast<double>(n_scenarios);
    est.se = std::sqrt(std::max(est.estimate * (1.0 - est.estimate), 0.0) /
                       static_cast<double>(n_scenarios));
    return est;
}

}  // namespace lab
