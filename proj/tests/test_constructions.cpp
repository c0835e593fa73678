#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "lab/constructions.hpp"
#include "lab/counterexample.hpp"
#include "lab/limits.hpp"
#include "lab/rng.hpp"

using namespace lab;

TEST_CASE("brownian carrier") {
    TimeGridPtr g = make_dyadic_grid(4);
    const std::size_t S = 100000;
    const PathBundle b = brownian_bundle(g, S, 99);

    SUBCASE("terminal variance is 1 within three standard errors") {
        double m = 0.0, m2 = 0.0;
        for (std::size_t s = 0; s < S; ++s) {
            const double w1 = b.paths[s].node_value(g->size() - 1);
            m += w1;
            m2 += w1 * w1;
        }
        m /= S;
        const double var = m2 / S - m * m;
        const double se = std::sqrt(2.0 / static_cast<double>(S));  // variance-of-variance scale
        CHECK(std::abs(var - 1.0) < 3.0 * se);
    }
    SUBCASE("increments over disjoint windows are uncorrelated") {
        const std::size_t half = *g->find_node(0.5);
        double acc = 0.0;
        for (std::size_t s = 0; s < S; ++s) {
            const double a = b.paths[s].node_value(half);
            const double c = b.paths[s].node_value(g->size() - 1) - a;
            acc += a * c;
        }
        const double corr = acc / S / 0.5;  // both halves have variance 1/2
        CHECK(std::abs(corr) < 3.0 / std::sqrt(static_cast<double>(S)));
    }
    SUBCASE("the same seed reproduces the bundle bit for bit") {
        const PathBundle c = brownian_bundle(g, 50, 99);
        for (std::size_t s = 0; s < 50; ++s) {
            CHECK(c.paths[s].node_values() == b.paths[s].node_values());
        }
    }
}

TEST_CASE("two-point mass escape family") {
    TimeGridPtr g = ex0_grid(make_dyadic_grid(4), {2, 10});

    SUBCASE("tree expectations are exactly one at every node") {
        for (int n : {2, 10}) {
            const Ex0Tree et = ex0_tree(n, g);
            for (std::size_t k = 0; k < g->size(); ++k) {
                const auto v = et.martingale.node_values(k);
                CHECK(et.tree->expectation(v) == doctest::Approx(1.0).epsilon(1e-15));
            }
            CHECK(check_martingale(et.martingale).ok);
        }
    }
    SUBCASE("the value is 1 up to one half for every index") {
        const Ex0Family fam = ex0_family({2, 10, 100}, make_dyadic_grid(4));
        for (const auto& bundle : fam.bundles) {
            for (std::size_t s = 0; s < bundle.scenarios(); ++s) {
                for (std::size_t k = 0; k < fam.grid->size(); ++k) {
                    if (fam.grid->node(k) <= 0.5) CHECK(bundle.paths[s].node_value(k) == 1.0);
                }
            }
        }
    }
    SUBCASE("monte carlo backend matches the jump layout") {
        TimeGridPtr gg = ex0_grid(make_dyadic_grid(3), {4});
        const PathBundle b = ex0_bundle(4, gg, 2000, 5);
        std::size_t high = 0;
        for (std::size_t s = 0; s < b.scenarios(); ++s) {
            const double terminal = b.paths[s].node_value(gg->size() - 1);
            CHECK((terminal == 0.0 || terminal == 4.0));
            if (terminal == 4.0) ++high;
        }
        const double p = static_cast<double>(high) / 2000.0;
        CHECK(std::abs(p - 0.25) < 3.0 * std::sqrt(0.25 * 0.75 / 2000.0));
    }
}

TEST_CASE("stopped integrand blocks") {
    const int n = 3;
    const double upper = 3.0;
    TimeGridPtr base = make_dyadic_grid(4);
    const std::vector<double> rho_vals{0.25};
    TimeGridPtr g = std::make_shared<TimeGrid>(
        base->refined_with(block_refinement_times(rho_vals, n)));
    const std::size_t S = 20000;
    const GridStoppingTime rho = GridStoppingTime::constant(g, *g->find_node(0.25), S);
    const PathBundle b = indicator_block_martingales(rho, n, upper, g, S, 321);

    SUBCASE("zero before the start and bounded afterwards") {
        for (std::size_t s = 0; s < 200; ++s) {
            for (std::size_t k = 0; k < g->size(); ++k) {
                if (g->node(k) <= 0.25) {
                    CHECK(b.paths[s].node_value(k) == 0.0);
                } else {
                    CHECK(b.paths[s].node_value(k) >= -1.0);
                    CHECK(b.paths[s].node_value(k) <= upper);
                }
            }
        }
    }
    SUBCASE("gambler's ruin: the lower barrier wins with odds upper/(upper+1)") {
        std::size_t hit_low = 0, resolved = 0;
        for (std::size_t s = 0; s < S; ++s) {
            const double terminal = b.paths[s].node_value(g->size() - 1);
            if (terminal == -1.0) {
                ++hit_low;
                ++resolved;
            } else if (terminal == upper) {
                ++resolved;
            }
        }
        // nearly every path resolves
        CHECK(static_cast<double>(resolved) / S > 0.995);
        const double p = static_cast<double>(hit_low) / resolved;
        const double want = upper / (upper + 1.0);
        CHECK(std::abs(p - want) < 3.0 * std::sqrt(want * (1.0 - want) / resolved));
    }
    SUBCASE("per-step drift stays within CLT range") {
        for (std::size_t k = *g->find_node(0.25) + 1; k + 1 < g->size(); k += 5) {
            double mean = 0.0, var = 0.0;
            std::size_t alive = 0;
            std::vector<double> steps;
            for (std::size_t s = 0; s < S; ++s) {
                const double before = b.paths[s].node_value(k);
                if (before <= -1.0 || before >= upper) continue;  // absorbed
                const double d = b.paths[s].node_value(k + 1) - before;
                steps.push_back(d);
                mean += d;
                ++alive;
            }
            if (alive < 500) continue;
            mean /= alive;
            for (double d : steps) var += (d - mean) * (d - mean);
            var /= alive;
            const double se = std::sqrt(std::max(var, 1e-12) / alive);
            CHECK(std::abs(mean) <= 4.0 * se + 1e-9);
        }
    }
}

TEST_CASE("compensated jump example, monte carlo backend") {
    TimeGridPtr base = make_dyadic_grid(4);
    // shifted evaluation node for n = 4
    std::vector<double> extra;
    for (std::size_t k = 1; k < base->size(); ++k) {
        if (base->node(k) + 0.25 < 1.0) extra.push_back(base->node(k) + 0.25);
    }
    TimeGridPtr g = std::make_shared<TimeGrid>(base->refined_with(extra));
    const HazardSpec hz = HazardSpec::proportional(*g, 0.8);
    const CompensatorExampleMc mc = compensator_example_mc(hz, 4, g, 4000, 17);

    SUBCASE("the two limit processes share left and right limits") {
        // at the terminal node the right limit is the value itself by
        // convention, so a jump there keeps its spike
        for (std::size_t s = 0; s < 200; ++s) {
            for (std::size_t k = 0; k < g->size(); ++k) {
                CHECK(mc.x2.paths[s].left_limit(k) == doctest::Approx(mc.x1.paths[s].left_limit(k)));
                if (k + 1 < g->size()) {
                    CHECK(mc.x2.paths[s].right_limit(k) ==
                          doctest::Approx(mc.x1.paths[s].right_limit(k)));
                }
            }
        }
    }
    SUBCASE("the approximating martingales drift within CLT range") {
        double worst = 0.0;
        for (std::size_t k = 0; k + 1 < g->size(); k += 7) {
            double mean = 0.0;
            for (std::size_t s = 0; s < mc.m2n.scenarios(); ++s) {
                mean += mc.m2n.paths[s].node_value(k + 1) - mc.m2n.paths[s].node_value(k);
            }
            mean /= mc.m2n.scenarios();
            worst = std::max(worst, std::abs(mean));
        }
        CHECK(worst < 4.0 / std::sqrt(static_cast<double>(mc.m2n.scenarios())));
    }
}

TEST_CASE("gamma lower bound") {
    SUBCASE("the quoted arithmetic case") {
        CHECK(ex2_gamma_bound(1.0, 0.5, 0.05, 1.0) == doctest::Approx(0.125).epsilon(1e-15));
    }
    SUBCASE("vanishing eps recovers alpha p / (c+1)") {
        const double g1 = ex2_gamma_bound(1.0, 0.5, 1e-9, 0.8);
        CHECK(g1 == doctest::Approx(0.5 * 0.8 / 2.0).epsilon(1e-6));
    }
    SUBCASE("the precondition is enforced") {
        CHECK_THROWS_AS(ex2_gamma_bound(1.0, 0.2, 0.05, 1.0), LabError);
        CHECK_THROWS_AS(ex2_gamma_bound(1.0, 0.5, 0.0, 1.0), LabError);
        CHECK_THROWS_AS(ex2_gamma_bound(1.0, 0.5, 0.05, 0.0), LabError);
    }
}

TEST_CASE("adaptive excursion recursion") {
    CounterexampleParams params;
    const CounterexampleFamily fam(make_dyadic_grid(6), params, 11);

    SUBCASE("level zero is the trivial recursion start") {
        const AdaptiveTauResult r = ex2_adaptive_tau(fam, 0.1, 0, 200);
        CHECK(r.p_tau_lt_1 == 1.0);
        for (std::size_t s = 0; s < 200; ++s) {
            CHECK(fam.grid()->node(r.tau.node_of[s]) == 0.0);
        }
    }
    SUBCASE("paths are non-negative martingale-consistent staircases") {
        const PathBundle b = fam.materialize(40, 500);
        double mean_end = 0.0;
        for (std::size_t s = 0; s < b.scenarios(); ++s) {
            for (std::size_t k = 0; k < b.grid->size(); ++k) {
                CHECK(b.paths[s].node_value(k) >= 0.0);
            }
            mean_end += b.paths[s].node_value(b.grid->size() - 1);
        }
        mean_end /= b.scenarios();
        CHECK(std::abs(mean_end - 1.0) < 0.2);  // mean one, heavy upper tail
    }
    SUBCASE("two levels succeed with found indices increasing") {
        const AdaptiveTauResult r = ex2_adaptive_tau(fam, 0.1, 2, 500);
        CHECK(r.p_tau_lt_1 > 0.95);
        CHECK(r.mean_n_per_level[1] < r.mean_n_per_level[2]);
    }
    SUBCASE("the hypothesis profile decreases toward zero") {
        const std::vector<std::size_t> probes{75, 600, 2100, 5900};
        const auto prof = ex2_hypothesis_check(fam, probes, {});
        CHECK(prof.front() > prof.back());
        CHECK(prof.back() <= 0.05);
    }
}

TEST_CASE("martingale approximation of tree supermartingales") {
    ApproximationPlan plan;
    plan.levels = 6;  // the union of win masses needs 8/(2^7+1) < 0.1

    SUBCASE("a bounded martingale is reproduced exactly") {
        TimeGridPtr g = make_dyadic_grid(2);
        std::vector<std::vector<std::uint32_t>> atoms(g->size(), std::vector<std::uint32_t>(4, 0));
        for (std::size_t k = 0; k < g->size(); ++k) {
            for (std::size_t s = 0; s < 4; ++s) {
                atoms[k][s] = static_cast<std::uint32_t>(k >= 2 ? s / 2 : 0);
                if (k >= 4) atoms[k][s] = static_cast<std::uint32_t>(s);
            }
        }
        auto tree = std::make_shared<ScenarioTree>(g, atoms, std::vector<double>(4, 0.25));
        std::vector<double> terminal{0.4, 1.2, 0.9, 1.5};
        std::vector<LadlagPath> paths;
        std::vector<std::vector<double>> lv(g->size());
        for (std::size_t k = 0; k < g->size(); ++k)
            lv[k] = tree->conditional_expectation(terminal, static_cast<int>(k));
        for (std::size_t s = 0; s < 4; ++s) {
            std::vector<double> nv(g->size());
            for (std::size_t k = 0; k < g->size(); ++k) nv[k] = lv[k][s];
            paths.push_back(LadlagPath::cadlag(g, std::move(nv)));
        }
        const AdaptedProcess X(tree, PathBundle(g, std::move(paths), std::vector<double>(4, 0.25)));
        const ApproximationResult ar = approximate_supermartingale(X, plan, 3);
        const GridStoppingTime one = GridStoppingTime::constant(g, g->size() - 1, 4);
        const auto exc = approximation_exceedance(ar, one, 1e-9);
        for (double e : exc) CHECK(e == 0.0);
    }
    SUBCASE("genuine left jumps are announced a level early and rebuilt") {
        // drop of scenario-dependent size at 0.5, readable one level before
        TimeGridPtr g = make_dyadic_grid(3);
        std::vector<std::vector<std::uint32_t>> atoms(g->size(), std::vector<std::uint32_t>(4, 0));
        for (std::size_t k = 1; k < g->size(); ++k) {
            for (std::size_t s = 0; s < 4; ++s) atoms[k][s] = static_cast<std::uint32_t>(s / 2);
        }
        auto tree = std::make_shared<ScenarioTree>(g, atoms, std::vector<double>(4, 0.25));
        const std::size_t drop_node = *g->find_node(0.5);
        std::vector<LadlagPath> paths;
        for (std::size_t s = 0; s < 4; ++s) {
            const double size = s < 2 ? 0.7 : 0.4;
            std::vector<double> nv(g->size(), 1.0);
            for (std::size_t k = drop_node; k < g->size(); ++k) nv[k] = 1.0 - size;
            paths.push_back(LadlagPath::cadlag(g, std::move(nv)));
        }
        const AdaptedProcess X(tree, PathBundle(g, std::move(paths), std::vector<double>(4, 0.25)));
        REQUIRE(check_optional_strong_supermartingale(X).ok);
        const ApproximationResult ar = approximate_supermartingale(X, plan, 5);
        for (const auto& out : ar.outputs) {
            CHECK(check_martingale(out.martingale).max_abs_slack < 1e-12);
        }
        for (std::size_t node : {drop_node, g->size() - 1}) {
            const GridStoppingTime tau = GridStoppingTime::constant(g, node, 4);
            const auto exc = approximation_exceedance(ar, tau, 0.1);
            CHECK(exc.back() < 0.1);
        }
    }
    SUBCASE("the deterministic ramp is approximated below tolerance at the last level") {
        TimeGridPtr g = make_dyadic_grid(4);
        auto tree = std::make_shared<ScenarioTree>(ScenarioTree::trivial(g, {0.5, 0.5}));
        std::vector<double> nv(g->size());
        for (std::size_t k = 0; k < g->size(); ++k) nv[k] = 1.0 - 0.5 * g->node(k);
        std::vector<LadlagPath> paths{LadlagPath::cadlag(g, nv), LadlagPath::cadlag(g, nv)};
        const AdaptedProcess X(tree, PathBundle(g, std::move(paths), {0.5, 0.5}));
        const ApproximationResult ar = approximate_supermartingale(X, plan, 3);

        for (const auto& out : ar.outputs) {
            const SupermartingaleReport rep = check_martingale(out.martingale);
            CHECK(rep.ok);
            CHECK(rep.max_abs_slack < 1e-12);
            CHECK(out.bound < 1e6);
        }
        const GridStoppingTime one = GridStoppingTime::constant(g, g->size() - 1, 2);
        const auto exc = approximation_exceedance(ar, one, 0.1);
        CHECK(exc.back() < 0.1);
        // one level deeper never raises the exceedance much
        for (std::size_t n = 1; n < exc.size(); ++n) CHECK(exc[n] <= exc[n - 1] + 0.05);
    }
}
