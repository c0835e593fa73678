#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "lab/constructions.hpp"
#include "lab/ladlag_path.hpp"
#include "lab/limits.hpp"
#include "lab/rng.hpp"

using namespace lab;

namespace {

// exhaustive oracle for the maximal number of eps-moves on tiny sequences
int brute_force_moves(const std::vector<double>& v, double eps) {
    const std::size_t n = v.size();
    int best = 0;
    for (std::size_t mask = 1; mask < (std::size_t{1} << n); ++mask) {
        double last = 0.0;
        bool first = true;
        int moves = 0;
        bool ok = true;
        for (std::size_t i = 0; i < n && ok; ++i) {
            if (!(mask & (std::size_t{1} << i))) continue;
            if (!first && !(std::abs(v[i] - last) > eps)) ok = false;
            if (!first) ++moves;
            last = v[i];
            first = false;
        }
        if (ok) best = std::max(best, moves);
    }
    return best;
}

LadlagPath from_chain(TimeGridPtr g, const std::vector<double>& chain) {
    std::vector<double> nodes, intervals;
    for (std::size_t i = 0; i < chain.size(); ++i) {
        if (i % 2 == 0) {
            nodes.push_back(chain[i]);
        } else {
            intervals.push_back(chain[i]);
        }
    }
    return LadlagPath(std::move(g), std::move(nodes), std::move(intervals));
}

}  // namespace

TEST_CASE("limits and jumps of simple paths") {
    TimeGridPtr g = make_dyadic_grid(2);

    SUBCASE("constant path") {
        const LadlagPath p = LadlagPath::constant(g, 3.0);
        for (std::size_t k = 0; k < p.nodes(); ++k) {
            CHECK(p.right_limit(k) == 3.0);
            if (k >= 1) {
                CHECK(p.left_limit(k) == 3.0);
                CHECK(p.jumps(k) == std::pair<double, double>{0.0, 0.0});
            }
        }
        CHECK(p.left_limit(0) == 0.0);  // convention at time 0
    }
    SUBCASE("single right-jump path 1_{(s,1]}") {
        // value 0 at the s-node, 1 on the open interval after it
        std::vector<double> nodes{0, 0, 1, 1, 1};
        std::vector<double> intervals{0, 1, 1, 1};
        const LadlagPath p(g, nodes, intervals);
        const auto [left, right] = p.jumps(1);
        CHECK(left == 0.0);
        CHECK(right == 1.0);
    }
    SUBCASE("round trip: node values from interval values plus left jumps") {
        RngStream rng(5);
        LadlagPath p(g, {rng.normal(), rng.normal(), rng.normal(), rng.normal(), rng.normal()},
                     {rng.normal(), rng.normal(), rng.normal(), rng.normal()});
        for (std::size_t k = 1; k < p.nodes(); ++k) {
            CHECK(p.node_value(k) == doctest::Approx(p.left_limit(k) + p.jumps(k).first));
        }
    }
}

TEST_CASE("two-point family path on its grid") {
    TimeGridPtr g = ex0_grid(make_dyadic_grid(3), {2});
    const Ex0Tree et = ex0_tree(2, g);
    const LadlagPath& hi = et.martingale.bundle.paths[0];

    const std::size_t jump = *g->find_node(0.75);
    for (std::size_t k = 0; k < g->size(); ++k) {
        if (g->node(k) > 0.75) {
            CHECK(hi.node_value(k) == 2.0);  // Y on (3/4, 1]
        } else {
            CHECK(hi.node_value(k) == 1.0);
        }
    }
    CHECK(hi.left_limit(jump + 1) == 1.0);  // left limit at the jump node stays 1
}

TEST_CASE("eps move count") {
    TimeGridPtr g2 = make_grid({0.0, 0.5, 1.0});

    SUBCASE("constant path has no moves") {
        CHECK(eps_move_count(LadlagPath::constant(g2, 1.0), 0.25) == 0);
    }
    SUBCASE("single down-jump") {
        const LadlagPath p = from_chain(g2, {1, 1, 0, 0, 0});
        CHECK(eps_move_count(p, 0.5) == 1);
        CHECK(brute_force_moves(p.chain_values(), 0.5) == 1);
    }
    SUBCASE("zigzag 1,0,1,0,1 counts four moves") {
        const LadlagPath p = from_chain(g2, {1, 0, 1, 0, 1});
        CHECK(eps_move_count(p, 0.5) == 4);
        CHECK(brute_force_moves(p.chain_values(), 0.5) == 4);
    }
    SUBCASE("eager anchor-jumping undercounts; the sweep does not") {
        // starting at 0 and jumping to 0.5 strands the chain; the best
        // chain skips the first two points entirely
        const std::vector<double> v{0.0, 0.5, 0.2, 0.7, 0.1, 0.9};
        CHECK(brute_force_moves(v, 0.4) == 3);
        CHECK(eps_move_count(std::span<const double>(v), 0.4) == 3);
    }
    SUBCASE("monotone runs count every step") {
        const std::vector<double> v{0.0, 0.3, 0.6, 0.9};
        CHECK(eps_move_count(std::span<const double>(v), 0.25) == 3);
    }
    SUBCASE("ties at exactly eps do not count") {
        const std::vector<double> v{0.0, 0.5};
        CHECK(eps_move_count(std::span<const double>(v), 0.5) == 0);
    }
    SUBCASE("random sequences against the exhaustive oracle") {
        RngStream rng(17);
        for (int rep = 0; rep < 400; ++rep) {
            std::vector<double> v;
            const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 8.0);
            for (std::size_t i = 0; i < n; ++i) v.push_back(rng.uniform(-1.0, 1.0));
            const double eps = rng.uniform(0.05, 1.2);
            CHECK(eps_move_count(std::span<const double>(v), eps) == brute_force_moves(v, eps));
        }
    }
    SUBCASE("non-increasing in eps, and upcrossings are dominated") {
        RngStream rng(23);
        TimeGridPtr g = make_dyadic_grid(4);
        for (int rep = 0; rep < 50; ++rep) {
            std::vector<double> nodes(g->size()), intervals(g->intervals());
            for (auto& x : nodes) x = rng.uniform(0.0, 2.0);
            for (auto& x : intervals) x = rng.uniform(0.0, 2.0);
            const LadlagPath p(g, nodes, intervals);
            int prev = eps_move_count(p, 0.1);
            for (double eps : {0.2, 0.4, 0.8}) {
                const int cur = eps_move_count(p, eps);
                CHECK(cur <= prev);
                prev = cur;
            }
            const double a = 0.5, b = 1.3;
            CHECK(upcrossings(p, a, b) <= eps_move_count(p, b - a));
        }
    }
    CHECK_THROWS_AS(eps_move_count(LadlagPath::constant(g2, 0.0), 0.0), LabError);
}

TEST_CASE("upcrossings") {
    TimeGridPtr g = make_grid({0.0, 0.25, 0.5, 0.75, 1.0});
    SUBCASE("monotone decreasing path never upcrosses") {
        const LadlagPath p = LadlagPath::cadlag(g, {4, 3, 2, 1, 0});
        CHECK(upcrossings(p, 1.0, 3.0) == 0);
    }
    SUBCASE("0,1,0,1 upcrosses [0.25, 0.75] twice") {
        const LadlagPath p = LadlagPath::cadlag(g, {0, 1, 0, 1, 1});
        CHECK(upcrossings(p, 0.25, 0.75) == 2);
    }
    SUBCASE("a path inside (a,b) never completes a crossing") {
        const LadlagPath p = LadlagPath::constant(g, 0.5);
        CHECK(upcrossings(p, 0.25, 0.75) == 0);
    }
    CHECK_THROWS_AS(upcrossings(LadlagPath::constant(g, 0.0), 0.5, 0.5), LabError);
}

TEST_CASE("evaluation at stopping times") {
    TimeGridPtr g = ex0_grid(make_dyadic_grid(3), {2});
    const Ex0Tree et = ex0_tree(2, g);
    const PathBundle& b = et.martingale.bundle;

    SUBCASE("left limits at time 0 are 0 by convention") {
        const GridStoppingTime zero = GridStoppingTime::constant(g, 0, b.scenarios());
        for (double v : evaluate_at(b, zero, Side::Left)) CHECK(v == 0.0);
    }
    SUBCASE("terminal evaluation returns terminal node values") {
        const GridStoppingTime one = GridStoppingTime::constant(g, g->size() - 1, b.scenarios());
        const auto vals = evaluate_at(b, one, Side::Right);
        CHECK(vals[0] == 2.0);
        CHECK(vals[1] == 0.0);
    }
    SUBCASE("infinite entries raise an error naming the scenario") {
        GridStoppingTime tau = GridStoppingTime::constant(g, 0, b.scenarios());
        tau.node_of[1] = GridStoppingTime::kNever;
        CHECK_THROWS_WITH_AS(evaluate_at(b, tau, Side::Right),
                             doctest::Contains("scenario 1"), LabError);
    }
    SUBCASE("left and right evaluation agree wherever the left jump vanishes") {
        for (std::size_t k = 1; k < g->size(); ++k) {
            const GridStoppingTime tau = GridStoppingTime::constant(g, k, b.scenarios());
            const auto at = evaluate_at(b, tau, Side::Right);
            const auto left = evaluate_at(b, tau, Side::Left);
            for (std::size_t s = 0; s < b.scenarios(); ++s) {
                if (b.paths[s].jumps(k).first == 0.0) CHECK(at[s] == left[s]);
            }
        }
    }
}

TEST_CASE("evaluation splits value and left limit at the jump time") {
    const CompensatorFamily fam = compensator_family(0.9, {4}, make_dyadic_grid(3));
    const auto keep = fam.finite_sigma_scenarios();
    const PathBundle x2 = restrict_bundle(fam.x2, keep);
    const GridStoppingTime sigma = restrict_stopping_time(fam.sigma, keep);
    const auto at = evaluate_at(x2, sigma, Side::Right);
    const auto left = evaluate_at(x2, sigma, Side::Left);
    for (std::size_t i = 0; i < keep.size(); ++i) {
        const std::size_t s = keep[i];
        const std::size_t j = fam.sigma.node_of[s];
        const double a_sigma = fam.compensator.bundle.paths[s].node_value(j);
        const double a_before = fam.compensator.bundle.paths[s].node_value(j - 1);
        CHECK(at[i] == doctest::Approx(1.0 - a_sigma + 1.0).epsilon(1e-12));
        CHECK(left[i] == doctest::Approx(1.0 - a_before).epsilon(1e-12));
    }
}

TEST_CASE("override at stopping times") {
    const std::vector<int> ns{2, 10, 100, 1280, 2560, 5120};
    const Ex0Family fam = ex0_family(ns, make_dyadic_grid(4));
    const auto dyads = fam.grid->dyadic_nodes(4);
    const PathBundle fatou = fatou_limit(fam.bundles, *dyads);
    const std::size_t S = fatou.scenarios();

    SUBCASE("empty override list returns the bundle unchanged") {
        const PathBundle out = override_at_stopping_times(fatou, {}, {});
        for (std::size_t s = 0; s < S; ++s) {
            CHECK(out.paths[s].node_values() == fatou.paths[s].node_values());
        }
    }
    SUBCASE("overriding with the existing value changes nothing") {
        const GridStoppingTime tau = GridStoppingTime::constant(fam.grid, 3, S);
        std::vector<double> vals(S);
        for (std::size_t s = 0; s < S; ++s) vals[s] = fatou.paths[s].node_value(3);
        const PathBundle out = override_at_stopping_times(fatou, {tau}, {vals});
        for (std::size_t s = 0; s < S; ++s) {
            CHECK(out.paths[s].node_values() == fatou.paths[s].node_values());
        }
    }
    SUBCASE("overriding the Fatou limit at 1/2 recovers the pointwise limit") {
        const std::size_t half = *fam.grid->find_node(0.5);
        const GridStoppingTime tau = GridStoppingTime::constant(fam.grid, half, S);
        const PathBundle out =
            override_at_stopping_times(fatou, {tau}, {std::vector<double>(S, 1.0)});
        for (std::size_t s = 0; s < S; ++s) {
            for (std::size_t k = 0; k < fam.grid->size(); ++k) {
                const double expected = fam.grid->node(k) <= 0.5 ? 1.0 : 0.0;
                CHECK(out.paths[s].node_value(k) == expected);
            }
        }
    }
    SUBCASE("right limits never change, node by node") {
        RngStream rng(3);
        const GridStoppingTime tau = GridStoppingTime::constant(fam.grid, 5, S);
        std::vector<double> vals(S);
        for (auto& v : vals) v = rng.normal();
        const PathBundle out = override_at_stopping_times(fatou, {tau}, {vals});
        for (std::size_t s = 0; s < S; ++s) {
            for (std::size_t k = 0; k < fam.grid->size(); ++k) {
                CHECK(out.paths[s].right_limit(k) == fatou.paths[s].right_limit(k));
            }
        }
    }
    SUBCASE("overlapping graphs are rejected with the offending scenario") {
        const GridStoppingTime tau = GridStoppingTime::constant(fam.grid, 2, S);
        CHECK_THROWS_WITH_AS(
            override_at_stopping_times(fatou, {tau, tau},
                                       {std::vector<double>(S, 0.0), std::vector<double>(S, 1.0)}),
            doctest::Contains("scenario"), LabError);
    }
}

TEST_CASE("bundle weight validation") {
    TimeGridPtr g = make_dyadic_grid(1);
    std::vector<LadlagPath> paths{LadlagPath::constant(g, 1.0), LadlagPath::constant(g, 2.0)};
    CHECK_THROWS_AS(PathBundle(g, paths, {0.5, 0.6}), LabError);
    CHECK_THROWS_AS(PathBundle(g, paths, {-0.5, 1.5}), LabError);
}
