#include "doctest.h"

#include <cstdlib>
#include <filesystem>

#include "lab/experiments.hpp"
#include "lab/serialize.hpp"

using namespace lab;
namespace fs = std::filesystem;

TEST_CASE("config parsing") {
    SUBCASE("unknown keys are rejected") {
        CHECK_THROWS_WITH_AS(
            ExperimentConfig::from_json({{"experiment", "ex0-fatou"}, {"typo", 1}}),
            doctest::Contains("typo"), ConfigError);
    }
    SUBCASE("the experiment name is mandatory and must exist") {
        CHECK_THROWS_AS(ExperimentConfig::from_json({{"seed", 1}}), ConfigError);
        const ExperimentConfig cfg = ExperimentConfig::from_json({{"experiment", "bogus"}});
        CHECK_THROWS_WITH_AS(validate_config(cfg), doctest::Contains("bogus"), ConfigError);
    }
    SUBCASE("grid specs accept dyadic levels and explicit nodes") {
        ExperimentConfig cfg = ExperimentConfig::from_json(
            {{"experiment", "ex0-fatou"}, {"grid", {{"dyadic_level", 3}}}});
        CHECK(cfg.make_base_grid()->size() == 9);
        cfg.grid_spec = nlohmann::json{{"nodes", {0.0, 0.25, 1.0}}};
        CHECK(cfg.make_base_grid()->size() == 3);
    }
    SUBCASE("positivity of seed and scenario count") {
        CHECK_THROWS_AS(
            ExperimentConfig::from_json({{"experiment", "ex0-fatou"}, {"seed", 0}}), ConfigError);
        CHECK_THROWS_AS(
            ExperimentConfig::from_json({{"experiment", "ex0-fatou"}, {"scenarios", 0}}),
            ConfigError);
    }
}

TEST_CASE("preset catalog") {
    const auto presets = list_presets();
    CHECK(presets.size() >= 9);
    const std::vector<std::string> expected{
        "ex0-fatou",        "compensator-example",         "komlos-extract",
        "integration-ibp",  "limit-integral",              "counterexample-ex2",
        "approximate-supermartingale", "left-limit-ti",    "relation-2-12"};
    for (const auto& name : expected) {
        bool found = false;
        for (const auto& p : presets) {
            if (p.name == name) {
                found = true;
                CHECK_FALSE(p.description.empty());
            }
        }
        CHECK(found);
    }
    // stable across calls
    const auto again = list_presets();
    REQUIRE(again.size() == presets.size());
    for (std::size_t i = 0; i < presets.size(); ++i) CHECK(again[i].name == presets[i].name);
}

TEST_CASE("tree and grid round trips") {
    TimeGridPtr g = make_grid({0.0, 0.5, 1.0});
    std::vector<std::vector<std::uint32_t>> atoms{{0, 0, 0}, {0, 1, 1}, {0, 1, 2}};
    auto tree = std::make_shared<ScenarioTree>(g, atoms, std::vector<double>{0.5, 0.25, 0.25});

    const nlohmann::json j = tree_to_json(*tree);
    const ScenarioTreePtr back = tree_from_json(j);
    CHECK(back->n_scenarios() == 3);
    CHECK(back->n_levels() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t s = 0; s < 3; ++s) CHECK(back->atom_of(k, s) == tree->atom_of(k, s));
    }

    // a corrupted file violating refinement fails on load
    nlohmann::json bad = j;
    bad["levels"][2] = nlohmann::json::array({nlohmann::json::array({0, 1, 2})});
    bad["levels"][1] = nlohmann::json::array(
        {nlohmann::json::array({0, 1}), nlohmann::json::array({2})});
    bad["levels"][2] = nlohmann::json::array(
        {nlohmann::json::array({0}), nlohmann::json::array({1, 2})});
    CHECK_THROWS_AS(tree_from_json(bad), LabError);
}

TEST_CASE("integrand config parsing") {
    TimeGridPtr g = make_dyadic_grid(2);
    const nlohmann::json spec{{"phi_c_samples", {{0.0, 0.0}, {1.0, 2.0}}},
                              {"jumps", {{0.5, 1.0, -0.25}}}};
    const FVIntegrand phi = integrand_from_json(g, spec);
    for (std::size_t k = 0; k < g->size(); ++k) {
        CHECK(phi.continuous_at(k) == doctest::Approx(2.0 * g->node(k)));
    }
    CHECK(phi.left_jump(*g->find_node(0.5)) == 1.0);
    CHECK(phi.right_jump(*g->find_node(0.5)) == -0.25);
    CHECK_THROWS_WITH_AS(
        integrand_from_json(g, nlohmann::json{{"jumps", {{0.3, 1.0, 0.0}}}}),
        doctest::Contains("grid node"), LabError);
}

TEST_CASE("bundle csv shape") {
    TimeGridPtr g = make_grid({0.0, 1.0});
    const PathBundle b(g, {LadlagPath::cadlag(g, {1.0, 2.0})}, {1.0});
    const std::string csv = bundle_to_csv(b);
    CHECK(csv.find("scenario,node,node_value,interval_value,weight\n") == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + 2 nodes
}

TEST_CASE("experiment runs are deterministic and self-describing") {
    const fs::path root = fs::temp_directory_path() / "lab-test-run";
    fs::remove_all(root);

    ExperimentConfig cfg = ExperimentConfig::from_json(
        {{"experiment", "ex0-fatou"}, {"seed", 7}, {"scenarios", 100}});
    cfg.output_dir = (root / "a").string();
    const RunManifest m1 = run_experiment(cfg);
    CHECK(m1.all_pass());
    CHECK_FALSE(m1.config_hash.empty());
    CHECK(fs::exists(root / "a" / "summary.json"));
    CHECK(fs::exists(root / "a" / "manifest.json"));
    CHECK(fs::exists(root / "a" / "data" / "expectations.csv"));

    cfg.output_dir = (root / "b").string();
    const RunManifest m2 = run_experiment(cfg);
    CHECK(read_text_file((root / "a" / "data" / "expectations.csv").string()) ==
          read_text_file((root / "b" / "data" / "expectations.csv").string()));
    CHECK(read_text_file((root / "a" / "data" / "fatou.csv").string()) ==
          read_text_file((root / "b" / "data" / "fatou.csv").string()));
    CHECK(read_text_file((root / "a" / "summary.json").string()) ==
          read_text_file((root / "b" / "summary.json").string()));
    fs::remove_all(root);
}
