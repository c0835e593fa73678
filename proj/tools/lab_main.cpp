#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"

#include "lab/experiments.hpp"
#include "lab/serialize.hpp"

namespace {

constexpr int kExitPass = 0;
constexpr int kExitCriteriaFailed = 1;
constexpr int kExitConfigError = 2;
constexpr int kExitRuntimeError = 3;

int cmd_run(const std::string& config_path, std::uint64_t seed_override,
            std::size_t scenario_override, const std::string& outdir_override,
            std::size_t worker_override) {
    lab::ExperimentConfig cfg = lab::ExperimentConfig::from_file(config_path);
    if (seed_override != 0) cfg.seed = seed_override;
    if (scenario_override != 0) cfg.scenarios = scenario_override;
    if (!outdir_override.empty()) cfg.output_dir = outdir_override;
    if (worker_override != 0) cfg.workers = worker_override;

    const lab::RunManifest manifest = lab::run_experiment(cfg);
    for (const auto& v : manifest.verdicts) {
        std::printf("[%s] %-45s value=%.6g threshold=%.6g %s\n", v.pass ? "PASS" : "FAIL",
                    v.name.c_str(), v.value, v.threshold, v.detail.c_str());
    }
    std::printf("%s: %s\n", manifest.experiment.c_str(),
                manifest.all_pass() ? "all criteria passed" : "criteria FAILED");
    return manifest.all_pass() ? kExitPass : kExitCriteriaFailed;
}

int cmd_list() {
    for (const auto& p : lab::list_presets()) {
        std::printf("%-28s %s\n", p.name.c_str(), p.description.c_str());
    }
    return kExitPass;
}

int cmd_validate(const std::string& path) {
    const auto j = nlohmann::json::parse(lab::read_text_file(path));
    try {
        if (j.contains("levels")) {
            const auto tree = lab::tree_from_json(j);
            std::printf("tree ok: %zu scenarios, %zu levels, refinement and weights verified\n",
                        tree->n_scenarios(), tree->n_levels());
            return kExitPass;
        }
        const lab::ExperimentConfig cfg = lab::ExperimentConfig::from_json(j);
        lab::validate_config(cfg);
        std::printf("config ok: preset %s\n", cfg.experiment.c_str());
    } catch (const lab::LabError& e) {
        // any invalid input to validate is a configuration problem
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfigError;
    }
    return kExitPass;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lab: experiment runner for supermartingale limit diagnostics"};
    app.require_subcommand(1);

    std::string config_path, validate_path, outdir;
    std::uint64_t seed = 0;
    std::size_t scenarios = 0, workers = 0;

    auto* run = app.add_subcommand("run", "run an experiment preset from a config file");
    run->add_option("config", config_path, "config JSON path")->required();
    run->add_option("--seed", seed, "override the seed");
    run->add_option("--scenarios", scenarios, "override the scenario count");
    run->add_option("--output-dir", outdir, "override the output directory");
    run->add_option("--workers", workers, "override the worker count");

    app.add_subcommand("list", "list available presets");

    auto* val = app.add_subcommand("validate", "validate a config or tree JSON file");
    val->add_option("path", validate_path, "file to validate")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitPass : kExitConfigError;
    }

    try {
        if (app.got_subcommand("run")) return cmd_run(config_path, seed, scenarios, outdir, workers);
        if (app.got_subcommand("list")) return cmd_list();
        if (app.got_subcommand("validate")) return cmd_validate(validate_path);
    } catch (const lab::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfigError;
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntimeError;
    }
    return kExitConfigError;
}
