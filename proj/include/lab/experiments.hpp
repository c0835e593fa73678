#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "lab/timebase.hpp"

namespace lab {

struct ConfigError : LabError {
    using LabError::LabError;
};

struct ExperimentConfig {
    std::string experiment;
    nlohmann::json grid_spec;  // {"dyadic_level": m} or {"nodes": [...]}
    std::size_t scenarios = 10000;
    std::uint64_t seed = 1;
    std::size_t workers = 1;
    std::string output_dir;  // empty: resolved from env/default
    nlohmann::json params = nlohmann::json::object();
    nlohmann::json thresholds = nlohmann::json::object();

    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig from_file(const std::string& path);
    nlohmann::json to_json() const;

    TimeGridPtr make_base_grid() const;
};

struct Verdict {
    std::string name;
    bool pass = false;
    double value = 0.0;
    double threshold = 0.0;
    std::string detail;
};

struct RunManifest {
    std::string experiment;
    std::string config_hash;
    std::string artifact_version;
    std::string started_at;
    std::string finished_at;
    std::vector<std::string> output_files;
    std::vector<Verdict> verdicts;

    bool all_pass() const;
    nlohmann::json to_json() const;
};

struct PresetInfo {
    std::string name;
    std::string description;
    nlohmann::json default_params;
    nlohmann::json default_thresholds;
};

std::vector<PresetInfo> list_presets();

/// Runs one experiment preset: writes data/*.csv, summary.json and
/// manifest.json under the output directory, deterministically for a
/// fixed (config, seed).
RunManifest run_experiment(const ExperimentConfig& config);

/// Config validation without running; throws ConfigError on problems.
void validate_config(const ExperimentConfig& config);

std::string default_output_root();

}  // namespace lab
