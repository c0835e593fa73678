#include "lab/serialize.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace lab {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

std::string bundle_to_csv(const PathBundle& bundle) {
    std::string out = "scenario,node,node_value,interval_value,weight\n";
    for (std::size_t s = 0; s < bundle.scenarios(); ++s) {
        const LadlagPath& p = bundle.paths[s];
        for (std::size_t k = 0; k < p.nodes(); ++k) {
            out += std::to_string(s);
            out += ',';
            out += std::to_string(k);
            out += ',';
            out += format_double(p.node_value(k));
            out += ',';
            if (k + 1 < p.nodes()) out += format_double(p.interval_value(k));
            out += ',';
            out += format_double(bundle.weights[s]);
            out += '\n';
        }
    }
    return out;
}

nlohmann::json bundle_manifest(const PathBundle& bundle) {
    nlohmann::json j;
    j["grid"] = grid_to_json(*bundle.grid);
    j["seed"] = bundle.provenance.seed;
    j["construction"] = bundle.provenance.tag;
    j["scenarios"] = bundle.scenarios();
    return j;
}

nlohmann::json grid_to_json(const TimeGrid& grid) {
    nlohmann::json j;
    j["nodes"] = grid.nodes();
    return j;
}

TimeGridPtr grid_from_json(const nlohmann::json& j) {
    if (j.contains("dyadic_level")) return make_dyadic_grid(j.at("dyadic_level").get<int>());
    return make_grid(j.at("nodes").get<std::vector<double>>());
}

FVIntegrand integrand_from_json(const TimeGridPtr& grid, const nlohmann::json& j) {
    std::vector<std::pair<double, double>> samples{{0.0, 0.0}, {1.0, 0.0}};
    if (j.contains("phi_c_samples")) {
        samples.clear();
        for (const auto& row : j.at("phi_c_samples")) {
            samples.push_back({row.at(0).get<double>(), row.at(1).get<double>()});
        }
        std::sort(samples.begin(), samples.end());
        if (samples.empty()) throw LabError("integrand_from_json: empty phi_c_samples");
    }
    std::vector<double> cont(grid->size());
    for (std::size_t k = 0; k < grid->size(); ++k) {
        const double t = grid->node(k);
        if (t <= samples.front().first) {
            cont[k] = samples.front().second;
        } else if (t >= samples.back().first) {
            cont[k] = samples.back().second;
        } else {
            for (std::size_t i = 1; i < samples.size(); ++i) {
                if (t <= samples[i].first) {
                    const auto [t0, v0] = samples[i - 1];
                    const auto [t1, v1] = samples[i];
                    cont[k] = v0 + (v1 - v0) * (t - t0) / (t1 - t0);
                    break;
                }
            }
        }
    }
    std::vector<double> lj(grid->size(), 0.0), rj(grid->size(), 0.0);
    if (j.contains("jumps")) {
        for (const auto& row : j.at("jumps")) {
            const double t = row.at(0).get<double>();
            const auto node = grid->find_node(t);
            if (!node) throw LabError("integrand_from_json: jump time " + format_double(t) +
                                      " is not a grid node");
            lj[*node] += row.at(1).get<double>();
            rj[*node] += row.at(2).get<double>();
        }
    }
    return FVIntegrand(grid, std::move(cont), std::move(lj), std::move(rj));
}

nlohmann::json tree_to_json(const ScenarioTree& tree) {
    nlohmann::json j;
    j["grid"] = grid_to_json(*tree.grid());
    j["weights"] = tree.weights();
    nlohmann::json levels = nlohmann::json::array();
    for (std::size_t k = 0; k < tree.n_levels(); ++k) {
        nlohmann::json atoms = nlohmann::json::array();
        for (const auto& atom : tree.atoms(k)) atoms.push_back(atom);
        levels.push_back(atoms);
    }
    j["levels"] = levels;
    return j;
}

ScenarioTreePtr tree_from_json(const nlohmann::json& j) {
    TimeGridPtr grid = grid_from_json(j.at("grid"));
    const auto weights = j.at("weights").get<std::vector<double>>();
    const auto levels = j.at("levels");
    std::vector<std::vector<std::uint32_t>> atom_of(levels.size(),
                                                    std::vector<std::uint32_t>(weights.size(), 0));
    for (std::size_t k = 0; k < levels.size(); ++k) {
        std::uint32_t atom_id = 0;
        for (const auto& atom : levels[k]) {
            for (const auto& s : atom) atom_of[k][s.get<std::size_t>()] = atom_id;
            ++atom_id;
        }
    }
    return std::make_shared<ScenarioTree>(std::move(grid), std::move(atom_of), weights);
}

std::string convergence_report_to_csv(const ConvergenceReport& report) {
    std::string out = "n,tau_id,side,eps,estimate,stderr,samples\n";
    for (const auto& c : report.cells) {
        out += std::to_string(c.sequence_index);
        out += ',';
        out += c.tau_id;
        out += ',';
        out += c.side == Side::Left ? "left" : "at";
        out += ',';
        out += format_double(c.eps);
        out += ',';
        out += format_double(c.estimate);
        out += ',';
        out += format_double(c.stderr_);
        out += ',';
        out += std::to_string(c.samples);
        out += '\n';
    }
    return out;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw LabError("cannot open for writing: " + path);
    f << content;
    if (!f) throw LabError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw LabError("cannot open: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::uint64_t fnv1a_hash(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace lab
