#include "lab/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>

#include "lab/constructions.hpp"
#include "lab/counterexample.hpp"
#include "lab/integration.hpp"
#include "lab/limits.hpp"
#include "lab/rng.hpp"
#include "lab/serialize.hpp"

namespace lab {

namespace fs = std::filesystem;

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    static const std::vector<std::string> known = {"experiment", "grid",   "scenarios", "seed",
                                                   "workers",    "params", "thresholds", "output_dir"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw ConfigError("unknown config key: " + it.key());
    }
    ExperimentConfig c;
    if (!j.contains("experiment")) throw ConfigError("config needs an \"experiment\" name");
    c.experiment = j.at("experiment").get<std::string>();
    if (j.contains("grid")) c.grid_spec = j.at("grid");
    if (j.contains("scenarios")) c.scenarios = j.at("scenarios").get<std::size_t>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("workers")) c.workers = j.at("workers").get<std::size_t>();
    if (j.contains("params")) c.params = j.at("params");
    if (j.contains("thresholds")) c.thresholds = j.at("thresholds");
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (c.scenarios == 0) throw ConfigError("scenarios must be positive");
    if (c.seed == 0) throw ConfigError("seed must be positive");
    return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse config " + path + ": " + e.what());
    }
    return from_json(j);
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["experiment"] = experiment;
    if (!grid_spec.is_null()) j["grid"] = grid_spec;
    j["scenarios"] = scenarios;
    j["seed"] = seed;
    j["workers"] = workers;
    j["params"] = params;
    j["thresholds"] = thresholds;
    return j;
}

TimeGridPtr ExperimentConfig::make_base_grid() const {
    if (grid_spec.is_null()) return make_dyadic_grid(6);
    try {
        return grid_from_json(grid_spec);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad grid spec: ") + e.what());
    }
}

bool RunManifest::all_pass() const {
    for (const auto& v : verdicts) {
        if (!v.pass) return false;
    }
    return true;
}

nlohmann::json RunManifest::to_json() const {
    nlohmann::json j;
    j["experiment"] = experiment;
    j["config_hash"] = config_hash;
    j["artifact_version"] = artifact_version;
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    j["output_files"] = output_files;
    nlohmann::json vs = nlohmann::json::array();
    for (const auto& v : verdicts) {
        vs.push_back({{"name", v.name},
                      {"pass", v.pass},
                      {"value", v.value},
                      {"threshold", v.threshold},
                      {"detail", v.detail}});
    }
    j["verdicts"] = vs;
    j["pass"] = all_pass();
    return j;
}

std::string default_output_root() {
    if (const char* env = std::getenv("LAB_OUTPUT_ROOT")) return env;
    return "lab-out";
}

namespace {

std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

struct PresetIO {
    fs::path dir;
    RunManifest* manifest = nullptr;

    void emit(const std::string& relpath, const std::string& content) const {
        const fs::path full = dir / relpath;
        fs::create_directories(full.parent_path());
        write_text_file(full.string(), content);
        manifest->output_files.push_back(relpath);
    }
    void verdict(const std::string& name, bool pass, double value, double threshold,
                 const std::string& detail = "") const {
        manifest->verdicts.push_back({name, pass, value, threshold, detail});
    }
};

double get_num(const nlohmann::json& obj, const std::string& key, double fallback) {
    return obj.contains(key) ? obj.at(key).get<double>() : fallback;
}

std::vector<int> get_int_list(const nlohmann::json& obj, const std::string& key,
                              std::vector<int> fallback) {
    return obj.contains(key) ? obj.at(key).get<std::vector<int>>() : std::move(fallback);
}

// ---- ex0-fatou -----------------------------------------------------------

void run_ex0_fatou(const ExperimentConfig& cfg, const PresetIO& io) {
    const double tol = get_num(cfg.thresholds, "exact_tol", 1e-12);
    const std::vector<int> n_list = get_int_list(cfg.params, "n_list", {2, 10, 100});
    const std::vector<int> tail = get_int_list(cfg.params, "stabilization_tail", {1280, 2560, 5120});
    // 0 picks the finest dyadic set the grid contains: the designated
    // "rational" sub-grid defaults to all dyadics of the grid
    int sub_level = static_cast<int>(get_num(cfg.params, "subgrid_dyadic_level", 0));
    TimeGridPtr base = cfg.make_base_grid();
    if (sub_level == 0) {
        for (int m = 10; m >= 1; --m) {
            if (base->dyadic_nodes(m)) {
                sub_level = m;
                break;
            }
        }
        if (sub_level == 0) throw ConfigError("ex0-fatou: grid contains no dyadic sub-grid");
    }

    std::vector<int> all_n = n_list;
    for (int n : tail) all_n.push_back(n);
    const Ex0Family fam = ex0_family(all_n, base);

    // exact tree backend per n: the expectation is 1 at every node
    std::string csv = "n,node,time,expectation,abs_error\n";
    double worst_exp = 0.0, worst_slack = 0.0;
    for (int n : n_list) {
        const Ex0Tree et = ex0_tree(n, fam.grid);
        const SupermartingaleReport mart = check_martingale(et.martingale, tol);
        worst_slack = std::max(worst_slack, mart.max_abs_slack);
        for (std::size_t k = 0; k < fam.grid->size(); ++k) {
            const auto vals = et.martingale.node_values(k);
            const double e = et.tree->expectation(vals);
            worst_exp = std::max(worst_exp, std::abs(e - 1.0));
            csv += std::to_string(n) + "," + std::to_string(k) + "," +
                   format_double(fam.grid->node(k)) + "," + format_double(e) + "," +
                   format_double(std::abs(e - 1.0)) + "\n";
        }
    }
    io.emit("data/expectations.csv", csv);
    io.verdict("expectation_error", worst_exp < tol, worst_exp, tol);
    io.verdict("tree_martingale_slack", worst_slack < tol, worst_slack, tol);

    const auto dyads = fam.grid->dyadic_nodes(sub_level);
    if (!dyads) throw ConfigError("ex0-fatou: base grid lacks the sub-grid dyadics");
    const PathBundle fatou = fatou_limit(fam.bundles, *dyads);

    std::size_t mismatches = 0;
    std::string fcsv = "node,time,fatou_value,expected\n";
    for (std::size_t k = 0; k < fam.grid->size(); ++k) {
        const double expected = fam.grid->node(k) < 0.5 ? 1.0 : 0.0;
        for (std::size_t s = 0; s < fatou.scenarios(); ++s) {
            if (fatou.paths[s].node_value(k) != expected) ++mismatches;
        }
        fcsv += std::to_string(k) + "," + format_double(fam.grid->node(k)) + "," +
                format_double(fatou.paths[0].node_value(k)) + "," + format_double(expected) + "\n";
    }
    io.emit("data/fatou.csv", fcsv);
    io.emit("data/fatou_bundle.csv", bundle_to_csv(fatou));
    io.emit("data/fatou_bundle.json", bundle_manifest(fatou).dump(2) + "\n");
    io.verdict("fatou_is_half_open_indicator", mismatches == 0, static_cast<double>(mismatches), 0.0);

    // pointwise limit at t = 1/2 stays 1
    const auto half = fam.grid->find_node(0.5);
    double worst_half = 0.0;
    for (const auto& b : fam.bundles) {
        for (std::size_t s = 0; s < b.scenarios(); ++s)
            worst_half = std::max(worst_half, std::abs(b.paths[s].node_value(*half) - 1.0));
    }
    io.verdict("pointwise_limit_at_half", worst_half < tol, worst_half, tol);
}

// ---- compensator-example -------------------------------------------------

GridStoppingTime hitting_time_below(const PathBundle& bundle, double level) {
    GridStoppingTime tau;
    tau.grid = bundle.grid;
    tau.node_of.assign(bundle.scenarios(), static_cast<std::uint32_t>(bundle.grid->size() - 1));
    for (std::size_t s = 0; s < bundle.scenarios(); ++s) {
        for (std::size_t k = 0; k < bundle.grid->size(); ++k) {
            if (bundle.paths[s].node_value(k) <= level) {
                tau.node_of[s] = static_cast<std::uint32_t>(k);
                break;
            }
        }
    }
    return tau;
}

void run_compensator_example(const ExperimentConfig& cfg, const PresetIO& io) {
    const double tol = get_num(cfg.thresholds, "exact_tol", 1e-12);
    const double eps = get_num(cfg.params, "eps", 0.1);
    const double bound = get_num(cfg.thresholds, "exceedance_bound", 0.05);
    const double pass_from_n = get_num(cfg.thresholds, "pass_from_n", 100);
    const double rate = get_num(cfg.params, "rate", 0.9);
    const std::vector<int> n_list = get_int_list(cfg.params, "n_list", {10, 25, 50, 100, 200});
    const CompensatorFamily fam = compensator_family(rate, n_list, cfg.make_base_grid());

    double mart_slack = 0.0;
    for (std::size_t ni = 0; ni < n_list.size(); ++ni) {
        mart_slack = std::max(mart_slack,
                              check_martingale(AdaptedProcess(fam.tree_m1, fam.m1[ni]), tol).max_abs_slack);
        mart_slack = std::max(
            mart_slack,
            check_martingale(AdaptedProcess(fam.tree_m2[ni], fam.m2[ni]), tol).max_abs_slack);
    }
    io.verdict("family_martingale_slack", mart_slack < tol, mart_slack, tol);

    // Mertens of the graph-corrected process recovers the pure right-jump part
    const MertensDecomposition md =
        mertens_decomposition(AdaptedProcess(fam.tree_sigma, fam.x2), tol);
    double mert_err = 0.0;
    for (std::size_t s = 0; s < fam.x2.scenarios(); ++s) {
        for (std::size_t k = 0; k < fam.grid->size(); ++k) {
            const bool after = !fam.sigma.never(s) && fam.sigma.node_of[s] < k;
            mert_err = std::max(
                mert_err, std::abs(md.compensator.bundle.paths[s].node_value(k) - (after ? 1.0 : 0.0)));
            if (k + 1 < fam.grid->size()) {
                const bool on = !fam.sigma.never(s) && fam.sigma.node_of[s] <= k;
                mert_err = std::max(mert_err, std::abs(md.compensator.bundle.paths[s].interval_value(k) -
                                                       (on ? 1.0 : 0.0)));
            }
        }
    }
    io.verdict("mertens_graph_correction", mert_err < tol, mert_err, tol);

    // convergence at stopping times on the finite-sigma part
    const auto keep = fam.finite_sigma_scenarios();
    const PathBundle x2r = restrict_bundle(fam.x2, keep);
    const GridStoppingTime sigma_r = restrict_stopping_time(fam.sigma, keep);
    std::vector<PathBundle> m2r;
    for (const auto& b : fam.m2) m2r.push_back(restrict_bundle(b, keep));

    std::vector<NamedStoppingTime> taus;
    taus.push_back({"sigma", sigma_r});
    const auto q3 = fam.grid->find_node(0.75);
    if (q3) taus.push_back({"t0.75", GridStoppingTime::constant(fam.grid, *q3, keep.size())});
    taus.push_back({"hit0.55", hitting_time_below(x2r, 0.55)});

    const ConvergenceReport rep =
        convergence_in_probability(m2r, x2r, taus, {eps}, Side::Right);
    io.emit("data/convergence.csv", convergence_report_to_csv(rep));

    bool conv_ok = true;
    double worst_est = 0.0;
    for (const auto& c : rep.cells) {
        if (static_cast<double>(n_list[c.sequence_index]) >= pass_from_n) {
            worst_est = std::max(worst_est, c.estimate);
            if (c.estimate >= bound) conv_ok = false;
        }
    }
    io.verdict("value_exceedance_tail", conv_ok, worst_est, bound);

    // the left-limit estimates identify the predictable limit, not the value
    const ConvergenceReport left_rep =
        convergence_in_probability(m2r, x2r, {{"sigma", sigma_r}}, {eps}, Side::Left);
    double left_worst = 0.0;
    for (const auto& c : left_rep.cells) left_worst = std::max(left_worst, c.estimate);
    io.verdict("left_limit_identifies_predictable_part", left_worst < bound, left_worst, bound);

    const auto x2_at_sigma = evaluate_at(x2r, sigma_r, Side::Right);
    double to_value = 1.0;
    for (std::size_t ni = 0; ni < m2r.size(); ++ni) {
        const auto left_vals = evaluate_at(m2r[ni], sigma_r, Side::Left);
        to_value = std::min(to_value, exceedance_estimate(left_vals, x2_at_sigma, x2r.weights, eps));
    }
    io.verdict("left_limit_stays_away_from_value", to_value > 0.9, to_value, 0.9,
               "exceedance against the value at sigma stays near 1");
}

// ---- komlos-extract ------------------------------------------------------

void run_komlos(const ExperimentConfig& cfg, const PresetIO& io) {
    const std::size_t n_idx = static_cast<std::size_t>(get_num(cfg.params, "n_indices", 120));
    const std::size_t n_seeds = static_cast<std::size_t>(get_num(cfg.params, "master_seeds", 100));
    const std::size_t S = static_cast<std::size_t>(
        get_num(cfg.params, "sample_scenarios", static_cast<double>(cfg.scenarios)));
    const double eps = get_num(cfg.params, "eps", 0.1);
    const double final_bound = get_num(cfg.thresholds, "final_bound", 0.05);
    const double seed_fraction = get_num(cfg.thresholds, "seed_fraction", 0.95);

    std::string csv = "master_seed,final_estimate,pass\n";
    std::size_t ok = 0;
    for (std::size_t ms = 0; ms < n_seeds; ++ms) {
        SampleMatrix m(S, n_idx);
        for (std::size_t s = 0; s < S; ++s) {
            RngStream rng = RngStream::derive(cfg.seed, ms, s);
            for (std::size_t n = 0; n < n_idx; ++n) {
                const double nn = static_cast<double>(n + 1);
                m.at(s, n) = rng.uniform() <= 1.0 / nn ? nn : 0.0;
            }
        }
        const KomlosResult kr = komlos_extract(m);
        const std::size_t last = kr.scheme.outputs() - 1;
        const auto& row = kr.scheme.row(last);
        std::size_t over = 0;
        for (std::size_t s = 0; s < S; ++s) {
            double v = 0.0;
            for (std::size_t j = 0; j < row.size(); ++j) {
                if (row[j] != 0.0) v += row[j] * m.at(s, last + j);
            }
            if (std::abs(v) > eps) ++over;
        }
        const double est = static_cast<double>(over) / static_cast<double>(S);
        const bool pass = est < final_bound;
        ok += pass ? 1 : 0;
        csv += std::to_string(ms) + "," + format_double(est) + "," + (pass ? "1" : "0") + "\n";
    }
    io.emit("data/komlos.csv", csv);
    const double frac = static_cast<double>(ok) / static_cast<double>(n_seeds);
    io.verdict("seed_fraction_below_bound", frac >= seed_fraction, frac, seed_fraction);
}

// ---- integration-ibp -----------------------------------------------------

LadlagPath random_ladlag(TimeGridPtr grid, RngStream& rng, double jump_rate = 0.2) {
    std::vector<double> nodes(grid->size()), intervals(grid->intervals());
    double v = rng.uniform(-1.0, 1.0);
    for (std::size_t k = 0; k < grid->size(); ++k) {
        if (k > 0 && rng.bernoulli(jump_rate)) v += rng.uniform(-1.0, 1.0);  // left jump
        nodes[k] = v;
        if (k < grid->intervals()) {
            if (rng.bernoulli(jump_rate)) v += rng.uniform(-1.0, 1.0);  // right jump
            intervals[k] = v;
        }
    }
    return LadlagPath(std::move(grid), std::move(nodes), std::move(intervals));
}

FVIntegrand random_integrand(TimeGridPtr grid, RngStream& rng) {
    const std::size_t n = grid->size();
    std::vector<double> cont(n), lj(n, 0.0), rj(n, 0.0);
    double c = rng.uniform(-1.0, 1.0);
    for (std::size_t k = 0; k < n; ++k) {
        cont[k] = c;
        c += rng.uniform(-0.2, 0.2);
    }
    for (std::size_t k = 1; k < n; ++k) {
        if (rng.bernoulli(0.15)) lj[k] = rng.uniform(-1.0, 1.0);
    }
    for (std::size_t k = 0; k + 1 < n; ++k) {
        if (rng.bernoulli(0.15)) rj[k] = rng.uniform(-1.0, 1.0);
    }
    return FVIntegrand(std::move(grid), std::move(cont), std::move(lj), std::move(rj));
}

void run_integration_ibp(const ExperimentConfig& cfg, const PresetIO& io) {
    const std::size_t cases = static_cast<std::size_t>(get_num(cfg.params, "cases", 1000));
    const std::size_t grid_nodes = static_cast<std::size_t>(get_num(cfg.params, "grid_nodes", 64));
    const double scale = get_num(cfg.thresholds, "residual_scale", 1e-10);
    const double exact_tol = get_num(cfg.thresholds, "consistency_tol", 1e-12);

    std::vector<double> nodes(grid_nodes);
    for (std::size_t k = 0; k < grid_nodes; ++k)
        nodes[k] = static_cast<double>(k) / static_cast<double>(grid_nodes - 1);
    nodes.back() = 1.0;
    TimeGridPtr grid = make_grid(std::move(nodes));

    double worst_ratio = 0.0;
    std::size_t failures = 0;
    std::string csv = "case,t_node,residual,bound\n";
    for (std::size_t c = 0; c < cases; ++c) {
        RngStream rng = RngStream::derive(cfg.seed, c, 3);
        const LadlagPath X = random_ladlag(grid, rng);
        const FVIntegrand phi = random_integrand(grid, rng);
        const std::size_t t = 1 + static_cast<std::size_t>(rng.uniform() * (grid_nodes - 1.000001));
        const double res = integration_by_parts_residual(phi, X, t);
        const double cap = scale * (1.0 + std::abs(phi.value_at_node(t) * X.node_value(t)));
        worst_ratio = std::max(worst_ratio, std::abs(res) / cap);
        if (std::abs(res) > cap) ++failures;
        if (c < 50) {
            csv += std::to_string(c) + "," + std::to_string(t) + "," + format_double(res) + "," +
                   format_double(cap) + "\n";
        }
    }
    io.emit("data/ibp.csv", csv);
    io.verdict("ibp_residual", failures == 0, worst_ratio, 1.0,
               "max |residual|/bound over " + std::to_string(cases) + " cases");

    // forward discrete integral consistency on small cadlag grids
    double worst = 0.0;
    for (std::size_t c = 0; c < 200; ++c) {
        RngStream rng = RngStream::derive(cfg.seed, c, 4);
        const std::size_t m = 4 + static_cast<std::size_t>(rng.uniform() * 12.0);
        std::vector<double> small(m + 1);
        for (std::size_t k = 0; k <= m; ++k)
            small[k] = static_cast<double>(k) / static_cast<double>(m);
        TimeGridPtr g = make_grid(std::move(small));
        std::vector<double> xv(g->size());
        double v = 1.0;
        for (std::size_t k = 0; k < g->size(); ++k) {
            if (k > 0) v += rng.uniform(-1.0, 1.0);
            xv[k] = v;
        }
        const LadlagPath X = LadlagPath::cadlag(g, xv);
        // simple predictable step integrand held on (a, b]
        const std::size_t a = static_cast<std::size_t>(rng.uniform() * (m - 1));
        const std::size_t b = a + 1 + static_cast<std::size_t>(rng.uniform() * (m - a - 0.000001));
        const double h = rng.uniform(-2.0, 2.0);
        FVIntegrand phi = FVIntegrand::right_indicator(g, a, h);
        {
            // step down at b: right jump -h (b < last) or nothing at the end
            std::vector<double> cont(g->size(), 0.0), lj(g->size(), 0.0), rj(g->size(), 0.0);
            rj[a] += h;
            if (b + 1 < g->size()) rj[b] -= h;
            phi = FVIntegrand(g, std::move(cont), std::move(lj), std::move(rj));
        }
        for (std::size_t t = 0; t <= m; ++t) {
            const double got = integrate_phi_dX(phi, X, t);
            const double want = h * (X.node_value(std::min(b, t)) - X.node_value(std::min(a, t)));
            worst = std::max(worst, std::abs(got - want));
        }
    }
    io.verdict("discrete_integral_consistency", worst < exact_tol, worst, exact_tol);
}

// ---- limit-integral ------------------------------------------------------

void run_limit_integral(const ExperimentConfig& cfg, const PresetIO& io) {
    const double eps = get_num(cfg.params, "eps", 0.1);
    const double bound = get_num(cfg.thresholds, "exceedance_bound", 0.05);
    const double rate = get_num(cfg.params, "rate", 0.9);
    std::vector<int> n_list = get_int_list(cfg.params, "n_list", {10, 25, 50, 100, 200});
    const std::vector<int> tail = get_int_list(cfg.params, "dl_tail", {1280, 2560, 5120});
    std::vector<int> all_n = n_list;
    for (int t : tail) all_n.push_back(t);
    const int refine_max = *std::min_element(tail.begin(), tail.end());

    const CompensatorFamily fam =
        compensator_family(rate, all_n, cfg.make_base_grid(), refine_max);
    FatouOptions fopts;
    fopts.impute_tree = fam.tree_sigma;
    const DoubleLimit dl = double_limit(fam.m2, fopts);

    const auto keep = fam.finite_sigma_scenarios();
    const GridStoppingTime sigma_r = restrict_stopping_time(fam.sigma, keep);
    const PathBundle x1r = restrict_bundle(dl.optional_part, keep);
    const PathBundle x0r = restrict_bundle(dl.predictable_part, keep);

    // integrand from config: phi^c samples interpolated to the grid plus a
    // jump list; defaults to a sloped part with one jump of each kind
    nlohmann::json ispec = cfg.params.contains("integrand")
                               ? cfg.params.at("integrand")
                               : nlohmann::json{{"phi_c_samples", {{0.0, 0.0}, {1.0, 1.0}}},
                                                {"jumps", {{0.25, 1.0, 0.0}, {0.125, 0.0, -0.5}}}};
    const FVIntegrand phi = integrand_from_json(fam.grid, ispec);

    const std::vector<double> target = limit_integral_formula(phi, x1r, x0r, sigma_r);

    std::string csv = "n,estimate\n";
    double final_est = 1.0;
    for (std::size_t ni = 0; ni < n_list.size(); ++ni) {
        const PathBundle m2r = restrict_bundle(fam.m2[ni], keep);
        std::vector<double> got(m2r.scenarios());
        for (std::size_t s = 0; s < m2r.scenarios(); ++s)
            got[s] = integrate_phi_dX(phi, m2r.paths[s], sigma_r.node_of[s]);
        const double est = exceedance_estimate(got, target, m2r.weights, eps);
        final_est = est;
        csv += std::to_string(n_list[ni]) + "," + format_double(est) + "\n";
    }
    io.emit("data/limit_integral.csv", csv);
    io.verdict("integral_exceedance_final", final_est < bound, final_est, bound);
}

// ---- counterexample-ex2 --------------------------------------------------

void run_counterexample(const ExperimentConfig& cfg, const PresetIO& io) {
    const int m_max = static_cast<int>(get_num(cfg.params, "m_max", 5));
    const double eps = get_num(cfg.params, "eps", 0.1);
    const double gamma_eps = get_num(cfg.params, "gamma_eps", 0.05);
    const double c_level = get_num(cfg.params, "c", 1.0);
    const double target = 1.0 - eps;

    CounterexampleParams params;
    const CounterexampleFamily family(cfg.make_base_grid(), params, cfg.seed);
    const AdaptiveTauResult res =
        ex2_adaptive_tau(family, eps, m_max, cfg.scenarios, {}, cfg.workers);

    std::string csv = "quantity,value,se\n";
    csv += "p_tau_lt_1," + format_double(res.p_tau_lt_1) + "," + format_double(res.p_tau_lt_1_se) + "\n";
    csv += "p_levels_hold," + format_double(res.p_levels_hold) + "," +
           format_double(res.p_levels_hold_se) + "\n";
    for (std::size_t i = 0; i < res.probe_indices.size(); ++i) {
        csv += "hypothesis_exceedance_n" + std::to_string(res.probe_indices[i]) + "," +
               format_double(res.probe_exceedance[i]) + ",\n";
    }
    io.verdict("p_tau_lt_1", res.p_tau_lt_1 >= target - 3.0 * res.p_tau_lt_1_se, res.p_tau_lt_1,
               target - 3.0 * res.p_tau_lt_1_se);
    io.verdict("p_levels_hold", res.p_levels_hold >= target - 3.0 * res.p_levels_hold_se,
               res.p_levels_hold, target - 3.0 * res.p_levels_hold_se);

    // excursion probability against the analytic lower bound
    const double gamma = ex2_gamma_bound(c_level, 0.5, gamma_eps, 1.0);
    double worst = 1.0, worst_se = 0.0;
    for (std::size_t n : {std::size_t{20}, std::size_t{200}, std::size_t{900}}) {
        const ExcursionEstimate est = ex2_excursion_probability(
            family, n, 0.0, 0.5, c_level + 1.0, std::min<std::size_t>(cfg.scenarios, 2000));
        csv += "excursion_n" + std::to_string(n) + "," + format_double(est.estimate) + "," +
               format_double(est.se) + "\n";
        if (est.estimate < worst) {
            worst = est.estimate;
            worst_se = est.se;
        }
    }
    io.emit("data/counterexample.csv", csv);
    io.verdict("excursion_probability_vs_gamma", worst >= gamma - 3.0 * worst_se, worst,
               gamma - 3.0 * worst_se, "gamma = " + format_double(gamma));
}

// ---- approximate-supermartingale ------------------------------------------

void run_approximation(const ExperimentConfig& cfg, const PresetIO& io) {
    const double eps = get_num(cfg.params, "eps", 0.1);
    const double bound = get_num(cfg.thresholds, "exceedance_bound", 0.1);
    const double tol = get_num(cfg.thresholds, "exact_tol", 1e-12);
    ApproximationPlan plan;
    plan.levels = static_cast<int>(get_num(cfg.params, "levels", 6));

    std::string csv = "target,n,tau,exceedance\n";
    double worst_final = 0.0, worst_slack = 0.0;

    struct Target {
        std::string name;
        AdaptedProcess X;
        std::vector<NamedStoppingTime> taus;
    };
    std::vector<Target> targets;

    {  // bounded tree martingale
        TimeGridPtr g = make_dyadic_grid(3);
        std::vector<double> w(8, 0.125);
        std::vector<std::vector<std::uint32_t>> atoms(g->size(), std::vector<std::uint32_t>(8, 0));
        for (std::size_t k = 0; k < g->size(); ++k) {
            const std::size_t splits = std::min<std::size_t>(k, 3);
            for (std::size_t s = 0; s < 8; ++s)
                atoms[k][s] = static_cast<std::uint32_t>(s >> (3 - splits));
        }
        auto tree = std::make_shared<ScenarioTree>(g, std::move(atoms), w);
        std::vector<double> terminal(8);
        for (std::size_t s = 0; s < 8; ++s) {
            RngStream rng = RngStream::derive(cfg.seed, s, 21);
            terminal[s] = 0.5 + rng.uniform();
        }
        std::vector<std::vector<double>> levels(g->size());
        for (std::size_t k = 0; k < g->size(); ++k)
            levels[k] = tree->conditional_expectation(terminal, static_cast<int>(k));
        std::vector<LadlagPath> paths;
        for (std::size_t s = 0; s < 8; ++s) {
            std::vector<double> nv(g->size());
            for (std::size_t k = 0; k < g->size(); ++k) nv[k] = levels[k][s];
            paths.push_back(LadlagPath::cadlag(g, std::move(nv)));
        }
        Target t;
        t.name = "bounded_martingale";
        t.X = AdaptedProcess(tree, PathBundle(g, std::move(paths), w));
        t.taus.push_back({"t1", GridStoppingTime::constant(g, g->size() - 1, 8)});
        t.taus.push_back({"t0.5", GridStoppingTime::constant(g, *g->find_node(0.5), 8)});
        targets.push_back(std::move(t));
    }
    {  // deterministic decreasing 1 - t/2
        TimeGridPtr g = make_dyadic_grid(4);
        auto tree = std::make_shared<ScenarioTree>(
            ScenarioTree::trivial(g, std::vector<double>{0.5, 0.5}));
        std::vector<double> nv(g->size());
        for (std::size_t k = 0; k < g->size(); ++k) nv[k] = 1.0 - 0.5 * g->node(k);
        std::vector<LadlagPath> paths{LadlagPath::cadlag(g, nv), LadlagPath::cadlag(g, nv)};
        Target t;
        t.name = "deterministic_decreasing";
        t.X = AdaptedProcess(tree, PathBundle(g, std::move(paths), {0.5, 0.5}));
        t.taus.push_back({"t1", GridStoppingTime::constant(g, g->size() - 1, 2)});
        t.taus.push_back({"t0.25", GridStoppingTime::constant(g, *g->find_node(0.25), 2)});
        targets.push_back(std::move(t));
    }
    {  // graph-corrected jump example
        const CompensatorFamily fam = compensator_family(0.9, {4}, make_dyadic_grid(3));
        Target t;
        t.name = "graph_corrected";
        t.X = AdaptedProcess(fam.tree_sigma, fam.x2);
        const std::size_t S = fam.x2.scenarios();
        t.taus.push_back({"t1", GridStoppingTime::constant(fam.grid, fam.grid->size() - 1, S)});
        GridStoppingTime sig_capped = fam.sigma;
        for (auto& v : sig_capped.node_of) {
            if (v == GridStoppingTime::kNever)
                v = static_cast<std::uint32_t>(fam.grid->size() - 1);
        }
        t.taus.push_back({"sigma_capped", sig_capped});
        targets.push_back(std::move(t));
    }

    for (const auto& t : targets) {
        const ApproximationResult ar = approximate_supermartingale(t.X, plan, cfg.seed);
        for (const auto& out : ar.outputs)
            worst_slack = std::max(worst_slack, check_martingale(out.martingale, tol).max_abs_slack);
        for (const auto& named : t.taus) {
            const std::vector<double> exc = approximation_exceedance(ar, named.tau, eps);
            for (std::size_t n = 0; n < exc.size(); ++n) {
                csv += t.name + "," + std::to_string(n + 1) + "," + named.id + "," +
                       format_double(exc[n]) + "\n";
            }
            worst_final = std::max(worst_final, exc.back());
        }
    }
    io.emit("data/approximation.csv", csv);
    io.verdict("enriched_tree_martingale_slack", worst_slack < tol, worst_slack, tol);
    io.verdict("final_exceedance", worst_final < bound, worst_final, bound);
}

// ---- left-limit-ti ---------------------------------------------------------

void run_left_limit(const ExperimentConfig& cfg, const PresetIO& io) {
    const double eps = get_num(cfg.params, "eps", 0.1);
    const double bound = get_num(cfg.thresholds, "exceedance_bound", 0.05);
    const double rate = get_num(cfg.params, "rate", 0.9);
    const std::vector<int> n_list = get_int_list(cfg.params, "n_list", {10, 25, 50, 100, 200});
    const CompensatorFamily fam = compensator_family(rate, n_list, cfg.make_base_grid());

    const auto keep = fam.finite_sigma_scenarios();
    const GridStoppingTime sigma_r = restrict_stopping_time(fam.sigma, keep);
    const PathBundle x2r = restrict_bundle(fam.x2, keep);
    std::vector<PathBundle> m2r;
    for (const auto& b : fam.m2) m2r.push_back(restrict_bundle(b, keep));

    std::vector<PathBundle> zoo{x2r, restrict_bundle(fam.x1, keep), m2r.back()};
    // probe only dyadic levels whose grid misses sigma's support: at a
    // level containing the jump time the probe lands on the jump itself
    std::vector<int> levels;
    for (int m = 2; m <= 8; ++m) {
        if (!fam.grid->dyadic_nodes(m)) break;
        bool clean = true;
        for (std::size_t j : fam.jump_levels) {
            const double t = fam.grid->node(j);
            const double scaled = std::ldexp(t, m);
            if (scaled == std::round(scaled)) clean = false;
        }
        if (clean) levels.push_back(m);
    }
    if (levels.empty()) throw ConfigError("left-limit-ti: no clean dyadic probe level");
    const LeftLimitCheck chk = left_limit_convergence_check(m2r, x2r, sigma_r, eps, zoo, levels);
    io.emit("data/left_limit.csv", convergence_report_to_csv(chk.exceedance));

    double final_est = 1.0;
    for (const auto& c : chk.exceedance.cells) final_est = c.estimate;
    io.verdict("left_limit_exceedance_final", final_est < bound, final_est, bound);
    io.verdict("dyadic_gap_decreasing", chk.gap_decreasing,
               chk.dyadic_gap.empty() ? 0.0 : chk.dyadic_gap.back(), bound);

    // broken family: the jump sits at a fixed deterministic time, and the
    // left limits there refuse to converge
    TimeGridPtr base = fam.grid;
    std::vector<double> jumps;
    const double t_star = 0.5;
    for (int n : n_list) jumps.push_back(t_star - 1.0 / (4.0 * n));
    TimeGridPtr g = std::make_shared<TimeGrid>(base->refined_with(jumps));
    const std::size_t S = 16;
    auto indicator_before = [&](double cut) {
        std::vector<LadlagPath> paths;
        for (std::size_t s = 0; s < S; ++s) {
            std::vector<double> nv(g->size());
            for (std::size_t k = 0; k < g->size(); ++k) nv[k] = g->node(k) < cut ? 1.0 : 0.0;
            paths.push_back(LadlagPath::cadlag(g, std::move(nv)));
        }
        return PathBundle(g, std::move(paths), PathBundle::uniform_weights(S));
    };
    std::vector<PathBundle> broken;
    for (int n : n_list) broken.push_back(indicator_before(t_star - 1.0 / (4.0 * n)));
    const PathBundle broken_target = indicator_before(t_star);
    const GridStoppingTime t_fixed = GridStoppingTime::constant(g, *g->find_node(t_star), S);
    const ConvergenceReport broken_rep = convergence_in_probability(
        broken, broken_target, {{"t_star", t_fixed}}, {eps}, Side::Left);
    double broken_final = 0.0;
    for (const auto& c : broken_rep.cells) broken_final = c.estimate;
    io.verdict("accessible_time_breaks_left_limits", broken_final > 0.9, broken_final, 0.9,
               "exceedance stays near 1 at the deterministic jump time");
}

// ---- relation-2-12 ---------------------------------------------------------

void run_relation(const ExperimentConfig& cfg, const PresetIO& io) {
    const double tol = get_num(cfg.thresholds, "exact_tol", 1e-12);
    const double rate = get_num(cfg.params, "rate", 0.9);
    std::vector<int> n_list = get_int_list(cfg.params, "n_list", {10, 25, 50, 100, 200});
    const std::vector<int> tail = get_int_list(cfg.params, "dl_tail", {1280, 2560, 5120});
    // tail indices certify stabilization; they share the coarsest tail node
    const int refine_max = *std::min_element(tail.begin(), tail.end());
    for (int t : tail) n_list.push_back(t);
    const CompensatorFamily fam = compensator_family(rate, n_list, cfg.make_base_grid(), refine_max);

    FatouOptions fopts;
    fopts.impute_tree = fam.tree_sigma;
    const DoubleLimit dl = double_limit(fam.m2, fopts);
    const AdaptedProcess X1(fam.tree_sigma, dl.optional_part);
    const AdaptedProcess X0(fam.tree_sigma, dl.predictable_part);

    const SupermartingaleReport oss = check_optional_strong_supermartingale(X1, tol);
    const SupermartingaleReport pss = check_predictable_strong_supermartingale(X0, tol);
    const RelationReport rel = check_double_arrow_relation(X1, X0, tol);

    std::string csv = "check,ok,worst_slack\n";
    csv += "optional_strong," + std::string(oss.ok ? "1" : "0") + "," +
           format_double(oss.worst_slack) + "\n";
    csv += "predictable_strong," + std::string(pss.ok ? "1" : "0") + "," +
           format_double(pss.worst_slack) + "\n";
    csv += "double_arrow," + std::string(rel.ok ? "1" : "0") + "," + format_double(rel.worst_slack) +
           "\n";
    io.emit("data/relation.csv", csv);

    io.verdict("optional_limit_is_strong_supermartingale", oss.ok, oss.worst_slack, -tol);
    io.verdict("predictable_limit_is_strong_supermartingale", pss.ok, pss.worst_slack, -tol);
    io.verdict("double_arrow_relation", rel.ok, rel.worst_slack, -tol);

    // the identified limits agree with the closed form: the graph spike
    // persists until the coarsest tail node after sigma (the grid cannot
    // resolve jumps closer than its refinement), and the predictable
    // limit is the left-limit path of the optional one
    double id_err = 0.0;
    for (std::size_t s = 0; s < fam.x2.scenarios(); ++s) {
        std::size_t spike_end = fam.grid->size();
        if (!fam.sigma.never(s)) {
            const double td = fam.sigma.time(s) + 1.0 / static_cast<double>(refine_max);
            spike_end = fam.grid->size();
            for (std::size_t k = 0; k < fam.grid->size(); ++k) {
                if (fam.grid->node(k) >= td - TimeGrid::kNodeTolerance) {
                    spike_end = k;
                    break;
                }
            }
        }
        for (std::size_t k = 0; k < fam.grid->size(); ++k) {
            const bool spike =
                !fam.sigma.never(s) && k >= fam.sigma.node_of[s] && k < spike_end;
            const double want = fam.x1.paths[s].node_value(k) + (spike ? 1.0 : 0.0);
            id_err = std::max(id_err,
                              std::abs(dl.optional_part.paths[s].node_value(k) - want));
            id_err = std::max(id_err, std::abs(dl.predictable_part.paths[s].node_value(k) -
                                               dl.optional_part.paths[s].left_limit(k)));
        }
    }
    io.verdict("limits_identified", id_err < tol, id_err, tol);
}

using PresetRunner = std::function<void(const ExperimentConfig&, const PresetIO&)>;

const std::vector<std::pair<PresetInfo, PresetRunner>>& preset_table() {
    static const std::vector<std::pair<PresetInfo, PresetRunner>> table = {
        {{"ex0-fatou",
          "Fatou limit vs pointwise limit for the two-point mass-escape martingale family",
          {{"n_list", {2, 10, 100}}, {"stabilization_tail", {1280, 2560, 5120}},
           {"subgrid_dyadic_level", 4}},
          {{"exact_tol", 1e-12}}},
         run_ex0_fatou},
        {{"compensator-example",
          "compensated jump time: convergence at stopping times and the value/left-limit split",
          {{"rate", 0.9}, {"n_list", {10, 25, 50, 100, 200}}, {"eps", 0.1}},
          {{"exceedance_bound", 0.05}, {"pass_from_n", 100}, {"exact_tol", 1e-12}}},
         run_compensator_example},
        {{"komlos-extract",
          "Komlos-style forward convex combinations of an L1-bounded sequence",
          {{"n_indices", 120}, {"master_seeds", 100}, {"sample_scenarios", 1000}, {"eps", 0.1}},
          {{"final_bound", 0.05}, {"seed_fraction", 0.95}}},
         run_komlos},
        {{"integration-ibp",
          "pathwise integration by parts residuals and discrete-integral consistency",
          {{"cases", 1000}, {"grid_nodes", 64}},
          {{"residual_scale", 1e-10}, {"consistency_tol", 1e-12}}},
         run_integration_ibp},
        {{"limit-integral",
          "limit formula for finite-variation integrals against converging supermartingales",
          {{"rate", 0.9}, {"n_list", {10, 25, 50, 100, 200}}, {"eps", 0.1}},
          {{"exceedance_bound", 0.05}}},
         run_limit_integral},
        {{"counterexample-ex2",
          "adaptive stopping time defeating almost-sure convergence of convex combinations",
          {{"m_max", 5}, {"eps", 0.1}, {"gamma_eps", 0.05}, {"c", 1.0}},
          {}},
         run_counterexample},
        {{"approximate-supermartingale",
          "bounded martingale approximation of a strong supermartingale at grid stopping times",
          {{"levels", 6}, {"eps", 0.1}},
          {{"exceedance_bound", 0.1}, {"exact_tol", 1e-12}}},
         run_approximation},
        {{"left-limit-ti",
          "left-limit convergence at hazard-randomized times and the accessible-time obstruction",
          {{"rate", 0.9}, {"n_list", {10, 25, 50, 100, 200}}, {"eps", 0.1}},
          {{"exceedance_bound", 0.05}}},
         run_left_limit},
        {{"relation-2-12",
          "double-arrow relation between the optional and predictable limit processes",
          {{"rate", 0.9}, {"n_list", {10, 25, 50, 100, 200}}, {"dl_tail", {1280, 2560, 5120}}},
          {{"exact_tol", 1e-12}}},
         run_relation},
    };
    return table;
}

}  // namespace

std::vector<PresetInfo> list_presets() {
    std::vector<PresetInfo> out;
    for (const auto& [info, fn] : preset_table()) out.push_back(info);
    return out;
}

void validate_config(const ExperimentConfig& config) {
    bool found = false;
    for (const auto& [info, fn] : preset_table()) {
        if (info.name == config.experiment) found = true;
    }
    if (!found) throw ConfigError("unknown preset: " + config.experiment);
    config.make_base_grid();
    if (!config.params.is_object()) throw ConfigError("params must be an object");
    if (!config.thresholds.is_object()) throw ConfigError("thresholds must be an object");
}

RunManifest run_experiment(const ExperimentConfig& config) {
    validate_config(config);
    const PresetRunner* runner = nullptr;
    for (const auto& [info, fn] : preset_table()) {
        if (info.name == config.experiment) runner = &fn;
    }

    RunManifest manifest;
    manifest.experiment = config.experiment;
    manifest.artifact_version = "0.1.0";
    char hash_buf[20];
    std::snprintf(hash_buf, sizeof(hash_buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a_hash(config.to_json().dump())));
    manifest.config_hash = hash_buf;
    manifest.started_at = iso_now();

    const fs::path out_dir =
        config.output_dir.empty() ? fs::path(default_output_root()) / config.experiment
                                  : fs::path(config.output_dir);
    fs::create_directories(out_dir);

    PresetIO io{out_dir, &manifest};
    (*runner)(config, io);

    manifest.finished_at = iso_now();

    nlohmann::json summary;
    summary["experiment"] = config.experiment;
    summary["config_hash"] = manifest.config_hash;
    summary["pass"] = manifest.all_pass();
    nlohmann::json vs = nlohmann::json::array();
    for (const auto& v : manifest.verdicts) {
        vs.push_back({{"name", v.name},
                      {"pass", v.pass},
                      {"value", v.value},
                      {"threshold", v.threshold},
                      {"detail", v.detail}});
    }
    summary["verdicts"] = vs;
    write_text_file((out_dir / "summary.json").string(), summary.dump(2) + "\n");
    manifest.output_files.push_back("summary.json");
    write_text_file((out_dir / "manifest.json").string(), manifest.to_json().dump(2) + "\n");
    return manifest;
}

}  // namespace lab
