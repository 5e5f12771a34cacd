#pragma once

// Run and comparison drivers: configuration, generator specs, file output.

#include <cmm/acceleration.hpp>
#include <cmm/config.hpp>
#include <cmm/errors.hpp>
#include <cmm/mesh.hpp>
#include <cmm/mesh_io.hpp>
#include <cmm/operators.hpp>
#include <cmm/spectra.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace cmm {

/// Entries with |phi| below this count as zero in the sparsity statistic.
inline constexpr double kSparsityThreshold = 1e-5;

struct RunConfig {
    SolveConfig solve;
    MassKind mass = MassKind::lumped;
    std::string mesh_path; ///< used when non-empty
    std::string generate;  ///< generator spec, e.g. "lshape:m=8"
    std::optional<int> ply_mode; ///< 1-based mode written to modes.ply

    void validate() const {
        solve.validate();
        if (mesh_path.empty() == generate.empty())
            throw ConfigError("mesh", "exactly one of a mesh path or a generator spec is required");
        if (ply_mode && (*ply_mode < 1 || *ply_mode > solve.K))
            throw ConfigError("ply_mode", "must lie in [1, K]");
    }
};

// ---------------------------------------------------------------------------
// Enum spellings

namespace detail {

template <class E>
E parse_enum(const std::string& field, const std::string& text, std::initializer_list<std::pair<const char*, E>> table) {
    std::string allowed;
    for (const auto& [name, value] : table) {
        if (text == name) return value;
        allowed += (allowed.empty() ? "" : ", ") + std::string(name);
    }
    throw ConfigError(field, "'" + text + "' is not one of {" + allowed + "}");
}

} // namespace detail

inline InitPolicy parse_init(const std::string& s) {
    return detail::parse_enum<InitPolicy>("init", s, {{"random", InitPolicy::random_uniform}, {"eigen", InitPolicy::eigenfunctions}});
}
inline Variant parse_variant(const std::string& s) {
    return detail::parse_enum<Variant>("variant", s, {{"admm", Variant::admm}, {"fast_admm", Variant::fast_admm}});
}
inline RestartRule parse_restart_rule(const std::string& s) {
    return detail::parse_enum<RestartRule>("restart_rule", s, {{"paper", RestartRule::paper}, {"goldstein", RestartRule::goldstein}});
}
inline OrderBy parse_order(const std::string& s) {
    return detail::parse_enum<OrderBy>("order", s, {{"compressed", OrderBy::compressed}, {"dirichlet", OrderBy::dirichlet}});
}
inline FlipMethod parse_flip(const std::string& s) {
    return detail::parse_enum<FlipMethod>(
        "flip", s, {{"extremum", FlipMethod::extremum}, {"integral", FlipMethod::integral}, {"none", FlipMethod::none}});
}
inline MassKind parse_mass(const std::string& s) {
    return detail::parse_enum<MassKind>("mass", s, {{"lumped", MassKind::lumped}, {"unlumped", MassKind::unlumped}});
}
inline std::string to_string(MassKind m) { return m == MassKind::lumped ? "lumped" : "unlumped"; }

// ---------------------------------------------------------------------------
// Generator specs: name[:key=value[,key=value...]]

inline TriangleMesh generate_mesh(const std::string& spec) {
    const auto colon = spec.find(':');
    const std::string name = spec.substr(0, colon);
    std::map<std::string, std::string> args;
    if (colon != std::string::npos) {
        std::stringstream rest(spec.substr(colon + 1));
        std::string item;
        while (std::getline(rest, item, ',')) {
            const auto eq = item.find('=');
            if (eq == std::string::npos || eq == 0)
                throw ConfigError("generate", "expected key=value, got '" + item + "'");
            args[item.substr(0, eq)] = item.substr(eq + 1);
        }
    }
    auto take_int = [&](const std::string& key, int fallback) {
        const auto it = args.find(key);
        if (it == args.end()) return fallback;
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(it->second, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != it->second.size())
            throw ConfigError("generate", "'" + key + "' must be an integer, got '" + it->second + "'");
        args.erase(it);
        return v;
    };
    auto finish = [&] {
        if (!args.empty()) throw ConfigError("generate", "unknown key '" + args.begin()->first + "' for " + name);
    };

    if (name == "lshape") {
        const int m = take_int("m", 8);
        finish();
        return generate_lshape(m);
    }
    if (name == "sphere") {
        const int level = take_int("level", 2);
        finish();
        return generate_sphere(level);
    }
    throw ConfigError("generate", "unknown generator '" + name + "' (expected lshape or sphere)");
}

inline TriangleMesh load_run_mesh(const RunConfig& cfg) {
    if (!cfg.generate.empty()) return generate_mesh(cfg.generate);
    return load_mesh(cfg.mesh_path);
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const RunConfig& cfg) {
    const SolveConfig& s = cfg.solve;
    nlohmann::json j;
    if (!cfg.mesh_path.empty()) j["mesh"] = cfg.mesh_path;
    if (!cfg.generate.empty()) j["generate"] = cfg.generate;
    j["mass"] = to_string(cfg.mass);
    j["mu"] = s.mu;
    j["K"] = s.K;
    j["rho0"] = s.rho0;
    j["eps_abs"] = s.eps_abs;
    j["eps_rel"] = s.eps_rel;
    j["eta"] = s.eta;
    j["max_iter"] = s.max_iter;
    j["init"] = to_string(s.init);
    j["seed"] = s.seed;
    j["variant"] = to_string(s.variant);
    j["restart_rule"] = to_string(s.restart_rule);
    j["penalty_adapt"] = s.penalty_adapt;
    j["penalty_tau"] = s.penalty_tau;
    j["penalty_ratio"] = s.penalty_ratio;
    j["penalty_freeze_after"] = s.penalty_freeze_after;
    if (s.truncation)
        j["truncation"] = {{"after_iterations", s.truncation->after_iterations}, {"tolerance", s.truncation->tolerance}};
    j["order"] = to_string(s.order);
    j["flip"] = to_string(s.flip);
    if (cfg.ply_mode) j["ply_mode"] = *cfg.ply_mode;
    return j;
}

/// Inverse of to_json. Missing keys keep their defaults; unknown keys and
/// type mismatches raise ConfigError.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config", "expected a JSON object");
    RunConfig cfg;
    SolveConfig& s = cfg.solve;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "mesh") cfg.mesh_path = value.get<std::string>();
            else if (key == "generate") cfg.generate = value.get<std::string>();
            else if (key == "mass") cfg.mass = parse_mass(value.get<std::string>());
            else if (key == "mu") s.mu = value.get<double>();
            else if (key == "K") s.K = value.get<int>();
            else if (key == "rho0") s.rho0 = value.get<double>();
            else if (key == "eps_abs") s.eps_abs = value.get<double>();
            else if (key == "eps_rel") s.eps_rel = value.get<double>();
            else if (key == "eta") s.eta = value.get<double>();
            else if (key == "max_iter") s.max_iter = value.get<int>();
            else if (key == "init") s.init = parse_init(value.get<std::string>());
            else if (key == "seed") s.seed = value.get<std::uint64_t>();
            else if (key == "variant") s.variant = parse_variant(value.get<std::string>());
            else if (key == "restart_rule") s.restart_rule = parse_restart_rule(value.get<std::string>());
            else if (key == "penalty_adapt") s.penalty_adapt = value.get<bool>();
            else if (key == "penalty_tau") s.penalty_tau = value.get<double>();
            else if (key == "penalty_ratio") s.penalty_ratio = value.get<double>();
            else if (key == "penalty_freeze_after") s.penalty_freeze_after = value.get<int>();
            else if (key == "truncation") {
                TruncationRestart t;
                t.after_iterations = value.value("after_iterations", t.after_iterations);
                t.tolerance = value.value("tolerance", t.tolerance);
                s.truncation = t;
            } else if (key == "order") s.order = parse_order(value.get<std::string>());
            else if (key == "flip") s.flip = parse_flip(value.get<std::string>());
            else if (key == "ply_mode") cfg.ply_mode = value.get<int>();
            else throw ConfigError(key, "unknown configuration key");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(key, e.what());
        }
    }
    return cfg;
}

inline RunConfig read_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open " + path.string());
    try {
        const nlohmann::json j = nlohmann::json::parse(in);
        // A report.json carries the config under "config".
        return run_config_from_json(j.contains("config") ? j.at("config") : j);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config", e.what());
    }
}

// ---------------------------------------------------------------------------
// Reports

struct RunReport {
    RunConfig config;
    bool converged = false;
    int iterations = 0;
    double wall_time = 0.0;
    double final_primal = 0.0;
    double final_dual = 0.0;
    double objective = 0.0;
    double sparsity = 0.0;
    double orthonormality_error = 0.0;
    int factorizations = 0;
    std::uint64_t init_checksum = 0;
    ModeSet modes;
};

/// Fraction of entries with |phi| < threshold.
inline double sparsity(const Matrix& phi, double threshold = kSparsityThreshold) {
    if (phi.size() == 0) return 0.0;
    const auto small = (phi.array().abs() < threshold).count();
    return static_cast<double>(small) / static_cast<double>(phi.size());
}

/// FNV-1a over the raw bytes of Phi, E, S and the duals.
inline std::uint64_t state_checksum(const AdmmState& s) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const Matrix& m) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
        for (std::size_t i = 0; i < static_cast<std::size_t>(m.size()) * sizeof(double); ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    };
    mix(s.Phi);
    mix(s.E);
    mix(s.S);
    mix(s.dual_E);
    mix(s.dual_S);
    return h;
}

inline RunReport make_report(const RunConfig& cfg, const SolveResult& r, std::uint64_t checksum) {
    RunReport rep;
    rep.config = cfg;
    rep.converged = r.converged;
    rep.iterations = r.iterations;
    rep.wall_time = r.wall_time;
    if (!r.trace.records.empty()) {
        rep.final_primal = r.trace.records.back().primal;
        rep.final_dual = r.trace.records.back().dual;
    }
    for (int j = 0; j < r.modes.size(); ++j) {
        const auto k = static_cast<std::size_t>(j);
        rep.objective += r.modes.dirichlet_energy[k] + cfg.solve.mu * r.modes.l1_norm[k];
    }
    rep.sparsity = sparsity(r.modes.modes);
    rep.orthonormality_error = r.orthonormality_error;
    rep.factorizations = r.factorizations;
    rep.init_checksum = checksum;
    rep.modes = r.modes;
    return rep;
}

inline nlohmann::json to_json(const RunReport& rep) {
    nlohmann::json j;
    j["config"] = to_json(rep.config);
    j["rng"] = kRngName;
    j["converged"] = rep.converged;
    j["iterations"] = rep.iterations;
    j["wall_time"] = rep.wall_time;
    j["final_primal"] = rep.final_primal;
    j["final_dual"] = rep.final_dual;
    j["objective"] = rep.objective;
    j["sparsity"] = rep.sparsity;
    j["orthonormality_error"] = rep.orthonormality_error;
    j["factorizations"] = rep.factorizations;
    j["init_checksum"] = rep.init_checksum;
    nlohmann::json table = nlohmann::json::array();
    for (int i = 0; i < rep.modes.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        table.push_back({{"rank", i + 1},
                         {"lambda", rep.modes.compressed_eigenvalues[k]},
                         {"dirichlet_energy", rep.modes.dirichlet_energy[k]},
                         {"l1_norm", rep.modes.l1_norm[k]},
                         {"accuracy_residual", rep.modes.accuracy[k]},
                         {"flipped", static_cast<bool>(rep.modes.flipped[k])}});
    }
    j["eigenvalues"] = std::move(table);
    return j;
}

// ---------------------------------------------------------------------------
// run

/// Solves once and writes modes.csv, eigenvalues.csv, trace.csv, report.json
/// and, when requested, modes.ply into `out_dir`.
inline RunReport run(const RunConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    const TriangleMesh mesh = load_run_mesh(cfg);
    const LaplaceOperator op = assemble_operator(mesh, cfg.mass);
    std::filesystem::create_directories(out_dir);

    std::ofstream trace_out(out_dir / "trace.csv");
    if (!trace_out) throw Error("cannot write " + (out_dir / "trace.csv").string());
    write_trace_header(trace_out);
    const TraceSink sink = [&trace_out](std::span<const TraceRecord> rows) {
        write_trace_rows(trace_out, rows);
        trace_out.flush();
    };

    const AdmmState initial = initialize(op, cfg.solve);
    const std::uint64_t checksum = state_checksum(initial);
    const SolveResult result = solve_from(initial, op, cfg.solve, sink);
    trace_out.close();

    const RunReport report = make_report(cfg, result, checksum);
    {
        std::ofstream out(out_dir / "modes.csv");
        write_modes_csv(out, result.modes);
    }
    {
        std::ofstream out(out_dir / "eigenvalues.csv");
        write_eigenvalue_table(out, result.modes);
    }
    {
        std::ofstream out(out_dir / "report.json");
        out << std::setw(2) << to_json(report) << '\n';
    }
    if (cfg.ply_mode) {
        std::ofstream out(out_dir / "modes.ply");
        const Eigen::VectorXd scalar = result.modes.modes.col(*cfg.ply_mode - 1);
        write_ply(out, mesh, &scalar);
    }
    return report;
}

// ---------------------------------------------------------------------------
// compare

struct ComparisonRow {
    std::uint64_t seed = 0;
    std::uint64_t init_checksum = 0;
    std::optional<RunReport> fast;
    std::optional<RunReport> vanilla;
    std::string error; ///< non-empty when the pair failed
};

struct ComparisonReport {
    RunConfig config;
    Variant fast_variant = Variant::fast_admm;
    Variant vanilla_variant = Variant::admm;
    std::vector<ComparisonRow> rows;

    // Aggregates over the pairs that completed; reductions are 100 (1 - fast / vanilla).
    int completed = 0;
    double mean_iteration_reduction = 0.0;
    double median_iteration_reduction = 0.0;
    double mean_time_reduction = 0.0;
    double median_time_reduction = 0.0;
    double median_fast_iterations = 0.0;
    double median_vanilla_iterations = 0.0;
};

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double percent_reduction(double fast, double vanilla) {
    return vanilla > 0.0 ? 100.0 * (1.0 - fast / vanilla) : 0.0;
}

/// Worker count for compare: CMMODE_THREADS if set and positive, else the
/// hardware concurrency.
inline int comparison_threads() {
    if (const char* env = std::getenv("CMMODE_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs both arms for every seed from one shared initialization. Seeds are
/// processed in parallel; rows come back in seed-list order.
inline ComparisonReport compare(const RunConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                Variant fast_variant = Variant::fast_admm, Variant vanilla_variant = Variant::admm,
                                int threads = 0) {
    cfg.validate();
    if (seeds.size() < 2) throw ConfigError("seeds", "at least two seeds are required");
    const TriangleMesh mesh = load_run_mesh(cfg);
    const LaplaceOperator op = assemble_operator(mesh, cfg.mass);

    ComparisonReport report;
    report.config = cfg;
    report.fast_variant = fast_variant;
    report.vanilla_variant = vanilla_variant;
    report.rows.resize(seeds.size());

    auto run_pair = [&](std::size_t i) {
        ComparisonRow& row = report.rows[i];
        row.seed = seeds[i];
        try {
            RunConfig arm = cfg;
            arm.solve.seed = seeds[i];
            const AdmmState initial = initialize(op, arm.solve);
            row.init_checksum = state_checksum(initial);

            arm.solve.variant = fast_variant;
            AdmmState copy = initial;
            if (state_checksum(copy) != row.init_checksum) throw Error("initial state copy differs");
            row.fast = make_report(arm, solve_from(std::move(copy), op, arm.solve), row.init_checksum);

            arm.solve.variant = vanilla_variant;
            copy = initial;
            if (state_checksum(copy) != row.init_checksum) throw Error("initial state copy differs");
            row.vanilla = make_report(arm, solve_from(std::move(copy), op, arm.solve), row.init_checksum);
        } catch (const std::exception& e) {
            row.error = e.what();
        }
    };

    const int workers = std::min<int>(threads > 0 ? threads : comparison_threads(), static_cast<int>(seeds.size()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < seeds.size(); ++i) run_pair(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < seeds.size(); i = next++) run_pair(i);
            });
        for (auto& t : pool) t.join();
    }

    std::vector<double> it_red, time_red, fast_its, vanilla_its;
    for (const ComparisonRow& row : report.rows) {
        if (!row.error.empty() || !row.fast || !row.vanilla) continue;
        it_red.push_back(percent_reduction(row.fast->iterations, row.vanilla->iterations));
        time_red.push_back(percent_reduction(row.fast->wall_time, row.vanilla->wall_time));
        fast_its.push_back(row.fast->iterations);
        vanilla_its.push_back(row.vanilla->iterations);
    }
    report.completed = static_cast<int>(it_red.size());
    if (report.completed > 0) {
        auto mean = [](const std::vector<double>& v) {
            double s = 0.0;
            for (double x : v) s += x;
            return s / static_cast<double>(v.size());
        };
        report.mean_iteration_reduction = mean(it_red);
        report.median_iteration_reduction = median(it_red);
        report.mean_time_reduction = mean(time_red);
        report.median_time_reduction = median(time_red);
        report.median_fast_iterations = median(fast_its);
        report.median_vanilla_iterations = median(vanilla_its);
    }
    return report;
}

inline nlohmann::json to_json(const ComparisonReport& rep) {
    nlohmann::json j;
    j["config"] = to_json(rep.config);
    j["rng"] = kRngName;
    j["fast_variant"] = to_string(rep.fast_variant);
    j["vanilla_variant"] = to_string(rep.vanilla_variant);
    nlohmann::json rows = nlohmann::json::array();
    for (const ComparisonRow& row : rep.rows) {
        nlohmann::json r;
        r["seed"] = row.seed;
        r["init_checksum"] = row.init_checksum;
        if (!row.error.empty()) r["error"] = row.error;
        auto arm = [](const RunReport& a) {
            return nlohmann::json{{"converged", a.converged},   {"iterations", a.iterations},
                                  {"wall_time", a.wall_time},   {"objective", a.objective},
                                  {"sparsity", a.sparsity},     {"orthonormality_error", a.orthonormality_error}};
        };
        if (row.fast) r["fast"] = arm(*row.fast);
        if (row.vanilla) r["vanilla"] = arm(*row.vanilla);
        rows.push_back(std::move(r));
    }
    j["pairs"] = std::move(rows);
    j["completed"] = rep.completed;
    j["mean_iteration_reduction"] = rep.mean_iteration_reduction;
    j["median_iteration_reduction"] = rep.median_iteration_reduction;
    j["mean_time_reduction"] = rep.mean_time_reduction;
    j["median_time_reduction"] = rep.median_time_reduction;
    j["median_fast_iterations"] = rep.median_fast_iterations;
    j["median_vanilla_iterations"] = rep.median_vanilla_iterations;
    return j;
}

/// One row per seed: seed, fast/vanilla iterations and times, reduction, error.
inline void write_comparison_csv(std::ostream& out, const ComparisonReport& rep) {
    out << "seed,init_checksum,fast_converged,fast_iterations,fast_time,vanilla_converged,vanilla_iterations,"
           "vanilla_time,iteration_reduction,error\n";
    for (const ComparisonRow& row : rep.rows) {
        out << row.seed << ',' << row.init_checksum << ',';
        if (row.fast && row.vanilla) {
            out << row.fast->converged << ',' << row.fast->iterations << ',' << row.fast->wall_time << ','
                << row.vanilla->converged << ',' << row.vanilla->iterations << ',' << row.vanilla->wall_time << ','
                << percent_reduction(row.fast->iterations, row.vanilla->iterations) << ",";
        } else {
            out << ",,,,,,,";
        }
        std::string err = row.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        out << err << '\n';
    }
}

} // namespace cmm
