// cmmode: compressed manifold modes from the command line.
//
//   cmmode run --generate lshape:m=8 --mu 0.02 --k 10 --seed 1 --out out/
//   cmmode compare --generate lshape:m=8 --mu 0.02 --k 10 --seeds 1,2,3 --out cmp/
//
// Exit codes: 0 success, 2 configuration or input error, 3 solver error,
// 4 maximum iterations reached without convergence.

#include <cmm/harness.hpp>

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitNotConverged = 4;

struct Flags {
    std::string config_file;
    std::string mesh;
    std::string generate;
    double mu = 0.0;
    int k = 1;
    std::string variant;
    std::string init;
    std::uint64_t seed = 0;
    std::string mass;
    double rho0 = 1.0;
    double eps_abs = 1e-8;
    double eps_rel = 1e-6;
    double eta = 0.999;
    int max_iter = 20000;
    std::string restart_rule;
    std::string order;
    std::string flip;
    int ply_mode = 0;
    std::string out = "cmmode_out";
    std::vector<std::uint64_t> seeds;
    std::string baseline = "admm";
};

void add_common(CLI::App& app, Flags& f, std::vector<CLI::Option*>& opts) {
    opts.push_back(app.add_option("--config", f.config_file, "JSON config (a report.json is accepted)"));
    opts.push_back(app.add_option("--mesh", f.mesh, "OFF or OBJ mesh file"));
    opts.push_back(app.add_option("--generate", f.generate, "generator spec: lshape:m=INT or sphere:level=INT"));
    opts.push_back(app.add_option("--mu", f.mu, "compression parameter"));
    opts.push_back(app.add_option("--k", f.k, "number of modes"));
    opts.push_back(app.add_option("--variant", f.variant, "admm or fast_admm"));
    opts.push_back(app.add_option("--init", f.init, "random or eigen"));
    opts.push_back(app.add_option("--seed", f.seed, "RNG seed for random initialisation"));
    opts.push_back(app.add_option("--mass", f.mass, "lumped or unlumped"));
    opts.push_back(app.add_option("--rho0", f.rho0, "initial penalty"));
    opts.push_back(app.add_option("--eps-abs", f.eps_abs, "absolute stopping tolerance"));
    opts.push_back(app.add_option("--eps-rel", f.eps_rel, "relative stopping tolerance"));
    opts.push_back(app.add_option("--eta", f.eta, "restart parameter in (0, 1)"));
    opts.push_back(app.add_option("--max-iter", f.max_iter, "iteration cap"));
    opts.push_back(app.add_option("--restart-rule", f.restart_rule, "paper or goldstein"));
    opts.push_back(app.add_option("--order", f.order, "compressed or dirichlet"));
    opts.push_back(app.add_option("--flip", f.flip, "extremum, integral or none"));
    opts.push_back(app.add_option("--ply-mode", f.ply_mode, "write modes.ply colored by this 1-based mode"));
    app.add_option("--out", f.out, "output directory");
}

bool given(const CLI::App& app, const char* name) { return app.count(name) > 0; }

cmm::RunConfig build_config(const CLI::App& app, const Flags& f) {
    cmm::RunConfig cfg;
    if (given(app, "--config")) cfg = cmm::read_run_config(f.config_file);
    if (given(app, "--mesh")) {
        cfg.mesh_path = f.mesh;
        cfg.generate.clear();
    }
    if (given(app, "--generate")) {
        cfg.generate = f.generate;
        if (!given(app, "--mesh")) cfg.mesh_path.clear();
    }
    cmm::SolveConfig& s = cfg.solve;
    if (given(app, "--mu")) s.mu = f.mu;
    if (given(app, "--k")) s.K = f.k;
    if (given(app, "--variant")) s.variant = cmm::parse_variant(f.variant);
    if (given(app, "--init")) s.init = cmm::parse_init(f.init);
    if (given(app, "--seed")) s.seed = f.seed;
    if (given(app, "--mass")) cfg.mass = cmm::parse_mass(f.mass);
    if (given(app, "--rho0")) s.rho0 = f.rho0;
    if (given(app, "--eps-abs")) s.eps_abs = f.eps_abs;
    if (given(app, "--eps-rel")) s.eps_rel = f.eps_rel;
    if (given(app, "--eta")) s.eta = f.eta;
    if (given(app, "--max-iter")) s.max_iter = f.max_iter;
    if (given(app, "--restart-rule")) s.restart_rule = cmm::parse_restart_rule(f.restart_rule);
    if (given(app, "--order")) s.order = cmm::parse_order(f.order);
    if (given(app, "--flip")) s.flip = cmm::parse_flip(f.flip);
    if (given(app, "--ply-mode")) cfg.ply_mode = f.ply_mode;
    cfg.validate();
    return cfg;
}

int do_run(const CLI::App& app, const Flags& f) {
    const cmm::RunConfig cfg = build_config(app, f);
    const cmm::RunReport rep = cmm::run(cfg, f.out);
    std::cout << (rep.converged ? "converged" : "not converged") << " after " << rep.iterations << " iterations ("
              << rep.wall_time << " s)\n";
    std::cout << "objective " << rep.objective << ", sparsity " << rep.sparsity << ", orthonormality error "
              << rep.orthonormality_error << '\n';
    for (int j = 0; j < rep.modes.size(); ++j)
        std::cout << "  lambda_" << j + 1 << " = " << rep.modes.compressed_eigenvalues[static_cast<std::size_t>(j)]
                  << '\n';
    std::cout << "wrote " << f.out << '\n';
    return rep.converged ? 0 : kExitNotConverged;
}

int do_compare(const CLI::App& app, const Flags& f) {
    const cmm::RunConfig cfg = build_config(app, f);
    const cmm::ComparisonReport rep = cmm::compare(cfg, f.seeds, cmm::Variant::fast_admm, cmm::parse_variant(f.baseline));
    std::filesystem::create_directories(f.out);
    {
        std::ofstream out(std::filesystem::path(f.out) / "comparison.json");
        out << std::setw(2) << cmm::to_json(rep) << '\n';
    }
    {
        std::ofstream out(std::filesystem::path(f.out) / "comparison.csv");
        cmm::write_comparison_csv(out, rep);
    }
    for (const auto& row : rep.rows) {
        std::cout << "seed " << row.seed << ": ";
        if (!row.error.empty()) {
            std::cout << "failed: " << row.error << '\n';
            continue;
        }
        std::cout << "fast " << row.fast->iterations << (row.fast->converged ? "" : "*") << ", baseline "
                  << row.vanilla->iterations << (row.vanilla->converged ? "" : "*") << '\n';
    }
    std::cout << "median iterations: fast " << rep.median_fast_iterations << ", baseline "
              << rep.median_vanilla_iterations << '\n';
    std::cout << "iteration reduction: mean " << rep.mean_iteration_reduction << "%, median "
              << rep.median_iteration_reduction << "%\n";
    std::cout << "(* = hit max_iter)\nwrote " << f.out << '\n';
    return rep.completed > 0 ? 0 : kExitSolver;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Compressed manifold modes via ADMM"};
    app.require_subcommand(1);

    Flags run_flags, cmp_flags;
    std::vector<CLI::Option*> unused;
    CLI::App* run_cmd = app.add_subcommand("run", "solve once and write modes, eigenvalues, trace and report");
    add_common(*run_cmd, run_flags, unused);

    CLI::App* cmp_cmd = app.add_subcommand("compare", "fast vs baseline ADMM over shared seeds");
    add_common(*cmp_cmd, cmp_flags, unused);
    cmp_cmd->add_option("--seeds", cmp_flags.seeds, "comma-separated seed list")->required()->delimiter(',');
    cmp_cmd->add_option("--baseline", cmp_flags.baseline, "variant of the baseline arm (admm or fast_admm)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (run_cmd->parsed()) return do_run(*run_cmd, run_flags);
        return do_compare(*cmp_cmd, cmp_flags);
    } catch (const cmm::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const cmm::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const cmm::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const cmm::DegenerateTriangleError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "solver error: " << e.what() << '\n';
        return kExitSolver;
    }
}
