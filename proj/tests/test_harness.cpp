#include <cmm/harness.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace cmm;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("cmm_harness_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    return lines;
}

std::string config_error_field(const std::function<void()>& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "";
}

} // namespace

TEST(GeneratorSpec, Parses) {
    EXPECT_EQ(generate_mesh("lshape:m=2").n_faces(), 24);
    EXPECT_EQ(generate_mesh("sphere:level=1").n_vertices(), 42);
    EXPECT_EQ(generate_mesh("sphere").n_vertices(), 162);
    EXPECT_EQ(generate_mesh("lshape").n_vertices(), 3 * 64 + 32 + 1);
}

TEST(GeneratorSpec, Errors) {
    for (const char* bad : {"cube", "lshape:m=x", "lshape:q=1", "lshape:m", "lshape:m=2x", "sphere:level=-1"})
        EXPECT_FALSE(config_error_field([&] { generate_mesh(bad); }).empty()) << bad;
    EXPECT_EQ(config_error_field([] { generate_mesh("torus"); }), "generate");
}

TEST(RunConfig, JsonRoundTrip) {
    RunConfig cfg;
    cfg.generate = "lshape:m=3";
    cfg.mass = MassKind::unlumped;
    cfg.solve.mu = 0.125;
    cfg.solve.K = 4;
    cfg.solve.seed = 18446744073709551557ULL;
    cfg.solve.variant = Variant::admm;
    cfg.solve.restart_rule = RestartRule::goldstein;
    cfg.solve.init = InitPolicy::eigenfunctions;
    cfg.solve.flip = FlipMethod::integral;
    cfg.solve.order = OrderBy::dirichlet;
    cfg.solve.truncation = TruncationRestart{200, 1e-5};
    cfg.solve.penalty_adapt = false;
    cfg.ply_mode = 2;
    const nlohmann::json j = to_json(cfg);
    const RunConfig back = run_config_from_json(j);
    EXPECT_EQ(to_json(back), j);
    EXPECT_EQ(back.solve.seed, cfg.solve.seed);
    EXPECT_EQ(back.solve.truncation->after_iterations, 200);
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
    EXPECT_EQ(config_error_field([] { run_config_from_json({{"bogus", 1}}); }), "bogus");
    EXPECT_EQ(config_error_field([] { run_config_from_json({{"mu", "big"}}); }), "mu");
    EXPECT_EQ(config_error_field([] { run_config_from_json({{"variant", "turbo"}}); }), "variant");
    EXPECT_EQ(config_error_field([] { run_config_from_json(nlohmann::json::array()); }), "config");

    RunConfig cfg;
    EXPECT_EQ(config_error_field([&] { cfg.validate(); }), "mesh");
    cfg.generate = "lshape:m=2";
    cfg.mesh_path = "x.off";
    EXPECT_EQ(config_error_field([&] { cfg.validate(); }), "mesh");
    cfg.mesh_path.clear();
    cfg.ply_mode = 3;
    EXPECT_EQ(config_error_field([&] { cfg.validate(); }), "ply_mode");
}

TEST(Statistics, SparsityAndReductions) {
    Matrix phi(2, 2);
    phi << 0.0, 1e-6, -2e-5, 1.0;
    EXPECT_DOUBLE_EQ(sparsity(phi), 0.5);
    EXPECT_DOUBLE_EQ(percent_reduction(43, 100), 57.0);
    EXPECT_DOUBLE_EQ(percent_reduction(100, 100), 0.0);
    EXPECT_DOUBLE_EQ(median({3.0, 1.0, 2.0}), 2.0);
    EXPECT_DOUBLE_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
}

TEST(Run, WritesAllFilesAndRoundTripsConfig) {
    const auto dir = scratch_dir("run");
    RunConfig cfg;
    cfg.generate = "sphere:level=2";
    cfg.solve.K = 5;
    cfg.solve.init = InitPolicy::eigenfunctions;
    cfg.ply_mode = 2;
    const RunReport rep = run(cfg, dir);
    ASSERT_TRUE(rep.converged);

    for (const char* f : {"modes.csv", "eigenvalues.csv", "trace.csv", "report.json", "modes.ply"})
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;

    EXPECT_EQ(read_lines(dir / "trace.csv").size(), static_cast<std::size_t>(rep.iterations) + 1);
    EXPECT_EQ(read_lines(dir / "modes.csv").size(), 163u);
    EXPECT_EQ(to_json(read_run_config(dir / "report.json")), to_json(cfg));

    std::ifstream in(dir / "report.json");
    const nlohmann::json report = nlohmann::json::parse(in);
    EXPECT_EQ(report.at("rng"), kRngName);
    EXPECT_EQ(report.at("iterations"), rep.iterations);

    const LaplaceOperator op = assemble_operator(generate_sphere(2), MassKind::lumped);
    const EigenPairs eig = generalized_eigs(op.weight, op.mass, 5);
    const auto lines = read_lines(dir / "eigenvalues.csv");
    ASSERT_EQ(lines.size(), 6u);
    for (int j = 0; j < 5; ++j) {
        const std::string& line = lines[static_cast<std::size_t>(j) + 1];
        const auto a = line.find(','), b = line.find(',', a + 1);
        const double lambda = std::stod(line.substr(a + 1, b - a - 1));
        EXPECT_NEAR(lambda, eig.values(j), 1e-6 * std::max(1.0, eig.values(j)));
    }
    std::filesystem::remove_all(dir);
}

TEST(Run, TraceFileIsDeterministic) {
    RunConfig cfg;
    cfg.generate = "lshape:m=3";
    cfg.solve.K = 3;
    cfg.solve.mu = 0.05;
    cfg.solve.seed = 9;
    cfg.solve.max_iter = 350;
    const auto a = scratch_dir("det_a"), b = scratch_dir("det_b");
    run(cfg, a);
    run(cfg, b);
    EXPECT_EQ(read_lines(a / "trace.csv"), read_lines(b / "trace.csv"));
    EXPECT_EQ(read_lines(a / "modes.csv"), read_lines(b / "modes.csv"));
    std::filesystem::remove_all(a);
    std::filesystem::remove_all(b);
}

TEST(Compare, SelfComparisonIsNeutral) {
    RunConfig cfg;
    cfg.generate = "lshape:m=3";
    cfg.solve.K = 3;
    cfg.solve.mu = 0.05;
    cfg.solve.max_iter = 400;
    const ComparisonReport rep = compare(cfg, {1, 2, 3}, Variant::admm, Variant::admm, 2);
    ASSERT_EQ(rep.completed, 3);
    for (const ComparisonRow& row : rep.rows) {
        EXPECT_EQ(row.fast->iterations, row.vanilla->iterations);
        EXPECT_EQ(row.fast->objective, row.vanilla->objective);
        EXPECT_EQ(row.fast->init_checksum, row.init_checksum);
    }
    EXPECT_EQ(rep.mean_iteration_reduction, 0.0);
    EXPECT_EQ(rep.median_iteration_reduction, 0.0);
}

TEST(Compare, RepeatedSeedsGiveIdenticalRowsAcrossThreadCounts) {
    RunConfig cfg;
    cfg.generate = "lshape:m=3";
    cfg.solve.K = 3;
    cfg.solve.mu = 0.05;
    cfg.solve.max_iter = 300;
    const ComparisonReport serial = compare(cfg, {1, 1, 4}, Variant::fast_admm, Variant::admm, 1);
    const ComparisonReport parallel = compare(cfg, {1, 1, 4}, Variant::fast_admm, Variant::admm, 3);
    ASSERT_EQ(serial.rows.size(), 3u);
    EXPECT_EQ(serial.rows[0].init_checksum, serial.rows[1].init_checksum);
    EXPECT_NE(serial.rows[0].init_checksum, serial.rows[2].init_checksum);
    EXPECT_EQ(serial.rows[0].fast->iterations, serial.rows[1].fast->iterations);
    EXPECT_EQ(serial.rows[0].vanilla->objective, serial.rows[1].vanilla->objective);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(serial.rows[i].seed, parallel.rows[i].seed);
        EXPECT_EQ(serial.rows[i].fast->iterations, parallel.rows[i].fast->iterations);
        EXPECT_EQ(serial.rows[i].vanilla->objective, parallel.rows[i].vanilla->objective);
    }
    EXPECT_EQ(to_json(serial).at("median_iteration_reduction"), to_json(parallel).at("median_iteration_reduction"));
}

TEST(Compare, RecordsPerSeedFailures) {
    RunConfig cfg;
    cfg.generate = "lshape:m=1";
    cfg.solve.K = 9; // more modes than vertices
    const ComparisonReport rep = compare(cfg, {1, 2}, Variant::fast_admm, Variant::admm, 1);
    EXPECT_EQ(rep.completed, 0);
    for (const ComparisonRow& row : rep.rows) EXPECT_NE(row.error.find("K"), std::string::npos);
    std::ostringstream csv;
    write_comparison_csv(csv, rep);
    EXPECT_NE(csv.str().find("seed,init_checksum"), std::string::npos);

    EXPECT_EQ(config_error_field([&] { compare(cfg, {1}); }), "seeds");
}
