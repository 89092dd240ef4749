#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "ivkit/cli.hpp"

namespace {

using namespace ivkit;
using cli::Json;
using cli::RunConfig;

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "ivkit_cli_test";
    fs::create_directories(dir);
    return dir / name;
}

RunConfig preset_config(const std::string& command, const std::string& preset, long n, std::uint64_t seed) {
    RunConfig cfg;
    cfg.command = command;
    cfg.preset = preset;
    cfg.n = n;
    cfg.seed = seed;
    return cfg;
}

int shell(const std::string& cmd) {
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Json read_json(const fs::path& p) {
    std::ifstream in(p);
    return Json::parse(in);
}

TEST(Run, PipelineOnFigureThree) {
    const auto report = cli::run(preset_config("pipeline", "fig3", 100000, 7));
    EXPECT_NEAR(report["beta_iv"][0][0].get<double>(), 1.0, 0.05);
    EXPECT_NEAR(report["beta_ols"][0][0].get<double>(), 4.0 / 3.0, 0.02);
    // Constructed instruments pass by construction.
    EXPECT_EQ(report["constructed"]["test"]["decision"], "valid");
    EXPECT_LT(report["constructed"]["validity_gap"].get<double>(), 1e-12);
    // z is a valid instrument for the causal effect, yet z is not orthogonal to
    // e_{y|x}: conditioning on x links z to the confounder u. The population
    // statistic is Sigma_zy - Sigma_zx * 4/3 = -1/3.
    EXPECT_NEAR(report["validity"][0]["statistic"].get<double>(), -1.0 / 3.0, 0.02);
    EXPECT_EQ(report["test"]["decision"], "invalid");
    const auto& rel = report["reliability"];
    EXPECT_EQ(rel["replicates"], 1000);
    EXPECT_EQ(report["meta"]["seed"], 7);
    EXPECT_EQ(report["meta"]["n"], 100000);
    EXPECT_EQ(report["meta"]["version"], IVKIT_VERSION);
}

TEST(Run, TestRejectsInvalidInstrumentInFigureTwo) {
    const auto report = cli::run(preset_config("test", "fig2", 10000, 3));
    EXPECT_EQ(report["test"]["decision"], "invalid");
    EXPECT_EQ(report["instrument_columns"][0], "w");
}

TEST(Run, ReportFieldsForEachCommand) {
    const auto sim = cli::run(preset_config("simulate", "fig1", 500, 1));
    EXPECT_EQ(sim["population_covariance"].size(), 3u);
    EXPECT_EQ(sim["block_order"], Json::parse(R"(["w","x","y"])"));

    auto construct = preset_config("construct", "fig2", 500, 1);
    construct.k = 1;
    const auto c = cli::run(construct);
    EXPECT_EQ(c["instruments"]["count"], 1);
    EXPECT_EQ(c["instruments"]["lambda"].size(), 2u);

    const auto est = cli::run(preset_config("estimate", "fig3", 2000, 1));
    EXPECT_EQ(est["estimate"]["method"], "just-identified");

    auto rel = preset_config("reliability", "fig2", 2000, 1);
    rel.replicates = 100;
    const auto r = cli::run(rel);
    const double v = r["reliability"]["variance"][0][0], b = r["reliability"]["bias"][0][0];
    EXPECT_EQ(r["reliability"]["mse_like"][0][0].get<double>(), v + b * b);
}

TEST(Run, ConfigValidation) {
    RunConfig cfg;
    cfg.command = "estimate";
    EXPECT_THROW(cli::run(cfg), ConfigError);
    cfg.preset = "fig1";
    cfg.input = "data.csv";
    EXPECT_THROW(cli::run(cfg), ConfigError);
    cfg.input.reset();
    cfg.alpha = 1.5;
    EXPECT_THROW(cli::run(cfg), ConfigError);
    cfg.alpha = 0.05;
    cfg.rank_tol = 0.0;
    EXPECT_THROW(cli::run(cfg), ConfigError);
    cfg.rank_tol = 1e-10;
    cfg.command = "bogus";
    EXPECT_THROW(cli::run(cfg), ConfigError);
}

TEST(Run, UnderidentifiedEstimateExitsWithCode4) {
    const auto csv = scratch("underid.csv");
    {
        std::ofstream out(csv);
        out << "z,x1,x2,y\n";
        for (int i = 0; i < 50; ++i)
            out << (i % 7) << "," << (i % 5) + 0.1 * i << "," << (i % 3) << "," << (i % 11) << "\n";
    }
    RunConfig cfg;
    cfg.command = "estimate";
    cfg.input = csv.string();
    cfg.roles = "z=z,x1=x,x2=x,y=y";
    cfg.out = scratch("underid.json").string();
    EXPECT_EQ(cli::run_main(cfg), 4);
    const auto err = read_json(*cfg.out);
    EXPECT_EQ(err["error"]["code"], "UNDERIDENTIFIED");
    EXPECT_EQ(err["error"]["exit_code"], 4);
}

TEST(Run, IdenticalConfigGivesIdenticalReport) {
    auto cfg = preset_config("pipeline", "fig2", 3000, 11);
    cfg.replicates = 200;
    cfg.threads = 1;
    const auto a = cli::run(cfg).dump(2);
    cfg.threads = 3;
    const auto b = cli::run(cfg).dump(2);
    EXPECT_EQ(a, b);
}

TEST(Executable, PipelineWritesReport) {
    const auto out = scratch("pipeline.json");
    const std::string cmd = std::string(IVKIT_CLI_PATH) + " pipeline --preset fig3 --n 5000 --seed 7 -M 200 --out " +
                            out.string();
    ASSERT_EQ(shell(cmd), 0);
    const auto report = read_json(out);
    EXPECT_EQ(report["command"], "pipeline");
    EXPECT_TRUE(report.contains("run_metadata"));
    EXPECT_TRUE(report["run_metadata"].contains("timestamp"));
}

TEST(Executable, SimulateThenIngestRoundTrip) {
    const auto data = scratch("sim.csv");
    const auto sim = scratch("sim.json");
    ASSERT_EQ(shell(std::string(IVKIT_CLI_PATH) + " simulate --preset fig3 --n 400 --seed 2 --data-out " +
                    data.string() + " --out " + sim.string()),
              0);
    const auto est = scratch("est.json");
    ASSERT_EQ(shell(std::string(IVKIT_CLI_PATH) + " estimate --input " + data.string() +
                    " --roles u=latent,z=z,x=x,y=y --out " + est.string()),
              0);
    const auto direct = cli::run(preset_config("estimate", "fig3", 400, 2));
    EXPECT_EQ(read_json(est)["beta_iv"], direct["beta_iv"]);
}

TEST(Executable, ErrorExitCodes) {
    const auto out = scratch("err.json");
    EXPECT_EQ(shell(std::string(IVKIT_CLI_PATH) + " estimate --preset nope --out " + out.string()), 2);
    EXPECT_EQ(read_json(out)["error"]["code"], "CONFIG");
    EXPECT_EQ(shell(std::string(IVKIT_CLI_PATH) + " estimate --bogus-flag > /dev/null 2>&1"), 2);
    const auto missing = scratch("missing.json");
    EXPECT_EQ(shell(std::string(IVKIT_CLI_PATH) + " estimate --input /nonexistent.csv --roles x=x --out " +
                    missing.string()),
              2);
}

}  // namespace
