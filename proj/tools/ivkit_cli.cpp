// ivkit command-line front end.
//
//   ivkit <simulate|construct|test|estimate|reliability|pipeline> [flags]
//
// Exit codes: 0 success, 2 config error, 3 numeric/rank error,
// 4 identification error. Failures write a JSON error record.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ivkit/cli.hpp"

namespace {

void add_common_flags(CLI::App& sub, ivkit::cli::RunConfig& cfg, std::optional<std::string>& input,
                      std::optional<std::string>& preset, std::optional<std::string>& graph,
                      std::optional<std::string>& out, std::optional<std::string>& data_out,
                      std::optional<double>& beta_wy) {
    sub.add_option("--input", input, "CSV file with a header row");
    sub.add_option("--preset", preset, "simulated preset: fig1, fig2 or fig3");
    sub.add_option("--graph", graph, "JSON block graph to simulate from");
    sub.add_option("--roles", cfg.roles, "column roles for --input, e.g. w=w,x=x,y=y");
    sub.add_option("--seed", cfg.seed, "random seed");
    sub.add_option("--n", cfg.n, "sample size for simulated inputs");
    sub.add_option("--alpha", cfg.alpha, "validity test level");
    sub.add_option("--replicates,-M", cfg.replicates, "bootstrap replicates");
    sub.add_option("--k", cfg.k, "number of instruments to construct");
    sub.add_option("--threads", cfg.threads, "bootstrap worker threads (0 = all cores)");
    sub.add_option("--rank-tol", cfg.rank_tol, "relative singular value cutoff for least squares");
    sub.add_option("--weak-tol", cfg.weak_tol, "relative first-stage strength cutoff");
    sub.add_option("--beta-wy", beta_wy, "override the direct w -> y effect of preset fig1/fig2");
    sub.add_option("--out", out, "report path (default: stdout)");
    sub.add_option("--data-out", data_out, "CSV output for simulated data or constructed instruments");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Instrumental-variable testing, construction, repair and reliability"};
    app.require_subcommand(1);

    ivkit::cli::RunConfig cfg;
    std::optional<std::string> input, preset, graph, out, data_out;
    std::optional<double> beta_wy;
    for (const auto& name : ivkit::cli::commands()) {
        auto* sub = app.add_subcommand(name);
        add_common_flags(*sub, cfg, input, preset, graph, out, data_out, beta_wy);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        const auto record = ivkit::cli::error_record("CONFIG", 2, e.what());
        std::cout << record.dump(2) << "\n";
        std::cerr << e.what() << "\n";
        return 2;
    }

    cfg.command = app.get_subcommands().front()->get_name();
    cfg.input = input;
    cfg.preset = preset;
    cfg.graph = graph;
    cfg.out = out;
    cfg.data_out = data_out;
    cfg.beta_wy = beta_wy;
    return ivkit::cli::run_main(cfg);
}
