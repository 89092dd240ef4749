#pragma once

// Batch front end: run configuration, pipeline orchestration and JSON report
// assembly. The executable in tools/ only parses flags into a RunConfig.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ivkit/bootstrap.hpp"
#include "ivkit/dag.hpp"
#include "ivkit/dataset.hpp"
#include "ivkit/dgp.hpp"
#include "ivkit/errors.hpp"
#include "ivkit/io.hpp"
#include "ivkit/iv.hpp"
#include "ivkit/regress.hpp"
#include "ivkit/reliability.hpp"

#ifndef IVKIT_VERSION
#define IVKIT_VERSION "0.1.0"
#endif

namespace ivkit::cli {

using Json = nlohmann::ordered_json;

inline const std::set<std::string>& commands() {
    static const std::set<std::string> names{"simulate", "construct", "test", "estimate", "reliability", "pipeline"};
    return names;
}

struct RunConfig {
    std::string command;
    std::optional<std::string> input;   // CSV path
    std::optional<std::string> preset;  // fig1 | fig2 | fig3
    std::optional<std::string> graph;   // JSON graph specification
    std::string roles;                  // "col=role,..." for CSV input
    std::uint64_t seed = 1;
    long n = 10000;
    double alpha = 0.05;
    long replicates = bootstrap::kDefaultReplicates;
    long k = 1;
    unsigned threads = 0;
    double rank_tol = 1e-10;
    double weak_tol = 1e-8;
    std::optional<double> beta_wy;  // overrides the preset's direct w -> y effect
    std::optional<std::string> data_out;
    std::optional<std::string> out;

    void validate() const {
        if (!commands().count(command)) throw ConfigError("unknown command '" + command + "'");
        const int sources = int(input.has_value()) + int(preset.has_value()) + int(graph.has_value());
        if (sources != 1) throw ConfigError("exactly one of --input, --preset or --graph is required");
        if (command == "simulate" && input) throw ConfigError("simulate needs --preset or --graph");
        if (input && roles.empty()) throw ConfigError("--roles is required with --input");
        if (!input && !roles.empty()) throw ConfigError("--roles applies only to --input");
        if (beta_wy && !(preset && (*preset == "fig1" || *preset == "fig2")))
            throw ConfigError("--beta-wy applies only to presets fig1 and fig2");
        if (!(rank_tol > 0.0) || !(weak_tol > 0.0)) throw ConfigError("tolerances must be positive");
        if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("--alpha must lie in (0, 1)");
        if (n < 2) throw ConfigError("--n must be at least 2");
        if (k < 1) throw ConfigError("--k must be at least 1");
        if (replicates < 2) throw ConfigError("--replicates must be at least 2");
    }
};

inline Json to_json(const Eigen::MatrixXd& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Json to_json(const Eigen::VectorXd& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

inline Json names_json(const std::vector<std::string>& names) {
    Json out = Json::array();
    for (const auto& n : names) out.push_back(n);
    return out;
}

namespace detail {

inline dag::BlockGraph graph_for(const RunConfig& cfg) {
    if (cfg.graph) return io::load_graph(*cfg.graph);
    if (cfg.beta_wy) {
        if (*cfg.preset == "fig1") {
            dgp::Fig1Params p;
            p.beta_wy = *cfg.beta_wy;
            return dgp::fig1(p);
        }
        dgp::Fig2Params p;
        p.beta_wy = *cfg.beta_wy;
        return dgp::fig2(p);
    }
    return dgp::preset(*cfg.preset);
}

inline std::string source_label(const RunConfig& cfg) {
    if (cfg.input) return "file:" + *cfg.input;
    if (cfg.graph) return "graph:" + *cfg.graph;
    return "preset:" + *cfg.preset;
}

/// Observed instrument: role z columns, or role w when no z block exists.
inline Eigen::MatrixXd supplied_instruments(const Dataset& data) {
    if (data.has_role(Role::Z)) return data.role(Role::Z);
    if (data.has_role(Role::W)) return data.role(Role::W);
    throw RoleError("no instrument columns: tag columns with role z or w");
}

inline std::vector<std::string> supplied_instrument_names(const Dataset& data) {
    return data.has_role(Role::Z) ? data.role_column_names(Role::Z) : data.role_column_names(Role::W);
}

inline Json validity_json(const iv::ValidityVerdict& v, const std::vector<std::string>& columns) {
    Json cells = Json::array();
    for (const auto& c : v.cells) {
        Json cell;
        cell["column"] = columns.at(static_cast<std::size_t>(c.instrument));
        cell["response"] = c.response;
        cell["statistic"] = c.statistic;
        cell["se"] = c.standard_error;
        cell["p"] = c.p_value;
        cells.push_back(std::move(cell));
    }
    return cells;
}

inline Json verdict_json(const iv::ValidityVerdict& v, const std::vector<std::string>& columns) {
    Json out;
    out["validity"] = validity_json(v, columns);
    out["decision"] = v.valid ? "valid" : "invalid";
    out["failed_replicates"] = v.failed_replicates;
    Json ranking = Json::array();
    for (auto k : iv::invalidity_ranking(v)) ranking.push_back(columns.at(static_cast<std::size_t>(k)));
    out["least_invalid_ranking"] = std::move(ranking);
    return out;
}

inline Json estimate_json(const iv::IvEstimate& e) {
    Json out;
    out["beta"] = to_json(e.beta);
    out["method"] = iv::to_string(e.method);
    out["first_stage_rank"] = e.first_stage_rank;
    return out;
}

inline Json instruments_json(const iv::InstrumentSet& s) {
    Json out;
    out["count"] = s.instruments.cols();
    out["null_dimension"] = s.null_dimension;
    out["lambda"] = to_json(s.lambda);
    out["relevance"] = to_json(s.relevance);
    out["validity_gap"] = s.validity_gap;
    return out;
}

inline Json reliability_json(const bootstrap::ReliabilityReport& r) {
    Json out;
    out["beta_iv"] = to_json(r.beta_iv);
    out["beta_iv_repaired"] = to_json(r.beta_iv_repaired);
    out["variance"] = to_json(r.variance);
    out["bias"] = to_json(r.bias);
    out["bias_sd"] = to_json(r.bias_sd);
    out["mse_like"] = to_json(r.mse_like);
    out["replicates"] = r.replicates;
    out["failed_replicates"] = r.failed_replicates;
    return out;
}

inline Json shape_json(const Eigen::MatrixXd& z, const std::vector<std::string>& columns) {
    Json out = Json::array();
    const auto shapes = iv::normality_diagnostics(z);
    for (std::size_t j = 0; j < shapes.size(); ++j) {
        Json s;
        s["column"] = columns.at(j);
        s["skewness"] = shapes[j].skewness;
        s["excess_kurtosis"] = shapes[j].excess_kurtosis;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace detail

/// Executes one subcommand and returns its report. The report excludes
/// run-specific metadata (timestamp, thread count); see run_main.
inline Json run(const RunConfig& cfg) {
    cfg.validate();
    const iv::IvOptions iv_opts{cfg.rank_tol, cfg.weak_tol};

    Json report;
    report["command"] = cfg.command;

    std::optional<dag::BlockGraph> graph;
    std::optional<Dataset> raw;
    if (cfg.input) {
        raw = io::ingest(*cfg.input, io::parse_roles(cfg.roles));
    } else {
        graph = detail::graph_for(cfg);
        raw = dgp::simulate(*graph, cfg.n, cfg.seed);
    }

    Json input;
    input["source"] = detail::source_label(cfg);
    Json columns = Json::array();
    for (const auto& b : raw->blocks()) {
        for (Eigen::Index j = 0; j < b.width; ++j) {
            Json c;
            c["name"] = raw->names()[static_cast<std::size_t>(b.first + j)];
            c["block"] = b.name;
            c["role"] = std::string(to_string(b.role));
            columns.push_back(std::move(c));
        }
    }
    input["columns"] = std::move(columns);
    report["input"] = std::move(input);

    Json meta;
    meta["seed"] = cfg.seed;
    meta["n"] = raw->rows();
    meta["M"] = cfg.replicates;
    meta["alpha"] = cfg.alpha;
    meta["k"] = cfg.k;
    meta["rank_tol"] = cfg.rank_tol;
    meta["weak_tol"] = cfg.weak_tol;
    meta["version"] = IVKIT_VERSION;
    report["meta"] = std::move(meta);

    if (cfg.command == "simulate") {
        const auto moments = dgp::population_covariance(*graph);
        Json names = Json::array();
        for (const auto& b : moments.blocks) names.push_back(b.name);
        report["block_order"] = std::move(names);
        report["population_covariance"] = to_json(moments.sigma);
        const Eigen::MatrixXd centered = center(*raw).values();
        const Eigen::MatrixXd sample = centered.transpose() * centered / static_cast<double>(raw->rows());
        report["sample_covariance"] = to_json(sample);
        if (cfg.data_out) io::write_csv(*cfg.data_out, *raw);
        return report;
    }

    const Dataset data = center(*raw);
    const Eigen::MatrixXd x = data.role(Role::X);
    const Eigen::MatrixXd y = data.role(Role::Y);
    const regress::OlsOptions ols_opts{cfg.rank_tol};
    const iv::ValidityOptions test_opts{iv_opts, cfg.threads};
    const bootstrap::ReliabilityOptions rel_opts{iv_opts, cfg.threads};

    if (cfg.command == "construct") {
        const auto set = iv::construct_instruments(data, cfg.k, iv_opts);
        report["instruments"] = detail::instruments_json(set);
        if (cfg.data_out) {
            std::vector<std::string> names;
            for (long j = 0; j < set.instruments.cols(); ++j) names.push_back("iv_" + std::to_string(j + 1));
            std::ofstream out(*cfg.data_out);
            if (!out) throw ConfigError("cannot write '" + *cfg.data_out + "'");
            io::write_csv(out, names, set.instruments);
        }
        return report;
    }

    const Eigen::MatrixXd z = detail::supplied_instruments(data);
    const auto z_names = detail::supplied_instrument_names(data);
    report["instrument_columns"] = names_json(z_names);

    if (cfg.command == "test") {
        const auto verdict = iv::validity_test(z, x, y, cfg.alpha, cfg.replicates, cfg.seed, test_opts);
        Json test = detail::verdict_json(verdict, z_names);
        test["normality"] = detail::shape_json(z, z_names);
        report["test"] = std::move(test);
        return report;
    }

    if (cfg.command == "estimate") {
        const auto est = iv::iv_estimate(z, x, y, iv_opts);
        report["beta_iv"] = to_json(est.beta);
        report["estimate"] = detail::estimate_json(est);
        report["beta_ols"] = to_json(regress::ols(x, y, std::nullopt, ols_opts).coefficients);
        return report;
    }

    if (cfg.command == "reliability") {
        const auto repair = iv::nearest_valid(data, z, iv_opts);
        Json rep;
        rep["deviation"] = to_json(repair.deviation);
        report["repair"] = std::move(rep);
        report["reliability"] = detail::reliability_json(
            bootstrap::reliability(z, repair.instruments, x, y, cfg.replicates, cfg.seed, rel_opts));
        return report;
    }

    // pipeline: construct -> test -> estimate -> reliability
    report["beta_ols"] = to_json(regress::ols(x, y, std::nullopt, ols_opts).coefficients);

    const auto est = iv::iv_estimate(z, x, y, iv_opts);
    report["beta_iv"] = to_json(est.beta);
    report["estimate"] = detail::estimate_json(est);

    const auto verdict = iv::validity_test(z, x, y, cfg.alpha, cfg.replicates, cfg.seed, test_opts);
    Json test = detail::verdict_json(verdict, z_names);
    test["normality"] = detail::shape_json(z, z_names);
    report["validity"] = test["validity"];
    report["test"] = std::move(test);

    const auto set = iv::construct_instruments(data, cfg.k, iv_opts);
    Json constructed = detail::instruments_json(set);
    std::vector<std::string> c_names;
    for (long j = 0; j < set.instruments.cols(); ++j) c_names.push_back("iv_" + std::to_string(j + 1));
    const auto c_verdict =
        iv::validity_test(set.instruments, x, y, cfg.alpha, cfg.replicates, cfg.seed, test_opts);
    constructed["test"] = detail::verdict_json(c_verdict, c_names);
    constructed["estimate"] = detail::estimate_json(iv::iv_estimate(set.instruments, x, y, iv_opts));
    report["constructed"] = std::move(constructed);

    const auto repair = iv::nearest_valid(data, z, iv_opts);
    Json rep;
    rep["deviation"] = to_json(repair.deviation);
    report["repair"] = std::move(rep);
    report["reliability"] = detail::reliability_json(
        bootstrap::reliability(z, repair.instruments, x, y, cfg.replicates, cfg.seed, rel_opts));
    return report;
}

inline Json error_record(const std::string& code, int exit_code, const std::string& message) {
    Json err;
    err["code"] = code;
    err["exit_code"] = exit_code;
    err["message"] = message;
    Json out;
    out["error"] = std::move(err);
    return out;
}

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Runs the config, writes the report (or an error record) to cfg.out or
/// stdout, and returns the process exit status.
inline int run_main(const RunConfig& cfg, std::ostream& fallback = std::cout) {
    Json doc;
    int status = 0;
    try {
        doc = run(cfg);
        Json run_meta;
        run_meta["timestamp"] = utc_timestamp();
        run_meta["threads"] = bootstrap::resolve_threads(cfg.threads);
        doc["run_metadata"] = std::move(run_meta);
    } catch (const Error& e) {
        status = static_cast<int>(e.exit_code());
        doc = error_record(e.code(), status, e.what());
    } catch (const std::exception& e) {
        status = static_cast<int>(ExitCode::Numeric);
        doc = error_record("INTERNAL", status, e.what());
    }
    const std::string text = doc.dump(2) + "\n";
    if (cfg.out) {
        std::ofstream out(*cfg.out);
        if (out) {
            out << text;
            return status;
        }
        std::cerr << "cannot write report to '" << *cfg.out << "'\n";
    }
    fallback << text;
    return status;
}

}  // namespace ivkit::cli
