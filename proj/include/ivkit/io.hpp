#pragma once

// Delimited-text ingestion, dataset serialization and the JSON graph format.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ivkit/dag.hpp"
#include "ivkit/dataset.hpp"
#include "ivkit/errors.hpp"
#include "ivkit/role.hpp"

namespace ivkit::io {

struct Table {
    std::vector<std::string> header;
    Eigen::MatrixXd values;
};

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, sep)) out.push_back(cell);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

inline std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace detail

/// Comma-delimited text with a mandatory header row. Row numbers in errors
/// are file line numbers (the header is line 1); columns are 1-based.
inline Table read_csv(std::istream& in) {
    Table t;
    std::string line;
    if (!std::getline(in, line)) throw ParseError(1, 0, "input is empty; a header row is required");
    for (auto& h : detail::split(line, ',')) t.header.push_back(detail::trim(h));
    for (std::size_t j = 0; j < t.header.size(); ++j) {
        if (t.header[j].empty())
            throw ParseError(1, static_cast<long>(j + 1), "empty column name in header");
    }

    std::vector<double> cells;
    long line_no = 1;
    long rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto parts = detail::split(line, ',');
        if (parts.size() != t.header.size())
            throw ParseError(line_no, static_cast<long>(parts.size()),
                             "row " + std::to_string(line_no) + " has " + std::to_string(parts.size()) +
                                 " cells, header has " + std::to_string(t.header.size()));
        for (std::size_t j = 0; j < parts.size(); ++j) {
            const std::string cell = detail::trim(parts[j]);
            double v = 0.0;
            const char* begin = cell.data();
            const char* end = begin + cell.size();
            if (cell.size() > 1 && cell[0] == '+') ++begin;
            const auto [ptr, ec] = std::from_chars(begin, end, v);
            if (cell.empty() || ec != std::errc() || ptr != end || !std::isfinite(v))
                throw ParseError(line_no, static_cast<long>(j + 1),
                                 "row " + std::to_string(line_no) + ", column " + std::to_string(j + 1) +
                                     " ('" + t.header[j] + "'): '" + cell + "' is not a finite number");
            cells.push_back(v);
        }
        ++rows;
    }
    const auto cols = static_cast<Eigen::Index>(t.header.size());
    t.values.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) t.values(i, j) = cells[static_cast<std::size_t>(i * cols + j)];
    }
    return t;
}

using RoleMap = std::vector<std::pair<std::string, Role>>;

/// Parses "col=role,col=role".
inline RoleMap parse_roles(const std::string& text) {
    RoleMap out;
    for (const auto& item : detail::split(text, ',')) {
        const std::string entry = detail::trim(item);
        if (entry.empty()) continue;
        const auto eq = entry.find('=');
        if (eq == std::string::npos) throw ConfigError("role entry '" + entry + "' must be column=role");
        const std::string col = detail::trim(entry.substr(0, eq));
        const auto role = parse_role(detail::trim(entry.substr(eq + 1)));
        if (col.empty() || !role) throw ConfigError("bad role entry '" + entry + "'");
        for (const auto& [c, r] : out) {
            if (c == col) throw ConfigError("column '" + col + "' assigned more than one role");
        }
        out.emplace_back(col, *role);
    }
    return out;
}

/// Builds a dataset from a table. Columns sharing a role form one block named
/// after the role (order w, x, y, z, latent; file order within a role).
/// Unmapped columns become single-column latent blocks.
inline Dataset to_dataset(const Table& t, const RoleMap& roles) {
    std::map<std::string, Eigen::Index> column;
    for (std::size_t j = 0; j < t.header.size(); ++j) {
        if (!column.emplace(t.header[j], static_cast<Eigen::Index>(j)).second)
            throw ParseError(1, static_cast<long>(j + 1), "duplicate column '" + t.header[j] + "'");
    }
    for (const auto& [col, role] : roles) {
        if (!column.count(col)) throw RoleError("role map names missing column '" + col + "'");
    }
    if (t.values.rows() < 2) throw DatasetError("input needs at least 2 data rows");

    std::vector<Eigen::Index> order;
    std::vector<std::string> names;
    std::vector<BlockInfo> blocks;
    std::vector<bool> taken(t.header.size(), false);
    for (Role r : {Role::W, Role::X, Role::Y, Role::Z, Role::Latent}) {
        const auto first = static_cast<Eigen::Index>(order.size());
        for (std::size_t j = 0; j < t.header.size(); ++j) {
            for (const auto& [col, role] : roles) {
                if (col == t.header[j] && role == r) {
                    order.push_back(static_cast<Eigen::Index>(j));
                    names.push_back(col);
                    taken[j] = true;
                }
            }
        }
        const auto width = static_cast<Eigen::Index>(order.size()) - first;
        if (width > 0) blocks.push_back(BlockInfo{std::string(to_string(r)), r, first, width});
    }
    for (std::size_t j = 0; j < t.header.size(); ++j) {
        if (taken[j]) continue;
        blocks.push_back(BlockInfo{"unmapped:" + t.header[j], Role::Latent,
                                   static_cast<Eigen::Index>(order.size()), 1});
        order.push_back(static_cast<Eigen::Index>(j));
        names.push_back(t.header[j]);
    }

    Eigen::MatrixXd values = t.values(Eigen::all, order);
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
        if ((values.col(j).array() == values(0, j)).all())
            throw DatasetError("column '" + names[static_cast<std::size_t>(j)] + "' has zero variance");
    }
    return Dataset(std::move(names), std::move(values), std::move(blocks), false);
}

inline Dataset ingest(const std::string& path, const RoleMap& roles) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open input '" + path + "'");
    return to_dataset(read_csv(in), roles);
}

/// %.17g formatting; parses back to the identical double.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_csv(std::ostream& out, const std::vector<std::string>& names, const Eigen::MatrixXd& values) {
    for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j];
    out << '\n';
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        for (Eigen::Index j = 0; j < values.cols(); ++j) out << (j ? "," : "") << format_double(values(i, j));
        out << '\n';
    }
}

inline void write_csv(std::ostream& out, const Dataset& data) { write_csv(out, data.names(), data.values()); }

inline void write_csv(const std::string& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    write_csv(out, data);
}

// Graph specification:
// {"blocks": [{"name": "w", "width": 1, "role": "w", "noise": 1.0 | [..]}],
//  "edges":  [{"parent": "w", "child": "x", "coefficients": 1.0 | [[..], ..]}]}

inline dag::BlockGraph graph_from_json(const nlohmann::json& j) {
    dag::BlockGraph g;
    try {
        for (const auto& b : j.at("blocks")) {
            const std::string name = b.at("name").get<std::string>();
            const int width = b.value("width", 1);
            const auto role = parse_role(b.value("role", std::string("latent")));
            if (!role) throw ConfigError("block '" + name + "' has an unknown role");
            if (!b.contains("noise") || b.at("noise").is_number()) {
                g.add_block(name, width, *role, b.value("noise", 1.0));
            } else {
                g.add_block(name, width, *role, b.at("noise").get<std::vector<double>>());
            }
        }
        if (j.contains("edges")) {
            for (const auto& e : j.at("edges")) {
                const std::string parent = e.at("parent").get<std::string>();
                const std::string child = e.at("child").get<std::string>();
                const auto& c = e.at("coefficients");
                if (c.is_number()) {
                    g.add_edge(parent, child, c.get<double>());
                    continue;
                }
                const auto rows = c.get<std::vector<std::vector<double>>>();
                Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                                  rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    if (static_cast<Eigen::Index>(rows[r].size()) != m.cols())
                        throw ConfigError("ragged coefficient matrix on edge " + parent + " -> " + child);
                    for (std::size_t q = 0; q < rows[r].size(); ++q)
                        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q)) = rows[r][q];
                }
                g.add_edge(parent, child, std::move(m));
            }
        }
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError(std::string("malformed graph specification: ") + ex.what());
    }
    return g;
}

inline dag::BlockGraph load_graph(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open graph file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError("graph file '" + path + "' is not valid JSON: " + ex.what());
    }
    return graph_from_json(j);
}

}  // namespace ivkit::io
