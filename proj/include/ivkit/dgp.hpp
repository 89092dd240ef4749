#pragma once

// Linear-Gaussian structural equation simulator over block graphs, and the
// closed-form population moments it implies.
//
// With columns stacked in topological order, a row satisfies
//   v = v B + e,   e ~ N(0, D),
// so v = e (I - B)^{-1} and Cov(v) = (I - B)^{-T} D (I - B)^{-1}.

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "ivkit/dag.hpp"
#include "ivkit/dataset.hpp"
#include "ivkit/errors.hpp"

namespace ivkit::dgp {

struct PopulationMoments {
    Eigen::MatrixXd sigma;          // all columns, sorted block order
    std::vector<BlockInfo> blocks;  // column ranges in sigma

    const BlockInfo& info(const std::string& name) const {
        for (const auto& b : blocks) {
            if (b.name == name) return b;
        }
        throw GraphError("no block '" + name + "' in population moments");
    }

    /// Sigma restricted to rows of block `a` and columns of block `b`.
    Eigen::MatrixXd sub(const std::string& a, const std::string& b) const {
        const auto& ia = info(a);
        const auto& ib = info(b);
        return sigma.block(ia.first, ib.first, ia.width, ib.width);
    }
};

namespace detail {

struct Layout {
    std::vector<BlockInfo> blocks;  // sorted order
    Eigen::MatrixXd structural;     // B, strictly upper triangular
    Eigen::VectorXd noise_sd;
    std::vector<std::string> names;
};

inline Layout layout(const dag::BlockGraph& graph) {
    const auto order = dag::sort_blocks(graph);
    Layout out;
    std::unordered_map<std::string, Eigen::Index> offset;
    Eigen::Index total = 0;
    for (const auto& name : order) {
        const auto& b = graph.block(name);
        out.blocks.push_back(BlockInfo{name, b.role, total, b.width});
        offset[name] = total;
        total += b.width;
    }
    out.structural = Eigen::MatrixXd::Zero(total, total);
    out.noise_sd.resize(total);
    for (const auto& info : out.blocks) {
        const auto& b = graph.block(info.name);
        for (Eigen::Index j = 0; j < info.width; ++j) {
            out.noise_sd(info.first + j) = b.noise_scales[static_cast<std::size_t>(j)];
            out.names.push_back(info.width == 1 ? info.name : info.name + "_" + std::to_string(j + 1));
        }
    }
    for (const auto& e : graph.edges()) {
        out.structural.block(offset[e.parent], offset[e.child], e.coefficients.rows(),
                             e.coefficients.cols()) = e.coefficients;
    }
    return out;
}

}  // namespace detail

inline PopulationMoments population_covariance(const dag::BlockGraph& graph) {
    const auto lay = detail::layout(graph);
    const Eigen::Index p = lay.structural.rows();
    const Eigen::MatrixXd i_minus_b = Eigen::MatrixXd::Identity(p, p) - lay.structural;
    // (I - B) is unit upper triangular, so its inverse is exact to rounding.
    const Eigen::MatrixXd inv =
        i_minus_b.triangularView<Eigen::UnitUpper>().solve(Eigen::MatrixXd::Identity(p, p));
    PopulationMoments out;
    out.sigma = inv.transpose() * lay.noise_sd.array().square().matrix().asDiagonal() * inv;
    out.sigma = 0.5 * (out.sigma + out.sigma.transpose()).eval();
    out.blocks = lay.blocks;
    return out;
}

/// Draws n rows from the structural system. Latent blocks are emitted with the
/// Latent role. Columns follow sorted block order.
inline Dataset simulate(const dag::BlockGraph& graph, Eigen::Index n, std::uint64_t seed) {
    if (n < 2) throw ConfigError("simulation needs n >= 2");
    const auto lay = detail::layout(graph);
    const Eigen::Index p = lay.structural.rows();
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd v(n, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) v(i, j) = lay.noise_sd(j) * normal(gen);
    }
    // Column j depends only on earlier columns, so fill left to right.
    for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index k = 0; k < j; ++k) {
            const double c = lay.structural(k, j);
            if (c != 0.0) v.col(j) += c * v.col(k);
        }
    }
    return Dataset(lay.names, std::move(v), lay.blocks, false);
}

struct Plims {
    Eigen::MatrixXd ols;  // Sigma_xx^{-1} Sigma_xy
    Eigen::MatrixXd iv;   // (S_zx' S_zz^{-1} S_zx)^{-1} S_zx' S_zz^{-1} S_zy
};

namespace detail {

inline Eigen::MatrixXd solve_spd(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* what) {
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible()) throw SingularMoment(std::string(what) + " is singular");
    return lu.solve(b);
}

}  // namespace detail

/// Population IV limit from moment blocks.
inline Eigen::MatrixXd plim_iv(const Eigen::MatrixXd& s_zz, const Eigen::MatrixXd& s_zx,
                               const Eigen::MatrixXd& s_zy) {
    if (s_zx.rows() == s_zx.cols()) return detail::solve_spd(s_zx, s_zy, "Sigma_zx");
    const Eigen::MatrixXd a = detail::solve_spd(s_zz, s_zx, "Sigma_zz");  // S_zz^{-1} S_zx
    return detail::solve_spd(s_zx.transpose() * a, a.transpose() * s_zy, "Sigma_xz Sigma_zz^-1 Sigma_zx");
}

inline Plims analytic_plims(const PopulationMoments& m, const std::string& z, const std::string& x,
                            const std::string& y) {
    Plims out;
    out.ols = detail::solve_spd(m.sub(x, x), m.sub(x, y), "Sigma_xx");
    out.iv = plim_iv(m.sub(z, z), m.sub(z, x), m.sub(z, y));
    return out;
}

inline Plims analytic_plims(const dag::BlockGraph& graph, const std::string& z, const std::string& x,
                            const std::string& y) {
    return analytic_plims(population_covariance(graph), z, x, y);
}

/// Population IV limit for z' = z - e Gamma, the projection of z off the
/// population outcome residual e = y - x Sigma_xx^{-1} Sigma_xy.
inline Eigen::MatrixXd repaired_plim(const PopulationMoments& m, const std::string& z,
                                     const std::string& x, const std::string& y) {
    const Eigen::MatrixXd s_xx = m.sub(x, x);
    const Eigen::MatrixXd b = detail::solve_spd(s_xx, m.sub(x, y), "Sigma_xx");
    // Moments of e with z, x, y and itself.
    const Eigen::MatrixXd s_ze = m.sub(z, y) - m.sub(z, x) * b;
    const Eigen::MatrixXd s_ex = m.sub(y, x) - b.transpose() * s_xx;
    const Eigen::MatrixXd s_ey = m.sub(y, y) - b.transpose() * m.sub(x, y);
    const Eigen::MatrixXd s_ee = s_ey - s_ex * b;
    const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(s_ee);
    const Eigen::MatrixXd gamma = cod.pseudoInverse() * s_ze.transpose();  // p_y x k
    const Eigen::MatrixXd s_rx = m.sub(z, x) - gamma.transpose() * s_ex;
    const Eigen::MatrixXd s_ry = m.sub(z, y) - gamma.transpose() * s_ey;
    const Eigen::MatrixXd s_rr = m.sub(z, z) - s_ze * gamma;
    return plim_iv(s_rr, s_rx, s_ry);
}

// Presets mirroring the three reference graph shapes.

struct Fig1Params {
    double beta_wx = 1.0;
    double beta_wy = 1.0;
    double beta_xy = 1.0;
};

/// w -> x, w -> y, x -> y; all blocks observed.
inline dag::BlockGraph fig1(const Fig1Params& p = {}) {
    dag::BlockGraph g;
    g.add_block("w", 1, Role::W).add_block("x", 1, Role::X).add_block("y", 1, Role::Y);
    g.add_edge("w", "x", p.beta_wx).add_edge("x", "y", p.beta_xy);
    if (p.beta_wy != 0.0) g.add_edge("w", "y", p.beta_wy);
    return g;
}

struct Fig2Params {
    double beta_wx = 1.0;
    double beta_wy = 0.5;
    double beta_xy = 1.0;
    double latent_loading = 0.5;  // every u, v -> {w, x, y} edge
    double u_to_v = 0.5;
};

/// Figure-1 structure plus latent u, v loading on w, x, y, with u -> v.
inline dag::BlockGraph fig2(const Fig2Params& p = {}) {
    dag::BlockGraph g;
    g.add_block("u", 1, Role::Latent).add_block("v", 1, Role::Latent);
    g.add_block("w", 1, Role::W).add_block("x", 1, Role::X).add_block("y", 1, Role::Y);
    if (p.u_to_v != 0.0) g.add_edge("u", "v", p.u_to_v);
    for (const char* latent : {"u", "v"}) {
        for (const char* observed : {"w", "x", "y"}) g.add_edge(latent, observed, p.latent_loading);
    }
    g.add_edge("w", "x", p.beta_wx).add_edge("x", "y", p.beta_xy);
    if (p.beta_wy != 0.0) g.add_edge("w", "y", p.beta_wy);
    return g;
}

struct Fig3Params {
    double beta_zx = 1.0;
    double beta_xy = 1.0;
    double u_to_x = 1.0;
    double u_to_y = 1.0;
};

/// Instrument z -> x -> y with a latent confounder u of x and y.
inline dag::BlockGraph fig3(const Fig3Params& p = {}) {
    dag::BlockGraph g;
    g.add_block("u", 1, Role::Latent);
    g.add_block("z", 1, Role::Z).add_block("x", 1, Role::X).add_block("y", 1, Role::Y);
    g.add_edge("u", "x", p.u_to_x).add_edge("u", "y", p.u_to_y);
    g.add_edge("z", "x", p.beta_zx).add_edge("x", "y", p.beta_xy);
    return g;
}

/// Preset by name: fig1, fig2 or fig3, with default parameters.
inline dag::BlockGraph preset(const std::string& name) {
    if (name == "fig1") return fig1();
    if (name == "fig2") return fig2();
    if (name == "fig3") return fig3();
    throw ConfigError("unknown preset '" + name + "' (expected fig1, fig2 or fig3)");
}

}  // namespace ivkit::dgp
