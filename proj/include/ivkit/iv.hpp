#pragma once

// Instrumental-variable estimation, the orthogonality validity test,
// construction of exactly valid sample instruments, and nearest-valid repair.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "ivkit/bootstrap.hpp"
#include "ivkit/dataset.hpp"
#include "ivkit/errors.hpp"
#include "ivkit/regress.hpp"

namespace ivkit::iv {

struct IvOptions {
    double rank_tol = 1e-10;
    /// Smallest singular value of z'x relative to |z|_F |x|_F below which the
    /// first stage is declared weak.
    double weak_tol = 1e-8;
};

enum class IvMethod { JustIdentified, TwoStage };

inline const char* to_string(IvMethod m) {
    return m == IvMethod::JustIdentified ? "just-identified" : "two-stage";
}

struct IvEstimate {
    Eigen::MatrixXd beta;  // p_x x p_y
    IvMethod method = IvMethod::JustIdentified;
    long first_stage_rank = 0;
};

/// Rejects under-identified or weak first stages; returns the rank of z'x.
inline long check_first_stage(const Eigen::MatrixXd& z, const Eigen::MatrixXd& x,
                              const IvOptions& options = {}) {
    if (z.rows() != x.rows()) throw ShapeError("instruments and treatment differ in row count");
    if (z.cols() < x.cols())
        throw Underidentified("need at least " + std::to_string(x.cols()) + " instruments, got " +
                              std::to_string(z.cols()));
    const double n = static_cast<double>(z.rows());
    const Eigen::MatrixXd cross = z.transpose() * x / n;
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double scale = z.norm() * x.norm() / n;
    const double threshold = options.weak_tol * scale;
    long rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > threshold) ++rank;
    }
    if (rank < x.cols())
        throw WeakInstrument(rank, threshold,
                             "first stage z'x/n has rank " + std::to_string(rank) + " below " +
                                 std::to_string(x.cols()) + " at tolerance " +
                                 std::to_string(threshold));
    return rank;
}

/// (x'P_z x)^{-1} x'P_z y computed as two successive least-squares fits.
inline Eigen::MatrixXd two_stage(const Eigen::MatrixXd& z, const Eigen::MatrixXd& x,
                                 const Eigen::MatrixXd& y, const IvOptions& options = {}) {
    const regress::OlsOptions ols_opts{options.rank_tol};
    const auto first = regress::ols(z, x, std::nullopt, ols_opts);
    const Eigen::MatrixXd fitted = x - first.residuals;
    return regress::ols(fitted, y, std::nullopt, ols_opts).coefficients;
}

/// (z'x)^{-1} z'y; requires as many instruments as treatment columns.
inline Eigen::MatrixXd just_identified(const Eigen::MatrixXd& z, const Eigen::MatrixXd& x,
                                       const Eigen::MatrixXd& y) {
    if (z.cols() != x.cols()) throw ShapeError("just-identified form needs k = p_x");
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(z.transpose() * x);
    if (!lu.isInvertible()) throw WeakInstrument(lu.rank(), lu.threshold(), "z'x is singular");
    return lu.solve(z.transpose() * y);
}

inline IvEstimate iv_estimate(const Eigen::MatrixXd& z, const Eigen::MatrixXd& x,
                              const Eigen::MatrixXd& y, const IvOptions& options = {}) {
    if (y.rows() != x.rows()) throw ShapeError("outcome and treatment differ in row count");
    IvEstimate out;
    out.first_stage_rank = check_first_stage(z, x, options);
    if (z.cols() == x.cols()) {
        out.beta = just_identified(z, x, y);
        out.method = IvMethod::JustIdentified;
    } else {
        out.beta = two_stage(z, x, y, options);
        out.method = IvMethod::TwoStage;
    }
    return out;
}

inline IvEstimate iv_estimate(const Dataset& data, const Eigen::MatrixXd& instruments,
                              const IvOptions& options = {}) {
    regress::require_centered(data);
    if (instruments.rows() != data.rows()) throw ShapeError("instrument rows must match dataset");
    return iv_estimate(instruments, data.role(Role::X), data.role(Role::Y), options);
}

/// Residuals of the outcome block regressed on the treatment block.
inline Eigen::MatrixXd outcome_residuals(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                         const IvOptions& options = {}) {
    return regress::ols(x, y, std::nullopt, regress::OlsOptions{options.rank_tol}).residuals;
}

inline Eigen::MatrixXd outcome_residuals(const Dataset& data, const IvOptions& options = {}) {
    regress::require_centered(data);
    return outcome_residuals(data.role(Role::X), data.role(Role::Y), options);
}

/// One instrument-column / outcome-column cell of the validity test.
struct ValidityCell {
    Eigen::Index instrument = 0;
    Eigen::Index response = 0;
    double statistic = 0.0;  // z_k' e_j / n
    double standard_error = 0.0;
    double p_value = 1.0;
};

struct ValidityVerdict {
    std::vector<ValidityCell> cells;
    bool valid = true;
    double alpha = 0.05;
    long replicates = 0;
    long failed_replicates = 0;
    std::uint64_t seed = 0;
};

struct ValidityOptions {
    IvOptions iv;
    unsigned threads = 0;
};

/// Two-sided normal p-value of a studentized statistic.
inline double two_sided_p(double statistic, double standard_error) {
    if (!(standard_error > 0.0)) return statistic == 0.0 ? 1.0 : 0.0;
    const double t = std::abs(statistic / standard_error);
    return std::clamp(std::erfc(t / std::sqrt(2.0)), 0.0, 1.0);
}

/// Tests z ⟂ e_{y|x}: each cross-moment is studentized by its nonparametric
/// bootstrap standard error.
inline ValidityVerdict validity_test(const Eigen::MatrixXd& z, const Eigen::MatrixXd& x,
                                     const Eigen::MatrixXd& y, double alpha, long replicates,
                                     std::uint64_t seed, const ValidityOptions& options = {}) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (replicates < 100) throw ConfigError("validity test needs at least 100 replicates");
    if (z.rows() != x.rows() || y.rows() != x.rows())
        throw ShapeError("instrument, treatment and outcome must share a row count");

    const double n = static_cast<double>(x.rows());
    const Eigen::MatrixXd stat = z.transpose() * outcome_residuals(x, y, options.iv) / n;

    using Draw = std::optional<Eigen::MatrixXd>;
    const std::vector<Eigen::MatrixXd> inputs{z, x, y};
    const auto draws = bootstrap::run_replicates<Draw>(
        static_cast<std::size_t>(replicates), options.threads, [&](std::size_t m) -> Draw {
            const auto r = bootstrap::resample_rows(inputs, seed, m);
            try {
                return Draw(r[0].transpose() * outcome_residuals(r[1], r[2], options.iv) / n);
            } catch (const RankDeficient&) {
                return std::nullopt;
            }
        });

    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(stat.rows(), stat.cols());
    Eigen::MatrixXd sum_sq = Eigen::MatrixXd::Zero(stat.rows(), stat.cols());
    long ok = 0;
    for (const auto& d : draws) {
        if (!d) continue;
        sum += *d;
        ++ok;
    }
    if (ok < 2) throw TooManyFailures(replicates - ok, replicates, "too few usable bootstrap replicates");
    const Eigen::MatrixXd mean = sum / static_cast<double>(ok);
    for (const auto& d : draws) {
        if (d) sum_sq.array() += (d->array() - mean.array()).square();
    }
    const Eigen::MatrixXd se = (sum_sq / static_cast<double>(ok - 1)).cwiseSqrt();

    ValidityVerdict out;
    out.alpha = alpha;
    out.replicates = replicates;
    out.failed_replicates = replicates - ok;
    out.seed = seed;
    for (Eigen::Index k = 0; k < stat.rows(); ++k) {
        for (Eigen::Index j = 0; j < stat.cols(); ++j) {
            ValidityCell c{k, j, stat(k, j), se(k, j), two_sided_p(stat(k, j), se(k, j))};
            if (c.p_value < alpha) out.valid = false;
            out.cells.push_back(c);
        }
    }
    return out;
}

inline ValidityVerdict validity_test(const Dataset& data, const Eigen::MatrixXd& instruments,
                                     double alpha, long replicates, std::uint64_t seed,
                                     const ValidityOptions& options = {}) {
    regress::require_centered(data);
    if (instruments.rows() != data.rows()) throw ShapeError("instrument rows must match dataset");
    return validity_test(instruments, data.role(Role::X), data.role(Role::Y), alpha, replicates,
                         seed, options);
}

/// Instrument columns ordered from least to most invalid by their largest
/// |statistic| across outcome columns.
inline std::vector<Eigen::Index> invalidity_ranking(const ValidityVerdict& verdict) {
    std::vector<double> worst;
    for (const auto& c : verdict.cells) {
        const auto k = static_cast<std::size_t>(c.instrument);
        if (worst.size() <= k) worst.resize(k + 1, 0.0);
        worst[k] = std::max(worst[k], std::abs(c.statistic));
    }
    std::vector<Eigen::Index> order(worst.size());
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return worst[static_cast<std::size_t>(a)] < worst[static_cast<std::size_t>(b)];
    });
    return order;
}

struct InstrumentSet {
    Eigen::MatrixXd instruments;  // n x k, orthonormal columns
    Eigen::MatrixXd lambda;       // (p_w + p_x) x k over the columns of (w | eta_x)
    Eigen::VectorXd relevance;    // |z_k' x|
    double validity_gap = 0.0;    // max |z_k' e_{y|x}| / n
    long null_dimension = 0;
};

/// Candidate block for instrument construction: role w, or role z when no w
/// block is tagged.
inline Eigen::MatrixXd candidate_sources(const Dataset& data) {
    return data.has_role(Role::W) ? data.role(Role::W) : data.role(Role::Z);
}

/// (w | eta_x), where eta_x are residuals of x regressed on w.
inline Eigen::MatrixXd candidate_matrix(const Dataset& data, const IvOptions& options = {}) {
    regress::require_centered(data);
    const Eigen::MatrixXd w = candidate_sources(data);
    const Eigen::MatrixXd x = data.role(Role::X);
    const Eigen::MatrixXd eta =
        regress::ols(w, x, std::nullopt, regress::OlsOptions{options.rank_tol}).residuals;
    Eigen::MatrixXd c(w.rows(), w.cols() + x.cols());
    c << w, eta;
    return c;
}

/// Builds k unit-norm instruments z = (w | eta_x) lambda with z' e_{y|x} = 0
/// exactly, ordered by first-stage strength |z' x|.
inline InstrumentSet construct_instruments(const Dataset& data, long count,
                                           const IvOptions& options = {}) {
    if (count < 1) throw ConfigError("instrument count must be at least 1");
    const Eigen::MatrixXd c = candidate_matrix(data, options);
    const Eigen::MatrixXd x = data.role(Role::X);
    const Eigen::MatrixXd e = outcome_residuals(data, options);
    const double n = static_cast<double>(data.rows());

    // Null space of G' where G = C'e.
    const Eigen::MatrixXd gt = (c.transpose() * e).transpose();
    const Eigen::JacobiSVD<Eigen::MatrixXd> gsvd(gt, Eigen::ComputeFullV);
    const Eigen::VectorXd& gsv = gsvd.singularValues();
    long constraint_rank = 0;
    const double constraint_scale = c.norm() * data.role(Role::Y).norm();
    if (gsv.size() > 0 && gsv(0) > options.rank_tol * constraint_scale) {
        for (Eigen::Index i = 0; i < gsv.size(); ++i) {
            if (gsv(i) >= options.rank_tol * gsv(0)) ++constraint_rank;
        }
    }
    const Eigen::Index m = c.cols();
    const Eigen::Index null_dim = m - constraint_rank;
    if (null_dim <= 0)
        throw NoValidSpace("no combination of " + std::to_string(m) +
                           " candidate columns is orthogonal to the outcome residuals");
    if (null_dim < count)
        throw InsufficientCount(null_dim, count,
                                "only " + std::to_string(null_dim) +
                                    " valid instrument directions exist, requested " +
                                    std::to_string(count));
    const Eigen::MatrixXd null_basis = gsvd.matrixV().rightCols(null_dim);

    // Orthonormal basis of the feasible instruments: Q = C T.
    const Eigen::MatrixXd feasible = c * null_basis;
    const regress::detail::Svd fsvd(feasible, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const long feasible_rank = regress::detail::effective_rank(fsvd.singularValues(), options.rank_tol);
    if (feasible_rank < count)
        throw InsufficientCount(feasible_rank, count, "valid instrument space is degenerate");
    const Eigen::MatrixXd q = fsvd.matrixU().leftCols(feasible_rank);
    const Eigen::MatrixXd t =
        null_basis * fsvd.matrixV().leftCols(feasible_rank) *
        fsvd.singularValues().head(feasible_rank).cwiseInverse().asDiagonal();

    // Directions of Q maximizing |z'x|, strongest first.
    const Eigen::JacobiSVD<Eigen::MatrixXd> rsvd(q.transpose() * x, Eigen::ComputeFullU);
    Eigen::MatrixXd dirs = rsvd.matrixU().leftCols(count);

    InstrumentSet out;
    out.instruments = q * dirs;
    out.lambda = t * dirs;
    for (Eigen::Index k = 0; k < count; ++k) {
        if ((out.instruments.col(k).transpose() * x).sum() < 0.0) {
            out.instruments.col(k) *= -1.0;
            out.lambda.col(k) *= -1.0;
        }
    }
    out.relevance = (out.instruments.transpose() * x).rowwise().norm();
    out.validity_gap = (out.instruments.transpose() * e).cwiseAbs().maxCoeff() / n;
    out.null_dimension = null_dim;
    return out;
}

struct Repair {
    Eigen::MatrixXd instruments;  // z'
    Eigen::VectorXd deviation;    // |z_k - z'_k|_2
};

/// Columnwise projection of z onto the orthogonal complement of span(e),
/// the closest point (Euclidean) satisfying z'_k ⟂ e.
inline Repair nearest_valid(const Eigen::MatrixXd& instruments, const Eigen::MatrixXd& residuals,
                            double scale, const IvOptions& options = {}) {
    if (instruments.rows() != residuals.rows()) throw ShapeError("instrument rows must match residuals");
    Repair out{instruments, Eigen::VectorXd::Zero(instruments.cols())};
    const regress::detail::Svd svd(residuals, Eigen::ComputeThinU);
    const Eigen::VectorXd& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) <= options.rank_tol * scale) return out;
    const long rank = regress::detail::effective_rank(sv, options.rank_tol);
    const Eigen::MatrixXd basis = svd.matrixU().leftCols(rank);
    const Eigen::MatrixXd coef = basis.transpose() * instruments;
    for (Eigen::Index k = 0; k < instruments.cols(); ++k) {
        // Columns already orthogonal to e (to tolerance) are returned as given.
        if (coef.col(k).cwiseAbs().maxCoeff() <= options.rank_tol * instruments.col(k).norm()) continue;
        const Eigen::VectorXd removed = basis * coef.col(k);
        out.instruments.col(k) -= removed;
        out.deviation(k) = removed.norm();
    }
    return out;
}

inline Repair nearest_valid(const Dataset& data, const Eigen::MatrixXd& instruments,
                            const IvOptions& options = {}) {
    regress::require_centered(data);
    if (instruments.rows() != data.rows()) throw ShapeError("instrument rows must match dataset");
    const Eigen::MatrixXd y = data.role(Role::Y);
    return nearest_valid(instruments, outcome_residuals(data, options), y.norm(), options);
}

/// Effect on y of moving x from `x_from` to `x_to`: (x_to - x_from)' beta.
inline Eigen::VectorXd causal_effect(const IvEstimate& estimate, const Eigen::VectorXd& x_from,
                                     const Eigen::VectorXd& x_to) {
    if (x_from.size() != estimate.beta.rows() || x_to.size() != estimate.beta.rows())
        throw ShapeError("intervention vectors must have one entry per treatment column");
    return estimate.beta.transpose() * (x_to - x_from);
}

struct ColumnShape {
    double skewness = 0.0;
    double excess_kurtosis = 0.0;
};

/// Sample skewness and excess kurtosis per column. Diagnostic only.
inline std::vector<ColumnShape> normality_diagnostics(const Eigen::MatrixXd& m) {
    std::vector<ColumnShape> out;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const Eigen::ArrayXd d = m.col(j).array() - m.col(j).mean();
        const double m2 = d.square().mean();
        if (!(m2 > 0.0)) {
            out.push_back({0.0, 0.0});
            continue;
        }
        out.push_back({d.cube().mean() / std::pow(m2, 1.5), d.square().square().mean() / (m2 * m2) - 3.0});
    }
    return out;
}

}  // namespace ivkit::iv
