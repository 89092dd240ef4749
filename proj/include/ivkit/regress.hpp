#pragma once

// Ordinary and diagonally weighted least squares. No intercepts: callers
// center first.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "ivkit/dataset.hpp"
#include "ivkit/errors.hpp"

namespace ivkit::regress {

struct RegressionResult {
    Eigen::MatrixXd coefficients;  // predictor width x response width
    Eigen::MatrixXd residuals;     // n x response width
    double orthogonality_gap = 0.0;
    long rank = 0;
    Eigen::VectorXd singular_values;
};

struct OlsOptions {
    double rank_tol = 1e-10;
};

namespace detail {

using Svd = Eigen::JacobiSVD<Eigen::MatrixXd, Eigen::ColPivHouseholderQRPreconditioner>;

inline long effective_rank(const Eigen::VectorXd& sv, double rank_tol) {
    if (sv.size() == 0 || sv(0) <= 0.0) return 0;
    long r = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) >= rank_tol * sv(0)) ++r;
    }
    return r;
}

}  // namespace detail

/// Least squares of `responses` on `predictors`. With weights, both sides are
/// row-scaled by sqrt(weight) before the SVD solve; residuals are returned on
/// the original scale.
inline RegressionResult ols(const Eigen::MatrixXd& predictors, const Eigen::MatrixXd& responses,
                            const std::optional<Eigen::VectorXd>& weights = std::nullopt,
                            const OlsOptions& options = {}) {
    const Eigen::Index n = predictors.rows();
    if (responses.rows() != n) throw ShapeError("predictors and responses differ in row count");
    if (predictors.cols() == 0) throw ShapeError("at least one predictor column is required");
    if (!(options.rank_tol > 0.0)) throw ConfigError("rank_tol must be positive");

    Eigen::MatrixXd xw = predictors;
    Eigen::MatrixXd yw = responses;
    if (weights) {
        if (weights->size() != n) throw ShapeError("weight vector length must equal row count");
        if (!(weights->array() > 0.0).all() || !weights->allFinite())
            throw ConfigError("weights must be positive and finite");
        const Eigen::ArrayXd root = weights->array().sqrt();
        xw.array().colwise() *= root;
        yw.array().colwise() *= root;
    }

    detail::Svd svd(xw, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const long rank = detail::effective_rank(sv, options.rank_tol);
    const double threshold = sv.size() > 0 ? options.rank_tol * sv(0) : 0.0;
    if (rank < predictors.cols())
        throw RankDeficient(rank, threshold,
                            "predictor matrix is rank deficient (rank " + std::to_string(rank) +
                                " of " + std::to_string(predictors.cols()) + ")");

    RegressionResult out;
    const Eigen::MatrixXd uty = svd.matrixU().transpose() * yw;
    out.coefficients = svd.matrixV() * (sv.cwiseInverse().asDiagonal() * uty);
    out.residuals = responses - predictors * out.coefficients;
    Eigen::MatrixXd cross;
    if (weights) {
        cross = xw.transpose() * (out.residuals.array().colwise() * weights->array().sqrt()).matrix();
    } else {
        cross = predictors.transpose() * out.residuals;
    }
    out.orthogonality_gap = cross.size() ? cross.cwiseAbs().maxCoeff() / static_cast<double>(n) : 0.0;
    out.rank = rank;
    out.singular_values = sv;
    return out;
}

inline void require_centered(const Dataset& data) {
    if (!data.centered()) throw DatasetError("estimation requires a centered dataset");
}

inline RegressionResult ols(const Dataset& data, const std::vector<std::string>& predictors,
                            const std::vector<std::string>& responses,
                            const std::optional<Eigen::VectorXd>& weights = std::nullopt,
                            const OlsOptions& options = {}) {
    require_centered(data);
    return ols(data.blocks(predictors), data.blocks(responses), weights, options);
}

/// Residuals of `target` regressed on `given`.
inline Eigen::MatrixXd residual_block(const Dataset& data, const std::string& target,
                                      const std::vector<std::string>& given,
                                      const OlsOptions& options = {}) {
    return ols(data, given, {target}, std::nullopt, options).residuals;
}

}  // namespace ivkit::regress
