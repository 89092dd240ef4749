#pragma once

// Bootstrap reliability of an imperfect instrument: sampling variance of the
// IV estimate plus the squared bias relative to its repaired counterpart.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ivkit/bootstrap.hpp"
#include "ivkit/dataset.hpp"
#include "ivkit/errors.hpp"
#include "ivkit/iv.hpp"

namespace ivkit::bootstrap {

inline constexpr long kDefaultReplicates = 1000;
inline constexpr double kMaxFailureShare = 0.10;

struct ReliabilityReport {
    Eigen::MatrixXd beta_iv;           // full sample, original instruments
    Eigen::MatrixXd beta_iv_repaired;  // full sample, repaired instruments
    Eigen::MatrixXd variance;          // bootstrap variance of beta_iv
    Eigen::MatrixXd bias;              // mean of (beta_iv' - beta_iv)
    Eigen::MatrixXd bias_sd;           // bootstrap standard deviation of (beta_iv' - beta_iv)
    Eigen::MatrixXd mse_like;          // variance + bias^2
    long replicates = 0;
    std::uint64_t seed = 0;
    long failed_replicates = 0;
};

struct ReliabilityOptions {
    iv::IvOptions iv;
    unsigned threads = 0;
};

inline ReliabilityReport reliability(const Eigen::MatrixXd& z, const Eigen::MatrixXd& z_repaired,
                                     const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, long replicates,
                                     std::uint64_t seed, const ReliabilityOptions& options = {}) {
    if (replicates < 2) throw ConfigError("reliability needs at least 2 replicates");
    if (z.cols() != z_repaired.cols() || z.rows() != z_repaired.rows())
        throw ShapeError("original and repaired instruments must have the same shape");

    ReliabilityReport out;
    out.beta_iv = iv::iv_estimate(z, x, y, options.iv).beta;
    out.beta_iv_repaired = iv::iv_estimate(z_repaired, x, y, options.iv).beta;
    out.replicates = replicates;
    out.seed = seed;

    using Pair = std::optional<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>>;
    const std::vector<Eigen::MatrixXd> inputs{z_repaired, z, x, y};
    const auto draws = run_replicates<Pair>(
        static_cast<std::size_t>(replicates), options.threads, [&](std::size_t m) -> Pair {
            const auto r = resample_rows(inputs, seed, m);
            try {
                auto b = iv::iv_estimate(r[1], r[2], r[3], options.iv).beta;
                auto b_rep = iv::iv_estimate(r[0], r[2], r[3], options.iv).beta;
                return Pair(std::in_place, std::move(b), std::move(b_rep));
            } catch (const WeakInstrument&) {
                return std::nullopt;
            } catch (const RankDeficient&) {
                return std::nullopt;
            }
        });

    long ok = 0;
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(out.beta_iv.rows(), out.beta_iv.cols());
    Eigen::MatrixXd diff_sum = sum;
    for (const auto& d : draws) {
        if (!d) continue;
        sum += d->first;
        diff_sum += d->second - d->first;
        ++ok;
    }
    out.failed_replicates = replicates - ok;
    if (static_cast<double>(out.failed_replicates) > kMaxFailureShare * static_cast<double>(replicates) ||
        ok < 2)
        throw TooManyFailures(out.failed_replicates, replicates,
                              std::to_string(out.failed_replicates) + " of " +
                                  std::to_string(replicates) + " bootstrap replicates failed");

    const double count = static_cast<double>(ok);
    const Eigen::MatrixXd mean = sum / count;
    out.bias = diff_sum / count;
    Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(mean.rows(), mean.cols());
    Eigen::MatrixXd diff_sq = sq;
    for (const auto& d : draws) {
        if (!d) continue;
        sq.array() += (d->first - mean).array().square();
        diff_sq.array() += (d->second - d->first - out.bias).array().square();
    }
    out.variance = sq / (count - 1.0);
    out.bias_sd = (diff_sq / (count - 1.0)).cwiseSqrt();
    out.mse_like = out.variance + out.bias.cwiseAbs2();
    return out;
}

inline ReliabilityReport reliability(const Dataset& data, const Eigen::MatrixXd& z,
                                     const Eigen::MatrixXd& z_repaired, long replicates,
                                     std::uint64_t seed, const ReliabilityOptions& options = {}) {
    regress::require_centered(data);
    if (z.rows() != data.rows()) throw ShapeError("instrument rows must match dataset");
    return reliability(z, z_repaired, data.role(Role::X), data.role(Role::Y), replicates, seed, options);
}

}  // namespace ivkit::bootstrap
