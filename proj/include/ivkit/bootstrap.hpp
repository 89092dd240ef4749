#pragma once

// Deterministic row resampling and a parallel replicate runner. Each
// replicate's random stream is derived from (seed, replicate index) alone, so
// results do not depend on how replicates are scheduled.

#include <algorithm>
#include <cstdint>
#include <exception>
#include <functional>
#include <random>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "ivkit/dataset.hpp"
#include "ivkit/errors.hpp"

namespace ivkit::bootstrap {

using RowIndex = std::vector<Eigen::Index>;

/// SplitMix64 finalizer applied to a (seed, index) pair.
inline std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t replicate_index) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (replicate_index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// n row indices drawn i.i.d. uniformly with replacement.
inline RowIndex resample_indices(Eigen::Index n, std::uint64_t seed, std::uint64_t replicate_index) {
    if (n < 1) throw ShapeError("cannot resample zero rows");
    std::mt19937_64 gen(replicate_seed(seed, replicate_index));
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    RowIndex idx(static_cast<std::size_t>(n));
    for (auto& i : idx) i = pick(gen);
    return idx;
}

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const RowIndex& idx) {
    return m(idx, Eigen::all);
}

/// Applies one index vector to every matrix. All inputs must share a row count.
inline std::vector<Eigen::MatrixXd> resample_rows(const std::vector<Eigen::MatrixXd>& blocks,
                                                  std::uint64_t seed, std::uint64_t replicate_index) {
    if (blocks.empty()) return {};
    const Eigen::Index n = blocks.front().rows();
    for (const auto& b : blocks) {
        if (b.rows() != n) throw ShapeError("resampled blocks must share a row count");
    }
    const RowIndex idx = resample_indices(n, seed, replicate_index);
    std::vector<Eigen::MatrixXd> out;
    out.reserve(blocks.size());
    for (const auto& b : blocks) out.push_back(take_rows(b, idx));
    return out;
}

struct Resample {
    Dataset data;
    std::vector<Eigen::MatrixXd> extra;
};

/// Resamples a dataset together with row-aligned extra blocks. The copy is
/// not re-centered and is flagged uncentered.
inline Resample resample(const Dataset& data, const std::vector<Eigen::MatrixXd>& extra,
                         std::uint64_t seed, std::uint64_t replicate_index) {
    for (const auto& b : extra) {
        if (b.rows() != data.rows()) throw ShapeError("extra columns must align with dataset rows");
    }
    const RowIndex idx = resample_indices(data.rows(), seed, replicate_index);
    std::vector<Eigen::MatrixXd> out;
    out.reserve(extra.size());
    for (const auto& b : extra) out.push_back(take_rows(b, idx));
    return Resample{data.with_values(take_rows(data.values(), idx), false), std::move(out)};
}

inline unsigned resolve_threads(unsigned requested) {
    if (requested > 0) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Evaluates fn(0..count-1) on up to `threads` workers (0 = hardware) and
/// returns results in index order. The first exception, by index, is rethrown.
template <typename T>
std::vector<T> run_replicates(std::size_t count, unsigned threads,
                              const std::function<T(std::size_t)>& fn) {
    std::vector<T> results(count);
    std::vector<std::exception_ptr> errors(count);
    const unsigned workers = static_cast<unsigned>(
        std::min<std::size_t>(resolve_threads(threads), std::max<std::size_t>(count, 1)));
    auto work = [&](unsigned worker) {
        for (std::size_t i = worker; i < count; i += workers) {
            try {
                results[i] = fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return results;
}

}  // namespace ivkit::bootstrap
