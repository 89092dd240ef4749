#pragma once

#include <cmath>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ivkit/errors.hpp"
#include "ivkit/role.hpp"

namespace ivkit {

/// A named contiguous group of dataset columns sharing one role.
struct BlockInfo {
    std::string name;
    Role role = Role::Latent;
    Eigen::Index first = 0;
    Eigen::Index width = 0;
};

/// Column-named numeric matrix with role-tagged blocks; the carrier of all
/// observations.
class Dataset {
public:
    Dataset(std::vector<std::string> names, Eigen::MatrixXd values, std::vector<BlockInfo> blocks,
            bool centered = false)
        : names_(std::move(names)), values_(std::move(values)), blocks_(std::move(blocks)),
          centered_(centered) {
        validate();
    }

    Eigen::Index rows() const noexcept { return values_.rows(); }
    Eigen::Index cols() const noexcept { return values_.cols(); }
    const Eigen::MatrixXd& values() const noexcept { return values_; }
    const std::vector<std::string>& names() const noexcept { return names_; }
    const std::vector<BlockInfo>& blocks() const noexcept { return blocks_; }
    bool centered() const noexcept { return centered_; }

    const BlockInfo& block_info(const std::string& name) const {
        for (const auto& b : blocks_) {
            if (b.name == name) return b;
        }
        throw RoleError("dataset has no block '" + name + "'");
    }

    bool has_block(const std::string& name) const {
        for (const auto& b : blocks_) {
            if (b.name == name) return true;
        }
        return false;
    }

    Eigen::MatrixXd block(const std::string& name) const {
        const auto& b = block_info(name);
        return values_.middleCols(b.first, b.width);
    }

    /// Horizontal concatenation of the named blocks, in the order given.
    Eigen::MatrixXd blocks(const std::vector<std::string>& names) const {
        Eigen::Index width = 0;
        for (const auto& n : names) width += block_info(n).width;
        Eigen::MatrixXd out(rows(), width);
        Eigen::Index at = 0;
        for (const auto& n : names) {
            const auto& b = block_info(n);
            out.middleCols(at, b.width) = values_.middleCols(b.first, b.width);
            at += b.width;
        }
        return out;
    }

    std::vector<std::string> block_names(Role role) const {
        std::vector<std::string> out;
        for (const auto& b : blocks_) {
            if (b.role == role) out.push_back(b.name);
        }
        return out;
    }

    bool has_role(Role role) const { return !block_names(role).empty(); }

    /// All columns carrying the role, concatenated in block order.
    Eigen::MatrixXd role(Role role) const {
        auto names = block_names(role);
        if (names.empty())
            throw RoleError("dataset has no block with role '" + std::string(to_string(role)) + "'");
        return blocks(names);
    }

    std::vector<std::string> role_column_names(Role role) const {
        std::vector<std::string> out;
        for (const auto& b : blocks_) {
            if (b.role != role) continue;
            for (Eigen::Index j = 0; j < b.width; ++j)
                out.push_back(names_[static_cast<std::size_t>(b.first + j)]);
        }
        return out;
    }

    /// Same columns and roles over new values (e.g. a resample).
    Dataset with_values(Eigen::MatrixXd values, bool centered) const {
        return Dataset(names_, std::move(values), blocks_, centered);
    }

private:
    void validate() const {
        if (values_.rows() < 2) throw DatasetError("dataset needs at least 2 rows");
        if (static_cast<Eigen::Index>(names_.size()) != values_.cols())
            throw DatasetError("column name count does not match value matrix");
        if (!values_.allFinite()) throw DatasetError("dataset contains non-finite values");
        std::set<std::string> unique(names_.begin(), names_.end());
        if (unique.size() != names_.size()) throw DatasetError("column names must be unique");

        std::vector<bool> used(static_cast<std::size_t>(values_.cols()), false);
        std::set<std::string> block_names;
        for (const auto& b : blocks_) {
            if (!block_names.insert(b.name).second)
                throw DatasetError("duplicate block '" + b.name + "'");
            if (b.width <= 0 || b.first < 0 || b.first + b.width > values_.cols())
                throw DatasetError("block '" + b.name + "' is out of range");
            for (Eigen::Index j = b.first; j < b.first + b.width; ++j) {
                auto u = used[static_cast<std::size_t>(j)];
                if (u) throw DatasetError("block '" + b.name + "' overlaps another block");
                u = true;
            }
        }
        if (centered_) {
            const double n = static_cast<double>(values_.rows());
            for (Eigen::Index j = 0; j < values_.cols(); ++j) {
                const double mean = values_.col(j).mean();
                const double sd = std::sqrt((values_.col(j).array() - mean).square().sum() / n);
                if (std::abs(mean) > 1e-12 * (sd + 1.0))
                    throw DatasetError("column '" + names_[static_cast<std::size_t>(j)] +
                                       "' is flagged centered but has nonzero mean");
            }
        }
    }

    std::vector<std::string> names_;
    Eigen::MatrixXd values_;
    std::vector<BlockInfo> blocks_;
    bool centered_ = false;
};

/// Removes every column mean.
inline Dataset center(const Dataset& data) {
    Eigen::MatrixXd v = data.values();
    // Second pass removes the rounding left by the first on large offsets.
    v.rowwise() -= v.colwise().mean();
    v.rowwise() -= v.colwise().mean();
    return data.with_values(std::move(v), true);
}

}  // namespace ivkit
