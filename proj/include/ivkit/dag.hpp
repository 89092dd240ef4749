#pragma once

// Block-structured causal DAGs. Nodes are blocks of columns; each edge carries
// a parent-width x child-width coefficient matrix.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ivkit/errors.hpp"
#include "ivkit/role.hpp"

namespace ivkit::dag {

struct Block {
    std::string name;
    int width = 1;
    Role role = Role::Latent;
    std::vector<double> noise_scales;  // one standard deviation per column
};

struct Edge {
    std::string parent;
    std::string child;
    Eigen::MatrixXd coefficients;  // parent width x child width
};

class BlockGraph {
public:
    BlockGraph() = default;

    /// Adds a block with the given noise scale on every column.
    BlockGraph& add_block(std::string name, int width, Role role, double noise_scale = 1.0) {
        return add_block(std::move(name), width, role,
                         std::vector<double>(static_cast<std::size_t>(std::max(width, 0)), noise_scale));
    }

    BlockGraph& add_block(std::string name, int width, Role role, std::vector<double> noise_scales) {
        if (name.empty()) throw GraphError("block name must be non-empty");
        if (width <= 0) throw GraphError("block '" + name + "' must have positive width");
        if (find(name) >= 0) throw GraphError("duplicate block '" + name + "'");
        if (noise_scales.size() != static_cast<std::size_t>(width))
            throw GraphError("block '" + name + "' needs one noise scale per column");
        for (double s : noise_scales) {
            if (!(s > 0.0) || !std::isfinite(s))
                throw GraphError("block '" + name + "' noise scales must be positive and finite");
        }
        blocks_.push_back(Block{std::move(name), width, role, std::move(noise_scales)});
        return *this;
    }

    BlockGraph& add_edge(const std::string& parent, const std::string& child,
                         Eigen::MatrixXd coefficients) {
        const int p = find(parent);
        const int c = find(child);
        if (p < 0) throw GraphError("edge references unknown block '" + parent + "'");
        if (c < 0) throw GraphError("edge references unknown block '" + child + "'");
        if (p == c) throw GraphError("self-edge on block '" + parent + "'");
        for (const auto& e : edges_) {
            if (e.parent == parent && e.child == child)
                throw GraphError("duplicate edge " + parent + " -> " + child);
        }
        if (coefficients.rows() != blocks_[p].width || coefficients.cols() != blocks_[c].width)
            throw GraphError("edge " + parent + " -> " + child + " coefficient matrix must be " +
                             std::to_string(blocks_[p].width) + " x " +
                             std::to_string(blocks_[c].width));
        if (!coefficients.allFinite())
            throw GraphError("edge " + parent + " -> " + child + " has non-finite coefficients");
        edges_.push_back(Edge{parent, child, std::move(coefficients)});
        return *this;
    }

    /// Scalar edge between width-1 blocks, or a uniform fill for wider blocks.
    BlockGraph& add_edge(const std::string& parent, const std::string& child, double coefficient) {
        const int p = find(parent);
        const int c = find(child);
        if (p < 0 || c < 0) throw GraphError("edge " + parent + " -> " + child + " references unknown block");
        return add_edge(parent, child,
                        Eigen::MatrixXd::Constant(blocks_[p].width, blocks_[c].width, coefficient));
    }

    const std::vector<Block>& blocks() const noexcept { return blocks_; }
    const std::vector<Edge>& edges() const noexcept { return edges_; }

    /// Declaration index of a block, or -1.
    int find(const std::string& name) const {
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            if (blocks_[i].name == name) return static_cast<int>(i);
        }
        return -1;
    }

    const Block& block(const std::string& name) const {
        const int i = find(name);
        if (i < 0) throw GraphError("unknown block '" + name + "'");
        return blocks_[static_cast<std::size_t>(i)];
    }

    const Edge* edge(const std::string& parent, const std::string& child) const {
        for (const auto& e : edges_) {
            if (e.parent == parent && e.child == child) return &e;
        }
        return nullptr;
    }

private:
    std::vector<Block> blocks_;
    std::vector<Edge> edges_;
};

/// Topological order of the blocks. Among blocks whose parents are all placed,
/// the earliest-declared goes first, so the order is deterministic.
inline std::vector<std::string> sort_blocks(const BlockGraph& graph) {
    const auto& blocks = graph.blocks();
    const std::size_t count = blocks.size();
    std::vector<std::vector<std::size_t>> children(count);
    std::vector<std::vector<std::size_t>> parents(count);
    std::vector<int> pending(count, 0);
    for (const auto& e : graph.edges()) {
        const auto p = static_cast<std::size_t>(graph.find(e.parent));
        const auto c = static_cast<std::size_t>(graph.find(e.child));
        children[p].push_back(c);
        parents[c].push_back(p);
        ++pending[c];
    }

    std::vector<bool> placed(count, false);
    std::vector<std::string> order;
    order.reserve(count);
    while (order.size() < count) {
        std::size_t next = count;
        for (std::size_t i = 0; i < count; ++i) {
            if (!placed[i] && pending[i] == 0) {
                next = i;
                break;
            }
        }
        if (next == count) {
            // Every unplaced block has an unplaced parent; walking parents
            // must revisit a block, and that block lies on a cycle.
            std::size_t at = 0;
            while (placed[at]) ++at;
            std::vector<bool> seen(count, false);
            while (!seen[at]) {
                seen[at] = true;
                for (std::size_t p : parents[at]) {
                    if (!placed[p]) {
                        at = p;
                        break;
                    }
                }
            }
            throw CycleError(blocks[at].name,
                             "graph has a cycle through block '" + blocks[at].name + "'");
        }
        placed[next] = true;
        order.push_back(blocks[next].name);
        for (std::size_t c : children[next]) --pending[c];
    }
    return order;
}

}  // namespace ivkit::dag
