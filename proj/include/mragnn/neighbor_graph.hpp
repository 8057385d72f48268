#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mragnn {

/// Per-vertex neighbor lists in compressed form.
///
/// Edges are directed (i <- j): vertex i aggregates from each j in neighbors(i).
/// Flattened edge order is (vertex, rank), which is the row order of edge
/// feature matrices. Indices refer to a source set that is the vertex set
/// itself for ordinary graphs, or another set (e.g. a gallery) for bipartite
/// queries.
class NeighborGraph {
public:
    NeighborGraph() = default;
    NeighborGraph(std::size_t source_count, std::vector<std::size_t> offsets, std::vector<std::size_t> indices);

    static NeighborGraph from_lists(std::size_t source_count, const std::vector<std::vector<std::size_t>>& lists);

    std::size_t vertex_count() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
    std::size_t source_count() const { return source_count_; }
    std::size_t edge_count() const { return indices_.size(); }
    /// Longest neighbor list.
    std::size_t fan_out() const;

    std::span<const std::size_t> neighbors(std::size_t vertex) const {
        return {indices_.data() + offsets_[vertex], offsets_[vertex + 1] - offsets_[vertex]};
    }
    std::size_t edge_offset(std::size_t vertex) const { return offsets_[vertex]; }
    const std::vector<std::size_t>& indices() const { return indices_; }
    const std::vector<std::size_t>& offsets() const { return offsets_; }

    bool has_self_loops() const;

    friend bool operator==(const NeighborGraph&, const NeighborGraph&) = default;

private:
    std::size_t source_count_ = 0;
    std::vector<std::size_t> offsets_{0};
    std::vector<std::size_t> indices_;
};

} // namespace mragnn
