#include "mragnn/neighbor_graph.hpp"

#include "mragnn/error.hpp"

#include <algorithm>
#include <string>

namespace mragnn {

NeighborGraph::NeighborGraph(std::size_t source_count, std::vector<std::size_t> offsets,
                             std::vector<std::size_t> indices)
    : source_count_(source_count), offsets_(std::move(offsets)), indices_(std::move(indices)) {
    if (offsets_.empty() || offsets_.front() != 0 || offsets_.back() != indices_.size()) {
        throw ValidationError("NeighborGraph: offsets do not delimit the index list");
    }
    if (!std::is_sorted(offsets_.begin(), offsets_.end())) {
        throw ValidationError("NeighborGraph: offsets must be non-decreasing");
    }
    for (std::size_t j : indices_) {
        if (j >= source_count_) {
            throw ValidationError("NeighborGraph: neighbor index " + std::to_string(j) + " out of range " +
                                  std::to_string(source_count_));
        }
    }
}

NeighborGraph NeighborGraph::from_lists(std::size_t source_count, const std::vector<std::vector<std::size_t>>& lists) {
    std::vector<std::size_t> offsets{0};
    std::vector<std::size_t> indices;
    for (const auto& list : lists) {
        indices.insert(indices.end(), list.begin(), list.end());
        offsets.push_back(indices.size());
    }
    return NeighborGraph(source_count, std::move(offsets), std::move(indices));
}

std::size_t NeighborGraph::fan_out() const {
    std::size_t widest = 0;
    for (std::size_t v = 0; v < vertex_count(); ++v) widest = std::max(widest, offsets_[v + 1] - offsets_[v]);
    return widest;
}

bool NeighborGraph::has_self_loops() const {
    for (std::size_t v = 0; v < vertex_count(); ++v) {
        for (std::size_t j : neighbors(v)) {
            if (j == v) return true;
        }
    }
    return false;
}

} // namespace mragnn
