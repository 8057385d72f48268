#pragma once

#include "mragnn/matrix.hpp"
#include "mragnn/neighbor_graph.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace mragnn {

/// A fingerprint minutia: normalized position and ridge orientation in radians.
struct Minutia {
    double x = 0.0;
    double y = 0.0;
    double d = 0.0;

    friend bool operator==(const Minutia&, const Minutia&) = default;
};

/// Wraps an angle into [0, 2*pi).
double wrap_orientation(double radians);

/// Spatial Euclidean distance; orientation does not enter the metric.
double minutia_distance(const Minutia& a, const Minutia& b);

/// N x 2 matrix of (x, y).
Matrix minutia_positions(std::span<const Minutia> minutiae);
/// N x 3 matrix of (x, y, d).
Matrix minutia_features(std::span<const Minutia> minutiae);

/// Exact k-NN over the rows of `points` (Euclidean).
///
/// Each vertex lists min(k, N-1) other vertices ordered by ascending distance,
/// ties by ascending index. Throws on an empty point set or k == 0.
NeighborGraph knn_graph(const Matrix& points, std::size_t k);

/// k nearest rows of `sources` for each row of `queries` (no self exclusion).
NeighborGraph knn_query(const Matrix& queries, const Matrix& sources, std::size_t k);

/// Picks ranks rate, 2*rate, ..., k*rate (1-based) from each sorted candidate list.
/// Lists shorter than k*rate yield fewer neighbors.
NeighborGraph select_dilated(const NeighborGraph& ranking, std::size_t k, std::size_t rate);

/// k-NN with dilation: the k*rate nearest, keeping every rate-th.
NeighborGraph dilated_neighbors(const Matrix& points, std::size_t k, std::size_t rate);

/// Minutia graph over spatial positions.
NeighborGraph minutia_graph(std::span<const Minutia> minutiae, std::size_t k);

/// k-NN over a batch of embedding rows; requires at least two rows.
NeighborGraph fingerprint_graph(const Matrix& embeddings, std::size_t k);

/// Per-layer dilation rates ceil(l/4) for l = 1..layers, or all ones when disabled.
std::vector<std::size_t> dilation_plan(std::size_t layers, bool enabled);

} // namespace mragnn
