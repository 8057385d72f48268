#include "mragnn/graph.hpp"

#include "mragnn/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

namespace mragnn {

namespace {

using Candidate = std::pair<double, std::size_t>;

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double sq = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) {
        const double d = a[c] - b[c];
        sq += d * d;
    }
    return sq;
}

void nearest(std::vector<Candidate>& pool, std::size_t k, std::vector<std::size_t>& out) {
    const auto keep = static_cast<std::ptrdiff_t>(std::min(k, pool.size()));
    std::partial_sort(pool.begin(), pool.begin() + keep, pool.end());
    for (std::ptrdiff_t r = 0; r < keep; ++r) out.push_back(pool[static_cast<std::size_t>(r)].second);
}

} // namespace

double wrap_orientation(double radians) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double w = std::fmod(radians, two_pi);
    if (w < 0.0) w += two_pi;
    if (w >= two_pi) w = 0.0;
    return w;
}

double minutia_distance(const Minutia& a, const Minutia& b) { return std::hypot(a.x - b.x, a.y - b.y); }

Matrix minutia_positions(std::span<const Minutia> minutiae) {
    Matrix m(minutiae.size(), 2);
    for (std::size_t i = 0; i < minutiae.size(); ++i) {
        m(i, 0) = minutiae[i].x;
        m(i, 1) = minutiae[i].y;
    }
    return m;
}

Matrix minutia_features(std::span<const Minutia> minutiae) {
    Matrix m(minutiae.size(), 3);
    for (std::size_t i = 0; i < minutiae.size(); ++i) {
        m(i, 0) = minutiae[i].x;
        m(i, 1) = minutiae[i].y;
        m(i, 2) = minutiae[i].d;
    }
    return m;
}

NeighborGraph knn_graph(const Matrix& points, std::size_t k) {
    const std::size_t n = points.rows();
    if (n == 0) throw ValidationError("knn_graph: empty point set");
    if (k == 0) throw ValidationError("knn_graph: k must be at least 1");
    std::vector<std::size_t> offsets{0};
    std::vector<std::size_t> indices;
    indices.reserve(n * std::min(k, n - 1));
    std::vector<Candidate> pool;
    pool.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        pool.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) pool.emplace_back(squared_distance(points.row(i), points.row(j)), j);
        }
        nearest(pool, k, indices);
        offsets.push_back(indices.size());
    }
    return NeighborGraph(n, std::move(offsets), std::move(indices));
}

NeighborGraph knn_query(const Matrix& queries, const Matrix& sources, std::size_t k) {
    if (sources.rows() == 0) throw ValidationError("knn_query: empty source set");
    if (k == 0) throw ValidationError("knn_query: k must be at least 1");
    if (queries.cols() != sources.cols()) throw ShapeError("knn_query: dimension mismatch");
    std::vector<std::size_t> offsets{0};
    std::vector<std::size_t> indices;
    std::vector<Candidate> pool;
    pool.reserve(sources.rows());
    for (std::size_t i = 0; i < queries.rows(); ++i) {
        pool.clear();
        for (std::size_t j = 0; j < sources.rows(); ++j) {
            pool.emplace_back(squared_distance(queries.row(i), sources.row(j)), j);
        }
        nearest(pool, k, indices);
        offsets.push_back(indices.size());
    }
    return NeighborGraph(sources.rows(), std::move(offsets), std::move(indices));
}

NeighborGraph select_dilated(const NeighborGraph& ranking, std::size_t k, std::size_t rate) {
    if (rate == 0) throw ValidationError("select_dilated: rate must be at least 1");
    std::vector<std::size_t> offsets{0};
    std::vector<std::size_t> indices;
    for (std::size_t v = 0; v < ranking.vertex_count(); ++v) {
        const auto list = ranking.neighbors(v);
        for (std::size_t pick = 1; pick <= k && pick * rate <= list.size(); ++pick) {
            indices.push_back(list[pick * rate - 1]);
        }
        offsets.push_back(indices.size());
    }
    return NeighborGraph(ranking.source_count(), std::move(offsets), std::move(indices));
}

NeighborGraph dilated_neighbors(const Matrix& points, std::size_t k, std::size_t rate) {
    if (rate == 0) throw ValidationError("dilated_neighbors: rate must be at least 1");
    if (k == 0) throw ValidationError("dilated_neighbors: k must be at least 1");
    return select_dilated(knn_graph(points, k * rate), k, rate);
}

NeighborGraph minutia_graph(std::span<const Minutia> minutiae, std::size_t k) {
    return knn_graph(minutia_positions(minutiae), k);
}

NeighborGraph fingerprint_graph(const Matrix& embeddings, std::size_t k) {
    if (embeddings.rows() < 2) {
        throw DataQualityError("fingerprint_graph: a batch needs at least two fingerprints");
    }
    return knn_graph(embeddings, k);
}

std::vector<std::size_t> dilation_plan(std::size_t layers, bool enabled) {
    std::vector<std::size_t> rates(layers, 1);
    if (enabled) {
        for (std::size_t l = 1; l <= layers; ++l) rates[l - 1] = (l + 3) / 4;
    }
    return rates;
}

} // namespace mragnn
