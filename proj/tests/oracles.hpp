// Brute-force reference implementations used by the unit and acceptance tests.
#pragma once

#include "mragnn/evaluation.hpp"
#include "mragnn/graph.hpp"
#include "mragnn/matrix.hpp"
#include "mragnn/rng.hpp"
#include "mragnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <tuple>
#include <vector>

namespace oracle {

using mragnn::Matrix;

inline Matrix random_matrix(std::size_t rows, std::size_t cols, mragnn::Rng& rng, double sd = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = sd * rng.normal();
    return m;
}

inline Matrix random_uniform(std::size_t rows, std::size_t cols, mragnn::Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = rng.uniform();
    return m;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            out(i, j) = s;
        }
    return out;
}

inline double sq_dist(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) s += (a(i, c) - b(j, c)) * (a(i, c) - b(j, c));
    return s;
}

/// Every other point ordered by (squared distance, index).
inline std::vector<std::size_t> full_ranking(const Matrix& points, std::size_t i) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t j = 0; j < points.rows(); ++j)
        if (j != i) all.emplace_back(sq_dist(points, i, points, j), j);
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> out;
    for (const auto& [d, j] : all) out.push_back(j);
    return out;
}

inline std::vector<std::vector<std::size_t>> knn(const Matrix& points, std::size_t k) {
    std::vector<std::vector<std::size_t>> lists;
    for (std::size_t i = 0; i < points.rows(); ++i) {
        auto r = full_ranking(points, i);
        r.resize(std::min(r.size(), k));
        lists.push_back(r);
    }
    return lists;
}

/// Ranks r, 2r, ..., kr of the full ranking (1-based), as far as they exist.
inline std::vector<std::vector<std::size_t>> dilated(const Matrix& points, std::size_t k, std::size_t rate) {
    std::vector<std::vector<std::size_t>> lists;
    for (std::size_t i = 0; i < points.rows(); ++i) {
        const auto r = full_ranking(points, i);
        std::vector<std::size_t> pick;
        for (std::size_t pos = rate; pos <= r.size() && pick.size() < k; pos += rate) pick.push_back(r[pos - 1]);
        lists.push_back(pick);
    }
    return lists;
}

inline std::vector<std::vector<std::size_t>> lists_of(const mragnn::NeighborGraph& g) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t v = 0; v < g.vertex_count(); ++v) out.emplace_back(g.neighbors(v).begin(), g.neighbors(v).end());
    return out;
}

inline Matrix pairwise(const Matrix& e) {
    Matrix d(e.rows(), e.rows());
    for (std::size_t i = 0; i < e.rows(); ++i)
        for (std::size_t j = 0; j < e.rows(); ++j) d(i, j) = std::sqrt(sq_dist(e, i, e, j));
    return d;
}

/// Exhaustive search over all (a, p, n): per label, the triplet minimizing
/// (d(a,p), a, p, d(a,n), n) with a < p. Semi-hard restricts n to the band first.
inline std::vector<mragnn::Triplet> mine(const Matrix& e, const std::vector<std::int64_t>& labels, double margin,
                                         mragnn::MiningMode mode) {
    const Matrix d = pairwise(e);
    std::set<std::int64_t> distinct(labels.begin(), labels.end());
    std::vector<mragnn::Triplet> out;
    for (std::int64_t label : distinct) {
        using Key = std::tuple<double, std::size_t, std::size_t>;
        std::optional<Key> best_pair;
        for (std::size_t a = 0; a < labels.size(); ++a)
            for (std::size_t p = a + 1; p < labels.size(); ++p)
                if (labels[a] == label && labels[p] == label) {
                    const Key k{d(a, p), a, p};
                    if (!best_pair || k < *best_pair) best_pair = k;
                }
        if (!best_pair) continue;
        const auto [dap, a, p] = *best_pair;
        std::optional<std::pair<double, std::size_t>> hardest;
        std::optional<std::pair<double, std::size_t>> semi;
        for (std::size_t n = 0; n < labels.size(); ++n) {
            if (labels[n] == label) continue;
            const std::pair<double, std::size_t> k{d(a, n), n};
            if (!hardest || k < *hardest) hardest = k;
            if (d(a, n) > dap && d(a, n) < dap + margin && (!semi || k < *semi)) semi = k;
        }
        if (!hardest) continue;
        const std::size_t n = (mode == mragnn::MiningMode::semi_hard && semi) ? semi->second : hardest->second;
        out.push_back({a, p, n});
    }
    return out;
}

inline std::vector<double> distinct_scores(const mragnn::ScoreSet& s) {
    std::vector<double> all = s.genuine;
    all.insert(all.end(), s.impostor.begin(), s.impostor.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    return all;
}

inline double rate_at_least(const std::vector<double>& xs, double t) {
    std::size_t c = 0;
    for (double x : xs) c += x >= t ? 1 : 0;
    return static_cast<double>(c) / static_cast<double>(xs.size());
}

/// Smallest observed score whose impostor accept count is within the budget.
inline double tar(const mragnn::ScoreSet& s, double far) {
    const auto budget = static_cast<std::size_t>(std::floor(far * static_cast<double>(s.impostor.size()) + 1e-9));
    for (double t : distinct_scores(s)) {
        std::size_t accepted = 0;
        for (double x : s.impostor) accepted += x >= t ? 1 : 0;
        if (accepted <= budget) return rate_at_least(s.genuine, t);
    }
    return 0.0;
}

/// FAR/FRR at every distinct score and +inf; the sign change of FAR - FRR is
/// located by scanning all adjacent pairs.
inline double eer(const mragnn::ScoreSet& s) {
    std::vector<double> ts = distinct_scores(s);
    ts.push_back(std::numeric_limits<double>::infinity());
    std::vector<double> far;
    std::vector<double> frr;
    for (double t : ts) {
        far.push_back(rate_at_least(s.impostor, t));
        std::size_t rejected = 0;
        for (double x : s.genuine) rejected += x < t ? 1 : 0;
        frr.push_back(static_cast<double>(rejected) / static_cast<double>(s.genuine.size()));
    }
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if (far[i] - frr[i] == 0.0) return far[i];
        if (i > 0 && far[i - 1] - frr[i - 1] > 0.0 && far[i] - frr[i] < 0.0) {
            const double d0 = far[i - 1] - frr[i - 1];
            const double d1 = far[i] - frr[i];
            const double alpha = d0 / (d0 - d1);
            return 0.5 * ((1.0 - alpha) * (far[i - 1] + frr[i - 1]) + alpha * (far[i] + frr[i]));
        }
    }
    return std::numeric_limits<double>::quiet_NaN();
}

inline double dot(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) s += a(i, c) * b(j, c);
    return s;
}

/// Full ranking by (-similarity, index); accuracy = rank of first mate <= k.
inline std::map<std::size_t, double> topk(const Matrix& probes, const std::vector<std::int64_t>& pl,
                                          const Matrix& gallery, const std::vector<std::int64_t>& gl,
                                          const std::vector<std::size_t>& ks) {
    std::map<std::size_t, double> acc;
    for (std::size_t k : ks) acc[k] = 0.0;
    for (std::size_t p = 0; p < probes.rows(); ++p) {
        std::vector<std::pair<double, std::size_t>> order;
        for (std::size_t g = 0; g < gallery.rows(); ++g) order.emplace_back(-dot(probes, p, gallery, g), g);
        std::sort(order.begin(), order.end());
        std::size_t rank = 0;
        while (gl[order[rank].second] != pl[p]) ++rank;
        for (std::size_t k : ks) acc[k] += rank + 1 <= k ? 1.0 : 0.0;
    }
    for (auto& [k, v] : acc) v /= static_cast<double>(probes.rows());
    return acc;
}

inline double diversity(const Matrix& x) {
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.rows(); ++j)
            if (i < j) {
                total += std::sqrt(sq_dist(x, i, x, j));
                ++pairs;
            }
    return total / static_cast<double>(pairs);
}

inline Matrix unit_rows(std::size_t rows, std::size_t cols, mragnn::Rng& rng) {
    Matrix m = random_matrix(rows, cols, rng);
    for (std::size_t i = 0; i < rows; ++i) {
        double n = 0.0;
        for (double v : m.row(i)) n += v * v;
        n = std::sqrt(n);
        for (double& v : m.row(i)) v /= n;
    }
    return m;
}

} // namespace oracle
