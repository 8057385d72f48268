#pragma once

#include "mragnn/model.hpp"
#include "mragnn/synthetic.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace mragnn {

/// Inner product of two unit-norm embeddings. Rejects norms off by more than 1e-6.
double similarity(std::span<const double> a, std::span<const double> b);

struct ScoreSet {
    std::vector<double> genuine;
    std::vector<double> impostor;
};

struct TarAtFar {
    double far = 0.0;
    double tar = 0.0;
    double threshold = 0.0;
};

/// Threshold = smallest observed score t with FAR(t) <= far_target, where a
/// score equal to t counts as an accept. TAR = fraction of genuine scores >= t.
TarAtFar tar_at_far(const ScoreSet& scores, double far_target);

/// Equal error rate over the distinct observed scores, interpolating linearly
/// where FAR - FRR changes sign between adjacent thresholds.
double eer(const ScoreSet& scores);

struct IndexingResult {
    /// Gallery indices per probe, by descending similarity (ties: ascending index).
    std::vector<std::vector<std::size_t>> ranked;
    std::vector<std::size_t> ks;
    std::map<std::size_t, double> accuracy;
};

/// Closed-set top-k identification. A probe hits at k when a gallery entry of
/// its identity is among its first k candidates.
IndexingResult topk_accuracy(const Matrix& probes, std::span<const std::int64_t> probe_labels, const Matrix& gallery,
                             std::span<const std::int64_t> gallery_labels, std::span<const std::size_t> ks);

/// Mean pairwise Euclidean distance between rows (at least two).
double vertex_diversity(const Matrix& x);

/// vertex_diversity of each snapshot.
std::vector<double> oversmoothing_curve(const std::vector<Matrix>& snapshots);

/// Final-layer diversity of a randomly initialized width-`width` block on a fixed
/// random point set, optionally with residuals and a trailing FFM.
double oversmoothing_probe(std::uint64_t seed, std::size_t layers, bool residual, bool ffm,
                           std::size_t vertices = 32, std::size_t width = 16, std::size_t k = 8);

struct EvalOptions {
    double far = 0.001;
    std::vector<std::size_t> topk{1, 5, 10};
    std::size_t gallery_impressions = 3;
    std::size_t probe_impressions = 1;
};

struct Metrics {
    TarAtFar tar;
    double eer = 0.0;
    std::map<std::size_t, double> topk;
    std::size_t genuine_count = 0;
    std::size_t impostor_count = 0;
};

/// Scores all probe x gallery pairs of a gallery/probe split.
Metrics score_metrics(const ScoreSet& scores, double far);

/// Per identity the first `gallery_impressions` records form the gallery and the
/// next `probe_impressions` the probes. The gallery is embedded in one batch and
/// each probe against it.
Metrics evaluate(const Dataset& data, const ParameterSet& params, const EvalOptions& options);

} // namespace mragnn
