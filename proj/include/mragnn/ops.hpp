#pragma once

#include "mragnn/neighbor_graph.hpp"
#include "mragnn/tape.hpp"

#include <cstddef>
#include <utility>
#include <vector>

namespace mragnn {

/// Train mode uses batch statistics; infer mode uses running statistics.
enum class Mode { train, infer };

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;
inline constexpr double kNormalizeFloor = 1e-12;

/// Per-channel running statistics of a batch-norm layer (1xC each).
struct RunningStats {
    Matrix mean;
    Matrix var;

    static RunningStats fresh(std::size_t channels);
    friend bool operator==(const RunningStats&, const RunningStats&) = default;
};

/// Biased per-channel mean/variance of one training batch.
struct BatchMoments {
    Matrix mean;
    Matrix var;
};

/// running <- momentum*running + (1-momentum)*batch.
void update_running_stats(RunningStats& running, const BatchMoments& batch);

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);

/// x * Phi(x), Phi from the error function (not the tanh approximation).
Var gelu(Var x);
/// max(x, 0); derivative at 0 is taken as 0.
Var relu(Var x);

Var concat_cols(Var a, Var b);
/// Vertical stacking; all parts share a column count.
Var stack_rows(const std::vector<Var>& parts);
/// out.row(k) = x.row(indices[k]); backward scatter-adds.
Var gather_rows(Var x, const std::vector<std::size_t>& indices);

/// Per-vertex, per-channel maximum over the vertex's edge rows.
///
/// `edge_values` has one row per flattened edge of `graph`. The lowest edge
/// index wins ties; a vertex with no edges yields a zero row.
Var neighbor_max(const NeighborGraph& graph, Var edge_values);

/// Per-column maximum over all rows (1xC). Lowest row wins ties; 0 rows -> zeros.
Var column_max(Var x);

/// Batch normalization over rows with affine scale/shift (1xC each).
///
/// Train mode normalizes with the biased batch moments and reports them in
/// `observed` (may be null). With a single row the batch variance is zero, so
/// train mode falls back to `running` and emits a diagnostic.
Var batchnorm(Var x, Var scale, Var shift, const RunningStats& running, Mode mode, BatchMoments* observed);
/// Same, updating `running` in place in train mode.
Var batchnorm(Var x, Var scale, Var shift, RunningStats& running, Mode mode);

/// Each row divided by max(norm, 1e-12); rows with norm below 1e-12 become zero.
Var l2_normalize_rows(Var x);

/// Sum of all entries (1x1).
Var sum(Var x);
/// Mean of all entries (1x1).
Var mean(Var x);

/// Euclidean distance between row pairs of x (Px1). Gradient at zero distance is 0.
Var pair_distances(Var x, const std::vector<std::pair<std::size_t, std::size_t>>& pairs);

} // namespace mragnn
