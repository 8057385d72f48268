#pragma once

#include "mragnn/neighbor_graph.hpp"
#include "mragnn/ops.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace mragnn {

/// EdgeConv weights bound on a tape. theta/phi: C_in x C_mid, update: (C_in + C_mid) x C_out.
struct EdgeConvWeights {
    Var theta;
    Var phi;
    Var update;
};

/// Batch-norm layer bound on a tape.
struct NormWeights {
    Var scale;
    Var shift;
    const RunningStats* running = nullptr;
    /// Receives the batch moments in train mode; may be null.
    BatchMoments* observed = nullptr;
};

struct FfmWeights {
    Var w1;
    Var w2;
};

struct GcnLayerWeights {
    EdgeConvWeights conv;
    NormWeights norm;
};

struct GcnBlockConfig {
    std::size_t layers = 1;
    std::size_t width = 1;
    std::size_t fan_out = 1;
    bool dilation = true;
    bool residual = true;

    void validate() const;
};

struct GcnBlockOutput {
    Var features;
    /// Vertex features after each layer (layers entries).
    std::vector<Matrix> snapshots;
    /// Input features of each layer (layers entries); used for gallery-anchored queries.
    std::vector<Matrix> layer_inputs;
};

/// e_ij = GeLU(theta^T (x_j - x_i) + phi^T x_i) for every directed edge i <- j.
///
/// `targets` holds x_i (one row per vertex of `graph`), `sources` holds x_j
/// (indexed by the graph's neighbor ids). Rows follow the flattened edge order.
Var edge_features(Var targets, Var sources, const NeighborGraph& graph, const EdgeConvWeights& w);
Var edge_features(Var x, const NeighborGraph& graph, const EdgeConvWeights& w);

/// concat(x_i, max_j e_ij) * update.
Var edge_conv(Var targets, Var sources, const NeighborGraph& graph, const EdgeConvWeights& w);
Var edge_conv(Var x, const NeighborGraph& graph, const EdgeConvWeights& w);

Var apply_norm(Var x, const NormWeights& norm, Mode mode);

/// L layers of GeLU(batchnorm(edge_conv)) with optional vertex-wise residual.
///
/// `ranking` lists each vertex's candidates by ascending distance, deep enough
/// for fan_out * max dilation rate; layer l uses every ceil(l/4)-th candidate
/// when dilation is on.
GcnBlockOutput gcn_block(Var x, const NeighborGraph& ranking, const GcnBlockConfig& config,
                         std::span<const GcnLayerWeights> weights, Mode mode);

/// GeLU(x W1) W2 + x.
Var ffm(Var x, const FfmWeights& w);

} // namespace mragnn
