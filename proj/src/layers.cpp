#include "mragnn/layers.hpp"

#include "mragnn/error.hpp"
#include "mragnn/graph.hpp"

#include <string>

namespace mragnn {

void GcnBlockConfig::validate() const {
    if (layers < 1) throw ValidationError("gcn block: layer count must be at least 1");
    if (width < 1) throw ValidationError("gcn block: width must be at least 1");
    if (fan_out < 1) throw ValidationError("gcn block: fan-out must be at least 1");
}

Var edge_features(Var targets, Var sources, const NeighborGraph& graph, const EdgeConvWeights& w) {
    const Matrix& theta = w.theta.value();
    const Matrix& phi = w.phi.value();
    if (!theta.same_shape(phi)) throw ShapeError("edge_features: theta and phi shapes differ");
    if (targets.cols() != theta.rows() || sources.cols() != theta.rows()) {
        throw ShapeError("edge_features: feature width " + std::to_string(targets.cols()) + " does not match theta " +
                         theta.shape_string());
    }
    if (graph.vertex_count() != targets.rows() || graph.source_count() != sources.rows()) {
        throw ShapeError("edge_features: graph does not match feature rows");
    }
    // theta(x_j - x_i) + phi x_i == theta x_j + (phi - theta) x_i, evaluated per vertex then gathered per edge.
    const Var from_source = matmul(sources, w.theta);
    const Var from_target = matmul(targets, sub(w.phi, w.theta));
    std::vector<std::size_t> target_rows;
    target_rows.reserve(graph.edge_count());
    for (std::size_t v = 0; v < graph.vertex_count(); ++v) target_rows.insert(target_rows.end(), graph.neighbors(v).size(), v);
    return gelu(add(gather_rows(from_source, graph.indices()), gather_rows(from_target, target_rows)));
}

Var edge_features(Var x, const NeighborGraph& graph, const EdgeConvWeights& w) {
    return edge_features(x, x, graph, w);
}

Var edge_conv(Var targets, Var sources, const NeighborGraph& graph, const EdgeConvWeights& w) {
    const Var edges = edge_features(targets, sources, graph, w);
    const Var aggregated = neighbor_max(graph, edges);
    const Matrix& update = w.update.value();
    if (update.rows() != targets.cols() + aggregated.cols()) {
        throw ShapeError("edge_conv: update weight " + update.shape_string() + " does not accept " +
                         std::to_string(targets.cols() + aggregated.cols()) + " inputs");
    }
    return matmul(concat_cols(targets, aggregated), w.update);
}

Var edge_conv(Var x, const NeighborGraph& graph, const EdgeConvWeights& w) { return edge_conv(x, x, graph, w); }

Var apply_norm(Var x, const NormWeights& norm, Mode mode) {
    if (norm.running == nullptr) throw ValidationError("apply_norm: missing running statistics");
    return batchnorm(x, norm.scale, norm.shift, *norm.running, mode, norm.observed);
}

GcnBlockOutput gcn_block(Var x, const NeighborGraph& ranking, const GcnBlockConfig& config,
                         std::span<const GcnLayerWeights> weights, Mode mode) {
    config.validate();
    if (weights.size() != config.layers) {
        throw ShapeError("gcn_block: " + std::to_string(weights.size()) + " weight sets for " +
                         std::to_string(config.layers) + " layers");
    }
    if (x.cols() != config.width) throw ShapeError("gcn_block: input width does not match config");
    if (ranking.vertex_count() != x.rows()) throw ShapeError("gcn_block: ranking does not match vertex count");

    const auto rates = dilation_plan(config.layers, config.dilation);
    GcnBlockOutput out;
    out.snapshots.reserve(config.layers);
    out.layer_inputs.reserve(config.layers);
    NeighborGraph graph;
    std::size_t graph_rate = 0;
    for (std::size_t l = 0; l < config.layers; ++l) {
        if (rates[l] != graph_rate) {
            graph = select_dilated(ranking, config.fan_out, rates[l]);
            graph_rate = rates[l];
        }
        out.layer_inputs.push_back(x.value());
        const Var y = gelu(apply_norm(edge_conv(x, graph, weights[l].conv), weights[l].norm, mode));
        x = config.residual ? add(y, x) : y;
        out.snapshots.push_back(x.value());
    }
    out.features = x;
    return out;
}

Var ffm(Var x, const FfmWeights& w) {
    const Matrix& w1 = w.w1.value();
    const Matrix& w2 = w.w2.value();
    if (w1.rows() != x.cols() || w2.cols() != x.cols() || w1.cols() != w2.rows()) {
        throw ShapeError("ffm: weights " + w1.shape_string() + ", " + w2.shape_string() + " do not fit width " +
                         std::to_string(x.cols()));
    }
    return add(matmul(gelu(matmul(x, w.w1)), w.w2), x);
}

} // namespace mragnn
