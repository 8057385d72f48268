#pragma once

#include "mragnn/gradcheck.hpp"
#include "mragnn/graph.hpp"
#include "mragnn/layers.hpp"

#include <cstddef>
#include <cstdint>
#include <deque>
#include <utility>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace mragnn {

/// Architecture of both levels. Desk-scale defaults.
struct ModelConfig {
    std::size_t width = 64;        ///< C, vertex width inside the minutia-level block
    std::size_t embed_dim = 128;   ///< D, embedding width at both levels
    std::size_t trm_layers = 6;
    std::size_t cam_layers = 3;
    std::size_t k_minutia = 10;
    std::size_t k_fingerprint = 10;
    std::size_t ffm_hidden = 256;
    bool dilation = true;
    bool residual = true;
    bool ffm = true;
    bool centering = true;  ///< subtract the minutia centroid before the stem projection

    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class EmbeddingLevel { minutia, fingerprint };

struct Embedding {
    std::vector<double> values;
    EmbeddingLevel level = EmbeddingLevel::fingerprint;
};

/// Batch moments observed during a train-mode forward pass, in recording order.
struct ForwardStats {
    std::deque<std::pair<std::string, BatchMoments>> moments;
};

/// All learnable arrays plus running normalization statistics.
class ParameterSet {
public:
    ParameterSet() = default;
    ParameterSet(ModelConfig config, NamedArrays weights, std::map<std::string, RunningStats> running);

    /// Random LeCun-normal weights, unit batch-norm scales, zero shifts.
    static ParameterSet initialize(const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    NamedArrays& weights() { return weights_; }
    const NamedArrays& weights() const { return weights_; }
    std::map<std::string, RunningStats>& running() { return running_; }
    const std::map<std::string, RunningStats>& running() const { return running_; }

    const Matrix& weight(const std::string& name) const;
    const RunningStats& running_stats(const std::string& name) const;

    /// Folds observed batch moments into the running statistics in recording order.
    void apply(const ForwardStats& stats);

    friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

private:
    ModelConfig config_;
    NamedArrays weights_;
    std::map<std::string, RunningStats> running_;
};

/// Minutia-level embedding m_F (1xD) of one fingerprint.
///
/// Minutiae are put in a canonical order first, so any permutation of the
/// input gives a bit-identical result. Throws DataQualityError below two
/// minutiae. `stats` receives batch moments in train mode (may be null).
Var trm_forward(Tape& tape, std::span<const Minutia> minutiae, const ParameterSet& params, Mode mode,
                ForwardStats* stats);

/// Per-layer state of a fingerprint-level pass, in input row order.
struct CamTrace {
    NeighborGraph ranking;
    std::vector<Matrix> layer_inputs;
    std::vector<Matrix> snapshots;
};

/// Fingerprint-level embeddings M_F (BxD, unit rows) for a batch of m_F rows.
///
/// Row i of the output belongs to row i of the input. Throws DataQualityError
/// for batches smaller than two.
Var cam_forward(Tape& tape, Var minutia_embeddings, const ParameterSet& params, Mode mode, ForwardStats* stats,
                CamTrace* trace = nullptr);

/// Both levels on one tape: stacks trm_forward rows and runs cam_forward.
Var embed_batch(Tape& tape, const std::vector<std::vector<Minutia>>& fingerprints, const ParameterSet& params,
                Mode mode, ForwardStats* stats);

/// Inference helpers (no gradients).
Matrix minutia_embeddings(const std::vector<std::vector<Minutia>>& fingerprints, const ParameterSet& params);
Matrix embed_batch(const std::vector<std::vector<Minutia>>& fingerprints, const ParameterSet& params);

/// Reference set for single-query inference: the gallery's m_F rows and the
/// inputs of each fingerprint-level layer, computed in infer mode.
class Gallery {
public:
    static Gallery build(const Matrix& minutia_embeddings, const ParameterSet& params);

    std::size_t size() const { return minutia_embeddings_.rows(); }
    const Matrix& minutia_embeddings() const { return minutia_embeddings_; }
    /// Fingerprint-level embeddings of the gallery itself.
    const Matrix& embeddings() const { return embeddings_; }
    const std::vector<Matrix>& layer_inputs() const { return layer_inputs_; }
    /// In-batch candidate ranking of each gallery member.
    const NeighborGraph& ranking() const { return ranking_; }

private:
    Matrix minutia_embeddings_;
    Matrix embeddings_;
    std::vector<Matrix> layer_inputs_;
    NeighborGraph ranking_;
};

/// Fingerprint-level inference for a single query vertex attached to the gallery
/// through `ranking` (one vertex, sources = gallery rows). Returns 1xD.
Matrix cam_query(const Matrix& query_minutia_embedding, const Gallery& gallery, const NeighborGraph& ranking,
                 const ParameterSet& params);

/// Embeds one fingerprint against a gallery: its neighborhood is the nearest
/// gallery m_F rows. A query whose m_F equals a gallery row exactly gets that
/// member's in-gallery embedding. Requires at least k_fingerprint gallery entries.
Embedding embed_with_gallery(std::span<const Minutia> query, const Gallery& gallery, const ParameterSet& params);

/// Depth of the candidate ranking a block with this fan-out and plan needs.
std::size_t ranking_depth(std::size_t fan_out, std::size_t layers, bool dilation);

} // namespace mragnn
