#pragma once

#include "mragnn/model.hpp"
#include "mragnn/rng.hpp"
#include "mragnn/synthetic.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace mragnn {

/// hardest: nearest same-label pair plus nearest different-label negative.
/// semi_hard: nearest negative with d(a,p) < d(a,n) < d(a,p) + margin, falling
/// back to the hardest one when none qualifies.
enum class MiningMode { hardest, semi_hard };

struct Triplet {
    std::size_t anchor = 0;
    std::size_t positive = 0;
    std::size_t negative = 0;

    friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct TrainConfig {
    double margin = 0.5;
    double learning_rate = 1e-4;
    double min_learning_rate = 1e-6;
    std::size_t epochs = 30;
    std::size_t batch_identities = 16;   ///< P
    std::size_t batch_impressions = 4;   ///< Q, clamped to what each identity has
    std::size_t schedule_horizon = 0;    ///< optimizer steps; 0 = epochs * batches per epoch
    std::uint64_t seed = 1;
    MiningMode mining = MiningMode::hardest;
    double weight_decay = 0.01;
    double augment_rotation_deg = 15.0;
    double augment_translation = 0.05;

    void validate() const;
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
};

struct OptimizerState {
    NamedArrays first_moment;
    NamedArrays second_moment;
    std::uint64_t step = 0;

    friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double lr = 0.0;
    double active_triplet_fraction = 0.0;
};

struct TrainState {
    ParameterSet params;
    OptimizerState optimizer;
    std::size_t epochs_completed = 0;
    std::vector<EpochRecord> log;
};

/// Euclidean distance matrix between embedding rows.
Matrix pairwise_distances(const Matrix& embeddings);

/// One triplet per identity that has at least two samples in the batch, in
/// ascending label order. The anchor/positive pair is the closest same-label
/// pair (anchor = lower index); ties resolve to the lowest indices.
std::vector<Triplet> mine_triplets(const Matrix& embeddings, std::span<const std::int64_t> labels, double margin,
                                   MiningMode mode = MiningMode::hardest);

/// max(d(a,p) - d(a,n) + margin, 0).
double triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                    std::span<const double> negative, double margin);

/// Mean hinge over `triplets` on rows of `embeddings` (1x1).
Var triplet_loss(Var embeddings, const std::vector<Triplet>& triplets, double margin);

/// lr_min + (lr0 - lr_min) * (1 + cos(pi * step / horizon)) / 2; steps past the horizon give lr_min.
double cosine_lr(std::uint64_t step, double base_lr, double min_lr, std::uint64_t horizon);

/// AdamW: decoupled decay param *= (1 - lr*wd), then the bias-corrected adaptive step.
/// Returns false (and leaves everything untouched) if any gradient is non-finite.
bool optimizer_step(NamedArrays& params, const GradientMap& grads, OptimizerState& state, double lr,
                    const AdamWConfig& config);

/// One global rotation in [-r, r] degrees about the centroid (orientation
/// shifted alike) and one translation in [-t, t] per axis. No clamping.
std::vector<Minutia> augment(std::span<const Minutia> minutiae, double rotation_deg, double translation, Rng& rng);

/// Identity-grouped batches (P identities x up to Q impressions) of one epoch, as record indices.
std::vector<std::vector<std::size_t>> epoch_batches(const Dataset& data, const TrainConfig& config, std::size_t epoch);

struct StepResult {
    bool applied = false;        ///< false for empty-triplet batches or skipped non-finite steps
    double loss = 0.0;
    std::size_t triplets = 0;
    std::size_t active_triplets = 0;
    double lr = 0.0;
};

/// augment -> embed -> mine -> loss -> backward -> AdamW on one batch.
StepResult train_step(const Dataset& data, const std::vector<std::size_t>& batch, const TrainConfig& config,
                      std::size_t epoch, std::uint64_t horizon, TrainState& state);

/// Trains until `config.epochs` epochs are complete, continuing from `state`.
/// Throws RuntimeFailure on a non-finite loss; `state` then holds the last
/// completed epoch.
void train(const Dataset& data, const TrainConfig& config, TrainState& state,
           const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Fresh state for a model config and training seed.
TrainState initial_state(const ModelConfig& model, const TrainConfig& config);

/// Number of optimizer steps per epoch for this data/config.
std::size_t batches_per_epoch(const Dataset& data, const TrainConfig& config);

} // namespace mragnn
