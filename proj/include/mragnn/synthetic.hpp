#pragma once

#include "mragnn/graph.hpp"
#include "mragnn/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mragnn {

/// Impression-to-impression variation applied to an identity template.
struct PerturbSpec {
    double rotation_deg = 15.0;         ///< global rotation drawn from [-r, r]
    double translation = 0.05;          ///< global shift drawn from [-t, t] per axis
    double jitter = 0.01;               ///< per-minutia positional noise (std dev)
    double orientation_jitter_deg = 5.0;
    double dropout = 0.1;               ///< probability of losing each minutia
    std::size_t spurious_min = 0;
    std::size_t spurious_max = 3;

    /// All variation switched off.
    static PerturbSpec none();
    void validate() const;
};

struct DatasetSpec {
    std::size_t identities = 100;
    std::size_t impressions = 4;
    std::size_t min_minutiae = 25;
    std::size_t max_minutiae = 40;
    PerturbSpec perturb;
    std::uint64_t seed = 7;

    void validate() const;
};

struct IdentityTemplate {
    std::int64_t identity_id = 0;
    std::vector<Minutia> minutiae;
};

struct FingerprintRecord {
    std::int64_t identity_id = 0;
    std::int64_t impression_id = 0;
    std::vector<Minutia> minutiae;

    friend bool operator==(const FingerprintRecord&, const FingerprintRecord&) = default;
};

using Dataset = std::vector<FingerprintRecord>;

inline constexpr double kMinutiaSpacing = 0.02;

/// Samples a template: count uniform in [min, max], positions by rejection with
/// pairwise spacing >= 0.02 (at most 1000 attempts per point), orientations
/// uniform in [0, 2*pi). Throws DataQualityError when the spacing cannot be met.
IdentityTemplate gen_identity(std::int64_t identity_id, Rng& rng, const DatasetSpec& spec);

/// One impression: rotation about the centroid (orientation shifted alike),
/// translation, jitter, dropout and spurious minutiae, clamped to the unit
/// square. At least two minutiae always survive.
std::vector<Minutia> gen_impression(const IdentityTemplate& templ, const PerturbSpec& perturb, Rng& rng);

/// identities x impressions records, ordered by (identity, impression).
Dataset gen_dataset(const DatasetSpec& spec);

struct DatasetSplit {
    Dataset first;
    Dataset rest;
};

/// Per identity, the `first_count` lowest impression ids go to `first`, the rest to `rest`.
DatasetSplit split_per_identity(const Dataset& data, std::size_t first_count);

/// Symmetric mean nearest-neighbor distance between two centered minutia sets.
double set_distance(std::span<const Minutia> a, std::span<const Minutia> b);

} // namespace mragnn
