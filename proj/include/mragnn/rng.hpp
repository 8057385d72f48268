#pragma once

#include <cstdint>
#include <initializer_list>

namespace mragnn {

/// SplitMix64 used as a counter-based generator.
///
/// Output k of a stream with key s is mix(s + (k+1) * 0x9E3779B97F4A7C15), where
/// mix is the SplitMix64 finalizer. Streams are derived from a seed and a path of
/// integer labels (e.g. {seed, identity, impression}) by folding each label
/// through the finalizer, so the same labels give the same numbers on every
/// platform and independently of generation order.
class Rng {
public:
    explicit Rng(std::uint64_t key) : key_(key) {}

    static std::uint64_t mix(std::uint64_t z);
    /// Stream keyed by a seed and a sequence of labels.
    static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> labels);

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 bits.
    double uniform();
    double uniform(double lo, double hi);
    /// Uniform integer in [lo, hi] (inclusive), bias-free by rejection.
    std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);
    /// Standard normal via Box-Muller (no cached second value).
    double normal();
    bool bernoulli(double p);

    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace mragnn
