#pragma once

#include "mragnn/tape.hpp"

#include <cstddef>
#include <functional>
#include <map>
#include <string>

namespace mragnn {

using NamedArrays = std::map<std::string, Matrix>;

/// Builds a scalar (1x1) from parameters bound onto a fresh tape.
using Computation = std::function<Var(Tape&, const NamedArrays&)>;

struct GradCheckOptions {
    double step = 1e-6;
    /// Check at most this many coordinates per parameter (evenly spaced); 0 checks all.
    std::size_t max_coords_per_param = 0;
    /// Fault injection: negate the analytic gradient before comparing.
    bool flip_sign = false;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    std::size_t coords_checked = 0;
};

/// Compares tape gradients with central differences.
///
/// Relative error per coordinate is |analytic - numeric| / max(1, |analytic|, |numeric|).
/// `params` is perturbed in place and restored bit-exactly before returning.
GradCheckReport grad_check(const Computation& f, NamedArrays& params, const GradCheckOptions& options = {});

/// Binds every entry of `params` as a named parameter leaf.
std::map<std::string, Var> bind_all(Tape& tape, const NamedArrays& params);

} // namespace mragnn
