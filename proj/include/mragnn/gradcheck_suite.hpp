#pragma once

#include "mragnn/gradcheck.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mragnn {

inline constexpr double kGradCheckTolerance = 1e-5;

struct ComponentCheck {
    std::string component;
    GradCheckReport report;

    bool passed() const { return report.max_rel_error < kGradCheckTolerance; }
};

/// Component names in report order.
std::vector<std::string> gradcheck_components();

/// Gradient checks of every layer type and the end-to-end model on tiny random
/// instances. Each component sees a random nonlinear scalar head so that no
/// gradient is trivially zero. `fault_injection` negates the analytic gradients.
std::vector<ComponentCheck> run_gradcheck_suite(std::uint64_t seed, bool fault_injection = false);

} // namespace mragnn
