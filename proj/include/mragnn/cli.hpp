#pragma once

#include "mragnn/evaluation.hpp"
#include "mragnn/io.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace mragnn {

enum class SweepParam { layers, neighbors };

struct SweepRow {
    std::size_t value = 0;
    Metrics metrics;
};

/// Trains and evaluates one model per value with everything else (seeds
/// included) held fixed. `layers` sets both block depths, `neighbors` both K.
std::vector<SweepRow> run_sweep(const Dataset& data, const RunConfig& config, SweepParam param,
                                const std::vector<std::size_t>& values, const EvalOptions& eval);

/// CSV with columns value, tar_at_far, eer, top1.
std::string sweep_table(const std::vector<SweepRow>& rows);

/// Entry point of the command-line tool. Returns the process exit code:
/// 0 success, 1 validation error, 2 runtime or numeric failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace mragnn
