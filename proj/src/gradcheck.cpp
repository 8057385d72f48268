#include "mragnn/gradcheck.hpp"

#include "mragnn/error.hpp"

#include <algorithm>
#include <cmath>

namespace mragnn {

namespace {

double evaluate(const Computation& f, const NamedArrays& params) {
    Tape tape;
    const Var out = f(tape, params);
    const Matrix& v = out.value();
    if (v.rows() != 1 || v.cols() != 1) throw ShapeError("grad_check: computation must return 1x1");
    return v(0, 0);
}

} // namespace

std::map<std::string, Var> bind_all(Tape& tape, const NamedArrays& params) {
    std::map<std::string, Var> bound;
    for (const auto& [name, value] : params) bound.emplace(name, tape.parameter(name, value));
    return bound;
}

GradCheckReport grad_check(const Computation& f, NamedArrays& params, const GradCheckOptions& options) {
    GradientMap analytic;
    {
        Tape tape;
        const Var out = f(tape, params);
        analytic = tape.backward(out);
    }

    GradCheckReport report;
    for (auto& [name, value] : params) {
        const auto it = analytic.find(name);
        const std::size_t n = value.size();
        if (n == 0) continue;
        const std::size_t count = options.max_coords_per_param == 0 ? n : std::min(n, options.max_coords_per_param);
        for (std::size_t k = 0; k < count; ++k) {
            const std::size_t idx = count == n ? k : (k * n) / count;
            double& slot = value.data()[idx];
            const double original = slot;
            slot = original + options.step;
            const double up = evaluate(f, params);
            slot = original - options.step;
            const double down = evaluate(f, params);
            slot = original;

            const double numeric = (up - down) / (2.0 * options.step);
            double exact = it == analytic.end() ? 0.0 : it->second.data()[idx];
            if (options.flip_sign) exact = -exact;
            const double rel =
                std::abs(exact - numeric) / std::max({1.0, std::abs(exact), std::abs(numeric)});
            ++report.coords_checked;
            if (rel > report.max_rel_error || report.worst_param.empty()) {
                if (rel >= report.max_rel_error) {
                    report.max_rel_error = rel;
                    report.worst_param = name;
                    report.worst_index = idx;
                }
            }
        }
    }
    return report;
}

} // namespace mragnn
