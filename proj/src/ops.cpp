#include "mragnn/ops.hpp"

#include "mragnn/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace mragnn {

namespace {

constexpr std::size_t kNoEdge = std::numeric_limits<std::size_t>::max();

Tape& tape_of(Var a) {
    if (a.tape == nullptr) throw ValidationError("op on an unbound variable");
    return *a.tape;
}

Tape& tape_of(Var a, Var b) {
    if (a.tape != b.tape) throw ValidationError("op mixes variables from different tapes");
    return tape_of(a);
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shapes differ (" + a.shape_string() + " vs " + b.shape_string() + ")");
    }
}

void require_row_vector(const char* op, const Matrix& v, std::size_t cols) {
    if (v.rows() != 1 || v.cols() != cols) {
        throw ShapeError(std::string(op) + ": expected 1x" + std::to_string(cols) + ", got " + v.shape_string());
    }
}

} // namespace

RunningStats RunningStats::fresh(std::size_t channels) { return {Matrix(1, channels, 0.0), Matrix(1, channels, 1.0)}; }

void update_running_stats(RunningStats& running, const BatchMoments& batch) {
    require_same_shape("update_running_stats", running.mean, batch.mean);
    require_same_shape("update_running_stats", running.var, batch.var);
    for (std::size_t c = 0; c < running.mean.cols(); ++c) {
        running.mean(0, c) = kBatchNormMomentum * running.mean(0, c) + (1.0 - kBatchNormMomentum) * batch.mean(0, c);
        running.var(0, c) = kBatchNormMomentum * running.var(0, c) + (1.0 - kBatchNormMomentum) * batch.var(0, c);
    }
}

Var matmul(Var a, Var b) {
    Tape& t = tape_of(a, b);
    Matrix out = multiply(a.value(), b.value());
    return t.record("matmul", std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        if (tp.requires_grad(a)) gemm_accumulate(tp.grad_slot(a.id), g, false, b.value(), true);
        if (tp.requires_grad(b)) gemm_accumulate(tp.grad_slot(b.id), a.value(), true, g, false);
    });
}

Var add(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_same_shape("add", a.value(), b.value());
    Matrix out = a.value();
    out += b.value();
    return t.record("add", std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        tp.accumulate(a.id, g);
        tp.accumulate(b.id, g);
    });
}

Var sub(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_same_shape("sub", a.value(), b.value());
    Matrix out = a.value();
    const Matrix& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= bv.data()[i];
    return t.record("sub", std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        tp.accumulate(a.id, g);
        if (tp.requires_grad(b)) {
            Matrix& gb = tp.grad_slot(b.id);
            for (std::size_t i = 0; i < g.size(); ++i) gb.data()[i] -= g.data()[i];
        }
    });
}

Var scale(Var a, double factor) {
    Tape& t = tape_of(a);
    Matrix out = a.value();
    for (double& v : out.values()) v *= factor;
    return t.record("scale", std::move(out), {a}, [a, factor](Tape& tp, const Matrix& g) {
        Matrix& ga = tp.grad_slot(a.id);
        for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += factor * g.data()[i];
    });
}

Var add_scalar(Var a, double offset) {
    Tape& t = tape_of(a);
    Matrix out = a.value();
    for (double& v : out.values()) v += offset;
    return t.record("add_scalar", std::move(out), {a}, [a](Tape& tp, const Matrix& g) { tp.accumulate(a.id, g); });
}

Var gelu(Var x) {
    Tape& t = tape_of(x);
    const Matrix& xv = x.value();
    Matrix out(xv.rows(), xv.cols());
    const bool need_grad = t.requires_grad(x);
    Matrix slope = need_grad ? Matrix(xv.rows(), xv.cols()) : Matrix();
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const double v = xv.data()[i];
        const double cdf = 0.5 * std::erfc(-v * inv_sqrt2);
        out.data()[i] = v * cdf;
        if (need_grad) slope.data()[i] = cdf + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
    }
    return t.record("gelu", std::move(out), {x}, [x, slope = std::move(slope)](Tape& tp, const Matrix& g) {
        Matrix& gx = tp.grad_slot(x.id);
        for (std::size_t i = 0; i < g.size(); ++i) gx.data()[i] += slope.data()[i] * g.data()[i];
    });
}

Var relu(Var x) {
    Tape& t = tape_of(x);
    Matrix out = x.value();
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    return t.record("relu", std::move(out), {x}, [x](Tape& tp, const Matrix& g) {
        const Matrix& xv = x.value();
        Matrix& gx = tp.grad_slot(x.id);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (xv.data()[i] > 0.0) gx.data()[i] += g.data()[i];
        }
    });
}

Var concat_cols(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (av.rows() != bv.rows()) {
        throw ShapeError("concat_cols: row counts differ (" + av.shape_string() + " vs " + bv.shape_string() + ")");
    }
    const std::size_t ca = av.cols();
    const std::size_t cb = bv.cols();
    Matrix out(av.rows(), ca + cb);
    for (std::size_t r = 0; r < av.rows(); ++r) {
        std::copy(av.row(r).begin(), av.row(r).end(), out.row(r).begin());
        std::copy(bv.row(r).begin(), bv.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(ca));
    }
    return t.record("concat_cols", std::move(out), {a, b}, [a, b, ca, cb](Tape& tp, const Matrix& g) {
        if (tp.requires_grad(a)) {
            Matrix& ga = tp.grad_slot(a.id);
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < ca; ++c) ga(r, c) += g(r, c);
        }
        if (tp.requires_grad(b)) {
            Matrix& gb = tp.grad_slot(b.id);
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < cb; ++c) gb(r, c) += g(r, ca + c);
        }
    });
}

Var stack_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ValidationError("stack_rows: no parts");
    Tape& t = tape_of(parts.front());
    const std::size_t cols = parts.front().cols();
    std::size_t rows = 0;
    for (const Var& p : parts) {
        tape_of(parts.front(), p);
        if (p.cols() != cols) throw ShapeError("stack_rows: column counts differ");
        rows += p.rows();
    }
    Matrix out(rows, cols);
    std::size_t at = 0;
    for (const Var& p : parts) {
        const Matrix& pv = p.value();
        std::copy(pv.values().begin(), pv.values().end(), out.data() + at * cols);
        at += pv.rows();
    }
    return t.record("stack_rows", std::move(out), parts, [parts, cols](Tape& tp, const Matrix& g) {
        std::size_t row = 0;
        for (const Var& p : parts) {
            const std::size_t n = p.rows();
            if (tp.requires_grad(p)) {
                Matrix& gp = tp.grad_slot(p.id);
                for (std::size_t i = 0; i < n * cols; ++i) gp.data()[i] += g.data()[row * cols + i];
            }
            row += n;
        }
    });
}

Var gather_rows(Var x, const std::vector<std::size_t>& indices) {
    Tape& t = tape_of(x);
    const Matrix& xv = x.value();
    const std::size_t cols = xv.cols();
    Matrix out(indices.size(), cols);
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] >= xv.rows()) {
            throw ValidationError("gather_rows: index " + std::to_string(indices[k]) + " out of range " +
                                  std::to_string(xv.rows()));
        }
        std::copy(xv.row(indices[k]).begin(), xv.row(indices[k]).end(), out.row(k).begin());
    }
    return t.record("gather_rows", std::move(out), {x}, [x, indices, cols](Tape& tp, const Matrix& g) {
        Matrix& gx = tp.grad_slot(x.id);
        for (std::size_t k = 0; k < indices.size(); ++k) {
            double* dst = gx.data() + indices[k] * cols;
            const double* src = g.data() + k * cols;
            for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
        }
    });
}

Var neighbor_max(const NeighborGraph& graph, Var edge_values) {
    Tape& t = tape_of(edge_values);
    const Matrix& ev = edge_values.value();
    if (ev.rows() != graph.edge_count()) {
        throw ShapeError("neighbor_max: " + std::to_string(ev.rows()) + " edge rows for " +
                         std::to_string(graph.edge_count()) + " edges");
    }
    const std::size_t n = graph.vertex_count();
    const std::size_t cols = ev.cols();
    Matrix out(n, cols);
    std::vector<std::size_t> winner(n * cols, kNoEdge);
    for (std::size_t v = 0; v < n; ++v) {
        const std::size_t begin = graph.edge_offset(v);
        const std::size_t end = begin + graph.neighbors(v).size();
        if (begin == end) continue;
        double* dst = out.data() + v * cols;
        std::size_t* win = winner.data() + v * cols;
        const double* first = ev.data() + begin * cols;
        for (std::size_t c = 0; c < cols; ++c) {
            dst[c] = first[c];
            win[c] = begin;
        }
        for (std::size_t e = begin + 1; e < end; ++e) {
            const double* src = ev.data() + e * cols;
            for (std::size_t c = 0; c < cols; ++c) {
                if (src[c] > dst[c]) {
                    dst[c] = src[c];
                    win[c] = e;
                }
            }
        }
    }
    return t.record("neighbor_max", std::move(out), {edge_values},
                    [edge_values, winner = std::move(winner), cols](Tape& tp, const Matrix& g) {
                        Matrix& ge = tp.grad_slot(edge_values.id);
                        for (std::size_t i = 0; i < winner.size(); ++i) {
                            if (winner[i] == kNoEdge) continue;
                            ge.data()[winner[i] * cols + i % cols] += g.data()[i];
                        }
                    });
}

Var column_max(Var x) {
    Tape& t = tape_of(x);
    const Matrix& xv = x.value();
    const std::size_t cols = xv.cols();
    Matrix out(1, cols);
    std::vector<std::size_t> winner(cols, kNoEdge);
    if (xv.rows() > 0) {
        for (std::size_t c = 0; c < cols; ++c) {
            out(0, c) = xv(0, c);
            winner[c] = 0;
        }
        for (std::size_t r = 1; r < xv.rows(); ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                if (xv(r, c) > out(0, c)) {
                    out(0, c) = xv(r, c);
                    winner[c] = r;
                }
            }
        }
    }
    return t.record("column_max", std::move(out), {x}, [x, winner = std::move(winner)](Tape& tp, const Matrix& g) {
        Matrix& gx = tp.grad_slot(x.id);
        for (std::size_t c = 0; c < winner.size(); ++c) {
            if (winner[c] != kNoEdge) gx(winner[c], c) += g(0, c);
        }
    });
}

Var batchnorm(Var x, Var scale_v, Var shift_v, const RunningStats& running, Mode mode, BatchMoments* observed) {
    Tape& t = tape_of(x, scale_v);
    tape_of(x, shift_v);
    const Matrix& xv = x.value();
    const std::size_t n = xv.rows();
    const std::size_t cols = xv.cols();
    require_row_vector("batchnorm scale", scale_v.value(), cols);
    require_row_vector("batchnorm shift", shift_v.value(), cols);
    require_row_vector("batchnorm running mean", running.mean, cols);
    require_row_vector("batchnorm running var", running.var, cols);
    if (n == 0) throw ShapeError("batchnorm: empty input");

    bool use_batch = mode == Mode::train;
    if (use_batch && n == 1) {
        diagnostic("batchnorm: train mode with a single row; using running statistics");
        use_batch = false;
    }

    Matrix mu(1, cols);
    Matrix var(1, cols);
    if (use_batch) {
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < cols; ++c) mu(0, c) += xv(r, c);
        for (std::size_t c = 0; c < cols; ++c) mu(0, c) /= static_cast<double>(n);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                const double d = xv(r, c) - mu(0, c);
                var(0, c) += d * d;
            }
        }
        for (std::size_t c = 0; c < cols; ++c) var(0, c) /= static_cast<double>(n);
        if (observed != nullptr) *observed = BatchMoments{mu, var};
    } else {
        mu = running.mean;
        var = running.var;
    }

    Matrix inv_std(1, cols);
    for (std::size_t c = 0; c < cols; ++c) inv_std(0, c) = 1.0 / std::sqrt(var(0, c) + kBatchNormEpsilon);

    const Matrix& gamma = scale_v.value();
    const Matrix& beta = shift_v.value();
    Matrix xhat(n, cols);
    Matrix out(n, cols);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const double h = (xv(r, c) - mu(0, c)) * inv_std(0, c);
            xhat(r, c) = h;
            out(r, c) = h * gamma(0, c) + beta(0, c);
        }
    }

    return t.record("batchnorm", std::move(out), {x, scale_v, shift_v},
                    [x, scale_v, shift_v, use_batch, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                        Tape& tp, const Matrix& g) {
                        const std::size_t rows = g.rows();
                        const std::size_t cols = g.cols();
                        Matrix sum_g(1, cols);
                        Matrix sum_gx(1, cols);
                        for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t c = 0; c < cols; ++c) {
                                sum_g(0, c) += g(r, c);
                                sum_gx(0, c) += g(r, c) * xhat(r, c);
                            }
                        }
                        if (tp.requires_grad(scale_v)) tp.grad_slot(scale_v.id) += sum_gx;
                        if (tp.requires_grad(shift_v)) tp.grad_slot(shift_v.id) += sum_g;
                        if (!tp.requires_grad(x)) return;
                        const Matrix& gamma = scale_v.value();
                        Matrix& gx = tp.grad_slot(x.id);
                        const double inv_n = 1.0 / static_cast<double>(rows);
                        for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t c = 0; c < cols; ++c) {
                                const double k = gamma(0, c) * inv_std(0, c);
                                if (use_batch) {
                                    gx(r, c) += k * (g(r, c) - sum_g(0, c) * inv_n - xhat(r, c) * sum_gx(0, c) * inv_n);
                                } else {
                                    gx(r, c) += k * g(r, c);
                                }
                            }
                        }
                    });
}

Var batchnorm(Var x, Var scale_v, Var shift_v, RunningStats& running, Mode mode) {
    BatchMoments moments;
    const bool will_observe = mode == Mode::train && x.rows() > 1;
    Var out = batchnorm(x, scale_v, shift_v, static_cast<const RunningStats&>(running), mode, &moments);
    if (will_observe) update_running_stats(running, moments);
    return out;
}

Var l2_normalize_rows(Var x) {
    Tape& t = tape_of(x);
    const Matrix& xv = x.value();
    const std::size_t cols = xv.cols();
    Matrix out(xv.rows(), cols);
    std::vector<double> inv_norm(xv.rows(), 0.0);
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        double sq = 0.0;
        for (double v : xv.row(r)) sq += v * v;
        const double norm = std::sqrt(sq);
        if (norm < kNormalizeFloor) continue;
        inv_norm[r] = 1.0 / norm;
        for (std::size_t c = 0; c < cols; ++c) out(r, c) = xv(r, c) * inv_norm[r];
    }
    Matrix saved = out;
    return t.record("l2_normalize_rows", std::move(out), {x},
                    [x, inv_norm = std::move(inv_norm), y = std::move(saved)](Tape& tp, const Matrix& g) {
                        Matrix& gx = tp.grad_slot(x.id);
                        for (std::size_t r = 0; r < g.rows(); ++r) {
                            if (inv_norm[r] == 0.0) continue;
                            double dot = 0.0;
                            for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * y(r, c);
                            for (std::size_t c = 0; c < g.cols(); ++c) {
                                gx(r, c) += inv_norm[r] * (g(r, c) - y(r, c) * dot);
                            }
                        }
                    });
}

Var sum(Var x) {
    Tape& t = tape_of(x);
    double total = 0.0;
    for (double v : x.value().values()) total += v;
    return t.record("sum", Matrix(1, 1, total), {x}, [x](Tape& tp, const Matrix& g) {
        Matrix& gx = tp.grad_slot(x.id);
        for (double& v : gx.values()) v += g(0, 0);
    });
}

Var mean(Var x) {
    const std::size_t n = x.value().size();
    if (n == 0) throw ShapeError("mean: empty input");
    return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var pair_distances(Var x, const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
    Tape& t = tape_of(x);
    const Matrix& xv = x.value();
    const std::size_t cols = xv.cols();
    Matrix out(pairs.size(), 1);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto [a, b] = pairs[k];
        if (a >= xv.rows() || b >= xv.rows()) throw ValidationError("pair_distances: row index out of range");
        double sq = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double d = xv(a, c) - xv(b, c);
            sq += d * d;
        }
        out(k, 0) = std::sqrt(sq);
    }
    Matrix dist = out;
    return t.record("pair_distances", std::move(out), {x},
                    [x, pairs, dist = std::move(dist), cols](Tape& tp, const Matrix& g) {
                        const Matrix& xv = x.value();
                        Matrix& gx = tp.grad_slot(x.id);
                        for (std::size_t k = 0; k < pairs.size(); ++k) {
                            if (dist(k, 0) == 0.0) continue;
                            const auto [a, b] = pairs[k];
                            const double f = g(k, 0) / dist(k, 0);
                            for (std::size_t c = 0; c < cols; ++c) {
                                const double d = f * (xv(a, c) - xv(b, c));
                                gx(a, c) += d;
                                gx(b, c) -= d;
                            }
                        }
                    });
}

} // namespace mragnn
