#include "mragnn/error.hpp"
#include "mragnn/evaluation.hpp"
#include "mragnn/gradcheck_suite.hpp"
#include "mragnn/layers.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace mragnn;

namespace {

double gelu_ref(double x) { return 0.5 * x * std::erfc(-x / std::sqrt(2.0)); }

/// Per-edge loop: e_ij = gelu((x_j - x_i) theta + x_i phi).
Matrix edge_oracle(const Matrix& x, const NeighborGraph& g, const Matrix& theta, const Matrix& phi) {
    Matrix out(g.edge_count(), theta.cols());
    std::size_t e = 0;
    for (std::size_t i = 0; i < g.vertex_count(); ++i)
        for (std::size_t j : g.neighbors(i)) {
            for (std::size_t m = 0; m < theta.cols(); ++m) {
                double s = 0.0;
                for (std::size_t c = 0; c < x.cols(); ++c) s += (x(j, c) - x(i, c)) * theta(c, m) + x(i, c) * phi(c, m);
                out(e, m) = gelu_ref(s);
            }
            ++e;
        }
    return out;
}

Matrix conv_oracle(const Matrix& x, const NeighborGraph& g, const Matrix& theta, const Matrix& phi, const Matrix& u) {
    const Matrix e = edge_oracle(x, g, theta, phi);
    Matrix cat(x.rows(), x.cols() + e.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t c = 0; c < x.cols(); ++c) cat(i, c) = x(i, c);
        const auto nb = g.neighbors(i);
        for (std::size_t m = 0; m < e.cols(); ++m) {
            double best = nb.empty() ? 0.0 : -1e300;
            for (std::size_t k = 0; k < nb.size(); ++k) best = std::max(best, e(g.edge_offset(i) + k, m));
            cat(i, x.cols() + m) = best;
        }
    }
    return oracle::matmul(cat, u);
}

struct LayerFixture {
    Tape tape{false};
    std::vector<RunningStats> running;
    std::vector<GcnLayerWeights> weights;

    LayerFixture(std::size_t layers, std::size_t c, Rng* rng) : running(layers, RunningStats::fresh(c)) {
        for (std::size_t l = 0; l < layers; ++l) {
            GcnLayerWeights w;
            w.conv.theta = tape.constant(rng ? oracle::random_matrix(c, c, *rng, 0.5) : Matrix(c, c));
            w.conv.phi = tape.constant(rng ? oracle::random_matrix(c, c, *rng, 0.5) : Matrix(c, c));
            w.conv.update = tape.constant(rng ? oracle::random_matrix(2 * c, c, *rng, 0.5) : Matrix(2 * c, c));
            w.norm.scale = tape.constant(rng ? Matrix(1, c, 1.0) : Matrix(1, c));
            w.norm.shift = tape.constant(Matrix(1, c));
            weights.push_back(w);
        }
        for (std::size_t l = 0; l < layers; ++l) weights[l].norm.running = &running[l];
    }
};

} // namespace

TEST_CASE("edge_features examples and oracle") {
    Rng rng(31);
    Tape t(false);
    const Matrix theta = oracle::random_matrix(3, 4, rng);
    const Matrix phi = oracle::random_matrix(3, 4, rng);
    const EdgeConvWeights w{t.constant(theta), t.constant(phi), Var{}};

    // Identical vertices: the difference term vanishes.
    const Matrix same(4, 3, 0.7);
    const NeighborGraph g4 = knn_graph(oracle::random_uniform(4, 2, rng), 2);
    const Matrix e = edge_features(t.constant(same), g4, w).value();
    const Matrix only_phi = oracle::matmul(Matrix(1, 3, 0.7), phi);
    for (std::size_t r = 0; r < e.rows(); ++r)
        for (std::size_t c = 0; c < 4; ++c) CHECK(e(r, c) == doctest::Approx(gelu_ref(only_phi(0, c))).epsilon(1e-14));

    const EdgeConvWeights zero{t.constant(Matrix(3, 4)), t.constant(Matrix(3, 4)), Var{}};
    CHECK(edge_features(t.constant(oracle::random_matrix(4, 3, rng)), g4, zero).value() == Matrix(g4.edge_count(), 4));

    for (int trial = 0; trial < 10; ++trial) {
        const Matrix x = oracle::random_matrix(5, 3, rng);
        const NeighborGraph g = knn_graph(oracle::random_uniform(5, 2, rng), 3);
        CHECK(max_abs_diff(edge_features(t.constant(x), g, w).value(), edge_oracle(x, g, theta, phi)) < 1e-12);
    }
    CHECK_THROWS_AS(edge_features(t.constant(Matrix(4, 2)), g4, w), ShapeError);
}

TEST_CASE("edge_conv examples and compositional oracle") {
    Rng rng(32);
    Tape t(false);
    const Matrix theta = oracle::random_matrix(3, 3, rng);
    const Matrix phi = oracle::random_matrix(3, 3, rng);
    const Matrix u = oracle::random_matrix(6, 3, rng);
    const EdgeConvWeights w{t.constant(theta), t.constant(phi), t.constant(u)};

    const Matrix x1 = Matrix::from_rows({{0.3, -1.0, 2.0}});
    const NeighborGraph lonely = NeighborGraph::from_lists(1, {{}});
    const Matrix cat = Matrix::from_rows({{0.3, -1.0, 2.0, 0.0, 0.0, 0.0}});
    CHECK(max_abs_diff(edge_conv(t.constant(x1), lonely, w).value(), oracle::matmul(cat, u)) < 1e-15);

    for (int trial = 0; trial < 10; ++trial) {
        const Matrix x = oracle::random_matrix(8, 3, rng);
        const NeighborGraph g = knn_graph(oracle::random_uniform(8, 2, rng), 3);
        CHECK(max_abs_diff(edge_conv(t.constant(x), g, w).value(), conv_oracle(x, g, theta, phi, u)) < 1e-12);
    }
}

TEST_CASE("edge_conv and gcn_block are permutation equivariant") {
    Rng rng(33);
    const std::size_t n = 12;
    const std::size_t c = 4;
    const Matrix pts = oracle::random_uniform(n, 2, rng);
    const Matrix x = oracle::random_matrix(n, c, rng);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_int(0, i - 1)]);
    Matrix px(n, c);
    Matrix ppts(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(x.row(i).begin(), x.row(i).end(), px.row(perm[i]).begin());
        std::copy(pts.row(i).begin(), pts.row(i).end(), ppts.row(perm[i]).begin());
    }
    LayerFixture f(3, c, &rng);
    const GcnBlockConfig cfg{3, c, 3, true, true};
    const std::size_t depth = ranking_depth(3, 3, true);
    const Matrix a = gcn_block(f.tape.constant(x), knn_graph(pts, depth), cfg, f.weights, Mode::train).features.value();
    const Matrix b = gcn_block(f.tape.constant(px), knn_graph(ppts, depth), cfg, f.weights, Mode::train).features.value();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < c; ++k) CHECK(b(perm[i], k) == doctest::Approx(a(i, k)).epsilon(1e-12));

    const Matrix ea = edge_conv(f.tape.constant(x), knn_graph(pts, 3), f.weights[0].conv).value();
    const Matrix eb = edge_conv(f.tape.constant(px), knn_graph(ppts, 3), f.weights[0].conv).value();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < c; ++k) CHECK(eb(perm[i], k) == doctest::Approx(ea(i, k)).epsilon(1e-12));
}

TEST_CASE("gcn_block wiring") {
    Rng rng(34);
    const std::size_t c = 3;
    const Matrix x = oracle::random_matrix(6, c, rng);
    const NeighborGraph ranking = knn_graph(oracle::random_uniform(6, 2, rng), 2);

    // theta = phi = 0, identity on the left block of the update, normalization a no-op.
    Tape t(false);
    Matrix u(2 * c, c);
    for (std::size_t i = 0; i < c; ++i) u(i, i) = 1.0;
    RunningStats passthrough{Matrix(1, c), Matrix(1, c, 1.0 - kBatchNormEpsilon)};
    const GcnLayerWeights w{{t.constant(Matrix(c, c)), t.constant(Matrix(c, c)), t.constant(u)},
                            {t.constant(Matrix(1, c, 1.0)), t.constant(Matrix(1, c)), &passthrough, nullptr}};
    const GcnBlockConfig plain{1, c, 2, true, false};
    const Matrix y = gcn_block(t.constant(x), ranking, plain, std::span(&w, 1), Mode::infer).features.value();
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t k = 0; k < c; ++k) CHECK(y(i, k) == doctest::Approx(gelu_ref(x(i, k))).epsilon(1e-14));

    // All-zero parameters with residuals: the block is an exact identity.
    LayerFixture zero(4, c, nullptr);
    const GcnBlockConfig res{4, c, 2, true, true};
    const NeighborGraph deep = knn_graph(oracle::random_uniform(6, 2, rng), 4);
    for (Mode mode : {Mode::train, Mode::infer}) {
        const GcnBlockOutput out = gcn_block(zero.tape.constant(x), deep, res, zero.weights, mode);
        CHECK(out.features.value() == x);
        CHECK(out.snapshots.size() == 4);
    }

    CHECK_THROWS_AS(gcn_block(zero.tape.constant(x), deep, GcnBlockConfig{3, c, 2, true, true}, zero.weights,
                              Mode::train),
                    ShapeError);
}

TEST_CASE("ffm") {
    Rng rng(35);
    Tape t(false);
    const Matrix x = oracle::random_matrix(5, 4, rng);
    const FfmWeights zero{t.constant(Matrix(4, 16)), t.constant(Matrix(16, 4))};
    CHECK(ffm(t.constant(x), zero).value() == x);
    const FfmWeights w{t.constant(oracle::random_matrix(4, 16, rng)), t.constant(oracle::random_matrix(16, 4, rng))};
    CHECK(ffm(t.constant(Matrix(5, 4)), w).value() == Matrix(5, 4));
    CHECK(ffm(t.constant(x), w).value().cols() == 4);
    CHECK_THROWS_AS(ffm(t.constant(Matrix(5, 3)), w), ShapeError);
}

TEST_CASE("layer gradients pass the checker") {
    for (const ComponentCheck& c : run_gradcheck_suite(7)) {
        CAPTURE(c.component);
        CHECK(c.report.max_rel_error < kGradCheckTolerance);
        CHECK(c.report.coords_checked > 0);
    }
}

TEST_CASE("over-smoothing diagnostic") {
    CHECK(vertex_diversity(Matrix(4, 3, 1.5)) == 0.0);
    CHECK(vertex_diversity(Matrix::from_rows({{0, 0}, {2, 0}})) == 2.0);
    Rng rng(36);
    const Matrix x = oracle::random_matrix(20, 5, rng);
    CHECK(std::abs(vertex_diversity(x) - oracle::diversity(x)) < 1e-12);
    CHECK_THROWS_AS(vertex_diversity(Matrix(1, 3)), ValidationError);
    CHECK(oversmoothing_curve({x, Matrix(3, 5)}) == std::vector<double>{vertex_diversity(x), 0.0});
}
