#include "mragnn/gradcheck_suite.hpp"

#include "mragnn/graph.hpp"
#include "mragnn/layers.hpp"
#include "mragnn/model.hpp"
#include "mragnn/rng.hpp"
#include "mragnn/training.hpp"

#include <cmath>
#include <optional>

namespace mragnn {

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double sd = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = sd * rng.normal();
    return m;
}

Matrix random_points(std::size_t n, Rng& rng) {
    Matrix m(n, 2);
    for (double& v : m.values()) v = rng.uniform();
    return m;
}

/// sum(gelu(y R)) with a fixed random R.
Var head(Var y, const Matrix& r) {
    Tape& tape = *y.tape;
    return sum(gelu(matmul(y, tape.constant(r))));
}

std::vector<Minutia> tiny_fingerprint(std::size_t n, Rng& rng) {
    std::vector<Minutia> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({rng.uniform(), rng.uniform(), rng.uniform(0.0, 6.2)});
    return out;
}

} // namespace

std::vector<std::string> gradcheck_components() {
    return {"edge_features", "edge_conv", "gcn_block", "ffm", "batchnorm", "normalization", "triplet_loss", "full_model"};
}

std::vector<ComponentCheck> run_gradcheck_suite(std::uint64_t seed, bool fault_injection) {
    GradCheckOptions opts;
    opts.flip_sign = fault_injection;
    std::vector<ComponentCheck> out;
    const std::size_t n = 7;
    const std::size_t c = 4;

    {
        Rng rng = Rng::derive(seed, {1});
        const NeighborGraph g = knn_graph(random_points(n, rng), 3);
        const Matrix r = random_matrix(c, 3, rng);
        NamedArrays p{{"x", random_matrix(n, c, rng)}, {"theta", random_matrix(c, c, rng, 0.5)},
                      {"phi", random_matrix(c, c, rng, 0.5)}};
        const Computation f = [&](Tape& t, const NamedArrays& a) {
            auto b = bind_all(t, a);
            return head(edge_features(b.at("x"), g, EdgeConvWeights{b.at("theta"), b.at("phi"), Var{}}), r);
        };
        out.push_back({"edge_features", grad_check(f, p, opts)});
    }
    {
        Rng rng = Rng::derive(seed, {2});
        const NeighborGraph g = knn_graph(random_points(n, rng), 3);
        const Matrix r = random_matrix(c, 3, rng);
        NamedArrays p{{"x", random_matrix(n, c, rng)},
                      {"theta", random_matrix(c, c, rng, 0.5)},
                      {"phi", random_matrix(c, c, rng, 0.5)},
                      {"update", random_matrix(2 * c, c, rng, 0.5)}};
        const Computation f = [&](Tape& t, const NamedArrays& a) {
            auto b = bind_all(t, a);
            return head(edge_conv(b.at("x"), g, EdgeConvWeights{b.at("theta"), b.at("phi"), b.at("update")}), r);
        };
        out.push_back({"edge_conv", grad_check(f, p, opts)});
    }
    {
        Rng rng = Rng::derive(seed, {3});
        const std::size_t layers = 3;
        const std::size_t vertices = 10;
        const GcnBlockConfig cfg{layers, c, 3, true, true};
        const NeighborGraph ranking =
            knn_graph(random_points(vertices, rng), ranking_depth(cfg.fan_out, layers, cfg.dilation));
        const Matrix r = random_matrix(c, 3, rng);
        const std::vector<RunningStats> running(layers, RunningStats::fresh(c));
        NamedArrays p{{"x", random_matrix(vertices, c, rng)}};
        for (std::size_t l = 0; l < layers; ++l) {
            const std::string s = std::to_string(l);
            p.emplace(s + ".theta", random_matrix(c, c, rng, 0.5));
            p.emplace(s + ".phi", random_matrix(c, c, rng, 0.5));
            p.emplace(s + ".update", random_matrix(2 * c, c, rng, 0.5));
            Matrix scale = random_matrix(1, c, rng, 0.2);
            for (double& v : scale.values()) v += 1.0;
            p.emplace(s + ".scale", std::move(scale));
            p.emplace(s + ".shift", random_matrix(1, c, rng, 0.2));
        }
        const Computation f = [&](Tape& t, const NamedArrays& a) {
            auto b = bind_all(t, a);
            std::vector<GcnLayerWeights> w;
            for (std::size_t l = 0; l < layers; ++l) {
                const std::string s = std::to_string(l);
                w.push_back({{b.at(s + ".theta"), b.at(s + ".phi"), b.at(s + ".update")},
                             {b.at(s + ".scale"), b.at(s + ".shift"), &running[l], nullptr}});
            }
            return head(gcn_block(b.at("x"), ranking, cfg, w, Mode::train).features, r);
        };
        out.push_back({"gcn_block", grad_check(f, p, opts)});
    }
    {
        Rng rng = Rng::derive(seed, {4});
        const Matrix r = random_matrix(c, 3, rng);
        NamedArrays p{{"x", random_matrix(n, c, rng)}, {"w1", random_matrix(c, 8, rng, 0.5)},
                      {"w2", random_matrix(8, c, rng, 0.5)}};
        const Computation f = [&](Tape& t, const NamedArrays& a) {
            auto b = bind_all(t, a);
            return head(ffm(b.at("x"), FfmWeights{b.at("w1"), b.at("w2")}), r);
        };
        out.push_back({"ffm", grad_check(f, p, opts)});
    }
    {
        Rng rng = Rng::derive(seed, {5});
        const Matrix r = random_matrix(c, 3, rng);
        const RunningStats running = RunningStats::fresh(c);
        Matrix scale = random_matrix(1, c, rng, 0.2);
        for (double& v : scale.values()) v += 1.0;
        NamedArrays p{{"x", random_matrix(8, c, rng)}, {"scale", scale}, {"shift", random_matrix(1, c, rng, 0.2)}};
        const Computation f = [&](Tape& t, const NamedArrays& a) {
            auto b = bind_all(t, a);
            return head(batchnorm(b.at("x"), b.at("scale"), b.at("shift"), running, Mode::train, nullptr), r);
        };
        out.push_back({"batchnorm", grad_check(f, p, opts)});
    }
    {
        Rng rng = Rng::derive(seed, {6});
        const Matrix r = random_matrix(c, 3, rng);
        NamedArrays p{{"x", random_matrix(n, c, rng)}};
        const Computation f = [&](Tape& t, const NamedArrays& a) {
            return head(l2_normalize_rows(bind_all(t, a).at("x")), r);
        };
        out.push_back({"normalization", grad_check(f, p, opts)});
    }
    {
        Rng rng = Rng::derive(seed, {7});
        // Margin 2 keeps every hinge active for unit-scale embeddings.
        const std::vector<Triplet> triplets{{0, 1, 2}, {2, 3, 0}, {4, 5, 1}};
        NamedArrays p{{"emb", random_matrix(6, c, rng, 0.5)}};
        const Computation f = [&](Tape& t, const NamedArrays& a) {
            return triplet_loss(bind_all(t, a).at("emb"), triplets, 2.0);
        };
        out.push_back({"triplet_loss", grad_check(f, p, opts)});
    }
    {
        Rng rng = Rng::derive(seed, {8});
        ModelConfig cfg;
        cfg.width = 4;
        cfg.embed_dim = 4;
        cfg.trm_layers = 5;
        cfg.cam_layers = 2;
        cfg.k_minutia = 3;
        cfg.k_fingerprint = 2;
        cfg.ffm_hidden = 8;
        const ParameterSet base = ParameterSet::initialize(cfg, seed);
        std::vector<std::vector<Minutia>> batch;
        for (std::size_t i = 0; i < 4; ++i) batch.push_back(tiny_fingerprint(9, rng));
        const std::vector<Triplet> triplets{{0, 1, 2}, {2, 3, 0}};
        NamedArrays p = base.weights();
        std::optional<ParameterSet> current;
        const Computation f = [&](Tape& t, const NamedArrays& a) {
            current.emplace(cfg, a, base.running());
            return triplet_loss(embed_batch(t, batch, *current, Mode::train, nullptr), triplets, 2.0);
        };
        out.push_back({"full_model", grad_check(f, p, opts)});
    }
    return out;
}

} // namespace mragnn
