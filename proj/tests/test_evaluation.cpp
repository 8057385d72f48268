#include "mragnn/error.hpp"
#include "mragnn/evaluation.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace mragnn;

namespace {

ScoreSet random_scores(Rng& rng, std::size_t ng, std::size_t ni, double shift, int levels) {
    ScoreSet s;
    // Quantized scores so ties occur.
    const auto draw = [&](double mu) { return std::round((mu + 0.2 * rng.normal()) * levels) / levels; };
    for (std::size_t i = 0; i < ng; ++i) s.genuine.push_back(draw(shift));
    for (std::size_t i = 0; i < ni; ++i) s.impostor.push_back(draw(0.0));
    return s;
}

} // namespace

TEST_CASE("similarity") {
    const std::vector<double> a{1, 0, 0};
    const std::vector<double> b{0, 1, 0};
    CHECK(similarity(a, a) == 1.0);
    CHECK(similarity(a, b) == 0.0);
    CHECK_THROWS_AS(similarity(a, std::vector<double>{2, 0, 0}), ValidationError);
    CHECK_THROWS_AS(similarity(a, std::vector<double>{1, 0}), ShapeError);
    Rng rng(1);
    const Matrix u = oracle::unit_rows(200, 8, rng);
    for (std::size_t i = 0; i < 200; ++i)
        for (std::size_t j = 0; j < 200; j += 7)
            CHECK(std::abs(oracle::sq_dist(u, i, u, j) - (2.0 - 2.0 * similarity(u.row(i), u.row(j)))) < 1e-9);
}

TEST_CASE("tar_at_far examples") {
    const ScoreSet sep{std::vector<double>(100, 0.9), std::vector<double>(1000, 0.1)};
    CHECK(tar_at_far(sep, 0.001).tar == 1.0);
    CHECK(eer(sep) == 0.0);

    Rng rng(2);
    ScoreSet same;
    for (int i = 0; i < 4000; ++i) {
        const double x = rng.uniform(-1, 1);
        (i % 2 ? same.genuine : same.impostor).push_back(x);
    }
    CHECK(tar_at_far(same, 0.1).tar == doctest::Approx(0.1).epsilon(0.3));
    CHECK(eer(same) == doctest::Approx(0.5).epsilon(0.1));
    const ScoreSet identical{{0.1, 0.2, 0.3}, {0.1, 0.2, 0.3}};
    CHECK(eer(identical) == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS(tar_at_far(ScoreSet{{}, {0.1}}, 0.01), ValidationError);
    CHECK_THROWS_AS(eer(ScoreSet{{0.1}, {}}), ValidationError);
    CHECK_THROWS_AS(tar_at_far(sep, 1.5), ValidationError);
}

TEST_CASE("tar_at_far and eer match the sweep oracle") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const ScoreSet s = random_scores(rng, 100, 1000, rng.uniform(0, 0.8), trial % 2 ? 20 : 1000000);
        for (double far : {0.0, 0.001, 0.01, 0.1})
            CHECK(tar_at_far(s, far).tar == oracle::tar(s, far));
        CHECK(std::abs(eer(s) - oracle::eer(s)) < 1e-12);
    }
}

TEST_CASE("metric properties") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const ScoreSet s = random_scores(rng, 50, 300, rng.uniform(0.2, 0.6), 50);
        double prev = -1.0;
        for (double far : {0.0, 0.001, 0.01, 0.05, 0.1, 0.5, 1.0}) {
            const TarAtFar t = tar_at_far(s, far);
            CHECK(t.tar >= prev);
            CHECK(oracle::rate_at_least(s.impostor, t.threshold) <= far + 1e-12);
            prev = t.tar;
        }
        const double e = eer(s);
        CHECK((e >= 0.0 && e <= 0.5));
    }
    // Separable by a threshold iff the rate is zero.
    CHECK(eer(ScoreSet{{0.5, 0.6}, {0.4, 0.5}}) > 0.0);
    CHECK(eer(ScoreSet{{0.5, 0.6}, {0.4, 0.45}}) == 0.0);
}

TEST_CASE("topk_accuracy") {
    Rng rng(5);
    const Matrix gallery = oracle::unit_rows(6, 4, rng);
    const std::vector<std::int64_t> gl{0, 1, 2, 3, 4, 5};
    Matrix probe(1, 4);
    std::copy(gallery.row(3).begin(), gallery.row(3).end(), probe.row(0).begin());
    const std::vector<std::int64_t> pl{3};
    const std::vector<std::size_t> ks{1, 6};
    const IndexingResult r = topk_accuracy(probe, pl, gallery, gl, ks);
    CHECK(r.accuracy.at(1) == 1.0);
    CHECK(r.accuracy.at(6) == 1.0);
    CHECK(r.ranked[0].front() == 3);

    const std::vector<std::int64_t> open{9};
    CHECK_THROWS_AS(topk_accuracy(probe, open, gallery, gl, ks), ValidationError);
    const std::vector<std::size_t> too_big{7};
    CHECK_THROWS_AS(topk_accuracy(probe, pl, gallery, gl, too_big), ValidationError);

    for (int trial = 0; trial < 100; ++trial) {
        const Matrix g = oracle::unit_rows(50, 5, rng);
        const Matrix p = oracle::unit_rows(20, 5, rng);
        std::vector<std::int64_t> glab(50);
        for (std::size_t i = 0; i < 50; ++i) glab[i] = static_cast<std::int64_t>(i % 17);
        std::vector<std::int64_t> plab(20);
        for (auto& l : plab) l = static_cast<std::int64_t>(rng.uniform_int(0, 16));
        const std::vector<std::size_t> k{1, 3, 5, 10, 50};
        const IndexingResult got = topk_accuracy(p, plab, g, glab, k);
        CHECK(got.accuracy == oracle::topk(p, plab, g, glab, k));
        CHECK(got.accuracy.at(50) == 1.0);
        double prev = 0.0;
        for (std::size_t kk : k) {
            CHECK(got.accuracy.at(kk) >= prev);
            prev = got.accuracy.at(kk);
        }
        for (const auto& ranked : got.ranked) {
            std::vector<std::size_t> sorted = ranked;
            std::sort(sorted.begin(), sorted.end());
            CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
        }
    }
}

TEST_CASE("over-smoothing probe") {
    std::vector<double> plain;
    std::vector<double> guarded;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        plain.push_back(oversmoothing_probe(seed, 8, false, false));
        guarded.push_back(oversmoothing_probe(seed, 8, true, true));
        CHECK(oversmoothing_probe(seed, 8, true, true) == guarded.back());
    }
    std::sort(plain.begin(), plain.end());
    std::sort(guarded.begin(), guarded.end());
    CHECK(guarded[2] > plain[2]);
}

TEST_CASE("score_metrics and evaluate") {
    const ScoreSet s{{0.9, 0.8, 0.7}, {0.1, 0.2, 0.3, 0.75}};
    const Metrics m = score_metrics(s, 0.25);
    CHECK(m.genuine_count == 3);
    CHECK(m.impostor_count == 4);
    CHECK(m.tar.tar == oracle::tar(s, 0.25));
    CHECK(m.eer == oracle::eer(s));

    ModelConfig cfg;
    cfg.width = 6;
    cfg.embed_dim = 6;
    cfg.trm_layers = 2;
    cfg.cam_layers = 1;
    cfg.k_minutia = 4;
    cfg.k_fingerprint = 3;
    cfg.ffm_hidden = 12;
    const ParameterSet p = ParameterSet::initialize(cfg, 1);
    DatasetSpec spec;
    spec.identities = 8;
    spec.impressions = 3;
    spec.min_minutiae = 10;
    spec.max_minutiae = 14;
    const Dataset data = gen_dataset(spec);

    // Probes that duplicate gallery records exactly score perfectly.
    Dataset dup;
    for (const FingerprintRecord& r : data)
        if (r.impression_id == 0) {
            dup.push_back(r);
            FingerprintRecord copy = r;
            copy.impression_id = 1;
            dup.push_back(copy);
        }
    EvalOptions opt;
    opt.gallery_impressions = 1;
    opt.probe_impressions = 1;
    opt.topk = {1, 8};
    const Metrics perfect = evaluate(dup, p, opt);
    CHECK(perfect.tar.tar == 1.0);
    CHECK(perfect.eer == 0.0);
    CHECK(perfect.topk.at(1) == 1.0);
    CHECK(perfect.genuine_count == 8);
    CHECK(perfect.impostor_count == 56);

    opt.gallery_impressions = 2;
    opt.topk = {1, 16};
    const Metrics a = evaluate(data, p, opt);
    CHECK(a.genuine_count == 16);
    CHECK(a.impostor_count == 8 * 16 - 16);
    CHECK(a.topk.at(16) == 1.0);
    const Metrics b = evaluate(data, p, opt);
    CHECK(a.eer == b.eer);
    CHECK(a.tar.threshold == b.tar.threshold);
}

TEST_CASE("random model on shuffled labels is at chance") {
    ModelConfig cfg;
    cfg.width = 6;
    cfg.embed_dim = 6;
    cfg.trm_layers = 2;
    cfg.cam_layers = 1;
    cfg.k_minutia = 4;
    cfg.k_fingerprint = 3;
    cfg.ffm_hidden = 12;
    const ParameterSet p = ParameterSet::initialize(cfg, 2);
    DatasetSpec spec;
    spec.identities = 40;
    spec.impressions = 3;
    spec.min_minutiae = 10;
    spec.max_minutiae = 14;
    Dataset data = gen_dataset(spec);
    // Reassign every record to a random (identity, impression) slot.
    Rng rng(6);
    std::vector<std::size_t> slots(data.size());
    std::iota(slots.begin(), slots.end(), std::size_t{0});
    for (std::size_t i = slots.size(); i > 1; --i) std::swap(slots[i - 1], slots[rng.uniform_int(0, i - 1)]);
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i].identity_id = static_cast<std::int64_t>(slots[i] / 3);
        data[i].impression_id = static_cast<std::int64_t>(slots[i] % 3);
    }
    EvalOptions opt;
    opt.gallery_impressions = 2;
    opt.topk = {};
    const Metrics m = evaluate(data, p, opt);
    REQUIRE(m.genuine_count + m.impostor_count >= 1000);
    CHECK(std::abs(m.eer - 0.5) < 0.1);
}
