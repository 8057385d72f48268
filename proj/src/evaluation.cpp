#include "mragnn/evaluation.hpp"

#include "mragnn/error.hpp"
#include "mragnn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace mragnn {

namespace {

constexpr double kUnitNormTolerance = 1e-6;

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

void require_scores(const ScoreSet& scores, const char* who) {
    if (scores.genuine.empty() || scores.impostor.empty()) {
        throw ValidationError(std::string(who) + ": genuine and impostor scores must both be non-empty");
    }
}

// Counts of values >= t and < t in an ascending-sorted list.
std::size_t count_at_least(const std::vector<double>& sorted, double t) {
    return static_cast<std::size_t>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), t));
}

Matrix lecun(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    const double sd = 1.0 / std::sqrt(static_cast<double>(rows));
    for (double& v : m.values()) v = sd * rng.normal();
    return m;
}

} // namespace

double similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("similarity: embedding widths differ");
    if (std::abs(norm(a) - 1.0) > kUnitNormTolerance || std::abs(norm(b) - 1.0) > kUnitNormTolerance) {
        throw ValidationError("similarity: embeddings must have unit norm");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

TarAtFar tar_at_far(const ScoreSet& scores, double far_target) {
    require_scores(scores, "tar_at_far");
    if (!(far_target >= 0.0 && far_target <= 1.0)) throw ValidationError("tar_at_far: far must lie in [0, 1]");
    const std::size_t n_imp = scores.impostor.size();
    if (far_target > 0.0 && static_cast<double>(n_imp) < 1.0 / far_target) {
        diagnostic("tar_at_far: " + std::to_string(n_imp) + " impostor scores are too few to resolve FAR " +
                   std::to_string(far_target));
    }
    std::vector<double> imp = scores.impostor;
    std::vector<double> gen = scores.genuine;
    std::sort(imp.begin(), imp.end());
    std::sort(gen.begin(), gen.end());

    // At most `allowed` impostors may reach the threshold.
    const auto allowed = static_cast<std::size_t>(std::floor(far_target * static_cast<double>(n_imp) + 1e-9));
    std::vector<double> all = imp;
    all.insert(all.end(), gen.begin(), gen.end());
    std::sort(all.begin(), all.end());

    double threshold = 0.0;
    if (allowed >= n_imp) {
        threshold = all.front();
    } else {
        const double blocking = imp[n_imp - 1 - allowed];
        const auto it = std::upper_bound(all.begin(), all.end(), blocking);
        threshold = it == all.end() ? std::nextafter(all.back(), std::numeric_limits<double>::infinity()) : *it;
    }
    TarAtFar out;
    out.far = far_target;
    out.threshold = threshold;
    out.tar = static_cast<double>(count_at_least(gen, threshold)) / static_cast<double>(gen.size());
    return out;
}

double eer(const ScoreSet& scores) {
    require_scores(scores, "eer");
    std::vector<double> imp = scores.impostor;
    std::vector<double> gen = scores.genuine;
    std::sort(imp.begin(), imp.end());
    std::sort(gen.begin(), gen.end());
    std::vector<double> thresholds = imp;
    thresholds.insert(thresholds.end(), gen.begin(), gen.end());
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    thresholds.push_back(std::numeric_limits<double>::infinity());

    const auto n_imp = static_cast<double>(imp.size());
    const auto n_gen = static_cast<double>(gen.size());
    double prev_far = 1.0;
    double prev_frr = 0.0;
    for (double t : thresholds) {
        const double far = static_cast<double>(count_at_least(imp, t)) / n_imp;
        const double frr = static_cast<double>(gen.size() - count_at_least(gen, t)) / n_gen;
        const double diff = far - frr;
        if (diff == 0.0) return far;
        if (diff < 0.0) {
            const double prev_diff = prev_far - prev_frr;
            const double alpha = prev_diff / (prev_diff - diff);
            return 0.5 * ((1.0 - alpha) * (prev_far + prev_frr) + alpha * (far + frr));
        }
        prev_far = far;
        prev_frr = frr;
    }
    return 0.5;  // unreachable: the +inf threshold has FAR 0 and FRR 1
}

IndexingResult topk_accuracy(const Matrix& probes, std::span<const std::int64_t> probe_labels, const Matrix& gallery,
                             std::span<const std::int64_t> gallery_labels, std::span<const std::size_t> ks) {
    if (probes.rows() != probe_labels.size() || gallery.rows() != gallery_labels.size()) {
        throw ShapeError("topk_accuracy: one label per embedding row required");
    }
    if (probes.cols() != gallery.cols()) throw ShapeError("topk_accuracy: embedding widths differ");
    if (probes.rows() == 0 || gallery.rows() == 0) throw ValidationError("topk_accuracy: empty probe or gallery set");
    const std::set<std::int64_t> enrolled(gallery_labels.begin(), gallery_labels.end());
    for (std::int64_t label : probe_labels) {
        if (!enrolled.contains(label)) {
            throw ValidationError("topk_accuracy: probe identity " + std::to_string(label) +
                                  " has no mate in the gallery (closed set required)");
        }
    }
    for (std::size_t k : ks) {
        if (k == 0 || k > gallery.rows()) {
            throw ValidationError("topk_accuracy: k=" + std::to_string(k) + " outside [1, gallery size]");
        }
    }

    IndexingResult out;
    out.ks.assign(ks.begin(), ks.end());
    std::vector<std::size_t> first_hit(probes.rows());
    for (std::size_t p = 0; p < probes.rows(); ++p) {
        std::vector<double> sims(gallery.rows());
        for (std::size_t g = 0; g < gallery.rows(); ++g) sims[g] = similarity(probes.row(p), gallery.row(g));
        std::vector<std::size_t> order(gallery.rows());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
        std::size_t rank = 0;
        while (gallery_labels[order[rank]] != probe_labels[p]) ++rank;
        first_hit[p] = rank + 1;
        out.ranked.push_back(std::move(order));
    }
    for (std::size_t k : ks) {
        const auto hits = std::count_if(first_hit.begin(), first_hit.end(), [k](std::size_t r) { return r <= k; });
        out.accuracy[k] = static_cast<double>(hits) / static_cast<double>(probes.rows());
    }
    return out;
}

double vertex_diversity(const Matrix& x) {
    if (x.rows() < 2) throw ValidationError("vertex_diversity: need at least two vertices");
    double total = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = i + 1; j < x.rows(); ++j) {
            double sq = 0.0;
            for (std::size_t c = 0; c < x.cols(); ++c) sq += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
            total += std::sqrt(sq);
        }
    }
    const double pairs = 0.5 * static_cast<double>(x.rows()) * static_cast<double>(x.rows() - 1);
    return total / pairs;
}

std::vector<double> oversmoothing_curve(const std::vector<Matrix>& snapshots) {
    std::vector<double> out;
    out.reserve(snapshots.size());
    for (const Matrix& s : snapshots) out.push_back(vertex_diversity(s));
    return out;
}

double oversmoothing_probe(std::uint64_t seed, std::size_t layers, bool residual, bool ffm_enabled,
                           std::size_t vertices, std::size_t width, std::size_t k) {
    Rng input_rng = Rng::derive(seed, {0});
    Matrix points(vertices, 2);
    for (double& v : points.values()) v = input_rng.uniform();
    Matrix features(vertices, width);
    for (double& v : features.values()) v = input_rng.normal();

    Rng param_rng = Rng::derive(seed, {1});
    Tape tape(false);
    std::vector<RunningStats> running(layers, RunningStats::fresh(width));
    std::vector<GcnLayerWeights> weights;
    for (std::size_t l = 0; l < layers; ++l) {
        GcnLayerWeights w;
        w.conv.theta = tape.constant(lecun(width, width, param_rng));
        w.conv.phi = tape.constant(lecun(width, width, param_rng));
        w.conv.update = tape.constant(lecun(2 * width, width, param_rng));
        w.norm.scale = tape.constant(Matrix(1, width, 1.0));
        w.norm.shift = tape.constant(Matrix(1, width));
        w.norm.running = &running[l];
        weights.push_back(w);
    }
    GcnBlockConfig cfg;
    cfg.layers = layers;
    cfg.width = width;
    cfg.fan_out = std::min(k, vertices - 1);
    cfg.dilation = true;
    cfg.residual = residual;
    const std::size_t depth = ranking_depth(cfg.fan_out, layers, cfg.dilation);
    const NeighborGraph ranking = knn_graph(points, std::min(depth, vertices - 1));
    Var x = gcn_block(tape.constant(features), ranking, cfg, weights, Mode::train).features;
    if (ffm_enabled) {
        FfmWeights f{tape.constant(lecun(width, 4 * width, param_rng)), tape.constant(lecun(4 * width, width, param_rng))};
        x = ffm(x, f);
    }
    return vertex_diversity(x.value());
}

Metrics score_metrics(const ScoreSet& scores, double far) {
    Metrics m;
    m.tar = tar_at_far(scores, far);
    m.eer = eer(scores);
    m.genuine_count = scores.genuine.size();
    m.impostor_count = scores.impostor.size();
    return m;
}

Metrics evaluate(const Dataset& data, const ParameterSet& params, const EvalOptions& options) {
    if (options.gallery_impressions == 0 || options.probe_impressions == 0) {
        throw ValidationError("evaluate: gallery and probe impression counts must be positive");
    }
    const DatasetSplit split = split_per_identity(data, options.gallery_impressions);
    const DatasetSplit probe_split = split_per_identity(split.rest, options.probe_impressions);
    const Dataset& gallery_records = split.first;
    const Dataset& probe_records = probe_split.first;
    if (gallery_records.size() < 2 || probe_records.empty()) {
        throw ValidationError("evaluate: split leaves no probes or fewer than two gallery records");
    }

    std::vector<std::vector<Minutia>> gallery_sets;
    std::vector<std::int64_t> gallery_labels;
    for (const auto& r : gallery_records) {
        gallery_sets.push_back(r.minutiae);
        gallery_labels.push_back(r.identity_id);
    }
    const Gallery gallery = Gallery::build(minutia_embeddings(gallery_sets, params), params);

    Matrix probes(probe_records.size(), params.config().embed_dim);
    std::vector<std::int64_t> probe_labels;
    for (std::size_t p = 0; p < probe_records.size(); ++p) {
        const Embedding e = embed_with_gallery(probe_records[p].minutiae, gallery, params);
        std::copy(e.values.begin(), e.values.end(), probes.row(p).begin());
        probe_labels.push_back(probe_records[p].identity_id);
    }

    ScoreSet scores;
    for (std::size_t p = 0; p < probes.rows(); ++p) {
        for (std::size_t g = 0; g < gallery.size(); ++g) {
            const double s = similarity(probes.row(p), gallery.embeddings().row(g));
            (probe_labels[p] == gallery_labels[g] ? scores.genuine : scores.impostor).push_back(s);
        }
    }
    Metrics m = score_metrics(scores, options.far);
    if (!options.topk.empty()) {
        m.topk = topk_accuracy(probes, probe_labels, gallery.embeddings(), gallery_labels, options.topk).accuracy;
    }
    return m;
}

} // namespace mragnn
