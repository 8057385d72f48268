#include "mragnn/model.hpp"

#include "mragnn/error.hpp"
#include "mragnn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

namespace mragnn {

namespace {

std::string layer_name(const char* level, std::size_t l) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s.gcn.%02zu", level, l);
    return buf;
}

std::uint64_t name_hash(const std::string& name) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Binds parameters on first use so each name appears once per tape.
class Binder {
public:
    Binder(Tape& tape, const ParameterSet& params, ForwardStats* stats)
        : tape_(tape), params_(params), stats_(stats) {}

    Var operator()(const std::string& name) {
        auto it = bound_.find(name);
        if (it == bound_.end()) it = bound_.emplace(name, tape_.parameter(name, params_.weight(name))).first;
        return it->second;
    }

    NormWeights norm(const std::string& prefix) {
        NormWeights n{(*this)(prefix + ".scale"), (*this)(prefix + ".shift"), &params_.running_stats(prefix), nullptr};
        if (stats_ != nullptr) n.observed = &stats_->moments.emplace_back(prefix, BatchMoments{}).second;
        return n;
    }

    std::vector<GcnLayerWeights> block(const char* level, std::size_t layers) {
        std::vector<GcnLayerWeights> w;
        w.reserve(layers);
        for (std::size_t l = 0; l < layers; ++l) {
            const std::string p = layer_name(level, l);
            w.push_back({{(*this)(p + ".theta"), (*this)(p + ".phi"), (*this)(p + ".update")}, norm(p + ".bn")});
        }
        return w;
    }

    FfmWeights ffm(const char* level) {
        const std::string p = std::string(level) + ".ffm";
        return {(*this)(p + ".w1"), (*this)(p + ".w2")};
    }

private:
    Tape& tape_;
    const ParameterSet& params_;
    ForwardStats* stats_;
    std::map<std::string, Var> bound_;
};

/// Row order sorting rows lexicographically (stable on index).
std::vector<std::size_t> canonical_order(const Matrix& rows) {
    std::vector<std::size_t> order(rows.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto ra = rows.row(a);
        const auto rb = rows.row(b);
        return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    });
    return order;
}

std::vector<std::size_t> inverse_permutation(const std::vector<std::size_t>& order) {
    std::vector<std::size_t> inv(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) inv[order[k]] = k;
    return inv;
}

Matrix permute_rows(const Matrix& m, const std::vector<std::size_t>& order) {
    Matrix out(order.size(), m.cols());
    for (std::size_t k = 0; k < order.size(); ++k) std::copy(m.row(order[k]).begin(), m.row(order[k]).end(), out.row(k).begin());
    return out;
}

void add_normal(NamedArrays& w, const std::string& name, std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng = Rng::derive(seed, {name_hash(name)});
    Matrix m(rows, cols);
    const double sd = 1.0 / std::sqrt(static_cast<double>(rows));
    for (double& v : m.values()) v = sd * rng.normal();
    w.emplace(name, std::move(m));
}

void add_norm(NamedArrays& w, std::map<std::string, RunningStats>& running, const std::string& prefix,
              std::size_t channels) {
    w.emplace(prefix + ".scale", Matrix(1, channels, 1.0));
    w.emplace(prefix + ".shift", Matrix(1, channels, 0.0));
    running.emplace(prefix, RunningStats::fresh(channels));
}

void add_block(NamedArrays& w, std::map<std::string, RunningStats>& running, const char* level, std::size_t layers,
               std::size_t width, std::uint64_t seed) {
    for (std::size_t l = 0; l < layers; ++l) {
        const std::string p = layer_name(level, l);
        add_normal(w, p + ".theta", width, width, seed);
        add_normal(w, p + ".phi", width, width, seed);
        add_normal(w, p + ".update", 2 * width, width, seed);
        add_norm(w, running, p + ".bn", width);
    }
}

Var cam_head(Binder& bind, Var x, const ModelConfig& cfg, Mode mode) {
    Var h = matmul(x, bind("cam.lin1"));
    h = gelu(apply_norm(h, bind.norm("cam.norm"), mode));
    h = matmul(h, bind("cam.lin2"));
    if (cfg.ffm) h = ffm(h, bind.ffm("cam"));
    return l2_normalize_rows(h);
}

} // namespace

void ModelConfig::validate() const {
    auto positive = [](std::size_t v, const char* what) {
        if (v < 1) throw ValidationError(std::string("model config: ") + what + " must be at least 1");
    };
    positive(width, "width");
    positive(embed_dim, "embed_dim");
    positive(trm_layers, "trm_layers");
    positive(cam_layers, "cam_layers");
    positive(k_minutia, "k_minutia");
    positive(k_fingerprint, "k_fingerprint");
    positive(ffm_hidden, "ffm_hidden");
}

std::size_t ranking_depth(std::size_t fan_out, std::size_t layers, bool dilation) {
    return fan_out * dilation_plan(layers, dilation).back();
}

ParameterSet::ParameterSet(ModelConfig config, NamedArrays weights, std::map<std::string, RunningStats> running)
    : config_(config), weights_(std::move(weights)), running_(std::move(running)) {
    config_.validate();
}

ParameterSet ParameterSet::initialize(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    NamedArrays w;
    std::map<std::string, RunningStats> running;
    const std::size_t c = config.width;
    const std::size_t d = config.embed_dim;
    add_normal(w, "trm.stem", 3, c, seed);
    add_block(w, running, "trm", config.trm_layers, c, seed);
    add_normal(w, "trm.proj", c, d, seed);
    add_norm(w, running, "trm.norm", d);
    add_block(w, running, "cam", config.cam_layers, d, seed);
    add_normal(w, "cam.lin1", d, d, seed);
    add_norm(w, running, "cam.norm", d);
    add_normal(w, "cam.lin2", d, d, seed);
    if (config.ffm) {
        for (const char* level : {"trm", "cam"}) {
            add_normal(w, std::string(level) + ".ffm.w1", d, config.ffm_hidden, seed);
            add_normal(w, std::string(level) + ".ffm.w2", config.ffm_hidden, d, seed);
        }
    }
    return ParameterSet(config, std::move(w), std::move(running));
}

const Matrix& ParameterSet::weight(const std::string& name) const {
    const auto it = weights_.find(name);
    if (it == weights_.end()) throw ValidationError("parameter set: no weight named '" + name + "'");
    return it->second;
}

const RunningStats& ParameterSet::running_stats(const std::string& name) const {
    const auto it = running_.find(name);
    if (it == running_.end()) throw ValidationError("parameter set: no running statistics named '" + name + "'");
    return it->second;
}

void ParameterSet::apply(const ForwardStats& stats) {
    for (const auto& [name, moments] : stats.moments) {
        if (moments.mean.empty()) continue;  // single-row fallback observed nothing
        const auto it = running_.find(name);
        if (it == running_.end()) throw ValidationError("parameter set: no running statistics named '" + name + "'");
        update_running_stats(it->second, moments);
    }
}

Var trm_forward(Tape& tape, std::span<const Minutia> minutiae, const ParameterSet& params, Mode mode,
                ForwardStats* stats) {
    if (minutiae.size() < 2) {
        throw DataQualityError("trm_forward: need at least two minutiae, got " + std::to_string(minutiae.size()));
    }
    for (const Minutia& m : minutiae) {
        if (!std::isfinite(m.x) || !std::isfinite(m.y) || !std::isfinite(m.d)) {
            throw DataQualityError("trm_forward: non-finite minutia");
        }
    }
    const ModelConfig& cfg = params.config();

    std::vector<Minutia> pts(minutiae.begin(), minutiae.end());
    std::sort(pts.begin(), pts.end(),
              [](const Minutia& a, const Minutia& b) { return std::tie(a.x, a.y, a.d) < std::tie(b.x, b.y, b.d); });
    if (cfg.centering) {
        double cx = 0.0;
        double cy = 0.0;
        for (const Minutia& m : pts) {
            cx += m.x;
            cy += m.y;
        }
        cx /= static_cast<double>(pts.size());
        cy /= static_cast<double>(pts.size());
        for (Minutia& m : pts) {
            m.x -= cx;
            m.y -= cy;
        }
    }

    const NeighborGraph ranking =
        knn_graph(minutia_positions(pts), ranking_depth(cfg.k_minutia, cfg.trm_layers, cfg.dilation));

    Binder bind(tape, params, stats);
    const Var x = matmul(tape.constant(minutia_features(pts)), bind("trm.stem"));
    const auto weights = bind.block("trm", cfg.trm_layers);
    const GcnBlockConfig block{cfg.trm_layers, cfg.width, cfg.k_minutia, cfg.dilation, cfg.residual};
    const GcnBlockOutput out = gcn_block(x, ranking, block, weights, mode);

    Var h = gelu(matmul(out.features, bind("trm.proj")));
    h = apply_norm(h, bind.norm("trm.norm"), mode);
    if (cfg.ffm) h = ffm(h, bind.ffm("trm"));
    return column_max(h);
}

Var cam_forward(Tape& tape, Var minutia_embeddings, const ParameterSet& params, Mode mode, ForwardStats* stats,
                CamTrace* trace) {
    const ModelConfig& cfg = params.config();
    const Matrix& m = minutia_embeddings.value();
    if (m.rows() < 2) throw DataQualityError("cam_forward: a batch needs at least two fingerprints");
    if (m.cols() != cfg.embed_dim) throw ShapeError("cam_forward: embedding width does not match config");

    const auto order = canonical_order(m);
    const auto inverse = inverse_permutation(order);
    const Var x = gather_rows(minutia_embeddings, order);
    const NeighborGraph ranking =
        fingerprint_graph(x.value(), ranking_depth(cfg.k_fingerprint, cfg.cam_layers, cfg.dilation));

    Binder bind(tape, params, stats);
    const auto weights = bind.block("cam", cfg.cam_layers);
    const GcnBlockConfig block{cfg.cam_layers, cfg.embed_dim, cfg.k_fingerprint, cfg.dilation, cfg.residual};
    const GcnBlockOutput out = gcn_block(x, ranking, block, weights, mode);
    const Var h = cam_head(bind, out.features, cfg, mode);

    if (trace != nullptr) {
        std::vector<std::vector<std::size_t>> lists(m.rows());
        for (std::size_t k = 0; k < ranking.vertex_count(); ++k) {
            for (std::size_t j : ranking.neighbors(k)) lists[order[k]].push_back(order[j]);
        }
        trace->ranking = NeighborGraph::from_lists(m.rows(), lists);
        trace->layer_inputs.clear();
        trace->snapshots.clear();
        for (const Matrix& li : out.layer_inputs) trace->layer_inputs.push_back(permute_rows(li, inverse));
        for (const Matrix& s : out.snapshots) trace->snapshots.push_back(permute_rows(s, inverse));
    }
    return gather_rows(h, inverse);
}

Var embed_batch(Tape& tape, const std::vector<std::vector<Minutia>>& fingerprints, const ParameterSet& params,
                Mode mode, ForwardStats* stats) {
    std::vector<Var> rows;
    rows.reserve(fingerprints.size());
    for (const auto& fp : fingerprints) rows.push_back(trm_forward(tape, fp, params, mode, stats));
    if (rows.size() < 2) throw DataQualityError("embed_batch: a batch needs at least two fingerprints");
    return cam_forward(tape, stack_rows(rows), params, mode, stats);
}

Matrix minutia_embeddings(const std::vector<std::vector<Minutia>>& fingerprints, const ParameterSet& params) {
    Matrix out(fingerprints.size(), params.config().embed_dim);
    for (std::size_t i = 0; i < fingerprints.size(); ++i) {
        Tape tape(false);
        const Matrix& row = trm_forward(tape, fingerprints[i], params, Mode::infer, nullptr).value();
        std::copy(row.values().begin(), row.values().end(), out.row(i).begin());
    }
    return out;
}

Matrix embed_batch(const std::vector<std::vector<Minutia>>& fingerprints, const ParameterSet& params) {
    const Matrix m = minutia_embeddings(fingerprints, params);
    Tape tape(false);
    return cam_forward(tape, tape.constant(m), params, Mode::infer, nullptr).value();
}

Gallery Gallery::build(const Matrix& minutia_embeddings, const ParameterSet& params) {
    Gallery g;
    g.minutia_embeddings_ = minutia_embeddings;
    Tape tape(false);
    CamTrace trace;
    g.embeddings_ = cam_forward(tape, tape.constant(minutia_embeddings), params, Mode::infer, nullptr, &trace).value();
    g.layer_inputs_ = std::move(trace.layer_inputs);
    g.ranking_ = std::move(trace.ranking);
    return g;
}

Matrix cam_query(const Matrix& query_minutia_embedding, const Gallery& gallery, const NeighborGraph& ranking,
                 const ParameterSet& params) {
    const ModelConfig& cfg = params.config();
    if (query_minutia_embedding.rows() != 1 || query_minutia_embedding.cols() != cfg.embed_dim) {
        throw ShapeError("cam_query: query must be 1x" + std::to_string(cfg.embed_dim));
    }
    if (ranking.vertex_count() != 1 || ranking.source_count() != gallery.size()) {
        throw ShapeError("cam_query: ranking must attach one vertex to the gallery");
    }
    Tape tape(false);
    Binder bind(tape, params, nullptr);
    const auto weights = bind.block("cam", cfg.cam_layers);
    const auto rates = dilation_plan(cfg.cam_layers, cfg.dilation);
    Var x = tape.constant(query_minutia_embedding);
    for (std::size_t l = 0; l < cfg.cam_layers; ++l) {
        const NeighborGraph graph = select_dilated(ranking, cfg.k_fingerprint, rates[l]);
        const Var sources = tape.constant(gallery.layer_inputs()[l]);
        const Var y = gelu(apply_norm(edge_conv(x, sources, graph, weights[l].conv), weights[l].norm, Mode::infer));
        x = cfg.residual ? add(y, x) : y;
    }
    return cam_head(bind, x, cfg, Mode::infer).value();
}

Embedding embed_with_gallery(std::span<const Minutia> query, const Gallery& gallery, const ParameterSet& params) {
    const ModelConfig& cfg = params.config();
    if (gallery.size() < cfg.k_fingerprint || gallery.size() < 1) {
        throw DataQualityError("embed_with_gallery: gallery holds " + std::to_string(gallery.size()) +
                               " entries, need at least " + std::to_string(cfg.k_fingerprint));
    }
    Tape tape(false);
    const Matrix qm = trm_forward(tape, query, params, Mode::infer, nullptr).value();
    const Matrix& gm = gallery.minutia_embeddings();
    for (std::size_t i = 0; i < gallery.size(); ++i) {
        if (std::ranges::equal(gm.row(i), qm.row(0))) {
            const auto row = gallery.embeddings().row(i);
            return {std::vector<double>(row.begin(), row.end()), EmbeddingLevel::fingerprint};
        }
    }
    const NeighborGraph ranking =
        knn_query(qm, gm, ranking_depth(cfg.k_fingerprint, cfg.cam_layers, cfg.dilation));
    const Matrix out = cam_query(qm, gallery, ranking, params);
    return {std::vector<double>(out.values().begin(), out.values().end()), EmbeddingLevel::fingerprint};
}

} // namespace mragnn
