#include "mragnn/training.hpp"

#include "mragnn/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numbers>

namespace mragnn {

namespace {

template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, i - 1));
        std::swap(items[i - 1], items[j]);
    }
}

std::map<std::int64_t, std::vector<std::size_t>> records_by_identity(const Dataset& data) {
    std::map<std::int64_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < data.size(); ++i) groups[data[i].identity_id].push_back(i);
    return groups;
}

std::vector<std::vector<std::int64_t>> identity_chunks(std::vector<std::int64_t> ids, std::size_t per_batch) {
    std::vector<std::vector<std::int64_t>> chunks;
    for (std::size_t i = 0; i < ids.size(); i += per_batch) {
        chunks.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(i),
                            ids.begin() + static_cast<std::ptrdiff_t>(std::min(ids.size(), i + per_batch)));
    }
    if (chunks.size() > 1 && chunks.back().size() < 2) {
        chunks[chunks.size() - 2].insert(chunks[chunks.size() - 2].end(), chunks.back().begin(), chunks.back().end());
        chunks.pop_back();
    }
    return chunks;
}

void validate_training_data(const Dataset& data) {
    std::size_t usable = 0;
    for (const auto& [id, rows] : records_by_identity(data)) usable += rows.size() >= 2 ? 1 : 0;
    if (usable < 2) {
        throw ValidationError("train: dataset needs at least 2 identities with at least 2 impressions each");
    }
}

} // namespace

void TrainConfig::validate() const {
    if (!(margin > 0.0)) throw ValidationError("train config: margin must be positive");
    if (!(learning_rate >= 0.0)) throw ValidationError("train config: learning_rate must be nonnegative");
    if (!(min_learning_rate >= 0.0)) throw ValidationError("train config: min_learning_rate must be nonnegative");
    if (batch_identities < 2) throw ValidationError("train config: batch_identities must be at least 2");
    if (batch_impressions < 2) throw ValidationError("train config: batch_impressions must be at least 2");
    if (batch_identities * batch_impressions < 4) throw ValidationError("train config: batch size must be at least 4");
    if (!(weight_decay >= 0.0)) throw ValidationError("train config: weight_decay must be nonnegative");
    if (augment_rotation_deg < 0.0 || augment_rotation_deg > 180.0) {
        throw ValidationError("train config: augment_rotation_deg must lie in [0, 180]");
    }
    if (!(augment_translation >= 0.0)) throw ValidationError("train config: augment_translation must be nonnegative");
}

Matrix pairwise_distances(const Matrix& embeddings) {
    const std::size_t n = embeddings.rows();
    Matrix d(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double sq = 0.0;
            for (std::size_t c = 0; c < embeddings.cols(); ++c) {
                const double diff = embeddings(i, c) - embeddings(j, c);
                sq += diff * diff;
            }
            d(i, j) = d(j, i) = std::sqrt(sq);
        }
    }
    return d;
}

std::vector<Triplet> mine_triplets(const Matrix& embeddings, std::span<const std::int64_t> labels, double margin,
                                   MiningMode mode) {
    if (labels.size() != embeddings.rows()) throw ShapeError("mine_triplets: one label per embedding row required");
    const Matrix dist = pairwise_distances(embeddings);
    std::map<std::int64_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);

    std::vector<Triplet> out;
    for (const auto& [label, members] : groups) {
        if (members.size() < 2) continue;
        double best = std::numeric_limits<double>::infinity();
        Triplet t;
        for (std::size_t x = 0; x < members.size(); ++x) {
            for (std::size_t y = x + 1; y < members.size(); ++y) {
                if (dist(members[x], members[y]) < best) {
                    best = dist(members[x], members[y]);
                    t.anchor = members[x];
                    t.positive = members[y];
                }
            }
        }
        const double d_ap = best;
        double hardest = std::numeric_limits<double>::infinity();
        double semi = std::numeric_limits<double>::infinity();
        std::size_t hardest_idx = labels.size();
        std::size_t semi_idx = labels.size();
        for (std::size_t n = 0; n < labels.size(); ++n) {
            if (labels[n] == label) continue;
            const double d = dist(t.anchor, n);
            if (d < hardest) {
                hardest = d;
                hardest_idx = n;
            }
            if (d > d_ap && d < d_ap + margin && d < semi) {
                semi = d;
                semi_idx = n;
            }
        }
        if (hardest_idx == labels.size()) continue;  // no negatives in this batch
        t.negative = (mode == MiningMode::semi_hard && semi_idx != labels.size()) ? semi_idx : hardest_idx;
        out.push_back(t);
    }
    return out;
}

double triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                    std::span<const double> negative, double margin) {
    if (anchor.size() != positive.size() || anchor.size() != negative.size()) {
        throw ShapeError("triplet_loss: embedding widths differ");
    }
    double ap = 0.0;
    double an = 0.0;
    for (std::size_t c = 0; c < anchor.size(); ++c) {
        ap += (anchor[c] - positive[c]) * (anchor[c] - positive[c]);
        an += (anchor[c] - negative[c]) * (anchor[c] - negative[c]);
    }
    return std::max(std::sqrt(ap) - std::sqrt(an) + margin, 0.0);
}

Var triplet_loss(Var embeddings, const std::vector<Triplet>& triplets, double margin) {
    if (triplets.empty()) throw ValidationError("triplet_loss: no triplets");
    std::vector<std::pair<std::size_t, std::size_t>> ap;
    std::vector<std::pair<std::size_t, std::size_t>> an;
    for (const Triplet& t : triplets) {
        ap.emplace_back(t.anchor, t.positive);
        an.emplace_back(t.anchor, t.negative);
    }
    const Var hinge =
        relu(add_scalar(sub(pair_distances(embeddings, ap), pair_distances(embeddings, an)), margin));
    return mean(hinge);
}

double cosine_lr(std::uint64_t step, double base_lr, double min_lr, std::uint64_t horizon) {
    const double floor = std::min(min_lr, base_lr);
    if (horizon == 0 || step >= horizon) return step == 0 && horizon == 0 ? base_lr : floor;
    const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(horizon);
    return floor + 0.5 * (base_lr - floor) * (1.0 + std::cos(phase));
}

bool optimizer_step(NamedArrays& params, const GradientMap& grads, OptimizerState& state, double lr,
                    const AdamWConfig& config) {
    for (const auto& [name, g] : grads) {
        const auto it = params.find(name);
        if (it == params.end()) throw ValidationError("optimizer_step: gradient for unknown parameter '" + name + "'");
        if (!it->second.same_shape(g)) throw ShapeError("optimizer_step: gradient shape mismatch for '" + name + "'");
        if (!g.all_finite()) {
            diagnostic("optimizer_step: non-finite gradient for '" + name + "'; step skipped");
            return false;
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(config.beta1, t);
    const double bc2 = 1.0 - std::pow(config.beta2, t);
    const double decay = 1.0 - lr * config.weight_decay;
    for (const auto& [name, g] : grads) {
        Matrix& p = params.at(name);
        Matrix& m = state.first_moment.try_emplace(name, p.rows(), p.cols()).first->second;
        Matrix& v = state.second_moment.try_emplace(name, p.rows(), p.cols()).first->second;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g.data()[i];
            double& mi = m.data()[i];
            double& vi = v.data()[i];
            mi = config.beta1 * mi + (1.0 - config.beta1) * gi;
            vi = config.beta2 * vi + (1.0 - config.beta2) * gi * gi;
            double& pi = p.data()[i];
            pi *= decay;
            pi -= lr * (mi / bc1) / (std::sqrt(vi / bc2) + config.epsilon);
        }
    }
    return true;
}

std::vector<Minutia> augment(std::span<const Minutia> minutiae, double rotation_deg, double translation, Rng& rng) {
    const double angle = rng.uniform(-rotation_deg, rotation_deg) * std::numbers::pi / 180.0;
    const double tx = rng.uniform(-translation, translation);
    const double ty = rng.uniform(-translation, translation);
    std::vector<Minutia> out(minutiae.begin(), minutiae.end());
    if (out.empty()) return out;
    if (angle != 0.0) {
        double cx = 0.0;
        double cy = 0.0;
        for (const Minutia& m : out) {
            cx += m.x;
            cy += m.y;
        }
        cx /= static_cast<double>(out.size());
        cy /= static_cast<double>(out.size());
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        for (Minutia& m : out) {
            const double dx = m.x - cx;
            const double dy = m.y - cy;
            m.x = cx + c * dx - s * dy;
            m.y = cy + s * dx + c * dy;
            m.d = wrap_orientation(m.d + angle);
        }
    }
    for (Minutia& m : out) {
        m.x += tx;
        m.y += ty;
    }
    return out;
}

std::vector<std::vector<std::size_t>> epoch_batches(const Dataset& data, const TrainConfig& config, std::size_t epoch) {
    const auto groups = records_by_identity(data);
    std::vector<std::int64_t> ids;
    for (const auto& [id, rows] : groups) ids.push_back(id);
    Rng rng = Rng::derive(config.seed, {2, epoch});
    shuffle(ids, rng);

    std::vector<std::vector<std::size_t>> batches;
    for (const auto& chunk : identity_chunks(ids, config.batch_identities)) {
        std::vector<std::size_t> batch;
        for (std::int64_t id : chunk) {
            std::vector<std::size_t> rows = groups.at(id);
            shuffle(rows, rng);
            rows.resize(std::min(rows.size(), config.batch_impressions));
            batch.insert(batch.end(), rows.begin(), rows.end());
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

std::size_t batches_per_epoch(const Dataset& data, const TrainConfig& config) {
    std::vector<std::int64_t> ids;
    for (const auto& [id, rows] : records_by_identity(data)) ids.push_back(id);
    return identity_chunks(ids, config.batch_identities).size();
}

TrainState initial_state(const ModelConfig& model, const TrainConfig& config) {
    TrainState s;
    s.params = ParameterSet::initialize(model, config.seed);
    return s;
}

StepResult train_step(const Dataset& data, const std::vector<std::size_t>& batch, const TrainConfig& config,
                      std::size_t epoch, std::uint64_t horizon, TrainState& state) {
    StepResult result;
    const std::size_t b = batch.size();
    std::vector<std::int64_t> labels(b);
    std::vector<std::unique_ptr<Tape>> tapes(b);
    std::vector<Var> rows(b);
    std::vector<ForwardStats> trm_stats(b);
    const ParameterSet& params = state.params;
    const std::size_t d = params.config().embed_dim;

    Matrix m(b, d);
    for (std::size_t k = 0; k < b; ++k) {
        const FingerprintRecord& rec = data.at(batch[k]);
        labels[k] = rec.identity_id;
        Rng aug_rng = Rng::derive(config.seed, {3, epoch, batch[k]});
        const auto fp = augment(rec.minutiae, config.augment_rotation_deg, config.augment_translation, aug_rng);
        tapes[k] = std::make_unique<Tape>();
        rows[k] = trm_forward(*tapes[k], fp, params, Mode::train, &trm_stats[k]);
        std::copy(rows[k].value().values().begin(), rows[k].value().values().end(), m.row(k).begin());
    }

    Tape cam;
    const Var cam_in = cam.input(m);
    ForwardStats cam_stats;
    const Var out = cam_forward(cam, cam_in, params, Mode::train, &cam_stats);
    const auto triplets = mine_triplets(out.value(), labels, config.margin, config.mining);
    result.triplets = triplets.size();
    result.lr = cosine_lr(state.optimizer.step, config.learning_rate, config.min_learning_rate, horizon);
    if (triplets.empty()) {
        diagnostic("train_step: batch produced no triplets; skipped");
        return result;
    }
    for (const Triplet& t : triplets) {
        const auto e = out.value();
        if (triplet_loss(e.row(t.anchor), e.row(t.positive), e.row(t.negative), config.margin) > 0.0) {
            ++result.active_triplets;
        }
    }

    const Var loss = triplet_loss(out, triplets, config.margin);
    result.loss = loss.value()(0, 0);
    if (!std::isfinite(result.loss)) throw RuntimeFailure("train_step: non-finite loss");

    GradientMap grads = cam.backward(loss);
    const Matrix* dm = cam.grad(cam_in);
    for (std::size_t k = 0; k < b; ++k) {
        Matrix seed(1, d);
        if (dm != nullptr) std::copy(dm->row(k).begin(), dm->row(k).end(), seed.row(0).begin());
        for (auto& [name, g] : tapes[k]->backward(rows[k], seed)) {
            auto [it, inserted] = grads.try_emplace(name, g);
            if (!inserted) it->second += g;
        }
        tapes[k].reset();
    }

    AdamWConfig adam;
    adam.weight_decay = config.weight_decay;
    if (!optimizer_step(state.params.weights(), grads, state.optimizer, result.lr, adam)) return result;
    for (const ForwardStats& s : trm_stats) state.params.apply(s);
    state.params.apply(cam_stats);
    result.applied = true;
    return result;
}

void train(const Dataset& data, const TrainConfig& config, TrainState& state,
           const std::function<void(const EpochRecord&)>& on_epoch) {
    config.validate();
    validate_training_data(data);
    const std::uint64_t horizon = config.schedule_horizon != 0
                                      ? config.schedule_horizon
                                      : static_cast<std::uint64_t>(config.epochs * batches_per_epoch(data, config));
    while (state.epochs_completed < config.epochs) {
        const std::size_t epoch = state.epochs_completed + 1;
        const TrainState snapshot = state;
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = cosine_lr(state.optimizer.step, config.learning_rate, config.min_learning_rate, horizon);
        double loss_sum = 0.0;
        std::size_t loss_batches = 0;
        std::size_t triplets = 0;
        std::size_t active = 0;
        try {
            for (const auto& batch : epoch_batches(data, config, epoch)) {
                const StepResult r = train_step(data, batch, config, epoch, horizon, state);
                if (r.triplets == 0) continue;
                loss_sum += r.loss;
                ++loss_batches;
                triplets += r.triplets;
                active += r.active_triplets;
            }
        } catch (const RuntimeFailure&) {
            state = snapshot;
            throw;
        }
        rec.mean_loss = loss_batches == 0 ? 0.0 : loss_sum / static_cast<double>(loss_batches);
        rec.active_triplet_fraction = triplets == 0 ? 0.0 : static_cast<double>(active) / static_cast<double>(triplets);
        state.log.push_back(rec);
        state.epochs_completed = epoch;
        if (on_epoch) on_epoch(rec);
    }
}

} // namespace mragnn
