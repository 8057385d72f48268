#include "mragnn/synthetic.hpp"

#include "mragnn/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

namespace mragnn {

namespace {

constexpr double kRegionLo = 0.1;
constexpr double kRegionHi = 0.9;
constexpr std::size_t kPlacementAttempts = 1000;
constexpr int kImpressionRedraws = 64;

double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

double clamp_unit(double v) { return std::clamp(v, 0.0, 1.0); }

std::vector<Minutia> centered(std::span<const Minutia> pts) {
    double cx = 0.0;
    double cy = 0.0;
    for (const Minutia& m : pts) {
        cx += m.x;
        cy += m.y;
    }
    const double n = static_cast<double>(std::max<std::size_t>(pts.size(), 1));
    std::vector<Minutia> out(pts.begin(), pts.end());
    for (Minutia& m : out) {
        m.x -= cx / n;
        m.y -= cy / n;
    }
    return out;
}

double mean_nearest(std::span<const Minutia> from, std::span<const Minutia> to) {
    double total = 0.0;
    for (const Minutia& a : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const Minutia& b : to) best = std::min(best, minutia_distance(a, b));
        total += best;
    }
    return total / static_cast<double>(from.size());
}

} // namespace

PerturbSpec PerturbSpec::none() { return {0.0, 0.0, 0.0, 0.0, 0.0, 0, 0}; }

void PerturbSpec::validate() const {
    if (rotation_deg < 0.0 || translation < 0.0 || jitter < 0.0 || orientation_jitter_deg < 0.0 || dropout < 0.0) {
        throw ValidationError("perturb spec: parameters must be nonnegative");
    }
    if (rotation_deg > 180.0) throw ValidationError("perturb spec: rotation range exceeds 180 degrees");
    if (dropout > 1.0) throw ValidationError("perturb spec: dropout probability exceeds 1");
    if (spurious_min > spurious_max) throw ValidationError("perturb spec: spurious_min exceeds spurious_max");
}

void DatasetSpec::validate() const {
    if (identities < 2) throw ValidationError("dataset spec: need at least 2 identities");
    if (impressions < 2) throw ValidationError("dataset spec: need at least 2 impressions per identity");
    if (min_minutiae < 8) throw ValidationError("dataset spec: min_minutiae must be at least 8");
    if (min_minutiae > max_minutiae) throw ValidationError("dataset spec: min_minutiae exceeds max_minutiae");
    perturb.validate();
}

IdentityTemplate gen_identity(std::int64_t identity_id, Rng& rng, const DatasetSpec& spec) {
    const auto count = static_cast<std::size_t>(rng.uniform_int(spec.min_minutiae, spec.max_minutiae));
    IdentityTemplate t;
    t.identity_id = identity_id;
    t.minutiae.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        bool placed = false;
        for (std::size_t attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
            const Minutia m{rng.uniform(kRegionLo, kRegionHi), rng.uniform(kRegionLo, kRegionHi),
                            rng.uniform(0.0, 2.0 * std::numbers::pi)};
            placed = std::all_of(t.minutiae.begin(), t.minutiae.end(),
                                 [&](const Minutia& o) { return minutia_distance(m, o) >= kMinutiaSpacing; });
            if (placed) t.minutiae.push_back(m);
        }
        if (!placed) {
            throw DataQualityError("gen_identity: cannot place " + std::to_string(count) +
                                   " minutiae with spacing 0.02 (density too high)");
        }
    }
    return t;
}

std::vector<Minutia> gen_impression(const IdentityTemplate& templ, const PerturbSpec& perturb, Rng& rng) {
    perturb.validate();
    const std::size_t n = templ.minutiae.size();
    double cx = 0.0;
    double cy = 0.0;
    for (const Minutia& m : templ.minutiae) {
        cx += m.x;
        cy += m.y;
    }
    cx /= static_cast<double>(std::max<std::size_t>(n, 1));
    cy /= static_cast<double>(std::max<std::size_t>(n, 1));

    std::vector<Minutia> out;
    std::vector<bool> kept;
    std::vector<Minutia> moved(n);
    for (int draw = 0; draw < kImpressionRedraws; ++draw) {
        const double angle = deg_to_rad(rng.uniform(-perturb.rotation_deg, perturb.rotation_deg));
        const double tx = rng.uniform(-perturb.translation, perturb.translation);
        const double ty = rng.uniform(-perturb.translation, perturb.translation);
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        out.clear();
        kept.assign(n, false);
        for (std::size_t i = 0; i < n; ++i) {
            Minutia m = templ.minutiae[i];
            if (angle != 0.0) {
                const double dx = m.x - cx;
                const double dy = m.y - cy;
                m.x = cx + c * dx - s * dy;
                m.y = cy + s * dx + c * dy;
                m.d = wrap_orientation(m.d + angle);
            }
            m.x += tx + perturb.jitter * rng.normal();
            m.y += ty + perturb.jitter * rng.normal();
            m.d = wrap_orientation(m.d + deg_to_rad(perturb.orientation_jitter_deg) * rng.normal());
            m.x = clamp_unit(m.x);
            m.y = clamp_unit(m.y);
            moved[i] = m;
            if (perturb.dropout > 0.0 && rng.bernoulli(perturb.dropout)) continue;
            kept[i] = true;
            out.push_back(m);
        }
        const auto spurious = static_cast<std::size_t>(rng.uniform_int(perturb.spurious_min, perturb.spurious_max));
        for (std::size_t k = 0; k < spurious; ++k) {
            out.push_back({rng.uniform(kRegionLo, kRegionHi), rng.uniform(kRegionLo, kRegionHi),
                           rng.uniform(0.0, 2.0 * std::numbers::pi)});
        }
        if (out.size() >= 2) return out;
    }
    // Every redraw lost too much: restore dropped minutiae of the last draw in template order.
    for (std::size_t i = 0; i < n && out.size() < 2; ++i) {
        if (!kept[i]) out.push_back(moved[i]);
    }
    return out;
}

Dataset gen_dataset(const DatasetSpec& spec) {
    spec.validate();
    Dataset data;
    data.reserve(spec.identities * spec.impressions);
    for (std::size_t id = 0; id < spec.identities; ++id) {
        Rng identity_rng = Rng::derive(spec.seed, {0, id});
        const IdentityTemplate templ = gen_identity(static_cast<std::int64_t>(id), identity_rng, spec);
        for (std::size_t imp = 0; imp < spec.impressions; ++imp) {
            Rng impression_rng = Rng::derive(spec.seed, {1, id, imp});
            data.push_back({static_cast<std::int64_t>(id), static_cast<std::int64_t>(imp),
                            gen_impression(templ, spec.perturb, impression_rng)});
        }
    }
    return data;
}

DatasetSplit split_per_identity(const Dataset& data, std::size_t first_count) {
    std::map<std::int64_t, std::vector<std::size_t>> by_identity;
    for (std::size_t i = 0; i < data.size(); ++i) by_identity[data[i].identity_id].push_back(i);
    std::vector<bool> to_first(data.size(), false);
    for (auto& [id, rows] : by_identity) {
        std::stable_sort(rows.begin(), rows.end(),
                         [&](std::size_t a, std::size_t b) { return data[a].impression_id < data[b].impression_id; });
        for (std::size_t k = 0; k < rows.size() && k < first_count; ++k) to_first[rows[k]] = true;
    }
    DatasetSplit split;
    for (std::size_t i = 0; i < data.size(); ++i) (to_first[i] ? split.first : split.rest).push_back(data[i]);
    return split;
}

double set_distance(std::span<const Minutia> a, std::span<const Minutia> b) {
    if (a.empty() || b.empty()) throw ValidationError("set_distance: empty minutia set");
    const auto ca = centered(a);
    const auto cb = centered(b);
    return 0.5 * (mean_nearest(ca, cb) + mean_nearest(cb, ca));
}

} // namespace mragnn
