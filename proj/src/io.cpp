#include "mragnn/io.hpp"

#include "mragnn/error.hpp"

#include <json.hpp>

#include <cmath>
#include <concepts>
#include <fstream>
#include <set>
#include <sstream>
#include <system_error>

namespace mragnn {

using nlohmann::json;

namespace {

/// Typed field access with unknown-key rejection.
class Fields {
public:
    Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) fail("expected an object");
    }

    void reject_unknown(std::initializer_list<const char*> known) const {
        const std::set<std::string> allowed(known.begin(), known.end());
        for (const auto& [key, value] : j_.items()) {
            if (!allowed.contains(key)) fail("unknown key '" + key + "'");
        }
    }

    template <typename T>
    void get(const char* key, T& out) const {
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        read(*it, key, out);
    }

    template <typename T>
    T require(const char* key) const {
        const auto it = j_.find(key);
        if (it == j_.end()) fail(std::string("missing key '") + key + "'");
        T out{};
        read(*it, key, out);
        return out;
    }

    const json& at(const char* key) const {
        const auto it = j_.find(key);
        if (it == j_.end()) fail(std::string("missing key '") + key + "'");
        return *it;
    }

    bool has(const char* key) const { return j_.contains(key); }

    [[noreturn]] void fail(const std::string& msg) const { throw ValidationError(where_ + ": " + msg); }

private:
    template <std::unsigned_integral U>
    void read(const json& v, const char* key, U& out) const {
        if (!v.is_number_unsigned()) fail(std::string("'") + key + "' must be a nonnegative integer");
        out = v.get<U>();
    }
    void read(const json& v, const char* key, std::int64_t& out) const {
        if (!v.is_number_integer()) fail(std::string("'") + key + "' must be an integer");
        out = v.get<std::int64_t>();
    }
    void read(const json& v, const char* key, double& out) const {
        if (!v.is_number()) fail(std::string("'") + key + "' must be a number");
        out = v.get<double>();
    }
    void read(const json& v, const char* key, bool& out) const {
        if (!v.is_boolean()) fail(std::string("'") + key + "' must be true or false");
        out = v.get<bool>();
    }
    void read(const json& v, const char* key, std::string& out) const {
        if (!v.is_string()) fail(std::string("'") + key + "' must be a string");
        out = v.get<std::string>();
    }

    const json& j_;
    std::string where_;
};

json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(what + ": malformed document: " + e.what());
    }
}

const char* mining_name(MiningMode m) { return m == MiningMode::hardest ? "hardest" : "semi_hard"; }

MiningMode parse_mining(const std::string& s) {
    if (s == "hardest") return MiningMode::hardest;
    if (s == "semi_hard") return MiningMode::semi_hard;
    throw ValidationError("train config: mining must be 'hardest' or 'semi_hard', got '" + s + "'");
}

json model_json(const ModelConfig& m) {
    return {{"width", m.width},         {"embed_dim", m.embed_dim},         {"trm_layers", m.trm_layers},
            {"cam_layers", m.cam_layers}, {"k_minutia", m.k_minutia},       {"k_fingerprint", m.k_fingerprint},
            {"ffm_hidden", m.ffm_hidden}, {"dilation", m.dilation},         {"residual", m.residual},
            {"ffm", m.ffm},             {"centering", m.centering}};
}

ModelConfig model_from(const json& j) {
    const Fields f(j, "model config");
    f.reject_unknown({"width", "embed_dim", "trm_layers", "cam_layers", "k_minutia", "k_fingerprint", "ffm_hidden",
                      "dilation", "residual", "ffm", "centering"});
    ModelConfig m;
    f.get("width", m.width);
    f.get("embed_dim", m.embed_dim);
    f.get("trm_layers", m.trm_layers);
    f.get("cam_layers", m.cam_layers);
    f.get("k_minutia", m.k_minutia);
    f.get("k_fingerprint", m.k_fingerprint);
    f.get("ffm_hidden", m.ffm_hidden);
    f.get("dilation", m.dilation);
    f.get("residual", m.residual);
    f.get("ffm", m.ffm);
    f.get("centering", m.centering);
    return m;
}

json train_json(const TrainConfig& t) {
    return {{"margin", t.margin},
            {"learning_rate", t.learning_rate},
            {"min_learning_rate", t.min_learning_rate},
            {"epochs", t.epochs},
            {"batch_identities", t.batch_identities},
            {"batch_impressions", t.batch_impressions},
            {"schedule_horizon", t.schedule_horizon},
            {"seed", t.seed},
            {"mining", mining_name(t.mining)},
            {"weight_decay", t.weight_decay},
            {"augment_rotation_deg", t.augment_rotation_deg},
            {"augment_translation", t.augment_translation}};
}

TrainConfig train_from(const json& j) {
    const Fields f(j, "train config");
    f.reject_unknown({"margin", "learning_rate", "min_learning_rate", "epochs", "batch_identities",
                      "batch_impressions", "schedule_horizon", "seed", "mining", "weight_decay",
                      "augment_rotation_deg", "augment_translation"});
    TrainConfig t;
    f.get("margin", t.margin);
    f.get("learning_rate", t.learning_rate);
    f.get("min_learning_rate", t.min_learning_rate);
    f.get("epochs", t.epochs);
    f.get("batch_identities", t.batch_identities);
    f.get("batch_impressions", t.batch_impressions);
    f.get("schedule_horizon", t.schedule_horizon);
    f.get("seed", t.seed);
    std::string mining = mining_name(t.mining);
    f.get("mining", mining);
    t.mining = parse_mining(mining);
    f.get("weight_decay", t.weight_decay);
    f.get("augment_rotation_deg", t.augment_rotation_deg);
    f.get("augment_translation", t.augment_translation);
    return t;
}

json run_json(const RunConfig& c) {
    return {{"model", model_json(c.model)},
            {"train", train_json(c.train)},
            {"data", {{"train_impressions", c.data.train_impressions}}}};
}

RunConfig run_from(const json& j) {
    const Fields f(j, "run config");
    f.reject_unknown({"model", "train", "data"});
    RunConfig c;
    if (f.has("model")) c.model = model_from(f.at("model"));
    if (f.has("train")) c.train = train_from(f.at("train"));
    if (f.has("data")) {
        const Fields d(f.at("data"), "data config");
        d.reject_unknown({"train_impressions"});
        d.get("train_impressions", c.data.train_impressions);
    }
    c.validate();
    return c;
}

json perturb_json(const PerturbSpec& p) {
    return {{"rotation_deg", p.rotation_deg},
            {"translation", p.translation},
            {"jitter", p.jitter},
            {"orientation_jitter_deg", p.orientation_jitter_deg},
            {"dropout", p.dropout},
            {"spurious_min", p.spurious_min},
            {"spurious_max", p.spurious_max}};
}

json spec_json(const DatasetSpec& s) {
    return {{"identities", s.identities},     {"impressions", s.impressions}, {"min_minutiae", s.min_minutiae},
            {"max_minutiae", s.max_minutiae}, {"seed", s.seed},               {"perturb", perturb_json(s.perturb)}};
}

DatasetSpec spec_from(const json& j) {
    const Fields f(j, "dataset spec");
    f.reject_unknown({"identities", "impressions", "min_minutiae", "max_minutiae", "seed", "perturb"});
    DatasetSpec s;
    f.get("identities", s.identities);
    f.get("impressions", s.impressions);
    f.get("min_minutiae", s.min_minutiae);
    f.get("max_minutiae", s.max_minutiae);
    f.get("seed", s.seed);
    if (f.has("perturb")) {
        const Fields p(f.at("perturb"), "perturb spec");
        p.reject_unknown({"rotation_deg", "translation", "jitter", "orientation_jitter_deg", "dropout", "spurious_min",
                          "spurious_max"});
        p.get("rotation_deg", s.perturb.rotation_deg);
        p.get("translation", s.perturb.translation);
        p.get("jitter", s.perturb.jitter);
        p.get("orientation_jitter_deg", s.perturb.orientation_jitter_deg);
        p.get("dropout", s.perturb.dropout);
        p.get("spurious_min", s.perturb.spurious_min);
        p.get("spurious_max", s.perturb.spurious_max);
    }
    s.validate();
    return s;
}

json matrix_json(const Matrix& m) {
    return {{"shape", {m.rows(), m.cols()}}, {"values", m.values()}};
}

Matrix matrix_from(const json& j, const std::string& where) {
    const Fields f(j, where);
    f.reject_unknown({"shape", "values"});
    const json& shape = f.at("shape");
    const json& values = f.at("values");
    if (!shape.is_array() || shape.size() != 2 || !shape[0].is_number_unsigned() || !shape[1].is_number_unsigned()) {
        f.fail("shape must be [rows, cols]");
    }
    if (!values.is_array()) f.fail("values must be an array");
    const auto rows = shape[0].get<std::size_t>();
    const auto cols = shape[1].get<std::size_t>();
    if (values.size() != rows * cols) f.fail("values length does not match shape");
    std::vector<double> v;
    v.reserve(values.size());
    for (const json& x : values) {
        if (!x.is_number()) f.fail("values must be numbers");
        v.push_back(x.get<double>());
    }
    return Matrix(rows, cols, std::move(v));
}

void check_finite(double v, const std::string& where) {
    if (!std::isfinite(v)) throw DataQualityError(where + ": non-finite value");
}

} // namespace

void RunConfig::validate() const {
    model.validate();
    train.validate();
    if (data.train_impressions < 2) throw ValidationError("data config: train_impressions must be at least 2");
}

RunConfig parse_run_config(const std::string& text) { return run_from(parse_json(text, "run config")); }

std::string dump_run_config(const RunConfig& config) { return run_json(config).dump(2) + "\n"; }

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(read_text(path)); }

DatasetSpec parse_dataset_spec(const std::string& text) { return spec_from(parse_json(text, "dataset spec")); }

std::string dump_dataset_spec(const DatasetSpec& spec) { return spec_json(spec).dump(2) + "\n"; }

DatasetSpec load_dataset_spec(const std::filesystem::path& path) { return parse_dataset_spec(read_text(path)); }

std::string dataset_to_jsonl(const Dataset& data) {
    std::string out;
    for (const FingerprintRecord& r : data) {
        json minutiae = json::array();
        for (const Minutia& m : r.minutiae) minutiae.push_back({m.x, m.y, m.d});
        out += json{{"identity_id", r.identity_id}, {"impression_id", r.impression_id}, {"minutiae", minutiae}}.dump();
        out += '\n';
    }
    return out;
}

Dataset dataset_from_jsonl(const std::string& text) {
    Dataset data;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = "dataset line " + std::to_string(line_no);
        const json j = parse_json(line, where);
        const Fields f(j, where);
        f.reject_unknown({"identity_id", "impression_id", "minutiae"});
        FingerprintRecord r;
        r.identity_id = f.require<std::int64_t>("identity_id");
        r.impression_id = f.require<std::int64_t>("impression_id");
        const json& minutiae = f.at("minutiae");
        if (!minutiae.is_array()) f.fail("minutiae must be an array");
        for (const json& m : minutiae) {
            if (!m.is_array() || m.size() != 3 || !m[0].is_number() || !m[1].is_number() || !m[2].is_number()) {
                f.fail("each minutia must be [x, y, d]");
            }
            Minutia mm{m[0].get<double>(), m[1].get<double>(), m[2].get<double>()};
            check_finite(mm.x + mm.y + mm.d, where);
            r.minutiae.push_back(mm);
        }
        data.push_back(std::move(r));
    }
    return data;
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
    write_text_atomic(path, dataset_to_jsonl(data));
}

Dataset read_dataset(const std::filesystem::path& path) { return dataset_from_jsonl(read_text(path)); }

std::string checkpoint_to_json(const RunConfig& config, const TrainState& state) {
    json params = json::object();
    for (const auto& [name, m] : state.params.weights()) params[name] = matrix_json(m);
    json running = json::object();
    for (const auto& [name, r] : state.params.running()) {
        running[name] = {{"mean", matrix_json(r.mean)}, {"var", matrix_json(r.var)}};
    }
    json first = json::object();
    for (const auto& [name, m] : state.optimizer.first_moment) first[name] = matrix_json(m);
    json second = json::object();
    for (const auto& [name, m] : state.optimizer.second_moment) second[name] = matrix_json(m);
    json log = json::array();
    for (const EpochRecord& e : state.log) {
        log.push_back({{"epoch", e.epoch},
                       {"mean_loss", e.mean_loss},
                       {"lr", e.lr},
                       {"active_triplet_fraction", e.active_triplet_fraction}});
    }
    RunConfig snapshot = config;
    snapshot.model = state.params.config();
    const json doc{{"format_version", kCheckpointFormatVersion},
                   {"config", run_json(snapshot)},
                   {"epochs_completed", state.epochs_completed},
                   {"parameters", params},
                   {"running_stats", running},
                   {"optimizer", {{"step", state.optimizer.step}, {"first_moment", first}, {"second_moment", second}}},
                   {"log", log}};
    return doc.dump() + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
    const json j = parse_json(text, "checkpoint");
    const Fields f(j, "checkpoint");
    const json& version = f.at("format_version");
    if (!version.is_number_integer() || version.get<std::int64_t>() != kCheckpointFormatVersion) {
        f.fail("unsupported format_version " + version.dump() + " (expected " +
               std::to_string(kCheckpointFormatVersion) + ")");
    }
    f.reject_unknown(
        {"format_version", "config", "epochs_completed", "parameters", "running_stats", "optimizer", "log"});

    Checkpoint cp;
    cp.config = run_from(f.at("config"));
    cp.state.epochs_completed = f.require<std::size_t>("epochs_completed");

    NamedArrays weights;
    const json& params = f.at("parameters");
    if (!params.is_object()) f.fail("parameters must be an object");
    for (const auto& [name, m] : params.items()) weights.emplace(name, matrix_from(m, "parameter " + name));
    std::map<std::string, RunningStats> running;
    const json& rs = f.at("running_stats");
    if (!rs.is_object()) f.fail("running_stats must be an object");
    for (const auto& [name, r] : rs.items()) {
        const Fields rf(r, "running stats " + name);
        rf.reject_unknown({"mean", "var"});
        running.emplace(name, RunningStats{matrix_from(rf.at("mean"), name + ".mean"),
                                           matrix_from(rf.at("var"), name + ".var")});
    }

    // Names and shapes must be exactly those the config implies.
    const ParameterSet reference = ParameterSet::initialize(cp.config.model, 0);
    if (weights.size() != reference.weights().size() || running.size() != reference.running().size()) {
        f.fail("parameter set does not match the model config");
    }
    for (const auto& [name, m] : reference.weights()) {
        const auto it = weights.find(name);
        if (it == weights.end() || !it->second.same_shape(m)) f.fail("parameter '" + name + "' missing or misshaped");
    }
    for (const auto& [name, r] : reference.running()) {
        const auto it = running.find(name);
        if (it == running.end() || !it->second.mean.same_shape(r.mean) || !it->second.var.same_shape(r.var)) {
            f.fail("running statistics '" + name + "' missing or misshaped");
        }
    }
    cp.state.params = ParameterSet(cp.config.model, std::move(weights), std::move(running));

    const Fields opt(f.at("optimizer"), "checkpoint optimizer");
    opt.reject_unknown({"step", "first_moment", "second_moment"});
    cp.state.optimizer.step = opt.require<std::uint64_t>("step");
    for (const char* which : {"first_moment", "second_moment"}) {
        NamedArrays& dst =
            std::string(which) == "first_moment" ? cp.state.optimizer.first_moment : cp.state.optimizer.second_moment;
        const json& src = opt.at(which);
        if (!src.is_object()) opt.fail(std::string(which) + " must be an object");
        for (const auto& [name, m] : src.items()) {
            Matrix mm = matrix_from(m, std::string(which) + " " + name);
            const auto p = cp.state.params.weights().find(name);
            if (p == cp.state.params.weights().end() || !p->second.same_shape(mm)) {
                opt.fail("moment '" + name + "' does not match a parameter");
            }
            dst.emplace(name, std::move(mm));
        }
    }

    const json& log = f.at("log");
    if (!log.is_array()) f.fail("log must be an array");
    for (const json& e : log) {
        const Fields ef(e, "checkpoint log entry");
        ef.reject_unknown({"epoch", "mean_loss", "lr", "active_triplet_fraction"});
        EpochRecord rec;
        rec.epoch = ef.require<std::size_t>("epoch");
        rec.mean_loss = ef.require<double>("mean_loss");
        rec.lr = ef.require<double>("lr");
        rec.active_triplet_fraction = ef.require<double>("active_triplet_fraction");
        cp.state.log.push_back(rec);
    }
    return cp;
}

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const TrainState& state) {
    write_text_atomic(path, checkpoint_to_json(config, state));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(read_text(path)); }

std::string metrics_to_json(const Metrics& metrics) {
    json topk = json::object();
    for (const auto& [k, acc] : metrics.topk) topk[std::to_string(k)] = acc;
    const json doc{{"tar_at_far", {{"far", metrics.tar.far}, {"tar", metrics.tar.tar}, {"threshold", metrics.tar.threshold}}},
                   {"eer", metrics.eer},
                   {"topk", topk},
                   {"score_counts", {{"genuine", metrics.genuine_count}, {"impostor", metrics.impostor_count}}}};
    return doc.dump(2) + "\n";
}

void write_metrics(const std::filesystem::path& path, const Metrics& metrics) {
    write_text_atomic(path, metrics_to_json(metrics));
}

std::string epoch_log_to_jsonl(const std::vector<EpochRecord>& log) {
    std::string out;
    for (const EpochRecord& e : log) {
        out += json{{"epoch", e.epoch},
                    {"mean_loss", e.mean_loss},
                    {"lr", e.lr},
                    {"active_triplet_fraction", e.active_triplet_fraction}}
                   .dump();
        out += '\n';
    }
    return out;
}

void write_epoch_log(const std::filesystem::path& path, const std::vector<EpochRecord>& log) {
    write_text_atomic(path, epoch_log_to_jsonl(log));
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + path.string() + "' for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw RuntimeFailure("cannot open '" + tmp.string() + "' for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw RuntimeFailure("write to '" + tmp.string() + "' failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw RuntimeFailure("cannot move '" + tmp.string() + "' to '" + path.string() + "'");
    }
}

} // namespace mragnn
