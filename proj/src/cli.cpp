#include "mragnn/cli.hpp"

#include "mragnn/error.hpp"
#include "mragnn/gradcheck_suite.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <ostream>

namespace mragnn {

namespace {

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

std::pair<std::size_t, std::size_t> parse_gallery_split(const std::string& s) {
    const auto slash = s.find('/');
    try {
        if (slash == std::string::npos) throw std::invalid_argument(s);
        std::size_t used = 0;
        const std::string a = s.substr(0, slash);
        const std::string b = s.substr(slash + 1);
        const auto g = std::stoul(a, &used);
        if (used != a.size()) throw std::invalid_argument(s);
        const auto p = std::stoul(b, &used);
        if (used != b.size()) throw std::invalid_argument(s);
        if (g == 0 || p == 0) throw std::invalid_argument(s);
        return {g, p};
    } catch (const std::logic_error&) {
        throw ValidationError("--gallery-split must look like G/P with positive counts, got '" + s + "'");
    }
}

Dataset training_split(const Dataset& data, const RunConfig& config) {
    return split_per_identity(data, config.data.train_impressions).first;
}

struct GenDataArgs {
    std::string spec;
    std::string out;
    std::optional<std::uint64_t> seed;
};

int gen_data(const GenDataArgs& a, std::ostream& out) {
    DatasetSpec spec = a.spec.empty() ? DatasetSpec{} : load_dataset_spec(a.spec);
    if (a.seed) spec.seed = *a.seed;
    spec.validate();
    const Dataset data = gen_dataset(spec);
    write_dataset(a.out, data);
    out << data.size() << " records written to " << a.out << "\n";
    return 0;
}

struct TrainArgs {
    std::string data;
    std::string config;
    std::string out;
    std::string resume;
    std::string log;
};

int train_cmd(const TrainArgs& a, std::ostream& out) {
    const RunConfig config = load_run_config(a.config);
    const Dataset train_data = training_split(read_dataset(a.data), config);
    TrainState state;
    if (a.resume.empty()) {
        state = initial_state(config.model, config.train);
    } else {
        Checkpoint cp = load_checkpoint(a.resume);
        if (!(cp.config.model == config.model)) {
            throw ValidationError("--resume: checkpoint model config differs from --config");
        }
        state = std::move(cp.state);
    }
    const std::string log_path = a.log.empty() ? a.out + ".epochs.jsonl" : a.log;
    try {
        train(train_data, config.train, state, [&](const EpochRecord& r) {
            out << "epoch " << r.epoch << " loss " << fmt("%.6f", r.mean_loss) << " lr " << fmt("%.3e", r.lr)
                << " active " << fmt("%.3f", r.active_triplet_fraction) << "\n";
            out.flush();
            write_epoch_log(log_path, state.log);
        });
    } catch (const RuntimeFailure&) {
        save_checkpoint(a.out, config, state);
        write_epoch_log(log_path, state.log);
        throw;
    }
    save_checkpoint(a.out, config, state);
    write_epoch_log(log_path, state.log);
    out << "checkpoint written to " << a.out << " after " << state.epochs_completed << " epochs\n";
    return 0;
}

struct EvalArgs {
    std::string data;
    std::string checkpoint;
    double far = 0.001;
    std::vector<std::size_t> topk{1, 5, 10};
    std::string gallery_split = "3/1";
    std::string out;
};

void print_metrics(const Metrics& m, std::ostream& out) {
    out << "TAR@FAR=" << m.tar.far << ": " << fmt("%.4f", m.tar.tar) << " (threshold " << fmt("%.6f", m.tar.threshold)
        << ")\nEER: " << fmt("%.4f", m.eer) << "\n";
    for (const auto& [k, acc] : m.topk) out << "top-" << k << ": " << fmt("%.4f", acc) << "\n";
    out << "scores: " << m.genuine_count << " genuine, " << m.impostor_count << " impostor\n";
}

int eval_cmd(const EvalArgs& a, std::ostream& out) {
    const Checkpoint cp = load_checkpoint(a.checkpoint);
    const Dataset data = read_dataset(a.data);
    EvalOptions opts;
    opts.far = a.far;
    opts.topk = a.topk;
    std::tie(opts.gallery_impressions, opts.probe_impressions) = parse_gallery_split(a.gallery_split);
    const Metrics m = evaluate(data, cp.state.params, opts);
    if (!a.out.empty()) write_metrics(a.out, m);
    print_metrics(m, out);
    return 0;
}

int gradcheck_cmd(std::uint64_t seed, bool fault, std::ostream& out) {
    bool ok = true;
    for (const ComponentCheck& c : run_gradcheck_suite(seed, fault)) {
        char line[160];
        std::snprintf(line, sizeof line, "%-14s max_rel_error=%.3e coords=%zu %s\n", c.component.c_str(),
                      c.report.max_rel_error, c.report.coords_checked, c.passed() ? "PASS" : "FAIL");
        out << line;
        ok = ok && c.passed();
    }
    if (!ok) throw RuntimeFailure("gradient check exceeded tolerance " + fmt("%.0e", kGradCheckTolerance));
    return 0;
}

struct SweepArgs {
    std::string param;
    std::vector<std::size_t> values;
    std::string data;
    std::string config;
    std::string out;
    double far = 0.001;
};

int sweep_cmd(const SweepArgs& a, std::ostream& out) {
    SweepParam param = SweepParam::layers;
    if (a.param == "neighbors") {
        param = SweepParam::neighbors;
    } else if (a.param != "layers") {
        throw ValidationError("--param must be 'layers' or 'neighbors'");
    }
    if (a.values.empty()) throw ValidationError("--values must list at least one value");
    const RunConfig config = load_run_config(a.config);
    const Dataset data = read_dataset(a.data);
    EvalOptions eval;
    eval.far = a.far;
    eval.topk = {1};
    eval.gallery_impressions = config.data.train_impressions;
    const auto rows = run_sweep(data, config, param, a.values, eval);
    const std::string table = sweep_table(rows);
    if (!a.out.empty()) write_text_atomic(a.out, table);
    out << table;
    return 0;
}

} // namespace

std::vector<SweepRow> run_sweep(const Dataset& data, const RunConfig& config, SweepParam param,
                                const std::vector<std::size_t>& values, const EvalOptions& eval) {
    std::vector<RunConfig> configs;
    for (std::size_t v : values) {
        RunConfig c = config;
        if (param == SweepParam::layers) {
            c.model.trm_layers = v;
            c.model.cam_layers = v;
        } else {
            c.model.k_minutia = v;
            c.model.k_fingerprint = v;
        }
        c.validate();
        configs.push_back(c);
    }
    std::vector<SweepRow> rows;
    const Dataset train_data = training_split(data, config);
    for (std::size_t i = 0; i < values.size(); ++i) {
        TrainState state = initial_state(configs[i].model, configs[i].train);
        train(train_data, configs[i].train, state);
        rows.push_back({values[i], evaluate(data, state.params, eval)});
    }
    return rows;
}

std::string sweep_table(const std::vector<SweepRow>& rows) {
    std::string out = "value,tar_at_far,eer,top1\n";
    for (const SweepRow& r : rows) {
        const auto top1 = r.metrics.topk.find(1);
        char line[128];
        std::snprintf(line, sizeof line, "%zu,%.6f,%.6f,%.6f\n", r.value, r.metrics.tar.tar, r.metrics.eer,
                      top1 == r.metrics.topk.end() ? 0.0 : top1->second);
        out += line;
    }
    return out;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Two-level graph neural network fingerprint embeddings"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic minutia dataset");
    gen_cmd->add_option("--spec", gen.spec, "Dataset spec document (defaults: 100 identities x 4 impressions)");
    gen_cmd->add_option("--out", gen.out, "Output dataset (JSON lines)")->required();
    gen_cmd->add_option("--seed", gen.seed, "Override the spec seed");

    TrainArgs tr;
    auto* train_sub = app.add_subcommand("train", "Train a model");
    train_sub->add_option("--data", tr.data, "Dataset (JSON lines)")->required();
    train_sub->add_option("--config", tr.config, "Run config document")->required();
    train_sub->add_option("--out", tr.out, "Output checkpoint")->required();
    train_sub->add_option("--resume", tr.resume, "Continue from this checkpoint");
    train_sub->add_option("--log", tr.log, "Epoch log (default: <out>.epochs.jsonl)");

    EvalArgs ev;
    auto* eval_sub = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval_sub->add_option("--data", ev.data, "Dataset (JSON lines)")->required();
    eval_sub->add_option("--checkpoint", ev.checkpoint, "Checkpoint to evaluate")->required();
    eval_sub->add_option("--far", ev.far, "False accept rate operating point")->capture_default_str();
    eval_sub->add_option("--topk", ev.topk, "Comma-separated k values")->delimiter(',')->capture_default_str();
    eval_sub->add_option("--gallery-split", ev.gallery_split, "G/P impressions per identity for gallery/probes")
        ->capture_default_str();
    eval_sub->add_option("--out", ev.out, "Metrics document");

    std::uint64_t gc_seed = 1;
    bool fault = false;
    auto* gc_sub = app.add_subcommand("grad-check", "Finite-difference gradient checks");
    gc_sub->add_option("--seed", gc_seed, "Seed for the random instances")->capture_default_str();
    gc_sub->add_flag("--fault-injection", fault, "Negate analytic gradients (must fail)");

    SweepArgs sw;
    auto* sweep_sub = app.add_subcommand("sweep", "Train and evaluate over a parameter range");
    sweep_sub->add_option("--param", sw.param, "layers or neighbors")->required();
    sweep_sub->add_option("--values", sw.values, "Comma-separated values")->delimiter(',')->required();
    sweep_sub->add_option("--data", sw.data, "Dataset (JSON lines)")->required();
    sweep_sub->add_option("--config", sw.config, "Run config document")->required();
    sweep_sub->add_option("--out", sw.out, "Output table (CSV)");
    sweep_sub->add_option("--far", sw.far, "False accept rate operating point")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 1;
    }

    try {
        if (gen_cmd->parsed()) return gen_data(gen, out);
        if (train_sub->parsed()) return train_cmd(tr, out);
        if (eval_sub->parsed()) return eval_cmd(ev, out);
        if (gc_sub->parsed()) return gradcheck_cmd(gc_seed, fault, out);
        if (sweep_sub->parsed()) return sweep_cmd(sw, out);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "failure: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

} // namespace mragnn
