#include "mragnn/cli.hpp"
#include "mragnn/error.hpp"
#include "mragnn/evaluation.hpp"
#include "mragnn/gradcheck_suite.hpp"
#include "mragnn/io.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>
#include <tuple>

namespace py = pybind11;
using namespace mragnn;

namespace {

using Points = std::vector<std::tuple<double, double, double>>;

std::vector<Minutia> to_minutiae(const Points& pts) {
    std::vector<Minutia> out;
    out.reserve(pts.size());
    for (const auto& [x, y, d] : pts) out.push_back({x, y, d});
    return out;
}

std::vector<std::vector<double>> rows_of(const Matrix& m) {
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < m.rows(); ++i) out.emplace_back(m.row(i).begin(), m.row(i).end());
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Two-level graph neural network fingerprint embeddings";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<RuntimeFailure>(m, "RuntimeFailure", PyExc_RuntimeError);

    m.def(
        "generate_dataset",
        [](const std::string& spec_json) { return dataset_to_jsonl(gen_dataset(parse_dataset_spec(spec_json))); },
        py::arg("spec_json") = "{}", "Synthetic dataset as JSON lines.");

    m.def(
        "train",
        [](const std::string& data_jsonl, const std::string& config_json) {
            const RunConfig cfg = parse_run_config(config_json);
            const Dataset data = dataset_from_jsonl(data_jsonl);
            TrainState st = initial_state(cfg.model, cfg.train);
            {
                py::gil_scoped_release release;
                train(split_per_identity(data, cfg.data.train_impressions).first, cfg.train, st);
            }
            return checkpoint_to_json(cfg, st);
        },
        py::arg("data_jsonl"), py::arg("config_json"), "Trains on the training split; returns a checkpoint document.");

    m.def(
        "embed",
        [](const std::string& checkpoint_json, const std::vector<Points>& fingerprints) {
            const Checkpoint ck = checkpoint_from_json(checkpoint_json);
            std::vector<std::vector<Minutia>> fps;
            for (const Points& p : fingerprints) fps.push_back(to_minutiae(p));
            return rows_of(embed_batch(fps, ck.state.params));
        },
        py::arg("checkpoint_json"), py::arg("fingerprints"), "Fingerprint-level embeddings of one batch.");

    m.def(
        "evaluate",
        [](const std::string& data_jsonl, const std::string& checkpoint_json, double far, std::vector<std::size_t> topk,
           std::size_t gallery, std::size_t probes) {
            const Checkpoint ck = checkpoint_from_json(checkpoint_json);
            EvalOptions opt{far, std::move(topk), gallery, probes};
            return metrics_to_json(evaluate(dataset_from_jsonl(data_jsonl), ck.state.params, opt));
        },
        py::arg("data_jsonl"), py::arg("checkpoint_json"), py::arg("far") = 0.001,
        py::arg("topk") = std::vector<std::size_t>{1, 5, 10}, py::arg("gallery_impressions") = 3,
        py::arg("probe_impressions") = 1, "Metrics document for a gallery/probe split.");

    m.def("similarity", [](const std::vector<double>& a, const std::vector<double>& b) { return similarity(a, b); });

    m.def("tar_at_far", [](const std::vector<double>& genuine, const std::vector<double>& impostor, double far) {
        const TarAtFar t = tar_at_far({genuine, impostor}, far);
        return py::dict(py::arg("far") = t.far, py::arg("tar") = t.tar, py::arg("threshold") = t.threshold);
    });

    m.def("eer", [](const std::vector<double>& genuine, const std::vector<double>& impostor) {
        return eer({genuine, impostor});
    });

    m.def(
        "gradcheck",
        [](std::uint64_t seed) {
            py::dict out;
            for (const ComponentCheck& c : run_gradcheck_suite(seed)) out[py::str(c.component)] = c.report.max_rel_error;
            return out;
        },
        py::arg("seed") = 1, "Maximum relative gradient error per component.");

    m.def(
        "run_cli",
        [](std::vector<std::string> args) {
            args.insert(args.begin(), "mragnn");
            std::vector<const char*> argv;
            for (const auto& a : args) argv.push_back(a.c_str());
            std::ostringstream out;
            std::ostringstream err;
            const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
            return std::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs a CLI subcommand in-process; returns (exit code, stdout, stderr).");
}
