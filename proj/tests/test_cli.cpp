#include "mragnn/cli.hpp"
#include "mragnn/gradcheck_suite.hpp"
#include "mragnn/io.hpp"

#include <json.hpp>
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <sys/wait.h>

using namespace mragnn;
namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "mragnn_test_cli";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string at(const std::string& name) { return (workdir() / name).string(); }

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    args.insert(args.begin(), "mragnn");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out;
    std::ostringstream err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

/// Runs the installed binary as a separate process; returns its exit status.
int shell(const std::string& args) {
    const char* exe = std::getenv("MRAGNN_CLI");
    REQUIRE(exe != nullptr);
    const int status = std::system((std::string(exe) + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write(const std::string& name, const std::string& text) { write_text_atomic(workdir() / name, text); }

const char* kTinyConfig = R"({
  "model": {"width": 6, "embed_dim": 6, "trm_layers": 2, "cam_layers": 1, "k_minutia": 4,
            "k_fingerprint": 3, "ffm_hidden": 12},
  "train": {"epochs": 1, "batch_identities": 3, "batch_impressions": 2, "learning_rate": 0.001},
  "data": {"train_impressions": 2}
})";

const char* kTinySpec = R"({"identities": 8, "impressions": 3, "min_minutiae": 10, "max_minutiae": 14})";

void prepare() {
    write("spec.json", kTinySpec);
    write("config.json", kTinyConfig);
    REQUIRE(cli({"gen-data", "--spec", at("spec.json"), "--out", at("data.jsonl")}).code == 0);
}

} // namespace

TEST_CASE("gen-data") {
    const Run r = cli({"gen-data", "--out", at("default.jsonl"), "--seed", "3"});
    CHECK(r.code == 0);
    CHECK(r.out.find("400") != std::string::npos);
    const std::string text = read_text(at("default.jsonl"));
    CHECK(std::count(text.begin(), text.end(), '\n') == 400);
    CHECK(cli({"gen-data", "--out", at("again.jsonl"), "--seed", "3"}).code == 0);
    CHECK(read_text(at("again.jsonl")) == text);
    CHECK(cli({"gen-data", "--out", at("other.jsonl"), "--seed", "4"}).code == 0);
    CHECK(read_text(at("other.jsonl")) != text);

    write("bad_spec.json", R"({"impressions": 1})");
    CHECK(cli({"gen-data", "--spec", at("bad_spec.json"), "--out", at("bad.jsonl")}).code == 1);
    CHECK_FALSE(fs::exists(at("bad.jsonl")));
}

TEST_CASE("train and eval") {
    prepare();
    REQUIRE(cli({"train", "--data", at("data.jsonl"), "--config", at("config.json"), "--out", at("a.ckpt")}).code ==
            0);
    REQUIRE(cli({"train", "--data", at("data.jsonl"), "--config", at("config.json"), "--out", at("b.ckpt")}).code ==
            0);
    CHECK(read_text(at("a.ckpt")) == read_text(at("b.ckpt")));
    const std::string log = read_text(at("a.ckpt.epochs.jsonl"));
    CHECK(std::count(log.begin(), log.end(), '\n') == 1);

    const Checkpoint ck = load_checkpoint(at("a.ckpt"));
    CHECK(ck.state.epochs_completed == 1);

    // Resume to two epochs: the step counter continues.
    std::string two = kTinyConfig;
    two.replace(two.find("\"epochs\": 1"), 11, "\"epochs\": 2");
    write("config2.json", two);
    REQUIRE(cli({"train", "--data", at("data.jsonl"), "--config", at("config2.json"), "--out", at("c.ckpt"),
                 "--resume", at("a.ckpt")})
                .code == 0);
    const Checkpoint resumed = load_checkpoint(at("c.ckpt"));
    CHECK(resumed.state.epochs_completed == 2);
    CHECK(resumed.state.optimizer.step == 2 * ck.state.optimizer.step);
    CHECK(resumed.state.log.size() == 2);

    const Run ev = cli({"eval", "--data", at("data.jsonl"), "--checkpoint", at("a.ckpt"), "--far", "0.01", "--topk",
                        "1,5", "--gallery-split", "2/1", "--out", at("m.json")});
    CHECK(ev.code == 0);
    const auto m = nlohmann::json::parse(read_text(at("m.json")));
    CHECK(m.at("tar_at_far").at("far") == 0.01);
    CHECK(m.at("topk").contains("5"));
    CHECK(m.at("score_counts").at("genuine") == 16);
    CHECK(m.at("score_counts").at("impostor") == 8 * 16 - 16);
    REQUIRE(cli({"eval", "--data", at("data.jsonl"), "--checkpoint", at("a.ckpt"), "--far", "0.01", "--topk", "1,5",
                 "--gallery-split", "2/1", "--out", at("m2.json")})
                .code == 0);
    CHECK(read_text(at("m.json")) == read_text(at("m2.json")));

    CHECK(cli({"eval", "--data", at("data.jsonl"), "--checkpoint", at("a.ckpt"), "--gallery-split", "2-1"}).code == 1);
    CHECK(cli({"eval", "--data", at("data.jsonl"), "--checkpoint", at("a.ckpt"), "--topk", "99", "--gallery-split",
               "2/1"})
              .code == 1);
}

TEST_CASE("train with zero learning rate keeps initial parameters") {
    prepare();
    std::string frozen = kTinyConfig;
    frozen.replace(frozen.find("\"learning_rate\": 0.001"), 22,
                   "\"learning_rate\": 0, \"min_learning_rate\": 0, \"weight_decay\": 0");
    write("frozen.json", frozen);
    REQUIRE(cli({"train", "--data", at("data.jsonl"), "--config", at("frozen.json"), "--out", at("f.ckpt")}).code == 0);
    const Checkpoint ck = load_checkpoint(at("f.ckpt"));
    // Running normalization statistics still track the data; the weights do not move.
    CHECK(ck.state.params.weights() == ParameterSet::initialize(ck.config.model, ck.config.train.seed).weights());
}

TEST_CASE("validation failures exit with 1") {
    prepare();
    write("bad.json", R"({"model": {"depth": 3}})");
    const Run r = cli({"train", "--data", at("data.jsonl"), "--config", at("bad.json"), "--out", at("x.ckpt")});
    CHECK(r.code == 1);
    CHECK(r.err.find("depth") != std::string::npos);
    CHECK_FALSE(fs::exists(at("x.ckpt")));
    CHECK(cli({"train", "--data", at("nothing.jsonl"), "--config", at("config.json"), "--out", at("x.ckpt")}).code ==
          1);
    CHECK(cli({"frobnicate"}).code == 1);
    CHECK(cli({}).code == 1);
    CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("grad-check") {
    const Run r = cli({"grad-check", "--seed", "3"});
    CHECK(r.code == 0);
    for (const std::string& name : gradcheck_components()) {
        const auto first = r.out.find(name + " ");
        CHECK(first != std::string::npos);
        CHECK(r.out.find("\n" + name + " ", first + 1) == std::string::npos);
    }
    CHECK(r.out.find("FAIL") == std::string::npos);
    const Run bad = cli({"grad-check", "--fault-injection"});
    CHECK(bad.code == 2);
    CHECK(bad.out.find("FAIL") != std::string::npos);
}

TEST_CASE("sweep") {
    prepare();
    const Run r = cli({"sweep", "--param", "neighbors", "--values", "2,3", "--data", at("data.jsonl"), "--config",
                       at("config.json"), "--out", at("sweep.csv"), "--far", "0.05"});
    CHECK(r.code == 0);
    const std::string table = read_text(at("sweep.csv"));
    CHECK(table.rfind("value,tar_at_far,eer,top1\n", 0) == 0);
    CHECK(std::count(table.begin(), table.end(), '\n') == 3);
    REQUIRE(cli({"sweep", "--param", "neighbors", "--values", "2,3", "--data", at("data.jsonl"), "--config",
                 at("config.json"), "--out", at("sweep2.csv"), "--far", "0.05"})
                .code == 0);
    CHECK(read_text(at("sweep2.csv")) == table);
    CHECK(cli({"sweep", "--param", "width", "--values", "2", "--data", at("data.jsonl"), "--config",
               at("config.json")})
              .code == 1);
    CHECK(cli({"sweep", "--param", "layers", "--values", "0", "--data", at("data.jsonl"), "--config",
               at("config.json")})
              .code == 1);
}

TEST_CASE("exit codes from the binary") {
    prepare();
    CHECK(shell("gen-data --out " + at("bin.jsonl")) == 0);
    CHECK(shell("gen-data") == 1);
    CHECK(shell("grad-check --fault-injection") == 2);
    CHECK(shell("train --data " + at("data.jsonl") + " --config " + at("missing.json") + " --out " + at("y.ckpt")) ==
          1);
}
