#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "dlenergy/dataset.hpp"

using namespace dlenergy;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

std::size_t line_count(const fs::path& p) {
    const auto text = slurp(p);
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("dlenergy_cli_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& file) const { return (path / file).string(); }
};

/// Noise-free synthetic layer-wise data for every predictable kind.
void collect_all(const TempDir& dir, const std::string& file, int count, const std::string& noise) {
    for (const char* kind : {"conv2d", "maxpool2d", "linear", "relu", "sigmoid", "tanh", "softmax"}) {
        const auto r = run({"--simulate", "--quiet", "--seed", "5", "collect", "--kind", kind, "--count",
                            std::to_string(count), "--window", "1", "--noise", noise, "--out", dir / file});
        REQUIRE(r.code == 0);
    }
}

}  // namespace

TEST_CASE("collect appends schema-valid rows") {
    TempDir dir("collect");
    auto r = run({"--simulate", "--quiet", "collect", "--kind", "conv2d", "--count", "0", "--out", dir / "a.csv"});
    CHECK(r.code == 0);
    CHECK(line_count(dir / "a.csv") == 1);

    r = run({"--simulate", "--quiet", "collect", "--kind", "conv2d", "--count", "2", "--window", "1", "--out",
             dir / "a.csv"});
    CHECK(r.code == 0);
    CHECK(line_count(dir / "a.csv") == 3);
    Diagnostics diag;
    const auto records = load_layerwise_csv(dir / "a.csv", &diag);
    CHECK(records.size() == 2);
    CHECK(diag.empty());

    r = run({"--simulate", "--quiet", "collect", "--kind", "relu", "--count", "2", "--window", "1", "--per-repeat",
             "--repeats", "3", "--out", dir / "b.csv"});
    CHECK(line_count(dir / "b.csv") == 7);
}

TEST_CASE("collect is deterministic for a seed") {
    TempDir dir("collect_seed");
    for (const char* f : {"a.csv", "b.csv"}) {
        REQUIRE(run({"--simulate", "--quiet", "--seed", "9", "collect", "--kind", "maxpool2d", "--count", "5",
                     "--window", "1", "--out", dir / f})
                    .code == 0);
    }
    CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
    REQUIRE(run({"--simulate", "--quiet", "--seed", "10", "collect", "--kind", "maxpool2d", "--count", "5",
                 "--window", "1", "--out", dir / "c.csv"})
                .code == 0);
    CHECK(slurp(dir / "a.csv") != slurp(dir / "c.csv"));
}

TEST_CASE("train, estimate, evaluate and report") {
    TempDir dir("pipeline");
    collect_all(dir, "lw.csv", 60, "0");
    REQUIRE(run({"--quiet", "train", "--data", dir / "lw.csv", "--out", dir / "b1.json", "--cv-folds", "3"}).code == 0);
    REQUIRE(run({"--quiet", "train", "--data", dir / "lw.csv", "--out", dir / "b2.json", "--cv-folds", "3"}).code == 0);
    CHECK(slurp(dir / "b1.json") == slurp(dir / "b2.json"));

    auto r = run({"--quiet", "estimate", "--bundle", dir / "b1.json", "--arch", "vgg11", "--batch", "1"});
    REQUIRE(r.code == 0);
    const auto doc = nlohmann::json::parse(r.out);
    REQUIRE(doc["per_layer"].size() == 26);
    double sum = 0.0;
    for (const auto& l : doc["per_layer"]) sum += l["predicted_joules"].get<double>();
    CHECK(sum == doc["total_joules"].get<double>());

    REQUIRE(run({"--simulate", "--quiet", "collect", "--arch", "vgg11", "--arch", "alexnet", "--batch", "1",
                 "--batch", "2", "--window", "1", "--noise", "0", "--out", dir / "mw.csv"})
                .code == 0);
    r = run({"--quiet", "evaluate", "--bundle", dir / "b1.json", "--data", dir / "mw.csv", "--out-dir", dir / "ev"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("overall r2: 1.000") != std::string::npos);
    CHECK(fs::exists(dir / "ev/layer_scatter.csv"));
    CHECK(fs::exists(dir / "ev/metrics.json"));

    r = run({"report", "--eval-dir", dir / "ev", "--out-dir", dir / "rep"});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir / "rep/scatter_layers.svg"));
    CHECK(fs::exists(dir / "rep/contribution_bars.svg"));
    CHECK(fs::exists(dir / "rep/scatter_models.svg"));
    CHECK(fs::exists(dir / "rep/aggregate_vs_total.svg"));
}

TEST_CASE("experiment commands are deterministic") {
    TempDir dir("experiments");
    collect_all(dir, "lw.csv", 40, "0.01");
    for (const char* f : {"fe1.csv", "fe2.csv"}) {
        REQUIRE(run({"--quiet", "feature-experiment", "--data", dir / "lw.csv", "--kind", "linear", "--out", dir / f,
                     "--cv-folds", "3"})
                    .code == 0);
    }
    CHECK(slurp(dir / "fe1.csv") == slurp(dir / "fe2.csv"));
    CHECK(line_count(dir / "fe1.csv") == 6);

    const auto r = run({"ablate", "--data", dir / "lw.csv", "--out", dir / "ab.csv"});
    REQUIRE(r.code == 0);
    CHECK(line_count(dir / "ab.csv") == 32768);
    CHECK(r.out.find("best") != std::string::npos);
    REQUIRE(run({"report", "--ablation", dir / "ab.csv", "--out-dir", dir / "rep"}).code == 0);
    CHECK(fs::exists(dir / "rep/ablation_scatter.svg"));
}

TEST_CASE("macs prints one row per layer and a total") {
    const auto r = run({"macs", "--arch", "vgg11"});
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("layer_index,module,input_shape,output_shape,macs\n", 0) == 0);
    CHECK(r.out.find("\ntotal,,,,") != std::string::npos);
}

TEST_CASE("exit codes") {
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"estimate", "--arch", "vgg11"}).code == 2);
    CHECK(run({"--help"}).code == 0);
    const auto r = run({"estimate", "--bundle", "/nonexistent/bundle.json", "--arch", "vgg11"});
    CHECK(r.code == 1);
    CHECK(r.err.rfind("IoError: ", 0) == 0);
    const auto p = run({"macs", "--arch", "resnet9000"});
    CHECK(p.code == 1);
    CHECK(p.err.rfind("UnknownPreset: ", 0) == 0);
}
