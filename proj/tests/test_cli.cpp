#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "layoutvae/cli.hpp"

using namespace layoutvae;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    args.insert(args.begin(), "layoutvae");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("layoutvae_cli_" + std::to_string(std::rand()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("config echo shows the training defaults") {
    CHECK(config_echo(TrainConfig{}) == "batch=64 epochs=200 lr=0.001 optim=AdamW");
}

TEST_CASE("usage errors exit 2") {
    const Run none = cli({});
    CHECK(none.code == kExitUsage);
    const Run missing_out = cli({"train", "--synth", "10"});
    CHECK(missing_out.code == kExitUsage);
    CHECK(missing_out.err.find("--out") != std::string::npos);
    CHECK(missing_out.err.find("Usage") != std::string::npos);
    CHECK(cli({"train", "--out", "x.vaew"}).code == kExitUsage);
    CHECK(cli({"train", "--data", "/nonexistent/corpus.jsonl", "--out", "x"}).code == kExitUsage);
    CHECK(cli({"train", "--synth", "10", "--optim", "Adagrad", "--out", "x"}).code == kExitUsage);
    CHECK(cli({"generate", "--model", "/nonexistent.vaew", "--out", "g"}).code == kExitUsage);
    CHECK(cli({"sweep", "--mode", "grid", "--synth", "10"}).code == kExitUsage);
}

TEST_CASE("train, generate, evaluate and render end to end") {
    TempDir tmp;
    const std::string model = tmp / "m.vaew";
    const Run train = cli({"train", "--synth", "60", "--epochs", "2", "--out", model, "--curve",
                           tmp / "curve.svg", "--seed", "3"});
    REQUIRE(train.code == 0);
    CHECK(train.out.rfind("batch=64 epochs=2 lr=0.001 optim=AdamW\n", 0) == 0);
    CHECK(fs::exists(model));
    const auto report = nlohmann::json::parse(slurp(model + ".report.json"));
    CHECK(report["train_loss"].size() == 2);
    CHECK(report["val_loss"].size() == 2);
    CHECK(slurp(tmp / "curve.svg").find("<polyline") != std::string::npos);

    SUBCASE("same seed twice gives byte-identical output") {
        REQUIRE(cli({"generate", "--model", model, "--count", "3", "--seed", "9", "--out", tmp / "g1"}).code == 0);
        REQUIRE(cli({"generate", "--model", model, "--count", "3", "--seed", "9", "--out", tmp / "g2"}).code == 0);
        for (const char* f : {"layout_0000.svg", "layout_0002.svg", "grids.json"}) {
            CHECK(slurp(fs::path(tmp / "g1") / f) == slurp(fs::path(tmp / "g2") / f));
        }
        CHECK_FALSE(fs::exists(fs::path(tmp / "g1") / "layout_0003.svg"));
    }
    SUBCASE("count zero writes nothing") {
        CHECK(cli({"generate", "--model", model, "--count", "0", "--out", tmp / "g0"}).code == 0);
        CHECK_FALSE(fs::exists(tmp / "g0"));
    }
    SUBCASE("feedback is echoed in the metadata") {
        const std::string fb = R"({"class_weights":[0,0,1,0,0,0],"quadrant_weights":[0.5,0.5,0.5,0.5]})";
        REQUIRE(cli({"generate", "--model", model, "--feedback", fb, "--out", tmp / "gf"}).code == 0);
        const auto meta = nlohmann::json::parse(slurp(fs::path(tmp / "gf") / "grids.json"));
        CHECK(meta["feedback"] == nlohmann::json::parse(fb));
        CHECK(cli({"generate", "--model", model, "--feedback", "{bad", "--out", tmp / "gx"}).code == kExitUsage);
    }
    SUBCASE("model path from the environment") {
        setenv("LAYOUTVAE_MODEL", model.c_str(), 1);
        const Run r = cli({"evaluate", "--synth", "60", "--seed", "3", "--out", tmp / "metrics.json"});
        unsetenv("LAYOUTVAE_MODEL");
        REQUIRE(r.code == 0);
        const auto summary = nlohmann::json::parse(r.out);
        CHECK(summary.contains("ssim"));
        CHECK(summary.contains("mae"));
        CHECK(summary["n"] == 3);
        CHECK(nlohmann::json::parse(slurp(tmp / "metrics.json"))["per_example"].size() == 3);
    }
    SUBCASE("ablation flag requires an AE model") {
        CHECK(cli({"evaluate", "--model", model, "--synth", "60", "--ablation", "ae"}).code == kExitUsage);
        const std::string ae = tmp / "ae.vaew";
        REQUIRE(cli({"train", "--synth", "60", "--epochs", "1", "--ablation", "ae", "--out", ae, "--quiet"}).code == 0);
        const Run r = cli({"evaluate", "--model", ae, "--synth", "60", "--ablation", "ae"});
        CHECK(r.code == 0);
        CHECK(nlohmann::json::parse(r.out)["model"] == "AE");
    }
    SUBCASE("synth then render") {
        REQUIRE(cli({"synth", "--n", "4", "--seed", "2", "--out", tmp / "c.jsonl"}).code == 0);
        REQUIRE(cli({"render", "--data", tmp / "c.jsonl", "--out", tmp / "svg"}).code == 0);
        std::size_t files = 0;
        for ([[maybe_unused]] const auto& e : fs::directory_iterator(tmp / "svg")) ++files;
        CHECK(files == 4);
        REQUIRE(cli({"generate", "--model", model, "--count", "2", "--out", tmp / "gr"}).code == 0);
        REQUIRE(cli({"render", "--grids", (fs::path(tmp / "gr") / "grids.json").string(), "--out", tmp / "svg2"}).code == 0);
        CHECK(fs::exists(fs::path(tmp / "svg2") / "grid_1.svg"));
    }
    SUBCASE("grid flags must match the model") {
        CHECK(cli({"generate", "--model", model, "--rows", "10", "--out", tmp / "gq"}).code == kExitUsage);
    }
}

TEST_CASE("sweep writes both table forms") {
    TempDir tmp;
    const Run r = cli({"sweep", "--mode", "optim", "--kinds", "SGD", "AdamW", "--seeds", "1", "--epochs", "1",
                       "--synth", "54", "--out", tmp / "sweep.json", "--table", tmp / "sweep.txt"});
    REQUIRE(r.code == 0);
    const std::string table = slurp(tmp / "sweep.txt");
    CHECK(table.rfind("Optimizer | SSIM   | MAE", 0) == 0);
    CHECK(table.find("\nSGD       |") != std::string::npos);
    const auto j = nlohmann::json::parse(slurp(tmp / "sweep.json"));
    CHECK(j["rows"].size() == 2);
    CHECK(j["rows"][1]["label"] == "AdamW");
}
