#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "transt/cli.hpp"
#include "transt/config.hpp"
#include "transt/data_eval.hpp"

using namespace transt;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
    fs::path p = fs::temp_directory_path() / (std::string("transt_cli_") + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("unknown subcommands and flags exit with code 2") {
    CHECK(dispatch({"badcmd"}) == 2);
    CHECK(dispatch({}) == 2);
    CHECK(dispatch({"synth", "--no-such-flag"}) == 2);
    CHECK(dispatch({"eval"}) == 2);  // missing required options
}

TEST_CASE("missing input files exit with code 1") {
    CHECK(dispatch({"eval", "--results", "/nonexistent/r.txt", "--gt", "/nonexistent/g.txt"}) ==
          1);
    CHECK(dispatch({"track", "--model", "/nonexistent/m.bin", "--seq", "/nonexistent",
                    "--out", "/tmp/transt_cli_r.txt"}) == 1);
}

TEST_CASE("synth then eval round trip through the CLI") {
    fs::path dir = temp_dir("pipeline");
    const std::string seq = (dir / "seq").string();
    CHECK(dispatch({"synth", "--seed", "3", "--frames", "4", "--width", "64", "--height", "64",
                    "--out", seq}) == 0);
    CHECK(fs::exists(fs::path(seq) / "frame_000001.ppm"));
    CHECK(fs::exists(fs::path(seq) / "frame_000004.ppm"));
    CHECK(fs::exists(fs::path(seq) / "groundtruth.txt"));

    // evaluating the ground truth against itself is a perfect run
    const std::string report = (dir / "report.json").string();
    CHECK(dispatch({"eval", "--results", seq + "/groundtruth.txt", "--gt",
                    seq + "/groundtruth.txt", "--out", report}) == 0);
    std::ifstream in(report);
    std::string text(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>{});
    CHECK(text.find("\"ao\": 1.0") != std::string::npos);
    CHECK(text.find("\"sr_075\": 1.0") != std::string::npos);
}

TEST_CASE("synth is byte-deterministic across runs") {
    fs::path dir = temp_dir("determinism");
    const std::string a = (dir / "a").string(), b = (dir / "b").string();
    CHECK(dispatch({"synth", "--seed", "5", "--frames", "3", "--width", "64", "--height", "64",
                    "--out", a}) == 0);
    CHECK(dispatch({"synth", "--seed", "5", "--frames", "3", "--width", "64", "--height", "64",
                    "--out", b}) == 0);
    for (const char* name : {"frame_000001.ppm", "frame_000002.ppm", "groundtruth.txt"}) {
        std::ifstream fa(fs::path(a) / name, std::ios::binary);
        std::ifstream fb(fs::path(b) / name, std::ios::binary);
        std::string ba(std::istreambuf_iterator<char>(fa), std::istreambuf_iterator<char>{});
        std::string bb(std::istreambuf_iterator<char>(fb), std::istreambuf_iterator<char>{});
        CHECK(ba == bb);
    }
}

TEST_CASE("config parsing") {
    SUBCASE("defaults carry the reference constants") {
        Config cfg;
        CHECK(cfg.tracker.model.d == 256);
        CHECK(cfg.tracker.model.n_heads == 8);
        CHECK(cfg.tracker.model.layers == 4);
        CHECK(cfg.tracker.model.d_ff == 2048);
        CHECK(cfg.tracker.window_weight == 0.49);
        CHECK(cfg.loss.negative_weight == 1.0 / 16.0);
        CHECK(cfg.optim.lr_backbone == 1e-5);
        CHECK(cfg.optim.lr_other == 1e-4);
        CHECK(cfg.optim.weight_decay == 1e-4);
    }
    SUBCASE("absent keys default, present keys override") {
        Config cfg = Config::from_json_text(R"({"model": {"d": 32, "n_heads": 2}})");
        CHECK(cfg.tracker.model.d == 32);
        CHECK(cfg.tracker.model.n_heads == 2);
        CHECK(cfg.tracker.model.layers == 4);
        CHECK(cfg.tracker.search_size == 256);
    }
    SUBCASE("unknown keys are rejected") {
        CHECK_THROWS_AS(Config::from_json_text(R"({"model": {"dd": 32}})"), ConfigError);
        CHECK_THROWS_AS(Config::from_json_text(R"({"zzz": {}})"), ConfigError);
        CHECK_THROWS_AS(Config::from_json_text(R"({"model": {"d": "big"}})"), ConfigError);
        CHECK_THROWS_AS(Config::from_json_text("not json"), ConfigError);
    }
    SUBCASE("dimension constraints checked at load") {
        CHECK_THROWS_AS(Config::from_json_text(R"({"model": {"d": 30}})"), ConfigError);
        CHECK_THROWS_AS(Config::from_json_text(R"({"model": {"n_heads": 3}})"), ConfigError);
        CHECK_THROWS_AS(Config::from_json_text(R"({"tracker": {"search_size": 100}})"),
                        ConfigError);
        CHECK_THROWS_AS(Config::from_json_text(R"({"tracker": {"window_weight": 1.5}})"),
                        ConfigError);
    }
    SUBCASE("serialization round-trips") {
        Config cfg = Config::from_json_text(
            R"({"model": {"d": 16, "n_heads": 2, "layers": 1, "channels": 8, "d_ff": 32},
                "tracker": {"template_size": 16, "search_size": 32},
                "optim": {"lr_other": 0.001}})");
        Config back = Config::from_json_text(cfg.to_json_text());
        CHECK(back.tracker.model.d == 16);
        CHECK(back.optim.lr_other == 0.001);
        CHECK(back.to_json_text() == cfg.to_json_text());
    }
}
