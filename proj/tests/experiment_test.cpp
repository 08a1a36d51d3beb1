#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "confens/errors.hpp"
#include "confens/experiment.hpp"
#include "confens/persistence.hpp"

using namespace confens;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "confens_experiment_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

json small_config() {
    return json::parse(R"({
        "dataset": {"source": "blobs", "num_classes": 3, "per_class": 150, "dim": 2,
                    "spread": 1.0, "overlap": 0.5, "seed": 2},
        "build": {
            "num_members": 3,
            "training_thresholds": [0.05, 0.05],
            "selection_rule": "nested",
            "classifier": {"kind": "linear", "seed": 1},
            "train": {"epochs": 10, "learning_rate": 0.1, "weight_decay": 0.001, "seed": 3}
        },
        "runtime": [
            {"threshold": 0.2, "consensus": "most_confident"},
            {"thresholds": [0.3, 0.2, 0.1], "consensus": "last_member"}
        ],
        "metrics": {"ece_bins": 10}
    })");
}

}  // namespace

TEST_CASE("experiment config parsing") {
    const auto cfg = parse_experiment_config(small_config(), ".");
    CHECK(cfg.dataset.kind == DatasetSource::Kind::blobs);
    CHECK(cfg.dataset.per_class == 150);
    CHECK(cfg.build.num_members == 3);
    CHECK(cfg.build.train.epochs == 10);
    CHECK(cfg.build.train.batch_size == 32);
    CHECK(cfg.runtime_sweep.size() == 2);
    CHECK(cfg.runtime_sweep[0].thresholds == std::vector<double>{0.2, 0.2, 0.2});
    CHECK(cfg.runtime_sweep[1].consensus == Consensus::last_member);
    CHECK(cfg.metrics.ece_bins == 10);
    CHECK(cfg.metrics.histogram_bins == 10);

    auto no_runtime = small_config();
    no_runtime.erase("runtime");
    CHECK(parse_experiment_config(no_runtime, ".").runtime_sweep.size() == 8);
}

TEST_CASE("experiment config errors") {
    auto bad = small_config();
    bad["build"]["colour"] = "blue";
    CHECK_THROWS_AS(parse_experiment_config(bad, "."), ConfigError);

    bad = small_config();
    bad["build"]["selection_rule"] = "sideways";
    CHECK_THROWS_AS(parse_experiment_config(bad, "."), ConfigError);

    bad = small_config();
    bad["runtime"][0]["consensus"] = "vote";
    CHECK_THROWS_AS(parse_experiment_config(bad, "."), ConfigError);

    bad = small_config();
    bad["runtime"][1]["thresholds"] = {0.3, 0.2};
    CHECK_THROWS_AS(parse_experiment_config(bad, "."), ConfigError);

    bad = small_config();
    bad["build"]["train"]["epochs"] = "many";
    CHECK_THROWS_AS(parse_experiment_config(bad, "."), ConfigError);

    bad = small_config();
    bad.erase("dataset");
    CHECK_THROWS_AS(parse_experiment_config(bad, "."), ConfigError);

    bad = small_config();
    bad["dataset"]["source"] = "imagenet";
    CHECK_THROWS_AS(parse_experiment_config(bad, "."), ConfigError);
}

TEST_CASE("relative dataset paths resolve against the config directory") {
    const auto dir = fresh_dir("paths");
    auto j = small_config();
    j["dataset"] = {{"source", "csv"}, {"path", "data.csv"}};
    std::ofstream(dir / "cfg.json") << j.dump();
    const auto cfg = load_experiment_config(dir / "cfg.json");
    CHECK(cfg.dataset.path == dir / "data.csv");
}

TEST_CASE("runtime sweep strings") {
    const auto sweep = parse_runtime_sweep("0.4,0.2", {Consensus::last_member, Consensus::most_confident}, 3);
    REQUIRE(sweep.size() == 4);
    CHECK(sweep[0].thresholds == std::vector<double>{0.4, 0.4, 0.4});
    const auto per_level = parse_runtime_sweep("0.4/0.2/0.1", {Consensus::most_confident}, 3);
    REQUIRE(per_level.size() == 1);
    CHECK(per_level[0].thresholds == std::vector<double>{0.4, 0.2, 0.1});
    CHECK(runtime_label(per_level[0]) == "tr-0.4-0.2-0.1_most_confident");
    CHECK(runtime_label(sweep[0]).find("tr-0.4_") == 0);
    CHECK_THROWS_AS(parse_runtime_sweep("0.4/0.2", {Consensus::most_confident}, 3), ConfigError);
    CHECK_THROWS_AS(parse_runtime_sweep("abc", {Consensus::most_confident}, 3), ConfigError);
    CHECK_THROWS_AS(parse_runtime_sweep("0.7", {Consensus::most_confident}, 3), ConfigError);
}

TEST_CASE("build, evaluate and histogram outputs") {
    const auto dir = fresh_dir("pipeline");
    auto cfg = parse_experiment_config(small_config(), ".");
    const auto built = run_build(cfg, dir / "ensemble");

    CHECK(fs::exists(dir / "ensemble" / kManifestFile));
    CHECK(fs::exists(dir / "ensemble" / kWeightsFile));
    CHECK(fs::exists(dir / "ensemble" / "build_report.json"));
    CHECK(fs::exists(dir / "ensemble" / "subsets" / "level_1.idx"));
    CHECK(fs::exists(dir / "ensemble" / "subsets" / "level_2.idx"));
    CHECK(read_subset_index(dir / "ensemble" / "subsets" / "level_2.idx") == built.report.pools[2].indices());
    CHECK(built.manifest_sha256 == file_sha256(dir / "ensemble" / kManifestFile));

    const auto report = read_json(dir / "ensemble" / "build_report.json");
    CHECK(report.at("members").size() == 3);

    const auto manifest = load_manifest(dir / "ensemble");
    const auto data = prepare_build(cfg);
    const auto outcomes = run_evaluate(manifest, data, cfg.runtime_sweep, cfg.metrics, dir / "eval");
    REQUIRE(outcomes.size() == 2);
    for (const auto& o : outcomes) {
        for (const char* f : {"evaluation.json", "samples.csv", "calibration.json", "utilization.json"})
            CHECK(fs::exists(dir / "eval" / o.label / f));
        CHECK(o.calibration.num_bins == 10);
        std::size_t total = o.record.resolved_by_consensus;
        for (const auto c : o.record.resolved_at_level) total += c;
        CHECK(total == data.size());
    }
    const auto summary = read_json(dir / "eval" / "summary.json");
    CHECK(summary.at("baseline_accuracy").get<double>() == run_baseline(manifest, data));
    CHECK(summary.at("evaluations").size() == 2);

    const auto h = run_histograms(manifest, data, 1, 8, dir / "hist");
    CHECK(h.uncertainty.total() == data.size());
    CHECK(h.probability.total() == data.size());
    CHECK(fs::exists(dir / "hist" / "member_1_uncertainty.csv"));
    CHECK(fs::exists(dir / "hist" / "member_1_probability.csv"));
    CHECK_THROWS_AS(run_histograms(manifest, data, 3, 8, dir / "hist"), InvalidInput);
}

TEST_CASE("exit codes follow the error kind") {
    auto code = [](auto thrower) {
        try {
            thrower();
        } catch (...) {
            return exit_code_for_current_exception();
        }
        return ExitCode::ok;
    };
    CHECK(code([] { throw ConfigError("x"); }) == ExitCode::config);
    CHECK(code([] { throw DegenerateSubset(1, 0, 10); }) == ExitCode::degenerate_subset);
    CHECK(code([] { throw DigestError("x"); }) == ExitCode::manifest);
    CHECK(code([] { throw IoError("x"); }) == ExitCode::io);
    CHECK(code([] { throw ParseError("x"); }) == ExitCode::data);
    CHECK(code([] { throw std::runtime_error("x"); }) == ExitCode::failure);
}
