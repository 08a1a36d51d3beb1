#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "json.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

Result run(const std::string& args) {
    const auto log = fs::temp_directory_path() / "confens_cli_test.out";
    const std::string cmd = std::string("\"") + CONFENS_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

fs::path workdir() {
    static const fs::path dir = [] {
        const auto d = fs::temp_directory_path() / "confens_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

fs::path write_config(const std::string& name, int members, const std::vector<double>& thresholds) {
    const json cfg = {
        {"dataset",
         {{"source", "blobs"}, {"num_classes", 3}, {"per_class", 200}, {"dim", 2}, {"spread", 1.0}, {"overlap", 0.5},
          {"seed", 6}}},
        {"build",
         {{"num_members", members},
          {"training_thresholds", thresholds},
          {"classifier", {{"kind", "linear"}, {"seed", 2}}},
          {"train", {{"epochs", 10}, {"learning_rate", 0.1}, {"weight_decay", 0.001}, {"seed", 4}}}}}};
    const auto path = workdir() / name;
    std::ofstream(path) << cfg.dump(2);
    return path;
}

std::string sha_line(const std::string& out) {
    const auto at = out.find("manifest sha256 ");
    return at == std::string::npos ? "" : out.substr(at + 16, 64);
}

double number_after(const std::string& out, const std::string& key) {
    const auto at = out.find(key);
    REQUIRE(at != std::string::npos);
    return std::stod(out.substr(at + key.size()));
}

}  // namespace

TEST_CASE("build writes the ensemble directory and is reproducible") {
    const auto cfg = write_config("two.json", 2, {0.05});
    const auto a = run("build --config \"" + cfg.string() + "\" --out \"" + (workdir() / "a").string() + "\"");
    REQUIRE_MESSAGE(a.code == 0, a.out);
    for (const char* f : {"manifest.json", "weights.bin", "build_report.json", "subsets/level_1.idx"})
        CHECK(fs::exists(workdir() / "a" / f));
    const auto b = run("build --config \"" + cfg.string() + "\" --out \"" + (workdir() / "b").string() + "\"");
    REQUIRE(b.code == 0);
    CHECK(sha_line(a.out).size() == 64);
    CHECK(sha_line(a.out) == sha_line(b.out));
}

TEST_CASE("a training threshold of 0.5 fails with the degenerate-subset code") {
    const auto cfg = write_config("degenerate.json", 2, {0.5});
    const auto r = run("build --config \"" + cfg.string() + "\" --out \"" + (workdir() / "degenerate").string() + "\"");
    CHECK(r.code == 4);
    CHECK(r.out.find("level 1") != std::string::npos);
}

TEST_CASE("evaluate sweeps runtime thresholds") {
    const auto cfg = write_config("three.json", 3, {0.05, 0.05});
    const auto ens = workdir() / "three";
    REQUIRE(run("build --config \"" + cfg.string() + "\" --out \"" + ens.string() + "\"").code == 0);
    const auto r = run("evaluate --ensemble \"" + ens.string() + "\" --data \"" + cfg.string() +
                       "\" --runtime-thresholds 0.4,0.2,0.1,0.01 --consensus most_confident --out \"" +
                       (workdir() / "eval").string() + "\"");
    REQUIRE_MESSAGE(r.code == 0, r.out);
    int dirs = 0;
    for (const auto& e : fs::directory_iterator(workdir() / "eval"))
        if (e.is_directory()) {
            ++dirs;
            CHECK(fs::exists(e.path() / "samples.csv"));
        }
    CHECK(dirs == 4);
    CHECK(fs::exists(workdir() / "eval" / "summary.json"));

    const auto h = run("histograms --ensemble \"" + ens.string() + "\" --data \"" + cfg.string() +
                       "\" --member 2 --bins 5 --out \"" + (workdir() / "hist").string() + "\"");
    CHECK(h.code == 0);
    CHECK(fs::exists(workdir() / "hist" / "member_2_uncertainty.csv"));
    const auto bad = run("histograms --ensemble \"" + ens.string() + "\" --data \"" + cfg.string() +
                         "\" --member 7 --out \"" + (workdir() / "hist").string() + "\"");
    CHECK(bad.code != 0);
}

TEST_CASE("a single-member cascade matches the baseline") {
    const auto cfg = write_config("one.json", 1, {});
    const auto ens = workdir() / "one";
    REQUIRE(run("build --config \"" + cfg.string() + "\" --out \"" + ens.string() + "\"").code == 0);
    const auto base = run("baseline --ensemble \"" + ens.string() + "\" --data \"" + cfg.string() + "\"");
    REQUIRE(base.code == 0);
    const auto r = run("evaluate --ensemble \"" + ens.string() + "\" --data \"" + cfg.string() +
                       "\" --runtime-thresholds 0.2 --consensus last_member --out \"" + (workdir() / "one_eval").string() +
                       "\"");
    REQUIRE(r.code == 0);
    CHECK(number_after(r.out, "_last_member: accuracy ") == number_after(base.out, "baseline accuracy "));
}

TEST_CASE("usage and input errors") {
    CHECK(run("").code != 0);
    CHECK(run("build --config /nonexistent/cfg.json --out /tmp/x").code != 0);
    CHECK(run("baseline --ensemble /nonexistent --data x.csv").code != 0);
    const auto bad = workdir() / "bad.json";
    std::ofstream(bad) << R"({"dataset": {"source": "blobs"}, "build": {"num_members": 2}})";
    CHECK(run("build --config \"" + bad.string() + "\" --out \"" + (workdir() / "bad").string() + "\"").code == 2);
}
