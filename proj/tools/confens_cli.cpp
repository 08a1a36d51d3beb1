// Command-line driver: build an ensemble from an experiment config, then
// evaluate run-time threshold sweeps, inspect member score histograms and
// compare against the single-model baseline.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "confens/errors.hpp"
#include "confens/experiment.hpp"
#include "confens/persistence.hpp"

namespace {

using namespace confens;

std::vector<Consensus> parse_heuristics(const std::string& names) {
    std::vector<Consensus> out;
    std::size_t start = 0;
    while (start <= names.size()) {
        const auto comma = names.find(',', start);
        out.push_back(consensus_from_string(names.substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

int report_failure(const char* command) {
    const ExitCode code = exit_code_for_current_exception();
    try {
        throw;
    } catch (const std::exception& e) {
        std::cerr << "confens " << command << ": " << e.what() << "\n";
    } catch (...) {
        std::cerr << "confens " << command << ": unknown error\n";
    }
    return static_cast<int>(code);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Confidence-gated sequential ensembles"};
    app.require_subcommand(1);

    std::string config_path, out_dir, ensemble_dir, data_arg, thresholds, consensus;
    std::size_t member = 0;
    std::size_t bins = 10;
    std::size_t ece_bins = 15;

    auto* build = app.add_subcommand("build", "Train an ensemble from an experiment config");
    build->add_option("--config", config_path, "Experiment config (JSON)")->required();
    build->add_option("--out", out_dir, "Output directory")->required();

    auto* evaluate = app.add_subcommand("evaluate", "Cascade inference over a run-time threshold sweep");
    evaluate->add_option("--ensemble", ensemble_dir, "Built ensemble directory")->required();
    evaluate->add_option("--data", data_arg, "Dataset: .json block/config, .csv, or idx:<images>,<labels>")->required();
    evaluate->add_option("--runtime-thresholds", thresholds,
                         "Comma-separated sweep; '/' separates per-level values (default: manifest runtime config)");
    evaluate->add_option("--consensus", consensus, "last_member, most_confident, or both comma-separated");
    evaluate->add_option("--ece-bins", ece_bins, "Calibration bins")->capture_default_str();
    evaluate->add_option("--out", out_dir, "Output directory")->required();

    auto* histograms = app.add_subcommand("histograms", "Uncertainty / probability histograms of one member");
    histograms->add_option("--ensemble", ensemble_dir)->required();
    histograms->add_option("--data", data_arg)->required();
    histograms->add_option("--member", member)->required();
    histograms->add_option("--bins", bins)->capture_default_str();
    histograms->add_option("--out", out_dir)->required();

    auto* baseline = app.add_subcommand("baseline", "Top-1 accuracy of member 0 alone");
    baseline->add_option("--ensemble", ensemble_dir)->required();
    baseline->add_option("--data", data_arg)->required();

    auto* run = app.add_subcommand("run", "build, then evaluate every runtime block of the config");
    run->add_option("--config", config_path)->required();
    run->add_option("--out", out_dir, "Output directory (default: config output_dir)");

    CLI11_PARSE(app, argc, argv);

    if (build->parsed()) {
        try {
            const auto outcome = run_build(load_experiment_config(config_path), out_dir);
            for (const auto& m : outcome.report.members)
                std::printf("member %zu: %zu training samples, final loss %.6f, training accuracy %.4f\n", m.level,
                            m.subset_size, m.final_training_loss, m.training_accuracy);
            std::printf("manifest sha256 %s\n", outcome.manifest_sha256.c_str());
            return 0;
        } catch (...) {
            return report_failure("build");
        }
    }

    if (evaluate->parsed()) {
        try {
            const auto manifest = load_manifest(ensemble_dir);
            const auto data = load_dataset(dataset_source_from_argument(data_arg));
            std::vector<RuntimeConfig> sweep;
            const auto heuristics =
                consensus.empty() ? std::vector<Consensus>{manifest.runtime.consensus} : parse_heuristics(consensus);
            if (thresholds.empty()) {
                for (const auto c : heuristics) sweep.push_back(RuntimeConfig{manifest.runtime.thresholds, c});
            } else {
                sweep = parse_runtime_sweep(thresholds, heuristics, manifest.size());
            }
            const auto outcomes = run_evaluate(manifest, data, sweep, MetricsConfig{ece_bins, 10}, out_dir);
            std::printf("baseline (member 0) accuracy %.6f\n", run_baseline(manifest, data));
            for (const auto& o : outcomes) {
                std::printf("%s: accuracy %.6f ece %.6f utilization", o.label.c_str(), o.record.accuracy,
                            o.calibration.ece);
                for (const double u : o.record.utilization()) std::printf(" %.4f", u);
                std::printf("\n");
            }
            return 0;
        } catch (...) {
            return report_failure("evaluate");
        }
    }

    if (histograms->parsed()) {
        try {
            const auto manifest = load_manifest(ensemble_dir);
            const auto data = load_dataset(dataset_source_from_argument(data_arg));
            const auto h = run_histograms(manifest, data, member, bins, out_dir);
            std::printf("member %zu: %zu samples histogrammed\n", member, h.uncertainty.total());
            return 0;
        } catch (...) {
            return report_failure("histograms");
        }
    }

    if (baseline->parsed()) {
        try {
            const auto manifest = load_manifest(ensemble_dir);
            const auto data = load_dataset(dataset_source_from_argument(data_arg));
            std::printf("baseline accuracy %.6f\n", run_baseline(manifest, data));
            return 0;
        } catch (...) {
            return report_failure("baseline");
        }
    }

    if (run->parsed()) {
        try {
            const auto cfg = load_experiment_config(config_path);
            if (out_dir.empty() && !cfg.output_dir) throw ConfigError("no --out given and config has no output_dir");
            const std::filesystem::path out = out_dir.empty() ? *cfg.output_dir : std::filesystem::path(out_dir);
            const auto built = run_build(cfg, out / "ensemble");
            const auto data = load_dataset(cfg.eval_dataset.value_or(cfg.dataset));
            for (std::size_t s = 0; s < built.manifest.size(); ++s)
                run_histograms(built.manifest, data, s, cfg.metrics.histogram_bins, out / "histograms");
            const auto outcomes = run_evaluate(built.manifest, data, cfg.runtime_sweep, cfg.metrics, out / "evaluation");
            std::printf("manifest sha256 %s\n", built.manifest_sha256.c_str());
            std::printf("baseline (member 0) accuracy %.6f\n", run_baseline(built.manifest, data));
            for (const auto& o : outcomes)
                std::printf("%s: accuracy %.6f ece %.6f\n", o.label.c_str(), o.record.accuracy, o.calibration.ece);
            return 0;
        } catch (...) {
            return report_failure("run");
        }
    }
    return 0;
}
