#ifndef CONFENS_EXPERIMENT_HPP
#define CONFENS_EXPERIMENT_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "confens/cascade.hpp"
#include "confens/dataset.hpp"
#include "confens/ensemble.hpp"

namespace confens {

// Process exit codes of the command-line driver.
enum class ExitCode : int {
    ok = 0,
    failure = 1,
    config = 2,
    data = 3,
    degenerate_subset = 4,
    io = 5,
    manifest = 6,
};

// Maps the exception currently being handled to its exit code.
ExitCode exit_code_for_current_exception();

struct DatasetSource {
    enum class Kind { blobs, csv, idx } kind = Kind::blobs;

    // blobs
    int num_classes = 3;
    int per_class = 1000;
    int dim = 2;
    double spread = 1.0;
    double overlap = 0.5;
    std::uint64_t seed = 0;

    // csv / idx; relative paths resolve against the config file's directory
    std::filesystem::path path;
    std::filesystem::path images;
    std::filesystem::path labels;
    std::optional<int> declared_classes;
};

DatasetSource parse_dataset_source(const nlohmann::json& j, const std::filesystem::path& base_dir);
Dataset load_dataset(const DatasetSource& source);

// `--data` argument: a JSON file (a dataset block, or an experiment config
// whose "dataset" block is used), a .csv file, or "idx:<images>,<labels>".
DatasetSource dataset_source_from_argument(const std::string& arg);

struct MetricsConfig {
    std::size_t ece_bins = 15;
    std::size_t histogram_bins = 10;
};

struct ExperimentConfig {
    DatasetSource dataset;
    std::optional<DatasetSource> eval_dataset;  // defaults to the training data
    BuildConfig build;
    std::vector<RuntimeConfig> runtime_sweep;
    MetricsConfig metrics;
    std::optional<std::filesystem::path> output_dir;
};

// Threshold grids of the reference experiments.
inline const std::vector<double> kTrainingThresholdGrid = {0.2, 0.1, 0.01};
inline const std::vector<double> kRuntimeThresholdGrid = {0.4, 0.2, 0.1, 0.01};

// Throws ConfigError on invalid or unknown fields. The classifier's
// input_dim / num_classes are filled in from the dataset by prepare_build.
// When "runtime" is absent the sweep is the runtime grid crossed with both
// consensus heuristics.
ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Loads the dataset and completes the classifier dims from it.
Dataset prepare_build(ExperimentConfig& cfg);

struct BuildOutcome {
    EnsembleManifest manifest;
    BuildReport report;
    std::string manifest_sha256;  // of manifest.json as written
};

// Trains the ensemble and writes manifest.json, weights.bin,
// build_report.json and subsets/level_<s>.idx into `out`.
BuildOutcome run_build(ExperimentConfig cfg, const std::filesystem::path& out);

// Accuracy of member 0 alone.
double run_baseline(const EnsembleManifest& manifest, const Dataset& data);

struct EvaluationOutcome {
    std::string label;
    EvaluationRecord record;
    CalibrationReport calibration;
};

std::string runtime_label(const RuntimeConfig& rcfg);

// One output directory per runtime config under `out`, plus summary.json.
std::vector<EvaluationOutcome> run_evaluate(const EnsembleManifest& manifest, const Dataset& data,
                                            const std::vector<RuntimeConfig>& sweep, const MetricsConfig& metrics,
                                            const std::filesystem::path& out);

struct HistogramOutcome {
    ScoreHistogram uncertainty;
    ScoreHistogram probability;
};

// Writes member_<k>_uncertainty.csv and member_<k>_probability.csv.
HistogramOutcome run_histograms(const EnsembleManifest& manifest, const Dataset& data, std::size_t member,
                                std::size_t bins, const std::filesystem::path& out);

// Parses "0.4,0.2" (one homogeneous config per entry) where an entry may
// also list per-level values separated by '/', e.g. "0.4/0.2/0.1".
std::vector<RuntimeConfig> parse_runtime_sweep(const std::string& thresholds, const std::vector<Consensus>& heuristics,
                                               std::size_t members);

}  // namespace confens

#endif  // CONFENS_EXPERIMENT_HPP
