#include "confens/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>

#include "confens/classifier.hpp"
#include "confens/errors.hpp"
#include "confens/metrics.hpp"
#include "confens/persistence.hpp"

namespace confens {

using nlohmann::json;

ExitCode exit_code_for_current_exception() {
    try {
        throw;
    } catch (const DegenerateSubset&) {
        return ExitCode::degenerate_subset;
    } catch (const ManifestError&) {
        return ExitCode::manifest;
    } catch (const ConfigError&) {
        return ExitCode::config;
    } catch (const IoError&) {
        return ExitCode::io;
    } catch (const ParseError&) {
        return ExitCode::data;
    } catch (const InvalidView&) {
        return ExitCode::data;
    } catch (const InvalidInput&) {
        return ExitCode::data;
    } catch (const EmptyTrainingSet&) {
        return ExitCode::data;
    } catch (const json::exception&) {
        return ExitCode::config;
    } catch (...) {
        return ExitCode::failure;
    }
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& block) {
    if (!j.is_object()) throw ConfigError(block + " must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (!allowed.contains(key)) throw ConfigError(block + ": unknown field '" + key + "'");
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& block) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(block + ": field '" + key + "' has the wrong type");
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::string format_threshold(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

RuntimeConfig parse_runtime_block(const json& j, std::size_t members) {
    check_keys(j, {"threshold", "thresholds", "consensus"}, "runtime");
    RuntimeConfig r;
    r.consensus = consensus_from_string(get_or<std::string>(j, "consensus", "most_confident", "runtime"));
    if (j.contains("threshold") == j.contains("thresholds"))
        throw ConfigError("runtime: give exactly one of 'threshold' (homogeneous) or 'thresholds' (per level)");
    if (j.contains("threshold"))
        r.thresholds.assign(members, get_or<double>(j, "threshold", 0.0, "runtime"));
    else
        r.thresholds = get_or<std::vector<double>>(j, "thresholds", {}, "runtime");
    r.validate(members);
    return r;
}

}  // namespace

DatasetSource parse_dataset_source(const json& j, const std::filesystem::path& base_dir) {
    DatasetSource src;
    const auto kind = get_or<std::string>(j, "source", "", "dataset");
    if (kind == "blobs") {
        check_keys(j, {"source", "num_classes", "per_class", "dim", "spread", "overlap", "seed"}, "dataset");
        src.kind = DatasetSource::Kind::blobs;
        src.num_classes = get_or<int>(j, "num_classes", src.num_classes, "dataset");
        src.per_class = get_or<int>(j, "per_class", src.per_class, "dataset");
        src.dim = get_or<int>(j, "dim", src.dim, "dataset");
        src.spread = get_or<double>(j, "spread", src.spread, "dataset");
        src.overlap = get_or<double>(j, "overlap", src.overlap, "dataset");
        src.seed = get_or<std::uint64_t>(j, "seed", src.seed, "dataset");
        if (src.num_classes < 2 || src.per_class < 1 || src.dim < 1 || !(src.spread > 0.0) ||
            !(src.overlap >= 0.0 && src.overlap < 1.0))
            throw ConfigError("dataset: invalid blobs parameters");
    } else if (kind == "csv") {
        check_keys(j, {"source", "path", "num_classes"}, "dataset");
        src.kind = DatasetSource::Kind::csv;
        src.path = resolve(base_dir, get_or<std::string>(j, "path", "", "dataset"));
        if (j.contains("num_classes")) src.declared_classes = get_or<int>(j, "num_classes", 0, "dataset");
    } else if (kind == "idx") {
        check_keys(j, {"source", "images", "labels", "num_classes"}, "dataset");
        src.kind = DatasetSource::Kind::idx;
        src.images = resolve(base_dir, get_or<std::string>(j, "images", "", "dataset"));
        src.labels = resolve(base_dir, get_or<std::string>(j, "labels", "", "dataset"));
        if (j.contains("num_classes")) src.declared_classes = get_or<int>(j, "num_classes", 0, "dataset");
    } else {
        throw ConfigError("dataset: 'source' must be one of blobs, csv, idx");
    }
    return src;
}

Dataset load_dataset(const DatasetSource& src) {
    switch (src.kind) {
        case DatasetSource::Kind::blobs:
            return generate_blobs(src.num_classes, src.per_class, src.dim, src.spread, src.overlap, src.seed);
        case DatasetSource::Kind::csv:
            return load_csv(src.path, CsvSchema{src.declared_classes});
        case DatasetSource::Kind::idx:
            return load_idx(src.images, src.labels, src.declared_classes);
    }
    throw ConfigError("unknown dataset source");
}

DatasetSource dataset_source_from_argument(const std::string& arg) {
    if (arg.rfind("idx:", 0) == 0) {
        const auto comma = arg.find(',', 4);
        if (comma == std::string::npos) throw ConfigError("--data idx:<images>,<labels> expects two paths");
        DatasetSource src;
        src.kind = DatasetSource::Kind::idx;
        src.images = arg.substr(4, comma - 4);
        src.labels = arg.substr(comma + 1);
        return src;
    }
    const std::filesystem::path path(arg);
    if (path.extension() == ".csv") {
        DatasetSource src;
        src.kind = DatasetSource::Kind::csv;
        src.path = path;
        return src;
    }
    if (path.extension() == ".json") {
        json j;
        try {
            j = read_json(path);
        } catch (const json::exception& e) {
            throw ConfigError(arg + ": " + e.what());
        }
        const auto base = path.parent_path();
        return parse_dataset_source(j.contains("dataset") ? j.at("dataset") : j, base);
    }
    throw ConfigError("--data must be a .json dataset/config file, a .csv file or idx:<images>,<labels>");
}

ExperimentConfig parse_experiment_config(const json& j, const std::filesystem::path& base_dir) {
    check_keys(j, {"dataset", "eval_dataset", "build", "runtime", "metrics", "output_dir"}, "config");
    ExperimentConfig cfg;
    if (!j.contains("dataset")) throw ConfigError("config: missing 'dataset' block");
    cfg.dataset = parse_dataset_source(j.at("dataset"), base_dir);
    if (j.contains("eval_dataset")) cfg.eval_dataset = parse_dataset_source(j.at("eval_dataset"), base_dir);

    if (j.contains("metrics")) {
        const json& m = j.at("metrics");
        check_keys(m, {"ece_bins", "histogram_bins"}, "metrics");
        cfg.metrics.ece_bins = get_or<std::size_t>(m, "ece_bins", cfg.metrics.ece_bins, "metrics");
        cfg.metrics.histogram_bins = get_or<std::size_t>(m, "histogram_bins", cfg.metrics.histogram_bins, "metrics");
        if (cfg.metrics.ece_bins < 1 || cfg.metrics.histogram_bins < 1)
            throw ConfigError("metrics: bin counts must be >= 1");
    }

    if (!j.contains("build")) throw ConfigError("config: missing 'build' block");
    const json& b = j.at("build");
    check_keys(b, {"num_members", "training_thresholds", "selection_rule", "classifier", "train", "min_subset_size",
                   "default_runtime"},
               "build");
    BuildConfig& bc = cfg.build;
    bc.num_members = get_or<int>(b, "num_members", 1, "build");
    bc.training_thresholds = get_or<std::vector<double>>(b, "training_thresholds", {}, "build");
    bc.selection_rule = selection_rule_from_string(get_or<std::string>(b, "selection_rule", "nested", "build"));
    if (b.contains("min_subset_size")) bc.min_subset_size = get_or<std::size_t>(b, "min_subset_size", 0, "build");
    bc.histogram_bins = cfg.metrics.histogram_bins;

    if (b.contains("classifier")) {
        const json& c = b.at("classifier");
        check_keys(c, {"kind", "hidden_units", "seed", "input_dim", "num_classes"}, "classifier");
        bc.classifier.kind = classifier_kind_from_string(get_or<std::string>(c, "kind", "linear", "classifier"));
        bc.classifier.hidden_units = get_or<int>(c, "hidden_units", bc.classifier.kind == ClassifierKind::mlp ? 16 : 0,
                                                 "classifier");
        bc.classifier.seed = get_or<std::uint64_t>(c, "seed", 0, "classifier");
        bc.classifier.input_dim = get_or<int>(c, "input_dim", 0, "classifier");
        bc.classifier.num_classes = get_or<int>(c, "num_classes", 0, "classifier");
    }
    if (b.contains("train")) {
        const json& t = b.at("train");
        check_keys(t, {"epochs", "batch_size", "learning_rate", "lr_decay_gamma", "lr_decay_every_epochs",
                       "weight_decay", "seed"},
                   "train");
        TrainConfig& tc = bc.train;
        tc.epochs = get_or<int>(t, "epochs", tc.epochs, "train");
        tc.batch_size = get_or<int>(t, "batch_size", tc.batch_size, "train");
        tc.learning_rate = get_or<double>(t, "learning_rate", tc.learning_rate, "train");
        tc.lr_decay_gamma = get_or<double>(t, "lr_decay_gamma", tc.lr_decay_gamma, "train");
        tc.lr_decay_every_epochs = get_or<int>(t, "lr_decay_every_epochs", tc.lr_decay_every_epochs, "train");
        tc.weight_decay = get_or<double>(t, "weight_decay", tc.weight_decay, "train");
        tc.seed = get_or<std::uint64_t>(t, "seed", tc.seed, "train");
        tc.validate();
    }
    if (bc.num_members < 1) throw ConfigError("build: num_members must be >= 1");
    const auto members = static_cast<std::size_t>(bc.num_members);
    if (b.contains("default_runtime")) bc.runtime = parse_runtime_block(b.at("default_runtime"), members);

    if (j.contains("runtime")) {
        const json& r = j.at("runtime");
        if (!r.is_array()) throw ConfigError("runtime: expected a list of runtime blocks");
        for (const auto& block : r) cfg.runtime_sweep.push_back(parse_runtime_block(block, members));
    } else {
        for (const auto c : {Consensus::last_member, Consensus::most_confident})
            for (const double t : kRuntimeThresholdGrid) cfg.runtime_sweep.push_back(RuntimeConfig::homogeneous(t, members, c));
    }
    if (j.contains("output_dir")) cfg.output_dir = resolve(base_dir, get_or<std::string>(j, "output_dir", "", "config"));
    return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    json j;
    try {
        j = read_json(path);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_experiment_config(j, path.parent_path());
}

Dataset prepare_build(ExperimentConfig& cfg) {
    Dataset data = load_dataset(cfg.dataset);
    auto& spec = cfg.build.classifier;
    if (spec.input_dim == 0) spec.input_dim = static_cast<int>(data.feature_dim());
    if (spec.num_classes == 0) spec.num_classes = data.num_classes();
    if (spec.input_dim != data.feature_dim() || spec.num_classes != data.num_classes())
        throw ConfigError("classifier input_dim / num_classes do not match the dataset");
    cfg.build.validate();
    return data;
}

BuildOutcome run_build(ExperimentConfig cfg, const std::filesystem::path& out) {
    const Dataset data = prepare_build(cfg);
    auto [manifest, report] = build_ensemble(data, cfg.build);

    std::error_code ec;
    std::filesystem::create_directories(out / "subsets", ec);
    if (ec) throw IoError("cannot create " + (out / "subsets").string() + ": " + ec.message());
    BuildOutcome outcome{std::move(manifest), std::move(report), {}};
    outcome.manifest_sha256 = save_manifest(outcome.manifest, out);
    write_json(to_json(outcome.report), out / "build_report.json");
    for (std::size_t s = 1; s < outcome.report.pools.size(); ++s)
        write_subset_index(outcome.report.pools[s], out / "subsets" / ("level_" + std::to_string(s) + ".idx"));
    return outcome;
}

double run_baseline(const EnsembleManifest& manifest, const Dataset& data) {
    if (data.feature_dim() != manifest.members.front().model.spec.input_dim)
        throw InvalidInput("dataset feature_dim does not match the ensemble");
    return top1_accuracy(predict_all(manifest.members.front().model, data), data.labels());
}

std::string runtime_label(const RuntimeConfig& rcfg) {
    std::string label = "tr";
    const bool homogeneous =
        std::all_of(rcfg.thresholds.begin(), rcfg.thresholds.end(), [&](double t) { return t == rcfg.thresholds.front(); });
    if (homogeneous && !rcfg.thresholds.empty()) {
        label += "-" + format_threshold(rcfg.thresholds.front());
    } else {
        for (const double t : rcfg.thresholds) label += "-" + format_threshold(t);
    }
    return label + "_" + std::string(to_string(rcfg.consensus));
}

std::vector<EvaluationOutcome> run_evaluate(const EnsembleManifest& manifest, const Dataset& data,
                                            const std::vector<RuntimeConfig>& sweep, const MetricsConfig& metrics,
                                            const std::filesystem::path& out) {
    const double baseline = run_baseline(manifest, data);
    std::vector<EvaluationOutcome> outcomes;
    json summary = json::array();
    for (const auto& rcfg : sweep) {
        EvaluationOutcome o;
        o.label = runtime_label(rcfg);
        o.record = batch_evaluate(manifest, rcfg, data);
        std::vector<double> top;
        std::vector<bool> correct;
        for (const auto& s : o.record.samples) {
            top.push_back(s.trace.chosen.top_probability);
            correct.push_back(s.correct);
        }
        o.calibration = expected_calibration_error(top, correct, metrics.ece_bins);

        const auto dir = out / o.label;
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
        write_json(to_json(o.record), dir / "evaluation.json");
        write_evaluation_csv(o.record, dir / "samples.csv");
        write_json(to_json(o.calibration), dir / "calibration.json");
        const json utilization = {{"resolved_at_level", o.record.resolved_at_level},
                                  {"resolved_by_consensus", o.record.resolved_by_consensus},
                                  {"fractions", o.record.utilization()}};
        write_json(utilization, dir / "utilization.json");

        summary.push_back({{"label", o.label},
                           {"runtime", to_json(rcfg)},
                           {"accuracy", o.record.accuracy},
                           {"ece", o.calibration.ece},
                           {"utilization", utilization}});
        outcomes.push_back(std::move(o));
    }
    write_json({{"dataset", data.id()}, {"baseline_accuracy", baseline}, {"evaluations", summary}}, out / "summary.json");
    return outcomes;
}

HistogramOutcome run_histograms(const EnsembleManifest& manifest, const Dataset& data, std::size_t member,
                                std::size_t bins, const std::filesystem::path& out) {
    if (member >= manifest.members.size())
        throw InvalidInput("member " + std::to_string(member) + " does not exist; ensemble has " +
                           std::to_string(manifest.members.size()));
    const auto preds = predict_all(manifest.members[member].model, data);
    std::vector<double> u, top;
    std::vector<bool> correct;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        u.push_back(preds[i].uncertainty);
        top.push_back(preds[i].top_probability);
        correct.push_back(preds[i].class_index == data.label(i));
    }
    HistogramOutcome h{score_histogram(u, correct, ScoreKind::uncertainty, bins),
                       score_histogram(top, correct, ScoreKind::top_probability, bins)};
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
    const std::string stem = "member_" + std::to_string(member);
    write_histogram_csv(h.uncertainty, out / (stem + "_uncertainty.csv"));
    write_histogram_csv(h.probability, out / (stem + "_probability.csv"));
    return h;
}

std::vector<RuntimeConfig> parse_runtime_sweep(const std::string& thresholds, const std::vector<Consensus>& heuristics,
                                               std::size_t members) {
    std::vector<std::vector<double>> entries;
    std::stringstream ss(thresholds);
    std::string entry;
    while (std::getline(ss, entry, ',')) {
        std::vector<double> levels;
        std::stringstream es(entry);
        std::string item;
        while (std::getline(es, item, '/')) {
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
            if (item.empty() || ec != std::errc{} || ptr != item.data() + item.size())
                throw ConfigError("runtime threshold '" + item + "' is not a number");
            levels.push_back(v);
        }
        if (levels.size() == 1) levels.assign(members, levels.front());
        entries.push_back(std::move(levels));
    }
    if (entries.empty()) throw ConfigError("no runtime thresholds given");
    std::vector<RuntimeConfig> out;
    for (const auto c : heuristics)
        for (const auto& e : entries) {
            RuntimeConfig r{e, c};
            r.validate(members);
            out.push_back(std::move(r));
        }
    return out;
}

}  // namespace confens
