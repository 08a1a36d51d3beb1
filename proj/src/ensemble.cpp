#include "confens/ensemble.hpp"

#include <algorithm>
#include <chrono>
#include <string>

#include "confens/digest.hpp"
#include "confens/errors.hpp"
#include "confens/random.hpp"

namespace confens {

std::string_view to_string(SelectionRule rule) { return rule == SelectionRule::nested ? "nested" : "rebased"; }

SelectionRule selection_rule_from_string(std::string_view name) {
    if (name == "nested") return SelectionRule::nested;
    if (name == "rebased") return SelectionRule::rebased;
    throw ConfigError("unknown selection rule '" + std::string(name) + "'");
}

void EnsembleManifest::validate() const {
    if (format_version != kManifestFormatVersion)
        throw VersionError("unsupported manifest format_version " + std::to_string(format_version));
    if (members.empty()) throw ManifestError("manifest lists no members");
    for (std::size_t s = 0; s < members.size(); ++s) {
        if (members[s].level != s) throw ManifestError("member levels are not contiguous from 0");
        if (static_cast<std::size_t>(members[s].model.parameters.size()) != parameter_count(members[s].model.spec))
            throw ManifestError("member " + std::to_string(s) + " weights do not match its spec");
        if (members[s].model.spec.input_dim != members[0].model.spec.input_dim ||
            members[s].model.spec.num_classes != members[0].model.spec.num_classes)
            throw ManifestError("members disagree on input_dim / num_classes");
    }
    if (training_thresholds.size() + 1 != members.size())
        throw ManifestError("manifest needs exactly S-1 training thresholds");
    try {
        runtime.validate(members.size());
    } catch (const ConfigError& e) {
        throw ManifestError(e.what());
    }
}

std::string manifest_digest(const EnsembleManifest& m) {
    Sha256 h;
    h.update(std::string_view("manifest/v1"))
        .update_u64(static_cast<std::uint64_t>(m.format_version))
        .update(to_string(m.selection_rule))
        .update(m.dataset_id)
        .update(m.dataset_digest);
    h.update_u64(m.training_thresholds.size());
    for (const double t : m.training_thresholds) h.update_f64(t);
    h.update(to_string(m.runtime.consensus)).update_u64(m.runtime.thresholds.size());
    for (const double t : m.runtime.thresholds) h.update_f64(t);
    h.update_u64(m.members.size());
    for (const auto& mem : m.members) {
        const auto& spec = mem.model.spec;
        h.update_u64(mem.level)
            .update(to_string(spec.kind))
            .update_u64(static_cast<std::uint64_t>(spec.input_dim))
            .update_u64(static_cast<std::uint64_t>(spec.num_classes))
            .update_u64(static_cast<std::uint64_t>(spec.hidden_units))
            .update_u64(spec.seed)
            .update(mem.model.training_fingerprint)
            .update_u64(mem.subset_size)
            .update(mem.subset_digest)
            .update_u64(static_cast<std::uint64_t>(mem.model.parameters.size()));
        for (Eigen::Index i = 0; i < mem.model.parameters.size(); ++i) h.update_f64(mem.model.parameters[i]);
    }
    return h.hex_digest();
}

void BuildConfig::validate() const {
    if (num_members < 1) throw ConfigError("num_members must be >= 1");
    if (training_thresholds.size() != static_cast<std::size_t>(num_members - 1))
        throw ConfigError("expected " + std::to_string(num_members - 1) + " training thresholds, got " +
                          std::to_string(training_thresholds.size()));
    for (const double t : training_thresholds)
        if (!(t >= 0.0 && t <= 0.5)) throw ConfigError("training threshold " + std::to_string(t) + " outside [0, 0.5]");
    if (histogram_bins < 1) throw ConfigError("histogram_bins must be >= 1");
    classifier.validate();
    train.validate();
    if (!runtime.thresholds.empty()) runtime.validate(static_cast<std::size_t>(num_members));
}

std::size_t BuildConfig::effective_min_subset_size() const {
    return min_subset_size.value_or(std::max<std::size_t>(2 * static_cast<std::size_t>(classifier.num_classes), 10));
}

namespace {

void check_threshold(double threshold) {
    if (!(threshold >= 0.0 && threshold <= 0.5))
        throw InvalidInput("selection threshold " + std::to_string(threshold) + " outside [0, 0.5]");
}

SubsetView select_uncertain(const Dataset& data, const SubsetView& pool, const TrainedModel& member,
                            double threshold) {
    check_threshold(threshold);
    if (pool.parent_id() != data.id()) throw InvalidView("selection pool does not belong to dataset '" + data.id() + "'");
    std::vector<std::size_t> kept;
    for (const std::size_t i : pool.indices()) {
        if (i >= data.size()) throw InvalidView("selection pool index out of range");
        if (predict(member, data.features(i).transpose()).uncertainty > threshold) kept.push_back(i);
    }
    return SubsetView(data.id(), std::move(kept));
}

}  // namespace

SubsetView select_next_subset_nested(const Dataset& data, const SubsetView& prev_pool, const TrainedModel& member,
                                     double threshold) {
    return select_uncertain(data, prev_pool, member, threshold);
}

SubsetView select_next_subset_rebased(const Dataset& data, const SubsetView& full_pool, const TrainedModel& member,
                                      double threshold) {
    if (full_pool.size() != data.size())
        throw InvalidView("rebased selection needs the full training pool (" + std::to_string(data.size()) +
                          " samples), got " + std::to_string(full_pool.size()));
    return select_uncertain(data, full_pool, member, threshold);
}

std::pair<EnsembleManifest, BuildReport> build_ensemble(const Dataset& data, const BuildConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw EmptyTrainingSet();
    if (data.feature_dim() != cfg.classifier.input_dim || data.num_classes() != cfg.classifier.num_classes)
        throw InvalidInput("classifier spec (input_dim " + std::to_string(cfg.classifier.input_dim) + ", classes " +
                           std::to_string(cfg.classifier.num_classes) + ") does not match dataset (" +
                           std::to_string(data.feature_dim()) + ", " + std::to_string(data.num_classes()) + ")");

    const auto members = static_cast<std::size_t>(cfg.num_members);
    const std::size_t minimum = cfg.effective_min_subset_size();

    EnsembleManifest manifest;
    manifest.selection_rule = cfg.selection_rule;
    manifest.training_thresholds = cfg.training_thresholds;
    manifest.runtime = cfg.runtime.thresholds.empty() ? RuntimeConfig::homogeneous(0.2, members, cfg.runtime.consensus)
                                                      : cfg.runtime;
    manifest.dataset_id = data.id();
    manifest.dataset_digest = content_digest(data);

    BuildReport report;
    const SubsetView full = SubsetView::all(data);

    for (std::size_t s = 0; s < members; ++s) {
        SubsetView pool = full;
        if (s > 0) {
            const double t = cfg.training_thresholds[s - 1];
            const auto& prev_model = manifest.members[s - 1].model;
            pool = cfg.selection_rule == SelectionRule::nested
                       ? select_next_subset_nested(data, report.pools[s - 1], prev_model, t)
                       : select_next_subset_rebased(data, full, prev_model, t);
            if (pool.size() < minimum) throw DegenerateSubset(s, pool.size(), minimum);
        }
        const Dataset train_set = materialize(pool, data);

        ClassifierSpec spec = cfg.classifier;
        TrainConfig train = cfg.train;
        if (s > 0) {
            spec.seed = mix_seed(cfg.classifier.seed, s);
            train.seed = mix_seed(cfg.train.seed, s);
        }

        const auto start = std::chrono::steady_clock::now();
        TrainedModel model = fit(init_model(spec), train_set, train);
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        const auto preds = predict_all(model, train_set);
        std::vector<double> u, top;
        std::vector<bool> correct;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            u.push_back(preds[i].uncertainty);
            top.push_back(preds[i].top_probability);
            correct.push_back(preds[i].class_index == train_set.label(i));
        }

        MemberReport mr;
        mr.level = s;
        mr.subset_size = pool.size();
        mr.subset_digest = indices_digest(pool.indices());
        mr.training_seconds = seconds;
        mr.final_training_loss = mean_loss(model, train_set);
        mr.training_accuracy = top1_accuracy(preds, train_set.labels());
        mr.uncertainty_histogram = score_histogram(u, correct, ScoreKind::uncertainty, cfg.histogram_bins);
        mr.probability_histogram = score_histogram(top, correct, ScoreKind::top_probability, cfg.histogram_bins);

        manifest.members.push_back({s, std::move(model), pool.size(), mr.subset_digest});
        report.members.push_back(std::move(mr));
        report.pools.push_back(std::move(pool));
    }
    return {std::move(manifest), std::move(report)};
}

}  // namespace confens
