#include "confens/cascade.hpp"

#include <cmath>
#include <string>

#include "confens/classifier.hpp"
#include "confens/ensemble.hpp"

namespace confens {

std::string_view to_string(Consensus c) {
    return c == Consensus::last_member ? "last_member" : "most_confident";
}

Consensus consensus_from_string(std::string_view name) {
    if (name == "last_member") return Consensus::last_member;
    if (name == "most_confident") return Consensus::most_confident;
    throw ConfigError("unknown consensus heuristic '" + std::string(name) + "'");
}

RuntimeConfig RuntimeConfig::homogeneous(double threshold, std::size_t members, Consensus consensus) {
    return RuntimeConfig{std::vector<double>(members, threshold), consensus};
}

void RuntimeConfig::validate(std::size_t members) const {
    if (thresholds.size() != members)
        throw ConfigError("runtime config has " + std::to_string(thresholds.size()) + " thresholds for " +
                          std::to_string(members) + " members");
    for (const double t : thresholds)
        if (!(t >= 0.0 && t <= 0.5)) throw ConfigError("runtime threshold " + std::to_string(t) + " outside [0, 0.5]");
}

std::size_t consensus_choice(Consensus c, std::span<const Prediction> predictions) {
    if (predictions.empty()) throw InvalidInput("consensus over an empty prediction list");
    if (c == Consensus::last_member) return predictions.size() - 1;
    std::size_t best = 0;
    for (std::size_t i = 1; i < predictions.size(); ++i)
        if (predictions[i].uncertainty < predictions[best].uncertainty) best = i;
    return best;
}

Prediction consensus_last_member(std::span<const Prediction> predictions) {
    return predictions[consensus_choice(Consensus::last_member, predictions)];
}

Prediction consensus_most_confident(std::span<const Prediction> predictions) {
    return predictions[consensus_choice(Consensus::most_confident, predictions)];
}

std::pair<Prediction, CascadeTrace> cascade_predict(const EnsembleManifest& manifest, const RuntimeConfig& rcfg,
                                                    const Eigen::Ref<const Vector>& features) {
    rcfg.validate(manifest.members.size());
    auto trace = cascade_run(rcfg, [&](std::size_t level) { return predict(manifest.members[level].model, features); });
    return {trace.chosen, std::move(trace)};
}

std::vector<Prediction> EvaluationRecord::chosen_predictions() const {
    std::vector<Prediction> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.trace.chosen);
    return out;
}

std::vector<int> EvaluationRecord::labels() const {
    std::vector<int> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.label);
    return out;
}

std::vector<double> EvaluationRecord::utilization() const {
    const double n = static_cast<double>(samples.size());
    std::vector<double> out;
    for (const auto c : resolved_at_level) out.push_back(static_cast<double>(c) / n);
    out.push_back(static_cast<double>(resolved_by_consensus) / n);
    return out;
}

EvaluationRecord batch_evaluate(const EnsembleManifest& manifest, const RuntimeConfig& rcfg, const Dataset& data) {
    rcfg.validate(manifest.members.size());
    if (data.feature_dim() != manifest.members.front().model.spec.input_dim)
        throw InvalidInput("dataset feature_dim " + std::to_string(data.feature_dim()) + " does not match ensemble input_dim " +
                           std::to_string(manifest.members.front().model.spec.input_dim));
    return batch_evaluate_with(rcfg, data.labels(), [&](std::size_t i, std::size_t level) {
        try {
            return predict(manifest.members[level].model, data.features(i).transpose());
        } catch (const std::exception& e) {
            throw InvalidInput("sample " + std::to_string(i) + ": " + e.what());
        }
    });
}

}  // namespace confens
