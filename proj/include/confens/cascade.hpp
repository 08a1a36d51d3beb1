#ifndef CONFENS_CASCADE_HPP
#define CONFENS_CASCADE_HPP

// Run-time inference through an ensemble: members are consulted in order and
// the first one whose uncertainty is strictly below its level's threshold
// answers. When nobody is confident, a consensus heuristic picks one of the
// S member predictions.

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "confens/dataset.hpp"
#include "confens/errors.hpp"
#include "confens/numerics.hpp"

namespace confens {

struct EnsembleManifest;

enum class Consensus { last_member, most_confident };

std::string_view to_string(Consensus c);
Consensus consensus_from_string(std::string_view name);

struct RuntimeConfig {
    std::vector<double> thresholds;  // one per member, each in [0, 0.5]
    Consensus consensus = Consensus::most_confident;

    static RuntimeConfig homogeneous(double threshold, std::size_t members, Consensus consensus);

    void validate(std::size_t members) const;
    friend bool operator==(const RuntimeConfig&, const RuntimeConfig&) = default;
};

Prediction consensus_last_member(std::span<const Prediction> predictions);
// Lowest uncertainty; ties go to the lowest member index.
Prediction consensus_most_confident(std::span<const Prediction> predictions);

// Index into `predictions` picked by the heuristic.
std::size_t consensus_choice(Consensus c, std::span<const Prediction> predictions);

struct CascadeStep {
    std::size_t level = 0;
    Prediction prediction;
    bool accepted = false;
};

struct CascadeTrace {
    std::vector<CascadeStep> steps;
    std::optional<std::size_t> accepted_level;  // empty when consensus decided
    std::size_t chosen_level = 0;               // member whose prediction was returned
    Prediction chosen;

    bool consensus_used() const noexcept { return !accepted_level.has_value(); }
};

// Walks the cascade with `evaluate(level) -> Prediction` standing in for the
// members, so that any source of predictions (trained models, fixed stubs)
// follows the same decision rule.
template <typename Evaluate>
CascadeTrace cascade_run(const RuntimeConfig& rcfg, Evaluate&& evaluate) {
    CascadeTrace trace;
    const std::size_t members = rcfg.thresholds.size();
    if (members == 0) throw InvalidInput("cascade needs at least one member");
    std::vector<Prediction> seen;
    seen.reserve(members);
    for (std::size_t level = 0; level < members; ++level) {
        const Prediction p = evaluate(level);
        const bool accepted = p.uncertainty < rcfg.thresholds[level];
        trace.steps.push_back({level, p, accepted});
        seen.push_back(p);
        if (accepted) {
            trace.accepted_level = level;
            trace.chosen_level = level;
            trace.chosen = p;
            return trace;
        }
    }
    trace.chosen_level = consensus_choice(rcfg.consensus, seen);
    trace.chosen = seen[trace.chosen_level];
    return trace;
}

std::pair<Prediction, CascadeTrace> cascade_predict(const EnsembleManifest& manifest, const RuntimeConfig& rcfg,
                                                    const Eigen::Ref<const Vector>& features);

struct SampleEvaluation {
    std::size_t index = 0;
    int label = 0;
    CascadeTrace trace;
    bool correct = false;
};

struct EvaluationRecord {
    RuntimeConfig runtime;
    std::vector<SampleEvaluation> samples;
    std::vector<std::size_t> resolved_at_level;  // one counter per member
    std::size_t resolved_by_consensus = 0;
    double accuracy = 0.0;

    std::vector<Prediction> chosen_predictions() const;
    std::vector<int> labels() const;
    std::vector<double> utilization() const;  // per level, then consensus; fractions
};

// Generic form: `evaluate(sample_index, level) -> Prediction`.
template <typename Evaluate>
EvaluationRecord batch_evaluate_with(const RuntimeConfig& rcfg, std::span<const int> labels, Evaluate&& evaluate) {
    if (labels.empty()) throw InvalidInput("cannot evaluate an empty dataset");
    EvaluationRecord rec;
    rec.runtime = rcfg;
    rec.resolved_at_level.assign(rcfg.thresholds.size(), 0);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        CascadeTrace trace = cascade_run(rcfg, [&](std::size_t level) { return evaluate(i, level); });
        if (trace.accepted_level)
            ++rec.resolved_at_level[*trace.accepted_level];
        else
            ++rec.resolved_by_consensus;
        const bool correct = trace.chosen.class_index == labels[i];
        hits += correct ? 1 : 0;
        rec.samples.push_back({i, labels[i], std::move(trace), correct});
    }
    rec.accuracy = static_cast<double>(hits) / static_cast<double>(labels.size());
    return rec;
}

// Errors raised for a sample are rethrown as InvalidInput naming its index.
EvaluationRecord batch_evaluate(const EnsembleManifest& manifest, const RuntimeConfig& rcfg, const Dataset& data);

}  // namespace confens

#endif  // CONFENS_CASCADE_HPP
