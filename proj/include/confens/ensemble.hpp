#ifndef CONFENS_ENSEMBLE_HPP
#define CONFENS_ENSEMBLE_HPP

// Sequential construction of a confidence-gated ensemble.
//
// Member 0 trains on the full dataset. For s >= 1 the training pool of
// member s holds the samples on which member s-1 was unconfident:
//
//   nested:  I_s = { x in I_{s-1} | U(member_{s-1}(x)) > T_s }
//   rebased: I_s = { x in I_0     | U(member_{s-1}(x)) > T_s }
//
// Both comparisons are strict, so a sample with U exactly at the threshold
// is not forwarded.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "confens/cascade.hpp"
#include "confens/classifier.hpp"
#include "confens/dataset.hpp"
#include "confens/metrics.hpp"

namespace confens {

inline constexpr int kManifestFormatVersion = 1;

enum class SelectionRule { nested, rebased };

std::string_view to_string(SelectionRule rule);
SelectionRule selection_rule_from_string(std::string_view name);

struct MemberDescriptor {
    std::size_t level = 0;
    TrainedModel model;
    std::size_t subset_size = 0;
    std::string subset_digest;

    friend bool operator==(const MemberDescriptor&, const MemberDescriptor&) = default;
};

struct EnsembleManifest {
    int format_version = kManifestFormatVersion;
    std::vector<MemberDescriptor> members;
    SelectionRule selection_rule = SelectionRule::nested;
    std::vector<double> training_thresholds;
    RuntimeConfig runtime;
    std::string dataset_id;
    std::string dataset_digest;

    std::size_t size() const noexcept { return members.size(); }
    void validate() const;

    friend bool operator==(const EnsembleManifest&, const EnsembleManifest&) = default;
};

// Digest over every field including the weights' exact bit patterns.
std::string manifest_digest(const EnsembleManifest& manifest);

struct BuildConfig {
    int num_members = 1;
    std::vector<double> training_thresholds;  // num_members - 1 entries in [0, 0.5]
    SelectionRule selection_rule = SelectionRule::nested;
    ClassifierSpec classifier;
    TrainConfig train;
    std::optional<std::size_t> min_subset_size;  // default max(2 * num_classes, 10)
    std::size_t histogram_bins = 10;
    RuntimeConfig runtime;  // stored as the manifest default; empty = homogeneous 0.2

    void validate() const;
    std::size_t effective_min_subset_size() const;
};

struct MemberReport {
    std::size_t level = 0;
    std::size_t subset_size = 0;
    std::string subset_digest;
    double training_seconds = 0.0;
    double final_training_loss = 0.0;
    double training_accuracy = 0.0;
    // Scores of member s on its own training pool.
    ScoreHistogram uncertainty_histogram;
    ScoreHistogram probability_histogram;
};

struct BuildReport {
    std::vector<MemberReport> members;
    std::vector<SubsetView> pools;  // pools[s] trained member s; indices into the full dataset
};

SubsetView select_next_subset_nested(const Dataset& data, const SubsetView& prev_pool, const TrainedModel& member,
                                     double threshold);

// `full_pool` must cover the whole dataset.
SubsetView select_next_subset_rebased(const Dataset& data, const SubsetView& full_pool, const TrainedModel& member,
                                      double threshold);

// Throws DegenerateSubset when a pool falls below the minimum subset size.
std::pair<EnsembleManifest, BuildReport> build_ensemble(const Dataset& data, const BuildConfig& cfg);

}  // namespace confens

#endif  // CONFENS_ENSEMBLE_HPP
