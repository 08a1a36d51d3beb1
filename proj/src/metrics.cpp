#include "confens/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "confens/errors.hpp"

namespace confens {

double top1_accuracy(std::span<const Prediction> chosen, std::span<const int> labels) {
    if (chosen.size() != labels.size())
        throw InvalidInput("accuracy: " + std::to_string(chosen.size()) + " predictions for " +
                           std::to_string(labels.size()) + " labels");
    if (chosen.empty()) throw InvalidInput("accuracy of an empty prediction list");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < chosen.size(); ++i) hits += chosen[i].class_index == labels[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(chosen.size());
}

std::string_view to_string(ScoreKind kind) {
    return kind == ScoreKind::uncertainty ? "uncertainty" : "top_probability";
}

double score_range(ScoreKind kind) { return kind == ScoreKind::uncertainty ? 0.5 : 1.0; }

std::size_t score_bin(double score, ScoreKind kind, std::size_t num_bins) {
    const auto b = static_cast<std::size_t>(std::floor(score / score_range(kind) * static_cast<double>(num_bins)));
    return std::min(b, num_bins - 1);
}

CalibrationReport expected_calibration_error(std::span<const double> top_probs, const std::vector<bool>& correct,
                                             std::size_t num_bins) {
    if (num_bins < 1) throw InvalidInput("ECE needs at least one bin");
    if (top_probs.size() != correct.size()) throw InvalidInput("ECE: probability and correctness lists differ in length");
    if (top_probs.empty()) throw InvalidInput("ECE of an empty prediction list");

    CalibrationReport report;
    report.num_bins = num_bins;
    report.bins.resize(num_bins);
    std::vector<double> prob_sum(num_bins, 0.0);
    std::vector<std::size_t> hits(num_bins, 0);
    for (std::size_t i = 0; i < top_probs.size(); ++i) {
        const double p = top_probs[i];
        if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("ECE: probability at index " + std::to_string(i) + " outside [0, 1]");
        const std::size_t b = score_bin(p, ScoreKind::top_probability, num_bins);
        ++report.bins[b].count;
        prob_sum[b] += p;
        hits[b] += correct[i] ? 1 : 0;
    }

    const double total = static_cast<double>(top_probs.size());
    for (std::size_t b = 0; b < num_bins; ++b) {
        auto& bin = report.bins[b];
        bin.left = static_cast<double>(b) / static_cast<double>(num_bins);
        bin.right = static_cast<double>(b + 1) / static_cast<double>(num_bins);
        if (bin.count == 0) continue;
        const double count = static_cast<double>(bin.count);
        bin.mean_top_probability = prob_sum[b] / count;
        bin.fraction_correct = static_cast<double>(hits[b]) / count;
        bin.weight = count / total;
        report.ece += bin.weight * std::abs(bin.fraction_correct - bin.mean_top_probability);
    }
    return report;
}

std::size_t ScoreHistogram::total() const {
    return std::accumulate(correct_counts.begin(), correct_counts.end(), std::size_t{0}) +
           std::accumulate(incorrect_counts.begin(), incorrect_counts.end(), std::size_t{0});
}

ScoreHistogram score_histogram(std::span<const double> scores, const std::vector<bool>& correct, ScoreKind kind,
                               std::size_t num_bins) {
    if (num_bins < 1) throw InvalidInput("histogram needs at least one bin");
    if (scores.size() != correct.size()) throw InvalidInput("histogram: score and correctness lists differ in length");

    ScoreHistogram h;
    h.kind = kind;
    h.correct_counts.assign(num_bins, 0);
    h.incorrect_counts.assign(num_bins, 0);
    const double hi = score_range(kind);
    for (std::size_t b = 0; b <= num_bins; ++b)
        h.bin_edges.push_back(hi * static_cast<double>(b) / static_cast<double>(num_bins));

    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double s = scores[i];
        if (!(s >= 0.0 && s <= hi))
            throw InvalidInput("histogram: " + std::string(to_string(kind)) + " score at index " + std::to_string(i) +
                               " outside [0, " + std::to_string(hi) + "]");
        const std::size_t b = score_bin(s, kind, num_bins);
        ++(correct[i] ? h.correct_counts : h.incorrect_counts)[b];
    }
    return h;
}

}  // namespace confens
