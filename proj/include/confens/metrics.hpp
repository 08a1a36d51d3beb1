#ifndef CONFENS_METRICS_HPP
#define CONFENS_METRICS_HPP

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "confens/numerics.hpp"

namespace confens {

double top1_accuracy(std::span<const Prediction> chosen, std::span<const int> labels);

struct CalibrationBin {
    double left = 0.0;
    double right = 0.0;
    std::size_t count = 0;
    double mean_top_probability = 0.0;  // e_i
    double fraction_correct = 0.0;      // o_i
    double weight = 0.0;                // P(i)
};

struct CalibrationReport {
    std::size_t num_bins = 0;
    std::vector<CalibrationBin> bins;
    double ece = 0.0;
};

// Equal-width bins over [0, 1], last bin right-closed.
//   ece = sum_i P(i) * |o_i - e_i|
// with o_i the fraction of correct predictions in bin i, e_i the mean top
// probability and P(i) the share of samples in the bin. Empty bins add 0.
CalibrationReport expected_calibration_error(std::span<const double> top_probs, const std::vector<bool>& correct,
                                             std::size_t num_bins = 15);

enum class ScoreKind { uncertainty, top_probability };

std::string_view to_string(ScoreKind kind);

// Upper end of the score range: 0.5 for uncertainty, 1 for top probability.
double score_range(ScoreKind kind);

// Equal-width bin of `score` over [0, score_range(kind)], last bin right-closed.
std::size_t score_bin(double score, ScoreKind kind, std::size_t num_bins);

struct ScoreHistogram {
    ScoreKind kind = ScoreKind::uncertainty;
    std::vector<double> bin_edges;  // num_bins + 1 entries
    std::vector<std::size_t> correct_counts;
    std::vector<std::size_t> incorrect_counts;

    std::size_t total() const;
};

ScoreHistogram score_histogram(std::span<const double> scores, const std::vector<bool>& correct, ScoreKind kind,
                               std::size_t num_bins);

}  // namespace confens

#endif  // CONFENS_METRICS_HPP
