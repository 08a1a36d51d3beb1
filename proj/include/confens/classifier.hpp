#ifndef CONFENS_CLASSIFIER_HPP
#define CONFENS_CLASSIFIER_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "confens/dataset.hpp"
#include "confens/numerics.hpp"

namespace confens {

enum class ClassifierKind { linear, mlp };

std::string_view to_string(ClassifierKind kind);
ClassifierKind classifier_kind_from_string(std::string_view name);

struct ClassifierSpec {
    ClassifierKind kind = ClassifierKind::linear;
    int input_dim = 1;
    int num_classes = 2;
    int hidden_units = 0;  // mlp only
    std::uint64_t seed = 0;

    void validate() const;
    friend bool operator==(const ClassifierSpec&, const ClassifierSpec&) = default;
};

// Defaults are the optimizer settings of the reference ImageNet study
// (lr 1e-3, weight decay 1e-2, lr x0.3 every 15 epochs).
struct TrainConfig {
    int epochs = 45;
    int batch_size = 32;
    double learning_rate = 1e-3;
    double lr_decay_gamma = 0.3;
    int lr_decay_every_epochs = 15;
    double weight_decay = 1e-2;
    std::uint64_t seed = 0;

    void validate() const;
    double learning_rate_at(int epoch) const;
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Parameter layout (all matrices row-major, flattened back to back):
//   linear: W[N x M], b[N]
//   mlp:    W1[H x M], b1[H], W2[N x H], b2[N]; hidden activation tanh
struct TrainedModel {
    ClassifierSpec spec;
    Vector parameters;
    std::string training_fingerprint;

    friend bool operator==(const TrainedModel&, const TrainedModel&) = default;
};

std::size_t parameter_count(const ClassifierSpec& spec);

// Weights uniform in [-a, a], a = sqrt(6 / (fan_in + fan_out)); biases zero.
TrainedModel init_model(const ClassifierSpec& spec);

// -log(p[label]) with p clamped at 1e-12.
double cross_entropy_loss(const ProbabilityVector& p, int label);

struct LossGradient {
    double loss = 0.0;
    Vector gradient;
};

// Mean cross-entropy over the batch plus 0.5 * weight_decay * |theta|^2, and
// its gradient with respect to the flat parameter vector.
LossGradient loss_and_gradient(const ClassifierSpec& spec, const Vector& parameters, const FeatureMatrix& features,
                               std::span<const int> labels, double weight_decay);

struct TrainingLog {
    // Mean cross-entropy on the full training set after each epoch.
    std::vector<double> epoch_loss;
};

// Mini-batch SGD on cross-entropy + L2 decay. Batch order comes from cfg.seed.
TrainedModel fit(TrainedModel model, const Dataset& data, const TrainConfig& cfg, TrainingLog* log = nullptr);

Vector predict_logits(const TrainedModel& model, const Eigen::Ref<const Vector>& features);

// One row of logits per sample row.
FeatureMatrix predict_logits_batch(const TrainedModel& model, const FeatureMatrix& features);

Prediction predict(const TrainedModel& model, const Eigen::Ref<const Vector>& features);
std::vector<Prediction> predict_all(const TrainedModel& model, const Dataset& data);

double mean_loss(const TrainedModel& model, const Dataset& data);

}  // namespace confens

#endif  // CONFENS_CLASSIFIER_HPP
