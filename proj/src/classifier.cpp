#include "confens/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "confens/digest.hpp"
#include "confens/errors.hpp"
#include "confens/random.hpp"

namespace confens {

namespace {

using RowMatrix = FeatureMatrix;
using MapMatrix = Eigen::Map<const RowMatrix>;
using MutMapMatrix = Eigen::Map<RowMatrix>;

struct LinearView {
    MapMatrix w;
    Eigen::Map<const Vector> b;
};

struct MlpView {
    MapMatrix w1;
    Eigen::Map<const Vector> b1;
    MapMatrix w2;
    Eigen::Map<const Vector> b2;
};

LinearView linear_view(const ClassifierSpec& s, const Vector& p) {
    const double* d = p.data();
    return {MapMatrix(d, s.num_classes, s.input_dim),
            Eigen::Map<const Vector>(d + s.num_classes * s.input_dim, s.num_classes)};
}

MlpView mlp_view(const ClassifierSpec& s, const Vector& p) {
    const double* d = p.data();
    const Eigen::Index m = s.input_dim, h = s.hidden_units, n = s.num_classes;
    return {MapMatrix(d, h, m), Eigen::Map<const Vector>(d + h * m, h), MapMatrix(d + h * m + h, n, h),
            Eigen::Map<const Vector>(d + h * m + h + n * h, n)};
}

void check_parameters(const TrainedModel& model) {
    if (static_cast<std::size_t>(model.parameters.size()) != parameter_count(model.spec))
        throw InvalidInput("parameter vector has " + std::to_string(model.parameters.size()) + " entries, spec needs " +
                           std::to_string(parameter_count(model.spec)));
}

void check_features(const ClassifierSpec& spec, Eigen::Index dim) {
    if (dim != spec.input_dim)
        throw InvalidInput("feature length " + std::to_string(dim) + " does not match model input_dim " +
                           std::to_string(spec.input_dim));
}

RowMatrix row_softmax(RowMatrix z) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        z.row(i).array() -= z.row(i).maxCoeff();
        z.row(i) = z.row(i).array().exp().matrix();
        z.row(i) /= z.row(i).sum();
    }
    return z;
}

constexpr double kProbabilityFloor = 1e-12;

}  // namespace

std::string_view to_string(ClassifierKind kind) {
    return kind == ClassifierKind::linear ? "linear" : "mlp";
}

ClassifierKind classifier_kind_from_string(std::string_view name) {
    if (name == "linear") return ClassifierKind::linear;
    if (name == "mlp") return ClassifierKind::mlp;
    throw ConfigError("unknown classifier kind '" + std::string(name) + "'");
}

void ClassifierSpec::validate() const {
    if (input_dim < 1) throw ConfigError("classifier input_dim must be >= 1");
    if (num_classes < 2) throw ConfigError("classifier num_classes must be >= 2");
    if (kind == ClassifierKind::mlp && hidden_units < 1) throw ConfigError("mlp hidden_units must be >= 1");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
    if (!(lr_decay_gamma > 0.0 && lr_decay_gamma <= 1.0)) throw ConfigError("lr_decay_gamma must lie in (0, 1]");
    if (lr_decay_every_epochs < 1) throw ConfigError("lr_decay_every_epochs must be >= 1");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight_decay must be >= 0");
}

double TrainConfig::learning_rate_at(int epoch) const {
    return learning_rate * std::pow(lr_decay_gamma, epoch / lr_decay_every_epochs);
}

std::size_t parameter_count(const ClassifierSpec& spec) {
    const std::size_t m = static_cast<std::size_t>(spec.input_dim);
    const std::size_t n = static_cast<std::size_t>(spec.num_classes);
    if (spec.kind == ClassifierKind::linear) return m * n + n;
    const std::size_t h = static_cast<std::size_t>(spec.hidden_units);
    return m * h + h + h * n + n;
}

TrainedModel init_model(const ClassifierSpec& spec) {
    spec.validate();
    TrainedModel model{spec, Vector::Zero(static_cast<Eigen::Index>(parameter_count(spec))), {}};
    Rng rng(spec.seed);
    auto fill = [&](Eigen::Index offset, int fan_out, int fan_in) {
        const double a = std::sqrt(6.0 / (fan_in + fan_out));
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(fan_out) * fan_in; ++i)
            model.parameters[offset + i] = rng.uniform(-a, a);
    };
    if (spec.kind == ClassifierKind::linear) {
        fill(0, spec.num_classes, spec.input_dim);
    } else {
        const Eigen::Index m = spec.input_dim, h = spec.hidden_units;
        fill(0, spec.hidden_units, spec.input_dim);
        fill(h * m + h, spec.num_classes, spec.hidden_units);
    }
    return model;
}

double cross_entropy_loss(const ProbabilityVector& p, int label) {
    if (label < 0 || label >= p.size())
        throw InvalidInput("label " + std::to_string(label) + " outside [0, " + std::to_string(p.size()) + ")");
    return -std::log(std::max(p[label], kProbabilityFloor));
}

LossGradient loss_and_gradient(const ClassifierSpec& spec, const Vector& parameters, const FeatureMatrix& features,
                               std::span<const int> labels, double weight_decay) {
    check_features(spec, features.cols());
    if (static_cast<std::size_t>(parameters.size()) != parameter_count(spec))
        throw InvalidInput("parameter vector does not match spec");
    if (static_cast<std::size_t>(features.rows()) != labels.size())
        throw InvalidInput("feature rows and labels differ in length");
    if (labels.empty()) throw EmptyTrainingSet();

    const Eigen::Index batch = features.rows();
    const double inv_batch = 1.0 / static_cast<double>(batch);

    RowMatrix onehot = RowMatrix::Zero(batch, spec.num_classes);
    for (Eigen::Index i = 0; i < batch; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= spec.num_classes) throw InvalidInput("label out of range in batch");
        onehot(i, y) = 1.0;
    }

    LossGradient out;
    out.gradient = Vector::Zero(parameters.size());
    RowMatrix probs;
    RowMatrix hidden;

    if (spec.kind == ClassifierKind::linear) {
        const auto v = linear_view(spec, parameters);
        RowMatrix z = features * v.w.transpose();
        z.rowwise() += v.b.transpose();
        probs = row_softmax(std::move(z));
    } else {
        const auto v = mlp_view(spec, parameters);
        RowMatrix a = features * v.w1.transpose();
        a.rowwise() += v.b1.transpose();
        hidden = a.array().tanh().matrix();
        RowMatrix z = hidden * v.w2.transpose();
        z.rowwise() += v.b2.transpose();
        probs = row_softmax(std::move(z));
    }

    double loss = 0.0;
    for (Eigen::Index i = 0; i < batch; ++i)
        loss -= std::log(std::max(probs(i, labels[static_cast<std::size_t>(i)]), kProbabilityFloor));
    out.loss = loss * inv_batch + 0.5 * weight_decay * parameters.squaredNorm();

    const RowMatrix dz = (probs - onehot) * inv_batch;
    double* g = out.gradient.data();
    const Eigen::Index m = spec.input_dim, n = spec.num_classes;
    if (spec.kind == ClassifierKind::linear) {
        MutMapMatrix(g, n, m) = dz.transpose() * features;
        Eigen::Map<Vector>(g + n * m, n) = dz.colwise().sum().transpose();
    } else {
        const auto v = mlp_view(spec, parameters);
        const Eigen::Index h = spec.hidden_units;
        MutMapMatrix(g + h * m + h, n, h) = dz.transpose() * hidden;
        Eigen::Map<Vector>(g + h * m + h + n * h, n) = dz.colwise().sum().transpose();
        const RowMatrix da = ((dz * v.w2).array() * (1.0 - hidden.array().square())).matrix();
        MutMapMatrix(g, h, m) = da.transpose() * features;
        Eigen::Map<Vector>(g + h * m, h) = da.colwise().sum().transpose();
    }
    out.gradient += weight_decay * parameters;
    return out;
}

TrainedModel fit(TrainedModel model, const Dataset& data, const TrainConfig& cfg, TrainingLog* log) {
    cfg.validate();
    model.spec.validate();
    check_parameters(model);
    if (data.empty()) throw EmptyTrainingSet();
    check_features(model.spec, data.feature_dim());
    if (data.num_classes() != model.spec.num_classes)
        throw InvalidInput("dataset has " + std::to_string(data.num_classes()) + " classes, model expects " +
                           std::to_string(model.spec.num_classes));

    const std::size_t n = data.size();
    const std::size_t batch_size = std::min(n, static_cast<std::size_t>(cfg.batch_size));
    std::vector<std::size_t> order(n);
    FeatureMatrix batch_x(static_cast<Eigen::Index>(batch_size), data.feature_dim());
    std::vector<int> batch_y(batch_size);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
        rng.shuffle(std::span(order));
        const double lr = cfg.learning_rate_at(epoch);

        for (std::size_t start = 0; start < n; start += batch_size) {
            const std::size_t count = std::min(batch_size, n - start);
            batch_x.resize(static_cast<Eigen::Index>(count), data.feature_dim());
            batch_y.resize(count);
            for (std::size_t k = 0; k < count; ++k) {
                batch_x.row(static_cast<Eigen::Index>(k)) = data.features(order[start + k]);
                batch_y[k] = data.label(order[start + k]);
            }
            const auto lg = loss_and_gradient(model.spec, model.parameters, batch_x, batch_y, cfg.weight_decay);
            model.parameters -= lr * lg.gradient;
        }
        if (log != nullptr) log->epoch_loss.push_back(mean_loss(model, data));
    }

    Sha256 h;
    h.update(std::string_view("fit/v1"))
        .update(to_string(model.spec.kind))
        .update_u64(static_cast<std::uint64_t>(model.spec.input_dim))
        .update_u64(static_cast<std::uint64_t>(model.spec.num_classes))
        .update_u64(static_cast<std::uint64_t>(model.spec.hidden_units))
        .update_u64(model.spec.seed)
        .update(data.root_id())
        .update(indices_digest(data.origin()))
        .update_u64(static_cast<std::uint64_t>(cfg.epochs))
        .update_u64(static_cast<std::uint64_t>(cfg.batch_size))
        .update_f64(cfg.learning_rate)
        .update_f64(cfg.lr_decay_gamma)
        .update_u64(static_cast<std::uint64_t>(cfg.lr_decay_every_epochs))
        .update_f64(cfg.weight_decay)
        .update_u64(cfg.seed);
    model.training_fingerprint = h.hex_digest();
    return model;
}

Vector predict_logits(const TrainedModel& model, const Eigen::Ref<const Vector>& features) {
    check_parameters(model);
    check_features(model.spec, features.size());
    if (model.spec.kind == ClassifierKind::linear) {
        const auto v = linear_view(model.spec, model.parameters);
        return v.w * features + v.b;
    }
    const auto v = mlp_view(model.spec, model.parameters);
    const Vector hidden = (v.w1 * features + v.b1).array().tanh().matrix();
    return v.w2 * hidden + v.b2;
}

FeatureMatrix predict_logits_batch(const TrainedModel& model, const FeatureMatrix& features) {
    check_parameters(model);
    check_features(model.spec, features.cols());
    RowMatrix z;
    if (model.spec.kind == ClassifierKind::linear) {
        const auto v = linear_view(model.spec, model.parameters);
        z = features * v.w.transpose();
        z.rowwise() += v.b.transpose();
    } else {
        const auto v = mlp_view(model.spec, model.parameters);
        RowMatrix a = features * v.w1.transpose();
        a.rowwise() += v.b1.transpose();
        z = a.array().tanh().matrix() * v.w2.transpose();
        z.rowwise() += v.b2.transpose();
    }
    return z;
}

Prediction predict(const TrainedModel& model, const Eigen::Ref<const Vector>& features) {
    return make_prediction(softmax(predict_logits(model, features)));
}

std::vector<Prediction> predict_all(const TrainedModel& model, const Dataset& data) {
    std::vector<Prediction> out;
    out.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.push_back(predict(model, data.features(i).transpose()));
    return out;
}

double mean_loss(const TrainedModel& model, const Dataset& data) {
    if (data.empty()) throw EmptyTrainingSet();
    const RowMatrix probs = row_softmax(predict_logits_batch(model, data.features()));
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i)
        total -= std::log(std::max(probs(static_cast<Eigen::Index>(i), data.label(i)), kProbabilityFloor));
    return total / static_cast<double>(data.size());
}

}  // namespace confens
