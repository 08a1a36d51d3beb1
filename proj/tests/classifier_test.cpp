#include "doctest.h"

#include <random>

#include "confens/classifier.hpp"
#include "confens/metrics.hpp"
#include "oracles.hpp"

using namespace confens;

namespace {

Dataset random_dataset(int m, int n, int count, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> feat(0.0, 1.5);
    std::uniform_int_distribution<int> lab(0, n - 1);
    FeatureMatrix x(count, m);
    std::vector<int> y;
    for (int i = 0; i < count; ++i) {
        for (int j = 0; j < m; ++j) x(i, j) = feat(gen);
        y.push_back(lab(gen));
    }
    return Dataset("random", n, m, x, y);
}

double relative_error(const Vector& a, const Vector& b) {
    const double scale = std::max(a.norm(), b.norm());
    return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

}  // namespace

TEST_CASE("parameter counts follow the layer shapes") {
    CHECK(parameter_count({ClassifierKind::linear, 4, 3, 0, 0}) == 15);
    CHECK(parameter_count({ClassifierKind::mlp, 4, 3, 5, 0}) == 43);
    CHECK(init_model({ClassifierKind::mlp, 4, 3, 5, 0}).parameters.size() == 43);
}

TEST_CASE("initialization is deterministic in the seed") {
    const ClassifierSpec spec{ClassifierKind::mlp, 4, 3, 5, 99};
    const auto a = init_model(spec);
    const auto b = init_model(spec);
    CHECK(a.parameters == b.parameters);
    auto other = spec;
    other.seed = 100;
    CHECK(init_model(other).parameters != a.parameters);

    // weights bounded by sqrt(6 / (fan_in + fan_out)), biases zero
    const double a1 = std::sqrt(6.0 / (4 + 5));
    CHECK(a.parameters.head(20).cwiseAbs().maxCoeff() <= a1);
    CHECK(a.parameters.segment(20, 5).isZero());
    CHECK(a.parameters.tail(3).isZero());
}

TEST_CASE("invalid specs are rejected") {
    CHECK_THROWS_AS(init_model({ClassifierKind::linear, 0, 3, 0, 0}), ConfigError);
    CHECK_THROWS_AS(init_model({ClassifierKind::linear, 2, 1, 0, 0}), ConfigError);
    CHECK_THROWS_AS(init_model({ClassifierKind::mlp, 2, 3, 0, 0}), ConfigError);
}

TEST_CASE("cross-entropy loss") {
    Vector v(2);
    v << 1.0, 0.0;
    CHECK(cross_entropy_loss(ProbabilityVector::from_values(v), 0) == 0.0);
    v << 0.5, 0.5;
    CHECK(cross_entropy_loss(ProbabilityVector::from_values(v), 1) == doctest::Approx(0.69314718).epsilon(1e-6));
    const auto uniform = ProbabilityVector::from_values(Vector::Constant(4, 0.25));
    CHECK(cross_entropy_loss(uniform, 3) == doctest::Approx(1.38629436).epsilon(1e-6));
    v << 1.0, 0.0;
    CHECK(cross_entropy_loss(ProbabilityVector::from_values(v), 1) == doctest::Approx(-std::log(1e-12)));
    CHECK_THROWS_AS(cross_entropy_loss(uniform, 4), InvalidInput);
    CHECK_THROWS_AS(cross_entropy_loss(uniform, -1), InvalidInput);
}

TEST_CASE("forward pass") {
    const ClassifierSpec spec{ClassifierKind::linear, 3, 3, 0, 0};
    TrainedModel zero{spec, Vector::Zero(12), {}};
    CHECK(predict_logits(zero, Vector::Random(3)).isZero());

    const auto model = init_model({ClassifierKind::mlp, 3, 3, 4, 7});
    const Vector x = Vector::LinSpaced(3, -1.0, 1.0);
    CHECK(predict_logits(model, x) == predict_logits(model, x));

    // identity weights: input e_k gives logit k the strict maximum
    TrainedModel eye{spec, Vector::Zero(12), {}};
    for (int k = 0; k < 3; ++k) eye.parameters[k * 3 + k] = 1.0;
    for (int k = 0; k < 3; ++k) {
        Vector e = Vector::Zero(3);
        e[k] = 1.0;
        const Vector z = predict_logits(eye, e);
        for (int c = 0; c < 3; ++c)
            if (c != k) CHECK(z[k] > z[c]);
    }

    CHECK_THROWS_AS(predict_logits(eye, Vector::Zero(2)), InvalidInput);
}

TEST_CASE("batched and single-sample forward passes agree") {
    const auto model = init_model({ClassifierKind::mlp, 3, 4, 6, 1});
    const auto data = random_dataset(3, 4, 20, 3);
    const FeatureMatrix z = predict_logits_batch(model, data.features());
    for (std::size_t i = 0; i < data.size(); ++i)
        CHECK((z.row(static_cast<Eigen::Index>(i)).transpose() - predict_logits(model, data.features(i).transpose()))
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
}

TEST_CASE("analytic gradients match central differences") {
    std::mt19937_64 gen(2024);
    std::uniform_int_distribution<int> dim(1, 5), cls(2, 4), hid(1, 4), batch(1, 6);
    for (int trial = 0; trial < 30; ++trial) {
        const bool mlp = trial % 2 == 1;
        const ClassifierSpec spec{mlp ? ClassifierKind::mlp : ClassifierKind::linear, dim(gen), cls(gen),
                                  mlp ? hid(gen) : 0, static_cast<std::uint64_t>(trial)};
        const auto data = random_dataset(spec.input_dim, spec.num_classes, batch(gen), 100 + trial);
        Vector params = init_model(spec).parameters + 0.3 * Vector::Random(static_cast<Eigen::Index>(parameter_count(spec)));
        const double wd = trial % 3 == 0 ? 0.0 : 0.05;

        const auto analytic = loss_and_gradient(spec, params, data.features(), data.labels(), wd);
        const auto numeric = oracle::central_difference(
            [&](const Vector& p) { return loss_and_gradient(spec, p, data.features(), data.labels(), wd).loss; }, params,
            1e-5);
        CHECK(relative_error(analytic.gradient, numeric) < 1e-4);
    }
}

TEST_CASE("one full-batch epoch equals a single hand-computed gradient step") {
    const auto data = random_dataset(3, 3, 8, 5);
    const ClassifierSpec spec{ClassifierKind::linear, 3, 3, 0, 11};
    const auto start = init_model(spec);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = static_cast<int>(data.size());
    cfg.learning_rate = 0.5;
    cfg.weight_decay = 0.0;

    // dL/dW[c][j] = mean_i (p_ic - [y_i == c]) x_ij ; dL/db[c] = mean_i (p_ic - [y_i == c])
    Vector expected = start.parameters;
    const int m = 3, n = 3;
    Vector grad = Vector::Zero(expected.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto x = oracle::row(data, i);
        const auto p = oracle::softmax(oracle::linear_logits(start, x));
        for (int c = 0; c < n; ++c) {
            const double r = p[static_cast<std::size_t>(c)] - (data.label(i) == c ? 1.0 : 0.0);
            for (int j = 0; j < m; ++j) grad[c * m + j] += r * x[static_cast<std::size_t>(j)] / 8.0;
            grad[m * n + c] += r / 8.0;
        }
    }
    expected -= 0.5 * grad;

    const auto trained = fit(start, data, cfg);
    CHECK((trained.parameters - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("learning rate decays stepwise") {
    TrainConfig cfg;
    CHECK(cfg.learning_rate == 1e-3);
    CHECK(cfg.weight_decay == 1e-2);
    CHECK(cfg.learning_rate_at(0) == 1e-3);
    CHECK(cfg.learning_rate_at(14) == 1e-3);
    CHECK(cfg.learning_rate_at(15) == doctest::Approx(3e-4));
    CHECK(cfg.learning_rate_at(30) == doctest::Approx(9e-5));
}

TEST_CASE("training separable blobs") {
    // centers 6 sigma apart
    const auto data = generate_blobs(2, 200, 2, 1.0, 0.25, 17);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.learning_rate = 0.1;
    cfg.weight_decay = 0.0;
    cfg.seed = 4;
    TrainingLog log;
    const auto model = fit(init_model({ClassifierKind::linear, 2, 2, 0, 9}), data, cfg, &log);
    CHECK(top1_accuracy(predict_all(model, data), data.labels()) >= 0.99);
    REQUIRE(log.epoch_loss.size() == 50);
    for (std::size_t e = 1; e < log.epoch_loss.size(); ++e) CHECK(log.epoch_loss[e] <= log.epoch_loss[0]);

    SUBCASE("fit is deterministic") {
        const auto again = fit(init_model({ClassifierKind::linear, 2, 2, 0, 9}), data, cfg);
        CHECK(again.parameters == model.parameters);
        CHECK(again.training_fingerprint == model.training_fingerprint);
        CHECK(model.training_fingerprint.size() == 64);
    }
    SUBCASE("the fingerprint depends on the config") {
        auto other = cfg;
        other.epochs = 1;
        CHECK(fit(init_model({ClassifierKind::linear, 2, 2, 0, 9}), data, other).training_fingerprint !=
              model.training_fingerprint);
    }
}

TEST_CASE("mlp learns an xor-like layout") {
    FeatureMatrix x(400, 2);
    std::vector<int> y;
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 400; ++i) {
        x(i, 0) = u(gen);
        x(i, 1) = u(gen);
        y.push_back((x(i, 0) > 0) != (x(i, 1) > 0) ? 1 : 0);
    }
    const Dataset data("xor", 2, 2, x, y);
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.learning_rate = 0.5;
    cfg.weight_decay = 0.0;
    cfg.lr_decay_every_epochs = 100;
    cfg.lr_decay_gamma = 0.5;
    const auto model = fit(init_model({ClassifierKind::mlp, 2, 2, 8, 3}), data, cfg);
    CHECK(top1_accuracy(predict_all(model, data), data.labels()) > 0.9);
}

TEST_CASE("fit rejects empty or mismatched data") {
    const auto model = init_model({ClassifierKind::linear, 2, 2, 0, 0});
    const Dataset empty("empty", 2, 2, FeatureMatrix(0, 2), {});
    CHECK_THROWS_AS(fit(model, empty, TrainConfig{}), EmptyTrainingSet);
    CHECK_THROWS_AS(fit(model, random_dataset(3, 2, 5, 1), TrainConfig{}), InvalidInput);
    TrainConfig bad;
    bad.lr_decay_gamma = 0.0;
    CHECK_THROWS_AS(fit(model, random_dataset(2, 2, 5, 1), bad), ConfigError);
}
