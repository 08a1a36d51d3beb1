#include "doctest.h"

#include "confens/ensemble.hpp"
#include "confens/errors.hpp"
#include "oracles.hpp"

using namespace confens;

namespace {

BuildConfig blob_build(int members, std::vector<double> thresholds, SelectionRule rule) {
    BuildConfig cfg;
    cfg.num_members = members;
    cfg.training_thresholds = std::move(thresholds);
    cfg.selection_rule = rule;
    cfg.classifier = {ClassifierKind::linear, 2, 3, 0, 3};
    cfg.train.epochs = 30;
    cfg.train.learning_rate = 0.1;
    cfg.train.weight_decay = 1e-3;
    cfg.train.seed = 5;
    return cfg;
}

const Dataset& overlap_blobs() {
    static const Dataset data = generate_blobs(3, 1000, 2, 1.0, 0.5, 11);
    return data;
}

Dataset five_sample_pool(const std::vector<double>& u) {
    FeatureMatrix x(static_cast<Eigen::Index>(u.size()), 1);
    for (std::size_t i = 0; i < u.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = oracle::input_for_uncertainty(u[i]);
    return Dataset("pool", 2, 1, x, std::vector<int>(u.size(), 1));
}

}  // namespace

TEST_CASE("nested selection on a hand-built pool") {
    const auto data = five_sample_pool({0.4, 0.3, 0.05, 0.2, 0.01});
    const auto member = oracle::uncertainty_stub();
    const auto pool = SubsetView::all(data);

    const auto picked = select_next_subset_nested(data, pool, member, 0.1);
    CHECK(picked.indices() == std::vector<std::size_t>{0, 1, 3});
    CHECK(picked.indices() == oracle::select(data, pool.indices(), member, 0.1));

    CHECK(select_next_subset_nested(data, pool, member, 0.5).empty());
    CHECK(select_next_subset_nested(data, pool, member, 0.0) == pool);

    // strict inequality: a threshold equal to a score excludes that sample
    const double u_exact = predict(member, data.features(3).transpose()).uncertainty;
    const auto at = select_next_subset_nested(data, pool, member, u_exact);
    CHECK(std::find(at.indices().begin(), at.indices().end(), 3) == at.indices().end());

    CHECK_THROWS_AS(select_next_subset_nested(data, pool, member, 0.6), InvalidInput);
    CHECK_THROWS_AS(select_next_subset_nested(data, pool, member, -0.1), InvalidInput);
    CHECK_THROWS_AS(select_next_subset_nested(data, SubsetView("elsewhere", {0}), member, 0.1), InvalidView);
}

TEST_CASE("rebased selection") {
    const auto data = five_sample_pool({0.4, 0.3, 0.05, 0.2, 0.01});
    const auto member = oracle::uncertainty_stub();
    const auto full = SubsetView::all(data);
    CHECK(select_next_subset_rebased(data, full, member, 0.1) == select_next_subset_nested(data, full, member, 0.1));
    CHECK(select_next_subset_rebased(data, full, member, 0.5).empty());
    CHECK_THROWS_AS(select_next_subset_rebased(data, SubsetView("pool", {0, 1}), member, 0.1), InvalidView);
}

TEST_CASE("single-member build equals training one classifier") {
    const auto& data = overlap_blobs();
    const auto cfg = blob_build(1, {}, SelectionRule::nested);
    const auto [manifest, report] = build_ensemble(data, cfg);
    REQUIRE(manifest.size() == 1);
    const auto alone = fit(init_model(cfg.classifier), data, cfg.train);
    CHECK(manifest.members[0].model.parameters == alone.parameters);
    CHECK(manifest.members[0].model.training_fingerprint == alone.training_fingerprint);
    CHECK(report.members[0].subset_size == data.size());
    CHECK(manifest.dataset_digest == content_digest(data));
}

TEST_CASE("threshold 0.5 leaves nothing to train on") {
    try {
        build_ensemble(overlap_blobs(), blob_build(2, {0.5}, SelectionRule::nested));
        FAIL("expected DegenerateSubset");
    } catch (const DegenerateSubset& e) {
        CHECK(e.level() == 1);
        CHECK(e.size() == 0);
    }
}

TEST_CASE("minimum subset size") {
    auto cfg = blob_build(2, {0.01}, SelectionRule::nested);
    CHECK(cfg.effective_min_subset_size() == 10);
    cfg.classifier.num_classes = 8;
    CHECK(cfg.effective_min_subset_size() == 16);
    cfg.classifier.num_classes = 3;
    cfg.min_subset_size = 100000;
    CHECK_THROWS_AS(build_ensemble(overlap_blobs(), cfg), DegenerateSubset);
}

TEST_CASE("nested builds produce nested pools") {
    const auto& data = overlap_blobs();
    const auto [manifest, report] = build_ensemble(data, blob_build(3, {0.01, 0.01}, SelectionRule::nested));
    REQUIRE(report.pools.size() == 3);
    for (std::size_t s = 1; s < 3; ++s) {
        CHECK(report.pools[s].is_subset_of(report.pools[s - 1]));
        CHECK(report.members[s].subset_size <= report.members[s - 1].subset_size);
        CHECK(report.pools[s].indices() ==
              oracle::select(data, report.pools[s - 1].indices(), manifest.members[s - 1].model, 0.01));
    }
    CHECK(manifest.members[1].model.spec.seed != manifest.members[0].model.spec.seed);
}

TEST_CASE("rebased three-member build regression") {
    const auto& data = overlap_blobs();
    const auto [manifest, report] = build_ensemble(data, blob_build(3, {0.01, 0.01}, SelectionRule::rebased));
    REQUIRE(manifest.size() == 3);
    const auto full = SubsetView::all(data);
    for (std::size_t s = 1; s < 3; ++s) {
        CHECK(report.pools[s].is_subset_of(full));
        CHECK(report.pools[s].indices() ==
              oracle::select(data, full.indices(), manifest.members[s - 1].model, 0.01));
    }
    // recorded from a reference run of this configuration
    CHECK(report.members[0].subset_size == 3000);
    CHECK(report.members[1].subset_size == 1160);
    CHECK(report.members[2].subset_size == 1138);
    // level-2 pool leaves the level-1 pool
    CHECK_FALSE(report.pools[2].is_subset_of(report.pools[1]));
}

TEST_CASE("selection shrinks as the threshold grows") {
    const auto& data = overlap_blobs();
    const auto [manifest, report] = build_ensemble(data, blob_build(1, {}, SelectionRule::nested));
    const auto full = SubsetView::all(data);
    std::optional<SubsetView> previous;
    for (int k = 0; k <= 10; ++k) {
        const double t = 0.05 * k;
        const auto sel = select_next_subset_nested(data, full, manifest.members[0].model, t);
        if (previous) CHECK(sel.is_subset_of(*previous));
        previous = sel;
    }
}

TEST_CASE("build config validation") {
    const auto& data = overlap_blobs();
    CHECK_THROWS_AS(build_ensemble(data, blob_build(3, {0.1}, SelectionRule::nested)), ConfigError);
    CHECK_THROWS_AS(build_ensemble(data, blob_build(2, {0.7}, SelectionRule::nested)), ConfigError);
    CHECK_THROWS_AS(build_ensemble(data, blob_build(0, {}, SelectionRule::nested)), ConfigError);
    auto cfg = blob_build(1, {}, SelectionRule::nested);
    cfg.classifier.input_dim = 3;
    CHECK_THROWS_AS(build_ensemble(data, cfg), InvalidInput);
    CHECK(selection_rule_from_string("rebased") == SelectionRule::rebased);
    CHECK_THROWS_AS(selection_rule_from_string("boosted"), ConfigError);
}

TEST_CASE("builds are deterministic") {
    const auto cfg = blob_build(2, {0.1}, SelectionRule::nested);
    const auto a = build_ensemble(overlap_blobs(), cfg).first;
    const auto b = build_ensemble(overlap_blobs(), cfg).first;
    CHECK(a == b);
    CHECK(manifest_digest(a) == manifest_digest(b));
}
