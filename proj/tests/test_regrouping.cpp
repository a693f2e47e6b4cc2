#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "mpe/regrouping.hpp"
#include "mpe/rng.hpp"
#include "support.hpp"

using namespace mpe;
using mpe::testing::gaussian_mixture;
using mpe::testing::gaussian_points;

namespace {

TrainConfig quick(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs = 15;
    cfg.hidden_units = 16;
    cfg.seed = seed;
    return cfg;
}

struct Fixture {
    Sample f;
    Sample h;
};

Fixture make_pair(std::uint64_t seed, std::size_t n = 200) {
    std::mt19937_64 rng(seed);
    Fixture fx{Sample(gaussian_mixture(rng, n, 2, 0.0, 2.0, 0.4), Provenance::mixture),
               Sample(gaussian_points(rng, n, 2, 2.0), Provenance::component)};
    // distinct id ranges so copied rows stay recognisable
    std::vector<std::int64_t> ids(n);
    std::iota(ids.begin(), ids.end(), std::int64_t{1000});
    fx.f = Sample(fx.f.points(), Provenance::mixture, ids);
    return fx;
}

}  // namespace

TEST(CopyCount, FloorsWithRoundingGuard) {
    EXPECT_EQ(copy_count(0.1, 800), 80u);
    EXPECT_EQ(copy_count(0.3, 10), 3u);  // 0.3 * 10 is 2.9999999999999996 in binary
    EXPECT_EQ(copy_count(0.15, 7), 1u);
    EXPECT_EQ(copy_count(0.0, 100), 0u);
    EXPECT_EQ(copy_count(0.5, 3), 1u);
}

TEST(SelectRows, MatchesFullSortOracle) {
    std::mt19937_64 rng(501);
    std::uniform_int_distribution<int> coarse(0, 9);  // coarse posteriors force ties
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 20 + trial % 40;  // p >= 0.05 always copies a row
        std::vector<double> post(n);
        std::vector<std::int64_t> ids(n);
        for (std::size_t i = 0; i < n; ++i) {
            post[i] = coarse(rng) / 10.0;
            ids[i] = static_cast<std::int64_t>((i * 7919) % 1009);
        }
        const double p = 0.05 + 0.45 * (trial % 10) / 9.0;
        const auto got = select_regroup_rows(post, ids, p);

        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return std::pair{post[a], ids[a]} < std::pair{post[b], ids[b]}; });
        order.resize(copy_count(p, n));
        EXPECT_EQ(got, order) << "trial " << trial;
    }
}

TEST(SelectRows, Errors) {
    EXPECT_THROW(select_regroup_rows({0.1, 0.2}, {1}, 0.1), std::invalid_argument);
    EXPECT_THROW(select_regroup_rows({0.1, 0.2}, {1, 2}, 0.6), std::invalid_argument);
    try {
        select_regroup_rows({0.1, 0.2, 0.3}, {1, 2, 3}, 0.1);
        FAIL() << "expected an error";
    } catch (const std::invalid_argument& e) {
        EXPECT_STREQ(e.what(), "copy fraction too small for sample");
    }
    EXPECT_TRUE(select_regroup_rows({0.1, 0.2, 0.3}, {1, 2, 3}, 0.0).empty());
}

TEST(BuildHTilde, AppendsLowestPosteriorMixtureRows) {
    const auto fx = make_pair(502);
    RegroupConfig cfg;
    cfg.classifier = quick(3);
    cfg.copy_fraction = 0.1;
    const auto model = fit(fx.f, fx.h, cfg.classifier);
    const auto r = build_h_tilde(fx.f, fx.h, cfg, model);

    ASSERT_EQ(r.copied_ids.size(), 20u);
    ASSERT_EQ(r.h_tilde.size(), 220u);
    EXPECT_EQ(r.h_tilde.provenance(), Provenance::component);
    EXPECT_TRUE(r.h_tilde.points().topRows(200) == fx.h.points());
    EXPECT_EQ(r.posteriors.size(), fx.f.size());

    std::set<std::int64_t> copied(r.copied_ids.begin(), r.copied_ids.end());
    double max_copied = -1.0;
    double min_kept = 2.0;
    for (std::size_t i = 0; i < fx.f.size(); ++i) {
        if (copied.count(fx.f.ids()[i])) max_copied = std::max(max_copied, r.posteriors[i]);
        else min_kept = std::min(min_kept, r.posteriors[i]);
    }
    EXPECT_LE(max_copied, min_kept);
    for (std::size_t i = 0; i < r.copied_ids.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(r.copied_ids[i] - 1000);
        EXPECT_TRUE(r.h_tilde.points().row(200 + static_cast<Eigen::Index>(i)) == fx.f.points().row(row));
        EXPECT_EQ(r.h_tilde.ids()[200 + i], r.copied_ids[i]);
    }
    EXPECT_EQ(select_regroup_set(fx.f, model, 0.1), r.copied_ids);
}

TEST(BuildHTilde, CopiedSetsAreNestedInP) {
    const auto fx = make_pair(503);
    const auto model = fit(fx.f, fx.h, quick(4));
    std::vector<std::int64_t> previous;
    for (double p : {0.0, 0.05, 0.1, 0.2, 0.35, 0.5}) {
        const auto ids = select_regroup_set(fx.f, model, p);
        EXPECT_EQ(ids.size(), copy_count(p, fx.f.size()));
        EXPECT_TRUE(std::equal(previous.begin(), previous.end(), ids.begin()));
        previous = ids;
    }
}

TEST(BuildHTilde, ZeroFractionLeavesComponentUntouched) {
    const auto fx = make_pair(504);
    RegroupConfig cfg;
    cfg.classifier = quick(5);
    cfg.copy_fraction = 0.0;
    const auto r = build_h_tilde(fx.f, fx.h, cfg);
    EXPECT_TRUE(r.copied_ids.empty());
    EXPECT_TRUE(r.h_tilde == fx.h);
}

TEST(RegroupedEstimate, ZeroFractionWithSharedFitMatchesPlain) {
    const auto fx = make_pair(505);
    RegroupConfig cfg;
    cfg.classifier = quick(6);
    cfg.copy_fraction = 0.0;
    EstimatorSpec en;
    en.method = Method::en;
    const auto model = fit(fx.f, fx.h, cfg.classifier);
    const auto plain = run_estimator(en, fx.f, fx.h, &model);
    const auto regrouped = regrouped_estimate(fx.f, fx.h, cfg, en, &model);
    EXPECT_EQ(regrouped.estimate.kappa_hat, plain.kappa_hat);
    // without a ranking model the same seed reproduces it
    EXPECT_EQ(regrouped_estimate(fx.f, fx.h, cfg, en).estimate.kappa_hat, plain.kappa_hat);
}

TEST(RegroupedEstimate, IndependentFitsChangeTheEstimationSeed) {
    RegroupConfig cfg;
    cfg.classifier.seed = 42;
    EXPECT_EQ(estimation_seed(cfg), 42u);
    cfg.independent_fits = true;
    EXPECT_NE(estimation_seed(cfg), 42u);
    EXPECT_EQ(estimation_seed(cfg), derive_seed(42, {7}));
}

TEST(RegroupedEstimate, CopiesRowsAndRefitsForModelBasedEstimators) {
    const auto fx = make_pair(506, 400);
    RegroupConfig cfg;
    cfg.classifier = quick(7);
    cfg.copy_fraction = 0.1;
    EstimatorSpec roc;
    const auto model = fit(fx.f, fx.h, cfg.classifier);
    const auto plain = run_estimator(roc, fx.f, fx.h, &model);
    const auto regrouped = regrouped_estimate(fx.f, fx.h, cfg, roc, &model);
    EXPECT_EQ(regrouped.regrouped.copied_ids.size(), 40u);
    EXPECT_GE(regrouped.estimate.kappa_hat, 0.0);
    EXPECT_LE(regrouped.estimate.kappa_hat, 1.0);
    EXPECT_NE(regrouped.estimate.kappa_hat, plain.kappa_hat);
}

TEST(RegroupedCsv, OneLinePerMixtureRow) {
    const auto fx = make_pair(507, 50);
    RegroupConfig cfg;
    cfg.classifier = quick(8);
    cfg.copy_fraction = 0.2;
    const auto r = build_h_tilde(fx.f, fx.h, cfg);
    const std::string csv = regrouped_csv(fx.f, r);
    EXPECT_EQ(csv.rfind("id,posterior,copied\n", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 51);
    std::size_t copied = 0;
    for (std::size_t pos = 0; (pos = csv.find(",1\n", pos)) != std::string::npos; ++pos) ++copied;
    EXPECT_EQ(copied, 10u);
}

TEST(RegroupConfig, Validation) {
    RegroupConfig cfg;
    cfg.copy_fraction = 0.6;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg.copy_fraction = -0.1;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    const Sample f(Eigen::MatrixXd::Zero(20, 2), Provenance::mixture);
    const Sample h(Eigen::MatrixXd::Zero(20, 3), Provenance::component);
    cfg.copy_fraction = 0.1;
    EXPECT_THROW(build_h_tilde(f, h, cfg, init_network(2, cfg.classifier)), std::invalid_argument);
}
