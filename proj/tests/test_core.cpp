#include "bpac/core.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace bpac;

TEST(ValidateConfig, DefaultsAreValid) {
    RouterConfig c;
    EXPECT_EQ(c.epsilon, 0.08);
    EXPECT_EQ(c.alpha, 0.1);
    EXPECT_EQ(c.betting_cap, 0.9);
    EXPECT_EQ(c.grid.size(), 1001u);
    EXPECT_EQ(c.schedule.kind, ScheduleKind::TwoStage);
    EXPECT_EQ(c.schedule.rho_warm, 0.7);
    EXPECT_EQ(c.schedule.rho_deploy, 0.05);
    EXPECT_EQ(c.schedule.t_warm, 200u);
    auto check = validate_config(c);
    ASSERT_TRUE(check);
    EXPECT_TRUE(check.violations.empty());
    EXPECT_EQ(check.config->rho_min(), 0.05);
}

TEST(ValidateConfig, EpsilonAtOrAboveOneMinusRhoIsRejected) {
    RouterConfig c;
    c.epsilon = 0.5;
    c.schedule = ExplorationSchedule::constant(0.6);
    auto check = validate_config(c);
    EXPECT_FALSE(check);
    EXPECT_TRUE(check.has(ConfigErrorKind::EpsilonTooLarge));

    // The warm-up rho counts too: 1 - 0.7 = 0.3.
    RouterConfig d;
    d.epsilon = 0.31;
    EXPECT_TRUE(validate_config(d).has(ConfigErrorKind::EpsilonTooLarge));
    d.epsilon = 0.29;
    EXPECT_TRUE(validate_config(d));
}

TEST(ValidateConfig, MixturePriorMustSumToOne) {
    RouterConfig c;
    c.grid = ThresholdGrid::uniform(4);
    c.selection_mode = SelectionMode::Mixture;
    c.prior = Prior{{0.2, 0.2, 0.2, 0.2, 0.17}};
    auto check = validate_config(c);
    EXPECT_FALSE(check);
    EXPECT_TRUE(check.has(ConfigErrorKind::BadPrior));

    c.prior = Prior::uniform(5);
    EXPECT_TRUE(validate_config(c));
    c.prior = std::nullopt;
    EXPECT_TRUE(validate_config(c).has(ConfigErrorKind::BadPrior));
    c.prior = Prior{{0.25, 0.25, 0.25, 0.25, 0.0}};
    EXPECT_TRUE(validate_config(c).has(ConfigErrorKind::BadPrior));
    c.prior = Prior::uniform(4);
    EXPECT_TRUE(validate_config(c).has(ConfigErrorKind::BadPrior));
}

TEST(ValidateConfig, ScalarRanges) {
    for (double bad : {0.0, 1.0, -0.1, 1.5}) {
        RouterConfig c;
        c.alpha = bad;
        EXPECT_TRUE(validate_config(c).has(ConfigErrorKind::BadAlpha)) << bad;
        c = RouterConfig{};
        c.betting_cap = bad;
        EXPECT_TRUE(validate_config(c).has(ConfigErrorKind::BadBettingCap)) << bad;
        c = RouterConfig{};
        c.epsilon = bad;
        EXPECT_TRUE(validate_config(c).has(ConfigErrorKind::BadEpsilon)) << bad;
    }
    RouterConfig c;
    c.alpha = 1.0;
    EXPECT_TRUE(validate_config(c, ValidationOptions{true}));
}

TEST(ValidateConfig, GridShape) {
    RouterConfig c;
    c.grid = ThresholdGrid({0.0});
    EXPECT_TRUE(validate_config(c).has(ConfigErrorKind::BadGrid));
    c.grid = ThresholdGrid({0.1, 0.5, 1.0});
    EXPECT_TRUE(validate_config(c).has(ConfigErrorKind::BadGrid));
    c.grid = ThresholdGrid({0.0, 0.5, 0.9});
    EXPECT_TRUE(validate_config(c).has(ConfigErrorKind::BadGrid));
    c.grid = ThresholdGrid({0.0, 0.5, 0.5, 1.0});
    EXPECT_TRUE(validate_config(c).has(ConfigErrorKind::BadGrid));
    c.grid = ThresholdGrid({0.0, 1.0});
    EXPECT_TRUE(validate_config(c));
}

TEST(ValidateConfig, ScheduleInfimumMustMatch) {
    RouterConfig c;
    c.schedule.declared_infimum = 0.1;
    EXPECT_TRUE(validate_config(c).has(ConfigErrorKind::BadSchedule));
    c.schedule = ExplorationSchedule::constant(1.0);
    EXPECT_TRUE(validate_config(c).has(ConfigErrorKind::BadSchedule));
    // Warm-up below deploy: the infimum is the warm-up rate.
    c.schedule = ExplorationSchedule::two_stage(0.02, 0.05, 10);
    EXPECT_EQ(c.schedule.declared_infimum, 0.02);
    EXPECT_TRUE(validate_config(c));
}

TEST(ValidateConfig, FixedWagerMustKeepWealthPositive) {
    RouterConfig c;
    c.betting = BettingStrategy{BettingKind::Fixed, 0.05};
    EXPECT_TRUE(validate_config(c));
    c.betting.fixed_lambda = 0.06;  // 0.06 * 18.92 > 1
    EXPECT_TRUE(validate_config(c).has(ConfigErrorKind::BadBetting));
    c.betting.fixed_lambda = -0.01;
    EXPECT_TRUE(validate_config(c).has(ConfigErrorKind::BadBetting));
}

TEST(ValidateConfig, ReportsEveryViolation) {
    RouterConfig c;
    c.alpha = 2.0;
    c.betting_cap = 0.0;
    c.grid = ThresholdGrid({0.5});
    auto check = validate_config(c);
    EXPECT_TRUE(check.has(ConfigErrorKind::BadAlpha));
    EXPECT_TRUE(check.has(ConfigErrorKind::BadBettingCap));
    EXPECT_TRUE(check.has(ConfigErrorKind::BadGrid));
    EXPECT_THROW(validated(c), InvalidConfig);
}

TEST(ValidateConfig, Idempotent) {
    const auto once = validated(RouterConfig{});
    const auto twice = validated(once.get());
    EXPECT_EQ(once.get(), twice.get());
    EXPECT_EQ(once.rho_min(), twice.rho_min());
}

TEST(RhoAt, TwoStageBoundary) {
    const auto s = ExplorationSchedule::two_stage(0.7, 0.05, 200);
    EXPECT_EQ(rho_at(s, 1), 0.7);
    EXPECT_EQ(rho_at(s, 200), 0.7);
    EXPECT_EQ(rho_at(s, 201), 0.05);
    EXPECT_EQ(rho_at(ExplorationSchedule::constant(0.3), 1000000), 0.3);
}

TEST(RhoAt, NeverBelowDeclaredInfimum) {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> r(0.01, 0.99);
    std::uniform_int_distribution<std::uint64_t> tw(0, 500);
    for (int k = 0; k < 200; ++k) {
        const auto s = k % 2 ? ExplorationSchedule::constant(r(gen)) : ExplorationSchedule::two_stage(r(gen), r(gen), tw(gen));
        for (std::uint64_t t : {1ull, 2ull, 10ull, 200ull, 201ull, 499ull, 500ull, 501ull, 1000000ull}) {
            EXPECT_LE(s.declared_infimum, rho_at(s, t));
            EXPECT_LT(rho_at(s, t), 1.0);
        }
    }
}

TEST(ThresholdGrid, DefaultValues) {
    const auto g = ThresholdGrid::default_grid();
    EXPECT_EQ(g.size(), 1001u);
    EXPECT_EQ(g[0], 0.0);
    EXPECT_EQ(g[1000], 1.0);
    EXPECT_EQ(g[411], 0.411);
    EXPECT_TRUE(g.contains(0.411));
    EXPECT_EQ(*g.index_of(0.25), 250u);
}

TEST(ThresholdGrid, FloorLookupIsTotal) {
    const auto g = ThresholdGrid::default_grid();
    EXPECT_EQ(g.floor(0.0), 0.0);
    EXPECT_EQ(g.floor(1.0), 1.0);
    EXPECT_EQ(g.floor(0.4115), 0.411);
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> r(0.0, 1.0);
    for (int k = 0; k < 10000; ++k) {
        const double x = r(gen);
        const std::size_t i = g.floor_index(x);
        EXPECT_LE(g[i], x);
        if (i + 1 < g.size()) {
            EXPECT_GT(g[i + 1], x);
        }
    }
}

TEST(ThresholdGrid, Stepped) {
    auto g = ThresholdGrid::stepped(0.0, 1.0, 0.25);
    ASSERT_TRUE(g);
    EXPECT_EQ(g->size(), 5u);
    EXPECT_EQ((*g)[2], 0.5);
    EXPECT_FALSE(ThresholdGrid::stepped(0.0, 1.0, 0.3));
    EXPECT_FALSE(ThresholdGrid::stepped(0.0, 1.0, 0.0));
    EXPECT_EQ(*ThresholdGrid::stepped(0.0, 1.0, 0.001), ThresholdGrid::default_grid());
}

TEST(ValidatedConfig, WithSeedKeepsEverythingElse) {
    const auto c = validated(RouterConfig{});
    const auto s = c.with_seed(42);
    EXPECT_EQ(s->seed, 42u);
    RouterConfig expect = c.get();
    expect.seed = 42;
    EXPECT_EQ(s.get(), expect);
}

TEST(StreamObservation, ArrivalHidesLoss) {
    StreamObservation o{3, 0.4, 1.0, 10, 50};
    const Arrival a = o.arrival();
    EXPECT_EQ(a.index, 3u);
    EXPECT_EQ(a.uncertainty, 0.4);
    EXPECT_EQ(a.tokens_cheap, 10u);
    EXPECT_EQ(a.tokens_expensive, 50u);
}
