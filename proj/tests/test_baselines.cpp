#include "bpac/baselines.hpp"
#include "bpac/harness.hpp"
#include "bpac/simulation.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace bpac;

TEST(NaiveSelect, Examples) {
    const auto grid = ThresholdGrid::uniform(2);
    NaiveState s(3);
    s.t = 10;
    EXPECT_EQ(naive_select(s, 0.08, grid), 1.0);
    s.sums = {0.0, 0.4, 1.2};
    EXPECT_NEAR(s.estimate(1), 0.04, 1e-15);
    EXPECT_NEAR(s.estimate(2), 0.12, 1e-15);
    EXPECT_EQ(naive_select(s, 0.08, grid), 0.5);
}

TEST(NaiveSelect, DriftsToOneOnUniformLinear) {
    const auto cfg = validated(fixtures::coarse_config());
    const auto spec = SyntheticStreamSpec::uniform_linear(1.0);
    std::vector<double> finals;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto traj = run_replication(Method::ONaive, cfg, spec, 2000, seed);
        finals.push_back(traj.final_u_hat);
        EXPECT_TRUE(traj.violated);
        EXPECT_GT(oracle_risk(spec, traj.final_u_hat, cfg.rho_min()), cfg->epsilon);
        EXPECT_GT(traj.steps.back().er, 2.0 * cfg->epsilon) << "seed=" << seed;
    }
    std::nth_element(finals.begin(), finals.begin() + 10, finals.end());
    EXPECT_GE(finals[10], 0.95);
}

TEST(HoeffSelect, SlackAtHundredSteps) {
    EXPECT_NEAR(hoeff_alpha_t(0.1, 100), 6.079e-6, 1e-9);
    HoeffState s(1001, 0.05, HoeffVariant::PerPoint);
    s.t = 100;
    EXPECT_DOUBLE_EQ(s.range(), 19.0);
    EXPECT_NEAR(std::log(1.0 / hoeff_alpha_t(0.1, 100)), 12.011, 1e-3);
    EXPECT_NEAR(s.slack(0.1), 4.656, 1e-3);
    EXPECT_EQ(hoeff_select(s, 0.08, 0.1, ThresholdGrid::default_grid()), 0.0);
}

TEST(HoeffSelect, SlackAtTwoThousandSteps) {
    HoeffState s(1001, 0.05, HoeffVariant::PerPoint);
    s.t = 2000;
    const double expected = 19.0 * std::sqrt(std::log(std::numbers::pi * std::numbers::pi * 4e6 / 0.6) / 4000.0);
    EXPECT_NEAR(s.slack(0.1), expected, 1e-12);
    EXPECT_NEAR(s.slack(0.1), 1.274, 1e-3);
    EXPECT_GT(s.slack(0.1), 0.08);
}

TEST(HoeffSelect, ReachesTopOnceSlackFallsBelowEpsilon) {
    const auto grid = ThresholdGrid::uniform(10);
    HoeffState s(grid.size(), 0.05, HoeffVariant::PerPoint);
    std::uint64_t first = 0;
    for (std::uint64_t t = 1; t < 10000000 && !first; t = t * 11 / 10 + 1) {
        s.t = t;
        if (hoeff_select(s, 0.08, 0.1, grid) == 1.0) first = t;
    }
    ASSERT_GT(first, 0u);
    s.t = first;
    EXPECT_LE(s.slack(0.1), 0.08);
    const double lhs = 19.0 * 19.0 * std::log(1.0 / hoeff_alpha_t(0.1, first)) / (2 * 0.08 * 0.08);
    EXPECT_GE(static_cast<double>(first), lhs);
}

TEST(HoeffSelect, UnionVariantIsMoreConservative) {
    const auto grid = ThresholdGrid::default_grid();
    HoeffState per(grid.size(), 0.05, HoeffVariant::PerPoint);
    HoeffState uni(grid.size(), 0.05, HoeffVariant::UnionOverGrid);
    for (std::uint64_t t : {100ull, 10000ull, 1000000ull, 100000000ull}) {
        per.t = uni.t = t;
        EXPECT_GT(uni.slack(0.1), per.slack(0.1));
        const double diff = uni.slack(0.1) * uni.slack(0.1) - per.slack(0.1) * per.slack(0.1);
        EXPECT_NEAR(diff, 361.0 * std::log(1001.0) / (2.0 * static_cast<double>(t)), 1e-9);
    }
}

TEST(HoeffRouter, SelectorIsItsOwnCertificate) {
    RouterConfig c = fixtures::coarse_config(0.1);
    c.epsilon = 0.3;
    c.schedule = ExplorationSchedule::constant(0.5);
    const auto cfg = validated(c);
    const auto spec = SyntheticStreamSpec::uniform_linear(0.5);
    HoeffRouter r(cfg);
    StreamSource src(spec, 2);
    RecordingLossGate gate;
    bool moved = false;
    for (std::uint64_t t = 1; t <= 20000; ++t) {
        const auto obs = src.at(t);
        gate.stage(t, obs.latent_loss);
        r.step(obs.arrival(), gate);
        const std::size_t k = r.deployed_index();
        if (k > 0) {
            moved = true;
            ASSERT_LE(r.state().upper_bound(k, c.alpha), c.epsilon);
        }
    }
    EXPECT_TRUE(moved);
}

// Naive sums drop the 1/pi and (1 - rho) factors, so they never exceed the IPS sums.
TEST(Baselines, NaiveEstimateBelowIps) {
    const auto cfg = validated(fixtures::coarse_config());
    const auto spec = SyntheticStreamSpec::uniform_linear(1.0);
    NaiveRouter r(cfg.with_seed(4));
    StreamSource src(spec, 4);
    RecordingLossGate gate;
    HoeffState ips(cfg->grid.size(), cfg.rho_min(), HoeffVariant::PerPoint);
    for (std::uint64_t t = 1; t <= 3000; ++t) {
        const auto obs = src.at(t);
        gate.stage(t, obs.latent_loss);
        const Decision d = r.step(obs.arrival(), gate);
        ips.absorb(obs.uncertainty, d, cfg->grid);
        for (std::size_t i = 0; i < cfg->grid.size(); ++i)
            ASSERT_LE(r.state().estimate(i), ips.sums[i] / static_cast<double>(ips.t) + 1e-12);
    }
}

TEST(Baselines, UseConstantRhoAtInfimum) {
    const auto cfg = validated(fixtures::coarse_config());
    const auto spec = SyntheticStreamSpec::uniform_linear(1.0);
    for (Method m : {Method::ONaive, Method::IpsHoeff}) {
        auto traj = run_replication(m, cfg, spec, 300, 1);
        for (const auto& s : traj.steps) ASSERT_EQ(s.rho, 0.05);
    }
}

TEST(Baselines, IpsHoeffCoverage) {
    RouterConfig c = fixtures::coarse_config(0.1);
    c.epsilon = 0.3;
    c.schedule = ExplorationSchedule::constant(0.5);
    const auto cfg = validated(c);
    const auto spec = SyntheticStreamSpec::uniform_linear(1.0);
    const auto rep = mc_safety(Method::IpsHoeff, cfg, spec, 3000, 200, 0);
    EXPECT_LE(rep.frequency, 0.1 + 3 * std::sqrt(0.09 / 200));
}
