#include "bpac/simulation.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace bpac;

namespace {

SyntheticStreamSpec kumaraswamy_quadratic() {
    SyntheticStreamSpec s;
    s.segments.push_back(Segment{kUnboundedLength, UncertaintyLaw::kumaraswamy(2.0, 3.0),
                                 LossLaw{{0.1, 0.0, 0.8}}, TokenModel::constant(80, 400)});
    return s;
}

SyntheticStreamSpec easy_then_hard() {
    SyntheticStreamSpec s;
    s.segments.push_back(Segment{100, UncertaintyLaw::uniform(), LossLaw::linear(0.4), {}});
    s.segments.push_back(Segment{kUnboundedLength, UncertaintyLaw::uniform(), LossLaw{{0.2, 0.8}}, {}});
    return s;
}

}  // namespace

TEST(OracleRisk, UniformLinearClosedForm) {
    const auto spec = SyntheticStreamSpec::uniform_linear(1.0);
    EXPECT_NEAR(oracle_risk(spec, 0.4, 0.05), 0.076, 1e-15);
    EXPECT_EQ(oracle_risk(spec, 0.0, 0.05), 0.0);
    EXPECT_NEAR(oracle_risk(spec, 1.0, 0.05), 0.475, 1e-15);
    for (double u : {0.1, 0.33, 0.77})
        EXPECT_NEAR(oracle_risk(spec, u, 0.05), 0.95 * u * u / 2.0, 1e-15);
}

TEST(OracleRisk, RejectsNonStationarySpecs) {
    EXPECT_THROW(oracle_risk(easy_then_hard(), 0.5, 0.05), NonStationarySpec);
}

TEST(OracleRisk, ZeroAtZeroAndMonotone) {
    const auto grid = ThresholdGrid::default_grid();
    for (const auto& spec : {SyntheticStreamSpec::uniform_linear(1.0), SyntheticStreamSpec::uniform_linear(0.3),
                             kumaraswamy_quadratic()}) {
        EXPECT_EQ(oracle_risk(spec, 0.0, 0.05), 0.0);
        double prev = 0.0;
        for (double u : grid.values()) {
            const double r = oracle_risk(spec, u, 0.05);
            ASSERT_GE(r, prev - 1e-15);
            prev = r;
        }
        EXPECT_NEAR(oracle_risk(spec, 1.0, 0.05), 0.95 * segment_mean_loss(spec.segments[0]), 1e-12);
    }
}

TEST(OracleRisk, QuadratureAgreesWithClosedForm) {
    // Kumaraswamy(1,1) is Uniform[0,1] but goes through quadrature.
    Segment s{kUnboundedLength, UncertaintyLaw::kumaraswamy(1.0, 1.0), LossLaw::linear(1.0), {}};
    for (double u : {0.2, 0.5, 0.9, 1.0}) EXPECT_NEAR(segment_partial_risk(s, u), u * u / 2.0, 1e-10);
    // Kumaraswamy(2,1): density 2v; E[v 1{V<u}] = 2u^3/3.
    Segment k{kUnboundedLength, UncertaintyLaw::kumaraswamy(2.0, 1.0), LossLaw::linear(1.0), {}};
    for (double u : {0.2, 0.5, 0.9, 1.0}) EXPECT_NEAR(segment_partial_risk(k, u), 2.0 * u * u * u / 3.0, 1e-10);
}

TEST(OracleThreshold, UniformLinear) {
    const auto spec = SyntheticStreamSpec::uniform_linear(1.0);
    const auto grid = ThresholdGrid::default_grid();
    const auto u_star = oracle_threshold(spec, 0.08, 0.05, grid);
    ASSERT_TRUE(u_star);
    EXPECT_EQ(*u_star, 0.411);
    // Closed-form inversion: u^2 > 2 eps / (1 - rho).
    const double boundary = std::sqrt(2.0 * 0.08 / 0.95);
    EXPECT_NEAR(boundary, 0.410391, 1e-6);
    EXPECT_EQ(*u_star, std::ceil(boundary * 1000.0) / 1000.0);
    // Brute-force scan.
    double scanned = -1.0;
    for (double u : grid.values()) {
        if (0.95 * u * u / 2.0 > 0.08) {
            scanned = u;
            break;
        }
    }
    EXPECT_EQ(*u_star, scanned);
}

TEST(OracleThreshold, NeverViolated) {
    const auto grid = ThresholdGrid::default_grid();
    EXPECT_FALSE(oracle_threshold(SyntheticStreamSpec::uniform_linear(1.0), 0.475, 0.05, grid));
    EXPECT_TRUE(oracle_threshold(SyntheticStreamSpec::uniform_linear(1.0), 0.474, 0.05, grid));
    SyntheticStreamSpec zero;
    zero.segments.push_back(Segment{kUnboundedLength, UncertaintyLaw::uniform(), LossLaw::constant(0.0), {}});
    EXPECT_FALSE(oracle_threshold(zero, 1e-9, 0.05, grid));
}

TEST(GenerateEvent, MeanLossMatchesOracle) {
    const auto spec = SyntheticStreamSpec::uniform_linear(1.0);
    const StreamSource src(spec, 17);
    constexpr int n = 1000000;
    double sum = 0.0;
    for (int t = 1; t <= n; ++t) sum += src.at(t).latent_loss;
    const double mean = sum / n;
    const double se = std::sqrt(0.25 / n);
    EXPECT_NEAR(mean, 0.5, 3 * se);
}

TEST(GenerateEvent, PartialRiskMatchesOracleAtRandomThresholds) {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> pick(0.0, 1.0);
    for (const auto& spec : {SyntheticStreamSpec::uniform_linear(1.0), kumaraswamy_quadratic()}) {
        const StreamSource src(spec, 23);
        constexpr int n = 200000;
        std::vector<std::pair<double, double>> draws(n);
        for (int t = 1; t <= n; ++t) {
            const auto o = src.at(t);
            draws[t - 1] = {o.uncertainty, o.latent_loss};
        }
        for (int k = 0; k < 10; ++k) {
            const double u = pick(gen);
            double s = 0.0, s2 = 0.0;
            for (const auto& [v, l] : draws) {
                const double x = v < u ? l : 0.0;
                s += x;
                s2 += x * x;
            }
            const double mean = s / n;
            const double se = std::sqrt((s2 / n - mean * mean) / n);
            EXPECT_NEAR(mean, oracle_risk(spec, u, 0.05) / 0.95, 3 * se + 1e-12) << "u=" << u;
        }
    }
}

TEST(GenerateEvent, ZeroLossLaw) {
    SyntheticStreamSpec zero;
    zero.segments.push_back(Segment{kUnboundedLength, UncertaintyLaw::uniform(), LossLaw::constant(0.0), {}});
    const StreamSource src(zero, 1);
    for (int t = 1; t <= 10000; ++t) ASSERT_EQ(src.at(t).latent_loss, 0.0);
}

TEST(GenerateEvent, DeterministicAndBounded) {
    const auto spec = kumaraswamy_quadratic();
    for (std::uint64_t t = 1; t <= 1000; ++t) {
        const auto a = generate_event(spec, 9, t);
        const auto b = generate_event(spec, 9, t);
        EXPECT_EQ(a.uncertainty, b.uncertainty);
        EXPECT_EQ(a.latent_loss, b.latent_loss);
        EXPECT_GE(a.uncertainty, 0.0);
        EXPECT_LE(a.uncertainty, 1.0);
        EXPECT_EQ(a.tokens_cheap, 80u);
        EXPECT_EQ(a.tokens_expensive, 400u);
        EXPECT_EQ(a.index, t);
    }
}

TEST(GenerateEvent, TokenRanges) {
    SyntheticStreamSpec s = SyntheticStreamSpec::uniform_linear(1.0);
    s.segments[0].tokens = TokenModel{50, 150, 300, 700};
    const StreamSource src(s, 3);
    std::uint64_t lo = 1000, hi = 0;
    for (int t = 1; t <= 5000; ++t) {
        const auto o = src.at(t);
        ASSERT_GE(o.tokens_cheap, 50u);
        ASSERT_LE(o.tokens_cheap, 150u);
        ASSERT_GE(o.tokens_expensive, 300u);
        ASSERT_LE(o.tokens_expensive, 700u);
        lo = std::min(lo, o.tokens_cheap);
        hi = std::max(hi, o.tokens_cheap);
    }
    EXPECT_EQ(lo, 50u);
    EXPECT_EQ(hi, 150u);
}

TEST(GenerateEvent, SegmentsSwitchAndExhaust) {
    SyntheticStreamSpec s;
    s.segments.push_back(Segment{3, UncertaintyLaw::uniform(0.0, 0.1), LossLaw::constant(0.0), {}});
    s.segments.push_back(Segment{2, UncertaintyLaw::uniform(0.9, 1.0), LossLaw::constant(1.0), {}});
    validate_stream_spec(s);
    EXPECT_EQ(s.total_length(), 5u);
    const StreamSource src(s, 0);
    for (std::uint64_t t = 1; t <= 3; ++t) {
        EXPECT_LE(src.at(t).uncertainty, 0.1);
        EXPECT_EQ(src.at(t).latent_loss, 0.0);
    }
    for (std::uint64_t t = 4; t <= 5; ++t) {
        EXPECT_GE(src.at(t).uncertainty, 0.9);
        EXPECT_EQ(src.at(t).latent_loss, 1.0);
    }
    EXPECT_THROW(src.at(6), StreamExhausted);
}

TEST(EasyThenHard, HardSegmentIsRiskier) {
    const auto s = easy_then_hard();
    validate_stream_spec(s);
    for (double u : {0.2, 0.5, 1.0})
        EXPECT_LT(segment_partial_risk(s.segments[0], u), segment_partial_risk(s.segments[1], u));
    const auto table = partial_risk_table(s, ThresholdGrid::uniform(10));
    ASSERT_EQ(table.size(), 2u);
    EXPECT_NEAR(table[1][10], 0.2 + 0.4, 1e-15);
    EXPECT_NEAR(table[0][5], 0.4 * 0.125, 1e-15);
}

TEST(ValidateStreamSpec, RejectsBadSpecs) {
    auto expect_key = [](const SyntheticStreamSpec& s, const std::string& key) {
        try {
            validate_stream_spec(s);
            ADD_FAILURE() << "expected rejection for " << key;
        } catch (const InvalidStreamSpec& e) {
            EXPECT_EQ(e.key(), key);
        }
    };
    expect_key(SyntheticStreamSpec{}, "segments");
    auto s = SyntheticStreamSpec::uniform_linear(1.5);
    expect_key(s, "segments[0].loss");
    s = SyntheticStreamSpec::uniform_linear(1.0);
    s.segments[0].length = 0;
    expect_key(s, "segments[0].length");
    s = easy_then_hard();
    s.segments[0].length = kUnboundedLength;
    expect_key(s, "segments[0].length");
    s = SyntheticStreamSpec::uniform_linear(1.0);
    s.segments[0].uncertainty = UncertaintyLaw::uniform(0.5, 0.2);
    expect_key(s, "segments[0].uncertainty");
    s.segments[0].uncertainty = UncertaintyLaw::kumaraswamy(0.0, 1.0);
    expect_key(s, "segments[0].uncertainty");
    s = SyntheticStreamSpec::uniform_linear(1.0);
    s.segments[0].tokens = TokenModel{10, 5, 1, 1};
    expect_key(s, "segments[0].tokens");
}
