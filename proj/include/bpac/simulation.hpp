// simulation.hpp
//
// Synthetic streams with closed-form (or quadrature) risk oracles.
// Losses are Bernoulli given the uncertainty score, l | U ~ Bernoulli(q(U)),
// so E[l 1{U < u}] = integral of q(v) f_U(v) over [0, u).
#pragma once
#include "bpac/core.hpp"
#include "bpac/rng.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace bpac {

class StreamExhausted : public Error {
public:
    explicit StreamExhausted(std::uint64_t t) : Error("stream exhausted at step " + std::to_string(t)) {}
};

class NonStationarySpec : public Error {
public:
    NonStationarySpec() : Error("oracle_risk needs a single-segment (i.i.d.) spec; use segment_partial_risk") {}
};

class InvalidStreamSpec : public Error {
public:
    InvalidStreamSpec(std::string key, const std::string& msg) : Error(key + ": " + msg), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

// ---------------------------------------------------------------------------
// Laws
// ---------------------------------------------------------------------------

enum class UncertaintyKind { Uniform, Kumaraswamy };

// Uniform on [low, high], or Kumaraswamy(a, b) on [0, 1]. Both are sampled by
// inverse CDF so one uniform draw yields one score.
struct UncertaintyLaw {
    UncertaintyKind kind = UncertaintyKind::Uniform;
    double low = 0.0;
    double high = 1.0;
    double a = 1.0;
    double b = 1.0;

    static UncertaintyLaw uniform(double lo = 0.0, double hi = 1.0) {
        return {UncertaintyKind::Uniform, lo, hi, 1.0, 1.0};
    }
    static UncertaintyLaw kumaraswamy(double a, double b) { return {UncertaintyKind::Kumaraswamy, 0.0, 1.0, a, b}; }

    double support_low() const noexcept { return kind == UncertaintyKind::Uniform ? low : 0.0; }
    double support_high() const noexcept { return kind == UncertaintyKind::Uniform ? high : 1.0; }

    double quantile(double p) const noexcept {
        if (kind == UncertaintyKind::Uniform) return std::min(high, low + p * (high - low));
        // F(x) = 1 - (1 - x^a)^b
        return std::pow(1.0 - std::pow(1.0 - p, 1.0 / b), 1.0 / a);
    }

    double density(double x) const noexcept {
        if (x < support_low() || x > support_high()) return 0.0;
        if (kind == UncertaintyKind::Uniform) return 1.0 / (high - low);
        return a * b * std::pow(x, a - 1.0) * std::pow(1.0 - std::pow(x, a), b - 1.0);
    }

    friend bool operator==(const UncertaintyLaw&, const UncertaintyLaw&) = default;
};

// q(v) = sum_k coefficients[k] v^k.
struct LossLaw {
    std::vector<double> coefficients;

    static LossLaw linear(double kappa) { return {{0.0, kappa}}; }
    static LossLaw constant(double p) { return {{p}}; }

    double operator()(double v) const noexcept {
        double acc = 0.0;
        for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) acc = acc * v + *it;
        return acc;
    }

    // Antiderivative of q, zero at 0.
    double integral(double v) const noexcept {
        double acc = 0.0;
        for (std::size_t k = coefficients.size(); k-- > 0;)
            acc = acc * v + coefficients[k] / static_cast<double>(k + 1);
        return acc * v;
    }

    friend bool operator==(const LossLaw&, const LossLaw&) = default;
};

// Token counts (h~, h) per event: constants when low == high, else uniform integers.
struct TokenModel {
    std::uint64_t cheap_low = 100;
    std::uint64_t cheap_high = 100;
    std::uint64_t expensive_low = 500;
    std::uint64_t expensive_high = 500;

    static TokenModel constant(std::uint64_t cheap, std::uint64_t expensive) {
        return {cheap, cheap, expensive, expensive};
    }

    friend bool operator==(const TokenModel&, const TokenModel&) = default;
};

inline constexpr std::uint64_t kUnboundedLength = std::numeric_limits<std::uint64_t>::max();

struct Segment {
    std::uint64_t length = kUnboundedLength;
    UncertaintyLaw uncertainty;
    LossLaw loss = LossLaw::linear(1.0);
    TokenModel tokens;

    friend bool operator==(const Segment&, const Segment&) = default;
};

struct SyntheticStreamSpec {
    std::vector<Segment> segments;

    // U ~ Uniform[0,1], q(v) = kappa v.
    static SyntheticStreamSpec uniform_linear(double kappa = 1.0) {
        SyntheticStreamSpec s;
        s.segments.push_back(Segment{kUnboundedLength, UncertaintyLaw::uniform(), LossLaw::linear(kappa), {}});
        return s;
    }

    bool stationary() const noexcept { return segments.size() == 1; }

    std::uint64_t total_length() const noexcept {
        std::uint64_t total = 0;
        for (const auto& s : segments) {
            if (s.length > kUnboundedLength - total) return kUnboundedLength;
            total += s.length;
        }
        return total;
    }

    // Segment index active at step t (1-based).
    std::size_t segment_at(std::uint64_t t) const {
        std::uint64_t end = 0;
        for (std::size_t i = 0; i < segments.size(); ++i) {
            end = segments[i].length > kUnboundedLength - end ? kUnboundedLength : end + segments[i].length;
            if (t <= end) return i;
        }
        throw StreamExhausted(t);
    }

    friend bool operator==(const SyntheticStreamSpec&, const SyntheticStreamSpec&) = default;
};

// Throws InvalidStreamSpec naming the offending key.
inline void validate_stream_spec(const SyntheticStreamSpec& spec) {
    if (spec.segments.empty()) throw InvalidStreamSpec("segments", "at least one segment is required");
    for (std::size_t i = 0; i < spec.segments.size(); ++i) {
        const Segment& s = spec.segments[i];
        const std::string key = "segments[" + std::to_string(i) + "]";
        if (s.length == 0) throw InvalidStreamSpec(key + ".length", "segment length must be positive");
        if (s.length == kUnboundedLength && i + 1 != spec.segments.size())
            throw InvalidStreamSpec(key + ".length", "only the last segment may be unbounded");
        const UncertaintyLaw& u = s.uncertainty;
        if (u.kind == UncertaintyKind::Uniform) {
            if (!(u.low >= 0.0 && u.high <= 1.0 && u.low < u.high))
                throw InvalidStreamSpec(key + ".uncertainty", "uniform support must satisfy 0 <= low < high <= 1");
        } else if (!(u.a > 0.0 && u.b > 0.0)) {
            throw InvalidStreamSpec(key + ".uncertainty", "kumaraswamy shapes must be positive");
        }
        if (s.loss.coefficients.empty()) throw InvalidStreamSpec(key + ".loss", "loss law has no coefficients");
        // q must map the support into [0,1]; checked on a dense grid.
        const double lo = u.support_low(), hi = u.support_high();
        constexpr int kProbe = 10000;
        for (int k = 0; k <= kProbe; ++k) {
            const double v = lo + (hi - lo) * k / kProbe;
            const double q = s.loss(v);
            if (!(q >= 0.0 && q <= 1.0))
                throw InvalidStreamSpec(key + ".loss", "q(v) leaves [0,1] at v=" + std::to_string(v));
        }
        if (s.tokens.cheap_low > s.tokens.cheap_high || s.tokens.expensive_low > s.tokens.expensive_high)
            throw InvalidStreamSpec(key + ".tokens", "token range has low > high");
    }
}

// ---------------------------------------------------------------------------
// Event generation
// ---------------------------------------------------------------------------

// Draws for step t are a pure function of (seed, spec, t).
class StreamSource {
public:
    StreamSource(SyntheticStreamSpec spec, std::uint64_t seed)
        : spec_(std::move(spec)),
          u_rng_(seed, RngStream::Uncertainty),
          l_rng_(seed, RngStream::Loss),
          hc_rng_(seed, RngStream::TokensCheap),
          he_rng_(seed, RngStream::TokensExpensive) {}

    StreamObservation at(std::uint64_t t) const {
        const Segment& seg = spec_.segments[spec_.segment_at(t)];
        StreamObservation o;
        o.index = t;
        o.uncertainty = std::clamp(seg.uncertainty.quantile(u_rng_.uniform(t)), 0.0, 1.0);
        o.latent_loss = l_rng_.uniform(t) < seg.loss(o.uncertainty) ? 1.0 : 0.0;
        o.tokens_cheap = hc_rng_.uniform_int(t, seg.tokens.cheap_low, seg.tokens.cheap_high);
        o.tokens_expensive = he_rng_.uniform_int(t, seg.tokens.expensive_low, seg.tokens.expensive_high);
        return o;
    }

    const SyntheticStreamSpec& spec() const noexcept { return spec_; }

private:
    SyntheticStreamSpec spec_;
    CounterRng u_rng_, l_rng_, hc_rng_, he_rng_;
};

inline StreamObservation generate_event(const SyntheticStreamSpec& spec, std::uint64_t seed, std::uint64_t t) {
    return StreamSource(spec, seed).at(t);
}

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

// E[l 1{U < u}] under one segment's law.
inline double segment_partial_risk(const Segment& s, double u) {
    const UncertaintyLaw& law = s.uncertainty;
    const double lo = law.support_low();
    const double upper = std::min(u, law.support_high());
    if (!(upper > lo)) return 0.0;
    if (law.kind == UncertaintyKind::Uniform)
        return (s.loss.integral(upper) - s.loss.integral(lo)) / (law.high - law.low);
    auto integrand = [&](double v) { return s.loss(v) * law.density(v); };
    using boost::math::quadrature::gauss_kronrod;
    return gauss_kronrod<double, 61>::integrate(integrand, lo, upper, 20, 1e-12);
}

// E[l] under one segment's law.
inline double segment_mean_loss(const Segment& s) { return segment_partial_risk(s, 2.0); }

// Deployment risk R(u) = (1 - rho) E[l 1{U < u}] for an i.i.d. spec.
inline double oracle_risk(const SyntheticStreamSpec& spec, double u, double rho) {
    if (!spec.stationary()) throw NonStationarySpec();
    return (1.0 - rho) * segment_partial_risk(spec.segments.front(), u);
}

// Smallest grid point with R(u) > eps; nullopt when every threshold is safe.
inline std::optional<double> oracle_threshold(const SyntheticStreamSpec& spec, double epsilon, double rho,
                                              const ThresholdGrid& grid) {
    for (double u : grid.values())
        if (oracle_risk(spec, u, rho) > epsilon) return u;
    return std::nullopt;
}

// Per-segment table of E[l 1{U < u}] over the grid.
inline std::vector<std::vector<double>> partial_risk_table(const SyntheticStreamSpec& spec,
                                                           const ThresholdGrid& grid) {
    std::vector<std::vector<double>> table;
    table.reserve(spec.segments.size());
    for (const auto& s : spec.segments) {
        std::vector<double> row(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) row[i] = segment_partial_risk(s, grid[i]);
        table.push_back(std::move(row));
    }
    return table;
}

}  // namespace bpac
