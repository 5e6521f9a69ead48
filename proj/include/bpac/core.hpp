// core.hpp
//
// Shared domain types for the risk-controlled router: configuration, the
// threshold grid, the exploration schedule, the mixture prior and the
// per-arrival observation. Everything here is immutable once validated.
#pragma once
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bpac {

// Base for every runtime failure raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// ThresholdGrid
// ---------------------------------------------------------------------------

// Candidate thresholds u(1) < ... < u(N). A valid grid starts at 0 and ends at 1.
class ThresholdGrid {
public:
    ThresholdGrid() = default;
    explicit ThresholdGrid(std::vector<double> values) : values_(std::move(values)) {}

    // {0, 1/n, 2/n, ..., 1}. Points are i/n rather than accumulated steps so
    // that 0.411 on the default grid is exactly the double nearest 0.411.
    static ThresholdGrid uniform(std::size_t intervals) {
        std::vector<double> v(intervals + 1);
        for (std::size_t i = 0; i <= intervals; ++i)
            v[i] = static_cast<double>(i) / static_cast<double>(intervals);
        return ThresholdGrid(std::move(v));
    }

    // {start, start+step, ..., stop}; the step must divide the range.
    static std::optional<ThresholdGrid> stepped(double start, double stop, double step) {
        if (!(step > 0.0) || !(stop > start)) return std::nullopt;
        const double n = (stop - start) / step;
        const double rounded = std::round(n);
        if (std::abs(n - rounded) > 1e-9 * std::max(1.0, n) || rounded < 1.0) return std::nullopt;
        const auto intervals = static_cast<std::size_t>(rounded);
        std::vector<double> v(intervals + 1);
        for (std::size_t i = 0; i <= intervals; ++i)
            v[i] = start + (stop - start) * (static_cast<double>(i) / static_cast<double>(intervals));
        return ThresholdGrid(std::move(v));
    }

    static ThresholdGrid default_grid() { return uniform(1000); }

    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    std::span<const double> values() const noexcept { return values_; }

    // Index of the largest grid value <= x. Total on [0, 1] for a valid grid.
    std::size_t floor_index(double x) const {
        auto it = std::upper_bound(values_.begin(), values_.end(), x);
        if (it == values_.begin()) return 0;
        return static_cast<std::size_t>(std::distance(values_.begin(), it) - 1);
    }
    double floor(double x) const { return values_[floor_index(x)]; }

    // Exact membership (grid values are compared bit-for-bit).
    bool contains(double u) const { return std::binary_search(values_.begin(), values_.end(), u); }

    std::optional<std::size_t> index_of(double u) const {
        auto it = std::lower_bound(values_.begin(), values_.end(), u);
        if (it == values_.end() || *it != u) return std::nullopt;
        return static_cast<std::size_t>(std::distance(values_.begin(), it));
    }

    friend bool operator==(const ThresholdGrid&, const ThresholdGrid&) = default;

private:
    std::vector<double> values_;
};

// ---------------------------------------------------------------------------
// ExplorationSchedule
// ---------------------------------------------------------------------------

enum class ScheduleKind { Constant, TwoStage };

// Minimum exploration probability rho_t. The infimum over all t is declared
// up front because the IPS coefficient (1 - rho_min) is fixed before the
// stream starts.
struct ExplorationSchedule {
    ScheduleKind kind = ScheduleKind::TwoStage;
    double rho = 0.05;            // Constant
    double rho_warm = 0.7;        // TwoStage
    double rho_deploy = 0.05;     // TwoStage
    std::uint64_t t_warm = 200;   // TwoStage
    double declared_infimum = 0.05;

    static ExplorationSchedule constant(double rho) {
        ExplorationSchedule s;
        s.kind = ScheduleKind::Constant;
        s.rho = rho;
        s.declared_infimum = rho;
        return s;
    }

    static ExplorationSchedule two_stage(double rho_warm, double rho_deploy, std::uint64_t t_warm) {
        ExplorationSchedule s;
        s.kind = ScheduleKind::TwoStage;
        s.rho_warm = rho_warm;
        s.rho_deploy = rho_deploy;
        s.t_warm = t_warm;
        s.declared_infimum = t_warm > 0 ? std::min(rho_warm, rho_deploy) : rho_deploy;
        return s;
    }

    // Largest rho_t the schedule can emit.
    double supremum() const noexcept {
        if (kind == ScheduleKind::Constant) return rho;
        return t_warm > 0 ? std::max(rho_warm, rho_deploy) : rho_deploy;
    }

    // Smallest rho_t the schedule can emit (what declared_infimum must equal).
    double computed_infimum() const noexcept {
        if (kind == ScheduleKind::Constant) return rho;
        return t_warm > 0 ? std::min(rho_warm, rho_deploy) : rho_deploy;
    }

    friend bool operator==(const ExplorationSchedule&, const ExplorationSchedule&) = default;
};

// rho_t for t >= 1.
inline double rho_at(const ExplorationSchedule& s, std::uint64_t t) noexcept {
    if (s.kind == ScheduleKind::Constant) return s.rho;
    return t <= s.t_warm ? s.rho_warm : s.rho_deploy;
}

// ---------------------------------------------------------------------------
// Prior, betting strategy, RouterConfig
// ---------------------------------------------------------------------------

// Probability mass nu(u) per grid point, used by mixture selection.
struct Prior {
    std::vector<double> mass;

    static Prior uniform(std::size_t n) { return Prior{std::vector<double>(n, 1.0 / static_cast<double>(n))}; }

    friend bool operator==(const Prior&, const Prior&) = default;
};

enum class SelectionMode { FixedSequence, Mixture };

enum class BettingKind { Adaptive, Fixed };

// Adaptive is the FTRL wager; Fixed is the constant-wager ablation.
struct BettingStrategy {
    BettingKind kind = BettingKind::Adaptive;
    double fixed_lambda = 0.05;

    friend bool operator==(const BettingStrategy&, const BettingStrategy&) = default;
};

struct RouterConfig {
    double epsilon = 0.08;
    double alpha = 0.1;
    double betting_cap = 0.9;
    SelectionMode selection_mode = SelectionMode::FixedSequence;
    std::optional<Prior> prior;
    ThresholdGrid grid = ThresholdGrid::default_grid();
    ExplorationSchedule schedule = ExplorationSchedule::two_stage(0.7, 0.05, 200);
    BettingStrategy betting;
    std::uint64_t seed = 0;

    friend bool operator==(const RouterConfig&, const RouterConfig&) = default;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class ConfigErrorKind {
    EpsilonTooLarge,
    BadEpsilon,
    BadAlpha,
    BadBettingCap,
    BadGrid,
    BadPrior,
    BadSchedule,
    BadBetting,
};

inline const char* to_string(ConfigErrorKind k) noexcept {
    switch (k) {
        case ConfigErrorKind::EpsilonTooLarge: return "EpsilonTooLarge";
        case ConfigErrorKind::BadEpsilon: return "BadEpsilon";
        case ConfigErrorKind::BadAlpha: return "BadAlpha";
        case ConfigErrorKind::BadBettingCap: return "BadBettingCap";
        case ConfigErrorKind::BadGrid: return "BadGrid";
        case ConfigErrorKind::BadPrior: return "BadPrior";
        case ConfigErrorKind::BadSchedule: return "BadSchedule";
        case ConfigErrorKind::BadBetting: return "BadBetting";
    }
    return "Unknown";
}

struct ConfigViolation {
    ConfigErrorKind kind;
    std::string key;      // config-file key the violation is attributed to
    std::string message;
};

struct ValidationOptions {
    // alpha = 1 makes the wealth bar 1; only the Monte Carlo harness uses it.
    bool allow_unit_alpha = false;
};

class ValidatedConfig;

struct ConfigCheck;
ConfigCheck validate_config(const RouterConfig& config, ValidationOptions options = {});

// A RouterConfig whose invariants have been checked. Only validate_config
// can produce one.
class ValidatedConfig {
public:
    const RouterConfig& get() const noexcept { return config_; }
    const RouterConfig* operator->() const noexcept { return &config_; }
    double rho_min() const noexcept { return config_.schedule.declared_infimum; }
    const ValidationOptions& options() const noexcept { return options_; }

    // The seed carries no invariant, so replications can reseed without revalidating.
    ValidatedConfig with_seed(std::uint64_t seed) const {
        ValidatedConfig copy = *this;
        copy.config_.seed = seed;
        return copy;
    }

private:
    friend ConfigCheck validate_config(const RouterConfig&, ValidationOptions);
    ValidatedConfig(RouterConfig c, ValidationOptions o) : config_(std::move(c)), options_(o) {}
    RouterConfig config_;
    ValidationOptions options_;
};

struct ConfigCheck {
    std::optional<ValidatedConfig> config;
    std::vector<ConfigViolation> violations;

    explicit operator bool() const noexcept { return config.has_value(); }
    bool has(ConfigErrorKind k) const {
        return std::any_of(violations.begin(), violations.end(), [k](const auto& v) { return v.kind == k; });
    }
};

class InvalidConfig : public Error {
public:
    explicit InvalidConfig(std::vector<ConfigViolation> v)
        : Error(describe(v)), violations_(std::move(v)) {}
    const std::vector<ConfigViolation>& violations() const noexcept { return violations_; }

private:
    static std::string describe(const std::vector<ConfigViolation>& v) {
        std::string s = "invalid router config:";
        for (const auto& x : v) s += std::string(" [") + to_string(x.kind) + "] " + x.message + ";";
        return s;
    }
    std::vector<ConfigViolation> violations_;
};

namespace detail {

inline bool open_unit(double x) { return x > 0.0 && x < 1.0; }

inline void check_grid(const ThresholdGrid& g, std::vector<ConfigViolation>& out) {
    auto v = g.values();
    if (v.size() < 2) {
        out.push_back({ConfigErrorKind::BadGrid, "grid", "grid needs at least two points"});
        return;
    }
    if (v.front() != 0.0) out.push_back({ConfigErrorKind::BadGrid, "grid", "first grid point must be 0"});
    if (v.back() != 1.0) out.push_back({ConfigErrorKind::BadGrid, "grid", "last grid point must be 1"});
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (!(v[i] > v[i - 1])) {
            out.push_back({ConfigErrorKind::BadGrid, "grid", "grid must be strictly increasing"});
            break;
        }
    }
}

inline void check_schedule(const ExplorationSchedule& s, std::vector<ConfigViolation>& out) {
    if (s.kind == ScheduleKind::Constant) {
        if (!open_unit(s.rho)) out.push_back({ConfigErrorKind::BadSchedule, "schedule.rho", "rho must lie in (0,1)"});
    } else {
        if (!open_unit(s.rho_deploy))
            out.push_back({ConfigErrorKind::BadSchedule, "schedule.rho_deploy", "rho_deploy must lie in (0,1)"});
        if (s.t_warm > 0 && !open_unit(s.rho_warm))
            out.push_back({ConfigErrorKind::BadSchedule, "schedule.rho_warm", "rho_warm must lie in (0,1)"});
    }
    if (s.declared_infimum != s.computed_infimum())
        out.push_back({ConfigErrorKind::BadSchedule, "schedule",
                       "declared infimum does not equal the infimum of the emitted rho_t"});
}

}  // namespace detail

// Checks every RouterConfig invariant; returns the config iff all hold.
inline ConfigCheck validate_config(const RouterConfig& c, ValidationOptions options) {
    std::vector<ConfigViolation> out;

    if (!detail::open_unit(c.epsilon))
        out.push_back({ConfigErrorKind::BadEpsilon, "epsilon", "epsilon must lie in (0,1)"});
    const bool alpha_ok = detail::open_unit(c.alpha) || (options.allow_unit_alpha && c.alpha == 1.0);
    if (!alpha_ok) out.push_back({ConfigErrorKind::BadAlpha, "alpha", "alpha must lie in (0,1)"});
    if (!detail::open_unit(c.betting_cap))
        out.push_back({ConfigErrorKind::BadBettingCap, "betting_cap", "betting cap c must lie in (0,1)"});

    detail::check_grid(c.grid, out);

    const std::size_t before_schedule = out.size();
    detail::check_schedule(c.schedule, out);
    const bool schedule_ok = out.size() == before_schedule;

    // Non-trivial regime: eps < 1 - rho_t for every emitted rho_t.
    if (schedule_ok && detail::open_unit(c.epsilon) && c.epsilon >= 1.0 - c.schedule.supremum())
        out.push_back({ConfigErrorKind::EpsilonTooLarge, "epsilon",
                       "epsilon >= 1 - rho_t for some t; risk control is trivial"});

    if (c.selection_mode == SelectionMode::Mixture) {
        if (!c.prior) {
            out.push_back({ConfigErrorKind::BadPrior, "prior", "mixture mode requires a prior"});
        } else {
            const auto& m = c.prior->mass;
            double sum = 0.0;
            bool positive = true;
            for (double x : m) {
                sum += x;
                positive = positive && x > 0.0 && std::isfinite(x);
            }
            if (m.size() != c.grid.size())
                out.push_back({ConfigErrorKind::BadPrior, "prior", "prior must have one mass per grid point"});
            if (!positive) out.push_back({ConfigErrorKind::BadPrior, "prior", "every prior mass must be positive"});
            if (std::abs(sum - 1.0) > 1e-9)
                out.push_back({ConfigErrorKind::BadPrior, "prior", "prior masses must sum to 1"});
        }
    }

    if (c.betting.kind == BettingKind::Fixed && schedule_ok && detail::open_unit(c.epsilon)) {
        // A constant wager needs 1 + lambda * D > 0 for the most negative payoff.
        const double rho_min = c.schedule.declared_infimum;
        const double worst = (1.0 - rho_min) / rho_min - c.epsilon;
        const double lam = c.betting.fixed_lambda;
        if (!(lam >= 0.0) || !(lam * worst < 1.0))
            out.push_back({ConfigErrorKind::BadBetting, "betting.lambda",
                           "fixed wager must satisfy 0 <= lambda < 1/((1-rho_min)/rho_min - eps)"});
    }

    ConfigCheck check;
    if (out.empty())
        check.config = ValidatedConfig(c, options);
    else
        check.violations = std::move(out);
    return check;
}

// Throwing convenience wrapper.
inline ValidatedConfig validated(const RouterConfig& c, ValidationOptions options = {}) {
    auto check = validate_config(c, options);
    if (!check) throw InvalidConfig(std::move(check.violations));
    return *check.config;
}

// ---------------------------------------------------------------------------
// Observations
// ---------------------------------------------------------------------------

// What the router may see of an arrival. The latent loss is deliberately
// absent; the router obtains it only through a loss gate.
struct Arrival {
    std::uint64_t index = 0;
    double uncertainty = 0.0;
    std::uint64_t tokens_cheap = 0;
    std::uint64_t tokens_expensive = 0;
};

// Full-information record of one arrival. The evaluator side reads
// latent_loss freely; routers receive arrival() plus a gate.
struct StreamObservation {
    std::uint64_t index = 0;
    double uncertainty = 0.0;
    double latent_loss = 0.0;
    std::uint64_t tokens_cheap = 0;
    std::uint64_t tokens_expensive = 0;

    Arrival arrival() const noexcept { return Arrival{index, uncertainty, tokens_cheap, tokens_expensive}; }
};

}  // namespace bpac
