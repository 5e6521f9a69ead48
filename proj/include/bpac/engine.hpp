// engine.hpp
//
// The betting decision loop: propensity, Bernoulli routing, IPS payoffs,
// per-threshold wealth with adaptive wagers, and threshold selection.
#pragma once
#include "bpac/core.hpp"
#include "bpac/rng.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bpac {

class OutOfOrderObservation : public Error {
public:
    OutOfOrderObservation(std::uint64_t expected, std::uint64_t got)
        : Error("observation index " + std::to_string(got) + " out of order, expected " + std::to_string(expected)) {}
};

class InvalidObservation : public Error {
public:
    using Error::Error;
};

class LossGateViolation : public Error {
public:
    explicit LossGateViolation(std::uint64_t t)
        : Error("latent loss read at step " + std::to_string(t) + " without invoking the expensive model") {}
};

class WagerOutOfRange : public Error {
public:
    WagerOutOfRange(double lambda, double payoff)
        : Error("wager factor 1 + lambda*D <= 0 (lambda=" + std::to_string(lambda) + ", D=" + std::to_string(payoff) + ")") {}
};

// ---------------------------------------------------------------------------
// Per-threshold betting arithmetic
// ---------------------------------------------------------------------------

// Betting state for one candidate threshold. Wealth is kept as log K_t(u);
// the sums cover D_0..D_t with D_0 = 0.
struct ThresholdAccount {
    double log_wealth = 0.0;
    double sum_payoff = 0.0;
    double sum_payoff_sq = 0.0;
    double last_lambda = 0.0;

    friend bool operator==(const ThresholdAccount&, const ThresholdAccount&) = default;
};

// pi_t: 1 when U >= deployed threshold (ties go to the expensive model), rho_t otherwise.
constexpr double propensity(double uncertainty, double deployed, double rho_t) noexcept {
    return uncertainty >= deployed ? 1.0 : rho_t;
}

// Z_t(u) = (1 - rho_min) * (l / pi) * xi * 1{U < u}. The loss is ignored when xi = 0.
constexpr double ips_estimate(double loss, bool xi, double pi, double uncertainty, double u, double rho_min) noexcept {
    if (!xi || !(uncertainty < u)) return 0.0;
    return (1.0 - rho_min) * loss / pi;
}

// D_t(u) = eps - Z_t(u).
constexpr double ips_payoff(double loss, bool xi, double pi, double uncertainty, double u, double rho_min,
                            double epsilon) noexcept {
    return epsilon - ips_estimate(loss, xi, pi, uncertainty, u, rho_min);
}

// M_t = max{eps, (1 - rho_min)/rho_t - eps}; bounds |D_t| so that lambda <= c/M_t
// keeps 1 + lambda D >= 1 - c.
inline double payoff_scale(double epsilon, double rho_min, double rho_t) noexcept {
    return std::max(epsilon, (1.0 - rho_min) / rho_t - epsilon);
}

// Closed-form FTRL wager: sum D / (sum D^2 + 1), projected onto [0, c/M_t].
// The account must not yet contain D_t.
inline double adaptive_lambda(const ThresholdAccount& a, double scale, double cap) noexcept {
    const double raw = a.sum_payoff / (a.sum_payoff_sq + 1.0);
    return std::clamp(raw, 0.0, cap / scale);
}

inline void update_account(ThresholdAccount& a, double lambda, double payoff) {
    const double factor = lambda * payoff;
    if (!(1.0 + factor > 0.0)) throw WagerOutOfRange(lambda, payoff);
    a.log_wealth += std::log1p(factor);
    a.sum_payoff += payoff;
    a.sum_payoff_sq += payoff * payoff;
    a.last_lambda = lambda;
}

// ---------------------------------------------------------------------------
// Threshold selection
// ---------------------------------------------------------------------------

// Length of the longest prefix u(1..i) whose wealth all clears 1/alpha.
inline std::size_t fixed_sequence_prefix(std::span<const ThresholdAccount> accounts, double alpha) {
    const double bar = -std::log(alpha);
    std::size_t i = 0;
    while (i < accounts.size() && accounts[i].log_wealth >= bar) ++i;
    return i;
}

// Grid index chosen by fixed-sequence testing; 0 when no prefix qualifies.
inline std::size_t select_fixed_sequence_index(std::span<const ThresholdAccount> accounts, double alpha) {
    const std::size_t n = fixed_sequence_prefix(accounts, alpha);
    return n == 0 ? 0 : n - 1;
}

inline double select_fixed_sequence(std::span<const ThresholdAccount> accounts, double alpha,
                                    const ThresholdGrid& grid) {
    return grid[select_fixed_sequence_index(accounts, alpha)];
}

// Largest u with K(u) >= 1/(alpha nu(u)); no contiguity requirement.
inline std::size_t select_mixture_index(std::span<const ThresholdAccount> accounts, double alpha,
                                        const Prior& prior) {
    const double log_alpha = std::log(alpha);
    for (std::size_t i = accounts.size(); i-- > 0;) {
        if (accounts[i].log_wealth >= -(log_alpha + std::log(prior.mass[i]))) return i;
    }
    return 0;
}

inline double select_mixture(std::span<const ThresholdAccount> accounts, double alpha, const Prior& prior,
                             const ThresholdGrid& grid) {
    return grid[select_mixture_index(accounts, alpha, prior)];
}

// ---------------------------------------------------------------------------
// Routing mechanics shared by every method
// ---------------------------------------------------------------------------

enum class Route { Cheap, Expensive };

struct Decision {
    std::uint64_t t = 0;
    double rho = 0.0;
    double propensity = 1.0;
    bool xi = true;
    Route route = Route::Expensive;
    std::optional<double> observed_loss;
    double threshold_used = 0.0;
};

// A loss gate hands out l_t only for steps that invoked the expensive model.
template <class G>
concept LossGate = requires(G& g, std::uint64_t t, bool xi) {
    { g.reveal(t, xi) } -> std::convertible_to<double>;
};

// Gate backed by a known latent loss. stage() is called by the driver before
// each step; reveal() logs every access and refuses reads with xi = 0.
class RecordingLossGate {
public:
    void stage(std::uint64_t t, double latent_loss) noexcept {
        staged_t_ = t;
        staged_loss_ = latent_loss;
    }

    double reveal(std::uint64_t t, bool xi) {
        if (!xi) throw LossGateViolation(t);
        if (t != staged_t_) throw Error("loss gate asked for step " + std::to_string(t) + " but holds step " +
                                        std::to_string(staged_t_));
        access_log_.push_back(t);
        return staged_loss_;
    }

    const std::vector<std::uint64_t>& access_log() const noexcept { return access_log_; }

private:
    std::uint64_t staged_t_ = 0;
    double staged_loss_ = 0.0;
    std::vector<std::uint64_t> access_log_;
};

namespace detail {

inline void check_arrival(const Arrival& a, std::uint64_t steps_done) {
    if (a.index != steps_done + 1) throw OutOfOrderObservation(steps_done + 1, a.index);
    if (!(a.uncertainty >= 0.0 && a.uncertainty <= 1.0))
        throw InvalidObservation("uncertainty score outside [0,1] at step " + std::to_string(a.index));
}

// Propensity, coin and (gated) loss for one step. Exactly one coin value is
// consumed per step regardless of the branch.
template <LossGate G>
Decision route_step(const Arrival& a, double deployed, double rho_t, const CounterRng& coin, G& gate) {
    Decision d;
    d.t = a.index;
    d.rho = rho_t;
    d.threshold_used = deployed;
    d.propensity = propensity(a.uncertainty, deployed, rho_t);
    d.xi = coin.uniform(a.index) < d.propensity;
    d.route = d.xi ? Route::Expensive : Route::Cheap;
    if (d.xi) {
        const double l = gate.reveal(a.index, true);
        if (!(l >= 0.0 && l <= 1.0))
            throw InvalidObservation("loss outside [0,1] at step " + std::to_string(a.index));
        d.observed_loss = l;
    }
    return d;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// BettingRouter
// ---------------------------------------------------------------------------

/**
 * B-PAC router. Holds the deployed threshold u_{t-1}, one ThresholdAccount per
 * grid point and the coin stream. step() must be fed arrivals 1, 2, 3, ...
 *
 * Every wager lambda_t(u) is computed from the account before it absorbs
 * D_t(u), so lambda_t depends on steps 1..t-1 only. All candidates share the
 * deployed propensity pi_t.
 */
class BettingRouter {
public:
    explicit BettingRouter(ValidatedConfig config)
        : config_(std::move(config)),
          accounts_(config_->grid.size()),
          coin_(config_->seed, RngStream::Coin) {}

    template <LossGate G>
    Decision step(const Arrival& arrival, G& gate) {
        detail::check_arrival(arrival, t_);
        const RouterConfig& c = config_.get();
        const std::uint64_t t = arrival.index;
        const double rho_t = rho_at(c.schedule, t);
        const double rho_min = config_.rho_min();

        Decision d = detail::route_step(arrival, deployed(), rho_t, coin_, gate);

        const double scale = payoff_scale(c.epsilon, rho_min, rho_t);
        const double z = d.xi ? (1.0 - rho_min) * (*d.observed_loss) / d.propensity : 0.0;
        const auto grid = c.grid.values();
        const bool fixed = c.betting.kind == BettingKind::Fixed;
        for (std::size_t i = 0; i < accounts_.size(); ++i) {
            ThresholdAccount& acc = accounts_[i];
            const double lambda = fixed ? c.betting.fixed_lambda : adaptive_lambda(acc, scale, c.betting_cap);
            const double payoff = arrival.uncertainty < grid[i] ? c.epsilon - z : c.epsilon;
            update_account(acc, lambda, payoff);
        }

        deployed_index_ = c.selection_mode == SelectionMode::Mixture
                              ? select_mixture_index(accounts_, c.alpha, *c.prior)
                              : select_fixed_sequence_index(accounts_, c.alpha);
        t_ = t;
        return d;
    }

    double deployed() const noexcept { return config_->grid[deployed_index_]; }
    std::size_t deployed_index() const noexcept { return deployed_index_; }
    std::uint64_t steps() const noexcept { return t_; }
    std::span<const ThresholdAccount> accounts() const noexcept { return accounts_; }
    const ValidatedConfig& config() const noexcept { return config_; }

private:
    ValidatedConfig config_;
    std::vector<ThresholdAccount> accounts_;
    CounterRng coin_;
    std::uint64_t t_ = 0;
    std::size_t deployed_index_ = 0;
};

}  // namespace bpac
