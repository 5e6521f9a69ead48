// baselines.hpp
//
// Online comparison methods. Both reuse the engine's routing and coin
// machinery with a constant exploration probability; only the threshold
// rule differs.
#pragma once
#include "bpac/core.hpp"
#include "bpac/engine.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace bpac {

// ---------------------------------------------------------------------------
// O-Naive: unobserved losses count as zero.
// ---------------------------------------------------------------------------

struct NaiveState {
    std::vector<double> sums;  // sum of xi_i * l_i * 1{U_i < u} per grid point
    std::uint64_t t = 0;

    explicit NaiveState(std::size_t n = 0) : sums(n, 0.0) {}

    void absorb(double uncertainty, const Decision& d, const ThresholdGrid& grid) {
        ++t;
        if (!d.xi) return;
        const double l = *d.observed_loss;
        for (std::size_t i = 0; i < sums.size(); ++i)
            if (uncertainty < grid[i]) sums[i] += l;
    }

    double estimate(std::size_t i) const { return sums[i] / static_cast<double>(t); }
};

inline std::size_t naive_select_index(const NaiveState& s, double epsilon) {
    for (std::size_t i = s.sums.size(); i-- > 0;)
        if (s.estimate(i) <= epsilon) return i;
    return 0;
}

inline double naive_select(const NaiveState& s, double epsilon, const ThresholdGrid& grid) {
    return grid[naive_select_index(s, epsilon)];
}

// ---------------------------------------------------------------------------
// IPS+Hoeff: Hoeffding UCB on the IPS mean with alpha_t = 6 alpha / (pi^2 t^2).
// ---------------------------------------------------------------------------

enum class HoeffVariant {
    PerPoint,       // log(1/alpha_t)
    UnionOverGrid,  // log(N/alpha_t)
};

inline double hoeff_alpha_t(double alpha, std::uint64_t t) noexcept {
    const double tt = static_cast<double>(t);
    return 6.0 * alpha / (std::numbers::pi * std::numbers::pi * tt * tt);
}

struct HoeffState {
    std::vector<double> sums;  // sum of Z_i(u) with constant rho
    std::uint64_t t = 0;
    double rho = 0.05;
    HoeffVariant variant = HoeffVariant::PerPoint;

    HoeffState() = default;
    HoeffState(std::size_t n, double rho_, HoeffVariant v) : sums(n, 0.0), rho(rho_), variant(v) {}

    // Range of each Z_i: [0, (1 - rho)/rho].
    double range() const noexcept { return (1.0 - rho) / rho; }

    void absorb(double uncertainty, const Decision& d, const ThresholdGrid& grid) {
        ++t;
        if (!d.xi) return;
        const double z = (1.0 - rho) * (*d.observed_loss) / d.propensity;
        for (std::size_t i = 0; i < sums.size(); ++i)
            if (uncertainty < grid[i]) sums[i] += z;
    }

    double slack(double alpha) const {
        const double n = variant == HoeffVariant::UnionOverGrid ? static_cast<double>(sums.size()) : 1.0;
        return range() * std::sqrt(std::log(n / hoeff_alpha_t(alpha, t)) / (2.0 * static_cast<double>(t)));
    }

    double upper_bound(std::size_t i, double alpha) const {
        return sums[i] / static_cast<double>(t) + slack(alpha);
    }
};

inline std::size_t hoeff_select_index(const HoeffState& s, double epsilon, double alpha) {
    const double slack = s.slack(alpha);
    for (std::size_t i = s.sums.size(); i-- > 0;)
        if (s.sums[i] / static_cast<double>(s.t) + slack <= epsilon) return i;
    return 0;
}

inline double hoeff_select(const HoeffState& s, double epsilon, double alpha, const ThresholdGrid& grid) {
    return grid[hoeff_select_index(s, epsilon, alpha)];
}

// ---------------------------------------------------------------------------
// Routers
// ---------------------------------------------------------------------------

// Baselines run with rho fixed at the schedule's infimum (rho_deploy for the
// two-stage schedule).
class NaiveRouter {
public:
    explicit NaiveRouter(ValidatedConfig config)
        : config_(std::move(config)), state_(config_->grid.size()), coin_(config_->seed, RngStream::Coin) {}

    template <LossGate G>
    Decision step(const Arrival& arrival, G& gate) {
        detail::check_arrival(arrival, state_.t);
        Decision d = detail::route_step(arrival, deployed(), config_.rho_min(), coin_, gate);
        state_.absorb(arrival.uncertainty, d, config_->grid);
        deployed_index_ = naive_select_index(state_, config_->epsilon);
        return d;
    }

    double deployed() const noexcept { return config_->grid[deployed_index_]; }
    std::size_t deployed_index() const noexcept { return deployed_index_; }
    std::uint64_t steps() const noexcept { return state_.t; }
    const NaiveState& state() const noexcept { return state_; }

private:
    ValidatedConfig config_;
    NaiveState state_;
    CounterRng coin_;
    std::size_t deployed_index_ = 0;
};

class HoeffRouter {
public:
    explicit HoeffRouter(ValidatedConfig config, HoeffVariant variant = HoeffVariant::PerPoint)
        : config_(std::move(config)),
          state_(config_->grid.size(), config_.rho_min(), variant),
          coin_(config_->seed, RngStream::Coin) {}

    template <LossGate G>
    Decision step(const Arrival& arrival, G& gate) {
        detail::check_arrival(arrival, state_.t);
        Decision d = detail::route_step(arrival, deployed(), state_.rho, coin_, gate);
        state_.absorb(arrival.uncertainty, d, config_->grid);
        deployed_index_ = hoeff_select_index(state_, config_->epsilon, config_->alpha);
        return d;
    }

    double deployed() const noexcept { return config_->grid[deployed_index_]; }
    std::size_t deployed_index() const noexcept { return deployed_index_; }
    std::uint64_t steps() const noexcept { return state_.t; }
    const HoeffState& state() const noexcept { return state_; }

private:
    ValidatedConfig config_;
    HoeffState state_;
    CounterRng coin_;
    std::size_t deployed_index_ = 0;
};

}  // namespace bpac
