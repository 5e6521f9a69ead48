// harness.hpp
//
// Replication driver, evaluator-side risk tracking, Monte Carlo safety
// coverage and the regret replay for the adaptive wager.
#pragma once
#include "bpac/baselines.hpp"
#include "bpac/core.hpp"
#include "bpac/engine.hpp"
#include "bpac/metrics.hpp"
#include "bpac/simulation.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace bpac {

enum class Method { BPac, ONaive, IpsHoeff };

inline std::string_view to_string(Method m) noexcept {
    switch (m) {
        case Method::BPac: return "BPac";
        case Method::ONaive: return "ONaive";
        case Method::IpsHoeff: return "IpsHoeff";
    }
    return "Unknown";
}

// Accepts the canonical names plus the hyphenated spellings (b-pac, o-naive, ips+hoeff).
inline std::optional<Method> parse_method(std::string_view name) {
    std::string key;
    for (char ch : name)
        if (std::isalnum(static_cast<unsigned char>(ch))) key += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (key == "bpac") return Method::BPac;
    if (key == "onaive" || key == "naive") return Method::ONaive;
    if (key == "ipshoeff" || key == "hoeff") return Method::IpsHoeff;
    return std::nullopt;
}

// Calls f with a freshly constructed router for the method.
template <class F>
decltype(auto) with_router(Method m, const ValidatedConfig& config, HoeffVariant variant, F&& f) {
    switch (m) {
        case Method::ONaive: {
            NaiveRouter r(config);
            return f(r);
        }
        case Method::IpsHoeff: {
            HoeffRouter r(config, variant);
            return f(r);
        }
        case Method::BPac:
        default: {
            BettingRouter r(config);
            return f(r);
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluator-side risk
// ---------------------------------------------------------------------------

/**
 * Tracks the risk of the deployed threshold using oracle knowledge the
 * router never sees.
 *
 * i.i.d. spec: R(u) = (1 - rho_min) E[l 1{U < u}].
 * Non-stationary spec: per-step conditional risk r_j(u) = (1 - rho_min) E_j[l 1{U < u}]
 * where E_j is the law of the segment active at step j, and
 *   L_t(u) = sum_j lambda_j(u) r_j(u) / sum_j lambda_j(u)   (0 while no wager was placed),
 * alongside the unweighted average (1/t) sum_j r_j(u).
 */
class RiskEvaluator {
public:
    RiskEvaluator(const SyntheticStreamSpec& spec, const ThresholdGrid& grid, double rho_min)
        : spec_(spec),
          coefficient_(1.0 - rho_min),
          table_(partial_risk_table(spec, grid)),
          lambda_sum_(spec.stationary() ? 0 : grid.size(), 0.0),
          weighted_sum_(spec.stationary() ? 0 : grid.size(), 0.0),
          plain_sum_(spec.stationary() ? 0 : grid.size(), 0.0) {}

    bool stationary() const noexcept { return spec_.stationary(); }

    // Absorbs step t. accounts is empty for methods that place no wagers.
    void observe(std::uint64_t t, std::span<const ThresholdAccount> accounts) {
        t_ = t;
        if (stationary()) return;
        const auto& row = table_[spec_.segment_at(t)];
        for (std::size_t i = 0; i < row.size(); ++i) {
            const double r = coefficient_ * row[i];
            plain_sum_[i] += r;
            if (!accounts.empty()) {
                lambda_sum_[i] += accounts[i].last_lambda;
                weighted_sum_[i] += accounts[i].last_lambda * r;
            }
        }
        weighted_ = !accounts.empty();
    }

    double deployment_risk(std::size_t i) const { return coefficient_ * table_.front()[i]; }

    // Quantity the safety guarantee controls at grid index i.
    double controlled_risk(std::size_t i) const {
        if (stationary()) return deployment_risk(i);
        if (!weighted_) return unweighted_risk(i);
        return lambda_sum_[i] > 0.0 ? weighted_sum_[i] / lambda_sum_[i] : 0.0;
    }

    double unweighted_risk(std::size_t i) const {
        if (stationary()) return deployment_risk(i);
        return t_ == 0 ? 0.0 : plain_sum_[i] / static_cast<double>(t_);
    }

private:
    SyntheticStreamSpec spec_;
    double coefficient_;
    std::vector<std::vector<double>> table_;
    std::vector<double> lambda_sum_, weighted_sum_, plain_sum_;
    std::uint64_t t_ = 0;
    bool weighted_ = false;
};

// ---------------------------------------------------------------------------
// Replications
// ---------------------------------------------------------------------------

struct StepRecord {
    std::uint64_t t = 0;
    double uncertainty = 0.0;
    double rho = 0.0;
    double propensity = 1.0;
    bool xi = true;
    double threshold_used = 0.0;
    double u_hat = 0.0;
    double latent_loss = 0.0;
    double realized_loss = 0.0;
    double ecp = 0.0;
    std::optional<double> tp;
    double er = 0.0;
    std::optional<double> risk;             // R(u_hat) or L_t(u_hat); absent without an oracle
    std::optional<double> unweighted_risk;  // plain conditional-risk average at u_hat
};

struct WealthSnapshot {
    std::uint64_t t = 0;
    std::vector<double> log_wealth;
};

struct Trajectory {
    Method method = Method::BPac;
    std::uint64_t seed = 0;
    std::vector<StepRecord> steps;
    std::vector<WealthSnapshot> wealth;
    MetricAccumulator metrics;
    std::vector<std::uint64_t> loss_access_log;
    double final_u_hat = 0.0;
    bool violated = false;                 // some t had risk(u_hat_t) > eps
    std::optional<std::uint64_t> first_violation;
};

struct RunOptions {
    std::uint64_t emit_wealth_every = 0;  // 0 disables snapshots
    bool keep_steps = true;
    HoeffVariant hoeff_variant = HoeffVariant::PerPoint;
};

namespace detail {

template <class Router>
std::span<const ThresholdAccount> accounts_of(const Router& r) {
    if constexpr (requires { r.accounts(); })
        return r.accounts();
    else
        return {};
}

}  // namespace detail

// Drives any router over observations 1..horizon. observation(t) returns a
// StreamObservation; evaluator may be null when no oracle is available.
template <class ObservationFn>
Trajectory run_stream(Method method, const ValidatedConfig& config, std::uint64_t horizon, ObservationFn&& observation,
                      RiskEvaluator* evaluator, const RunOptions& options = {}) {
    Trajectory traj;
    traj.method = method;
    traj.seed = config->seed;
    if (options.keep_steps) traj.steps.reserve(static_cast<std::size_t>(horizon));
    const double eps = config->epsilon;

    with_router(method, config, options.hoeff_variant, [&](auto& router) {
        RecordingLossGate gate;
        for (std::uint64_t t = 1; t <= horizon; ++t) {
            const StreamObservation obs = observation(t);
            gate.stage(t, obs.latent_loss);
            const Arrival arrival = obs.arrival();
            const Decision d = router.step(arrival, gate);
            traj.metrics.update(d, arrival, obs.latent_loss);

            const auto accounts = detail::accounts_of(router);
            std::optional<double> risk, plain;
            if (evaluator) {
                evaluator->observe(t, accounts);
                risk = evaluator->controlled_risk(router.deployed_index());
                plain = evaluator->unweighted_risk(router.deployed_index());
                if (*risk > eps && !traj.violated) {
                    traj.violated = true;
                    traj.first_violation = t;
                }
            }
            if (options.keep_steps) {
                StepRecord rec;
                rec.t = t;
                rec.uncertainty = arrival.uncertainty;
                rec.rho = d.rho;
                rec.propensity = d.propensity;
                rec.xi = d.xi;
                rec.threshold_used = d.threshold_used;
                rec.u_hat = router.deployed();
                rec.latent_loss = obs.latent_loss;
                rec.realized_loss = d.xi ? 0.0 : obs.latent_loss;
                rec.ecp = *traj.metrics.ecp();
                rec.tp = traj.metrics.tp();
                rec.er = *traj.metrics.er();
                rec.risk = risk;
                rec.unweighted_risk = plain;
                traj.steps.push_back(std::move(rec));
            }
            if (options.emit_wealth_every > 0 && !accounts.empty() && t % options.emit_wealth_every == 0) {
                WealthSnapshot snap{t, {}};
                snap.log_wealth.reserve(accounts.size());
                for (const auto& a : accounts) snap.log_wealth.push_back(a.log_wealth);
                traj.wealth.push_back(std::move(snap));
            }
        }
        traj.final_u_hat = router.deployed();
        traj.loss_access_log = gate.access_log();
    });
    return traj;
}

// One replication on a synthetic stream: the router and the stream share the seed.
inline Trajectory run_replication(Method method, const ValidatedConfig& config, const SyntheticStreamSpec& spec,
                                  std::uint64_t horizon, std::uint64_t seed, const RunOptions& options = {}) {
    const ValidatedConfig seeded = config.with_seed(seed);
    const StreamSource source(spec, seed);
    RiskEvaluator evaluator(spec, config->grid, config.rho_min());
    return run_stream(method, seeded, horizon, [&](std::uint64_t t) { return source.at(t); }, &evaluator, options);
}

// ---------------------------------------------------------------------------
// Parallel fan-out
// ---------------------------------------------------------------------------

// Worker count: BPAC_THREADS when set, else hardware concurrency.
inline unsigned worker_count(std::size_t jobs) {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("BPAC_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) n = static_cast<unsigned>(v);
    }
    return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

// Runs job(i) for i in [0, n). Results must be written by index so the
// outcome does not depend on scheduling. The first exception is rethrown.
template <class Job>
void parallel_for(std::size_t n, Job&& job) {
    const unsigned workers = worker_count(n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    job(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Monte Carlo safety coverage
// ---------------------------------------------------------------------------

struct CoverageReport {
    Method method = Method::BPac;
    std::size_t n_reps = 0;
    std::uint64_t horizon = 0;
    std::size_t violations = 0;
    double frequency = 0.0;
    double ci_low = 0.0;   // 95% Clopper-Pearson
    double ci_high = 1.0;
};

// Two-sided Clopper-Pearson interval for k successes out of n.
inline std::pair<double, double> clopper_pearson(std::size_t k, std::size_t n, double level = 0.95) {
    if (n == 0) return {0.0, 1.0};
    const double a = (1.0 - level) / 2.0;
    const double kk = static_cast<double>(k), nn = static_cast<double>(n);
    const double lo = k == 0 ? 0.0 : boost::math::ibeta_inv(kk, nn - kk + 1.0, a);
    const double hi = k == n ? 1.0 : boost::math::ibeta_inv(kk + 1.0, nn - kk, 1.0 - a);
    return {lo, hi};
}

// Fraction of replications in which the deployed threshold's risk exceeded
// eps at any step t <= horizon. Replication r uses seed base_seed + r.
inline CoverageReport mc_safety(Method method, const ValidatedConfig& config, const SyntheticStreamSpec& spec,
                                std::uint64_t horizon, std::size_t n_reps, std::uint64_t base_seed = 0,
                                HoeffVariant variant = HoeffVariant::PerPoint) {
    std::vector<char> violated(n_reps, 0);
    RunOptions opts;
    opts.keep_steps = false;
    opts.hoeff_variant = variant;
    parallel_for(n_reps, [&](std::size_t r) {
        violated[r] = run_replication(method, config, spec, horizon, base_seed + r, opts).violated ? 1 : 0;
    });
    CoverageReport rep;
    rep.method = method;
    rep.n_reps = n_reps;
    rep.horizon = horizon;
    for (char v : violated) rep.violations += static_cast<std::size_t>(v);
    rep.frequency = n_reps ? static_cast<double>(rep.violations) / static_cast<double>(n_reps) : 0.0;
    std::tie(rep.ci_low, rep.ci_high) = clopper_pearson(rep.violations, n_reps);
    return rep;
}

// ---------------------------------------------------------------------------
// Single-threshold probes
// ---------------------------------------------------------------------------

// Payoffs D_1(u)..D_T(u) and wealth path at one grid index, from a B-PAC run.
struct ThresholdProbe {
    std::vector<double> payoffs;
    std::vector<double> log_wealth;
};

inline ThresholdProbe probe_threshold(const ValidatedConfig& config, const SyntheticStreamSpec& spec,
                                      std::uint64_t horizon, std::uint64_t seed, std::size_t grid_index) {
    const ValidatedConfig seeded = config.with_seed(seed);
    const StreamSource source(spec, seed);
    BettingRouter router(seeded);
    RecordingLossGate gate;
    ThresholdProbe probe;
    probe.payoffs.reserve(static_cast<std::size_t>(horizon));
    probe.log_wealth.reserve(static_cast<std::size_t>(horizon));
    double prev = 0.0;
    for (std::uint64_t t = 1; t <= horizon; ++t) {
        const StreamObservation obs = source.at(t);
        gate.stage(t, obs.latent_loss);
        router.step(obs.arrival(), gate);
        const ThresholdAccount& a = router.accounts()[grid_index];
        probe.payoffs.push_back(a.sum_payoff - prev);
        prev = a.sum_payoff;
        probe.log_wealth.push_back(a.log_wealth);
    }
    return probe;
}

// ---------------------------------------------------------------------------
// Regret of the adaptive wager against the best fixed wager in hindsight
// ---------------------------------------------------------------------------

struct RegretReport {
    std::size_t horizon = 0;
    double online = 0.0;       // sum_t g_t(lambda_t)
    double oracle = 0.0;       // sum_t g_t(lambda*_T)
    double regret = 0.0;       // oracle - online
    double lambda_star = 0.0;
    double bound = 0.0;        // explicit logarithmic bound
};

// g_t(lambda) = lambda D_t - lambda^2 D_t^2 / 2.
constexpr double quadratic_proxy(double lambda, double payoff) noexcept {
    return lambda * payoff - 0.5 * lambda * lambda * payoff * payoff;
}

// beta c^2/(2M^2) + (1+c)^2 M^2 / (2 beta log(1 + M^2/beta)) * log(T M^2/beta + 1),
// M = max{eps, (1 - rho_min)/rho_min - eps}.
inline double regret_bound(std::size_t horizon, double cap, double epsilon, double rho_min, double beta = 1.0) {
    const double m = payoff_scale(epsilon, rho_min, rho_min);
    const double m2 = m * m;
    return beta * cap * cap / (2.0 * m2) +
           (1.0 + cap) * (1.0 + cap) * m2 / (2.0 * beta * std::log1p(m2 / beta)) *
               std::log(static_cast<double>(horizon) * m2 / beta + 1.0);
}

// Replays the FTRL wager over a payoff stream and compares against
// lambda*_T found by dense grid search over [0, c/M_T].
inline RegretReport regret_harness(std::span<const double> payoffs, double cap, double epsilon,
                                   const ExplorationSchedule& schedule, double beta = 1.0,
                                   std::size_t search_points = 20001) {
    RegretReport rep;
    rep.horizon = payoffs.size();
    const double rho_min = schedule.declared_infimum;
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t k = 0; k < payoffs.size(); ++k) {
        const auto t = static_cast<std::uint64_t>(k + 1);
        const double scale = payoff_scale(epsilon, rho_min, rho_at(schedule, t));
        const double lambda = std::clamp(sum / (sum_sq + beta), 0.0, cap / scale);
        rep.online += quadratic_proxy(lambda, payoffs[k]);
        sum += payoffs[k];
        sum_sq += payoffs[k] * payoffs[k];
    }
    if (payoffs.empty()) return rep;

    // sum_t g_t(lambda) = lambda sum D - lambda^2 sum D^2 / 2
    const double hi = cap / payoff_scale(epsilon, rho_min, rho_at(schedule, payoffs.size()));
    double best = 0.0, best_lambda = 0.0;
    for (std::size_t j = 0; j < search_points; ++j) {
        const double lambda = hi * static_cast<double>(j) / static_cast<double>(search_points - 1);
        const double total = lambda * sum - 0.5 * lambda * lambda * sum_sq;
        if (j == 0 || total > best) {
            best = total;
            best_lambda = lambda;
        }
    }
    rep.oracle = best;
    rep.lambda_star = best_lambda;
    rep.regret = rep.oracle - rep.online;
    rep.bound = regret_bound(payoffs.size(), cap, epsilon, rho_min, beta);
    return rep;
}

}  // namespace bpac
