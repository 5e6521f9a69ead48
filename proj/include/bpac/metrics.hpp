// metrics.hpp
//
// Running efficiency and safety metrics: expert call percentage (ECP),
// token percentage (TP) and empirical risk (ER). All are reported as
// fractions in [0,1] rather than percentages.
#pragma once
#include "bpac/core.hpp"
#include "bpac/engine.hpp"

#include <cstdint>
#include <optional>

namespace bpac {

class TokenDivisionByZero : public Error {
public:
    TokenDivisionByZero() : Error("token percentage undefined: no expensive-model tokens recorded") {}
};

struct MetricAccumulator {
    std::uint64_t t = 0;
    std::uint64_t expert_calls = 0;
    double tokens_cheap = 0.0;          // sum of h~_i
    double tokens_expensive_used = 0.0; // sum of h_i * xi_i
    double tokens_expensive = 0.0;      // sum of h_i
    double realized_loss = 0.0;         // sum of (1 - xi_i) * l_i
    double latent_loss = 0.0;           // sum of l_i

    // latent_loss comes from the evaluator channel, never from the router's gate.
    void update(const Decision& d, const Arrival& a, double latent) {
        ++t;
        const auto h_cheap = static_cast<double>(a.tokens_cheap);
        const auto h_exp = static_cast<double>(a.tokens_expensive);
        tokens_cheap += h_cheap;
        tokens_expensive += h_exp;
        latent_loss += latent;
        if (d.xi) {
            ++expert_calls;
            tokens_expensive_used += h_exp;
        } else {
            realized_loss += latent;
        }
    }

    std::optional<double> ecp() const {
        if (t == 0) return std::nullopt;
        return static_cast<double>(expert_calls) / static_cast<double>(t);
    }

    std::optional<double> er() const {
        if (t == 0) return std::nullopt;
        return realized_loss / static_cast<double>(t);
    }

    // Mean latent loss: the ER an all-cheap deployment would incur.
    std::optional<double> latent_mean() const {
        if (t == 0) return std::nullopt;
        return latent_loss / static_cast<double>(t);
    }

    std::optional<double> tp() const {
        if (!(tokens_expensive > 0.0)) return std::nullopt;
        return (tokens_cheap + tokens_expensive_used) / tokens_expensive;
    }

    double tp_or_throw() const {
        auto v = tp();
        if (!v) throw TokenDivisionByZero();
        return *v;
    }

    // Combine accumulators over disjoint step ranges.
    MetricAccumulator& merge(const MetricAccumulator& o) {
        t += o.t;
        expert_calls += o.expert_calls;
        tokens_cheap += o.tokens_cheap;
        tokens_expensive_used += o.tokens_expensive_used;
        tokens_expensive += o.tokens_expensive;
        realized_loss += o.realized_loss;
        latent_loss += o.latent_loss;
        return *this;
    }
};

}  // namespace bpac
