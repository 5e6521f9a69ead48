// rng.hpp
#pragma once
#include <cstdint>

namespace bpac {

// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Independent sub-streams carved out of one seed. A draw is addressed by
// (seed, stream, counter), so replication r / step t never depends on the
// order in which other draws were made.
enum class RngStream : std::uint64_t {
    Coin = 1,
    Uncertainty = 2,
    Loss = 3,
    TokensCheap = 4,
    TokensExpensive = 5,
};

/**
 * Counter-based generator: value(counter) is a pure function of
 * (seed, stream, counter). There is no hidden state to advance, which keeps
 * trajectories reproducible across thread schedules and across methods that
 * share a seed.
 */
class CounterRng {
public:
    constexpr CounterRng(std::uint64_t seed, RngStream stream) noexcept
        : key_(mix64(mix64(seed) ^ (static_cast<std::uint64_t>(stream) * 0xD1B54A32D192ED03ull))) {}

    constexpr std::uint64_t bits(std::uint64_t counter) const noexcept {
        return mix64(key_ ^ mix64(counter));
    }

    // Uniform on [0, 1) with 53 bits of resolution.
    constexpr double uniform(std::uint64_t counter) const noexcept {
        return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
    }

    // Uniform integer on [lo, hi] (inclusive). Modulo bias is below 2^-40 for
    // the ranges used here (token counts).
    constexpr std::uint64_t uniform_int(std::uint64_t counter, std::uint64_t lo, std::uint64_t hi) const noexcept {
        const std::uint64_t span = hi - lo + 1;
        return span == 0 ? bits(counter) : lo + bits(counter) % span;
    }

    constexpr std::uint64_t key() const noexcept { return key_; }

private:
    std::uint64_t key_;
};

}  // namespace bpac
