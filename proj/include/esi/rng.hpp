/**
 * @file rng.hpp
 * @brief Counter-based random streams (Philox4x32-10) for reproducible Monte Carlo.
 *
 * Every stream is identified by a 64-bit key (master seed) and a 64-bit
 * stream index. The i-th 128-bit block of a stream is
 *
 *     Philox4x32_10(counter = {i_lo, i_hi, stream_lo, stream_hi}, key = {seed_lo, seed_hi})
 *
 * so any block of any stream can be regenerated without replaying the ones
 * before it. Derived scalar variates use only integer arithmetic and libm
 * calls (log, sqrt, cos), which keeps sequences identical across platforms
 * with IEEE doubles.
 */
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>

namespace esi {

namespace detail {

inline constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
inline constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
inline constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline constexpr std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                                            std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kPhiloxW0;
        key[1] += kPhiloxW1;
    }
    return ctr;
}

}  // namespace detail

/// Philox4x32-10 stream. Cheap to copy; copies continue independently.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed = 0, std::uint64_t stream = 0) noexcept
        : seed_(seed), stream_(stream) {}

    /// Independent substream `index` of master `seed` (e.g. one per slot block or trial).
    static CounterRng substream(std::uint64_t seed, std::uint64_t index) noexcept {
        return CounterRng(seed, index);
    }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }

    std::uint32_t next_u32() noexcept {
        if (lane_ == 4) refill();
        return buffer_[lane_++];
    }

    std::uint64_t next_u64() noexcept {
        const std::uint64_t hi = next_u32();
        const std::uint64_t lo = next_u32();
        return (hi << 32) | lo;
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in (0, 1].
    double uniform_open0() noexcept { return 1.0 - uniform(); }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    /// Standard normal via Box-Muller (one variate per call, no caching).
    double normal(double mean = 0.0, double stddev = 1.0) noexcept {
        const double u1 = uniform_open0();
        const double u2 = uniform();
        return mean + stddev * std::sqrt(-2.0 * std::log(u1)) *
                          std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Number of Bernoulli(q) trials up to and including the first success.
    std::uint64_t geometric(double q) {
        if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("geometric: q must be in (0, 1]");
        if (q == 1.0) return 1;
        const double u = uniform_open0();
        return 1 + static_cast<std::uint64_t>(std::floor(std::log(u) / std::log1p(-q)));
    }

    /// Poisson variate by sequential inversion; intended for small means.
    std::uint64_t poisson(double mean) {
        if (mean < 0.0) throw std::invalid_argument("poisson: negative mean");
        double p = std::exp(-mean);
        double cdf = p;
        const double u = uniform();
        std::uint64_t k = 0;
        while (u >= cdf && k < 1000) {
            ++k;
            p *= mean / static_cast<double>(k);
            cdf += p;
        }
        return k;
    }

    /// Index drawn from non-negative weights (need not be normalized).
    std::size_t categorical(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        if (!(total > 0.0)) throw std::invalid_argument("categorical: weights sum to zero");
        const double u = uniform() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            acc += weights[i];
            if (u < acc) return i;
        }
        // Rounding: land on the last non-zero weight.
        for (std::size_t i = weights.size(); i-- > 0;)
            if (weights[i] > 0.0) return i;
        return weights.size() - 1;
    }

private:
    void refill() noexcept {
        const std::array<std::uint32_t, 4> ctr{
            static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
            static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
        const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(seed_),
                                               static_cast<std::uint32_t>(seed_ >> 32)};
        buffer_ = detail::philox4x32_10(ctr, key);
        ++block_;
        lane_ = 0;
    }

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int lane_ = 4;
};

}  // namespace esi
