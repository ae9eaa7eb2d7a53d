#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "esi/rng.hpp"

using esi::CounterRng;
using esi::detail::philox4x32_10;

// Known-answer vectors published with the Random123 reference implementation.
TEST(Philox, KnownAnswerZero) {
    const auto r = philox4x32_10({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(r, (std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
}

TEST(Philox, KnownAnswerAllOnes) {
    const auto r = philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
    EXPECT_EQ(r, (std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
}

TEST(Philox, KnownAnswerPiDigits) {
    const auto r =
        philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
    EXPECT_EQ(r, (std::array<std::uint32_t, 4>{0xd16cfe09u, 0x94fdcceb, 0x5001e420u, 0x24126ea1u}));
}

TEST(CounterRng, SameSeedSameSequence) {
    CounterRng a(42, 3), b(42, 3);
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u32(), b.next_u32());
}

TEST(CounterRng, SubstreamsDiffer) {
    auto a = CounterRng::substream(42, 0);
    auto b = CounterRng::substream(42, 1);
    int equal = 0;
    for (int i = 0; i < 1000; ++i) equal += a.next_u32() == b.next_u32();
    EXPECT_LT(equal, 3);
}

TEST(CounterRng, FirstWordsAreThePhiloxBlock) {
    CounterRng r(0, 0);
    const auto block = philox4x32_10({0, 0, 0, 0}, {0, 0});
    for (auto w : block) EXPECT_EQ(r.next_u32(), w);
}

TEST(CounterRng, UniformMeanAndRange) {
    CounterRng r(7);
    const int n = 200000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        s += u;
    }
    EXPECT_NEAR(s / n, 0.5, 5.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST(CounterRng, BernoulliFrequency) {
    CounterRng r(11);
    const int n = 1000000;
    int hits = 0;
    for (int i = 0; i < n; ++i) hits += r.bernoulli(0.75);
    EXPECT_NEAR(static_cast<double>(hits) / n, 0.75, 5.0 * std::sqrt(0.75 * 0.25 / n));
}

TEST(CounterRng, GeometricMean) {
    CounterRng r(5);
    const int n = 100000;
    const double q = 0.1;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += static_cast<double>(r.geometric(q));
    const double sd = std::sqrt((1.0 - q) / (q * q));
    EXPECT_NEAR(s / n, 10.0, 5.0 * sd / std::sqrt(n));
    EXPECT_EQ(r.geometric(1.0), 1u);
    EXPECT_THROW(r.geometric(0.0), std::invalid_argument);
}

TEST(CounterRng, NormalMoments) {
    CounterRng r(9);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal(1.0, 2.0);
        s += x;
        s2 += x * x;
    }
    const double mean = s / n;
    EXPECT_NEAR(mean, 1.0, 5.0 * 2.0 / std::sqrt(n));
    EXPECT_NEAR(s2 / n - mean * mean, 4.0, 0.1);
}

TEST(CounterRng, CategoricalFrequencies) {
    CounterRng r(13);
    const std::vector<double> w{1.0, 0.0, 3.0};
    std::vector<int> c(3, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++c[r.categorical(w)];
    EXPECT_EQ(c[1], 0);
    EXPECT_NEAR(static_cast<double>(c[2]) / n, 0.75, 5.0 * std::sqrt(0.75 * 0.25 / n));
    EXPECT_THROW(r.categorical(std::vector<double>{0.0, 0.0}), std::invalid_argument);
}

TEST(CounterRng, PoissonMean) {
    CounterRng r(17);
    const int n = 100000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += static_cast<double>(r.poisson(2.5));
    EXPECT_NEAR(s / n, 2.5, 5.0 * std::sqrt(2.5 / n));
}
