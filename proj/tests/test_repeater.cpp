#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "esi/oracle.hpp"
#include "esi/repeater.hpp"

using namespace esi::repeater;
using Complex = std::complex<double>;

namespace {
const double kPi = std::numbers::pi;
}

TEST(PairState, FidelityExamples) {
    EXPECT_NEAR(fidelity_to_target(to_density(EntangledPairState::ideal())), 1.0, 1e-15);
    EXPECT_NEAR(fidelity_to_target(to_density(EntangledPairState::vacuum())), 0.0, 1e-15);
    EXPECT_NEAR(fidelity_to_target(to_density({0.0, 1.0, 0.0, 0.0, 0.0})), 0.5, 1e-15);
    const EntangledPairState p{0.2, 0.7, 0.6, 0.9, 0.1};
    EXPECT_NEAR(fidelity_to_target(to_density(p)), p.fidelity(), 1e-14);
    EXPECT_THROW(to_density({0.5, 0.6, 1.0, 0.0, 0.0}), std::invalid_argument);
}

TEST(PairState, DensityRoundTrip) {
    const EntangledPairState p{0.1, 0.6, 0.8, -1.2, 0.3};
    const auto back = from_density(to_density(p));
    EXPECT_NEAR(back.pair.w0, p.w0, 1e-15);
    EXPECT_NEAR(back.pair.w1, p.w1, 1e-15);
    EXPECT_NEAR(back.pair.c, p.c, 1e-14);
    EXPECT_NEAR(back.pair.psi, p.psi, 1e-14);
    EXPECT_NEAR(back.off_form, 0.0, 1e-15);
}

TEST(Transmit, LosslessIsIdentity) {
    const auto out = transmit_pair(EntangledPairState::ideal(), LinkModel{});
    EXPECT_NEAR(out.w1, 1.0, 1e-15);
    EXPECT_NEAR(out.c, 1.0, 1e-15);
}

TEST(Transmit, LossGrowsVacuumOnly) {
    const auto link = LinkModel::fiber(25.0);  // 5 dB
    const double eta = std::pow(10.0, -0.5);
    EXPECT_NEAR(link.transmission(), eta, 1e-15);
    const auto out = transmit_pair(EntangledPairState::ideal(), link);
    EXPECT_NEAR(out.w0, 1.0 - eta, 1e-14);
    EXPECT_NEAR(out.w1, eta, 1e-14);
    EXPECT_NEAR(out.c, 1.0, 1e-12);
    EXPECT_NEAR(LinkModel::satellite().transmission(), 0.01, 1e-15);
}

TEST(Transmit, PhaseNoiseAnalyticAndSampled) {
    LinkModel link;
    link.phase_noise_sigma = 0.5;
    EXPECT_NEAR(transmit_pair(EntangledPairState::ideal(), link).c, std::exp(-0.125), 1e-14);
    esi::CounterRng rng(21);
    Complex mean{};
    const int n = 200000;
    for (int k = 0; k < n; ++k) {
        const auto p = transmit_pair(EntangledPairState::ideal(), link, &rng);
        mean += std::polar(p.c, p.psi);
    }
    mean /= static_cast<double>(n);
    // Each sample has |.| = 1, so the real part has variance below 1/2.
    EXPECT_NEAR(mean.real(), std::exp(-0.125), 5.0 * std::sqrt(0.5 / n));
    EXPECT_NEAR(mean.imag(), 0.0, 5.0 * std::sqrt(0.5 / n));
}

TEST(Heralded, AttemptsToSuccess) {
    EXPECT_EQ(heralded_generate(1.0), 1.0);
    esi::CounterRng rng(4);
    for (int k = 0; k < 10; ++k) EXPECT_EQ(heralded_generate(1.0, &rng), 1.0);
    const int n = 100000;
    double s = 0.0;
    for (int k = 0; k < n; ++k) s += heralded_generate(0.1, &rng);
    EXPECT_NEAR(s / n, 10.0, 5.0 * std::sqrt(0.9 / 0.01 / n));
    EXPECT_NEAR(LinkModel::fiber(50.0).transmission(), 0.1, 1e-15);
    EXPECT_THROW(heralded_generate(0.0), std::invalid_argument);
}

TEST(Sscg, AgreesWithStateVectorOracle) {
    const auto grid = esi::oracle::pair_grid();
    for (const auto& a : grid)
        for (const auto& b : grid) {
            for (double t1 : {0.15, 0.3}) {
                const auto h = sscg_distill(a, b, t1, 1.0 - t1);
                const auto o = esi::oracle::sscg_oracle(a, b, t1, 1.0 - t1);
                EXPECT_NEAR(h.p_success, o.p_success, 1e-12);
                EXPECT_LT(esi::oracle::state_distance(h.output, o), 1e-12);
                EXPECT_LT(h.off_form, 1e-12);
            }
        }
}

TEST(Sscg, PerfectPairsStayNearlyPerfect) {
    const auto h = sscg_distill(EntangledPairState::ideal(), EntangledPairState::ideal());
    EXPECT_GT(h.p_success, 0.0);
    EXPECT_LT(h.p_success, 1.0);  // both monitors firing is discarded
    EXPECT_NEAR(h.output.w1, 1.0, 1e-12);
    EXPECT_GT(h.output.fidelity(), 0.999);
    // The default setting sits near the optimum for ideal inputs.
    const double t = optimal_sscg_transmissivity(EntangledPairState::ideal(), EntangledPairState::ideal());
    EXPECT_NEAR(t, 0.15, 0.05);
    EXPECT_GE(sscg_distill(EntangledPairState::ideal(), EntangledPairState::ideal(), t, 1.0 - t).output.fidelity(),
              h.output.fidelity() - 1e-12);
}

TEST(Swap, PerfectPairs) {
    const auto h = entanglement_swap(EntangledPairState::ideal(), EntangledPairState::ideal());
    EXPECT_NEAR(h.p_success, 0.5, 1e-12);
    EXPECT_NEAR(h.output.fidelity(), 1.0, 1e-12);
}

TEST(Swap, PhasesAdd) {
    for (double pa : {0.0, 0.3, -1.0})
        for (double pb : {0.0, 0.5, 2.0}) {
            EntangledPairState a, b;
            a.psi = pa;
            b.psi = pb;
            const auto h = entanglement_swap(a, b);
            EXPECT_NEAR(std::abs(std::polar(1.0, h.output.psi) - std::polar(1.0, pa + pb)), 0.0, 1e-12);
            EXPECT_LT(esi::oracle::state_distance(h.output, esi::oracle::swap_oracle(a, b)), 1e-12);
        }
}

TEST(Swap, VacuumInputDegrades) {
    const auto h = entanglement_swap(EntangledPairState::ideal(), EntangledPairState::vacuum());
    EXPECT_LE(h.output.fidelity(), 0.5 + 1e-12);
}

TEST(Swap, ThresholdDetectorsAdmitMultiPhotonHeralds) {
    const EntangledPairState noisy{0.0, 0.8, 1.0, 0.0, 0.2};
    const auto pnr = entanglement_swap(noisy, noisy);
    const auto thr = entanglement_swap(noisy, noisy, true);
    EXPECT_GT(thr.p_success, pnr.p_success);
}

TEST(Chain, LosslessExamples) {
    ChainConfig one;
    const auto r1 = chain_simulate(one);
    EXPECT_NEAR(r1.rate, 1.0, 1e-12);
    EXPECT_NEAR(r1.fidelity, 1.0, 1e-12);
    ChainConfig two;
    two.segments = 2;
    const auto r2 = chain_simulate(two);
    EXPECT_NEAR(r2.rate, 0.5, 1e-9);
    EXPECT_NEAR(r2.fidelity, 1.0, 1e-12);
}

TEST(Chain, MonteCarloMatchesAnalytic) {
    for (bool memoryless : {true, false}) {
        ChainConfig c;
        c.segments = 2;
        c.success_probability = 0.5;
        c.policy.memoryless = memoryless;
        const auto exact = chain_simulate(c);
        esi::CounterRng rng(77);
        const auto mc = chain_simulate(c, &rng, 40000);
        ASSERT_GT(mc.rate_stderr, 0.0);
        EXPECT_NEAR(mc.rate, exact.rate, 5.0 * mc.rate_stderr) << memoryless;
    }
    // Memoryless two-segment swap: both links in the same slot, then the swap.
    ChainConfig m;
    m.segments = 2;
    m.success_probability = 0.5;
    m.policy.memoryless = true;
    EXPECT_NEAR(chain_simulate(m).rate, 0.25 * 0.5, 1e-12);
}

TEST(Chain, MemoryHelps) {
    ChainConfig c;
    c.segments = 4;
    c.success_probability = 0.3;
    const double with_memory = chain_simulate(c).rate;
    c.policy.memoryless = true;
    EXPECT_GT(with_memory, chain_simulate(c).rate);
}

TEST(Chain, RateFallsWithDistance) {
    double last = 2.0;
    for (double km : {10.0, 50.0, 100.0, 200.0}) {
        ChainConfig c;
        c.segments = 2;
        c.link = LinkModel::fiber(km);
        const double r = chain_simulate(c).rate;
        EXPECT_LT(r, last);
        last = r;
    }
}

TEST(Chain, InvalidPolicy) {
    ChainConfig c;
    c.policy.rounds_per_level = {7};
    EXPECT_THROW(chain_simulate(c), std::invalid_argument);
    c.policy.rounds_per_level = {};
    c.segments = 0;
    EXPECT_THROW(chain_simulate(c), std::invalid_argument);
}

TEST(FigureOfMerit, Example) {
    EXPECT_DOUBLE_EQ(figure_of_merit(0.5, 0.5, 0.1), 0.025);
    EXPECT_THROW(figure_of_merit(1.5, 0.5, 0.1), std::domain_error);
}
