#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "esi/schemes.hpp"

using namespace esi::schemes;
using Complex = std::complex<double>;

namespace {

const double kPi = std::numbers::pi;

struct Tally {
    std::uint64_t pairs = 0;
    std::uint64_t correlated = 0;
};

// Accepted two-telescope coincidences grouped by emission slot.
Tally tally(const EventLog& log) {
    Tally t;
    std::size_t i = 0;
    while (i < log.records.size()) {
        std::size_t j = i;
        const auto slot = log.emission_slot(log.records[i]);
        while (j < log.records.size() && log.emission_slot(log.records[j]) == slot) ++j;
        if (j - i == 2 && log.records[i].accepted && log.records[i + 1].accepted &&
            log.records[i].telescope != log.records[i + 1].telescope) {
            ++t.pairs;
            t.correlated += log.records[i].detector == log.records[i + 1].detector;
        }
        i = j;
    }
    return t;
}

double five_sigma(double p, double n) { return 5.0 * std::sqrt(p * (1 - p) / n); }

const std::vector<esi::sky::Baseline> kOneBaseline{{100.0, 0.0, 800e-9}};

}  // namespace

TEST(Direct, Example) {
    const auto p = direct_detection_probs(Complex{0, 0.5}, kPi / 2);
    EXPECT_NEAR(p.port1, 0.75, 1e-15);
    EXPECT_NEAR(p.port2, 0.25, 1e-15);
}

TEST(Direct, MatchesCircuit) {
    const Complex v = std::polar(0.5, kPi / 2);
    const auto out = circuits::direct_output(esi::sky::arrival_density_matrix(v), kPi / 2);
    const auto t = esi::fock::outcome_distribution(out, circuits::direct_detectors());
    EXPECT_NEAR(t.at({1, 0}), 0.75, 1e-12);
    EXPECT_NEAR(t.at({0, 1}), 0.25, 1e-12);
}

TEST(Entangled, Example) {
    const auto p = entangled_coincidence_probs(0.8, 0.0);
    EXPECT_NEAR(p.correlated, 0.9, 1e-15);
    EXPECT_NEAR(p.one_each_side, 0.5, 1e-15);
    const auto out = circuits::entangled_output(esi::sky::arrival_density_matrix(0.8), circuits::lab_single(0.0));
    const auto c = circuits::coincidence_probabilities(out, circuits::entangled_detectors());
    EXPECT_NEAR(c.one_each_side, 0.5, 1e-12);
    EXPECT_NEAR(c.correlated / c.one_each_side, 0.9, 1e-12);
}

TEST(Probabilities, ConserveAndShiftByPi) {
    for (double m : {0.0, 0.4, 1.0})
        for (double a : {0.0, 1.0, -2.5})
            for (double d : {0.0, 0.3, kPi / 2, 2.0}) {
                const Complex v = std::polar(m, a);
                const auto p = direct_detection_probs(v, d);
                EXPECT_NEAR(p.port1 + p.port2, 1.0, 1e-15);
                const auto q = entangled_coincidence_probs(v, d + kPi);
                EXPECT_NEAR(q.correlated, entangled_coincidence_probs(v, d).anticorrelated, 1e-14);
                const auto w = weak_coherent_stats(0.02, 0.03, v, d);
                EXPECT_LE(w.correlated, w.total_coincidence + 1e-18);
            }
    EXPECT_THROW(direct_detection_probs(1.5, 0.0), std::domain_error);
}

TEST(WeakCoherent, VisibilityFactorExample) {
    const auto s = weak_coherent_stats(0.01, 0.04, 1.0, 0.0);
    EXPECT_NEAR(s.visibility_factor, 8.0 / 26.0, 1e-15);
    EXPECT_FALSE(s.outside_weak_regime);
    EXPECT_TRUE(weak_coherent_stats(0.15, 0.04, 1.0, 0.0).outside_weak_regime);
    EXPECT_THROW(weak_coherent_stats(0.3, 0.04, 1.0, 0.0), std::domain_error);
}

TEST(WeakCoherent, OptimalLabRateMatchesGridSearch) {
    for (double pa : {0.005, 0.02, 0.1})
        for (double v : {-0.5, 0.0, 0.6, 1.0}) {
            double best = 0.0, arg = 0.0;
            const int n = 200000;
            for (int k = 1; k <= n; ++k) {
                const double pe = 0.2 * k / n;
                const double f = visibility_factor(pa, pe, v);
                if (f > best) {
                    best = f;
                    arg = pe;
                }
            }
            EXPECT_NEAR(optimal_p_E(pa, v), arg, 2e-6) << pa << ' ' << v;
        }
    EXPECT_NEAR(optimal_p_E(0.02, 0.0), 0.02, 1e-15);
}

TEST(WeakCoherent, MonteCarloMatchesClosedForm) {
    SchemeConfig c;
    c.kind = SchemeKind::entangled;
    c.photons = PhotonModel::coherent;
    c.p_astro = 0.01;
    c.p_lab = 0.04;
    const auto log = simulate_run(c, esi::sky::SourceModel::point(), kOneBaseline, 4'000'000, 5);
    const auto t = tally(log);
    const auto s = weak_coherent_stats(0.01, 0.04, 1.0, 0.0);
    const double want = s.correlated / s.total_coincidence;
    EXPECT_NEAR(want, (1.0 + 8.0 / 26.0) / 2.0, 1e-12);
    EXPECT_NEAR(static_cast<double>(t.correlated) / t.pairs, want, five_sigma(want, t.pairs));
    EXPECT_NEAR(static_cast<double>(t.pairs) / 4e6, s.total_coincidence,
                5.0 * std::sqrt(s.total_coincidence / 4e6));
}

TEST(Entangled, MonteCarloCorrelation) {
    SchemeConfig c;
    c.delta_schedule = {0.0, kPi / 2};
    // Symmetric binary with V = 0.8 on the baseline.
    const auto& b = kOneBaseline[0];
    const double s = 2.0 * std::asin(std::acos(0.8) * b.wavelength / (2 * kPi * b.bx));
    const auto src = esi::sky::SourceModel::binary(s);
    ASSERT_NEAR(std::abs(esi::sky::visibility(src, b) - 0.8), 0.0, 1e-12);
    const auto log = simulate_run(c, src, kOneBaseline, 200000, 2);
    std::array<Tally, 2> per;
    EventLog half = log;
    for (int k = 0; k < 2; ++k) {
        half.records.clear();
        for (const auto& r : log.records)
            if ((log.emission_slot(r) < 100000) == (k == 0)) half.records.push_back(r);
        per[k] = tally(half);
    }
    EXPECT_NEAR(static_cast<double>(per[0].correlated) / per[0].pairs, 0.9, five_sigma(0.9, per[0].pairs));
    EXPECT_NEAR(static_cast<double>(per[1].correlated) / per[1].pairs, 0.5, five_sigma(0.5, per[1].pairs));
    EXPECT_NEAR(1.0 - discard_fraction(log), 0.5, five_sigma(0.5, 200000));
}

TEST(Entangled, DarkCountsOnlyGiveNoFringe) {
    SchemeConfig c;
    c.p_astro = 0.0;
    c.p_lab = 0.0;
    esi::fock::DetectorModel d;
    d.dark_prob_per_window = 0.05;
    c.detectors = {d, d};
    const auto log = simulate_run(c, esi::sky::SourceModel::point(), kOneBaseline, 400000, 3);
    const auto t = tally(log);
    ASSERT_GT(t.pairs, 500u);
    EXPECT_NEAR(static_cast<double>(t.correlated) / t.pairs, 0.5, five_sigma(0.5, t.pairs));
}

TEST(WState, ClosedFormAndOracle) {
    const auto p = w_state_probs(4, 0, 2, std::polar(0.6, 0.4), 0.3, 0.1);
    EXPECT_NEAR(p.same_site_discard, 0.25, 1e-15);
    EXPECT_NEAR(p.correlated, (1 + 0.6 * std::cos(0.4 - 0.2)) / 2, 1e-14);
    const std::vector<std::vector<Complex>> v{{1.0, 0.5, 0.2}, {0.5, 1.0, Complex{0, 0.3}}, {0.2, Complex{0, -0.3}, 1.0}};
    const std::vector<double> deltas{0.0, 0.7, 1.9};
    const auto o = circuits::w_state_oracle(v, deltas, 1, 2);
    EXPECT_NEAR(o.same_site, 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(o.correlated, w_state_probs(3, 1, 2, v[1][2], 0.7, 1.9).correlated, 1e-12);
}

TEST(WState, MonteCarloDiscardFraction) {
    for (std::size_t n : {2u, 5u}) {
        SchemeConfig c;
        c.kind = SchemeKind::w_state;
        c.telescopes = n;
        std::vector<esi::sky::Baseline> pos;
        for (std::size_t k = 0; k < n; ++k) pos.push_back({30.0 * k, 0.0, 800e-9});
        const std::uint64_t slots = 100000;
        const auto log = simulate_run(c, esi::sky::SourceModel::point(), pos, slots, 4);
        const double want = 1.0 / n;
        EXPECT_NEAR(discard_fraction(log), want, five_sigma(want, slots)) << n;
    }
}

TEST(Temporal, GaussianOverlap) {
    EXPECT_NEAR(temporal_overlap_factor(1e-12, 1e-12, 0.0), 1.0 / std::sqrt(2.0), 1e-15);
    // E[exp(-x^2 / (2 tau^2))] for x ~ N(dt, sigma^2), by quadrature.
    auto oracle = [](double tau, double sigma, double dt) {
        const int n = 200000;
        const double lo = dt - 12 * sigma, hi = dt + 12 * sigma, h = (hi - lo) / n;
        double s = 0.0;
        for (int k = 0; k <= n; ++k) {
            const double x = lo + k * h;
            const double w = (k == 0 || k == n) ? 0.5 : 1.0;
            s += w * std::exp(-x * x / (2 * tau * tau)) * std::exp(-(x - dt) * (x - dt) / (2 * sigma * sigma));
        }
        return s * h / (sigma * std::sqrt(2 * kPi));
    };
    for (double sigma : {0.3, 1.0, 2.5})
        for (double dt : {0.0, 0.8, 2.0})
            EXPECT_NEAR(temporal_overlap_factor(1.0, sigma, dt), oracle(1.0, sigma, dt), 1e-9);
    EXPECT_THROW(temporal_overlap_factor(0.0, 1.0, 0.0), std::domain_error);
}

TEST(Hbt, ThermalOracleAgrees) {
    for (double m : {0.0, 0.5, 1.0})
        EXPECT_NEAR(hbt_coincidence_prob_thermal(0.05, std::polar(m, 1.0)), circuits::hbt_oracle(0.05, std::polar(m, 1.0)),
                    1e-15);
}

TEST(MonteCarlo, IndependentOfThreadCount) {
    SchemeConfig c;
    c.delta_schedule = {0.0, 1.0, 2.0};
    const auto src = esi::sky::SourceModel::binary(1e-9, 1.0, 0.5);
    const auto a = simulate_run(c, src, kOneBaseline, 300000, 9, 1);
    const auto b = simulate_run(c, src, kOneBaseline, 300000, 9, 4);
    EXPECT_EQ(a.records, b.records);
    const auto d = simulate_run(c, src, kOneBaseline, 300000, 10, 1);
    EXPECT_NE(a.records, d.records);
}

TEST(Config, ValidationNamesTheField) {
    SchemeConfig c;
    c.kind = SchemeKind::w_state;
    c.telescopes = 1;
    try {
        c.validate();
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_EQ(std::string(e.what()), "telescopes: must be >= 2 (got 1)");
    }
    SchemeConfig d;
    d.p_lab = 1.5;
    EXPECT_THROW(d.validate(), std::invalid_argument);
    SchemeConfig e;
    e.delta_schedule.clear();
    EXPECT_THROW(e.validate(), std::invalid_argument);
    EXPECT_THROW(scheme_from_string("bogus"), std::invalid_argument);
}
