/**
 * @file schemes.hpp
 * @brief Interferometry schemes: closed-form probabilities, the exact Fock
 *        circuits behind them, and slot-by-slot Monte Carlo event generation.
 *
 * Mode layout used by the circuits:
 *   direct     : (L, R) astronomical modes; delay delta on R; 50/50 splitter, phase pi/2.
 *   entangled  : (A_L, A_R, E_L, E_R); lab state |0,1> + e^{i delta}|1,0> on (E_L, E_R);
 *                50/50 splitters (phase pi/2) on (A_L, E_L) and (A_R, E_R).
 *                Detector 1 at a telescope watches the A output, detector 2 the E output.
 *   W state    : (A_1..A_n, E_1..E_n) with sum_i e^{i delta_i}|1_{E_i}>/sqrt(n).
 *
 * Weak sources are treated through their photon-number expansion up to second
 * order. A thermal (astronomical) field with first-order coherence V is
 * represented by two mutually incoherent point modes u_pm with relative phase
 * arg V +- arccos|V|, which reproduces its one- and two-photon sectors exactly.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "esi/fock.hpp"
#include "esi/rng.hpp"
#include "esi/sky.hpp"

namespace esi::schemes {

using Complex = std::complex<double>;
using fock::DensityOperator;
using fock::ModeIndex;

inline void require_visibility(Complex v) {
    if (!(std::abs(v) <= 1.0 + 1e-12)) throw std::domain_error("visibility modulus exceeds 1");
}

// ---------------------------------------------------------------------------
// Closed forms
// ---------------------------------------------------------------------------

struct PortProbabilities {
    double port1;
    double port2;
};

inline PortProbabilities direct_detection_probs(Complex v, double delta) {
    require_visibility(v);
    const double re = (v * std::polar(1.0, -delta)).real();
    return {(1.0 + re) / 2.0, (1.0 - re) / 2.0};
}

struct CoincidenceProbabilities {
    double one_each_side;  // acceptance of the L/R coincidence post-selection
    double correlated;     // conditional on acceptance
    double anticorrelated;
};

inline CoincidenceProbabilities entangled_coincidence_probs(Complex v, double delta) {
    const auto p = direct_detection_probs(v, delta);
    return {0.5, p.port1, p.port2};
}

struct WeakCoherentStats {
    double total_coincidence;
    double correlated;
    double visibility_factor;
    bool outside_weak_regime;  // p_A or p_E above 0.1: second-order expansion is loose
};

inline constexpr double kWeakSourceLimit = 0.2;
inline constexpr double kWeakSourceWarning = 0.1;

inline void require_weak(double p, const char* what) {
    if (!(p >= 0.0 && p <= kWeakSourceLimit))
        throw std::domain_error(std::string(what) + " must lie in [0, 0.2] for the weak-source expansion");
}

inline double visibility_factor(double p_a, double p_e, Complex v) {
    const double den = p_e * p_e + p_a * p_a * (1.0 + v.real()) + 2.0 * p_a * p_e;
    return den > 0.0 ? 2.0 * p_a * p_e / den : 0.0;
}

inline WeakCoherentStats weak_coherent_stats(double p_a, double p_e, Complex v, double delta) {
    require_weak(p_a, "p_A");
    require_weak(p_e, "p_E");
    require_visibility(v);
    const double hbt = p_a * p_a * (1.0 + v.real());
    const double cross = 2.0 * p_a * p_e;
    WeakCoherentStats s{};
    s.total_coincidence = p_a * p_e / 2.0 + p_e * p_e / 4.0 + hbt / 4.0;
    s.correlated = (p_e * p_e + hbt + cross + cross * (v * std::polar(1.0, -delta)).real()) / 8.0;
    s.visibility_factor = visibility_factor(p_a, p_e, v);
    s.outside_weak_regime = p_a > kWeakSourceWarning || p_e > kWeakSourceWarning;
    return s;
}

/// Lab-photon probability maximizing the visibility factor: d/dp_E of
/// p_E / (p_E^2 + 2 p_A p_E + K) vanishes at p_E^2 = K = p_A^2 (1 + Re V).
inline double optimal_p_E(double p_a, Complex v) {
    if (!(p_a > 0.0 && p_a <= kWeakSourceLimit)) throw std::domain_error("p_A must lie in (0, 0.2]");
    require_visibility(v);
    return p_a * std::sqrt(std::max(0.0, 1.0 + v.real()));
}

struct WStateProbabilities {
    double same_site_discard;
    double correlated;  // conditional on one photon at each of telescopes i and j
    double anticorrelated;
};

inline WStateProbabilities w_state_probs(std::size_t n, std::size_t i, std::size_t j, Complex v_ij,
                                         double delta_i, double delta_j) {
    if (n < 2) throw std::invalid_argument("W state needs at least 2 telescopes");
    if (i >= n || j >= n || i == j) throw std::invalid_argument("W state: invalid telescope pair");
    const auto p = direct_detection_probs(v_ij, delta_i - delta_j);
    return {1.0 / static_cast<double>(n), p.port1, p.port2};
}

/// Two astronomical photons, one at each telescope, in the form p_A^2 (1 + Re V) / 4.
inline double hbt_coincidence_prob(double p_a, Complex v) {
    require_weak(p_a, "p_A");
    require_visibility(v);
    return p_a * p_a * (1.0 + v.real()) / 4.0;
}

/// Same event for a thermal field: the intensity correlation gives p_A^2 (1 + |V|^2) / 4.
inline double hbt_coincidence_prob_thermal(double p_a, Complex v) {
    require_weak(p_a, "p_A");
    require_visibility(v);
    return p_a * p_a * (1.0 + std::norm(v)) / 4.0;
}

/// Gaussian wave packets (coherence time tau_c) with Gaussian timing jitter
/// sigma_t and arrival offset dt:
///   exp(-dt^2 / (2 (tau_c^2 + sigma_t^2))) * tau_c / sqrt(tau_c^2 + sigma_t^2).
inline double temporal_overlap_factor(double tau_c, double sigma_t, double dt) {
    if (!(tau_c > 0.0)) throw std::domain_error("coherence time must be positive");
    if (!(sigma_t >= 0.0)) throw std::domain_error("timing jitter must be non-negative");
    const double s2 = tau_c * tau_c + sigma_t * sigma_t;
    return std::exp(-dt * dt / (2.0 * s2)) * tau_c / std::sqrt(s2);
}

// ---------------------------------------------------------------------------
// Exact circuits
// ---------------------------------------------------------------------------

namespace circuits {

inline constexpr double kCombinerPhase = std::numbers::pi / 2;

/// Pure state (a^+_plus)^{n_plus} (a^+_minus)^{n_minus} |0> (normalized) on (L, R),
/// with u = (e^{i phi} a_L^+ + a_R^+)/sqrt(2) and phi_pm = arg V +- arccos|V|.
inline fock::FockRegister astro_realisation(int n_plus, int n_minus, Complex v, int cutoff = fock::kDefaultCutoff) {
    require_visibility(v);
    const double spread = std::acos(std::min(1.0, std::abs(v)));
    const double psi = std::abs(v) > 0.0 ? std::arg(v) : 0.0;
    auto create = [&](const fock::FockRegister& s, double phi) {
        auto l = fock::apply_creation(s, ModeIndex{0});
        auto r = fock::apply_creation(s, ModeIndex{1});
        return (std::polar(1.0, phi) / std::sqrt(2.0)) * l + Complex{1.0 / std::sqrt(2.0), 0.0} * r;
    };
    fock::FockRegister s(2, cutoff);
    for (int k = 0; k < n_plus; ++k) s = create(s, psi + spread);
    for (int k = 0; k < n_minus; ++k) s = create(s, psi - spread);
    return s;
}

/// Unnormalized two-photon sector of a thermal field with one-photon weight p:
/// (p^2/8) sum_{s,t in {+,-}} a_s^+ a_t^+ |0><0| a_t a_s.
inline DensityOperator astro_thermal_two_photon(double p, Complex v, int cutoff = fock::kDefaultCutoff) {
    auto rho = DensityOperator::zero(2, cutoff);
    for (int s = 0; s < 2; ++s)
        for (int t = 0; t < 2; ++t) {
            const int np = (s == 0) + (t == 0);
            const auto psi = astro_realisation(np, 2 - np, v, cutoff);
            rho = rho + (p * p / 8.0) * DensityOperator::from_pure(psi);
        }
    return rho;
}

/// Probability weights of the two-photon realisation classes (2,0), (1,1), (0,2)
/// for a thermal field of one-photon weight p: p^2/4 * {1, 1 + |V|^2, 1}.
inline std::array<double, 3> astro_two_photon_weights(double p, Complex v) {
    const double q = p * p / 4.0;
    return {q, q * (1.0 + std::norm(v)), q};
}

/// (|0,1> + e^{i delta}|1,0>)/sqrt(2) on (E_L, E_R).
inline DensityOperator lab_single(double delta, int cutoff = fock::kDefaultCutoff) {
    return DensityOperator::from_pure(fock::FockRegister::superposition(
        2, cutoff, {{{0, 1}, Complex{1.0, 0.0}}, {{1, 0}, std::polar(1.0, delta)}}));
}

/// Two photons in the lab mode (a_R^+ + e^{i delta} a_L^+)/sqrt(2).
inline DensityOperator lab_coherent_two(double delta, int cutoff = fock::kDefaultCutoff) {
    fock::FockRegister s(2, cutoff);
    for (int k = 0; k < 2; ++k)
        s = std::polar(1.0, delta) * fock::apply_creation(s, ModeIndex{0}) + fock::apply_creation(s, ModeIndex{1});
    return DensityOperator::from_pure(s.normalized());
}

/// Two uncorrelated lab photons, each at L or R with probability 1/2.
inline DensityOperator lab_double_pair(int cutoff = fock::kDefaultCutoff) {
    return DensityOperator::diagonal(2, cutoff, {{{2, 0}, 0.25}, {{1, 1}, 0.5}, {{0, 2}, 0.25}});
}

inline DensityOperator direct_output(const DensityOperator& astro, double delta) {
    auto rho = fock::apply_phase(astro, ModeIndex{1}, delta);
    return fock::apply_beam_splitter(rho, ModeIndex{0}, ModeIndex{1}, 0.5, kCombinerPhase);
}

/// Detections (port 1, port 2) for the direct circuit.
inline std::vector<fock::Detection> direct_detectors(const fock::DetectorModel& d = {}) {
    return {{ModeIndex{0}, d}, {ModeIndex{1}, d}};
}

inline DensityOperator entangled_output(const DensityOperator& astro, const DensityOperator& lab,
                                        int cutoff = fock::kDefaultCutoff) {
    auto rho = fock::tensor(astro, lab, cutoff);
    rho = fock::apply_beam_splitter(rho, ModeIndex{0}, ModeIndex{2}, 0.5, kCombinerPhase);
    return fock::apply_beam_splitter(rho, ModeIndex{1}, ModeIndex{3}, 0.5, kCombinerPhase);
}

/// Detections in pattern order (L1, L2, R1, R2).
inline std::vector<fock::Detection> entangled_detectors(const fock::DetectorModel& left = {},
                                                        const fock::DetectorModel& right = {}) {
    return {{ModeIndex{0}, left}, {ModeIndex{2}, left}, {ModeIndex{1}, right}, {ModeIndex{3}, right}};
}

inline bool one_click_each_side(const fock::ClickPattern& p) {
    return ((p[0] > 0) != (p[1] > 0)) && ((p[2] > 0) != (p[3] > 0));
}

inline bool correlated_pattern(const fock::ClickPattern& p) {
    return one_click_each_side(p) && ((p[0] > 0) == (p[2] > 0));
}

struct CoincidenceOracle {
    double one_each_side;
    double correlated;  // joint probability, not conditional
};

inline CoincidenceOracle coincidence_probabilities(const DensityOperator& out,
                                                   const std::vector<fock::Detection>& dets) {
    CoincidenceOracle r{0.0, 0.0};
    for (const auto& [pat, p] : fock::outcome_distribution(out, dets)) {
        if (one_click_each_side(pat)) r.one_each_side += p;
        if (correlated_pattern(pat)) r.correlated += p;
    }
    return r;
}

/// Oracle for the weak-source coincidence statistics: sum of the second-order
/// sector products (astro 1 x lab 1, lab 2, astro 2) through the entangled circuit.
inline CoincidenceOracle weak_coherent_oracle(double p_a, double p_e, Complex v, double delta) {
    const auto vac = DensityOperator::vacuum(2);
    const auto dets = entangled_detectors();
    const auto a1 = coincidence_probabilities(entangled_output(sky::arrival_density_matrix(v), lab_single(delta)), dets);
    const auto e2 = coincidence_probabilities(entangled_output(vac, lab_coherent_two(delta)), dets);
    const auto a2_state = astro_thermal_two_photon(p_a, v);
    const double a2_weight = a2_state.trace();
    CoincidenceOracle r{p_a * p_e * a1.one_each_side + 0.5 * p_e * p_e * e2.one_each_side,
                        p_a * p_e * a1.correlated + 0.5 * p_e * p_e * e2.correlated};
    if (a2_weight > 0.0) {
        const auto a2 = coincidence_probabilities(entangled_output(a2_state.normalized(), vac), dets);
        r.one_each_side += a2_weight * a2.one_each_side;
        r.correlated += a2_weight * a2.correlated;
    }
    return r;
}

/// Oracle for the intensity-interferometry term: two astronomical photons,
/// one registered at each telescope, no combining optics.
inline double hbt_oracle(double p_a, Complex v) {
    const auto rho = astro_thermal_two_photon(p_a, v);
    return rho.element({1, 1}, {1, 1}).real();
}

/// W-state circuit on 2n modes (n <= 4): astro photon with rho_ij = V_ij / n,
/// lab W state, 50/50 splitter (phase pi/2) at every telescope.
inline DensityOperator w_state_output(const std::vector<std::vector<Complex>>& v, const std::vector<double>& deltas,
                                      int cutoff = 2) {
    const std::size_t n = v.size();
    if (n < 2 || 2 * n > 8) throw std::invalid_argument("W-state oracle supports 2..4 telescopes");
    if (deltas.size() != n) throw std::invalid_argument("W-state oracle: one delay per telescope");
    auto astro = DensityOperator::zero(n, cutoff);
    fock::Matrix m = astro.matrix();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            fock::Occupation oi(n, 0), oj(n, 0);
            oi[i] = 1;
            oj[j] = 1;
            m(static_cast<Eigen::Index>(astro.basis().require_index(oi)),
              static_cast<Eigen::Index>(astro.basis().require_index(oj))) = v[i][j] / static_cast<double>(n);
        }
    astro = DensityOperator(astro.basis_ptr(), std::move(m));
    std::map<fock::Occupation, Complex> amps;
    for (std::size_t i = 0; i < n; ++i) {
        fock::Occupation o(n, 0);
        o[i] = 1;
        amps[o] = std::polar(1.0 / std::sqrt(static_cast<double>(n)), deltas[i]);
    }
    const auto lab = DensityOperator::from_pure(fock::FockRegister(n, cutoff, std::move(amps)));
    auto rho = fock::tensor(astro, lab, cutoff);
    for (std::size_t i = 0; i < n; ++i)
        rho = fock::apply_beam_splitter(rho, ModeIndex{i}, ModeIndex{n + i}, 0.5, kCombinerPhase);
    return rho;
}

struct WStateOracle {
    double same_site;
    double correlated;  // conditional on clicks at telescopes i and j
};

inline WStateOracle w_state_oracle(const std::vector<std::vector<Complex>>& v, const std::vector<double>& deltas,
                                   std::size_t i, std::size_t j) {
    const std::size_t n = v.size();
    const auto rho = w_state_output(v, deltas);
    std::vector<fock::Detection> dets;
    for (std::size_t k = 0; k < n; ++k) {
        dets.push_back({ModeIndex{k}, {}});
        dets.push_back({ModeIndex{n + k}, {}});
    }
    double same = 0.0, pair = 0.0, corr = 0.0;
    for (const auto& [pat, p] : fock::outcome_distribution(rho, dets)) {
        std::vector<int> sites;
        for (std::size_t k = 0; k < n; ++k)
            if (pat[2 * k] > 0 || pat[2 * k + 1] > 0) sites.push_back(static_cast<int>(k));
        if (sites.size() == 1) same += p;
        const bool at_i = pat[2 * i] > 0 || pat[2 * i + 1] > 0;
        const bool at_j = pat[2 * j] > 0 || pat[2 * j + 1] > 0;
        if (sites.size() == 2 && at_i && at_j) {
            pair += p;
            if ((pat[2 * i] > 0) == (pat[2 * j] > 0)) corr += p;
        }
    }
    return {same, pair > 0.0 ? corr / pair : 0.0};
}

}  // namespace circuits

// ---------------------------------------------------------------------------
// Monte Carlo
// ---------------------------------------------------------------------------

enum class SchemeKind { direct, entangled, w_state };
enum class PhotonModel { single, coherent };

inline std::string to_string(SchemeKind k) {
    switch (k) {
        case SchemeKind::direct: return "direct";
        case SchemeKind::entangled: return "entangled";
        case SchemeKind::w_state: return "w_state";
    }
    return "unknown";
}

inline SchemeKind scheme_from_string(const std::string& s) {
    if (s == "direct") return SchemeKind::direct;
    if (s == "entangled") return SchemeKind::entangled;
    if (s == "w_state") return SchemeKind::w_state;
    throw std::invalid_argument("unknown scheme '" + s + "' (expected direct, entangled or w_state)");
}

struct TemporalModel {
    double coherence_time = 0.0;  // seconds; 0 disables the overlap penalty
    double jitter_sigma = 0.0;
    double arrival_offset = 0.0;

    double factor() const {
        return coherence_time > 0.0 ? temporal_overlap_factor(coherence_time, jitter_sigma, arrival_offset) : 1.0;
    }
};

struct SchemeConfig {
    SchemeKind kind = SchemeKind::entangled;
    std::vector<double> delta_schedule{0.0};  // slots split into equal contiguous blocks, one per value
    double p_astro = 1.0;                     // astronomical photon per slot
    double p_lab = 1.0;                       // lab photon per slot
    PhotonModel photons = PhotonModel::single;
    std::size_t telescopes = 2;
    std::vector<double> w_phases;                // W state: static delta_i per telescope
    std::vector<fock::DetectorModel> detectors;  // per telescope; empty means ideal
    double double_pair_prob = 0.0;
    TemporalModel temporal;
    bool full_bell = false;
    std::vector<std::int64_t> delay_slots;  // known per-telescope offsets written into the log

    std::size_t telescope_count() const { return kind == SchemeKind::direct ? 1 : telescopes; }

    const fock::DetectorModel& detector(std::size_t tel) const {
        static const fock::DetectorModel ideal{};
        return detectors.empty() ? ideal : detectors.at(tel);
    }

    std::int64_t delay(std::size_t tel) const { return delay_slots.empty() ? 0 : delay_slots.at(tel); }

    void validate() const {
        if (delta_schedule.empty()) throw std::invalid_argument("delta_schedule: at least one value required");
        if (kind != SchemeKind::direct && telescopes < 2)
            throw std::invalid_argument("telescopes: must be >= 2 (got " + std::to_string(telescopes) + ")");
        if (kind == SchemeKind::entangled && telescopes != 2)
            throw std::invalid_argument("telescopes: the entangled scheme uses exactly 2");
        if (kind == SchemeKind::w_state && telescopes > 64) throw std::invalid_argument("telescopes: at most 64");
        if (!(p_astro >= 0.0 && p_astro <= 1.0)) throw std::invalid_argument("p_astro: must lie in [0, 1]");
        if (!(p_lab >= 0.0 && p_lab <= 1.0)) throw std::invalid_argument("p_lab: must lie in [0, 1]");
        if (photons == PhotonModel::coherent) {
            require_weak(p_astro, "p_astro");
            require_weak(p_lab, "p_lab");
            if (kind == SchemeKind::w_state)
                throw std::invalid_argument("photons: the W-state scheme supports the single-photon model only");
        }
        if (!(double_pair_prob >= 0.0 && double_pair_prob < 1.0))
            throw std::invalid_argument("double_pair_prob: must lie in [0, 1)");
        if (kind == SchemeKind::w_state && !w_phases.empty() && w_phases.size() != telescopes)
            throw std::invalid_argument("w_phases: one value per telescope required");
        if (!detectors.empty() && detectors.size() != telescope_count())
            throw std::invalid_argument("detectors: one model per telescope required");
        for (const auto& d : detectors) d.validate();
        if (!delay_slots.empty() && delay_slots.size() != telescope_count())
            throw std::invalid_argument("delay_slots: one value per telescope required");
        for (auto d : delay_slots)
            if (d < 0) throw std::invalid_argument("delay_slots: offsets must be non-negative");
        if (temporal.coherence_time < 0.0 || temporal.jitter_sigma < 0.0)
            throw std::invalid_argument("temporal: times must be non-negative");
    }
};

struct ClickRecord {
    std::uint64_t slot;       // slot of the click including the telescope's known delay
    std::uint32_t telescope;  // 0-based
    std::uint8_t detector;    // 1 or 2
    bool accepted;
    double delta;  // lab phase applied at this telescope (direct: combiner delay)

    friend bool operator==(const ClickRecord&, const ClickRecord&) = default;
};

struct EventLog {
    SchemeKind scheme = SchemeKind::entangled;
    std::size_t telescopes = 2;
    std::uint64_t slots = 0;
    std::uint64_t seed = 0;
    std::vector<std::int64_t> delay_slots;
    std::vector<ClickRecord> records;  // ordered by emission slot, then telescope, then detector

    std::int64_t delay(std::size_t tel) const { return delay_slots.empty() ? 0 : delay_slots.at(tel); }
    std::uint64_t emission_slot(const ClickRecord& r) const {
        return r.slot - static_cast<std::uint64_t>(delay(r.telescope));
    }
};

/// Telescope geometry: baselines[0] for two-telescope schemes, or one position
/// per telescope (relative to any origin) for the W state.
inline std::vector<std::vector<Complex>> visibility_matrix(const sky::SourceModel& src,
                                                           std::span<const sky::Baseline> positions) {
    const std::size_t n = positions.size();
    std::vector<std::vector<Complex>> v(n, std::vector<Complex>(n, Complex{1.0, 0.0}));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j)
                v[i][j] = sky::visibility(src, {positions[i].bx - positions[j].bx, positions[i].by - positions[j].by,
                                                positions[i].wavelength});
    return v;
}

inline constexpr std::uint64_t kSlotsPerBlock = 1u << 16;

namespace detail {

struct SampledTable {
    std::vector<fock::ClickPattern> patterns;
    std::vector<double> cdf;

    explicit SampledTable(const fock::OutcomeTable& t) {
        double acc = 0.0;
        for (const auto& [pat, p] : t) {
            if (p <= 0.0) continue;
            acc += p;
            patterns.push_back(pat);
            cdf.push_back(acc);
        }
        for (auto& c : cdf) c /= acc;
    }

    const fock::ClickPattern& sample(CounterRng& rng) const {
        const double u = rng.uniform();
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        if (it == cdf.end()) --it;
        return patterns[static_cast<std::size_t>(it - cdf.begin())];
    }
};

// Astro key: 0 none, 1 single photon rho(V), 2..6 realisation classes
// (1,0), (0,1), (2,0), (1,1), (0,2). Lab key: 0 none, 1 single, 2 two photons
// in the lab mode, 3 double pair.
inline constexpr int kAstroKeys = 7;
inline constexpr int kLabKeys = 4;

inline DensityOperator astro_state(int key, Complex v) {
    static constexpr std::array<std::array<int, 2>, 7> split{{{0, 0}, {0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}}};
    if (key == 0) return DensityOperator::vacuum(2);
    if (key == 1) return sky::arrival_density_matrix(v);
    const auto& s = split[static_cast<std::size_t>(key)];
    return DensityOperator::from_pure(circuits::astro_realisation(s[0], s[1], v).normalized());
}

inline DensityOperator lab_state(int key, double delta) {
    switch (key) {
        case 0: return DensityOperator::vacuum(2);
        case 1: return circuits::lab_single(delta);
        case 2: return circuits::lab_coherent_two(delta);
        default: return circuits::lab_double_pair();
    }
}

inline int sample_astro_key(const SchemeConfig& c, Complex v, CounterRng& rng) {
    if (c.photons == PhotonModel::single) return rng.bernoulli(c.p_astro) ? 1 : 0;
    const double p = c.p_astro;
    const auto two = circuits::astro_two_photon_weights(p, v);
    const std::array<double, 6> w{p / 2, p / 2, two[0], two[1], two[2],
                                  std::max(0.0, 1.0 - p - two[0] - two[1] - two[2])};
    const auto k = rng.categorical(w);
    return k == 5 ? 0 : static_cast<int>(k) + 2;
}

inline int sample_lab_key(const SchemeConfig& c, CounterRng& rng) {
    if (c.double_pair_prob > 0.0 && rng.bernoulli(c.double_pair_prob)) return 3;
    if (c.photons == PhotonModel::single) return rng.bernoulli(c.p_lab) ? 1 : 0;
    const double p = c.p_lab;
    const std::array<double, 3> w{std::max(0.0, 1.0 - p - p * p / 2), p, p * p / 2};
    return static_cast<int>(rng.categorical(w));
}

inline std::size_t delta_index(std::uint64_t slot, std::uint64_t slots, std::size_t count) {
    return static_cast<std::size_t>((static_cast<unsigned __int128>(slot) * count) / slots);
}

class TableCache {
public:
    TableCache(const SchemeConfig& c, Complex v) : c_(c) {
        const std::size_t nd = c.delta_schedule.size();
        const bool entangled = c.kind == SchemeKind::entangled;
        const int lab_keys = entangled ? kLabKeys : 1;
        tables_.resize(nd * kAstroKeys * static_cast<std::size_t>(lab_keys));
        lab_keys_ = lab_keys;
        const auto dets = entangled ? circuits::entangled_detectors(c.detector(0), c.detector(1))
                                    : circuits::direct_detectors(c.detector(0));
        for (std::size_t d = 0; d < nd; ++d)
            for (int a = 0; a < kAstroKeys; ++a)
                for (int e = 0; e < lab_keys; ++e) {
                    if (!needed(a, e)) continue;
                    const double delta = c.delta_schedule[d];
                    const auto astro = astro_state(a, v);
                    auto table = entangled ? fock::outcome_distribution(
                                                 circuits::entangled_output(astro, lab_state(e, delta)), dets)
                                           : fock::outcome_distribution(circuits::direct_output(astro, delta), dets);
                    if (entangled && c.full_bell && total_photons(a, e) >= 2) {
                        try {
                            table = fock::post_select(table, circuits::one_click_each_side).conditional;
                        } catch (const fock::EmptyConditionalError&) {
                        }
                    }
                    tables_[index(d, a, e)].emplace(table);
                }
    }

    const SampledTable& get(std::size_t d, int a, int e) const { return *tables_[index(d, a, e)]; }

private:
    static int total_photons(int a, int e) {
        static constexpr std::array<int, 7> na{0, 1, 1, 1, 2, 2, 2};
        static constexpr std::array<int, 4> ne{0, 1, 2, 2};
        return na[static_cast<std::size_t>(a)] + ne[static_cast<std::size_t>(e)];
    }

    bool needed(int a, int e) const {
        const bool single = c_.photons == PhotonModel::single;
        if (single && a > 1) return false;
        if (!single && a == 1) return false;
        if (single && e == 2) return false;
        if (e == 3 && c_.double_pair_prob == 0.0) return false;
        return true;
    }

    std::size_t index(std::size_t d, int a, int e) const {
        return (d * kAstroKeys + static_cast<std::size_t>(a)) * static_cast<std::size_t>(lab_keys_) +
               static_cast<std::size_t>(e);
    }

    const SchemeConfig& c_;
    int lab_keys_ = 1;
    std::vector<std::optional<SampledTable>> tables_;
};

struct BlockContext {
    const SchemeConfig& config;
    const EventLog& log;
    std::uint64_t seed;
    Complex v;                                  // two-telescope schemes
    const std::vector<std::vector<Complex>>* vm;  // W state
    const TableCache* cache;
    double overlap;
};

inline void emit(std::vector<ClickRecord>& out, const SchemeConfig& c, std::uint64_t slot, std::uint32_t tel,
                 std::uint8_t det, bool accepted, double delta) {
    out.push_back({slot + static_cast<std::uint64_t>(c.delay(tel)), tel, det, accepted, delta});
}

inline void run_two_telescope_block(const BlockContext& ctx, std::uint64_t begin, std::uint64_t end,
                                    CounterRng& rng, std::vector<ClickRecord>& out) {
    const auto& c = ctx.config;
    const bool entangled = c.kind == SchemeKind::entangled;
    for (std::uint64_t slot = begin; slot < end; ++slot) {
        const std::size_t d = delta_index(slot, ctx.log.slots, c.delta_schedule.size());
        const double delta = c.delta_schedule[d];
        const int a = sample_astro_key(c, ctx.v, rng);
        const int e = entangled ? sample_lab_key(c, rng) : 0;
        const auto& pat = ctx.cache->get(d, a, e).sample(rng);
        if (entangled) {
            const bool acc = circuits::one_click_each_side(pat);
            if (pat[0] > 0) emit(out, c, slot, 0, 1, acc, delta);
            if (pat[1] > 0) emit(out, c, slot, 0, 2, acc, delta);
            if (pat[2] > 0) emit(out, c, slot, 1, 1, acc, 0.0);
            if (pat[3] > 0) emit(out, c, slot, 1, 2, acc, 0.0);
        } else {
            const bool acc = (pat[0] > 0) != (pat[1] > 0);
            if (pat[0] > 0) emit(out, c, slot, 0, 1, acc, delta);
            if (pat[1] > 0) emit(out, c, slot, 0, 2, acc, delta);
        }
    }
}

inline void run_w_state_block(const BlockContext& ctx, std::uint64_t begin, std::uint64_t end, CounterRng& rng,
                              std::vector<ClickRecord>& out) {
    const auto& c = ctx.config;
    const std::size_t n = c.telescopes;
    const auto& vm = *ctx.vm;
    std::vector<std::array<int, 2>> photons(n);
    std::vector<double> lab_phase(n);
    for (std::uint64_t slot = begin; slot < end; ++slot) {
        const double sched = c.delta_schedule[delta_index(slot, ctx.log.slots, c.delta_schedule.size())];
        for (std::size_t k = 0; k < n; ++k) {
            photons[k] = {0, 0};
            lab_phase[k] = (c.w_phases.empty() ? 0.0 : c.w_phases[k]) + static_cast<double>(k) * sched;
        }
        const bool astro = rng.bernoulli(c.p_astro);
        const bool lab = rng.bernoulli(c.p_lab);
        const std::size_t i = astro ? static_cast<std::size_t>(rng.next_u64() % n) : 0;
        const std::size_t j = lab ? static_cast<std::size_t>(rng.next_u64() % n) : 0;
        auto random_detector = [&] { return static_cast<int>(rng.next_u32() & 1u); };
        if (astro && lab) {
            if (i != j) {
                const Complex v = vm[i][j] * ctx.overlap;
                const double corr = direct_detection_probs(v, lab_phase[i] - lab_phase[j]).port1;
                const int di = random_detector();
                const int dj = rng.bernoulli(corr) ? di : 1 - di;
                ++photons[i][static_cast<std::size_t>(di)];
                ++photons[j][static_cast<std::size_t>(dj)];
            } else {
                const double bunch = (1.0 + ctx.overlap * ctx.overlap) / 2.0;
                if (rng.bernoulli(bunch)) {
                    photons[i][static_cast<std::size_t>(random_detector())] += 2;
                } else {
                    ++photons[i][0];
                    ++photons[i][1];
                }
            }
        } else if (astro) {
            ++photons[i][static_cast<std::size_t>(random_detector())];
        } else if (lab) {
            ++photons[j][static_cast<std::size_t>(random_detector())];
        }
        if (c.double_pair_prob > 0.0 && rng.bernoulli(c.double_pair_prob))
            for (int k = 0; k < 2; ++k)
                ++photons[static_cast<std::size_t>(rng.next_u64() % n)][static_cast<std::size_t>(random_detector())];

        std::size_t clicks = 0;
        std::size_t sites = 0;
        std::vector<std::array<bool, 2>> fired(n, {false, false});
        for (std::size_t k = 0; k < n; ++k) {
            const auto& dm = c.detector(k);
            bool any = false;
            for (std::size_t det = 0; det < 2; ++det) {
                bool click = false;
                for (int ph = 0; ph < photons[k][det] && !click; ++ph) click = rng.bernoulli(dm.efficiency);
                if (dm.dark_prob_per_window > 0.0 && rng.bernoulli(dm.dark_prob_per_window)) click = true;
                fired[k][det] = click;
                clicks += click;
                any = any || click;
            }
            sites += any;
        }
        if (clicks == 0) continue;
        const bool acc = clicks == 2 && sites == 2;
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t det = 0; det < 2; ++det)
                if (fired[k][det])
                    emit(out, c, slot, static_cast<std::uint32_t>(k), static_cast<std::uint8_t>(det + 1), acc,
                         lab_phase[k]);
    }
}

}  // namespace detail

/// Samples `slots` time slots. Slots are processed in blocks of kSlotsPerBlock,
/// block b drawing from substream (seed, b), so the log does not depend on `threads`.
inline EventLog simulate_run(const SchemeConfig& config, const sky::SourceModel& source,
                             std::span<const sky::Baseline> baselines, std::uint64_t slots, std::uint64_t seed,
                             unsigned threads = 1) {
    config.validate();
    if (slots == 0) throw std::invalid_argument("slots: must be positive");
    EventLog log;
    log.scheme = config.kind;
    log.telescopes = config.telescope_count();
    log.slots = slots;
    log.seed = seed;
    log.delay_slots = config.delay_slots;

    const double overlap = config.temporal.factor();
    Complex v{1.0, 0.0};
    std::vector<std::vector<Complex>> vm;
    std::optional<detail::TableCache> cache;
    if (config.kind == SchemeKind::w_state) {
        if (baselines.size() != config.telescopes)
            throw std::invalid_argument("baselines: the W state needs one position per telescope");
        vm = visibility_matrix(source, baselines);
    } else {
        if (baselines.empty()) throw std::invalid_argument("baselines: one baseline required");
        v = sky::visibility(source, baselines[0]) * overlap;
        cache.emplace(config, v);
    }

    const detail::BlockContext ctx{config, log, seed, v, &vm, cache ? &*cache : nullptr, overlap};
    const std::uint64_t blocks = (slots + kSlotsPerBlock - 1) / kSlotsPerBlock;
    std::vector<std::vector<ClickRecord>> parts(blocks);
    auto run_block = [&](std::uint64_t b) {
        auto rng = CounterRng::substream(seed, b);
        const std::uint64_t begin = b * kSlotsPerBlock;
        const std::uint64_t end = std::min(slots, begin + kSlotsPerBlock);
        if (config.kind == SchemeKind::w_state)
            detail::run_w_state_block(ctx, begin, end, rng, parts[b]);
        else
            detail::run_two_telescope_block(ctx, begin, end, rng, parts[b]);
    };
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    const auto workers = static_cast<unsigned>(std::min<std::uint64_t>(threads, blocks));
    if (workers <= 1) {
        for (std::uint64_t b = 0; b < blocks; ++b) run_block(b);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::uint64_t b = w; b < blocks; b += workers) run_block(b);
            });
        for (auto& t : pool) t.join();
    }
    std::size_t total = 0;
    for (const auto& p : parts) total += p.size();
    log.records.reserve(total);
    for (auto& p : parts) log.records.insert(log.records.end(), p.begin(), p.end());
    return log;
}

/// Fraction of slots with at least one click that fail post-selection.
inline double discard_fraction(const EventLog& log) {
    std::uint64_t clicked = 0, accepted = 0;
    std::optional<std::uint64_t> last;
    for (const auto& r : log.records) {
        const auto s = log.emission_slot(r);
        if (last && *last == s) continue;
        last = s;
        ++clicked;
        accepted += r.accepted;
    }
    return clicked ? 1.0 - static_cast<double>(accepted) / static_cast<double>(clicked) : 0.0;
}

}  // namespace esi::schemes
