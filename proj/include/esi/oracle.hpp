/**
 * @file oracle.hpp
 * @brief Analytic-versus-circuit verification suite.
 *
 * Closed forms are compared with outcome distributions of the exact Fock
 * circuits. Distillation and swapping, which are themselves built on density
 * operators, are compared with an independent state-vector evaluation of the
 * same circuits (pure-state decomposition of the inputs, explicit herald
 * projection).
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <iomanip>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "esi/fock.hpp"
#include "esi/repeater.hpp"
#include "esi/schemes.hpp"
#include "esi/sky.hpp"

namespace esi::oracle {

using Complex = std::complex<double>;

inline constexpr double kTolerance = 1e-9;

struct Row {
    std::string group;
    std::string label;
    double analytic;
    double oracle;
    double error() const { return std::abs(analytic - oracle); }
    bool pass(double tol = kTolerance) const { return error() <= tol; }
};

struct GroupSummary {
    std::string group;
    std::size_t points = 0;
    std::size_t failures = 0;
    double max_error = 0.0;
};

inline std::vector<Complex> visibility_grid() {
    std::vector<Complex> out;
    for (double mod : {0.0, 0.3, 0.7, 1.0})
        for (double arg : {0.0, std::numbers::pi / 3}) out.push_back(std::polar(mod, arg));
    return out;
}

inline const std::vector<double>& delta_grid() {
    static const std::vector<double> d{0.0, std::numbers::pi / 2, std::numbers::pi};
    return d;
}

inline const std::vector<double>& weak_p_grid() {
    static const std::vector<double> p{0.01, 0.05};
    return p;
}

inline std::string describe(Complex v, double delta) {
    std::ostringstream s;
    s << std::setprecision(4) << "|V|=" << std::abs(v) << " argV=" << std::arg(v) << " delta=" << delta;
    return s.str();
}

inline void direct_rows(std::vector<Row>& rows) {
    const auto dets = schemes::circuits::direct_detectors();
    for (auto v : visibility_grid())
        for (double d : delta_grid()) {
            const auto a = schemes::direct_detection_probs(v, d);
            const auto t = fock::outcome_distribution(schemes::circuits::direct_output(sky::arrival_density_matrix(v), d), dets);
            auto get = [&](const fock::ClickPattern& p) {
                auto it = t.find(p);
                return it == t.end() ? 0.0 : it->second;
            };
            rows.push_back({"direct", describe(v, d) + " port1", a.port1, get({1, 0})});
            rows.push_back({"direct", describe(v, d) + " port2", a.port2, get({0, 1})});
        }
}

inline void entangled_rows(std::vector<Row>& rows) {
    const auto dets = schemes::circuits::entangled_detectors();
    for (auto v : visibility_grid())
        for (double d : delta_grid()) {
            const auto a = schemes::entangled_coincidence_probs(v, d);
            const auto o = schemes::circuits::coincidence_probabilities(
                schemes::circuits::entangled_output(sky::arrival_density_matrix(v), schemes::circuits::lab_single(d)),
                dets);
            rows.push_back({"entangled", describe(v, d) + " acceptance", a.one_each_side, o.one_each_side});
            rows.push_back({"entangled", describe(v, d) + " correlated", a.correlated, o.correlated / o.one_each_side});
            rows.push_back({"entangled", describe(v, d) + " anticorrelated", a.anticorrelated,
                            (o.one_each_side - o.correlated) / o.one_each_side});
        }
}

inline void weak_rows(std::vector<Row>& rows) {
    for (double pa : weak_p_grid())
        for (double pe : weak_p_grid())
            for (auto v : visibility_grid())
                for (double d : delta_grid()) {
                    const auto a = schemes::weak_coherent_stats(pa, pe, v, d);
                    const auto o = schemes::circuits::weak_coherent_oracle(pa, pe, v, d);
                    std::ostringstream l;
                    l << "pA=" << pa << " pE=" << pe << ' ' << describe(v, d);
                    rows.push_back({"weak_coherent", l.str() + " total", a.total_coincidence, o.one_each_side});
                    rows.push_back({"weak_coherent", l.str() + " correlated", a.correlated, o.correlated});
                }
}

inline void hbt_rows(std::vector<Row>& rows, bool thermal) {
    for (double pa : {0.01, 0.05, 0.1})
        for (auto v : visibility_grid()) {
            std::ostringstream l;
            l << "pA=" << pa << ' ' << std::setprecision(4) << "|V|=" << std::abs(v) << " argV=" << std::arg(v);
            const double a =
                thermal ? schemes::hbt_coincidence_prob_thermal(pa, v) : schemes::hbt_coincidence_prob(pa, v);
            rows.push_back({thermal ? "hbt_thermal" : "hbt", l.str(), a, schemes::circuits::hbt_oracle(pa, v)});
        }
}

inline void w_state_rows(std::vector<Row>& rows) {
    for (std::size_t n : {2u, 3u}) {
        std::vector<std::vector<Complex>> v(n, std::vector<Complex>(n, 1.0));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                v[i][j] = std::polar(0.6 / static_cast<double>(j - i), 0.4 * static_cast<double>(i + j));
                v[j][i] = std::conj(v[i][j]);
            }
        std::vector<double> deltas(n);
        for (std::size_t k = 0; k < n; ++k) deltas[k] = 0.7 * static_cast<double>(k);
        const auto o = schemes::circuits::w_state_oracle(v, deltas, 0, 1);
        const auto a = schemes::w_state_probs(n, 0, 1, v[0][1], deltas[0], deltas[1]);
        rows.push_back({"w_state", "n=" + std::to_string(n) + " same-site", a.same_site_discard, o.same_site});
        rows.push_back({"w_state", "n=" + std::to_string(n) + " correlated(0,1)", a.correlated, o.correlated});
    }
}

// ---------------------------------------------------------------------------
// State-vector evaluation of the heralded pair circuits
// ---------------------------------------------------------------------------

struct PureComponent {
    double weight;
    fock::FockRegister state;
};

/// Pure-state decomposition of a pair: vacuum, (|01> +- e^{i psi}|10>)/sqrt(2), |11>.
inline std::vector<PureComponent> decompose(const repeater::EntangledPairState& p, int cutoff) {
    std::vector<PureComponent> out;
    auto ket = [&](fock::Occupation o) { return fock::FockRegister::basis_state(o, cutoff); };
    if (p.w0 > 0.0) out.push_back({p.w0, ket({0, 0})});
    for (int sign : {+1, -1}) {
        const double w = p.w1 * (1.0 + sign * p.c) / 2.0;
        if (w <= 0.0) continue;
        out.push_back({w, fock::FockRegister::superposition(
                              2, cutoff, {{{0, 1}, Complex{1.0, 0.0}}, {{1, 0}, double(sign) * std::polar(1.0, p.psi)}})});
    }
    if (p.w2 > 0.0) out.push_back({p.w2, ket({1, 1})});
    return out;
}

struct HeraldedOracle {
    double p_success = 0.0;
    std::map<std::pair<fock::Occupation, fock::Occupation>, Complex> rho;  // normalized output, modes (0, 1)

    Complex element(const fock::Occupation& r, const fock::Occupation& c) const {
        auto it = rho.find({r, c});
        return it == rho.end() ? Complex{} : it->second;
    }
};

/// Circuit: pairs on (0,1) and (2,3), `optics` acts on the 4-mode state vector,
/// monitors are modes m1, m2; kept modes are the other two; each herald
/// pattern carries a phase correction on the first kept mode.
template <class Optics>
HeraldedOracle heralded_state_vector(const repeater::EntangledPairState& a, const repeater::EntangledPairState& b,
                                     Optics optics, std::size_t m1, std::size_t m2,
                                     const std::vector<std::pair<std::array<int, 2>, double>>& heralds) {
    const int cutoff = 2 * repeater::kPairCutoff;
    std::vector<std::size_t> kept;
    for (std::size_t k = 0; k < 4; ++k)
        if (k != m1 && k != m2) kept.push_back(k);
    HeraldedOracle r;
    for (const auto& ca : decompose(a, cutoff))
        for (const auto& cb : decompose(b, cutoff)) {
            std::map<fock::Occupation, Complex> joint;
            for (const auto& [oa, xa] : ca.state.amplitudes())
                for (const auto& [ob, xb] : cb.state.amplitudes())
                    joint[{oa[0], oa[1], ob[0], ob[1]}] += xa * xb;
            const auto out = optics(fock::FockRegister(4, cutoff, std::move(joint)));
            for (const auto& [pattern, correction] : heralds) {
                std::map<fock::Occupation, Complex> cond;
                for (const auto& [occ, x] : out.amplitudes())
                    if (occ[m1] == pattern[0] && occ[m2] == pattern[1]) {
                        const fock::Occupation k{occ[kept[0]], occ[kept[1]]};
                        cond[k] += x * std::polar(1.0, correction * occ[kept[0]]);
                    }
                for (const auto& [ki, xi] : cond)
                    for (const auto& [kj, xj] : cond) r.rho[{ki, kj}] += ca.weight * cb.weight * xi * std::conj(xj);
            }
        }
    for (const auto& [k, x] : r.rho)
        if (k.first == k.second) r.p_success += x.real();
    if (r.p_success > 0.0)
        for (auto& [k, x] : r.rho) x /= r.p_success;
    return r;
}

inline HeraldedOracle sscg_oracle(const repeater::EntangledPairState& a, const repeater::EntangledPairState& b,
                                  double t1 = 0.15, double t2 = 0.85) {
    // Register (a_L, a_R, b_L, b_R).
    auto optics = [&](const fock::FockRegister& s) {
        auto x = fock::apply_beam_splitter(s, fock::ModeIndex{0}, fock::ModeIndex{2}, t1, std::numbers::pi);
        return fock::apply_beam_splitter(x, fock::ModeIndex{1}, fock::ModeIndex{3}, t2, 0.0);
    };
    return heralded_state_vector(a, b, optics, 2, 3, {{{1, 0}, std::numbers::pi}, {{0, 1}, 0.0}});
}

inline HeraldedOracle swap_oracle(const repeater::EntangledPairState& a, const repeater::EntangledPairState& b) {
    // Register (A1, A2, B2, B3).
    auto optics = [](const fock::FockRegister& s) {
        return fock::apply_beam_splitter(s, fock::ModeIndex{1}, fock::ModeIndex{2}, 0.5, std::numbers::pi / 2);
    };
    return heralded_state_vector(a, b, optics, 1, 2, {{{1, 0}, 0.0}, {{0, 1}, std::numbers::pi}});
}

/// Largest elementwise difference between the pair-form output and the oracle state.
inline double state_distance(const repeater::EntangledPairState& pair, const HeraldedOracle& o) {
    const auto rho = repeater::to_density(pair, 2);
    double d = 0.0;
    const auto& basis = rho.basis();
    for (std::size_t i = 0; i < basis.size(); ++i)
        for (std::size_t j = 0; j < basis.size(); ++j)
            d = std::max(d, std::abs(rho.matrix()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) -
                                     o.element(basis.state(i), basis.state(j))));
    for (const auto& [k, x] : o.rho) {
        const auto& [r, c] = k;
        if (r[0] + r[1] > 2 || c[0] + c[1] > 2 || r[0] > 1 || r[1] > 1 || c[0] > 1 || c[1] > 1)
            d = std::max(d, std::abs(x));
    }
    return d;
}

/// Pair grid without two-photon content: one-photon weight, coherence, phase.
inline std::vector<repeater::EntangledPairState> pair_grid() {
    std::vector<repeater::EntangledPairState> out;
    for (double w1 : {0.5, 0.7, 0.9, 1.0})
        for (double c : {1.0, 0.8, 0.5})
            for (double psi : {0.0, 0.4}) out.push_back({1.0 - w1, w1, c, psi, 0.0});
    return out;
}

inline std::string describe(const repeater::EntangledPairState& p) {
    std::ostringstream s;
    s << std::setprecision(3) << "(w1=" << p.w1 << " c=" << p.c << " psi=" << p.psi << ")";
    return s.str();
}

inline void sscg_rows(std::vector<Row>& rows) {
    const auto grid = pair_grid();
    for (std::size_t i = 0; i < grid.size(); i += 3)
        for (std::size_t j = 0; j < grid.size(); j += 4) {
            const auto& a = grid[i];
            const auto& b = grid[j];
            const auto h = repeater::sscg_distill(a, b);
            const auto o = sscg_oracle(a, b);
            const auto l = describe(a) + " x " + describe(b);
            rows.push_back({"sscg", l + " P_success", h.p_success, o.p_success});
            rows.push_back({"sscg", l + " state", 0.0, state_distance(h.output, o)});
        }
}

inline void swap_rows(std::vector<Row>& rows) {
    const auto grid = pair_grid();
    for (std::size_t i = 0; i < grid.size(); i += 3)
        for (std::size_t j = 1; j < grid.size(); j += 4) {
            const auto& a = grid[i];
            const auto& b = grid[j];
            const auto h = repeater::entanglement_swap(a, b);
            const auto o = swap_oracle(a, b);
            const auto l = describe(a) + " x " + describe(b);
            rows.push_back({"swap", l + " P_success", h.p_success, o.p_success});
            rows.push_back({"swap", l + " state", 0.0, state_distance(h.output, o)});
        }
}

/// The groups covered by the scheme-equivalence acceptance check.
inline const std::vector<std::string>& scheme_groups() {
    static const std::vector<std::string> g{"direct", "entangled", "weak_coherent", "hbt"};
    return g;
}

inline std::vector<Row> scheme_suite() {
    std::vector<Row> rows;
    direct_rows(rows);
    entangled_rows(rows);
    weak_rows(rows);
    hbt_rows(rows, false);
    return rows;
}

inline std::vector<Row> full_suite() {
    auto rows = scheme_suite();
    hbt_rows(rows, true);
    w_state_rows(rows);
    sscg_rows(rows);
    swap_rows(rows);
    return rows;
}

inline std::vector<GroupSummary> summarize(const std::vector<Row>& rows, double tol = kTolerance) {
    std::vector<GroupSummary> out;
    for (const auto& r : rows) {
        auto it = std::find_if(out.begin(), out.end(), [&](const GroupSummary& g) { return g.group == r.group; });
        if (it == out.end()) {
            out.push_back({r.group});
            it = std::prev(out.end());
        }
        ++it->points;
        it->failures += !r.pass(tol);
        it->max_error = std::max(it->max_error, r.error());
    }
    return out;
}

inline void write_rows_csv(std::ostream& out, const std::vector<Row>& rows, double tol = kTolerance) {
    out << "# esi.oracle v1\n";
    out << "group,label,analytic,oracle,abs_error,pass\n";
    out << std::setprecision(17);
    for (const auto& r : rows)
        out << r.group << ",\"" << r.label << "\"," << r.analytic << ',' << r.oracle << ',' << r.error() << ','
            << (r.pass(tol) ? "true" : "false") << '\n';
}

inline void write_summary_text(std::ostream& out, const std::vector<GroupSummary>& groups, double tol = kTolerance) {
    out << std::left << std::setw(16) << "group" << std::right << std::setw(8) << "points" << std::setw(10)
        << "failures" << std::setw(14) << "max_error" << "  verdict\n";
    for (const auto& g : groups)
        out << std::left << std::setw(16) << g.group << std::right << std::setw(8) << g.points << std::setw(10)
            << g.failures << std::setw(14) << std::setprecision(3) << std::scientific << g.max_error
            << std::defaultfloat << "  " << (g.failures == 0 ? "PASS" : "FAIL") << '\n';
    out << "tolerance " << tol << '\n';
}

}  // namespace esi::oracle
