/**
 * @file fock.hpp
 * @brief Exact few-mode Fock-space simulator: pure registers, density operators,
 *        passive linear optics, loss, and detection statistics.
 *
 * States live in the span of occupation vectors with a total-photon cutoff
 * (default 4). Passive operations conserve photon number, so the truncated
 * space is closed under them and every result here is exact.
 *
 * Beam-splitter convention (creation operators, transmissivity t, phase phi):
 *
 *     a^+ -> sqrt(t) a^+ + i e^{ i phi} sqrt(1-t) b^+
 *     b^+ -> i e^{-i phi} sqrt(1-t) a^+ + sqrt(t) b^+
 *
 * so |1,0> -> (|1,0> + i|0,1>)/sqrt(2) for a balanced splitter with phi = 0.
 */
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "esi/rng.hpp"

namespace esi::fock {

using Complex = std::complex<double>;
using Occupation = std::vector<int>;
using Matrix = Eigen::MatrixXcd;

inline constexpr int kDefaultCutoff = 4;
inline constexpr std::size_t kMaxModes = 9;  // 8 user modes plus one loss ancilla

/// Mode within a register. Range is checked by the operation using it.
struct ModeIndex {
    std::size_t value;
    constexpr explicit ModeIndex(std::size_t v) noexcept : value(v) {}
    friend constexpr bool operator==(ModeIndex, ModeIndex) = default;
};

namespace detail {

inline double factorial(int n) {
    double f = 1.0;
    for (int k = 2; k <= n; ++k) f *= k;
    return f;
}

inline double binomial(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    double c = 1.0;
    for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
    return c;
}

inline int total(const Occupation& occ) { return std::accumulate(occ.begin(), occ.end(), 0); }

inline void enumerate(std::size_t modes, int remaining, Occupation& cur, std::size_t pos,
                      std::vector<Occupation>& out) {
    if (pos == modes) {
        out.push_back(cur);
        return;
    }
    for (int n = remaining; n >= 0; --n) {
        cur[pos] = n;
        enumerate(modes, remaining - n, cur, pos + 1, out);
    }
    cur[pos] = 0;
}

}  // namespace detail

/// Occupation-vector basis for `mode_count` modes with total photons <= cutoff.
/// Ordered by total photon number, then lexicographically descending.
class FockBasis {
public:
    FockBasis(std::size_t modes, int cutoff) : modes_(modes), cutoff_(cutoff) {
        if (modes == 0 || modes > kMaxModes)
            throw std::invalid_argument("FockBasis: mode count must be in [1, " +
                                        std::to_string(kMaxModes) + "]");
        if (cutoff < 0) throw std::invalid_argument("FockBasis: negative photon cutoff");
        for (int n = 0; n <= cutoff; ++n) {
            Occupation cur(modes, 0);
            std::vector<Occupation> sector;
            detail::enumerate(modes, n, cur, 0, sector);
            for (auto& occ : sector)
                if (detail::total(occ) == n) states_.push_back(std::move(occ));
        }
        for (std::size_t i = 0; i < states_.size(); ++i) index_.emplace(states_[i], i);
    }

    /// Shared, cached instance.
    static std::shared_ptr<const FockBasis> get(std::size_t modes, int cutoff) {
        static std::mutex mu;
        static std::map<std::pair<std::size_t, int>, std::shared_ptr<const FockBasis>> cache;
        std::lock_guard lock(mu);
        auto& slot = cache[{modes, cutoff}];
        if (!slot) slot = std::make_shared<const FockBasis>(modes, cutoff);
        return slot;
    }

    std::size_t mode_count() const noexcept { return modes_; }
    int cutoff() const noexcept { return cutoff_; }
    std::size_t size() const noexcept { return states_.size(); }
    const Occupation& state(std::size_t i) const { return states_.at(i); }
    const std::vector<Occupation>& states() const noexcept { return states_; }

    std::optional<std::size_t> index_of(const Occupation& occ) const {
        auto it = index_.find(occ);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t require_index(const Occupation& occ) const {
        auto idx = index_of(occ);
        if (!idx) throw std::out_of_range("FockBasis: occupation outside basis");
        return *idx;
    }

private:
    std::size_t modes_;
    int cutoff_;
    std::vector<Occupation> states_;
    std::map<Occupation, std::size_t> index_;
};

/// Pure state as a sparse amplitude map. Amplitudes need not be normalized
/// (intermediate constructions); use `normalized()` before physical use.
class FockRegister {
public:
    /// Vacuum.
    explicit FockRegister(std::size_t modes, int cutoff = kDefaultCutoff)
        : modes_(modes), cutoff_(cutoff) {
        FockBasis::get(modes, cutoff);  // validates sizes
        amps_.emplace(Occupation(modes, 0), Complex{1.0, 0.0});
    }

    FockRegister(std::size_t modes, int cutoff, std::map<Occupation, Complex> amps)
        : modes_(modes), cutoff_(cutoff), amps_(std::move(amps)) {
        FockBasis::get(modes, cutoff);
        for (const auto& [occ, amp] : amps_) check(occ);
        prune();
    }

    /// Normalized superposition of basis kets.
    static FockRegister superposition(std::size_t modes, int cutoff,
                                      std::initializer_list<std::pair<Occupation, Complex>> terms) {
        std::map<Occupation, Complex> amps;
        for (const auto& [occ, amp] : terms) amps[occ] += amp;
        return FockRegister(modes, cutoff, std::move(amps)).normalized();
    }

    static FockRegister basis_state(const Occupation& occ, int cutoff = kDefaultCutoff) {
        return FockRegister(occ.size(), cutoff, {{occ, Complex{1.0, 0.0}}});
    }

    std::size_t mode_count() const noexcept { return modes_; }
    int cutoff() const noexcept { return cutoff_; }
    const std::map<Occupation, Complex>& amplitudes() const noexcept { return amps_; }

    Complex amplitude(const Occupation& occ) const {
        auto it = amps_.find(occ);
        return it == amps_.end() ? Complex{} : it->second;
    }

    double norm_squared() const {
        double s = 0.0;
        for (const auto& [occ, amp] : amps_) s += std::norm(amp);
        return s;
    }

    FockRegister normalized() const {
        const double n = std::sqrt(norm_squared());
        if (!(n > 0.0)) throw std::domain_error("FockRegister: cannot normalize zero vector");
        auto amps = amps_;
        for (auto& [occ, amp] : amps) amp /= n;
        return FockRegister(modes_, cutoff_, std::move(amps));
    }

    /// Sum of two registers over the same space.
    friend FockRegister operator+(const FockRegister& a, const FockRegister& b) {
        a.require_same_space(b);
        auto amps = a.amps_;
        for (const auto& [occ, amp] : b.amps_) amps[occ] += amp;
        return FockRegister(a.modes_, a.cutoff_, std::move(amps));
    }

    friend FockRegister operator*(Complex s, const FockRegister& r) {
        auto amps = r.amps_;
        for (auto& [occ, amp] : amps) amp *= s;
        return FockRegister(r.modes_, r.cutoff_, std::move(amps));
    }

    Complex inner(const FockRegister& other) const {
        require_same_space(other);
        Complex s{};
        for (const auto& [occ, amp] : amps_) s += std::conj(amp) * other.amplitude(occ);
        return s;
    }

    void require_same_space(const FockRegister& other) const {
        if (modes_ != other.modes_ || cutoff_ != other.cutoff_)
            throw std::invalid_argument("FockRegister: mismatched mode count or cutoff");
    }

private:
    void check(const Occupation& occ) const {
        if (occ.size() != modes_) throw std::invalid_argument("FockRegister: occupation length");
        for (int n : occ)
            if (n < 0) throw std::invalid_argument("FockRegister: negative occupation");
        if (detail::total(occ) > cutoff_)
            throw std::invalid_argument("FockRegister: occupation exceeds photon cutoff");
    }

    void prune() {
        std::erase_if(amps_, [](const auto& kv) { return std::abs(kv.second) == 0.0; });
    }

    std::size_t modes_;
    int cutoff_;
    std::map<Occupation, Complex> amps_;
};

/// Dense density operator over a FockBasis. Physical states have unit trace;
/// heralding routines may hand back sub-normalized operators on request.
class DensityOperator {
public:
    DensityOperator(std::shared_ptr<const FockBasis> basis, Matrix m)
        : basis_(std::move(basis)), m_(std::move(m)) {
        const auto d = static_cast<Eigen::Index>(basis_->size());
        if (m_.rows() != d || m_.cols() != d)
            throw std::invalid_argument("DensityOperator: matrix dimension does not match basis");
    }

    static DensityOperator vacuum(std::size_t modes, int cutoff = kDefaultCutoff) {
        return from_pure(FockRegister(modes, cutoff));
    }

    static DensityOperator zero(std::size_t modes, int cutoff = kDefaultCutoff) {
        auto b = FockBasis::get(modes, cutoff);
        const auto d = static_cast<Eigen::Index>(b->size());
        return DensityOperator(b, Matrix::Zero(d, d));
    }

    static DensityOperator from_pure(const FockRegister& psi) {
        auto b = FockBasis::get(psi.mode_count(), psi.cutoff());
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(b->size()));
        for (const auto& [occ, amp] : psi.amplitudes())
            v(static_cast<Eigen::Index>(b->require_index(occ))) = amp;
        return DensityOperator(b, v * v.adjoint());
    }

    /// Diagonal mixture of basis kets.
    static DensityOperator diagonal(std::size_t modes, int cutoff,
                                    const std::vector<std::pair<Occupation, double>>& weights) {
        auto rho = zero(modes, cutoff);
        for (const auto& [occ, w] : weights) {
            const auto i = static_cast<Eigen::Index>(rho.basis_->require_index(occ));
            rho.m_(i, i) += w;
        }
        return rho;
    }

    const FockBasis& basis() const noexcept { return *basis_; }
    const std::shared_ptr<const FockBasis>& basis_ptr() const noexcept { return basis_; }
    std::size_t mode_count() const noexcept { return basis_->mode_count(); }
    int cutoff() const noexcept { return basis_->cutoff(); }
    const Matrix& matrix() const noexcept { return m_; }

    /// <row| rho |col>; zero when either ket is outside the truncated basis.
    Complex element(const Occupation& row, const Occupation& col) const {
        auto r = basis_->index_of(row);
        auto c = basis_->index_of(col);
        if (!r || !c) return {};
        return m_(static_cast<Eigen::Index>(*r), static_cast<Eigen::Index>(*c));
    }

    double trace() const { return m_.trace().real(); }

    DensityOperator normalized() const {
        const double t = trace();
        if (!(t > 0.0)) throw std::domain_error("DensityOperator: zero trace");
        return DensityOperator(basis_, m_ / t);
    }

    /// <psi| rho |psi>.
    double expectation(const FockRegister& psi) const {
        if (psi.mode_count() != mode_count())
            throw std::invalid_argument("expectation: mode count mismatch");
        Complex s{};
        for (const auto& [ro, ra] : psi.amplitudes())
            for (const auto& [co, ca] : psi.amplitudes()) s += std::conj(ra) * element(ro, co) * ca;
        return s.real();
    }

    /// Photon-number sector weights: result[n] = probability of n photons in total.
    std::vector<double> photon_number_weights() const {
        std::vector<double> w(static_cast<std::size_t>(cutoff()) + 1, 0.0);
        for (std::size_t i = 0; i < basis_->size(); ++i)
            w[static_cast<std::size_t>(detail::total(basis_->state(i)))] +=
                m_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)).real();
        return w;
    }

    double hermiticity_error() const { return (m_ - m_.adjoint()).cwiseAbs().maxCoeff(); }

    double min_eigenvalue() const {
        Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m_ + m_.adjoint()), Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff();
    }

    /// Trace 1 +- 1e-10, Hermitian to 1e-12, eigenvalues >= -1e-10.
    bool is_valid(double trace_tol = 1e-10, double herm_tol = 1e-12, double eig_tol = 1e-10) const {
        return std::abs(trace() - 1.0) <= trace_tol && hermiticity_error() <= herm_tol &&
               min_eigenvalue() >= -eig_tol;
    }

    friend DensityOperator operator+(const DensityOperator& a, const DensityOperator& b) {
        a.require_same_space(b);
        return DensityOperator(a.basis_, a.m_ + b.m_);
    }

    friend DensityOperator operator*(double s, const DensityOperator& r) {
        return DensityOperator(r.basis_, s * r.m_);
    }

    void require_same_space(const DensityOperator& other) const {
        if (basis_ != other.basis_)
            throw std::invalid_argument("DensityOperator: mismatched mode count or cutoff");
    }

private:
    std::shared_ptr<const FockBasis> basis_;
    Matrix m_;
};

namespace detail {

inline void check_mode(std::size_t modes, ModeIndex m) {
    if (m.value >= modes)
        throw std::out_of_range("mode index " + std::to_string(m.value) + " outside register of " +
                                std::to_string(modes) + " modes");
}

inline void check_unit_interval(double x, const char* what) {
    if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error(std::string(what) + " must lie in [0, 1]");
}

/// Output amplitudes of |na, nb> under the two-mode transform; entry k is the
/// coefficient of |k, na+nb-k>.
inline std::vector<Complex> two_mode_image(int na, int nb, const std::array<Complex, 4>& u) {
    const int n = na + nb;
    std::vector<Complex> out(static_cast<std::size_t>(n) + 1, Complex{});
    for (int k1 = 0; k1 <= na; ++k1) {
        const Complex ca = binomial(na, k1) * std::pow(u[0], k1) * std::pow(u[1], na - k1);
        for (int l1 = 0; l1 <= nb; ++l1) {
            const Complex cb = binomial(nb, l1) * std::pow(u[2], l1) * std::pow(u[3], nb - l1);
            out[static_cast<std::size_t>(k1 + l1)] += ca * cb;
        }
    }
    const double denom = std::sqrt(factorial(na) * factorial(nb));
    for (int k = 0; k <= n; ++k)
        out[static_cast<std::size_t>(k)] *= std::sqrt(factorial(k) * factorial(n - k)) / denom;
    return out;
}

/// {a->a, a->b, b->a, b->b} creation-operator coefficients.
inline std::array<Complex, 4> splitter_coefficients(double t, double phase) {
    const double st = std::sqrt(t);
    const double sr = std::sqrt(1.0 - t);
    const Complex i{0.0, 1.0};
    return {Complex{st, 0.0}, i * std::polar(1.0, phase) * sr, i * std::polar(1.0, -phase) * sr,
            Complex{st, 0.0}};
}

inline Eigen::SparseMatrix<Complex> splitter_unitary(const FockBasis& basis, std::size_t a,
                                                     std::size_t b,
                                                     const std::array<Complex, 4>& u) {
    std::vector<Eigen::Triplet<Complex>> trip;
    for (std::size_t col = 0; col < basis.size(); ++col) {
        Occupation occ = basis.state(col);
        const int na = occ[a];
        const int nb = occ[b];
        const auto img = two_mode_image(na, nb, u);
        for (int k = 0; k <= na + nb; ++k) {
            const Complex c = img[static_cast<std::size_t>(k)];
            if (c == Complex{}) continue;
            occ[a] = k;
            occ[b] = na + nb - k;
            trip.emplace_back(static_cast<int>(basis.require_index(occ)), static_cast<int>(col), c);
        }
    }
    const auto d = static_cast<int>(basis.size());
    Eigen::SparseMatrix<Complex> U(d, d);
    U.setFromTriplets(trip.begin(), trip.end());
    return U;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Passive operations
// ---------------------------------------------------------------------------

inline FockRegister apply_beam_splitter(const FockRegister& psi, ModeIndex a, ModeIndex b,
                                        double t, double phase = 0.0) {
    detail::check_mode(psi.mode_count(), a);
    detail::check_mode(psi.mode_count(), b);
    if (a == b) throw std::invalid_argument("apply_beam_splitter: modes must differ");
    detail::check_unit_interval(t, "transmissivity");
    const auto u = detail::splitter_coefficients(t, phase);
    std::map<Occupation, Complex> out;
    for (const auto& [occ, amp] : psi.amplitudes()) {
        const int na = occ[a.value];
        const int nb = occ[b.value];
        const auto img = detail::two_mode_image(na, nb, u);
        Occupation o = occ;
        for (int k = 0; k <= na + nb; ++k) {
            o[a.value] = k;
            o[b.value] = na + nb - k;
            out[o] += amp * img[static_cast<std::size_t>(k)];
        }
    }
    return FockRegister(psi.mode_count(), psi.cutoff(), std::move(out));
}

inline DensityOperator apply_beam_splitter(const DensityOperator& rho, ModeIndex a, ModeIndex b,
                                           double t, double phase = 0.0) {
    detail::check_mode(rho.mode_count(), a);
    detail::check_mode(rho.mode_count(), b);
    if (a == b) throw std::invalid_argument("apply_beam_splitter: modes must differ");
    detail::check_unit_interval(t, "transmissivity");
    const auto U = detail::splitter_unitary(rho.basis(), a.value, b.value,
                                            detail::splitter_coefficients(t, phase));
    Matrix tmp = U * rho.matrix();
    Matrix out = (U * tmp.adjoint()).adjoint();
    return DensityOperator(rho.basis_ptr(), std::move(out));
}

inline FockRegister apply_phase(const FockRegister& psi, ModeIndex m, double delta) {
    detail::check_mode(psi.mode_count(), m);
    auto amps = psi.amplitudes();
    for (auto& [occ, amp] : amps) amp *= std::polar(1.0, occ[m.value] * delta);
    return FockRegister(psi.mode_count(), psi.cutoff(), std::move(amps));
}

inline DensityOperator apply_phase(const DensityOperator& rho, ModeIndex m, double delta) {
    detail::check_mode(rho.mode_count(), m);
    const auto& b = rho.basis();
    Matrix out = rho.matrix();
    for (std::size_t i = 0; i < b.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) *=
                std::polar(1.0, (b.state(i)[m.value] - b.state(j)[m.value]) * delta);
    return DensityOperator(rho.basis_ptr(), std::move(out));
}

/// Pure loss of transmissivity eta on mode m (Kraus form of a splitter into a vacuum ancilla).
inline DensityOperator apply_loss(const DensityOperator& rho, ModeIndex m, double eta) {
    detail::check_mode(rho.mode_count(), m);
    detail::check_unit_interval(eta, "loss transmissivity");
    const auto& b = rho.basis();
    const auto d = static_cast<int>(b.size());
    Matrix out = Matrix::Zero(d, d);
    for (int k = 0; k <= rho.cutoff(); ++k) {
        std::vector<Eigen::Triplet<Complex>> trip;
        for (std::size_t col = 0; col < b.size(); ++col) {
            Occupation occ = b.state(col);
            const int n = occ[m.value];
            if (n < k) continue;
            const double c = std::sqrt(detail::binomial(n, k) * std::pow(eta, n - k) *
                                       std::pow(1.0 - eta, k));
            if (c == 0.0) continue;
            occ[m.value] = n - k;
            trip.emplace_back(static_cast<int>(b.require_index(occ)), static_cast<int>(col), c);
        }
        if (trip.empty()) continue;
        Eigen::SparseMatrix<Complex> E(d, d);
        E.setFromTriplets(trip.begin(), trip.end());
        Matrix tmp = E * rho.matrix();
        out += (E * tmp.adjoint()).adjoint();
    }
    return DensityOperator(rho.basis_ptr(), std::move(out));
}

/// Unnormalized a^+ on mode m. Throws if the result would exceed the cutoff.
inline FockRegister apply_creation(const FockRegister& psi, ModeIndex m) {
    detail::check_mode(psi.mode_count(), m);
    std::map<Occupation, Complex> out;
    for (const auto& [occ, amp] : psi.amplitudes()) {
        Occupation o = occ;
        ++o[m.value];
        out[o] += amp * std::sqrt(static_cast<double>(o[m.value]));
    }
    return FockRegister(psi.mode_count(), psi.cutoff(), std::move(out));
}

// ---------------------------------------------------------------------------
// Composition
// ---------------------------------------------------------------------------

/// a (x) b with modes of `a` first. Components above `cutoff` are dropped;
/// throws if the dropped weight exceeds 1e-12 so truncation never goes unnoticed.
inline DensityOperator tensor(const DensityOperator& a, const DensityOperator& b, int cutoff) {
    const std::size_t ma = a.mode_count();
    const std::size_t mb = b.mode_count();
    auto basis = FockBasis::get(ma + mb, cutoff);
    const auto d = static_cast<Eigen::Index>(basis->size());
    Matrix out = Matrix::Zero(d, d);
    double dropped = 0.0;
    const auto& ba = a.basis();
    const auto& bb = b.basis();
    auto join = [&](const Occupation& x, const Occupation& y) {
        Occupation o(x);
        o.insert(o.end(), y.begin(), y.end());
        return o;
    };
    for (std::size_t i = 0; i < ba.size(); ++i)
        for (std::size_t k = 0; k < bb.size(); ++k) {
            const auto row = basis->index_of(join(ba.state(i), bb.state(k)));
            if (!row) {
                dropped += std::abs(a.matrix()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) *
                                    b.matrix()(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)));
                continue;
            }
            for (std::size_t j = 0; j < ba.size(); ++j) {
                const Complex aij = a.matrix()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                if (aij == Complex{}) continue;
                for (std::size_t l = 0; l < bb.size(); ++l) {
                    const Complex bkl = b.matrix()(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
                    if (bkl == Complex{}) continue;
                    const auto col = basis->index_of(join(ba.state(j), bb.state(l)));
                    if (!col) continue;
                    out(static_cast<Eigen::Index>(*row), static_cast<Eigen::Index>(*col)) += aij * bkl;
                }
            }
        }
    if (dropped > 1e-12) throw std::domain_error("tensor: cutoff truncates a populated component");
    return DensityOperator(basis, std::move(out));
}

inline DensityOperator tensor(const DensityOperator& a, const DensityOperator& b) {
    return tensor(a, b, a.cutoff() + b.cutoff());
}

/// Reduced state on `keep` (in the given order).
inline DensityOperator partial_trace(const DensityOperator& rho, std::span<const ModeIndex> keep) {
    for (auto m : keep) detail::check_mode(rho.mode_count(), m);
    auto rb = FockBasis::get(keep.size(), rho.cutoff());
    const auto d = static_cast<Eigen::Index>(rb->size());
    Matrix out = Matrix::Zero(d, d);
    const auto& b = rho.basis();
    std::vector<bool> kept(rho.mode_count(), false);
    for (auto m : keep) kept[m.value] = true;
    auto split = [&](const Occupation& occ) {
        Occupation k;
        Occupation rest;
        for (auto m : keep) k.push_back(occ[m.value]);
        for (std::size_t i = 0; i < occ.size(); ++i)
            if (!kept[i]) rest.push_back(occ[i]);
        return std::pair{k, rest};
    };
    std::vector<std::pair<Occupation, Occupation>> parts;
    parts.reserve(b.size());
    for (const auto& s : b.states()) parts.push_back(split(s));
    for (std::size_t i = 0; i < b.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) {
            if (parts[i].second != parts[j].second) continue;
            const Complex v = rho.matrix()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (v == Complex{}) continue;
            out(static_cast<Eigen::Index>(rb->require_index(parts[i].first)),
                static_cast<Eigen::Index>(rb->require_index(parts[j].first))) += v;
        }
    return DensityOperator(rb, std::move(out));
}

inline DensityOperator partial_trace(const DensityOperator& rho, std::initializer_list<ModeIndex> keep) {
    return partial_trace(rho, std::span<const ModeIndex>(keep.begin(), keep.size()));
}

// ---------------------------------------------------------------------------
// Detection
// ---------------------------------------------------------------------------

/// Single-detector model. Efficiency thins photons binomially; a dark count adds
/// one independent count per window. Threshold detectors report 0/1.
struct DetectorModel {
    double efficiency = 1.0;
    double dark_prob_per_window = 0.0;
    double timing_jitter_sigma = 0.0;  // seconds; enters `schemes` as a visibility factor
    double coincidence_window = 0.0;   // seconds
    bool photon_number_resolving = false;

    static DetectorModel ideal() { return {}; }
    static DetectorModel ideal_pnr() {
        DetectorModel d;
        d.photon_number_resolving = true;
        return d;
    }

    void validate() const {
        detail::check_unit_interval(efficiency, "detector efficiency");
        if (!(dark_prob_per_window >= 0.0 && dark_prob_per_window < 1.0))
            throw std::domain_error("dark probability per window must lie in [0, 1)");
        if (timing_jitter_sigma < 0.0 || coincidence_window < 0.0)
            throw std::domain_error("detector timing parameters must be non-negative");
    }

    /// P(reported count = c | n photons incident). Index c.
    std::vector<double> count_distribution(int photons) const {
        std::vector<double> detected(static_cast<std::size_t>(photons) + 1, 0.0);
        for (int k = 0; k <= photons; ++k)
            detected[static_cast<std::size_t>(k)] = detail::binomial(photons, k) *
                                                    std::pow(efficiency, k) *
                                                    std::pow(1.0 - efficiency, photons - k);
        std::vector<double> counts(static_cast<std::size_t>(photons) + 2, 0.0);
        for (int k = 0; k <= photons; ++k) {
            counts[static_cast<std::size_t>(k)] += detected[static_cast<std::size_t>(k)] * (1.0 - dark_prob_per_window);
            counts[static_cast<std::size_t>(k) + 1] += detected[static_cast<std::size_t>(k)] * dark_prob_per_window;
        }
        if (photon_number_resolving) return counts;
        const double none = counts[0];
        return {none, 1.0 - none};
    }
};

struct Detection {
    ModeIndex mode;
    DetectorModel model;
};

using ClickPattern = std::vector<int>;
using OutcomeTable = std::map<ClickPattern, double>;

namespace detail {

/// Photon-number marginal over the measured modes.
inline std::map<Occupation, double> measured_marginal(const DensityOperator& rho,
                                                      std::span<const Detection> dets) {
    std::map<Occupation, double> marg;
    const auto& b = rho.basis();
    for (std::size_t i = 0; i < b.size(); ++i) {
        const double p = rho.matrix()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)).real();
        if (p == 0.0) continue;
        Occupation key;
        key.reserve(dets.size());
        for (const auto& d : dets) key.push_back(b.state(i)[d.mode.value]);
        marg[key] += p;
    }
    return marg;
}

/// Distribution over click patterns given photon numbers on each measured mode.
inline OutcomeTable pattern_distribution(const Occupation& photons, std::span<const Detection> dets) {
    OutcomeTable table{{ClickPattern{}, 1.0}};
    for (std::size_t k = 0; k < dets.size(); ++k) {
        const auto counts = dets[k].model.count_distribution(photons[k]);
        OutcomeTable next;
        for (const auto& [pat, p] : table)
            for (std::size_t c = 0; c < counts.size(); ++c) {
                if (counts[c] == 0.0) continue;
                ClickPattern q = pat;
                q.push_back(static_cast<int>(c));
                next[q] += p * counts[c];
            }
        table = std::move(next);
    }
    return table;
}

inline void check_detections(std::size_t modes, std::span<const Detection> dets) {
    std::vector<bool> seen(modes, false);
    for (const auto& d : dets) {
        check_mode(modes, d.mode);
        if (seen[d.mode.value]) throw std::invalid_argument("detections: mode measured twice");
        seen[d.mode.value] = true;
        d.model.validate();
    }
}

}  // namespace detail

/// Exact probability of every click pattern (one entry per detection, in order).
inline OutcomeTable outcome_distribution(const DensityOperator& rho, std::span<const Detection> dets) {
    detail::check_detections(rho.mode_count(), dets);
    OutcomeTable out;
    for (const auto& [photons, p] : detail::measured_marginal(rho, dets))
        for (const auto& [pat, q] : detail::pattern_distribution(photons, dets)) out[pat] += p * q;
    return out;
}

inline OutcomeTable outcome_distribution(const DensityOperator& rho, std::initializer_list<Detection> dets) {
    return outcome_distribution(rho, std::span<const Detection>(dets.begin(), dets.size()));
}

inline ClickPattern sample_outcome(const OutcomeTable& table, CounterRng& rng) {
    if (table.empty()) throw std::invalid_argument("sample_outcome: empty table");
    std::vector<double> w;
    w.reserve(table.size());
    for (const auto& [pat, p] : table) w.push_back(std::max(p, 0.0));
    auto it = table.begin();
    std::advance(it, static_cast<std::ptrdiff_t>(rng.categorical(w)));
    return it->first;
}

inline ClickPattern sample_outcome(const DensityOperator& rho, std::span<const Detection> dets,
                                   CounterRng& rng) {
    return sample_outcome(outcome_distribution(rho, dets), rng);
}

class EmptyConditionalError : public std::runtime_error {
public:
    EmptyConditionalError() : std::runtime_error("post-selection accepts no outcome with non-zero probability") {}
};

struct PostSelection {
    OutcomeTable conditional;
    double acceptance;
};

using PatternPredicate = std::function<bool(const ClickPattern&)>;

inline PostSelection post_select(const OutcomeTable& table, const PatternPredicate& accept) {
    PostSelection r{{}, 0.0};
    for (const auto& [pat, p] : table)
        if (accept(pat)) {
            r.conditional[pat] = p;
            r.acceptance += p;
        }
    if (!(r.acceptance > 0.0)) throw EmptyConditionalError();
    for (auto& [pat, p] : r.conditional) p /= r.acceptance;
    return r;
}

/// Result of measuring some modes and keeping the rest.
struct Heralded {
    double probability;
    std::optional<DensityOperator> state;  // normalized; empty when probability == 0
};

/// Measures `dets`, keeps the outcomes accepted by `accept`, and returns the
/// conditional state of the unmeasured modes (in original order).
inline Heralded condition_on(const DensityOperator& rho, std::span<const Detection> dets,
                             const PatternPredicate& accept) {
    detail::check_detections(rho.mode_count(), dets);
    std::vector<bool> measured(rho.mode_count(), false);
    for (const auto& d : dets) measured[d.mode.value] = true;
    std::vector<ModeIndex> keep;
    for (std::size_t m = 0; m < rho.mode_count(); ++m)
        if (!measured[m]) keep.emplace_back(m);
    if (keep.empty()) throw std::invalid_argument("condition_on: no unmeasured modes left");

    const auto& b = rho.basis();
    auto rb = FockBasis::get(keep.size(), rho.cutoff());
    const auto d = static_cast<Eigen::Index>(rb->size());
    Matrix out = Matrix::Zero(d, d);
    std::map<Occupation, double> weight_cache;
    auto weight = [&](const Occupation& photons) {
        auto it = weight_cache.find(photons);
        if (it != weight_cache.end()) return it->second;
        double w = 0.0;
        for (const auto& [pat, q] : detail::pattern_distribution(photons, dets))
            if (accept(pat)) w += q;
        weight_cache.emplace(photons, w);
        return w;
    };
    std::vector<Occupation> meas(b.size());
    std::vector<Occupation> rest(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) {
        for (const auto& dd : dets) meas[i].push_back(b.state(i)[dd.mode.value]);
        for (auto m : keep) rest[i].push_back(b.state(i)[m.value]);
    }
    for (std::size_t i = 0; i < b.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) {
            if (meas[i] != meas[j]) continue;
            const Complex v = rho.matrix()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (v == Complex{}) continue;
            const double w = weight(meas[i]);
            if (w == 0.0) continue;
            out(static_cast<Eigen::Index>(rb->require_index(rest[i])),
                static_cast<Eigen::Index>(rb->require_index(rest[j]))) += w * v;
        }
    DensityOperator un(rb, std::move(out));
    const double p = un.trace();
    if (!(p > 0.0)) return {0.0, std::nullopt};
    return {p, un.normalized()};
}

}  // namespace esi::fock
