/**
 * @file estimation.hpp
 * @brief Visibility fits from delay sweeps, closure phases, and dirty-image reconstruction.
 */
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "esi/schemes.hpp"
#include "esi/sky.hpp"

namespace esi::estimation {

using Complex = std::complex<double>;

struct DeltaCounts {
    double delta;
    std::uint64_t accepted;
    std::uint64_t correlated;
};

struct FringeFit {
    Complex v;
    double re_stderr = 0.0;
    double im_stderr = 0.0;
    double amplitude_stderr = 0.0;
    double phase_stderr = 0.0;
    std::uint64_t accepted = 0;
    std::vector<DeltaCounts> table;
};

class LowStatisticsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint64_t kMinEventsPerDelta = 10;

/// Weighted least squares (weights N_delta) of 2 f - 1 = Re V cos(delta) + Im V sin(delta),
/// with sandwich errors from binomial counting.
inline FringeFit fit_fringe(std::span<const DeltaCounts> table) {
    if (table.size() < 2) throw std::invalid_argument("fringe fit needs at least two delay settings");
    for (const auto& t : table)
        if (t.accepted < kMinEventsPerDelta)
            throw LowStatisticsError("insufficient accepted events at delta = " + std::to_string(t.delta) + " (" +
                                     std::to_string(t.accepted) + " < " + std::to_string(kMinEventsPerDelta) + ")");
    Eigen::Matrix2d ata = Eigen::Matrix2d::Zero();
    Eigen::Vector2d aty = Eigen::Vector2d::Zero();
    for (const auto& t : table) {
        const double n = static_cast<double>(t.accepted);
        const double y = 2.0 * static_cast<double>(t.correlated) / n - 1.0;
        const Eigen::Vector2d a(std::cos(t.delta), std::sin(t.delta));
        ata += n * a * a.transpose();
        aty += n * y * a;
    }
    if (std::abs(ata.determinant()) < 1e-9 * ata.squaredNorm())
        throw std::invalid_argument("delay schedule must include a quadrature pair (delta, delta + pi/2)");
    const Eigen::Matrix2d inv = ata.inverse();
    const Eigen::Vector2d x = inv * aty;
    Eigen::Matrix2d meat = Eigen::Matrix2d::Zero();
    FringeFit fit;
    for (const auto& t : table) {
        const double n = static_cast<double>(t.accepted);
        const double f = static_cast<double>(t.correlated) / n;
        const Eigen::Vector2d a(std::cos(t.delta), std::sin(t.delta));
        // Var(2 f - 1) = 4 f (1 - f) / n; weight n each.
        meat += n * n * (4.0 * f * (1.0 - f) / n) * a * a.transpose();
        fit.accepted += t.accepted;
    }
    const Eigen::Matrix2d cov = inv * meat * inv;
    fit.v = Complex{x(0), x(1)};
    fit.re_stderr = std::sqrt(std::max(0.0, cov(0, 0)));
    fit.im_stderr = std::sqrt(std::max(0.0, cov(1, 1)));
    const double amp = std::abs(fit.v);
    if (amp > 0.0) {
        const Eigen::Vector2d ga(x(0) / amp, x(1) / amp);
        const Eigen::Vector2d gp(-x(1) / (amp * amp), x(0) / (amp * amp));
        fit.amplitude_stderr = std::sqrt(std::max(0.0, ga.dot(cov * ga)));
        fit.phase_stderr = std::sqrt(std::max(0.0, gp.dot(cov * gp)));
    } else {
        fit.amplitude_stderr = std::sqrt(std::max(0.0, cov.trace() / 2.0));
        fit.phase_stderr = std::numbers::pi;
    }
    fit.table.assign(table.begin(), table.end());
    return fit;
}

/// Per-delay correlation counts for telescopes (i, j). Two-telescope logs use
/// the accepted coincidences; direct-detection logs count detector 1 as
/// correlated. The pair delay is delta_i - delta_j taken from the records.
inline std::vector<DeltaCounts> delta_counts(const schemes::EventLog& log, std::size_t i = 0, std::size_t j = 1) {
    std::map<double, DeltaCounts> acc;
    const auto& rec = log.records;
    if (log.scheme == schemes::SchemeKind::direct) {
        for (const auto& r : rec) {
            if (!r.accepted) continue;
            auto& c = acc.try_emplace(r.delta, DeltaCounts{r.delta, 0, 0}).first->second;
            ++c.accepted;
            c.correlated += r.detector == 1;
        }
    } else {
        if (i == j || i >= log.telescopes || j >= log.telescopes)
            throw std::invalid_argument("delta_counts: invalid telescope pair");
        for (std::size_t k = 0; k < rec.size();) {
            const auto slot = log.emission_slot(rec[k]);
            std::size_t end = k;
            while (end < rec.size() && log.emission_slot(rec[end]) == slot) ++end;
            if (end - k == 2 && rec[k].accepted) {
                const schemes::ClickRecord* ri = nullptr;
                const schemes::ClickRecord* rj = nullptr;
                for (std::size_t m = k; m < end; ++m) {
                    if (rec[m].telescope == i) ri = &rec[m];
                    if (rec[m].telescope == j) rj = &rec[m];
                }
                if (ri && rj) {
                    const double d = ri->delta - rj->delta;
                    auto& c = acc.try_emplace(d, DeltaCounts{d, 0, 0}).first->second;
                    ++c.accepted;
                    c.correlated += ri->detector == rj->detector;
                }
            }
            k = end;
        }
    }
    std::vector<DeltaCounts> out;
    for (const auto& [d, c] : acc) out.push_back(c);
    return out;
}

inline FringeFit estimate_visibility(const schemes::EventLog& log, std::size_t i = 0, std::size_t j = 1) {
    const auto counts = delta_counts(log, i, j);
    if (counts.empty()) throw LowStatisticsError("no accepted events for the requested telescope pair");
    return fit_fringe(counts);
}

/// Expected counts for a visibility and schedule (no sampling noise).
inline std::vector<DeltaCounts> analytic_counts(Complex v, std::span<const double> deltas, std::uint64_t per_delta) {
    std::vector<DeltaCounts> out;
    for (double d : deltas) {
        const double f = schemes::direct_detection_probs(v, d).port1;
        out.push_back({d, per_delta, static_cast<std::uint64_t>(std::llround(f * static_cast<double>(per_delta)))});
    }
    return out;
}

inline std::vector<double> uniform_schedule(std::size_t n = 8) {
    std::vector<double> d(n);
    for (std::size_t k = 0; k < n; ++k) d[k] = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    return d;
}

/// arg(V_ij V_jk V_ki) in (-pi, pi].
inline double closure_phase(Complex v_ij, Complex v_jk, Complex v_ki) {
    if (v_ij == Complex{} || v_jk == Complex{} || v_ki == Complex{})
        throw std::domain_error("closure phase undefined for a zero visibility");
    double a = std::arg(v_ij * v_jk * v_ki);
    if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
    return a;
}

/// V_ij -> V_ij e^{i (e_i - e_j)}: errors attached to telescopes.
inline std::vector<std::vector<Complex>> inject_telescope_phases(std::vector<std::vector<Complex>> v,
                                                                 std::span<const double> e) {
    for (std::size_t i = 0; i < v.size(); ++i)
        for (std::size_t j = 0; j < v.size(); ++j) v[i][j] *= std::polar(1.0, e[i] - e[j]);
    return v;
}

/// V_ij -> V_ij e^{i e_ij} with e_ji = -e_ij: errors attached to baselines.
inline std::vector<std::vector<Complex>> inject_baseline_phases(std::vector<std::vector<Complex>> v,
                                                                const std::vector<std::vector<double>>& e) {
    for (std::size_t i = 0; i < v.size(); ++i)
        for (std::size_t j = i + 1; j < v.size(); ++j) {
            v[i][j] *= std::polar(1.0, e[i][j]);
            v[j][i] *= std::polar(1.0, -e[i][j]);
        }
    return v;
}

// ---------------------------------------------------------------------------
// Imaging
// ---------------------------------------------------------------------------

struct BaselineSample {
    sky::Baseline baseline;
    Complex v;
    std::optional<FringeFit> fit;  // present when the value was measured
};

class BaselineSet {
public:
    void add(const sky::Baseline& b, Complex v) {
        for (const auto& s : samples_)
            if (s.baseline.bx == b.bx && s.baseline.by == b.by && s.baseline.wavelength == b.wavelength)
                throw std::invalid_argument("BaselineSet: duplicate baseline");
        samples_.push_back({b, v, std::nullopt});
    }
    void add(const sky::Baseline& b, const FringeFit& fit) {
        add(b, fit.v);
        samples_.back().fit = fit;
    }
    const std::vector<BaselineSample>& samples() const noexcept { return samples_; }
    bool empty() const noexcept { return samples_.empty(); }
    std::size_t size() const noexcept { return samples_.size(); }

    /// Every (u, v) cell of an n x n grid matching `pixel_scale`, forward-modelled from `src`.
    static BaselineSet full_grid(const sky::SourceModel& src, std::size_t n, double pixel_scale, double wavelength) {
        BaselineSet set;
        const double du = 1.0 / (static_cast<double>(n) * pixel_scale);
        const auto half = static_cast<long>(n / 2);
        for (long kv = -half; kv < static_cast<long>(n) - half; ++kv)
            for (long ku = -half; ku < static_cast<long>(n) - half; ++ku) {
                const sky::Baseline b{static_cast<double>(ku) * du * wavelength,
                                      static_cast<double>(kv) * du * wavelength, wavelength};
                set.add(b, sky::visibility(src, b));
            }
        return set;
    }

private:
    std::vector<BaselineSample> samples_;
};

struct Image {
    std::size_t nx = 0;
    std::size_t ny = 0;
    double pixel_scale = 0.0;
    std::vector<double> pixels;  // row-major, row = y index
    double max_imaginary = 0.0;

    double at(std::size_t ix, std::size_t iy) const { return pixels.at(iy * nx + ix); }
};

/// Inverse DFT of the gridded visibilities onto an n x n image with the given
/// pixel scale (pixel (ix, iy) at ((ix - n/2), (iy - n/2)) * pixel_scale). Each
/// sample must sit on a grid cell (u = k / (n * pixel_scale)); missing
/// conjugate cells are filled by Hermitian symmetry, the rest are zero.
inline Image reconstruct_image(const BaselineSet& set, std::size_t n, double pixel_scale) {
    if (set.empty()) throw std::invalid_argument("reconstruct_image: empty baseline set");
    if (n < 2) throw std::invalid_argument("reconstruct_image: grid size must be >= 2");
    if (!(pixel_scale > 0.0)) throw std::invalid_argument("reconstruct_image: pixel scale must be positive");
    const double du = 1.0 / (static_cast<double>(n) * pixel_scale);
    const auto ni = static_cast<long>(n);
    const long half = ni / 2;
    std::vector<Complex> grid(n * n);
    std::vector<bool> filled(n * n, false);
    auto cell = [&](long ku, long kv) {
        auto wrap = [&](long k) { return static_cast<std::size_t>(((k % ni) + ni) % ni); };
        return wrap(kv) * n + wrap(ku);
    };
    for (const auto& s : set.samples()) {
        const double fu = s.baseline.u() / du;
        const double fv = s.baseline.v() / du;
        const long ku = std::lround(fu);
        const long kv = std::lround(fv);
        if (std::abs(fu - static_cast<double>(ku)) > 1e-6 || std::abs(fv - static_cast<double>(kv)) > 1e-6)
            throw std::invalid_argument("reconstruct_image: baseline off the regular grid");
        if (ku < -half || ku >= ni - half || kv < -half || kv >= ni - half)
            throw std::invalid_argument("reconstruct_image: baseline outside the grid extent");
        grid[cell(ku, kv)] = s.v;
        filled[cell(ku, kv)] = true;
    }
    if (!filled[cell(0, 0)]) {
        grid[cell(0, 0)] = 1.0;
        filled[cell(0, 0)] = true;
    }
    for (long kv = -half; kv < ni - half; ++kv)
        for (long ku = -half; ku < ni - half; ++ku)
            if (filled[cell(ku, kv)] && !filled[cell(-ku, -kv)]) {
                grid[cell(-ku, -kv)] = std::conj(grid[cell(ku, kv)]);
                filled[cell(-ku, -kv)] = true;
            }
    // I(x, y) = sum_{u,v} V(u, v) exp(-2 pi i (u theta_x + v theta_y)), separable.
    std::vector<Complex> ex(n * n);  // ex[k * n + x] for k = grid index
    for (long k = 0; k < ni; ++k) {
        const long kk = k < ni - half ? k : k - ni;  // signed frequency
        for (long x = 0; x < ni; ++x)
            ex[static_cast<std::size_t>(k * ni + x)] = std::polar(
                1.0, -2.0 * std::numbers::pi * static_cast<double>(kk) * static_cast<double>(x - half) / static_cast<double>(ni));
    }
    auto signed_index = [&](long k) { return ((k % ni) + ni) % ni; };
    std::vector<Complex> tmp(n * n);  // over (kv, x)
    for (long kv = 0; kv < ni; ++kv)
        for (long x = 0; x < ni; ++x) {
            Complex s{};
            for (long ku = 0; ku < ni; ++ku)
                s += grid[static_cast<std::size_t>(kv * ni + ku)] *
                     ex[static_cast<std::size_t>(signed_index(ku) * ni + x)];
            tmp[static_cast<std::size_t>(kv * ni + x)] = s;
        }
    Image img;
    img.nx = img.ny = n;
    img.pixel_scale = pixel_scale;
    img.pixels.assign(n * n, 0.0);
    double total = 0.0;
    for (long y = 0; y < ni; ++y)
        for (long x = 0; x < ni; ++x) {
            Complex s{};
            for (long kv = 0; kv < ni; ++kv)
                s += tmp[static_cast<std::size_t>(kv * ni + x)] * ex[static_cast<std::size_t>(kv * ni + y)];
            img.pixels[static_cast<std::size_t>(y * ni + x)] = s.real();
            img.max_imaginary = std::max(img.max_imaginary, std::abs(s.imag()));
            total += s.real();
        }
    if (!(std::abs(total) > 0.0)) throw std::domain_error("reconstruct_image: zero total flux");
    for (auto& p : img.pixels) p /= total;
    img.max_imaginary /= std::abs(total);
    return img;
}

}  // namespace esi::estimation
