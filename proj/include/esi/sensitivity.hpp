/**
 * @file sensitivity.hpp
 * @brief Photon budgets and limiting magnitude for entanglement-assisted interferometry.
 *
 * Units: wavelengths in metres, bandwidths in nm, rates per second.
 *
 * Detection criterion (both must hold at the limiting magnitude):
 *   (a) accepted signal coincidences >= accidental dark coincidences;
 *   (b) accepted signal coincidences per atmospheric coherence time >= min_events.
 *
 * Accidental coincidences use a window equal to the detector timing FWHM:
 *   dark-dark    : D_L * D_R * window
 *   dark-photon  : D_L * min(1, R_R * window) + D_R * min(1, R_L * window)
 * with D the summed dark rate of a telescope's detectors and R the rate of lab
 * photons reaching it (r * p * mode_rate / 2).
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "esi/repeater.hpp"

namespace esi::sensitivity {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

/// Vega-relative zero point in Cousins I: f_lambda = 1.126e-9 erg s^-1 cm^-2 A^-1 at
/// lambda_eff = 0.79 um, i.e. 4.48e7 photons s^-1 m^-2 nm^-1 for magnitude 0.
inline constexpr double kIBandZeroPoint = 4.48e7;

struct SensitivityBudget {
    std::string name = "default";
    double wavelength = 800e-9;       // m
    double bandwidth_nm = 0.1;        // nm
    double aperture_diameter = 1.0;   // m
    double r = 0.5;                   // entangled pairs per mode
    double p = 0.5;                   // transmission and detection efficiency
    double dark_rate = 100.0;         // counts/s per detector
    int detectors_per_telescope = 2;
    double timing_fwhm = 35e-12;      // s
    double atmospheric_coherence_time = 0.010;  // s
    int min_events = 5;
    double zero_point = kIBandZeroPoint;  // photons s^-1 m^-2 nm^-1 at magnitude 0

    /// Improved detectors: 5 ps timing, 10 cps, bandwidth widened with the timing.
    static SensitivityBudget improved() {
        SensitivityBudget b;
        b.name = "improved";
        b.timing_fwhm = 5e-12;
        b.dark_rate = 10.0;
        b.bandwidth_nm = 0.1 * 35.0 / 5.0;
        return b;
    }

    void validate() const {
        auto positive = [](double v, const char* what) {
            if (!(v > 0.0)) throw std::invalid_argument(std::string(what) + ": must be positive");
        };
        positive(wavelength, "wavelength");
        positive(bandwidth_nm, "bandwidth_nm");
        positive(aperture_diameter, "aperture_diameter");
        positive(timing_fwhm, "timing_fwhm");
        positive(atmospheric_coherence_time, "atmospheric_coherence_time");
        positive(zero_point, "zero_point");
        if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("r: must lie in [0, 1]");
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p: must lie in [0, 1]");
        if (!(dark_rate >= 0.0)) throw std::invalid_argument("dark_rate: must be non-negative");
        if (detectors_per_telescope < 1) throw std::invalid_argument("detectors_per_telescope: must be >= 1");
        if (min_events < 1) throw std::invalid_argument("min_events: must be >= 1");
    }

    double aperture_area() const { return std::numbers::pi * aperture_diameter * aperture_diameter / 4.0; }
};

/// Photons s^-1 nm^-1 collected by one telescope.
inline double photon_rate_from_magnitude(double magnitude, const SensitivityBudget& b) {
    return b.zero_point * std::pow(10.0, -magnitude / 2.5) * b.aperture_area();
}

/// Accepted coincidences per second: (s/2) times the astronomical spectral rate.
inline double signal_event_rate(double s_nm, double astro_rate) {
    if (!(s_nm >= 0.0)) throw std::domain_error("figure of merit must be non-negative");
    return s_nm / 2.0 * astro_rate;
}

/// Delta-lambda (nm) = lambda^2 / (2 pi c tau).
inline double bandwidth_from_timing(double wavelength, double tau) {
    if (!(wavelength > 0.0 && tau > 0.0)) throw std::domain_error("wavelength and timing must be positive");
    return wavelength * wavelength / (2.0 * std::numbers::pi * kSpeedOfLight * tau) * 1e9;
}

/// Modes per second per polarization: c * delta_lambda / lambda^2.
inline double mode_rate(double bandwidth_nm, double wavelength) {
    if (!(bandwidth_nm >= 0.0 && wavelength > 0.0)) throw std::domain_error("invalid bandwidth or wavelength");
    return kSpeedOfLight * bandwidth_nm * 1e-9 / (wavelength * wavelength);
}

inline double figure_of_merit(const SensitivityBudget& b) { return repeater::figure_of_merit(b.r, b.p, b.bandwidth_nm); }

struct DarkCoincidences {
    double dark_dark;
    double dark_photon;
    double total() const { return dark_dark + dark_photon; }
};

inline DarkCoincidences dark_coincidence_rate(const SensitivityBudget& b) {
    const double d = b.dark_rate * b.detectors_per_telescope;
    const double window = b.timing_fwhm;
    const double lab = b.r * b.p * mode_rate(b.bandwidth_nm, b.wavelength) / 2.0;
    const double occupancy = std::min(1.0, lab * window);
    return {d * d * window, 2.0 * d * occupancy};
}

class InfeasibleBudgetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct LimitingMagnitude {
    double magnitude;
    double dark_limited;   // constraint (a) alone
    double event_limited;  // constraint (b) alone
    const char* binding;
};

namespace detail {

/// Largest m in [lo, hi] with ok(m), assuming ok is true below some threshold.
template <class F>
double bisect(F ok, double lo, double hi, double tol) {
    if (!ok(lo)) return -std::numeric_limits<double>::infinity();
    if (ok(hi)) return hi;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        (ok(mid) ? lo : hi) = mid;
    }
    return lo;
}

}  // namespace detail

inline constexpr double kBrightestMagnitude = -30.0;
inline constexpr double kFaintestMagnitude = 40.0;

inline LimitingMagnitude limiting_magnitude(const SensitivityBudget& b, double tol = 1e-4) {
    b.validate();
    const double s = figure_of_merit(b);
    const double dark = dark_coincidence_rate(b).total();
    auto signal = [&](double m) { return signal_event_rate(s, photon_rate_from_magnitude(m, b)); };
    auto ok_a = [&](double m) { return signal(m) >= dark; };
    auto ok_b = [&](double m) { return signal(m) * b.atmospheric_coherence_time >= b.min_events; };
    LimitingMagnitude r{};
    r.dark_limited = detail::bisect(ok_a, kBrightestMagnitude, kFaintestMagnitude, tol);
    r.event_limited = detail::bisect(ok_b, kBrightestMagnitude, kFaintestMagnitude, tol);
    if (!std::isfinite(r.dark_limited) || !std::isfinite(r.event_limited))
        throw InfeasibleBudgetError("budget '" + b.name + "' is infeasible: no magnitude satisfies the criterion");
    r.magnitude = std::min(r.dark_limited, r.event_limited);
    r.binding = r.dark_limited <= r.event_limited ? "dark" : "events";
    return r;
}

inline void write_budget_header(std::ostream& out) {
    out << "# esi.budget v1\n"
        << "name,wavelength_m,bandwidth_nm,aperture_m,r,p,dark_cps,timing_fwhm_s,t_atm_s,min_events,"
           "zero_point,s_nm,mode_rate_hz,dark_coinc_hz,m_dark,m_events,m_lim,binding\n";
}

inline void write_budget_row(std::ostream& out, const SensitivityBudget& b) {
    const auto lim = limiting_magnitude(b);
    std::ostringstream row;
    row << std::setprecision(10) << b.name << ',' << b.wavelength << ',' << b.bandwidth_nm << ','
        << b.aperture_diameter << ',' << b.r << ',' << b.p << ',' << b.dark_rate << ',' << b.timing_fwhm << ','
        << b.atmospheric_coherence_time << ',' << b.min_events << ',' << b.zero_point << ',' << figure_of_merit(b)
        << ',' << mode_rate(b.bandwidth_nm, b.wavelength) << ',' << dark_coincidence_rate(b).total() << ','
        << std::setprecision(6) << lim.dark_limited << ',' << lim.event_limited << ',' << lim.magnitude << ','
        << lim.binding << '\n';
    out << row.str();
}

/// Aligned two-column text table.
inline void write_budget_text(std::ostream& out, const SensitivityBudget& b) {
    const auto lim = limiting_magnitude(b);
    const auto dc = dark_coincidence_rate(b);
    auto line = [&](const std::string& k, double v, const std::string& unit) {
        out << std::left << std::setw(28) << k << std::right << std::setw(14) << std::setprecision(5) << v << "  "
            << unit << '\n';
    };
    out << "budget: " << b.name << '\n';
    line("wavelength", b.wavelength * 1e9, "nm");
    line("bandwidth", b.bandwidth_nm, "nm");
    line("aperture diameter", b.aperture_diameter, "m");
    line("r", b.r, "");
    line("p", b.p, "");
    line("figure of merit s", figure_of_merit(b), "nm");
    line("mode rate", mode_rate(b.bandwidth_nm, b.wavelength), "1/s");
    line("dark rate per detector", b.dark_rate, "1/s");
    line("timing FWHM", b.timing_fwhm * 1e12, "ps");
    line("dark-dark coincidences", dc.dark_dark, "1/s");
    line("dark-photon coincidences", dc.dark_photon, "1/s");
    line("limit from dark counts", lim.dark_limited, "mag");
    line("limit from event count", lim.event_limited, "mag");
    line("limiting magnitude", lim.magnitude, "mag");
}

}  // namespace esi::sensitivity
