/**
 * @file sky.hpp
 * @brief Source brightness models, baseline geometry and complex visibilities.
 *
 * Phase convention: a point at angle theta reaches telescope position x with
 * phase 2*pi*x*sin(theta)/lambda. A baseline b = x_L - x_R therefore gives
 * phi = 2*pi*b*sin(theta)/lambda at L relative to R, and
 *
 *     V(b) = sum_k I_k exp(i phi_k) / sum_k I_k .
 *
 * The single-photon state arriving at (L, R) carries V as <1,0|rho|0,1> = V/2.
 */
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "esi/fock.hpp"

namespace esi::sky {

using Complex = std::complex<double>;

struct PointComponent {
    double theta_x = 0.0;  // radians
    double theta_y = 0.0;  // radians
    double intensity = 0.0;
};

/// Discrete point sources; exact sin(theta) is used for their phases.
struct PointList {
    std::vector<PointComponent> points;
};

/// Row-major intensity grid (rows along y). Pixel (ix, iy) sits at
/// ((ix - nx/2) * scale, (iy - ny/2) * scale); phases use the small-angle form.
struct PixelGrid {
    std::size_t nx = 0;
    std::size_t ny = 0;
    double pixel_scale = 0.0;  // radians per pixel
    std::vector<double> intensity;

    double at(std::size_t ix, std::size_t iy) const { return intensity.at(iy * nx + ix); }
    double theta_x(std::size_t ix) const {
        return (static_cast<double>(ix) - static_cast<double>(nx / 2)) * pixel_scale;
    }
    double theta_y(std::size_t iy) const {
        return (static_cast<double>(iy) - static_cast<double>(ny / 2)) * pixel_scale;
    }
};

class SourceModel {
public:
    explicit SourceModel(PointList p) : rep_(std::move(p)) { validate(); }
    explicit SourceModel(PixelGrid g) : rep_(std::move(g)) { validate(); }

    static SourceModel point(double theta_x = 0.0, double theta_y = 0.0) {
        return SourceModel(PointList{{{theta_x, theta_y, 1.0}}});
    }

    /// Two points at +-separation/2 along x with the given intensities.
    static SourceModel binary(double separation, double i1 = 1.0, double i2 = 1.0) {
        return SourceModel(PointList{{{-separation / 2, 0.0, i1}, {separation / 2, 0.0, i2}}});
    }

    bool is_grid() const noexcept { return std::holds_alternative<PixelGrid>(rep_); }
    const PointList& points() const { return std::get<PointList>(rep_); }
    const PixelGrid& grid() const { return std::get<PixelGrid>(rep_); }

    double total_intensity() const {
        double s = 0.0;
        if (is_grid())
            for (double v : grid().intensity) s += v;
        else
            for (const auto& p : points().points) s += p.intensity;
        return s;
    }

private:
    void validate() const {
        if (is_grid()) {
            const auto& g = grid();
            if (g.intensity.size() != g.nx * g.ny || g.nx == 0 || g.ny == 0)
                throw std::invalid_argument("PixelGrid: intensity size does not match dimensions");
            if (!(g.pixel_scale > 0.0)) throw std::invalid_argument("PixelGrid: pixel scale must be positive");
            for (double v : g.intensity)
                if (!(v >= 0.0)) throw std::invalid_argument("SourceModel: negative intensity");
        } else {
            for (const auto& p : points().points)
                if (!(p.intensity >= 0.0)) throw std::invalid_argument("SourceModel: negative intensity");
        }
        if (!(total_intensity() > 0.0)) throw std::invalid_argument("SourceModel: zero total intensity");
    }

    std::variant<PointList, PixelGrid> rep_;
};

/// Projected baseline (metres) at observing wavelength (metres).
struct Baseline {
    double bx = 0.0;
    double by = 0.0;
    double wavelength = 0.0;

    Baseline reversed() const { return {-bx, -by, wavelength}; }
    double u() const { return bx / wavelength; }  // cycles per radian
    double v() const { return by / wavelength; }
};

inline void require_wavelength(const Baseline& b) {
    if (!(b.wavelength > 0.0)) throw std::domain_error("baseline wavelength must be positive");
}

/// Phase of a point at theta for a 1-D baseline (exact sin).
inline double point_phase(const Baseline& b, double theta) {
    require_wavelength(b);
    if (!(std::abs(theta) < std::numbers::pi / 2))
        throw std::domain_error("point_phase: |theta| must be below pi/2");
    return 2.0 * std::numbers::pi * b.bx * std::sin(theta) / b.wavelength;
}

inline double point_phase(const Baseline& b, double theta_x, double theta_y) {
    require_wavelength(b);
    return 2.0 * std::numbers::pi * (b.bx * std::sin(theta_x) + b.by * std::sin(theta_y)) / b.wavelength;
}

inline Complex visibility(const SourceModel& src, const Baseline& b) {
    require_wavelength(b);
    Complex acc{};
    if (src.is_grid()) {
        const auto& g = src.grid();
        const double k = 2.0 * std::numbers::pi / b.wavelength;
        // Separable phase factors.
        std::vector<Complex> fx(g.nx), fy(g.ny);
        for (std::size_t ix = 0; ix < g.nx; ++ix) fx[ix] = std::polar(1.0, k * b.bx * g.theta_x(ix));
        for (std::size_t iy = 0; iy < g.ny; ++iy) fy[iy] = std::polar(1.0, k * b.by * g.theta_y(iy));
        for (std::size_t iy = 0; iy < g.ny; ++iy)
            for (std::size_t ix = 0; ix < g.nx; ++ix) acc += g.at(ix, iy) * fx[ix] * fy[iy];
    } else {
        for (const auto& p : src.points().points)
            acc += p.intensity * std::polar(1.0, point_phase(b, p.theta_x, p.theta_y));
    }
    return acc / src.total_intensity();
}

/// Single-photon state over modes (L, R): 1/2 on |0,1> and |1,0>, V/2 on <1,0|.|0,1>.
inline fock::DensityOperator arrival_density_matrix(Complex v, int cutoff = fock::kDefaultCutoff) {
    if (std::abs(v) > 1.0 + 1e-12) throw std::domain_error("arrival_density_matrix: |V| > 1");
    auto rho = fock::DensityOperator::zero(2, cutoff);
    fock::Matrix m = rho.matrix();
    const auto& b = rho.basis();
    const auto i01 = static_cast<Eigen::Index>(b.require_index({0, 1}));
    const auto i10 = static_cast<Eigen::Index>(b.require_index({1, 0}));
    m(i01, i01) = 0.5;
    m(i10, i10) = 0.5;
    m(i10, i01) = 0.5 * v;
    m(i01, i10) = 0.5 * std::conj(v);
    return fock::DensityOperator(rho.basis_ptr(), std::move(m));
}

// ---------------------------------------------------------------------------
// Source files
// ---------------------------------------------------------------------------

/// Point list: one `theta_x theta_y intensity` triple per line, radians.
/// Blank lines and lines starting with '#' are skipped.
inline SourceModel read_point_list(std::istream& in) {
    PointList pl;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ss(line);
        PointComponent p;
        if (!(ss >> p.theta_x >> p.theta_y >> p.intensity))
            throw std::runtime_error("point list line " + std::to_string(lineno) +
                                     ": expected 'theta_x theta_y intensity'");
        std::string extra;
        if (ss >> extra)
            throw std::runtime_error("point list line " + std::to_string(lineno) + ": trailing field '" +
                                     extra + "'");
        pl.points.push_back(p);
    }
    if (pl.points.empty()) throw std::runtime_error("point list: no sources");
    return SourceModel(std::move(pl));
}

namespace detail {

inline std::string next_pnm_token(std::istream& in) {
    std::string tok;
    while (in >> tok) {
        if (tok[0] == '#') {
            std::string rest;
            std::getline(in, rest);
            continue;
        }
        return tok;
    }
    throw std::runtime_error("graymap: unexpected end of header");
}

}  // namespace detail

/// Portable graymap (P2 ASCII or P5 binary, 8- or 16-bit). Row 0 of the file is
/// the top of the image and maps to the largest theta_y.
inline SourceModel read_graymap(std::istream& in, double pixel_scale) {
    const std::string magic = detail::next_pnm_token(in);
    if (magic != "P2" && magic != "P5") throw std::runtime_error("graymap: expected P2 or P5 magic");
    PixelGrid g;
    g.nx = std::stoul(detail::next_pnm_token(in));
    g.ny = std::stoul(detail::next_pnm_token(in));
    const unsigned long maxval = std::stoul(detail::next_pnm_token(in));
    if (maxval == 0 || maxval > 65535) throw std::runtime_error("graymap: invalid maxval");
    g.pixel_scale = pixel_scale;
    g.intensity.assign(g.nx * g.ny, 0.0);
    std::vector<double> raw(g.nx * g.ny);
    if (magic == "P2") {
        for (auto& v : raw) v = std::stod(detail::next_pnm_token(in));
    } else {
        in.get();  // single whitespace after maxval
        for (auto& v : raw) {
            unsigned value = static_cast<unsigned char>(in.get());
            if (maxval > 255) value = (value << 8) | static_cast<unsigned char>(in.get());
            v = value;
        }
        if (!in) throw std::runtime_error("graymap: truncated pixel data");
    }
    for (std::size_t row = 0; row < g.ny; ++row)
        for (std::size_t ix = 0; ix < g.nx; ++ix)
            g.intensity[(g.ny - 1 - row) * g.nx + ix] = raw[row * g.nx + ix];
    return SourceModel(std::move(g));
}

inline SourceModel load_source(const std::string& path, double pixel_scale = 0.0) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open source file '" + path + "'");
    const bool pgm = path.size() > 4 && (path.ends_with(".pgm") || path.ends_with(".PGM"));
    if (pgm) {
        if (!(pixel_scale > 0.0)) throw std::runtime_error("graymap source requires a positive pixel scale");
        return read_graymap(in, pixel_scale);
    }
    return read_point_list(in);
}

/// ASCII graymap with a schema comment on the second line; values scaled to maxval.
inline void write_graymap(std::ostream& out, std::size_t nx, std::size_t ny, const std::vector<double>& image,
                          unsigned maxval = 65535) {
    double hi = 0.0;
    for (double v : image) hi = std::max(hi, v);
    out << "P2\n# esi.image v1\n" << nx << ' ' << ny << '\n' << maxval << '\n';
    for (std::size_t row = 0; row < ny; ++row) {
        const std::size_t iy = ny - 1 - row;
        for (std::size_t ix = 0; ix < nx; ++ix) {
            const double v = hi > 0.0 ? std::max(0.0, image[iy * nx + ix]) / hi : 0.0;
            out << static_cast<unsigned>(std::lround(v * maxval)) << (ix + 1 == nx ? '\n' : ' ');
        }
    }
}

}  // namespace esi::sky
