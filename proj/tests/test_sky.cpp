#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <sstream>

#include "esi/sky.hpp"

using namespace esi::sky;
using Complex = std::complex<double>;

namespace {
const double kPi = std::numbers::pi;
}

TEST(PointPhase, Examples) {
    const Baseline b{100.0, 0.0, 800e-9};
    EXPECT_NEAR(point_phase(b, 4e-9), kPi, 1e-6);
    EXPECT_EQ(point_phase(b, 0.0), 0.0);
    EXPECT_NEAR(point_phase(b, -4e-9), -kPi, 1e-6);
    EXPECT_THROW(point_phase(Baseline{100.0, 0.0, 0.0}, 1e-9), std::domain_error);
}

TEST(Visibility, PointSourceHasUnitModulus) {
    const Baseline b{330.0, 20.0, 800e-9};
    EXPECT_NEAR(std::abs(visibility(SourceModel::point(3e-9, -1e-9), b)), 1.0, 1e-14);
    EXPECT_NEAR(std::abs(visibility(SourceModel::point(), b) - 1.0), 0.0, 1e-15);
}

TEST(Visibility, BinaryClosedForm) {
    const double s = 2e-9;
    const Baseline b{150.0, 0.0, 800e-9};
    const double phi = 2 * kPi * b.bx * std::sin(s / 2) / b.wavelength;
    const Complex v = visibility(SourceModel::binary(s, 2.0, 1.0), b);
    const Complex want = (2.0 * std::polar(1.0, -phi) + std::polar(1.0, phi)) / 3.0;
    EXPECT_NEAR(std::abs(v - want), 0.0, 1e-14);
    // Equal components give a real cosine.
    EXPECT_NEAR(std::abs(visibility(SourceModel::binary(s), b) - std::cos(phi)), 0.0, 1e-14);
}

TEST(Visibility, UniformDiskMatchesAiryPattern) {
    // Fine point sampling of a uniform disk against 2 J1(x) / x.
    const double radius = 5e-9;
    const int n = 401;
    PointList pl;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double x = (2.0 * (i + 0.5) / n - 1.0) * radius;
            const double y = (2.0 * (j + 0.5) / n - 1.0) * radius;
            if (x * x + y * y <= radius * radius) pl.points.push_back({x, y, 1.0});
        }
    const SourceModel disk(std::move(pl));
    for (double bx : {10.0, 30.0, 60.0}) {
        const Baseline b{bx, 0.0, 800e-9};
        const double arg = 2 * kPi * bx * radius / b.wavelength;
        const double want = 2.0 * std::cyl_bessel_j(1.0, arg) / arg;
        EXPECT_NEAR(std::abs(visibility(disk, b) - want), 0.0, 2e-3) << bx;
    }
}

TEST(Visibility, LinearityInIntensity) {
    const Baseline b{120.0, 40.0, 700e-9};
    const SourceModel a(PointList{{{1e-9, 0.0, 1.0}}});
    const SourceModel c(PointList{{{-2e-9, 1e-9, 3.0}}});
    const SourceModel sum(PointList{{{1e-9, 0.0, 1.0}, {-2e-9, 1e-9, 3.0}}});
    const Complex want = (1.0 * visibility(a, b) + 3.0 * visibility(c, b)) / 4.0;
    EXPECT_NEAR(std::abs(visibility(sum, b) - want), 0.0, 1e-14);
}

TEST(Visibility, ShiftTheorem) {
    const Baseline b{200.0, -50.0, 800e-9};
    const double dx = 1.5e-9, dy = -0.5e-9;
    PointList base{{{0.0, 0.0, 1.0}, {2e-9, 1e-9, 0.5}}};
    PointList shifted = base;
    for (auto& p : shifted.points) {
        p.theta_x += dx;
        p.theta_y += dy;
    }
    const Complex v0 = visibility(SourceModel(base), b);
    const Complex v1 = visibility(SourceModel(shifted), b);
    EXPECT_NEAR(std::abs(v1), std::abs(v0), 1e-9);
    // Small angles: the shift multiplies by exp(i k (bx dx + by dy)).
    const double k = 2 * kPi / b.wavelength;
    EXPECT_NEAR(std::abs(v1 - v0 * std::polar(1.0, k * (b.bx * dx + b.by * dy))), 0.0, 1e-9);
}

TEST(Visibility, HermitianUnderBaselineReversal) {
    const Baseline b{80.0, 30.0, 800e-9};
    const auto src = SourceModel::binary(3e-9, 1.0, 0.4);
    EXPECT_NEAR(std::abs(visibility(src, b.reversed()) - std::conj(visibility(src, b))), 0.0, 1e-14);
    EXPECT_LE(std::abs(visibility(src, b)), 1.0 + 1e-15);
}

TEST(ArrivalState, EigenvaluesAndCoherence) {
    const auto rho = arrival_density_matrix(0.5);
    EXPECT_NEAR(rho.trace(), 1.0, 1e-15);
    Eigen::SelfAdjointEigenSolver<esi::fock::Matrix> es(rho.matrix());
    auto ev = es.eigenvalues();
    std::vector<double> nonzero;
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        if (std::abs(ev(i)) > 1e-12) nonzero.push_back(ev(i));
    ASSERT_EQ(nonzero.size(), 2u);
    std::sort(nonzero.begin(), nonzero.end());
    EXPECT_NEAR(nonzero[0], 0.25, 1e-14);
    EXPECT_NEAR(nonzero[1], 0.75, 1e-14);
    const Complex v{0.3, -0.4};
    EXPECT_NEAR(std::abs(arrival_density_matrix(v).element({1, 0}, {0, 1}) - v / 2.0), 0.0, 1e-15);
    EXPECT_THROW(arrival_density_matrix(1.1), std::domain_error);
}

TEST(SourceModel, RejectsInvalid) {
    EXPECT_THROW(SourceModel(PointList{}), std::invalid_argument);
    EXPECT_THROW(SourceModel(PointList{{{0.0, 0.0, -1.0}}}), std::invalid_argument);
    EXPECT_THROW(SourceModel(PixelGrid{2, 2, 1e-9, {1.0, 2.0}}), std::invalid_argument);
    EXPECT_THROW(SourceModel(PixelGrid{1, 1, 0.0, {1.0}}), std::invalid_argument);
}

TEST(SourceFiles, PointList) {
    std::istringstream in("# binary\n-1e-9 0 2\n\n1e-9 0 1\n");
    const auto src = read_point_list(in);
    ASSERT_EQ(src.points().points.size(), 2u);
    EXPECT_EQ(src.points().points[0].intensity, 2.0);
    std::istringstream bad("1e-9 0\n");
    try {
        read_point_list(bad);
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
    }
}

TEST(SourceFiles, GraymapRoundTrip) {
    const std::vector<double> img{0.0, 1.0, 2.0, 3.0, 4.0, 5.0};  // 3 x 2, row 0 is bottom
    std::ostringstream out;
    write_graymap(out, 3, 2, img, 5);
    const std::string text = out.str();
    EXPECT_EQ(text.substr(0, 3), "P2\n");
    EXPECT_NE(text.find("# esi.image v1"), std::string::npos);
    std::istringstream in(text);
    const auto src = read_graymap(in, 1e-9);
    ASSERT_TRUE(src.is_grid());
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_EQ(src.grid().intensity[i], img[i]);
}

TEST(SourceFiles, BinaryGraymap) {
    std::string data = "P5\n2 1\n255\n";
    data.push_back(static_cast<char>(10));
    data.push_back(static_cast<char>(200));
    std::istringstream in(data);
    const auto src = read_graymap(in, 1e-9);
    EXPECT_EQ(src.grid().at(0, 0), 10.0);
    EXPECT_EQ(src.grid().at(1, 0), 200.0);
    std::istringstream bad("P3\n1 1\n1\n1\n");
    EXPECT_THROW(read_graymap(bad, 1e-9), std::runtime_error);
}

TEST(PixelGrid, CentreConvention) {
    const PixelGrid g{4, 3, 2e-9, std::vector<double>(12, 1.0)};
    EXPECT_EQ(g.theta_x(2), 0.0);
    EXPECT_EQ(g.theta_y(1), 0.0);
    EXPECT_NEAR(g.theta_x(0), -4e-9, 1e-24);
}
