#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "couplab/errors.hpp"
#include "couplab/grid.hpp"
#include "couplab/haar.hpp"

using namespace couplab;

TEST_CASE("breakpoints and cell lookup on half-open cells") {
    HaarSystem s(0.0, 1.0);
    CHECK(s.width(0) == doctest::Approx(1.0));
    CHECK(s.width(2) == doctest::Approx(0.25));
    CHECK(s.breakpoint(2, 3) == doctest::Approx(0.75));
    // right endpoint belongs to the cell, left does not
    CHECK(s.cell(1, 0.5) == 1);
    CHECK(s.cell(1, 0.5 + 1e-12) == 2);
    CHECK(s.cell(3, 1.0) == 8);
    CHECK(s.cell(3, 0.0) == 0);
    CHECK(s.cell(3, -0.2) == 0);
    CHECK(s.cell(3, 1.2) == 0);
    CHECK(s.contains(2, 2, 0.3));
    CHECK_FALSE(s.contains(2, 2, 0.25));
    CHECK_THROWS_AS(HaarSystem(1.0, 1.0), ConfigError);
}

TEST_CASE("cell indices are consistent across levels") {
    HaarSystem s(-2.0, 2.0);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 500; ++trial) {
        double x = u(rng);
        if (x <= -2.0) continue;
        for (int j = 0; j <= 6; ++j) {
            std::uint64_t k = s.cell(j, x);
            REQUIRE(k >= 1);
            CHECK(s.breakpoint(j, k - 1) < x);
            CHECK(x <= s.breakpoint(j, k));
            std::uint64_t child = s.cell(j + 1, x);
            CHECK((child + 1) / 2 == k);
        }
    }
}

TEST_CASE("father and wavelet point values") {
    HaarSystem s(0.0, 1.0);
    CHECK(s.h0(0.3) == doctest::Approx(1.0));
    CHECK(s.h0(1.0) == doctest::Approx(1.0));
    CHECK(s.h0(0.0) == 0.0);
    CHECK(s.h(0, 1, 0.25) == doctest::Approx(1.0));
    CHECK(s.h(0, 1, 0.75) == doctest::Approx(-1.0));
    CHECK(s.h(0, 1, 0.5) == doctest::Approx(1.0));  // breakpoint goes left
    CHECK(s.h(0, 1, 0.0) == 0.0);

    HaarSystem w(-2.0, 2.0);
    CHECK(w.h0(0.1) == doctest::Approx(0.5));
    CHECK(w.h(1, 2, 0.5) == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(w.h(1, 2, 1.5) == doctest::Approx(-1.0 / std::sqrt(2.0)));
    CHECK(w.h(1, 2, -0.5) == 0.0);
}

TEST_CASE("system is orthonormal under exact cell-wise integration") {
    // every product of basis functions is constant on level-(j*+1) cells,
    // so midpoint sums over those cells integrate it exactly
    HaarSystem s(-2.0, 2.0);
    const int j_star = 3;
    std::uint64_t fine = std::uint64_t{1} << (j_star + 1);
    double w = s.width(j_star + 1);
    std::vector<std::function<double(double)>> basis;
    basis.emplace_back([&s](double x) { return s.h0(x); });
    for (int j = 0; j <= j_star; ++j)
        for (std::uint64_t k = 1; k <= (std::uint64_t{1} << j); ++k)
            basis.emplace_back([&s, j, k](double x) { return s.h(j, k, x); });
    for (std::size_t a = 0; a < basis.size(); ++a) {
        for (std::size_t b = a; b < basis.size(); ++b) {
            double dot = 0.0;
            for (std::uint64_t c = 1; c <= fine; ++c) {
                double mid = s.breakpoint(j_star + 1, c - 1) + 0.5 * w;
                dot += w * basis[a](mid) * basis[b](mid);
            }
            CHECK(dot == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("expansion of the identity function pins known coefficients") {
    Grid g = Grid::uniform(0.0, 1.0, 1.0 / 128.0);
    GridFunction id = GridFunction::tabulate(g, [](double x) { return x; });
    HaarExpansion e = haar_expand(id, 0.0, 1.0, 2);
    CHECK(e.c0 == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(e.coefficient(0, 1) == doctest::Approx(-0.25).epsilon(1e-14));
    // slope-1 segments: c_{j,k} = -2^{-3j/2-2} for every k
    CHECK(e.coefficient(1, 1) == doctest::Approx(-std::pow(2.0, -3.5)).epsilon(1e-13));
    CHECK(e.coefficient(1, 2) == doctest::Approx(-std::pow(2.0, -3.5)).epsilon(1e-13));
    for (std::uint64_t k = 1; k <= 4; ++k)
        CHECK(e.coefficient(2, k) == doctest::Approx(-0.03125).epsilon(1e-13));
    CHECK_THROWS_AS(haar_expand(id, 0.0, 1.0, -1), ConfigError);
}

TEST_CASE("reconstruction equals the cell average one level below j*") {
    Grid g = Grid::uniform(-2.0, 2.0, 1.0 / 256.0);
    GridFunction f = GridFunction::tabulate(g, [](double x) { return std::sin(x); });
    HaarExpansion e = haar_expand(f, -2.0, 2.0, 3);
    double w = e.sys.width(4);  // 0.25
    double avg = f.integral(0.25, 0.5) / w;
    CHECK(e.reconstruct(0.3) == doctest::Approx(avg).epsilon(1e-12));
    CHECK(e.reconstruct(0.3) == doctest::Approx((std::cos(0.25) - std::cos(0.5)) / w).epsilon(1e-5));
    // constant within a cell, jumps across the breakpoint
    CHECK(e.reconstruct(0.26) == doctest::Approx(e.reconstruct(0.49)).epsilon(1e-12));
    CHECK(e.reconstruct(0.51) != doctest::Approx(e.reconstruct(0.49)).epsilon(1e-6));
    CHECK(e.reconstruct(-2.0) == 0.0);
}

TEST_CASE("energy identity for the identity function is exact") {
    // int_0^1 x^2 = c0^2 + sum c_{j,k}^2 + w^2/12 with w the finest cell width
    Grid g = Grid::uniform(0.0, 1.0, 1.0 / 128.0);
    GridFunction id = GridFunction::tabulate(g, [](double x) { return x; });
    HaarExpansion e = haar_expand(id, 0.0, 1.0, 4);
    double energy = e.c0 * e.c0;
    for (const auto& level : e.coeff)
        for (double c : level) energy += c * c;
    double w = e.sys.width(5);
    CHECK(energy + w * w / 12.0 == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("coefficient bounds are met with equality for linear functions") {
    Grid g = Grid::uniform(0.0, 1.0, 1.0 / 128.0);
    GridFunction id = GridFunction::tabulate(g, [](double x) { return x; });
    HaarExpansion e = haar_expand(id, 0.0, 1.0, 2);
    CoefficientBounds cb = haar_coefficient_bounds(e, id);
    CHECK(cb.holds);
    CHECK(cb.sup_g == doctest::Approx(1.0));
    CHECK(cb.sup_gprime == doctest::Approx(1.05));  // exact slope times slack
    CHECK(cb.c0_bound == doctest::Approx(1.0));
    // slope bound is tight, so the ratio is exactly the slack factor's inverse
    CHECK(cb.worst_ratio == doctest::Approx(1.0 / 1.05).epsilon(1e-9));
    CHECK(cb.residual_sup == doctest::Approx(0.0625).epsilon(1e-12));
    CHECK(cb.residual_bound == doctest::Approx(0.0625 * 1.05).epsilon(1e-12));
}

TEST_CASE("constant functions meet the father bound with equality") {
    Grid g = Grid::uniform(0.0, 1.0, 1.0 / 64.0);
    GridFunction c = GridFunction::constant(g, 0.7);
    HaarExpansion e = haar_expand(c, 0.0, 1.0, 3);
    CHECK(e.c0 == doctest::Approx(0.7).epsilon(1e-14));
    for (const auto& level : e.coeff)
        for (double v : level) CHECK(std::abs(v) < 1e-14);
    CoefficientBounds cb = haar_coefficient_bounds(e, c);
    CHECK(cb.holds);
    CHECK(cb.c0_bound == doctest::Approx(0.7).epsilon(1e-14));
    CHECK(cb.residual_sup < 1e-14);
}

TEST_CASE("bounds hold for a smooth function on a wide window") {
    Grid g = Grid::uniform(-2.0, 2.0, 1.0 / 256.0);
    GridFunction f = GridFunction::tabulate(g, [](double x) { return std::sin(x); });
    HaarExpansion e = haar_expand(f, -2.0, 2.0, 3);
    CoefficientBounds cb = haar_coefficient_bounds(e, f);
    CHECK(cb.holds);
    CHECK(cb.sup_g == doctest::Approx(1.0).epsilon(1e-6));  // peak at pi/2 is inside
    CHECK(cb.residual_bound == doctest::Approx(4.0 * std::pow(2.0, -5.0) * cb.sup_gprime).epsilon(1e-12));
    CHECK(cb.residual_sup > 0.05);
    CHECK(cb.residual_sup <= cb.residual_bound);
}
