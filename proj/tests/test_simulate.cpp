#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "couplab/simulate.hpp"
#include "couplab/stats.hpp"

using namespace couplab;

namespace {
Grid test_grid() { return Grid::uniform(-8.0, 8.0, 1.0 / 64.0); }

StationaryDensity uniform_law(double a, double b, double step) {
    StationaryDensity sd;
    Grid g = Grid::uniform(a, b, step);
    sd.psi = GridFunction::constant(g, 1.0 / (b - a));
    sd.build_cdf();
    return sd;
}
}  // namespace

TEST_CASE("block partition sizes and boundaries") {
    BlockPartition b1000 = make_blocks(1000);
    CHECK(b1000.count == 4);  // 4^6 = 4096 >= 1000 > 3^6 = 729
    CHECK(b1000.size == std::vector<std::uint64_t>{250, 250, 250, 250});
    CHECK(b1000.first == std::vector<std::uint64_t>{1, 251, 501, 751});

    BlockPartition b64 = make_blocks(64);
    CHECK(b64.count == 2);  // 2^6 = 64 exactly
    CHECK(b64.size == std::vector<std::uint64_t>{32, 32});

    CHECK(make_blocks(1).count == 1);
    CHECK(make_blocks(2).count == 2);
    CHECK(block_count(729) == 3);
    CHECK(block_count(730) == 4);

    // sizes always sum to n and blocks stay contiguous
    for (std::uint64_t n : {10, 100, 257, 4096, 9999}) {
        BlockPartition bp = make_blocks(n);
        std::uint64_t total = 0, expect_first = 1;
        for (std::size_t l = 0; l < bp.count; ++l) {
            CHECK(bp.first[l] == expect_first);
            CHECK(bp.size[l] >= 1);
            total += bp.size[l];
            expect_first = bp.last(l) + 1;
        }
        CHECK(total == n);
    }
}

TEST_CASE("ar trajectory stores exact innovations") {
    Grid g = test_grid();
    NoiseModel p = NoiseModel::gaussian(1.0, g);
    GridFunction f = GridFunction::tabulate(g, [](double x) { return 0.25 * std::sin(x); });
    StationaryDensity init = solve_stationary(f, p);
    ArTrajectory tr = simulate_ar(f, p, init, 500, SeedStream::root(7).child("tr"));
    REQUIRE(tr.n() == 500);
    for (std::uint64_t i = 1; i <= tr.n(); ++i) {
        CHECK(tr.x[i - 1] == f(tr.state_before(i)) + tr.innovations[i - 1]);
    }
    // reproducible under the same seed
    ArTrajectory tr2 = simulate_ar(f, p, init, 500, SeedStream::root(7).child("tr"));
    CHECK(tr.x == tr2.x);
    CHECK(tr.x0 == tr2.x0);
}

TEST_CASE("zero drift gives an i.i.d. Gaussian sequence") {
    Grid g = test_grid();
    NoiseModel p = NoiseModel::gaussian(1.0, g);
    GridFunction f = GridFunction::constant(g, 0.0);
    StationaryDensity init = solve_stationary(f, p);
    ArTrajectory tr = simulate_ar(f, p, init, 100000, SeedStream::root(1).child("iid"));
    auto s = stats::summarize(tr.x);
    CHECK(std::abs(s.mean) < 0.02);
    CHECK(s.var == doctest::Approx(1.0).epsilon(0.03));
    double ks = stats::ks_statistic(tr.x, [](double t) { return stats::normal_cdf(t); });
    CHECK(ks < 0.01);
    std::vector<double> a(tr.x.begin(), tr.x.end() - 1), b(tr.x.begin() + 1, tr.x.end());
    CHECK(std::abs(stats::correlation(a, b)) < 0.02);
}

TEST_CASE("lag-one autocovariance matches the quadrature oracle") {
    Grid g = test_grid();
    NoiseModel p = NoiseModel::gaussian(1.0, g);
    GridFunction f = GridFunction::tabulate(g, [](double x) { return 0.5 * std::sin(x); });
    StationaryDensity sd = solve_stationary(f, p);
    // E[X_{ i+1} | X_i] = f(X_i), so cov = int x f(x) psi - mu^2 with mu = int x psi
    GridFunction xpsi = GridFunction::tabulate(g, [&](double x) { return x * sd.psi(x); });
    double mu = xpsi.integral();
    double exf = GridFunction::tabulate(g, [&](double x) { return x * f(x) * sd.psi(x); }).integral();
    double ex2 = GridFunction::tabulate(g, [&](double x) { return x * x * sd.psi(x); }).integral();
    double oracle_corr = (exf - mu * mu) / (ex2 - mu * mu);

    ArTrajectory tr = simulate_ar(f, p, sd, 100000, SeedStream::root(9).child("ac"));
    std::vector<double> a(tr.x.begin(), tr.x.end() - 1), b(tr.x.begin() + 1, tr.x.end());
    CHECK(stats::correlation(a, b) == doctest::Approx(oracle_corr).epsilon(0.05));
    CHECK(std::abs(stats::correlation(a, b) - oracle_corr) < 0.01);
    // marginal law stays stationary along the path
    double ks = stats::ks_statistic(tr.x, [&](double t) { return sd.cdf(t); });
    CHECK(ks < 0.02);
}

TEST_CASE("random design sample structure") {
    Grid g = test_grid();
    NoiseModel q = NoiseModel::gaussian(1.0, g);
    GridFunction f = GridFunction::tabulate(g, [](double x) { return 0.25 * std::sin(x); });
    StationaryDensity law = solve_stationary(f, q);
    RandomDesignSample s = simulate_random_design(f, q, law, 50000, SeedStream::root(3).child("rd"));
    for (std::size_t i = 0; i < s.y.size(); ++i) CHECK(s.y[i] == f(s.xi[i]) + s.eta[i]);
    double ks = stats::ks_statistic(s.xi, [&](double t) { return law.cdf(t); });
    CHECK(ks < 0.01);
    auto se = stats::summarize(s.eta);
    CHECK(std::abs(se.mean) < 0.02);
    CHECK(se.var == doctest::Approx(1.0).epsilon(0.05));
    // covariates and noise come from separate substreams: no correlation
    CHECK(std::abs(stats::correlation(s.xi, s.eta)) < 0.02);
}

TEST_CASE("design points sit at midpoint quantiles") {
    Grid g = test_grid();
    NoiseModel p = NoiseModel::gaussian(1.0, g);
    StationaryDensity law = solve_stationary(GridFunction::constant(g, 0.0), p);
    std::vector<double> t2 = design_points(law, 2);
    CHECK(t2[0] == doctest::Approx(-0.6744897501960817).epsilon(1e-4));
    CHECK(t2[1] == doctest::Approx(0.6744897501960817).epsilon(1e-4));
    std::vector<double> t = design_points(law, 37);
    CHECK(std::is_sorted(t.begin(), t.end()));
    for (std::size_t i = 1; i <= t.size(); ++i) {
        CHECK(law.cdf(t[i - 1]) == doctest::Approx((i - 0.5) / 37.0).epsilon(1e-10));
    }
}

TEST_CASE("fixed design adds noise to the regression function") {
    Grid g = test_grid();
    NoiseModel q = NoiseModel::gaussian(1.0, g);
    GridFunction f = GridFunction::tabulate(g, [](double x) { return 0.25 * std::sin(x); });
    StationaryDensity law = solve_stationary(f, q);
    std::vector<double> pts = design_points(law, 200);
    FixedDesignSample s = simulate_fixed_design(f, q, pts, SeedStream::root(4).child("fd"));
    CHECK(s.t == pts);
    for (std::size_t i = 0; i < s.y.size(); ++i) CHECK(s.y[i] == f(s.t[i]) + s.eta[i]);
}

TEST_CASE("block rearrangement interleaves the uniform ladder") {
    StationaryDensity law = uniform_law(0.0, 1.0, 1.0 / 256.0);
    BlockPartition bp = make_blocks(4);  // K = 2, sizes {2, 2}
    REQUIRE(bp.count == 2);
    std::vector<double> t = design_points(law, 4);  // {1/8, 3/8, 5/8, 7/8}
    std::vector<double> r = rearrange_blocks(t, bp);
    CHECK(r[0] == doctest::Approx(0.125).epsilon(1e-9));
    CHECK(r[1] == doctest::Approx(0.625).epsilon(1e-9));
    CHECK(r[2] == doctest::Approx(0.375).epsilon(1e-9));
    CHECK(r[3] == doctest::Approx(0.875).epsilon(1e-9));
}

TEST_CASE("rearrangement is a permutation with O(1/m) block deviation") {
    Grid g = test_grid();
    NoiseModel p = NoiseModel::gaussian(1.0, g);
    StationaryDensity law = solve_stationary(GridFunction::constant(g, 0.0), p);
    for (std::uint64_t n : {100, 1000, 2500}) {
        BlockPartition bp = make_blocks(n);
        std::vector<double> t = design_points(law, n);
        std::vector<double> r = rearrange_blocks(t, bp);
        std::vector<double> st = t, sr = r;
        std::sort(st.begin(), st.end());
        std::sort(sr.begin(), sr.end());
        CHECK(st == sr);
        // within each block the points are increasing
        for (std::size_t l = 0; l < bp.count; ++l) {
            CHECK(std::is_sorted(r.begin() + bp.first[l] - 1, r.begin() + bp.last(l)));
        }
        CHECK(rearrangement_constant(r, law, bp) < 1.0);
    }
}
