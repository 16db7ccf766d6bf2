#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "couplab/errors.hpp"
#include "couplab/rng.hpp"
#include "couplab/stationary.hpp"
#include "couplab/stats.hpp"

using namespace couplab;

namespace {
Grid test_grid() { return Grid::uniform(-8.0, 8.0, 1.0 / 64.0); }

double normal_pdf(double x, double mu, double sd) {
    double z = (x - mu) / sd;
    return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}
}  // namespace

TEST_CASE("zero drift returns the noise law immediately") {
    Grid g = test_grid();
    NoiseModel p = NoiseModel::gaussian(1.0, g);
    GridFunction f = GridFunction::constant(g, 0.0);
    StationaryDensity sd = solve_stationary(f, p);
    GridFunction target = GridFunction::tabulate(g, [](double x) { return normal_pdf(x, 0, 1); });
    CHECK(l1_distance(sd.psi, target) < 1e-9);
    CHECK(sd.residual_l1 < 1e-10);
    CHECK(sd.mass_leak < 1e-9);
}

TEST_CASE("constant drift shifts the noise law") {
    Grid g = test_grid();
    NoiseModel p = NoiseModel::gaussian(1.0, g);
    GridFunction f = GridFunction::constant(g, 0.3);
    StationaryDensity sd = solve_stationary(f, p);
    GridFunction target = GridFunction::tabulate(g, [](double x) { return normal_pdf(x, 0.3, 1); });
    CHECK(l1_distance(sd.psi, target) < 1e-9);
}

TEST_CASE("linear drift reproduces the AR(1) stationary law") {
    Grid g = test_grid();
    NoiseModel p = NoiseModel::gaussian(1.0, g);
    GridFunction f = GridFunction::tabulate(g, [](double x) { return 0.5 * x; });
    // variance 1/(1 - 0.25) = 4/3
    double sd_ar = std::sqrt(4.0 / 3.0);
    GridFunction target =
        GridFunction::tabulate(g, [&](double x) { return normal_pdf(x, 0.0, sd_ar); });
    GridFunction one_step = transfer_apply(target, f, p);
    CHECK(l1_distance(one_step, target) < 1e-6);
    StationaryDensity sd = solve_stationary(f, p);
    CHECK(l1_distance(sd.psi, target) < 1e-6);
    CHECK(sd.iterations > 1);
}

TEST_CASE("solver reports truncation when the grid is too narrow") {
    Grid g = Grid::uniform(-2.0, 2.0, 1.0 / 64.0);
    NoiseModel p = NoiseModel::gaussian(1.0, g);
    GridFunction f = GridFunction::constant(g, 0.0);
    CHECK_THROWS_AS(solve_stationary(f, p), TruncationError);
}

TEST_CASE("solver reports non-convergence when starved of iterations") {
    Grid g = test_grid();
    NoiseModel p = NoiseModel::gaussian(1.0, g);
    GridFunction f = GridFunction::tabulate(g, [](double x) { return 0.5 * x; });
    SolveOptions opts;
    opts.max_iter = 1;
    CHECK_THROWS_AS(solve_stationary(f, p, opts), ConvergenceFailure);
}

TEST_CASE("contraction coefficient for the Gaussian family") {
    NoiseModel p = NoiseModel::gaussian(1.0);
    // sup over |x1|,|x2| <= M is attained at shift 2M; closed form 2 Phi(M) - 1
    CHECK(dobrushin_rho(p, 0.5) == doctest::Approx(0.38292492254802624).epsilon(1e-6));
    CHECK(dobrushin_rho(p, 0.1) == doctest::Approx(0.07965567455405798).epsilon(1e-6));
    CHECK(dobrushin_rho(p, 3.0) < 1.0);
    CHECK(dobrushin_rho(p, 0.0) == doctest::Approx(0.0));
}

TEST_CASE("coefficient scan handles multimodal shift response") {
    // bimodal noise: the worst shift need not be the largest one; the scan
    // must still dominate every intermediate shift
    Grid g = Grid::uniform(-12.0, 12.0, 1.0 / 128.0);
    GridFunction dens = GridFunction::tabulate(g, [](double x) {
        return std::exp(-0.5 * (x - 2.0) * (x - 2.0) / 0.09) +
               std::exp(-0.5 * (x + 2.0) * (x + 2.0) / 0.09);
    });
    NoiseModel m = NoiseModel::tabulated(dens);
    double r1 = dobrushin_rho(m, 1.0);
    double r2 = dobrushin_rho(m, 2.0);
    CHECK(r1 <= r2 + 1e-12);  // scan is monotone in M by construction
    CHECK(r2 <= 1.0);
}

TEST_CASE("stationary density dominates the minorization floor") {
    Grid g = test_grid();
    NoiseModel p = NoiseModel::gaussian(1.0, g);
    GridFunction f = GridFunction::tabulate(g, [](double x) { return 0.25 * std::sin(x); });
    StationaryDensity sd = solve_stationary(f, p);
    GridFunction floor = minorization_floor(p, 0.25);
    double mass = minorization_mass(p, 0.25);
    CHECK(mass > 0.5);
    CHECK(mass < 1.0);
    for (std::size_t i = 0; i < g.n; ++i) {
        CHECK(sd.psi.value_at(i) >= (1.0 - 1e-6) * floor.value_at(i));
    }
}

TEST_CASE("perturbation bound for constant shifts") {
    Grid g = test_grid();
    NoiseModel p = NoiseModel::gaussian(1.0, g);
    GridFunction f0 = GridFunction::constant(g, 0.0);
    GridFunction f = GridFunction::constant(g, 0.1);
    ContractionCheck c = stationary_perturbation_check(f, f0, p, 0.1);
    // both stationary laws are exact normal shifts, so every piece has a closed form
    CHECK(c.lhs == doctest::Approx(0.002498438150838167).epsilon(1e-4));
    CHECK(c.sup_shift == doctest::Approx(0.07975522335348995).epsilon(1e-5));
    CHECK(c.rho == doctest::Approx(0.07965567455405798).epsilon(1e-5));
    CHECK(c.rhs == doctest::Approx(0.08665802694534515).epsilon(1e-4));
    CHECK(c.holds);
}

TEST_CASE("perturbation bound holds for random neighborhood pairs") {
    Grid g = Grid::uniform(-8.0, 8.0, 1.0 / 32.0);
    NoiseModel p = NoiseModel::gaussian(1.0, g);
    std::mt19937_64 rng = SeedStream::root(2024).child("pairs").engine();
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    for (int k = 0; k < 5; ++k) {
        double amp = 0.05 + 0.2 * ud(rng);
        double phase = 2.0 * std::numbers::pi * ud(rng);
        GridFunction f0 =
            GridFunction::tabulate(g, [&](double x) { return amp * std::sin(x + phase); });
        GridFunction bump = smooth_bump(g, 2.0 * ud(rng) - 1.0, 1.0 + ud(rng), 0.1 * ud(rng));
        ContractionCheck c = stationary_perturbation_check(f0 + bump, f0, p, 0.5);
        CHECK(c.holds);
        CHECK(c.rho < 1.0);
    }
}

TEST_CASE("cdf and quantile are exact inverses on the grid") {
    Grid g = test_grid();
    NoiseModel p = NoiseModel::gaussian(1.0, g);
    StationaryDensity sd = solve_stationary(GridFunction::constant(g, 0.0), p);
    for (double x : {-2.0, -0.5, 0.0, 0.7, 2.5}) {
        CHECK(sd.quantile(sd.cdf(x)) == doctest::Approx(x).epsilon(1e-10));
    }
    for (double u : {0.01, 0.25, 0.5, 0.9, 0.999}) {
        CHECK(sd.cdf(sd.quantile(u)) == doctest::Approx(u).epsilon(1e-12));
    }
    // tabulated quantiles agree with the normal law to quadrature accuracy
    CHECK(sd.quantile(0.75) == doctest::Approx(0.6744897501960817).epsilon(1e-4));
}

TEST_CASE("stationary sampling matches the tabulated cdf") {
    Grid g = test_grid();
    NoiseModel p = NoiseModel::gaussian(1.0, g);
    StationaryDensity sd = solve_stationary(GridFunction::constant(g, 0.0), p);
    std::mt19937_64 rng = SeedStream::root(5).child("sample").engine();
    std::vector<double> x(100000);
    for (auto& v : x) v = sd.sample(rng);
    auto s = stats::summarize(x);
    CHECK(std::abs(s.mean) < 0.02);
    double ks = stats::ks_statistic(x, [&](double t) { return sd.cdf(t); });
    CHECK(ks < 0.02);
}
