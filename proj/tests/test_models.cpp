#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "couplab/errors.hpp"
#include "couplab/models.hpp"
#include "couplab/rng.hpp"
#include "couplab/stats.hpp"

using namespace couplab;

TEST_CASE("holder_order is the largest integer strictly below beta") {
    CHECK(holder_order(3.0) == 2);
    CHECK(holder_order(2.5) == 2);
    CHECK(holder_order(3.5) == 3);
    CHECK(holder_order(1.01) == 1);
    CHECK_THROWS_AS(holder_order(1.0), ConfigError);
}

TEST_CASE("rate formulas against direct evaluation") {
    Rates r = rates(1.0, 1.0, 3.0, 1000);
    CHECK(r.gamma_n == doctest::Approx(0.11857729724909584).epsilon(1e-12));
    CHECK(r.gamma_prime_n == doctest::Approx(0.24136133433787024).epsilon(1e-12));
    Rates r64 = rates(1.0, 1.0, 3.0, 64);
    CHECK(r64.gamma_n == doctest::Approx(0.3098836065101935).epsilon(1e-12));
    // scaling in the constants is linear
    Rates r2 = rates(2.0, 3.0, 3.0, 1000);
    CHECK(r2.gamma_n == doctest::Approx(2.0 * r.gamma_n));
    CHECK(r2.gamma_prime_n == doctest::Approx(3.0 * r.gamma_prime_n));
    CHECK_THROWS_AS(rates(1.0, 1.0, 3.0, 1), ConfigError);
    CHECK_THROWS_AS(rates(1.0, 1.0, 0.5, 100), ConfigError);
}

TEST_CASE("rates shrink as n grows") {
    double prev = 1e9;
    for (std::uint64_t n : {64, 256, 1024, 4096, 16384}) {
        Rates r = rates(1.0, 1.0, 3.0, n);
        CHECK(r.gamma_n < prev);
        CHECK(r.gamma_n < r.gamma_prime_n);  // sup budget is tighter than slope budget
        prev = r.gamma_n;
    }
}

TEST_CASE("membership accepts a smooth bounded function") {
    FunctionClassSpec spec{1.0, 3.0, 2.0, -1.0, 1.0};
    Grid g = Grid::uniform(-8.0, 8.0, 1.0 / 64.0);
    GridFunction f = GridFunction::tabulate(g, [](double x) { return 0.5 * std::sin(x); });
    MembershipReport rep = check_membership(f, spec);
    CHECK(rep.ok);
    CHECK(rep.sup_value == doctest::Approx(0.5).epsilon(1e-4));
    // top derivative is 0.5 sin'' = -0.5 sin; its Lipschitz constant is 0.5
    CHECK(rep.holder_quotient == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("membership rejects violations with a reason") {
    FunctionClassSpec spec{1.0, 3.0, 2.0, -1.0, 1.0};
    Grid g = Grid::uniform(-8.0, 8.0, 1.0 / 64.0);
    GridFunction tall = GridFunction::tabulate(g, [](double x) { return 1.2 * std::sin(x); });
    MembershipReport r1 = check_membership(tall, spec);
    CHECK_FALSE(r1.ok);
    CHECK(r1.reason == "sup-norm exceeds min(M, L)");
    GridFunction steep = GridFunction::tabulate(g, [](double x) { return 0.9 * std::sin(4.0 * x); });
    MembershipReport r2 = check_membership(steep, spec);
    CHECK_FALSE(r2.ok);  // first derivative 3.6 > L
    CHECK(r2.reason == "derivative 1 exceeds L");
}

TEST_CASE("sup bound uses min(M, L)") {
    // L < M: the class bound is L even if M allows more
    FunctionClassSpec spec{2.0, 2.5, 0.4, -1.0, 1.0};
    Grid g = Grid::uniform(-4.0, 4.0, 1.0 / 64.0);
    GridFunction f = GridFunction::constant(g, 0.5);
    CHECK_FALSE(check_membership(f, spec).ok);
}

TEST_CASE("smooth bump geometry") {
    Grid g = Grid::uniform(-2.0, 2.0, 1.0 / 256.0);
    GridFunction b = smooth_bump(g, 0.0, 1.0, 0.2);
    CHECK(b(0.0) == doctest::Approx(0.2));
    CHECK(b(0.5) == doctest::Approx(0.0));
    CHECK(b(-0.75) == doctest::Approx(0.0));
    CHECK(b.sup_norm() == doctest::Approx(0.2));
    // slope bound: height * (3 sqrt(3) pi / 4) / width
    CHECK(b.derivative().sup_norm() ==
          doctest::Approx(0.2 * 3.0 * std::sqrt(3.0) * std::numbers::pi / 4.0).epsilon(1e-3));
}

TEST_CASE("neighborhood check enforces support and budgets") {
    FunctionClassSpec spec{0.5, 3.0, 3.0, -1.0, 1.0};
    Rates r = rates(1.0, 1.0, 3.0, 1024);
    Grid g = Grid::uniform(-8.0, 8.0, 1.0 / 128.0);
    GridFunction f0 = GridFunction::tabulate(g, [](double x) { return 0.25 * std::sin(x); });

    PerturbedFunction ok{f0, smooth_bump(g, 0.0, 2.0, 0.5 * r.gamma_n)};
    CHECK(check_neighborhood(ok, spec, r).ok);

    PerturbedFunction tall{f0, smooth_bump(g, 0.0, 2.0, 1.5 * r.gamma_n)};
    CHECK_FALSE(check_neighborhood(tall, spec, r).ok);

    PerturbedFunction outside{f0, smooth_bump(g, 3.0, 1.0, 0.5 * r.gamma_n)};
    MembershipReport rep = check_neighborhood(outside, spec, r);
    CHECK_FALSE(rep.ok);
    CHECK(rep.reason == "perturbation not supported on [A, B]");

    // narrow bump violates the slope budget before the sup budget
    PerturbedFunction steep{f0, smooth_bump(g, 0.0, 0.25, 0.9 * r.gamma_n)};
    MembershipReport rep2 = check_neighborhood(steep, spec, r);
    CHECK_FALSE(rep2.ok);
    CHECK(rep2.reason == "derivative of perturbation exceeds gamma_prime_n");
}

TEST_CASE("gaussian noise model derivatives and Fisher information") {
    NoiseModel p = NoiseModel::gaussian(1.0);
    CHECK(p.fisher_information() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(p.score(0.7) == doctest::Approx(-0.7));
    CHECK(p.curvature(2.0) == doctest::Approx(-1.0));
    CHECK(p.third_derivative_bound() == doctest::Approx(0.0));
    CHECK(p.log_density(0.0) == doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)));
    // density integrates to one on the truncated grid
    CHECK(p.density().integral() == doctest::Approx(1.0).epsilon(1e-9));
    // sigma = 2 puts the grid edge at 5 sigma; truncation costs ~1e-5 relative
    NoiseModel p2 = NoiseModel::gaussian(2.0);
    CHECK(p2.fisher_information() == doctest::Approx(0.25).epsilon(1e-4));
}

TEST_CASE("logistic noise model against closed forms") {
    NoiseModel q = NoiseModel::logistic(1.0);
    // standard logistic: Fisher information 1/3, score -tanh(x/2); the
    // fat tails leave ~9.1e-5 mass outside the truncated grid
    CHECK(q.fisher_information() == doctest::Approx(1.0 / 3.0).epsilon(1e-3));
    CHECK(q.score(1.0) == doctest::Approx(-std::tanh(0.5)).epsilon(1e-12));
    CHECK(q.curvature(0.0) == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(q.third_derivative_bound() == doctest::Approx(0.19245008972987526).epsilon(1e-12));
    CHECK(q.density().integral() == doctest::Approx(0.9999092042625951).epsilon(1e-8));
    // numeric third derivative of log density stays below the bound
    GridFunction l3 = q.score_grid().derivative().derivative();
    CHECK(l3.sup_norm() <= q.third_derivative_bound() * 1.01);
}

TEST_CASE("match_fisher equalizes information across families") {
    NoiseModel p = NoiseModel::gaussian(1.0);
    NoiseModel q = match_fisher(NoiseModel::logistic(1.0), p.fisher_information());
    CHECK(q.parameter() == doctest::Approx(0.5773502691896258).epsilon(1e-9));
    CHECK(q.fisher_information() == doctest::Approx(1.0).epsilon(1e-6));
    NoiseModel g2 = match_fisher(NoiseModel::gaussian(3.0), 4.0);
    CHECK(g2.parameter() == doctest::Approx(0.5));
}

TEST_CASE("score inversion round-trips") {
    NoiseModel p = NoiseModel::gaussian(1.3);
    for (double x : {-2.0, -0.3, 0.0, 1.7}) {
        CHECK(p.score_inverse(p.score(x)) == doctest::Approx(x).epsilon(1e-12));
    }
    NoiseModel q = NoiseModel::logistic(0.8);
    for (double x : {-1.5, 0.2, 2.5}) {
        CHECK(q.score_inverse(q.score(x)) == doctest::Approx(x).epsilon(1e-9));
    }
    CHECK_THROWS_AS(q.score_inverse(10.0), EvaluationRangeError);
}

TEST_CASE("samplers reproduce moments") {
    std::mt19937_64 rng = SeedStream::root(11).child("noise").engine();
    NoiseModel p = NoiseModel::gaussian(1.0);
    std::vector<double> x(100000);
    for (auto& v : x) v = p.sample(rng);
    auto s = stats::summarize(x);
    CHECK(std::abs(s.mean) < 0.02);
    CHECK(s.var == doctest::Approx(1.0).epsilon(0.03));

    NoiseModel q = NoiseModel::logistic(0.5);
    for (auto& v : x) v = q.sample(rng);
    s = stats::summarize(x);
    CHECK(std::abs(s.mean) < 0.02);
    // logistic variance is (pi s)^2 / 3
    CHECK(s.var == doctest::Approx(std::numbers::pi * std::numbers::pi * 0.25 / 3.0).epsilon(0.05));
}

TEST_CASE("tabulated noise model from a grid density") {
    Grid g = Grid::uniform(-8.0, 8.0, 1.0 / 128.0);
    GridFunction dens = GridFunction::tabulate(g, [](double x) { return std::exp(-0.5 * x * x); });
    NoiseModel m = NoiseModel::tabulated(dens);
    CHECK(m.density().integral() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(m.fisher_information() == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(m.score(0.5) == doctest::Approx(-0.5).epsilon(1e-3));
    CHECK_FALSE(m.score_invertible());
    std::mt19937_64 rng = SeedStream::root(3).child("tab").engine();
    std::vector<double> x(50000);
    for (auto& v : x) v = m.sample(rng);
    double ks = stats::ks_statistic(x, [](double t) { return stats::normal_cdf(t); });
    CHECK(ks < 0.02);
}
