#pragma once

// Problem ingredients: smoothness class, shrinking-neighborhood rates,
// noise models with score derivatives and Fisher information.

#include <cstdint>
#include <optional>
#include <random>
#include <string>

#include "couplab/grid.hpp"

namespace couplab {

// Default tabulation grid: wide enough that Gaussian-tailed densities
// carry < 1e-12 mass outside, fine enough for O(h^2) quadrature.
Grid default_grid();

// Bounded functions with a Hoelder-smooth derivative structure:
// sup|f| <= M, derivatives up to holder_order(beta) bounded by L, and
// the top derivative has Hoelder quotient <= L with exponent
// beta - holder_order(beta). Perturbations live on [A, B].
struct FunctionClassSpec {
    double M = 0.5;
    double beta = 3.0;
    double L = 3.0;
    double A = -1.0;
    double B = 1.0;

    void validate() const;
};

// Largest integer strictly less than beta.
int holder_order(double beta);

struct Rates {
    double gamma_n = 0.0;        // sup-norm budget for f - f0
    double gamma_prime_n = 0.0;  // sup-norm budget for f' - f0'
};

// gamma_n = c (log n / n)^{beta/(2 beta + 1)},
// gamma'_n = c' (log n / n)^{(beta - 1)/(2 beta + 1)}; requires n >= 2, beta > 1.
Rates rates(double c, double c_prime, double beta, std::uint64_t n);

struct MembershipReport {
    bool ok = true;
    std::string reason;  // first violated constraint, empty if ok
    double sup_value = 0.0;
    double holder_quotient = 0.0;
};

// Discrete-derivative class check; derivative and quotient bounds get a
// 1.05 slack factor to absorb finite-difference error.
MembershipReport check_membership(const GridFunction& f, const FunctionClassSpec& spec);

struct PerturbedFunction {
    GridFunction f0;
    GridFunction g;  // supported on [A, B]

    GridFunction f() const { return f0 + g; }
};

MembershipReport check_neighborhood(const PerturbedFunction& pf, const FunctionClassSpec& spec,
                                    const Rates& r);

// C^3 bump supported on [center - width/2, center + width/2] with peak
// `height`: height * cos^4(pi (x - center)/width). Profile derivative
// sups: 4.0811/width, 39.479/width^2, 339.31/width^3 (times height).
GridFunction smooth_bump(const Grid& g, double center, double width, double height);

class NoiseModel {
  public:
    enum class Family { gaussian, logistic, tabulated };

    static NoiseModel gaussian(double sigma, const Grid& g = default_grid());
    static NoiseModel logistic(double scale, const Grid& g = default_grid());
    static NoiseModel tabulated(GridFunction density);

    Family family() const { return family_; }
    double parameter() const { return param_; }
    const Grid& grid() const { return density_.grid(); }
    const GridFunction& density() const { return density_; }
    const GridFunction& score_grid() const { return score_; }

    double density_at(double x) const;
    double log_density(double x) const;  // throws EvaluationRangeError below the 1e-300 floor
    double score(double x) const;        // (log p)'
    double curvature(double x) const;    // (log p)''
    double third_derivative_bound() const { return third_bound_; }
    double fisher_information() const { return fisher_; }

    double sample(std::mt19937_64& rng) const;

    // Strictly monotone score admits exact inversion (Gaussian, logistic).
    bool score_invertible() const;
    double score_inverse(double s) const;

  private:
    NoiseModel() = default;
    void tabulate_from_analytic();

    Family family_ = Family::gaussian;
    double param_ = 1.0;
    GridFunction density_, score_, curvature_;
    double fisher_ = 1.0;
    double third_bound_ = 0.0;
    std::vector<double> cdf_;  // for tabulated sampling
};

// Rescales a location family so its Fisher information matches target.
NoiseModel match_fisher(const NoiseModel& templ, double target_fisher);

}  // namespace couplab
