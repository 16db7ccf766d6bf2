#pragma once

// Stationary law of the autoregression X_i = f(X_{i-1}) + eps_i via the
// transfer operator (T psi)(x) = int p(x - f(y)) psi(y) dy, which is an
// L1 contraction with Dobrushin coefficient
//   rho = (1/2) sup_{|x1|,|x2| <= M} int |p(x - x1) - p(x - x2)| dx < 1.

#include <cstdint>
#include <random>
#include <vector>

#include "couplab/grid.hpp"
#include "couplab/models.hpp"

namespace couplab {

struct StationaryDensity {
    GridFunction psi;           // normalized fixed point, nonnegative
    double residual_l1 = 0.0;   // ||T psi - psi||_1 at termination
    std::size_t iterations = 0;
    double mass_leak = 0.0;     // probability escaping the truncated grid per step

    // Piecewise-linear CDF tabulated at the grid nodes (exactly invertible).
    double cdf(double x) const;
    double quantile(double u) const;
    double sample(std::mt19937_64& rng) const;

    const std::vector<double>& cdf_nodes() const { return cdf_; }
    void build_cdf();  // called by the solver; public for custom psi in tests

  private:
    std::vector<double> cdf_;
};

struct SolveOptions {
    double tol = 1e-10;          // L1 residual target
    std::size_t max_iter = 500;
    double max_mass_leak = 1e-6;
};

// One application of the transfer operator (trapezoid in y).
GridFunction transfer_apply(const GridFunction& psi, const GridFunction& f, const NoiseModel& noise);

// Power iteration from the noise density. Throws ConvergenceFailure /
// TruncationError when the contraction stalls or mass escapes the grid.
StationaryDensity solve_stationary(const GridFunction& f, const NoiseModel& noise,
                                   const SolveOptions& opts = {});

// Dobrushin coefficient by scanning shifts u in [0, 2M] on grid multiples.
double dobrushin_rho(const NoiseModel& noise, double M);

// Pointwise lower bound inf_{|v| <= M} p(x - v) integrated over cells:
// any stationary density for |f| <= M dominates this measure.
double minorization_mass(const NoiseModel& noise, double M);
GridFunction minorization_floor(const NoiseModel& noise, double M);

struct ContractionCheck {
    double lhs = 0.0;       // int (sqrt(psi_f) - sqrt(psi_f0))^2
    double rhs = 0.0;       // sup-shift L1 distance / (1 - rho)
    double rho = 0.0;
    double sup_shift = 0.0; // sup_{u <= ||f - f0||_inf} int |p(x) - p(x - u)| dx
    bool holds = false;
};

// Hellinger perturbation bound for the stationary laws of f vs f0.
ContractionCheck stationary_perturbation_check(const GridFunction& f, const GridFunction& f0,
                                               const NoiseModel& noise, double M,
                                               const SolveOptions& opts = {});

}  // namespace couplab
