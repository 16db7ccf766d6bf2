#pragma once

// Data generators for the three experiments sharing one function f:
// an autoregression started at its stationary law, a random-design
// regression with covariates from a reference stationary law, and a
// fixed-design regression on quantile-spaced points.

#include <cstdint>
#include <vector>

#include "couplab/blocks.hpp"
#include "couplab/models.hpp"
#include "couplab/rng.hpp"
#include "couplab/stationary.hpp"

namespace couplab {

struct ArTrajectory {
    double x0 = 0.0;
    std::vector<double> x;            // x[i-1] = X_i for i = 1..n
    std::vector<double> innovations;  // innovations[i-1] = X_i - f(X_{i-1})

    std::uint64_t n() const { return x.size(); }
    // State entering step i (1-based): X_{i-1}.
    double state_before(std::uint64_t i) const { return i <= 1 ? x0 : x[i - 2]; }
};

ArTrajectory simulate_ar(const GridFunction& f, const NoiseModel& noise,
                         const StationaryDensity& init, std::uint64_t n, const SeedStream& seed);

struct RandomDesignSample {
    std::vector<double> xi;   // covariates, i.i.d. from the reference law
    std::vector<double> eta;  // regression noise
    std::vector<double> y;    // y_i = f(xi_i) + eta_i
};

RandomDesignSample simulate_random_design(const GridFunction& f, const NoiseModel& noise,
                                          const StationaryDensity& design_law, std::uint64_t n,
                                          const SeedStream& seed);

struct FixedDesignSample {
    std::vector<double> t;    // deterministic design points
    std::vector<double> eta;
    std::vector<double> y;
};

FixedDesignSample simulate_fixed_design(const GridFunction& f, const NoiseModel& noise,
                                        const std::vector<double>& points, const SeedStream& seed);

// t_i = quantile((i - 1/2) / n) of the reference law, increasing in i.
std::vector<double> design_points(const StationaryDensity& law, std::uint64_t n);

// Permutes sorted design points so that within each block the j-th point
// sits near the (j - 1/2)/m_l quantile: blocks consume the global
// quantile ladder in merged order, giving deviation O(1/m_l).
std::vector<double> rearrange_blocks(const std::vector<double>& points, const BlockPartition& bp);

// max over blocks and slots of m_l * |law.cdf(t) - (j - 1/2)/m_l|.
double rearrangement_constant(const std::vector<double>& rearranged, const StationaryDensity& law,
                              const BlockPartition& bp);

}  // namespace couplab
