#pragma once

// Haar system on (A, B]: dyadic breakpoints s_{j,k} = A + k 2^{-j} (B-A),
// half-open cells I_{j,k} = (s_{j,k-1}, s_{j,k}], father h_0 and wavelets
//   h_{j,k} = (B-A)^{-1/2} 2^{j/2} (1_{I_{j+1,2k-1}} - 1_{I_{j+1,2k}}).

#include <cstdint>
#include <vector>

#include "couplab/grid.hpp"

namespace couplab {

struct HaarSystem {
    double A = 0.0;
    double B = 1.0;

    HaarSystem() = default;
    HaarSystem(double a, double b);

    double width(int j) const;                    // 2^{-j} (B - A)
    double breakpoint(int j, std::uint64_t k) const;  // s_{j,k}, k = 0..2^j

    // Index k with x in I_{j,k}; 0 when x <= A or x > B.
    std::uint64_t cell(int j, double x) const;
    bool contains(int j, std::uint64_t k, double x) const { return cell(j, x) == k; }

    double h0(double x) const;
    double h(int j, std::uint64_t k, double x) const;
};

struct HaarExpansion {
    HaarSystem sys;
    int j_star = 0;                              // deepest wavelet level
    double c0 = 0.0;
    std::vector<std::vector<double>> coeff;      // coeff[j][k-1], k = 1..2^j

    double coefficient(int j, std::uint64_t k) const { return coeff[j][k - 1]; }

    // Projection onto functions constant on level-(j_star + 1) cells;
    // equals the cell average of the expanded function.
    double reconstruct(double x) const;
};

// Coefficients by exact integration of the piecewise-linear g.
HaarExpansion haar_expand(const GridFunction& g, double A, double B, int j_star);

struct CoefficientBounds {
    bool holds = true;
    double c0_bound = 0.0;
    double worst_ratio = 0.0;       // max |c| / bound over all coefficients
    double residual_sup = 0.0;      // measured sup |g - reconstruction|
    double residual_bound = 0.0;    // (B - A) 2^{-j*-2} sup|g'|
    double sup_g = 0.0;
    double sup_gprime = 0.0;
};

// Size bounds: |c_0| <= (B-A)^{1/2} sup|g| and
// |c_{j,k}| <= min{ (B-A)^{1/2} 2^{-j/2} sup|g|, (B-A)^{3/2} 2^{-3j/2-2} sup|g'| },
// plus the reconstruction residual bound. Discrete sup|g'| carries a
// 1.05 slack.
CoefficientBounds haar_coefficient_bounds(const HaarExpansion& e, const GridFunction& g);

}  // namespace couplab
