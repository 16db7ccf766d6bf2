#include "couplab/haar.hpp"

#include <cmath>

#include "couplab/errors.hpp"

namespace couplab {

HaarSystem::HaarSystem(double a, double b) : A(a), B(b) {
    if (!(b > a)) throw ConfigError("HaarSystem: need A < B");
}

double HaarSystem::width(int j) const { return std::ldexp(B - A, -j); }

double HaarSystem::breakpoint(int j, std::uint64_t k) const {
    return A + static_cast<double>(k) * width(j);
}

std::uint64_t HaarSystem::cell(int j, double x) const {
    if (x <= A || x > B) return 0;
    double w = width(j);
    double t = (x - A) / w;
    auto k = static_cast<std::uint64_t>(std::ceil(t));
    std::uint64_t top = std::uint64_t{1} << j;
    if (k < 1) k = 1;
    if (k > top) k = top;
    // half-open convention: x exactly on a breakpoint belongs to the left cell
    while (k > 1 && x <= breakpoint(j, k - 1)) --k;
    while (k < top && x > breakpoint(j, k)) ++k;
    return k;
}

double HaarSystem::h0(double x) const {
    if (x <= A || x > B) return 0.0;
    return 1.0 / std::sqrt(B - A);
}

double HaarSystem::h(int j, std::uint64_t k, double x) const {
    std::uint64_t child = cell(j + 1, x);
    double amp = std::sqrt(std::ldexp(1.0, j) / (B - A));
    if (child == 2 * k - 1) return amp;
    if (child == 2 * k) return -amp;
    return 0.0;
}

double HaarExpansion::reconstruct(double x) const {
    double acc = c0 * sys.h0(x);
    for (int j = 0; j <= j_star; ++j) {
        std::uint64_t k = sys.cell(j, x);
        if (k == 0) break;
        acc += coeff[j][k - 1] * sys.h(j, k, x);
    }
    return acc;
}

HaarExpansion haar_expand(const GridFunction& g, double A, double B, int j_star) {
    if (j_star < 0 || j_star > 40) throw ConfigError("haar_expand: j_star out of range");
    HaarExpansion e;
    e.sys = HaarSystem(A, B);
    e.j_star = j_star;
    double root = 1.0 / std::sqrt(B - A);
    e.c0 = root * g.integral(A, B);
    e.coeff.resize(j_star + 1);
    for (int j = 0; j <= j_star; ++j) {
        std::uint64_t count = std::uint64_t{1} << j;
        e.coeff[j].resize(count);
        double amp = std::sqrt(std::ldexp(1.0, j) / (B - A));
        for (std::uint64_t k = 1; k <= count; ++k) {
            double left = g.integral(e.sys.breakpoint(j + 1, 2 * k - 2), e.sys.breakpoint(j + 1, 2 * k - 1));
            double right = g.integral(e.sys.breakpoint(j + 1, 2 * k - 1), e.sys.breakpoint(j + 1, 2 * k));
            e.coeff[j][k - 1] = amp * (left - right);
        }
    }
    return e;
}

CoefficientBounds haar_coefficient_bounds(const HaarExpansion& e, const GridFunction& g) {
    CoefficientBounds cb;
    const double BA = e.sys.B - e.sys.A;
    cb.sup_g = 0.0;
    // restrict sups to [A, B]: the expansion never sees g outside
    const Grid& gr = g.grid();
    GridFunction d = g.derivative();
    for (std::size_t i = 0; i < gr.n; ++i) {
        double x = gr.x(i);
        if (x < e.sys.A || x > e.sys.B) continue;
        cb.sup_g = std::max(cb.sup_g, std::abs(g.value_at(i)));
        cb.sup_gprime = std::max(cb.sup_gprime, std::abs(d.value_at(i)));
    }
    cb.sup_gprime *= 1.05;  // discrete-derivative slack
    cb.c0_bound = std::sqrt(BA) * cb.sup_g;
    cb.holds = std::abs(e.c0) <= cb.c0_bound + 1e-12;
    for (int j = 0; j <= e.j_star; ++j) {
        double bound = std::min(std::sqrt(BA) * std::pow(2.0, -0.5 * j) * cb.sup_g,
                                std::pow(BA, 1.5) * std::pow(2.0, -1.5 * j - 2.0) * cb.sup_gprime);
        for (double c : e.coeff[j]) {
            double ratio = bound > 0.0 ? std::abs(c) / bound : (std::abs(c) > 0.0 ? 1e300 : 0.0);
            cb.worst_ratio = std::max(cb.worst_ratio, ratio);
            if (std::abs(c) > bound + 1e-12) cb.holds = false;
        }
    }
    cb.residual_bound = BA * std::pow(2.0, -e.j_star - 2.0) * cb.sup_gprime;
    for (std::size_t i = 0; i < gr.n; ++i) {
        double x = gr.x(i);
        if (x <= e.sys.A || x > e.sys.B) continue;
        cb.residual_sup = std::max(cb.residual_sup, std::abs(g.value_at(i) - e.reconstruct(x)));
    }
    if (cb.residual_sup > cb.residual_bound + 1e-12) cb.holds = false;
    return cb;
}

}  // namespace couplab
