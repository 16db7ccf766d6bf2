#include "couplab/stationary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "couplab/errors.hpp"

namespace couplab {

namespace {
// Trapezoid weights: h everywhere except h/2 at the two ends.
std::vector<double> trapezoid_weights(const Grid& g) {
    std::vector<double> w(g.n, g.step);
    w.front() = 0.5 * g.step;
    w.back() = 0.5 * g.step;
    return w;
}

double l1_shift_distance(const NoiseModel& noise, double u) {
    const Grid& g = noise.grid();
    double s = 0.0;
    for (std::size_t i = 0; i < g.n; ++i) {
        double x = g.x(i);
        double d = std::abs(noise.density_at(x) - noise.density_at(x - u));
        s += (i == 0 || i + 1 == g.n) ? 0.5 * d : d;
    }
    return s * g.step;
}
}  // namespace

GridFunction transfer_apply(const GridFunction& psi, const GridFunction& f,
                            const NoiseModel& noise) {
    require_same_grid(psi, f, "transfer_apply");
    if (psi.grid() != noise.grid())
        throw std::invalid_argument("transfer_apply: noise grid mismatch");
    const Grid& g = psi.grid();
    std::vector<double> w = trapezoid_weights(g);
    std::vector<double> out(g.n, 0.0);
    for (std::size_t i = 0; i < g.n; ++i) {
        double x = g.x(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < g.n; ++j)
            acc += w[j] * psi.value_at(j) * noise.density_at(x - f.value_at(j));
        out[i] = acc;
    }
    return GridFunction(g, std::move(out));
}

StationaryDensity solve_stationary(const GridFunction& f, const NoiseModel& noise,
                                   const SolveOptions& opts) {
    if (f.grid() != noise.grid())
        throw std::invalid_argument("solve_stationary: noise grid mismatch");
    const Grid& g = f.grid();
    const std::size_t n = g.n;
    std::vector<double> w = trapezoid_weights(g);

    // kernel[i * n + j] = p(x_i - f(x_j)); one row per output node
    std::vector<double> kernel(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        double x = g.x(i);
        double* row = kernel.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) row[j] = noise.density_at(x - f.value_at(j));
    }

    std::vector<double> psi = noise.density().values();
    {
        double m = 0.0;
        for (std::size_t j = 0; j < n; ++j) m += w[j] * psi[j];
        for (auto& v : psi) v /= m;
    }

    StationaryDensity sd;
    std::vector<double> next(n);
    double leak = 0.0;
    for (std::size_t it = 1; it <= opts.max_iter; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = kernel.data() + i * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += w[j] * psi[j] * row[j];
            next[i] = acc;
        }
        double mass = 0.0;
        for (std::size_t j = 0; j < n; ++j) mass += w[j] * next[j];
        leak = 1.0 - mass;
        if (leak > opts.max_mass_leak)
            throw TruncationError("solve_stationary: mass leak " + std::to_string(leak) +
                                  " exceeds allowance");
        double res = 0.0;
        for (std::size_t j = 0; j < n; ++j) res += w[j] * std::abs(next[j] / mass - psi[j]);
        psi.swap(next);
        for (auto& v : psi) v /= mass;
        sd.iterations = it;
        sd.residual_l1 = res;
        if (res < opts.tol) {
            sd.psi = GridFunction(g, std::move(psi));
            sd.mass_leak = leak;
            sd.build_cdf();
            return sd;
        }
    }
    throw ConvergenceFailure("solve_stationary: residual " + std::to_string(sd.residual_l1) +
                             " after " + std::to_string(opts.max_iter) + " iterations");
}

void StationaryDensity::build_cdf() {
    const Grid& g = psi.grid();
    cdf_.assign(g.n, 0.0);
    const auto& v = psi.values();
    for (std::size_t i = 1; i < g.n; ++i)
        cdf_[i] = cdf_[i - 1] + 0.5 * (v[i - 1] + v[i]) * g.step;
    double total = cdf_.back();
    if (!(total > 0.0)) throw EvaluationRangeError("StationaryDensity: zero total mass");
    for (auto& c : cdf_) c /= total;
}

double StationaryDensity::cdf(double x) const {
    const Grid& g = psi.grid();
    if (x <= g.x_min) return 0.0;
    if (x >= g.x_max) return 1.0;
    std::size_t i = g.cell_of(x);
    double t = (x - g.x(i)) / g.step;
    return cdf_[i] + t * (cdf_[i + 1] - cdf_[i]);
}

double StationaryDensity::quantile(double u) const {
    if (!(u >= 0.0 && u <= 1.0)) throw std::invalid_argument("quantile: u outside [0,1]");
    const Grid& g = psi.grid();
    auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.begin()) return g.x_min;
    std::size_t j = static_cast<std::size_t>(it - cdf_.begin());
    if (j >= cdf_.size()) return g.x_max;
    double c0 = cdf_[j - 1], c1 = cdf_[j];
    double t = c1 > c0 ? (u - c0) / (c1 - c0) : 1.0;
    return g.x(j - 1) + t * g.step;
}

double StationaryDensity::sample(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    return quantile(ud(rng));
}

double dobrushin_rho(const NoiseModel& noise, double M) {
    if (!(M >= 0.0)) throw ConfigError("dobrushin_rho: M must be nonnegative");
    const double h = noise.grid().step;
    double best = 0.0;
    auto steps = static_cast<std::size_t>(std::floor(2.0 * M / h + 1e-12));
    for (std::size_t k = 1; k <= steps; ++k) best = std::max(best, l1_shift_distance(noise, k * h));
    best = std::max(best, l1_shift_distance(noise, 2.0 * M));
    return 0.5 * best;
}

GridFunction minorization_floor(const NoiseModel& noise, double M) {
    const Grid& g = noise.grid();
    const double h = g.step;
    std::vector<double> shifts;
    for (double v = -M; v < M; v += std::max(h, 2.0 * M / 64.0)) shifts.push_back(v);
    shifts.push_back(M);
    return GridFunction::tabulate(g, [&](double x) {
        double lo = std::numeric_limits<double>::infinity();
        for (double v : shifts) lo = std::min(lo, noise.density_at(x - v));
        return lo;
    });
}

double minorization_mass(const NoiseModel& noise, double M) {
    return minorization_floor(noise, M).integral();
}

ContractionCheck stationary_perturbation_check(const GridFunction& f, const GridFunction& f0,
                                               const NoiseModel& noise, double M,
                                               const SolveOptions& opts) {
    require_same_grid(f, f0, "stationary_perturbation_check");
    ContractionCheck c;
    c.rho = dobrushin_rho(noise, M);
    StationaryDensity sf = solve_stationary(f, noise, opts);
    StationaryDensity s0 = solve_stationary(f0, noise, opts);
    c.lhs = hellinger_sq(sf.psi, s0.psi);
    double d = zip(f, f0, [](double a, double b) { return a - b; }).sup_norm();
    const double h = noise.grid().step;
    double sup = 0.0;
    auto steps = static_cast<std::size_t>(std::floor(d / h + 1e-12));
    for (std::size_t k = 1; k <= steps; ++k) sup = std::max(sup, l1_shift_distance(noise, k * h));
    sup = std::max(sup, l1_shift_distance(noise, d));
    c.sup_shift = sup;
    c.rhs = sup / (1.0 - c.rho);
    c.holds = c.lhs <= c.rhs + 1e-12;
    return c;
}

}  // namespace couplab
