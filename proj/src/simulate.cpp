#include "couplab/simulate.hpp"

#include <algorithm>
#include <cmath>

namespace couplab {

ArTrajectory simulate_ar(const GridFunction& f, const NoiseModel& noise,
                         const StationaryDensity& init, std::uint64_t n, const SeedStream& seed) {
    if (n == 0) throw ConfigError("simulate_ar: n must be positive");
    ArTrajectory tr;
    auto init_rng = seed.child("ar-init").engine();
    auto noise_rng = seed.child("ar-noise").engine();
    tr.x0 = init.sample(init_rng);
    tr.x.resize(n);
    tr.innovations.resize(n);
    double state = tr.x0;
    for (std::uint64_t i = 0; i < n; ++i) {
        double eps = noise.sample(noise_rng);
        state = f(state) + eps;
        tr.x[i] = state;
        tr.innovations[i] = eps;
    }
    return tr;
}

RandomDesignSample simulate_random_design(const GridFunction& f, const NoiseModel& noise,
                                          const StationaryDensity& design_law, std::uint64_t n,
                                          const SeedStream& seed) {
    if (n == 0) throw ConfigError("simulate_random_design: n must be positive");
    RandomDesignSample s;
    auto design_rng = seed.child("design").engine();
    auto noise_rng = seed.child("reg-noise").engine();
    s.xi.resize(n);
    s.eta.resize(n);
    s.y.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        s.xi[i] = design_law.sample(design_rng);
        s.eta[i] = noise.sample(noise_rng);
        s.y[i] = f(s.xi[i]) + s.eta[i];
    }
    return s;
}

FixedDesignSample simulate_fixed_design(const GridFunction& f, const NoiseModel& noise,
                                        const std::vector<double>& points, const SeedStream& seed) {
    if (points.empty()) throw ConfigError("simulate_fixed_design: no design points");
    FixedDesignSample s;
    auto noise_rng = seed.child("reg-noise").engine();
    s.t = points;
    s.eta.resize(points.size());
    s.y.resize(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        s.eta[i] = noise.sample(noise_rng);
        s.y[i] = f(points[i]) + s.eta[i];
    }
    return s;
}

std::vector<double> design_points(const StationaryDensity& law, std::uint64_t n) {
    if (n == 0) throw ConfigError("design_points: n must be positive");
    std::vector<double> t(n);
    for (std::uint64_t i = 1; i <= n; ++i)
        t[i - 1] = law.quantile((static_cast<double>(i) - 0.5) / static_cast<double>(n));
    return t;
}

std::vector<double> rearrange_blocks(const std::vector<double>& points, const BlockPartition& bp) {
    if (points.size() != bp.n) throw ConfigError("rearrange_blocks: size does not match partition");
    std::vector<double> sorted = points;
    std::sort(sorted.begin(), sorted.end());

    // Merge the per-block quantile ladders (j - 1/2)/m_l in increasing
    // order; the r-th ladder entry consumes the r-th smallest point.
    std::vector<std::uint64_t> taken(bp.count, 0);
    std::vector<double> out(bp.n);
    for (std::uint64_t r = 0; r < bp.n; ++r) {
        std::size_t best = bp.count;
        double best_u = 2.0;
        for (std::size_t l = 0; l < bp.count; ++l) {
            if (taken[l] >= bp.size[l]) continue;
            double u = (static_cast<double>(taken[l]) + 0.5) / static_cast<double>(bp.size[l]);
            if (u < best_u - 1e-15) {
                best_u = u;
                best = l;
            }
        }
        if (best == bp.count) throw ConfigError("rearrange_blocks: ladder exhausted");
        out[bp.first[best] - 1 + taken[best]] = sorted[r];
        ++taken[best];
    }
    return out;
}

double rearrangement_constant(const std::vector<double>& rearranged, const StationaryDensity& law,
                              const BlockPartition& bp) {
    if (rearranged.size() != bp.n)
        throw ConfigError("rearrangement_constant: size does not match partition");
    double worst = 0.0;
    for (std::size_t l = 0; l < bp.count; ++l) {
        double m = static_cast<double>(bp.size[l]);
        for (std::uint64_t j = 1; j <= bp.size[l]; ++j) {
            double u = law.cdf(rearranged[bp.first[l] - 2 + j]);
            double target = (static_cast<double>(j) - 0.5) / m;
            worst = std::max(worst, m * std::abs(u - target));
        }
    }
    return worst;
}

}  // namespace couplab
