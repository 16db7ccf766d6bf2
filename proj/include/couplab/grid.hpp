#pragma once

// Real functions tabulated on a uniform grid over a truncated line.
// All quadrature is trapezoidal on the grid nodes; evaluation between
// nodes is linear interpolation, outside the domain the boundary value
// is used (functions of interest are constant or negligible there).

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace couplab {

struct Grid {
    double x_min = 0.0;
    double x_max = 1.0;
    double step = 1.0;
    std::size_t n = 2;  // node count, x_max == x_min + (n - 1) * step

    static Grid uniform(double x_min, double x_max, double step) {
        if (!(step > 0.0) || !(x_max > x_min))
            throw std::invalid_argument("Grid: need x_max > x_min and step > 0");
        auto cells = static_cast<std::size_t>(std::llround((x_max - x_min) / step));
        if (cells < 1 || std::abs(x_min + static_cast<double>(cells) * step - x_max) > 1e-9 * step)
            throw std::invalid_argument("Grid: (x_max - x_min) must be an integer multiple of step");
        return Grid{x_min, x_min + static_cast<double>(cells) * step, step, cells + 1};
    }

    double x(std::size_t i) const { return x_min + static_cast<double>(i) * step; }
    std::size_t cells() const { return n - 1; }

    // Index of the cell containing x, clamped to [0, n-2].
    std::size_t cell_of(double x) const {
        if (x <= x_min) return 0;
        if (x >= x_max) return n - 2;
        auto i = static_cast<std::size_t>((x - x_min) / step);
        return i > n - 2 ? n - 2 : i;
    }

    bool operator==(const Grid& o) const {
        return n == o.n && std::abs(x_min - o.x_min) <= 1e-12 && std::abs(step - o.step) <= 1e-15;
    }
    bool operator!=(const Grid& o) const { return !(*this == o); }
};

class GridFunction {
  public:
    GridFunction() = default;
    GridFunction(Grid g, std::vector<double> values) : grid_(g), v_(std::move(values)) {
        if (v_.size() != grid_.n)
            throw std::invalid_argument("GridFunction: value count does not match grid");
    }

    template <class F>
    static GridFunction tabulate(const Grid& g, F&& f) {
        std::vector<double> v(g.n);
        for (std::size_t i = 0; i < g.n; ++i) v[i] = f(g.x(i));
        return GridFunction(g, std::move(v));
    }

    static GridFunction constant(const Grid& g, double c) {
        return GridFunction(g, std::vector<double>(g.n, c));
    }

    const Grid& grid() const { return grid_; }
    const std::vector<double>& values() const { return v_; }
    double value_at(std::size_t i) const { return v_[i]; }
    std::size_t size() const { return v_.size(); }

    // Linear interpolation; constant extrapolation outside the domain.
    double operator()(double x) const {
        if (x <= grid_.x_min) return v_.front();
        if (x >= grid_.x_max) return v_.back();
        std::size_t i = grid_.cell_of(x);
        double t = (x - grid_.x(i)) / grid_.step;
        return v_[i] + t * (v_[i + 1] - v_[i]);
    }

    double sup_norm() const {
        double m = 0.0;
        for (double y : v_) m = std::max(m, std::abs(y));
        return m;
    }

    double integral() const {
        double s = 0.5 * (v_.front() + v_.back());
        for (std::size_t i = 1; i + 1 < v_.size(); ++i) s += v_[i];
        return s * grid_.step;
    }

    // Integral over [a, b] of the piecewise-linear interpolant (exact for it).
    double integral(double a, double b) const {
        if (b < a) throw std::invalid_argument("GridFunction::integral: b < a");
        a = std::max(a, grid_.x_min);
        b = std::min(b, grid_.x_max);
        if (b <= a) return 0.0;
        auto seg = [this](double lo, double hi) {  // lo, hi within one cell
            return 0.5 * ((*this)(lo) + (*this)(hi)) * (hi - lo);
        };
        std::size_t ca = grid_.cell_of(a), cb = grid_.cell_of(b);
        if (ca == cb) return seg(a, b);
        double s = seg(a, grid_.x(ca + 1));
        for (std::size_t i = ca + 1; i < cb; ++i) s += 0.5 * (v_[i] + v_[i + 1]) * grid_.step;
        s += seg(grid_.x(cb), b);
        return s;
    }

    // Central differences inside, one-sided at the ends.
    GridFunction derivative() const {
        std::vector<double> d(v_.size());
        double h = grid_.step;
        d.front() = (v_[1] - v_[0]) / h;
        d.back() = (v_[v_.size() - 1] - v_[v_.size() - 2]) / h;
        for (std::size_t i = 1; i + 1 < v_.size(); ++i) d[i] = (v_[i + 1] - v_[i - 1]) / (2.0 * h);
        return GridFunction(grid_, std::move(d));
    }

  private:
    Grid grid_;
    std::vector<double> v_;
};

inline void require_same_grid(const GridFunction& a, const GridFunction& b, const char* who) {
    if (a.grid() != b.grid())
        throw std::invalid_argument(std::string(who) + ": grid mismatch");
}

template <class F>
GridFunction map(const GridFunction& a, F&& f) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) v[i] = f(a.value_at(i));
    return GridFunction(a.grid(), std::move(v));
}

template <class F>
GridFunction zip(const GridFunction& a, const GridFunction& b, F&& f) {
    require_same_grid(a, b, "zip");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) v[i] = f(a.value_at(i), b.value_at(i));
    return GridFunction(a.grid(), std::move(v));
}

inline GridFunction operator+(const GridFunction& a, const GridFunction& b) {
    return zip(a, b, [](double x, double y) { return x + y; });
}
inline GridFunction operator-(const GridFunction& a, const GridFunction& b) {
    return zip(a, b, [](double x, double y) { return x - y; });
}
inline GridFunction operator*(double c, const GridFunction& a) {
    return map(a, [c](double x) { return c * x; });
}

inline double l1_distance(const GridFunction& a, const GridFunction& b) {
    return zip(a, b, [](double x, double y) { return std::abs(x - y); }).integral();
}

// Squared Hellinger distance between two nonnegative densities on one grid.
inline double hellinger_sq(const GridFunction& a, const GridFunction& b) {
    return zip(a, b, [](double x, double y) {
               double d = std::sqrt(std::max(x, 0.0)) - std::sqrt(std::max(y, 0.0));
               return d * d;
           }).integral();
}

}  // namespace couplab
