#pragma once

// Shared statistical helpers: normal CDF/quantile, empirical summaries,
// Kolmogorov-Smirnov statistic, Wilson interval, exact binomial tails.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace couplab::stats {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Wichura's AS241 (PPND16): double-precision inverse standard normal CDF.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p outside (0,1)");
    double q = p - 0.5;
    double r;
    if (std::abs(q) <= 0.425) {
        r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r + 6.7265770927008700853e4) * r +
                    4.5921953931549871457e4) * r + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
                  1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
               (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r + 3.9307895800092710610e4) * r +
                    2.1213794301586595867e4) * r + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
                  4.2313330701600911252e1) * r + 1.0);
    }
    r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r + 2.41780725177450611770e-1) * r +
                   1.27045825245236838258e0) * r + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
                 4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
              (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r + 1.51986665636164571966e-2) * r +
                   1.48103976427480074590e-1) * r + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
                 2.05319162663775882187e0) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 1.24266094738807843860e-3) * r +
                   2.65321895265761230930e-2) * r + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
                 5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
              (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r + 1.84631831751005468180e-5) * r +
                   7.86869131145613259100e-4) * r + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
                 5.99832206555887937690e-1) * r + 4.38609027306438118980e0);
    }
    return q < 0.0 ? -val : val;
}

struct Summary {
    std::size_t n = 0;
    double mean = 0.0;
    double var = 0.0;  // unbiased
    double se = 0.0;   // of the mean
};

inline Summary summarize(const std::vector<double>& x) {
    Summary s;
    s.n = x.size();
    if (s.n == 0) return s;
    s.mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(s.n);
    if (s.n > 1) {
        double acc = 0.0;
        for (double v : x) acc += (v - s.mean) * (v - s.mean);
        s.var = acc / static_cast<double>(s.n - 1);
        s.se = std::sqrt(s.var / static_cast<double>(s.n));
    }
    return s;
}

// sup_x |ECDF(x) - F(x)| for a model CDF F.
inline double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
    if (sample.empty()) throw std::invalid_argument("ks_statistic: empty sample");
    std::sort(sample.begin(), sample.end());
    double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        double f = cdf(sample[i]);
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
        d = std::max(d, std::abs(static_cast<double>(i) / n - f));
    }
    return d;
}

struct Interval {
    double lo = 0.0, hi = 1.0;
};

// Wilson score interval for a binomial proportion.
inline Interval wilson_interval(std::size_t successes, std::size_t trials, double z = 1.959963984540054) {
    if (trials == 0) throw std::invalid_argument("wilson_interval: zero trials");
    double n = static_cast<double>(trials);
    double p = static_cast<double>(successes) / n;
    double z2 = z * z;
    double denom = 1.0 + z2 / n;
    double center = (p + z2 / (2.0 * n)) / denom;
    double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

// P(Bin(n, p) >= k), exact via log terms.
inline double binomial_sf(std::size_t k, std::size_t n, double p) {
    if (k == 0) return 1.0;
    if (k > n) return 0.0;
    double s = 0.0;
    for (std::size_t i = k; i <= n; ++i) {
        double lt = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) +
                    static_cast<double>(i) * std::log(p) + static_cast<double>(n - i) * std::log1p(-p);
        s += std::exp(lt);
    }
    return std::min(1.0, s);
}

inline double correlation(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("correlation: bad input");
    Summary sx = summarize(x), sy = summarize(y);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - sx.mean) * (y[i] - sy.mean);
    acc /= static_cast<double>(x.size() - 1);
    return acc / std::sqrt(sx.var * sy.var);
}

// Linear-interpolation percentile (q in [0,1]) of a copy of the data.
inline double percentile(std::vector<double> x, double q) {
    if (x.empty()) throw std::invalid_argument("percentile: empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("percentile: q outside [0,1]");
    std::sort(x.begin(), x.end());
    double pos = q * static_cast<double>(x.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= x.size()) return x.back();
    double t = pos - static_cast<double>(lo);
    return x[lo] + t * (x[lo + 1] - x[lo]);
}

// P(chi2_df >= x), exact finite forms for integer df:
// even df = 2m: e^{-x/2} sum_{i<m} (x/2)^i / i!,
// odd  df = 2m+1: erfc(sqrt(x/2)) + e^{-x/2} sum_{i=1..m} (x/2)^{i-1/2} / Gamma(i+1/2).
inline double chi2_sf(double x, unsigned df) {
    if (df == 0) throw std::invalid_argument("chi2_sf: zero df");
    if (x <= 0.0) return 1.0;
    double h = 0.5 * x;
    if (df % 2 == 0) {
        double term = 1.0, s = 1.0;
        for (unsigned i = 1; i < df / 2; ++i) {
            term *= h / static_cast<double>(i);
            s += term;
        }
        return std::min(1.0, std::exp(-h) * s);
    }
    double s = std::erfc(std::sqrt(h));
    double term = std::sqrt(h) / std::exp(std::lgamma(1.5));  // i = 1 term / e^{-h}
    for (unsigned i = 1; i <= (df - 1) / 2; ++i) {
        s += std::exp(-h) * term;
        term *= h / (static_cast<double>(i) + 0.5);
    }
    return std::min(1.0, s);
}

struct LineFit {
    double intercept = 0.0, slope = 0.0, r_squared = 0.0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line: bad input");
    Summary sx = summarize(x), sy = summarize(y);
    double sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) sxy += (x[i] - sx.mean) * (y[i] - sy.mean);
    sxy /= static_cast<double>(x.size() - 1);
    LineFit f;
    f.slope = sxy / sx.var;
    f.intercept = sy.mean - f.slope * sx.mean;
    f.r_squared = sy.var > 0.0 ? (sxy * sxy) / (sx.var * sy.var) : 1.0;
    return f;
}

}  // namespace couplab::stats
