#include "couplab/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "couplab/errors.hpp"

namespace couplab {

namespace {
constexpr double kDensityFloor = 1e-300;
constexpr double kDerivativeSlack = 1.05;  // finite-difference tolerance on class bounds

double gaussian_pdf(double x, double sigma) {
    double z = x / sigma;
    return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

double logistic_pdf(double x, double s) {
    double e = std::exp(-std::abs(x) / s);  // symmetric form, avoids overflow
    double d = 1.0 + e;
    return e / (s * d * d);
}

// Central differences on interior nodes only; output shrinks by one node
// per side so repeated differencing never touches one-sided estimates.
std::vector<double> central_diff(const std::vector<double>& v, double h) {
    std::vector<double> d(v.size() - 2);
    for (std::size_t i = 1; i + 1 < v.size(); ++i) d[i - 1] = (v[i + 1] - v[i - 1]) / (2.0 * h);
    return d;
}
}  // namespace

Grid default_grid() { return Grid::uniform(-10.0, 10.0, 1.0 / 256.0); }

void FunctionClassSpec::validate() const {
    if (!(M > 0.0) || !(L > 0.0)) throw ConfigError("FunctionClassSpec: M and L must be positive");
    if (!(beta > 1.0)) throw ConfigError("FunctionClassSpec: beta must exceed 1");
    if (!(A < B)) throw ConfigError("FunctionClassSpec: need A < B");
}

int holder_order(double beta) {
    if (!(beta > 1.0)) throw ConfigError("holder_order: beta must exceed 1");
    double fl = std::floor(beta);
    return static_cast<int>(fl == beta ? fl - 1.0 : fl);
}

Rates rates(double c, double c_prime, double beta, std::uint64_t n) {
    if (n < 2) throw ConfigError("rates: n must be at least 2");
    if (!(beta > 1.0)) throw ConfigError("rates: beta must exceed 1");
    if (!(c > 0.0) || !(c_prime > 0.0)) throw ConfigError("rates: constants must be positive");
    double ratio = std::log(static_cast<double>(n)) / static_cast<double>(n);
    Rates r;
    r.gamma_n = c * std::pow(ratio, beta / (2.0 * beta + 1.0));
    r.gamma_prime_n = c_prime * std::pow(ratio, (beta - 1.0) / (2.0 * beta + 1.0));
    return r;
}

MembershipReport check_membership(const GridFunction& f, const FunctionClassSpec& spec) {
    spec.validate();
    MembershipReport rep;
    rep.sup_value = f.sup_norm();
    double bound0 = std::min(spec.M, spec.L);
    if (rep.sup_value > bound0) {
        rep.ok = false;
        rep.reason = "sup-norm exceeds min(M, L)";
        return rep;
    }
    int k = holder_order(spec.beta);
    const double h = f.grid().step;
    if (f.size() < static_cast<std::size_t>(2 * k + 3))
        throw ConfigError("check_membership: grid too coarse for requested smoothness order");
    std::vector<double> v = f.values();
    for (int j = 1; j <= k; ++j) {
        v = central_diff(v, h);
        double sup = 0.0;
        for (double y : v) sup = std::max(sup, std::abs(y));
        if (sup > spec.L * kDerivativeSlack) {
            rep.ok = false;
            rep.reason = "derivative " + std::to_string(j) + " exceeds L";
            return rep;
        }
    }
    double alpha = spec.beta - static_cast<double>(k);
    std::vector<double> inv_pow(v.size());
    for (std::size_t lag = 1; lag < v.size(); ++lag)
        inv_pow[lag] = 1.0 / std::pow(static_cast<double>(lag) * h, alpha);
    double q = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
        for (std::size_t j = i + 1; j < v.size(); ++j)
            q = std::max(q, std::abs(v[j] - v[i]) * inv_pow[j - i]);
    rep.holder_quotient = q;
    if (q > spec.L * kDerivativeSlack) {
        rep.ok = false;
        rep.reason = "Hoelder quotient exceeds L";
    }
    return rep;
}

MembershipReport check_neighborhood(const PerturbedFunction& pf, const FunctionClassSpec& spec,
                                    const Rates& r) {
    spec.validate();
    require_same_grid(pf.f0, pf.g, "check_neighborhood");
    MembershipReport rep;
    const Grid& gr = pf.g.grid();
    for (std::size_t i = 0; i < gr.n; ++i) {
        double x = gr.x(i);
        if ((x < spec.A || x > spec.B) && std::abs(pf.g.value_at(i)) > 1e-12) {
            rep.ok = false;
            rep.reason = "perturbation not supported on [A, B]";
            return rep;
        }
    }
    if (pf.g.sup_norm() > r.gamma_n * (1.0 + 1e-12)) {
        rep.ok = false;
        rep.reason = "sup-norm of perturbation exceeds gamma_n";
        return rep;
    }
    if (pf.g.derivative().sup_norm() > r.gamma_prime_n * kDerivativeSlack) {
        rep.ok = false;
        rep.reason = "derivative of perturbation exceeds gamma_prime_n";
        return rep;
    }
    MembershipReport base = check_membership(pf.f(), spec);
    if (!base.ok) return base;
    return rep;
}

GridFunction smooth_bump(const Grid& g, double center, double width, double height) {
    if (!(width > 0.0)) throw ConfigError("smooth_bump: width must be positive");
    return GridFunction::tabulate(g, [&](double x) {
        double t = (x - center) / width;  // support is |t| <= 1/2
        if (std::abs(t) >= 0.5) return 0.0;
        double c = std::cos(std::numbers::pi * t);
        return height * c * c * c * c;
    });
}

void NoiseModel::tabulate_from_analytic() {
    const Grid g = density_.grid();
    density_ = GridFunction::tabulate(g, [this](double x) { return density_at(x); });
    score_ = GridFunction::tabulate(g, [this](double x) { return score(x); });
    curvature_ = GridFunction::tabulate(g, [this](double x) { return curvature(x); });
    GridFunction integrand = zip(score_, density_, [](double s, double p) { return s * s * p; });
    fisher_ = integrand.integral();
}

NoiseModel NoiseModel::gaussian(double sigma, const Grid& g) {
    if (!(sigma > 0.0)) throw ConfigError("NoiseModel::gaussian: sigma must be positive");
    NoiseModel m;
    m.family_ = Family::gaussian;
    m.param_ = sigma;
    m.density_ = GridFunction::constant(g, 0.0);
    m.third_bound_ = 0.0;
    m.tabulate_from_analytic();
    return m;
}

NoiseModel NoiseModel::logistic(double scale, const Grid& g) {
    if (!(scale > 0.0)) throw ConfigError("NoiseModel::logistic: scale must be positive");
    NoiseModel m;
    m.family_ = Family::logistic;
    m.param_ = scale;
    m.density_ = GridFunction::constant(g, 0.0);
    // sup of sech^2(u) tanh(u) / (2 s^3) over u, attained at tanh(u) = 3^{-1/2}
    m.third_bound_ = 2.0 / (3.0 * std::sqrt(3.0)) / (2.0 * scale * scale * scale);
    m.tabulate_from_analytic();
    return m;
}

NoiseModel NoiseModel::tabulated(GridFunction density) {
    NoiseModel m;
    m.family_ = Family::tabulated;
    m.param_ = 0.0;
    double mass = density.integral();
    if (!(mass > 0.0)) throw ConfigError("NoiseModel::tabulated: density has no mass");
    m.density_ = map(density, [mass](double v) {
        if (v < 0.0) throw ConfigError("NoiseModel::tabulated: negative density value");
        return v / mass;
    });
    GridFunction logd = map(m.density_, [](double v) { return std::log(std::max(v, kDensityFloor)); });
    m.score_ = logd.derivative();
    m.curvature_ = m.score_.derivative();
    m.third_bound_ = m.curvature_.derivative().sup_norm();
    GridFunction integrand =
        zip(m.score_, m.density_, [](double s, double p) { return s * s * p; });
    m.fisher_ = integrand.integral();
    const auto& v = m.density_.values();
    m.cdf_.assign(v.size(), 0.0);
    for (std::size_t i = 1; i < v.size(); ++i)
        m.cdf_[i] = m.cdf_[i - 1] + 0.5 * (v[i - 1] + v[i]) * m.density_.grid().step;
    for (auto& c : m.cdf_) c /= m.cdf_.back();
    return m;
}

double NoiseModel::density_at(double x) const {
    switch (family_) {
        case Family::gaussian: return gaussian_pdf(x, param_);
        case Family::logistic: return logistic_pdf(x, param_);
        case Family::tabulated: return std::max(density_(x), 0.0);
    }
    return 0.0;
}

double NoiseModel::log_density(double x) const {
    double p = density_at(x);
    if (p < kDensityFloor) throw EvaluationRangeError("NoiseModel::log_density: below density floor");
    switch (family_) {
        case Family::gaussian: {
            double z = x / param_;
            return -0.5 * z * z - std::log(param_ * std::sqrt(2.0 * std::numbers::pi));
        }
        case Family::logistic: {
            double a = std::abs(x) / param_;
            return -a - 2.0 * std::log1p(std::exp(-a)) - std::log(param_);
        }
        case Family::tabulated: return std::log(p);
    }
    return -std::numeric_limits<double>::infinity();
}

double NoiseModel::score(double x) const {
    switch (family_) {
        case Family::gaussian: return -x / (param_ * param_);
        case Family::logistic: return -std::tanh(x / (2.0 * param_)) / param_;
        case Family::tabulated: return score_(x);
    }
    return 0.0;
}

double NoiseModel::curvature(double x) const {
    switch (family_) {
        case Family::gaussian: return -1.0 / (param_ * param_);
        case Family::logistic: {
            double c = std::cosh(x / (2.0 * param_));
            return -1.0 / (2.0 * param_ * param_ * c * c);
        }
        case Family::tabulated: return curvature_(x);
    }
    return 0.0;
}

double NoiseModel::sample(std::mt19937_64& rng) const {
    switch (family_) {
        case Family::gaussian: {
            std::normal_distribution<double> nd(0.0, param_);
            return nd(rng);
        }
        case Family::logistic: {
            std::uniform_real_distribution<double> ud(0.0, 1.0);
            double u = ud(rng);
            while (u <= 0.0 || u >= 1.0) u = ud(rng);
            return param_ * std::log(u / (1.0 - u));
        }
        case Family::tabulated: {
            std::uniform_real_distribution<double> ud(0.0, 1.0);
            double u = ud(rng);
            auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
            std::size_t j = it == cdf_.begin() ? 1 : static_cast<std::size_t>(it - cdf_.begin());
            if (j >= cdf_.size()) j = cdf_.size() - 1;
            double c0 = cdf_[j - 1], c1 = cdf_[j];
            double t = c1 > c0 ? (u - c0) / (c1 - c0) : 0.5;
            const Grid& g = density_.grid();
            return g.x(j - 1) + t * g.step;
        }
    }
    return 0.0;
}

bool NoiseModel::score_invertible() const { return family_ != Family::tabulated; }

double NoiseModel::score_inverse(double s) const {
    switch (family_) {
        case Family::gaussian: return -s * param_ * param_;
        case Family::logistic: {
            double t = -s * param_;
            if (!(std::abs(t) < 1.0))
                throw EvaluationRangeError("NoiseModel::score_inverse: value outside score range");
            return 2.0 * param_ * std::atanh(t);
        }
        case Family::tabulated:
            throw EvaluationRangeError("NoiseModel::score_inverse: tabulated score not invertible");
    }
    return 0.0;
}

NoiseModel match_fisher(const NoiseModel& templ, double target_fisher) {
    if (!(target_fisher > 0.0)) throw ConfigError("match_fisher: target must be positive");
    switch (templ.family()) {
        case NoiseModel::Family::gaussian:
            return NoiseModel::gaussian(1.0 / std::sqrt(target_fisher), templ.grid());
        case NoiseModel::Family::logistic:
            // standard logistic has Fisher information 1/3; scaling by s divides it by s^2
            return NoiseModel::logistic(1.0 / std::sqrt(3.0 * target_fisher), templ.grid());
        case NoiseModel::Family::tabulated: {
            double a = std::sqrt(target_fisher / templ.fisher_information());
            const Grid& g = templ.grid();
            GridFunction scaled =
                GridFunction::tabulate(g, [&](double x) { return a * templ.density_at(a * x); });
            return NoiseModel::tabulated(scaled);
        }
    }
    throw ConfigError("match_fisher: unknown family");
}

}  // namespace couplab
