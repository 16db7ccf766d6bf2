#include "couplab/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "couplab/errors.hpp"

namespace couplab {

namespace {

inline double unit_open(std::mt19937_64& eng) {
    return (static_cast<double>(eng() >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

void BoundedVariableSpec::validate() const {
    if (!(a >= 0.0) || !std::isfinite(a))
        throw ConfigError("BoundedVariableSpec: bound must be finite and nonnegative");
    if (!mean_zero) throw ConfigError("BoundedVariableSpec: the moment bound needs E xi = 0");
    if (finite()) {
        if (support.size() != probs.size())
            throw ConfigError("BoundedVariableSpec: support and probabilities must match");
        double mass = 0.0, mean = 0.0;
        for (std::size_t i = 0; i < support.size(); ++i) {
            if (!(probs[i] >= 0.0)) throw ConfigError("BoundedVariableSpec: negative probability");
            if (std::abs(support[i]) > a * (1.0 + 1e-12))
                throw BoundViolation("BoundedVariableSpec: atom outside the declared bound");
            mass += probs[i];
            mean += probs[i] * support[i];
        }
        if (std::abs(mass - 1.0) > 1e-9)
            throw ConfigError("BoundedVariableSpec: probabilities must sum to one");
        if (std::abs(mean) > 1e-9)
            throw ConfigError("BoundedVariableSpec: finite law is not centered");
    } else if (!sampler) {
        throw ConfigError("BoundedVariableSpec: need a sampler or a finite support");
    }
}

BoundedVariableSpec two_point_spec(double a) {
    BoundedVariableSpec s;
    s.name = "two-point";
    s.a = a;
    s.support = {-a, a};
    s.probs = {0.5, 0.5};
    s.sampler = [a](std::mt19937_64& eng) { return (eng() >> 63) ? a : -a; };
    return s;
}

BoundedVariableSpec truncated_uniform_spec(double a) {
    BoundedVariableSpec s;
    s.name = "uniform";
    s.a = a;
    s.sampler = [a](std::mt19937_64& eng) { return a * (2.0 * unit_open(eng) - 1.0); };
    return s;
}

BoundedVariableSpec truncated_gaussian_spec(double a, double sd) {
    BoundedVariableSpec s;
    s.name = "truncated-gaussian";
    s.a = a;
    s.sampler = [a, sd](std::mt19937_64& eng) {
        for (;;) {
            double x = sd * stats::normal_quantile(unit_open(eng));
            if (std::abs(x) <= a) return x;
        }
    };
    return s;
}

bool ExpInequalityReport::all_hold() const {
    for (const ExpInequalityRow& r : rows)
        if (!r.holds) return false;
    return !rows.empty();
}

ExpInequalityReport exp_inequality_check(const BoundedVariableSpec& spec,
                                         const std::vector<double>& lambdas, std::uint64_t reps,
                                         const SeedStream& seed) {
    spec.validate();
    if (lambdas.empty()) throw ConfigError("exp_inequality_check: empty lambda grid");
    for (double l : lambdas)
        if (!(std::abs(l) <= 1.0))
            throw ConfigError("exp_inequality_check: the bound needs |lambda| <= 1");

    ExpInequalityReport rep;
    rep.name = spec.name;
    rep.a = spec.a;
    rep.c = 0.5 * std::exp(spec.a);

    if (spec.finite()) {
        for (std::size_t i = 0; i < spec.support.size(); ++i) {
            rep.second_moment += spec.probs[i] * spec.support[i] * spec.support[i];
            rep.mean += spec.probs[i] * spec.support[i];
        }
        for (double l : lambdas) {
            ExpInequalityRow row;
            row.lambda = l;
            row.exact = true;
            for (std::size_t i = 0; i < spec.support.size(); ++i)
                row.lhs += spec.probs[i] * std::exp(l * spec.support[i]);
            row.rhs = std::exp(rep.c * l * l * rep.second_moment);
            row.holds = row.lhs <= row.rhs;
            rep.rows.push_back(row);
        }
        return rep;
    }

    if (reps < 2) throw ConfigError("exp_inequality_check: need at least two samples");
    auto eng = seed.child("moment").engine();
    std::vector<double> sample(reps);
    for (std::uint64_t i = 0; i < reps; ++i) {
        double x = spec.sampler(eng);
        if (std::abs(x) > spec.a * (1.0 + 1e-12)) {
            char buf[128];
            std::snprintf(buf, sizeof buf, "sampled |%.6g| above the declared bound %.6g", x,
                          spec.a);
            throw BoundViolation(buf);
        }
        sample[i] = x;
    }
    rep.reps = reps;
    stats::Summary sm = stats::summarize(sample);
    rep.mean = sm.mean;
    rep.mean_se = sm.se;
    for (double x : sample) rep.second_moment += x * x;
    rep.second_moment /= static_cast<double>(reps);

    std::vector<double> transformed(reps);
    for (double l : lambdas) {
        for (std::uint64_t i = 0; i < reps; ++i) transformed[i] = std::exp(l * sample[i]);
        stats::Summary st = stats::summarize(transformed);
        ExpInequalityRow row;
        row.lambda = l;
        row.lhs = st.mean;
        row.lhs_se = st.se;
        row.rhs = std::exp(rep.c * l * l * rep.second_moment);
        row.holds = row.lhs <= row.rhs + 3.0 * row.lhs_se;
        rep.rows.push_back(row);
    }
    return rep;
}

bool TailReport::within(double limit) const {
    for (const TailRow& r : rows)
        if (r.rate > limit) return false;
    return true;
}

TailReport mixing_tail_check(const std::vector<std::vector<double>>& deviations,
                             const std::vector<double>& thresholds) {
    if (deviations.size() < 100)
        throw ConfigError("mixing_tail_check: need at least 100 replications");
    std::size_t cells = thresholds.size();
    if (cells == 0) throw ConfigError("mixing_tail_check: empty threshold table");
    for (double t : thresholds)
        if (!(t > 0.0)) throw ConfigError("mixing_tail_check: thresholds must be positive");
    for (const std::vector<double>& row : deviations)
        if (row.size() != cells)
            throw ConfigError("mixing_tail_check: replication width does not match thresholds");

    TailReport rep;
    auto n = static_cast<std::uint64_t>(deviations.size());
    for (std::size_t c = 0; c < cells; ++c) {
        TailRow row;
        row.cell = c;
        row.threshold = thresholds[c];
        row.reps = n;
        for (const std::vector<double>& d : deviations) row.exceed += std::abs(d[c]) > thresholds[c];
        row.rate = static_cast<double>(row.exceed) / static_cast<double>(n);
        row.wilson = stats::wilson_interval(row.exceed, n);
        rep.max_rate = std::max(rep.max_rate, row.rate);
        rep.rows.push_back(row);
    }
    return rep;
}

}  // namespace couplab
