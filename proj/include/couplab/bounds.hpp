#pragma once

// Standalone probabilistic inequalities: the exponential moment bound
// E exp(lambda xi) <= exp(c lambda^2 E xi^2) for centered |xi| <= a with
// c = e^a / 2 and |lambda| <= 1, and empirical tail tables for centered
// block statistics against calibrated thresholds.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "couplab/rng.hpp"
#include "couplab/stats.hpp"

namespace couplab {

struct BoundedVariableSpec {
    std::string name;
    double a = 1.0;  // declared support bound, |xi| <= a
    bool mean_zero = true;
    std::function<double(std::mt19937_64&)> sampler;
    // Finitely supported laws carry their atoms for exact enumeration.
    std::vector<double> support;
    std::vector<double> probs;

    bool finite() const { return !support.empty(); }
    void validate() const;
};

// Canonical centered test laws on [-a, a].
BoundedVariableSpec two_point_spec(double a);
BoundedVariableSpec truncated_uniform_spec(double a);
BoundedVariableSpec truncated_gaussian_spec(double a, double sd);

struct ExpInequalityRow {
    double lambda = 0.0;
    double lhs = 0.0;     // E exp(lambda xi)
    double lhs_se = 0.0;  // 0 for exact enumeration
    double rhs = 0.0;     // exp(c lambda^2 E xi^2)
    bool holds = false;   // lhs <= rhs + 3 lhs_se
    bool exact = false;
};

struct ExpInequalityReport {
    std::string name;
    double a = 0.0;
    double c = 0.0;              // e^a / 2
    double second_moment = 0.0;  // E xi^2, exact or estimated
    double mean = 0.0;           // sample or enumerated mean
    double mean_se = 0.0;
    std::uint64_t reps = 0;  // 0 for exact enumeration
    std::vector<ExpInequalityRow> rows;

    bool all_hold() const;
};

// Finite support: exact enumeration. Otherwise one sample of size `reps`
// shared across the lambda grid. Throws ConfigError for |lambda| > 1 and
// BoundViolation when a sampled value leaves [-a, a].
ExpInequalityReport exp_inequality_check(const BoundedVariableSpec& spec,
                                         const std::vector<double>& lambdas, std::uint64_t reps,
                                         const SeedStream& seed);

struct TailRow {
    std::size_t cell = 0;
    double threshold = 0.0;
    std::uint64_t exceed = 0;
    std::uint64_t reps = 0;
    double rate = 0.0;
    stats::Interval wilson;  // 95% interval for the exceedance probability
};

struct TailReport {
    std::vector<TailRow> rows;
    double max_rate = 0.0;

    bool within(double limit) const;
};

// deviations[rep][cell] are centered block statistics; a row counts the
// replications with |deviation| above its cell's threshold. Requires at
// least 100 replications and strictly positive thresholds.
TailReport mixing_tail_check(const std::vector<std::vector<double>>& deviations,
                             const std::vector<double>& thresholds);

}  // namespace couplab
