#pragma once

// Blockwise likelihood-ratio machinery shared by the three experiments:
// exact per-block log ratios, their Taylor split, event diagnostics on
// coupled pairs, and Monte Carlo Hellinger / L1 distance estimates.

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "couplab/blocks.hpp"
#include "couplab/models.hpp"
#include "couplab/rng.hpp"
#include "couplab/simulate.hpp"
#include "couplab/stationary.hpp"

namespace couplab {

struct BlockTerms {
    double log_lr = 0.0;  // exact sum of per-observation log density ratios
    double t1 = 0.0;      // -sum g(s_i) l'(e_i)
    double t2 = 0.0;      // (1/2) sum g(s_i)^2 l''(e_i)

    // Bookkeeping identity: log_lr = t1 + t2 + remainder by construction.
    double remainder() const { return log_lr - t1 - t2; }
};

struct LogLikelihoodRatio {
    double block0 = 0.0;  // log(psi_f / psi_f0)(X_0) for the chain, 0 otherwise
    std::vector<BlockTerms> blocks;

    double total() const;  // block0 + block sums in block order
};

// Core evaluator: observation i has residual e_i - g(s_i) under the
// perturbed function and e_i under the base one, so each log ratio is
// l(e_i - g(s_i)) - l(e_i).
LogLikelihoodRatio loglr_terms(const std::vector<double>& states,
                               const std::vector<double>& innovations, const GridFunction& g,
                               const NoiseModel& noise, const BlockPartition& bp);

// Chain experiment: states are X_{i-1}, plus the initial-state density ratio.
LogLikelihoodRatio loglr_ar(const ArTrajectory& traj, const PerturbedFunction& pf,
                            const NoiseModel& noise, const StationaryDensity& psi_f,
                            const StationaryDensity& psi_f0, const BlockPartition& bp);

// Regression experiments: no initial-state term.
LogLikelihoodRatio loglr_random(const RandomDesignSample& s, const PerturbedFunction& pf,
                                const NoiseModel& noise, const BlockPartition& bp);
LogLikelihoodRatio loglr_fixed(const FixedDesignSample& s, const PerturbedFunction& pf,
                               const NoiseModel& noise, const BlockPartition& bp);

// |remainder| <= (third-derivative bound / 6) * sup|g|^3 * m_l.
inline double taylor_remainder_bound(const NoiseModel& noise, double g_sup, std::uint64_t m_l) {
    return noise.third_derivative_bound() / 6.0 * g_sup * g_sup * g_sup
           * static_cast<double>(m_l);
}

// Initial-state Hellinger term E_{f0}(sqrt(psi_f/psi_f0)(X_0) - 1)^2,
// which equals the squared Hellinger distance of the two densities.
inline double block0_hellinger(const StationaryDensity& psi_f, const StationaryDensity& psi_f0) {
    return hellinger_sq(psi_f.psi, psi_f0.psi);
}

// Slack sequence for the curvature-gap event; decays like (log n)^{-1/2}.
double default_v_n(std::uint64_t n);

// c_event * gamma^{1/4} gamma'^{3/4} m^{1/4} log m.
double event_t1_threshold(double c_event, const Rates& r, std::uint64_t m_l);

struct BlockEvent {
    std::uint64_t l = 0;  // 1-based block index
    double t1_gap = 0.0;
    double t1_threshold = 0.0;
    double t2_gap = 0.0;
    double t2_threshold = 0.0;
    double log_lr_1 = 0.0;
    double log_lr_2 = 0.0;
    bool score_gap_ok = false;      // |T1 gap| within threshold
    bool curvature_gap_ok = false;  // |T2 gap| within v_n K^{-1/2}
    bool lr_1_ok = false;           // block log LR of experiment 1 <= 1
    bool lr_2_ok = false;           // same for experiment 2

    bool all() const { return score_gap_ok && curvature_gap_ok && lr_1_ok && lr_2_ok; }
};

struct EventDiagnostics {
    double c_event = 1.0;
    double v_n = 0.0;
    std::vector<BlockEvent> blocks;

    std::size_t failure_count() const;
    bool all_hold() const { return failure_count() == 0; }
};

EventDiagnostics event_diagnostics(const LogLikelihoodRatio& lr1, const LogLikelihoodRatio& lr2,
                                   const Rates& r, const BlockPartition& bp, double c_event,
                                   double v_n);

struct DistanceEstimate {
    double h2 = 0.0;  // mean of (sqrt L1 - sqrt L2)^2
    double h2_se = 0.0;
    double l1 = 0.0;  // mean of |L1 - L2|
    double l1_se = 0.0;
    std::uint64_t reps = 0;

    // Gaussian-gap form of the same distance: when log L1 - log L2 is
    // normal and E[L1] = E[L2] = 1, E(sqrt L1 - sqrt L2)^2 equals
    // 2(1 - exp(-Var(gap)/8)) exactly. The direct mean above carries an
    // exp(Var(log L)) variance factor from rare large-L replications;
    // this form only needs fourth moments of the gap, so it separates
    // nearby distances with far fewer replications. Use it only when
    // gauss_gap_valid() holds.
    double h2_gauss = 0.0;
    double h2_gauss_se = 0.0;   // delta method through Var(gap)
    double gap_mean = 0.0;
    double gap_var = 0.0;
    double gap_normal_ks = 0.0;  // KS of the gaps against the fitted normal
    double norm1 = 1.0;          // sample means of L1, L2 (both are 1 exactly)
    double norm2 = 1.0;
    double norm1_se = 0.0;
    double norm2_se = 0.0;

    // One-sided check of (1/2) L1 <= sqrt(H2) with an MC error allowance.
    bool l1_hellinger_consistent(double z = 3.0) const;

    // Normality of the gap (composite KS below 1/sqrt(reps)) plus the
    // exact normalizations E[L^e] = 1 within z s.e. each.
    bool gauss_gap_valid(double z = 3.0) const;
};

// gen(seed) returns one coupled draw of (log L1, log L2) under the base
// function; reductions are in replication order, so results do not
// depend on the worker count.
using CoupledLogLR = std::function<std::pair<double, double>(const SeedStream&)>;

DistanceEstimate hellinger_mc(const CoupledLogLR& gen, std::uint64_t reps, const SeedStream& seed,
                              unsigned workers = 1);

// conditional(history_seed, inner_seed) redraws every block given the
// history preceding it (held fixed by history_seed) and returns the
// per-block (log L1_l, log L2_l) pairs.
using ConditionalBlocks =
    std::function<std::vector<std::pair<double, double>>(const SeedStream&, const SeedStream&)>;

struct BlockBoundReport {
    double lhs = 0.0;  // unconditional H2 estimate on full-sample ratios
    double lhs_se = 0.0;
    double block0 = 0.0;
    std::vector<double> block_max;  // per block: max over histories of E[(sqrt - sqrt)^2 | F]
    double rhs = 0.0;               // block0 + sum of block_max
    double rhs_se = 0.0;            // quadrature-combined s.e. at the argmax draws
    bool holds = false;             // lhs <= rhs + 3 combined s.e.
};

// Chain-rule bound: the full-sample Hellinger distance is at most the
// initial-state term plus the sum over blocks of the worst conditional
// block term; the sup over histories is proxied by a max over draws.
BlockBoundReport blockwise_hellinger_check(const CoupledLogLR& full, const ConditionalBlocks& cond,
                                           std::size_t histories, std::uint64_t inner_reps,
                                           std::uint64_t outer_reps, double block0,
                                           const SeedStream& seed, unsigned workers = 1);

struct ScoreTruncation {
    double threshold = 0.0;
    std::uint64_t exceed_count = 0;  // observations with |l'(e_i)| > threshold
    double t1_full = 0.0;
    double t1_truncated = 0.0;  // exceeding terms dropped
};

// Diagnostic for heavy score values inside T1; no rate is asserted.
ScoreTruncation score_truncation(const std::vector<double>& states,
                                 const std::vector<double>& innovations, const GridFunction& g,
                                 const NoiseModel& noise, double threshold);

}  // namespace couplab
