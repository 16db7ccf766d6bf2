#include "couplab/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "couplab/errors.hpp"
#include "couplab/stats.hpp"

namespace couplab {

namespace {

constexpr double kDensityFloor = 1e-300;

double log_density_ratio_at(const GridFunction& num, const GridFunction& den, double x) {
    double a = num(x), b = den(x);
    if (a < kDensityFloor || b < kDensityFloor)
        throw EvaluationRangeError("initial-state density underflows at x = " + std::to_string(x));
    return std::log(a) - std::log(b);
}

// (e^{a/2} - e^{b/2})^2 evaluated without cancellation.
double sqrt_gap_sq(double log_l1, double log_l2) {
    double hi = std::max(log_l1, log_l2), lo = std::min(log_l1, log_l2);
    double d = -std::expm1(0.5 * (lo - hi));  // 1 - e^{(lo-hi)/2} >= 0
    return std::exp(hi) * d * d;
}

double abs_gap(double log_l1, double log_l2) {
    double hi = std::max(log_l1, log_l2), lo = std::min(log_l1, log_l2);
    return std::exp(hi) * -std::expm1(lo - hi);
}

}  // namespace

double LogLikelihoodRatio::total() const {
    double s = block0;
    for (const BlockTerms& b : blocks) s += b.log_lr;
    return s;
}

LogLikelihoodRatio loglr_terms(const std::vector<double>& states,
                               const std::vector<double>& innovations, const GridFunction& g,
                               const NoiseModel& noise, const BlockPartition& bp) {
    if (states.size() != bp.n || innovations.size() != bp.n)
        throw ConfigError("loglr_terms: observation count does not match the partition");
    LogLikelihoodRatio out;
    out.blocks.resize(bp.count);
    for (std::size_t l = 0; l < bp.count; ++l) {
        BlockTerms& bt = out.blocks[l];
        for (std::uint64_t i = bp.first[l]; i <= bp.last(l); ++i) {
            double s = states[i - 1];
            double e = innovations[i - 1];
            double shift = g(s);
            bt.log_lr += noise.log_density(e - shift) - noise.log_density(e);
            bt.t1 += -shift * noise.score(e);
            bt.t2 += 0.5 * shift * shift * noise.curvature(e);
        }
    }
    return out;
}

LogLikelihoodRatio loglr_ar(const ArTrajectory& traj, const PerturbedFunction& pf,
                            const NoiseModel& noise, const StationaryDensity& psi_f,
                            const StationaryDensity& psi_f0, const BlockPartition& bp) {
    std::vector<double> states(traj.n());
    for (std::uint64_t i = 1; i <= traj.n(); ++i) states[i - 1] = traj.state_before(i);
    LogLikelihoodRatio out = loglr_terms(states, traj.innovations, pf.g, noise, bp);
    out.block0 = log_density_ratio_at(psi_f.psi, psi_f0.psi, traj.x0);
    return out;
}

LogLikelihoodRatio loglr_random(const RandomDesignSample& s, const PerturbedFunction& pf,
                                const NoiseModel& noise, const BlockPartition& bp) {
    return loglr_terms(s.xi, s.eta, pf.g, noise, bp);
}

LogLikelihoodRatio loglr_fixed(const FixedDesignSample& s, const PerturbedFunction& pf,
                               const NoiseModel& noise, const BlockPartition& bp) {
    return loglr_terms(s.t, s.eta, pf.g, noise, bp);
}

double default_v_n(std::uint64_t n) {
    if (n < 2) throw ConfigError("default_v_n: n must be at least 2");
    return 1.0 / std::sqrt(std::log(static_cast<double>(n)));
}

double event_t1_threshold(double c_event, const Rates& r, std::uint64_t m_l) {
    double m = static_cast<double>(m_l);
    return c_event * std::pow(r.gamma_n, 0.25) * std::pow(r.gamma_prime_n, 0.75)
           * std::pow(m, 0.25) * std::log(m);
}

std::size_t EventDiagnostics::failure_count() const {
    std::size_t c = 0;
    for (const BlockEvent& b : blocks)
        if (!b.all()) ++c;
    return c;
}

EventDiagnostics event_diagnostics(const LogLikelihoodRatio& lr1, const LogLikelihoodRatio& lr2,
                                   const Rates& r, const BlockPartition& bp, double c_event,
                                   double v_n) {
    if (lr1.blocks.size() != bp.count || lr2.blocks.size() != bp.count)
        throw ConfigError("event_diagnostics: block counts disagree with the partition");
    EventDiagnostics d;
    d.c_event = c_event;
    d.v_n = v_n;
    double t2_threshold = v_n / std::sqrt(static_cast<double>(bp.count));
    d.blocks.resize(bp.count);
    for (std::size_t l = 0; l < bp.count; ++l) {
        BlockEvent& e = d.blocks[l];
        e.l = l + 1;
        e.t1_gap = std::abs(lr1.blocks[l].t1 - lr2.blocks[l].t1);
        e.t1_threshold = event_t1_threshold(c_event, r, bp.size[l]);
        e.t2_gap = std::abs(lr1.blocks[l].t2 - lr2.blocks[l].t2);
        e.t2_threshold = t2_threshold;
        e.log_lr_1 = lr1.blocks[l].log_lr;
        e.log_lr_2 = lr2.blocks[l].log_lr;
        e.score_gap_ok = e.t1_gap <= e.t1_threshold;
        e.curvature_gap_ok = e.t2_gap <= e.t2_threshold;
        e.lr_1_ok = e.log_lr_1 <= 1.0;
        e.lr_2_ok = e.log_lr_2 <= 1.0;
    }
    return d;
}

bool DistanceEstimate::l1_hellinger_consistent(double z) const {
    double h = std::sqrt(std::max(h2, 0.0));
    double h_se = h > 0.0 ? 0.5 * h2_se / h : std::sqrt(h2_se);
    return 0.5 * l1 <= h + z * std::sqrt(0.25 * l1_se * l1_se + h_se * h_se);
}

DistanceEstimate hellinger_mc(const CoupledLogLR& gen, std::uint64_t reps, const SeedStream& seed,
                              unsigned workers) {
    if (reps < 2) throw ConfigError("hellinger_mc: need at least 2 replications");
    std::vector<double> h2_terms(reps), l1_terms(reps), gaps(reps), e1(reps), e2(reps);
    parallel_for(reps, workers, [&](std::uint64_t i) {
        auto [a, b] = gen(seed.child(i));
        h2_terms[i] = sqrt_gap_sq(a, b);
        l1_terms[i] = abs_gap(a, b);
        gaps[i] = a - b;
        e1[i] = std::exp(a);
        e2[i] = std::exp(b);
    });
    DistanceEstimate est;
    est.reps = reps;
    stats::Summary h2 = stats::summarize(h2_terms);
    stats::Summary l1 = stats::summarize(l1_terms);
    est.h2 = h2.mean;
    est.h2_se = h2.se;
    est.l1 = l1.mean;
    est.l1_se = l1.se;

    stats::Summary g = stats::summarize(gaps);
    est.gap_mean = g.mean;
    est.gap_var = g.var;
    est.h2_gauss = 2.0 * (1.0 - std::exp(-g.var / 8.0));
    double m4 = 0.0;
    for (double x : gaps) {
        double d = x - g.mean, d2 = d * d;
        m4 += d2 * d2;
    }
    m4 /= static_cast<double>(reps);
    double var_se = std::sqrt(std::max(m4 - g.var * g.var, 0.0) / static_cast<double>(reps));
    est.h2_gauss_se = std::exp(-g.var / 8.0) / 4.0 * var_se;
    double sd = std::sqrt(g.var);
    est.gap_normal_ks = stats::ks_statistic(
        gaps, [&](double x) { return stats::normal_cdf((x - g.mean) / sd); });
    stats::Summary s1 = stats::summarize(e1), s2 = stats::summarize(e2);
    est.norm1 = s1.mean;
    est.norm2 = s2.mean;
    est.norm1_se = s1.se;
    est.norm2_se = s2.se;
    return est;
}

bool DistanceEstimate::gauss_gap_valid(double z) const {
    return gap_normal_ks < 1.0 / std::sqrt(static_cast<double>(reps)) &&
           std::abs(norm1 - 1.0) <= z * norm1_se && std::abs(norm2 - 1.0) <= z * norm2_se;
}

BlockBoundReport blockwise_hellinger_check(const CoupledLogLR& full, const ConditionalBlocks& cond,
                                           std::size_t histories, std::uint64_t inner_reps,
                                           std::uint64_t outer_reps, double block0,
                                           const SeedStream& seed, unsigned workers) {
    if (histories < 1 || inner_reps < 2)
        throw ConfigError("blockwise_hellinger_check: need histories >= 1, inner_reps >= 2");
    BlockBoundReport rep;
    rep.block0 = block0;

    DistanceEstimate outer = hellinger_mc(full, outer_reps, seed.child("outer"), workers);
    rep.lhs = outer.h2;
    rep.lhs_se = outer.h2_se;

    SeedStream hist_seed = seed.child("history");
    SeedStream inner_seed = seed.child("inner");
    std::size_t n_blocks = 0;
    // terms[r] holds per-block running mean data over inner draws
    std::vector<std::vector<double>> mean_rl(histories), var_rl(histories);
    for (std::size_t r = 0; r < histories; ++r) {
        std::vector<std::vector<double>> draws;  // draws[m] = per-block terms
        draws.resize(inner_reps);
        SeedStream hr = hist_seed.child(static_cast<std::uint64_t>(r));
        parallel_for(inner_reps, workers, [&](std::uint64_t m) {
            auto pairs = cond(hr, inner_seed.child(static_cast<std::uint64_t>(r))
                                      .child(static_cast<std::uint64_t>(m)));
            std::vector<double> terms(pairs.size());
            for (std::size_t l = 0; l < pairs.size(); ++l)
                terms[l] = sqrt_gap_sq(pairs[l].first, pairs[l].second);
            draws[m] = std::move(terms);
        });
        n_blocks = draws.front().size();
        mean_rl[r].assign(n_blocks, 0.0);
        var_rl[r].assign(n_blocks, 0.0);
        for (std::size_t l = 0; l < n_blocks; ++l) {
            std::vector<double> col(inner_reps);
            for (std::uint64_t m = 0; m < inner_reps; ++m) col[m] = draws[m][l];
            stats::Summary s = stats::summarize(col);
            mean_rl[r][l] = s.mean;
            var_rl[r][l] = s.se * s.se;
        }
    }
    rep.block_max.assign(n_blocks, 0.0);
    double se_sq = 0.0;
    rep.rhs = block0;
    for (std::size_t l = 0; l < n_blocks; ++l) {
        std::size_t best = 0;
        for (std::size_t r = 1; r < histories; ++r)
            if (mean_rl[r][l] > mean_rl[best][l]) best = r;
        rep.block_max[l] = mean_rl[best][l];
        rep.rhs += mean_rl[best][l];
        se_sq += var_rl[best][l];
    }
    rep.rhs_se = std::sqrt(se_sq);
    rep.holds = rep.lhs <= rep.rhs + 3.0 * std::sqrt(rep.lhs_se * rep.lhs_se + se_sq);
    return rep;
}

ScoreTruncation score_truncation(const std::vector<double>& states,
                                 const std::vector<double>& innovations, const GridFunction& g,
                                 const NoiseModel& noise, double threshold) {
    if (states.size() != innovations.size())
        throw ConfigError("score_truncation: length mismatch");
    ScoreTruncation out;
    out.threshold = threshold;
    for (std::size_t i = 0; i < states.size(); ++i) {
        double term = -g(states[i]) * noise.score(innovations[i]);
        out.t1_full += term;
        if (std::abs(noise.score(innovations[i])) > threshold)
            ++out.exceed_count;
        else
            out.t1_truncated += term;
    }
    return out;
}

}  // namespace couplab
