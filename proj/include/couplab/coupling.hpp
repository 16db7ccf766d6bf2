#pragma once

// Simultaneous Skorokhod embedding of the score sums of both experiments
// into one shared family of Wiener processes indexed by the dyadic cells
// of (A, B]. Each observation glues the still-unused stretches of the
// processes along the chain leaf -> root containing its state, stops the
// glued path at a randomized two-point exit whose law is the score law,
// and recovers the innovation from the stopped value. Interval-localized
// score sums of the two sides then differ only by the overflow routed to
// coarser scales, which the horizon choice makes small.

#include <cstdint>
#include <random>
#include <vector>

#include "couplab/grid.hpp"
#include "couplab/haar.hpp"
#include "couplab/models.hpp"
#include "couplab/rng.hpp"
#include "couplab/simulate.hpp"
#include "couplab/stationary.hpp"

namespace couplab {

// ---------------------------------------------------------------------
// Randomized two-point exit target: a mean-zero law mu is realized as
// W(tau) by drawing a bracket (U, V), U <= 0 <= V, from the measure
// proportional to (v - u) mu(du) mu(dv) and stopping at the first exit
// of [U, V]; the exit value then has law mu exactly and E[tau] = Var(mu).
// Gaussian targets draw the bracket in closed form; other laws are
// discretized into atoms, each remembering the innovation whose score
// produced it (this carries the conditional randomization that maps the
// stopped value back to an innovation).
class ScoreTarget {
  public:
    // mu = N(0, score_sd^2); innovations recovered as value / inv_slope
    // with inv_slope = score'(x) = -1/sigma^2 constant.
    static ScoreTarget gaussian_exact(double score_sd);
    // Atoms at `values` (recentered to mean zero) with probabilities
    // proportional to `weights`; `innovations[a]` is returned for atom a
    // (empty: the stopped value itself is returned).
    static ScoreTarget discrete(std::vector<double> values, std::vector<double> weights,
                                std::vector<double> innovations = {});
    // Gaussian noise: exact bracket law. Otherwise the score law is
    // tabulated on the noise grid with trapezoid weights.
    static ScoreTarget from_noise(const NoiseModel& noise);

    bool exact() const { return exact_; }
    double variance() const { return variance_; }
    std::size_t atom_count() const { return values_.size(); }

    struct Bracket {
        double lo = 0.0, hi = 0.0;
        int lo_atom = -1, hi_atom = -1;
        bool zero = false;  // immediate stop at value 0 (atom at the origin)
        int zero_atom = -1;
    };
    Bracket draw_bracket(std::mt19937_64& eng) const;

    // Innovation whose score equals the stopped value: exact inversion
    // for Gaussian targets, the atom's preimage otherwise.
    double innovation_for(double value, int atom) const;

  private:
    ScoreTarget() = default;
    bool exact_ = false;
    double score_sd_ = 1.0;     // exact mode
    double variance_ = 0.0;
    std::vector<double> values_, innovations_;
    std::vector<double> weights_;      // normalized atom masses
    double zero_mass_ = 0.0;
    std::vector<double> zero_cum_;     // cumulative mass over zero atoms
    std::vector<int> zero_atoms_;
    double comp_a_weight_ = 0.5;       // E[X+] * W_neg vs E[X-] * W_pos
    std::vector<int> neg_atoms_, pos_atoms_;
    std::vector<double> neg_w_cum_, pos_w_cum_;        // ~ weight
    std::vector<double> neg_tilt_cum_, pos_tilt_cum_;  // ~ |value| * weight
};

// ---------------------------------------------------------------------
// Shared Brownian paths: one process per dyadic cell of (A, B] at levels
// 0..depth plus one exterior process for states outside (A, B]. Paths
// live on a dt grid and extend lazily but deterministically (each node
// owns an increment stream keyed by the family seed and node id, so the
// materialized values do not depend on query order or on which side asks
// first). Horizons cap consumption at levels >= 1; level 0 and the
// exterior stay unbounded.
class WienerFamily {
  public:
    static constexpr std::uint64_t kUnbounded = ~std::uint64_t{0};

    WienerFamily(double A, double B, int depth, double dt, const SeedStream& seed);

    const HaarSystem& tree() const { return sys_; }
    int depth() const { return depth_; }
    double dt() const { return dt_; }

    std::size_t node_count() const { return path_.size(); }  // dyadic + exterior
    std::size_t node_id(int j, std::uint64_t k) const;
    std::size_t exterior_id() const { return path_.size() - 1; }
    int level_of(std::size_t node) const;  // -1 for the exterior
    std::uint64_t index_of(std::size_t node) const;

    // Node ids consumed for a state: leaf -> root inside (A, B], just the
    // exterior process otherwise.
    std::vector<std::size_t> chain_for(double state) const;

    std::uint64_t horizon_index(std::size_t node) const { return horizon_[node]; }
    double horizon_time(std::size_t node) const;
    // Floors `time` to the dt grid; only levels >= 1 accept finite horizons.
    void set_horizon(int j, std::uint64_t k, double time);
    void clear_horizons();

    // W(grid_index * dt), extending the path as needed.
    double value(std::size_t node, std::uint64_t grid_index);
    std::uint64_t samples(std::size_t node) const { return path_[node].size() - 1; }

  private:
    HaarSystem sys_;
    int depth_ = 0;
    double dt_ = 1e-3, sqrt_dt_ = 0.0;
    std::vector<std::uint64_t> horizon_;
    std::vector<std::vector<double>> path_;  // path_[node][i] = W(i * dt), [0] = 0
    std::vector<std::mt19937_64> eng_;
};

// Position on one node's path: consumed time t (exact), path value w at t
// (the bracket barrier after a mid-cell stop), and the last grid index at
// or before t. `mid` marks t strictly inside a grid cell.
struct PathCursor {
    std::uint64_t grid = 0;
    bool mid = false;
    double t = 0.0;
    double w = 0.0;
};

// One consumed stretch [t0, t1) of a node's path with its endpoint values.
struct StepUse {
    std::size_t node = 0;
    double t0 = 0.0, t1 = 0.0;
    double w0 = 0.0, w1 = 0.0;
};

struct StopResult {
    double tau = 0.0;    // total consumed time
    double value = 0.0;  // exit barrier, exactly the bracket end (0 for a zero atom)
    bool high = false;   // exited at the upper bracket end
    int atom = -1;       // atom index for discrete targets
    std::vector<StepUse> uses;  // per-node consumption, finest node first
};

// Single-process embedding: first exit of a randomized two-point bracket.
// Throws TruncationError when the node's horizon is exhausted before the
// exit (callers with a containment chain glue the next process instead).
StopResult skorokhod_stop(WienerFamily& wf, std::size_t node, PathCursor& cursor,
                          const ScoreTarget& target, std::mt19937_64& eng);

// Chain variant: consumes the nodes in order (finest first), spilling to
// the next process whenever a horizon is exhausted.
StopResult chain_stop(WienerFamily& wf, std::vector<PathCursor>& cursors,
                      const std::vector<std::size_t>& chain, const ScoreTarget& target,
                      std::mt19937_64& eng);

// ---------------------------------------------------------------------
// One embedded observation and the bookkeeping of a whole side.
struct EmbeddedStep {
    double state = 0.0;       // conditioning state: X_{i-1}, xi_i, or t_i
    double value = 0.0;       // embedded score value W^{(i)}(tau^{(i)})
    double tau = 0.0;         // total stopping time of the step
    double innovation = 0.0;  // recovered innovation
    std::vector<StepUse> uses;
};

struct CouplingLedger {
    double x0 = 0.0;  // start state (autoregression side)
    std::vector<EmbeddedStep> steps;
    std::vector<PathCursor> cursors;  // final per-node cursors

    std::uint64_t m() const { return steps.size(); }
    // Cumulative time consumed at `node` after step i, entries i = 0..m;
    // nondecreasing and capped by the node's horizon.
    std::vector<double> cumulative_tau(std::size_t node) const;
    // Direct interval-localized score sum: sum_i value_i 1(state_i in I_{j,k}).
    double z_direct(const HaarSystem& sys, int j, std::uint64_t k) const;
};

// Disjointness and exactness audit of one side's consumption records;
// throws LedgerCorruption naming the first violated record.
void audit_ledger(const CouplingLedger& ledger, const WienerFamily& wf);

struct EmbeddedAr {
    ArTrajectory traj;
    CouplingLedger ledger;
};

// Autoregression side: X_0 ~ psi0, then per step locate the leaf cell of
// X_{i-1}, stop the glued chain, set score(eps_i) = stopped value, and
// advance X_i = f0(X_{i-1}) + eps_i.
EmbeddedAr embed_ar_side(const GridFunction& f0, const NoiseModel& noise,
                         const StationaryDensity& psi0, std::uint64_t m, WienerFamily& wf,
                         const SeedStream& seed);

// Continuation variant with an explicit start state (blockwise runs hand
// the previous block's last state to the next block's fresh family).
EmbeddedAr embed_ar_side(const GridFunction& f0, const NoiseModel& noise, double x0,
                         std::uint64_t m, WienerFamily& wf, const SeedStream& seed);

struct EmbeddedRegression {
    RandomDesignSample sample;
    CouplingLedger ledger;
};

// Regression side: xi_i i.i.d. from psi0, eta_i embedded in the SAME
// Wiener paths with the side's own cursors; y_i = f0(xi_i) + eta_i.
EmbeddedRegression embed_regression_side(const GridFunction& f0, const NoiseModel& noise,
                                         const StationaryDensity& psi0, std::uint64_t m,
                                         WienerFamily& wf, const SeedStream& seed);

struct EmbeddedFixed {
    FixedDesignSample sample;
    CouplingLedger ledger;
};

// Fixed-design side: deterministic points locate the chains.
EmbeddedFixed embed_fixed_side(const GridFunction& f0, const NoiseModel& noise,
                               const std::vector<double>& points, WienerFamily& wf,
                               const SeedStream& seed);

// ---------------------------------------------------------------------
// Horizon choice. A pilot pass with unbounded horizons estimates the mean
// occupancy E[sum_i tau_i 1(state in I_{j,k})]; the horizons are then
//   S_{j,k} = occupancy - C_lambda sqrt(m 2^-j) log m,
//   T_{j,k} = S_{j,k} - S of the two children (leaves: T = S),
// so that S_{j,k} = sum of T over the subtree exactly, with level 0 left
// unbounded. Negative T clamp to 0 (reported) and all horizons land on
// the dt grid.
struct HorizonCalibration {
    double A = 0.0, B = 0.0;
    int depth = 0;
    double dt = 0.0;
    std::uint64_t m = 0;
    double c_lambda = 0.0;
    std::uint64_t pilot_reps = 0;
    std::vector<double> occupancy;     // per dyadic node, pilot mean
    std::vector<double> occupancy_se;  // MC standard error of the mean
    std::vector<double> s_raw;         // occupancy - C_lambda sqrt(m 2^-j) log m
    std::vector<double> t_raw;         // telescoped; +inf at level 0
    std::vector<double> t_effective;   // clamped at 0 and floored to the dt grid
    std::size_t clamped = 0;           // count of negative raw horizons

    void apply(WienerFamily& wf) const;
};

HorizonCalibration set_horizons(const GridFunction& f0, const NoiseModel& noise,
                                const StationaryDensity& psi0, std::uint64_t m, double A, double B,
                                int depth, double c_lambda, std::uint64_t pilot_reps, double dt,
                                const SeedStream& seed, std::size_t workers = 1);

// ---------------------------------------------------------------------
// Interval-localized score-sum gaps.
struct ZGapRow {
    int j = 0;
    std::uint64_t k = 1;
    double z1 = 0.0, z2 = 0.0;
    double gap = 0.0;
    double threshold = 0.0;  // C_lambda (m 2^-j)^{1/4} log m
    bool pass = true;
};

struct GapReport {
    std::uint64_t m = 0;
    double c_lambda = 0.0;
    int depth = 0;
    std::vector<ZGapRow> rows;  // j = 0..depth, k = 1..2^j, in (j,k) order
    double max_ratio = 0.0;     // max gap / threshold

    const ZGapRow& row(int j, std::uint64_t k) const;
    std::size_t failures() const;
    bool all_pass() const { return failures() == 0; }
};

// Z sums of both sides with a decomposition cross-check per (j,k): the
// final stopped values of the cells inside I_{j,k} plus the per-step
// overflow consumed at strict ancestors by steps whose state lies in
// I_{j,k} must reproduce the direct sum to 1e-8, else LedgerCorruption.
GapReport z_statistics(const CouplingLedger& side1, const CouplingLedger& side2,
                       const WienerFamily& wf, double c_lambda);

// ---------------------------------------------------------------------
// Block-level strong approximation: S = sum_i g(state_i) * value_i per
// side, compared directly and through the Haar expansion of g, whose
// terms are bracketed by the Z gaps one level below each coefficient.
struct StrongGapReport {
    double s1 = 0.0, s2 = 0.0;
    double gap = 0.0;            // |s1 - s2|
    double father_term = 0.0;    // |c0| (B-A)^{-1/2} * root z-gap
    double wavelet_terms = 0.0;  // sum |c_{j,k}| amp_j (left + right child z-gaps)
    double residual1 = 0.0, residual2 = 0.0;  // |sum_i (g - reconstruction)(state) value|
    double decomposed = 0.0;     // father + wavelets + residuals
    double r_n = 0.0;            // gamma^{1/4} gamma'^{3/4} m^{1/4} log m + m^{-lambda}
    double threshold = 0.0;      // c_strong * r_n
    bool within = false;
    bool direct_le_decomposed = false;
};

StrongGapReport strong_approx_gap(const GridFunction& g, const HaarExpansion& eg,
                                  const CouplingLedger& side1, const CouplingLedger& side2,
                                  const GapReport& zr, double c_strong, double lambda,
                                  const Rates& rates);

// ---------------------------------------------------------------------
// Maximal coupling on a discretized joint law of (xi, eta).
struct JointTable {
    std::vector<double> xi_values;   // cell representatives, strictly increasing
    std::vector<double> eta_values;
    std::vector<double> p;           // row-major: p[x * n_eta + y], total mass 1

    std::size_t n_xi() const { return xi_values.size(); }
    std::size_t n_eta() const { return eta_values.size(); }
    double at(std::size_t x, std::size_t y) const { return p[x * eta_values.size() + y]; }
    void validate() const;
    std::vector<double> xi_marginal() const;
    std::vector<double> eta_marginal() const;
};

// Total-variation gap between the conditional law of xi given the eta
// cell y and the xi marginal; throws ConfigError on a zero-mass cell.
double conditional_phi(const JointTable& joint, std::size_t y);

struct BerbeeDiagnostics {
    std::vector<double> phi_y;  // per eta cell (zero-mass rows: 0)
    double phi_max = 0.0;
    double phi_mean = 0.0;      // weighted by the eta marginal
    std::uint64_t draws = 0, mismatches = 0;
    double mismatch_rate = 0.0;
    double mismatch_se = 0.0;
    double ks_marginal = 0.0;   // sup-diff of the xi-tilde ECDF vs the xi marginal CDF
    double chi2 = 0.0;          // independence statistic of (xi-tilde, eta)
    std::size_t chi2_df = 0;
    double chi2_pvalue = 1.0;
};

struct BerbeeDraw {
    std::uint32_t xi = 0, eta = 0, xi_tilde = 0;
};

struct BerbeeResult {
    std::vector<BerbeeDraw> draws;
    BerbeeDiagnostics diag;
};

// Keep xi when p_xi(xi) >= Delta * p_{xi|eta}(xi|eta) with Delta uniform,
// else redraw from the excess density via its quantile transform:
// xi-tilde keeps the xi marginal, is independent of eta, and differs from
// xi with conditional probability at most phi_y.
BerbeeResult berbee_couple(const JointTable& joint, std::uint64_t draws, const SeedStream& seed);

// ---------------------------------------------------------------------
// Uniform mixing diagnostic: phi(k) = max over conditioning cells B of
// TV(law of X_k given X_0 in B, stationary law), via transfer-operator
// powers on the grid, optionally cross-checked by simulation on the cell
// partition. A geometric-decay line is fitted to the positive estimates.
struct MixingEstimate {
    std::vector<int> lags;
    std::vector<double> phi;      // transfer-operator estimate per lag
    std::vector<double> phi_sim;  // simulation estimate (empty when skipped)
    double rho_hat = 0.0;         // fitted decay rate
    double c0_hat = 0.0;          // fitted prefactor
    double r_squared = 0.0;
};

MixingEstimate phi_mixing_chain(const GridFunction& f, const NoiseModel& noise,
                                const StationaryDensity& psi, const std::vector<int>& lags,
                                int cells, std::uint64_t sim_steps = 0,
                                const SeedStream& seed = SeedStream::root(1));

}  // namespace couplab
