#include "couplab/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>

#include "couplab/errors.hpp"
#include "couplab/stats.hpp"

namespace couplab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Uniform on the open unit interval, one engine word per draw. Used for
// every uniform and (through the normal quantile) every Gaussian in this
// module, so the consumed stream is a pure function of the engine state
// and never depends on library distribution internals.
inline double unit_open(std::mt19937_64& eng) {
    return (static_cast<double>(eng() >> 11) + 0.5) * 0x1.0p-53;
}

inline double std_normal(std::mt19937_64& eng) { return stats::normal_quantile(unit_open(eng)); }

// Index into a cumulative-mass table: first i with u < cum[i].
inline std::size_t pick_cum(const std::vector<double>& cum, double u) {
    auto it = std::upper_bound(cum.begin(), cum.end(), u);
    if (it == cum.end()) return cum.size() - 1;  // guard the right edge
    return static_cast<std::size_t>(it - cum.begin());
}

}  // namespace

// ---------------------------------------------------------------------
// ScoreTarget

ScoreTarget ScoreTarget::gaussian_exact(double score_sd) {
    if (!(score_sd > 0.0) || !std::isfinite(score_sd))
        throw ConfigError("ScoreTarget: score standard deviation must be positive");
    ScoreTarget t;
    t.exact_ = true;
    t.score_sd_ = score_sd;
    t.variance_ = score_sd * score_sd;
    return t;
}

ScoreTarget ScoreTarget::discrete(std::vector<double> values, std::vector<double> weights,
                                  std::vector<double> innovations) {
    if (values.empty() || values.size() != weights.size())
        throw ConfigError("ScoreTarget: values and weights must match and be nonempty");
    if (!innovations.empty() && innovations.size() != values.size())
        throw ConfigError("ScoreTarget: innovations must match values");
    double mass = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("ScoreTarget: bad weight");
        mass += w;
    }
    if (!(mass > 0.0)) throw ConfigError("ScoreTarget: zero total mass");

    ScoreTarget t;
    // Drop zero-mass atoms, normalize, recenter to mean zero.
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        t.values_.push_back(values[i]);
        t.weights_.push_back(weights[i] / mass);
        if (!innovations.empty()) t.innovations_.push_back(innovations[i]);
    }
    double mean = 0.0;
    for (std::size_t i = 0; i < t.values_.size(); ++i) mean += t.weights_[i] * t.values_[i];
    double vmax = 0.0;
    for (double& v : t.values_) {
        v -= mean;
        vmax = std::max(vmax, std::abs(v));
    }
    // Atoms indistinguishable from the origin stop immediately; folding
    // them into the two-point pools would double their exit probability.
    double snap = 1e-12 * vmax;
    double e_pos = 0.0, e_neg = 0.0, w_pos = 0.0, w_neg = 0.0;
    for (std::size_t i = 0; i < t.values_.size(); ++i) {
        double v = t.values_[i], w = t.weights_[i];
        t.variance_ += w * v * v;
        if (std::abs(v) <= snap) {
            t.values_[i] = 0.0;
            t.zero_mass_ += w;
            t.zero_atoms_.push_back(static_cast<int>(i));
            t.zero_cum_.push_back(t.zero_mass_);
            continue;
        }
        if (v > 0.0) {
            t.pos_atoms_.push_back(static_cast<int>(i));
            w_pos += w;
            e_pos += w * v;
            t.pos_w_cum_.push_back(w_pos);
            t.pos_tilt_cum_.push_back(e_pos);
        } else {
            t.neg_atoms_.push_back(static_cast<int>(i));
            w_neg += w;
            e_neg += w * (-v);
            t.neg_w_cum_.push_back(w_neg);
            t.neg_tilt_cum_.push_back(e_neg);
        }
    }
    if (t.zero_mass_ < 1.0 - 1e-12) {
        if (t.pos_atoms_.empty() || t.neg_atoms_.empty())
            throw ConfigError("ScoreTarget: a mean-zero exit law needs mass on both sides of zero");
        double wa = e_pos * w_neg, wb = e_neg * w_pos;
        t.comp_a_weight_ = wa / (wa + wb);
    } else {
        t.zero_mass_ = 1.0;
    }
    return t;
}

ScoreTarget ScoreTarget::from_noise(const NoiseModel& noise) {
    if (noise.family() == NoiseModel::Family::gaussian)
        return gaussian_exact(std::sqrt(noise.fisher_information()));
    const Grid& g = noise.grid();
    const GridFunction& p = noise.density();
    std::vector<double> values(g.n), weights(g.n), innovations(g.n);
    for (std::size_t i = 0; i < g.n; ++i) {
        double x = g.x(i);
        innovations[i] = x;
        values[i] = noise.score(x);
        double w = (i == 0 || i + 1 == g.n) ? 0.5 * g.step : g.step;
        weights[i] = p.value_at(i) * w;
    }
    return discrete(std::move(values), std::move(weights), std::move(innovations));
}

ScoreTarget::Bracket ScoreTarget::draw_bracket(std::mt19937_64& eng) const {
    Bracket b;
    if (exact_) {
        // Size-biased positive end paired with an unbiased negative end
        // (and the mirror image), each with probability 1/2: the exit law
        // of the first-passage bracket is then exactly N(0, sd^2).
        double rayleigh = score_sd_ * std::sqrt(-2.0 * std::log(unit_open(eng)));
        double half = score_sd_ * std::abs(std_normal(eng));
        if (unit_open(eng) < 0.5) {
            b.hi = rayleigh;
            b.lo = -half;
        } else {
            b.hi = half;
            b.lo = -rayleigh;
        }
        return b;
    }
    double u = unit_open(eng);
    if (u < zero_mass_) {
        b.zero = true;
        b.zero_atom = zero_atoms_[pick_cum(zero_cum_, u)];
        return b;
    }
    if (unit_open(eng) < comp_a_weight_) {
        b.hi_atom = pos_atoms_[pick_cum(pos_tilt_cum_, unit_open(eng) * pos_tilt_cum_.back())];
        b.lo_atom = neg_atoms_[pick_cum(neg_w_cum_, unit_open(eng) * neg_w_cum_.back())];
    } else {
        b.lo_atom = neg_atoms_[pick_cum(neg_tilt_cum_, unit_open(eng) * neg_tilt_cum_.back())];
        b.hi_atom = pos_atoms_[pick_cum(pos_w_cum_, unit_open(eng) * pos_w_cum_.back())];
    }
    b.hi = values_[static_cast<std::size_t>(b.hi_atom)];
    b.lo = values_[static_cast<std::size_t>(b.lo_atom)];
    return b;
}

double ScoreTarget::innovation_for(double value, int atom) const {
    if (exact_) return value == 0.0 ? 0.0 : -value / (score_sd_ * score_sd_);
    if (atom < 0) throw ConfigError("ScoreTarget: discrete exit without an atom label");
    auto i = static_cast<std::size_t>(atom);
    if (i >= values_.size()) throw ConfigError("ScoreTarget: atom label out of range");
    return innovations_.empty() ? values_[i] : innovations_[i];
}

// ---------------------------------------------------------------------
// WienerFamily

WienerFamily::WienerFamily(double A, double B, int depth, double dt, const SeedStream& seed)
    : sys_(A, B), depth_(depth), dt_(dt), sqrt_dt_(std::sqrt(dt)) {
    if (depth < 0 || depth > 30) throw ConfigError("WienerFamily: depth out of range");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("WienerFamily: dt must be positive");
    std::size_t count = ((std::size_t{1} << (depth + 1)) - 1) + 1;  // dyadic cells + exterior
    horizon_.assign(count, kUnbounded);
    path_.assign(count, std::vector<double>{0.0});
    eng_.reserve(count);
    for (std::size_t node = 0; node < count; ++node)
        eng_.push_back(seed.child("wiener").child(node).engine());
}

std::size_t WienerFamily::node_id(int j, std::uint64_t k) const {
    if (j < 0 || j > depth_ || k < 1 || k > (std::uint64_t{1} << j))
        throw ConfigError("WienerFamily: node index out of range");
    return ((std::size_t{1} << j) - 1) + static_cast<std::size_t>(k - 1);
}

int WienerFamily::level_of(std::size_t node) const {
    if (node + 1 >= path_.size()) return -1;  // exterior
    int j = 0;
    while ((std::size_t{2} << j) - 1 <= node) ++j;
    return j;
}

std::uint64_t WienerFamily::index_of(std::size_t node) const {
    int j = level_of(node);
    if (j < 0) throw ConfigError("WienerFamily: the exterior process has no cell index");
    return static_cast<std::uint64_t>(node - ((std::size_t{1} << j) - 1)) + 1;
}

std::vector<std::size_t> WienerFamily::chain_for(double state) const {
    std::uint64_t leaf = sys_.cell(depth_, state);
    if (leaf == 0) return {exterior_id()};
    std::vector<std::size_t> chain;
    chain.reserve(static_cast<std::size_t>(depth_) + 1);
    for (int j = depth_; j >= 0; --j) chain.push_back(node_id(j, ((leaf - 1) >> (depth_ - j)) + 1));
    return chain;
}

double WienerFamily::horizon_time(std::size_t node) const {
    std::uint64_t h = horizon_[node];
    return h == kUnbounded ? kInf : static_cast<double>(h) * dt_;
}

void WienerFamily::set_horizon(int j, std::uint64_t k, double time) {
    if (j < 1) throw ConfigError("WienerFamily: the root and exterior stay unbounded");
    std::size_t node = node_id(j, k);
    if (!std::isfinite(time)) {
        horizon_[node] = kUnbounded;
        return;
    }
    if (time < 0.0) throw ConfigError("WienerFamily: negative horizon");
    horizon_[node] = static_cast<std::uint64_t>(std::floor(time / dt_ + 1e-9));
}

void WienerFamily::clear_horizons() { horizon_.assign(horizon_.size(), kUnbounded); }

double WienerFamily::value(std::size_t node, std::uint64_t grid_index) {
    std::vector<double>& p = path_[node];
    std::mt19937_64& eng = eng_[node];
    while (p.size() <= grid_index) p.push_back(p.back() + sqrt_dt_ * std_normal(eng));
    return p[grid_index];
}

// ---------------------------------------------------------------------
// First-exit walk

namespace {

struct Hit {
    bool found = false;
    double t = 0.0;
    bool high = false;
};

// Whether a Brownian bridge between the sampled endpoints touches the
// barrier, via the exact bridge-crossing probability exp(-2 d1 d2 / dur).
inline bool bridge_touches(double wa, double wb, double dur, double barrier, bool high,
                           std::mt19937_64& eng) {
    double d1 = high ? barrier - wa : wa - barrier;
    double d2 = high ? barrier - wb : wb - barrier;
    if (d2 <= 0.0) return true;  // endpoint at or beyond the barrier
    if (d1 <= 0.0) return true;
    double p = std::exp(-2.0 * d1 * d2 / dur);
    return unit_open(eng) < p;
}

// Bisect the touch time by sampling bridge midpoints and keeping the
// half whose sub-bridge touches; eight levels locate the time to
// dur / 512, far below dt-scale effects.
inline double refine_touch(double ta, double wa, double tb, double wb, double barrier, bool high,
                           std::mt19937_64& eng) {
    for (int level = 0; level < 8; ++level) {
        double tm = 0.5 * (ta + tb);
        double wm = 0.5 * (wa + wb) + 0.5 * std::sqrt(tb - ta) * std_normal(eng);
        if (bridge_touches(wa, wm, tm - ta, barrier, high, eng)) {
            tb = tm;
            wb = wm;
        } else {
            ta = tm;
            wa = wm;
        }
    }
    return 0.5 * (ta + tb);
}

inline Hit segment_cross(double ta, double wa, double tb, double wb, double llo, double lhi,
                         std::mt19937_64& eng) {
    double dur = tb - ta;
    bool up = bridge_touches(wa, wb, dur, lhi, true, eng);
    bool down = bridge_touches(wa, wb, dur, llo, false, eng);
    Hit h;
    if (!up && !down) return h;
    h.found = true;
    double t_up = up ? refine_touch(ta, wa, tb, wb, lhi, true, eng) : kInf;
    double t_down = down ? refine_touch(ta, wa, tb, wb, llo, false, eng) : kInf;
    h.high = t_up <= t_down;
    h.t = h.high ? t_up : t_down;
    return h;
}

// Consume the chain finest-first until the glued path exits the bracket.
StopResult walk_chain(WienerFamily& wf, const std::vector<std::size_t>& chain,
                      const std::vector<PathCursor*>& cursors, const ScoreTarget::Bracket& br,
                      std::mt19937_64& eng) {
    StopResult out;
    const double dt = wf.dt();
    std::uint64_t cells = 0;
    double glued = 0.0;  // value of the glued process at the current time
    for (std::size_t pos = 0; pos < chain.size(); ++pos) {
        std::size_t node = chain[pos];
        PathCursor& cur = *cursors[pos];
        std::uint64_t hz = wf.horizon_index(node);
        if (!cur.mid && cur.grid >= hz) continue;  // exhausted before this step
        double entry_t = cur.t, entry_w = cur.w;
        // Bracket ends in this node's local coordinates.
        double llo = cur.w + (br.lo - glued);
        double lhi = cur.w + (br.hi - glued);
        Hit hit;
        while (true) {
            if (++cells > 80000000ULL)
                throw ConvergenceFailure("first-exit walk exceeded its cell budget");
            std::uint64_t next = cur.grid + 1;
            double tb = static_cast<double>(next) * dt;
            double wb = wf.value(node, next);
            hit = segment_cross(cur.t, cur.w, tb, wb, llo, lhi, eng);
            if (hit.found) {
                cur.mid = true;
                cur.t = hit.t;
                cur.w = hit.high ? lhi : llo;
                break;
            }
            cur.grid = next;
            cur.mid = false;
            cur.t = tb;
            cur.w = wb;
            if (cur.grid >= hz) break;  // budget ends exactly on the grid
        }
        out.tau += cur.t - entry_t;
        out.uses.push_back({node, entry_t, cur.t, entry_w, cur.w});
        if (hit.found) {
            out.value = hit.high ? br.hi : br.lo;
            out.high = hit.high;
            out.atom = hit.high ? br.hi_atom : br.lo_atom;
            return out;
        }
        glued += cur.w - entry_w;
    }
    throw TruncationError("every horizon was exhausted before the bracket exit");
}

StopResult stop_with_target(WienerFamily& wf, const std::vector<std::size_t>& chain,
                            const std::vector<PathCursor*>& cursors, const ScoreTarget& target,
                            std::mt19937_64& eng) {
    ScoreTarget::Bracket br = target.draw_bracket(eng);
    if (br.zero) {
        StopResult out;
        out.atom = br.zero_atom;
        return out;
    }
    return walk_chain(wf, chain, cursors, br, eng);
}

}  // namespace

StopResult skorokhod_stop(WienerFamily& wf, std::size_t node, PathCursor& cursor,
                          const ScoreTarget& target, std::mt19937_64& eng) {
    if (node >= wf.node_count()) throw ConfigError("skorokhod_stop: node out of range");
    return stop_with_target(wf, {node}, {&cursor}, target, eng);
}

StopResult chain_stop(WienerFamily& wf, std::vector<PathCursor>& cursors,
                      const std::vector<std::size_t>& chain, const ScoreTarget& target,
                      std::mt19937_64& eng) {
    if (cursors.size() != wf.node_count())
        throw ConfigError("chain_stop: one cursor per family process required");
    if (chain.empty()) throw ConfigError("chain_stop: empty chain");
    std::vector<PathCursor*> ptrs;
    ptrs.reserve(chain.size());
    for (std::size_t node : chain) {
        if (node >= cursors.size()) throw ConfigError("chain_stop: node out of range");
        ptrs.push_back(&cursors[node]);
    }
    return stop_with_target(wf, chain, ptrs, target, eng);
}

// ---------------------------------------------------------------------
// Side embeddings

namespace {

EmbeddedStep embed_step(WienerFamily& wf, CouplingLedger& ledger, const ScoreTarget& target,
                        double state, std::mt19937_64& eng) {
    StopResult r = chain_stop(wf, ledger.cursors, wf.chain_for(state), target, eng);
    EmbeddedStep s;
    s.state = state;
    s.value = r.value;
    s.tau = r.tau;
    s.innovation = target.innovation_for(r.value, r.atom);
    s.uses = std::move(r.uses);
    return s;
}

}  // namespace

EmbeddedAr embed_ar_side(const GridFunction& f0, const NoiseModel& noise,
                         const StationaryDensity& psi0, std::uint64_t m, WienerFamily& wf,
                         const SeedStream& seed) {
    auto init_eng = seed.child("init").engine();
    return embed_ar_side(f0, noise, psi0.sample(init_eng), m, wf, seed);
}

EmbeddedAr embed_ar_side(const GridFunction& f0, const NoiseModel& noise, double x0,
                         std::uint64_t m, WienerFamily& wf, const SeedStream& seed) {
    if (m == 0) throw ConfigError("embed_ar_side: need at least one observation");
    ScoreTarget target = ScoreTarget::from_noise(noise);
    EmbeddedAr out;
    out.ledger.cursors.assign(wf.node_count(), PathCursor{});
    out.ledger.x0 = x0;
    out.traj.x0 = out.ledger.x0;
    out.traj.x.reserve(m);
    out.traj.innovations.reserve(m);
    out.ledger.steps.reserve(m);
    auto eng = seed.child("embed").engine();
    double prev = out.ledger.x0;
    for (std::uint64_t i = 0; i < m; ++i) {
        EmbeddedStep s = embed_step(wf, out.ledger, target, prev, eng);
        double next = f0(prev) + s.innovation;
        out.traj.innovations.push_back(s.innovation);
        out.traj.x.push_back(next);
        out.ledger.steps.push_back(std::move(s));
        prev = next;
    }
    return out;
}

EmbeddedRegression embed_regression_side(const GridFunction& f0, const NoiseModel& noise,
                                         const StationaryDensity& psi0, std::uint64_t m,
                                         WienerFamily& wf, const SeedStream& seed) {
    if (m == 0) throw ConfigError("embed_regression_side: need at least one observation");
    ScoreTarget target = ScoreTarget::from_noise(noise);
    EmbeddedRegression out;
    out.ledger.cursors.assign(wf.node_count(), PathCursor{});
    auto design_eng = seed.child("design").engine();
    out.sample.xi.reserve(m);
    for (std::uint64_t i = 0; i < m; ++i) out.sample.xi.push_back(psi0.sample(design_eng));
    auto eng = seed.child("embed").engine();
    out.sample.eta.reserve(m);
    out.sample.y.reserve(m);
    out.ledger.steps.reserve(m);
    for (std::uint64_t i = 0; i < m; ++i) {
        double xi = out.sample.xi[i];
        EmbeddedStep s = embed_step(wf, out.ledger, target, xi, eng);
        out.sample.eta.push_back(s.innovation);
        out.sample.y.push_back(f0(xi) + s.innovation);
        out.ledger.steps.push_back(std::move(s));
    }
    return out;
}

EmbeddedFixed embed_fixed_side(const GridFunction& f0, const NoiseModel& noise,
                               const std::vector<double>& points, WienerFamily& wf,
                               const SeedStream& seed) {
    if (points.empty()) throw ConfigError("embed_fixed_side: need at least one design point");
    ScoreTarget target = ScoreTarget::from_noise(noise);
    EmbeddedFixed out;
    out.ledger.cursors.assign(wf.node_count(), PathCursor{});
    out.sample.t = points;
    auto eng = seed.child("embed").engine();
    out.sample.eta.reserve(points.size());
    out.sample.y.reserve(points.size());
    out.ledger.steps.reserve(points.size());
    for (double t : points) {
        EmbeddedStep s = embed_step(wf, out.ledger, target, t, eng);
        out.sample.eta.push_back(s.innovation);
        out.sample.y.push_back(f0(t) + s.innovation);
        out.ledger.steps.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------
// Ledger queries and audit

std::vector<double> CouplingLedger::cumulative_tau(std::size_t node) const {
    std::vector<double> out(steps.size() + 1, 0.0);
    for (std::size_t i = 0; i < steps.size(); ++i) {
        double used = 0.0;
        for (const StepUse& u : steps[i].uses)
            if (u.node == node) used += u.t1 - u.t0;
        out[i + 1] = out[i] + used;
    }
    return out;
}

double CouplingLedger::z_direct(const HaarSystem& sys, int j, std::uint64_t k) const {
    double z = 0.0;
    for (const EmbeddedStep& s : steps)
        if (sys.cell(j, s.state) == k) z += s.value;
    return z;
}

namespace {

[[noreturn]] void ledger_fail(const char* what, std::size_t step, std::size_t node) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s (step %zu, process %zu)", what, step, node);
    throw LedgerCorruption(buf);
}

}  // namespace

void audit_ledger(const CouplingLedger& ledger, const WienerFamily& wf) {
    const HaarSystem& sys = wf.tree();
    std::size_t n_nodes = wf.node_count();
    if (ledger.cursors.size() != n_nodes)
        throw LedgerCorruption("audit_ledger: cursor table does not cover the family");
    std::vector<double> last_t(n_nodes, 0.0), last_w(n_nodes, 0.0);
    for (std::size_t i = 0; i < ledger.steps.size(); ++i) {
        const EmbeddedStep& s = ledger.steps[i];
        bool exterior = sys.cell(wf.depth(), s.state) == 0;
        double dw = 0.0;
        int prev_level = std::numeric_limits<int>::max();
        for (const StepUse& u : s.uses) {
            if (u.node >= n_nodes) ledger_fail("unknown process", i + 1, u.node);
            int level = wf.level_of(u.node);
            if (level >= prev_level) ledger_fail("stretches not ordered fine to coarse", i + 1, u.node);
            prev_level = level;
            if (level < 0) {
                if (!exterior) ledger_fail("exterior stretch charged to an interior state", i + 1, u.node);
            } else {
                if (exterior) ledger_fail("interior stretch charged to an exterior state", i + 1, u.node);
                if (sys.cell(level, s.state) != wf.index_of(u.node))
                    ledger_fail("stretch consumed outside the state's cell", i + 1, u.node);
            }
            if (!(u.t1 > u.t0)) ledger_fail("empty or reversed stretch", i + 1, u.node);
            if (u.t0 != last_t[u.node] || u.w0 != last_w[u.node])
                ledger_fail("stretch does not resume at the previous stop", i + 1, u.node);
            last_t[u.node] = u.t1;
            last_w[u.node] = u.w1;
            dw += u.w1 - u.w0;
        }
        if (std::abs(dw - s.value) > 1e-9)
            ledger_fail("stretch increments do not telescope to the stopped value", i + 1, 0);
    }
    for (std::size_t node = 0; node < n_nodes; ++node) {
        if (ledger.cursors[node].t != last_t[node] || ledger.cursors[node].w != last_w[node])
            ledger_fail("final cursor out of sync with the recorded stretches", ledger.steps.size(), node);
        if (last_t[node] > wf.horizon_time(node))
            ledger_fail("consumption beyond the process horizon", ledger.steps.size(), node);
    }
}

// ---------------------------------------------------------------------
// Horizon calibration

void HorizonCalibration::apply(WienerFamily& wf) const {
    if (wf.depth() != depth || wf.dt() != dt || wf.tree().A != A || wf.tree().B != B)
        throw ConfigError("HorizonCalibration: family does not match the calibrated layout");
    wf.clear_horizons();
    std::size_t idx = 1;  // level 0 stays unbounded
    for (int j = 1; j <= depth; ++j)
        for (std::uint64_t k = 1; k <= (std::uint64_t{1} << j); ++k, ++idx)
            wf.set_horizon(j, k, t_effective[idx]);
}

HorizonCalibration set_horizons(const GridFunction& f0, const NoiseModel& noise,
                                const StationaryDensity& psi0, std::uint64_t m, double A, double B,
                                int depth, double c_lambda, std::uint64_t pilot_reps, double dt,
                                const SeedStream& seed, std::size_t workers) {
    if (m == 0) throw ConfigError("set_horizons: need at least one observation");
    if (depth < 1) throw ConfigError("set_horizons: need at least one capped level");
    if (pilot_reps < 2) throw ConfigError("set_horizons: need at least two pilot replications");
    if (!(c_lambda >= 0.0)) throw ConfigError("set_horizons: negative calibration constant");

    HaarSystem sys(A, B);
    std::size_t dyadic = (std::size_t{1} << (depth + 1)) - 1;
    std::vector<std::vector<double>> occ(pilot_reps, std::vector<double>(dyadic, 0.0));
    parallel_for(pilot_reps, static_cast<unsigned>(workers), [&](std::size_t r) {
        WienerFamily pilot_wf(A, B, depth, dt, seed.child("pilot-wf").child(r));
        EmbeddedAr side = embed_ar_side(f0, noise, psi0, m, pilot_wf, seed.child("pilot").child(r));
        for (const EmbeddedStep& s : side.ledger.steps) {
            for (int j = 0; j <= depth; ++j) {
                std::uint64_t k = sys.cell(j, s.state);
                if (k != 0) occ[r][((std::size_t{1} << j) - 1) + (k - 1)] += s.tau;
            }
        }
    });

    HorizonCalibration cal;
    cal.A = A;
    cal.B = B;
    cal.depth = depth;
    cal.dt = dt;
    cal.m = m;
    cal.c_lambda = c_lambda;
    cal.pilot_reps = pilot_reps;
    cal.occupancy.resize(dyadic);
    cal.occupancy_se.resize(dyadic);
    cal.s_raw.resize(dyadic);
    cal.t_raw.resize(dyadic);
    cal.t_effective.resize(dyadic);

    double logm = std::log(static_cast<double>(m));
    std::vector<double> column(pilot_reps);
    for (std::size_t node = 0; node < dyadic; ++node) {
        for (std::size_t r = 0; r < pilot_reps; ++r) column[r] = occ[r][node];
        stats::Summary sum = stats::summarize(column);
        cal.occupancy[node] = sum.mean;
        cal.occupancy_se[node] = sum.se;
        int j = 0;
        while ((std::size_t{2} << j) - 1 <= node) ++j;
        cal.s_raw[node] =
            sum.mean - c_lambda * std::sqrt(static_cast<double>(m) * std::pow(2.0, -j)) * logm;
    }
    // Per-process budgets telescope: the subtree total of t equals s.
    for (std::size_t node = dyadic; node-- > 0;) {
        int j = 0;
        while ((std::size_t{2} << j) - 1 <= node) ++j;
        if (j == 0) {
            cal.t_raw[node] = kInf;
            cal.t_effective[node] = kInf;
            continue;
        }
        double t = cal.s_raw[node];
        if (j < depth) t -= cal.s_raw[2 * node + 1] + cal.s_raw[2 * node + 2];
        cal.t_raw[node] = t;
        if (t < 0.0) {
            ++cal.clamped;
            t = 0.0;
        }
        cal.t_effective[node] = std::floor(t / dt + 1e-9) * dt;
    }
    return cal;
}

// ---------------------------------------------------------------------
// Interval-localized score-sum gaps

const ZGapRow& GapReport::row(int j, std::uint64_t k) const {
    if (j < 0 || j > depth || k < 1 || k > (std::uint64_t{1} << j))
        throw ConfigError("GapReport: row out of range");
    return rows[((std::size_t{1} << j) - 1) + static_cast<std::size_t>(k - 1)];
}

std::size_t GapReport::failures() const {
    std::size_t n = 0;
    for (const ZGapRow& r : rows)
        if (!r.pass) ++n;
    return n;
}

GapReport z_statistics(const CouplingLedger& side1, const CouplingLedger& side2,
                       const WienerFamily& wf, double c_lambda) {
    audit_ledger(side1, wf);
    audit_ledger(side2, wf);
    if (side1.m() != side2.m()) throw ConfigError("z_statistics: sides of different length");
    const HaarSystem& sys = wf.tree();
    int depth = wf.depth();

    GapReport rep;
    rep.m = side1.m();
    rep.c_lambda = c_lambda;
    rep.depth = depth;
    double logm = std::log(static_cast<double>(rep.m));
    const CouplingLedger* sides[2] = {&side1, &side2};

    for (int j = 0; j <= depth; ++j) {
        for (std::uint64_t k = 1; k <= (std::uint64_t{1} << j); ++k) {
            double z[2] = {0.0, 0.0};
            for (int s = 0; s < 2; ++s) {
                double direct = sides[s]->z_direct(sys, j, k);
                // Final stopped values of the processes inside I_{j,k}
                // plus the coarse-scale overflow of its steps must
                // rebuild the direct sum: the bookkeeping is exact.
                double decomposed = 0.0;
                for (int level = j; level <= depth; ++level) {
                    std::uint64_t first = ((k - 1) << (level - j)) + 1;
                    std::uint64_t last = k << (level - j);
                    for (std::uint64_t kk = first; kk <= last; ++kk)
                        decomposed += sides[s]->cursors[((std::size_t{1} << level) - 1) + (kk - 1)].w;
                }
                for (const EmbeddedStep& st : sides[s]->steps) {
                    if (sys.cell(j, st.state) != k) continue;
                    for (const StepUse& u : st.uses) {
                        int level = wf.level_of(u.node);
                        if (level >= 0 && level < j) decomposed += u.w1 - u.w0;
                    }
                }
                if (std::abs(direct - decomposed) > 1e-8)
                    throw LedgerCorruption(
                        "interval score sum does not match its stretch decomposition");
                z[s] = direct;
            }
            ZGapRow row;
            row.j = j;
            row.k = k;
            row.z1 = z[0];
            row.z2 = z[1];
            row.gap = std::abs(z[0] - z[1]);
            row.threshold = c_lambda *
                            std::pow(static_cast<double>(rep.m) * std::pow(2.0, -j), 0.25) * logm;
            row.pass = row.gap <= row.threshold;
            if (row.threshold > 0.0) rep.max_ratio = std::max(rep.max_ratio, row.gap / row.threshold);
            rep.rows.push_back(row);
        }
    }
    return rep;
}

// ---------------------------------------------------------------------
// Block-level strong approximation

StrongGapReport strong_approx_gap(const GridFunction& g, const HaarExpansion& eg,
                                  const CouplingLedger& side1, const CouplingLedger& side2,
                                  const GapReport& zr, double c_strong, double lambda,
                                  const Rates& rates) {
    if (eg.j_star + 1 > zr.depth)
        throw ConfigError("strong_approx_gap: expansion deeper than the gap table");
    StrongGapReport rep;
    const CouplingLedger* sides[2] = {&side1, &side2};
    double s[2], res[2];
    for (int i = 0; i < 2; ++i) {
        double total = 0.0, residual = 0.0;
        for (const EmbeddedStep& st : sides[i]->steps) {
            total += g(st.state) * st.value;
            residual += (g(st.state) - eg.reconstruct(st.state)) * st.value;
        }
        s[i] = total;
        res[i] = std::abs(residual);
    }
    rep.s1 = s[0];
    rep.s2 = s[1];
    rep.residual1 = res[0];
    rep.residual2 = res[1];
    rep.gap = std::abs(s[0] - s[1]);

    double span = eg.sys.B - eg.sys.A;
    rep.father_term = std::abs(eg.c0) / std::sqrt(span) * zr.row(0, 1).gap;
    for (int j = 0; j <= eg.j_star; ++j) {
        double amp = std::sqrt(std::pow(2.0, j) / span);
        for (std::uint64_t k = 1; k <= (std::uint64_t{1} << j); ++k)
            rep.wavelet_terms += std::abs(eg.coefficient(j, k)) * amp *
                                 (zr.row(j + 1, 2 * k - 1).gap + zr.row(j + 1, 2 * k).gap);
    }
    rep.decomposed = rep.father_term + rep.wavelet_terms + rep.residual1 + rep.residual2;
    rep.direct_le_decomposed = rep.gap <= rep.decomposed * (1.0 + 1e-9) + 1e-12;

    double m = static_cast<double>(zr.m);
    rep.r_n = std::pow(rates.gamma_n, 0.25) * std::pow(rates.gamma_prime_n, 0.75) *
                  std::pow(m, 0.25) * std::log(m) +
              std::pow(m, -lambda);
    rep.threshold = c_strong * rep.r_n;
    rep.within = rep.gap <= rep.threshold;
    return rep;
}

// ---------------------------------------------------------------------
// Maximal coupling

void JointTable::validate() const {
    if (xi_values.empty() || eta_values.empty())
        throw ConfigError("JointTable: empty support");
    if (p.size() != xi_values.size() * eta_values.size())
        throw ConfigError("JointTable: mass table does not match the support");
    for (std::size_t i = 1; i < xi_values.size(); ++i)
        if (!(xi_values[i] > xi_values[i - 1]))
            throw ConfigError("JointTable: xi support must increase strictly");
    for (std::size_t i = 1; i < eta_values.size(); ++i)
        if (!(eta_values[i] > eta_values[i - 1]))
            throw ConfigError("JointTable: eta support must increase strictly");
    double total = 0.0;
    for (double w : p) {
        if (!(w >= 0.0)) throw ConfigError("JointTable: negative mass");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("JointTable: mass must sum to one");
}

std::vector<double> JointTable::xi_marginal() const {
    std::vector<double> marg(n_xi(), 0.0);
    for (std::size_t x = 0; x < n_xi(); ++x)
        for (std::size_t y = 0; y < n_eta(); ++y) marg[x] += at(x, y);
    return marg;
}

std::vector<double> JointTable::eta_marginal() const {
    std::vector<double> marg(n_eta(), 0.0);
    for (std::size_t x = 0; x < n_xi(); ++x)
        for (std::size_t y = 0; y < n_eta(); ++y) marg[y] += at(x, y);
    return marg;
}

double conditional_phi(const JointTable& joint, std::size_t y) {
    if (y >= joint.n_eta()) throw ConfigError("conditional_phi: cell out of range");
    std::vector<double> pxi = joint.xi_marginal();
    double py = 0.0;
    for (std::size_t x = 0; x < joint.n_xi(); ++x) py += joint.at(x, y);
    if (!(py > 0.0)) throw ConfigError("conditional_phi: conditioning cell has no mass");
    double phi = 0.0;
    for (std::size_t x = 0; x < joint.n_xi(); ++x)
        phi += std::max(0.0, pxi[x] - joint.at(x, y) / py);
    return phi;
}

BerbeeResult berbee_couple(const JointTable& joint, std::uint64_t draws, const SeedStream& seed) {
    joint.validate();
    if (draws == 0) throw ConfigError("berbee_couple: need at least one draw");
    std::size_t nx = joint.n_xi(), ny = joint.n_eta();
    std::vector<double> pxi = joint.xi_marginal(), peta = joint.eta_marginal();

    BerbeeResult out;
    out.diag.phi_y.assign(ny, 0.0);
    std::vector<std::vector<double>> excess_cdf(ny);
    for (std::size_t y = 0; y < ny; ++y) {
        if (!(peta[y] > 0.0)) continue;
        double phi = 0.0;
        std::vector<double> cdf(nx, 0.0);
        for (std::size_t x = 0; x < nx; ++x) {
            phi += std::max(0.0, pxi[x] - joint.at(x, y) / peta[y]);
            cdf[x] = phi;
        }
        out.diag.phi_y[y] = phi;
        out.diag.phi_max = std::max(out.diag.phi_max, phi);
        out.diag.phi_mean += peta[y] * phi;
        if (phi > 0.0)
            for (double& c : cdf) c /= phi;
        excess_cdf[y] = std::move(cdf);
    }

    std::vector<double> joint_cdf(joint.p.size());
    std::partial_sum(joint.p.begin(), joint.p.end(), joint_cdf.begin());

    auto eng = seed.child("berbee").engine();
    std::vector<std::uint64_t> table(nx * ny, 0);  // counts of (xi-tilde, eta)
    out.draws.reserve(draws);
    for (std::uint64_t d = 0; d < draws; ++d) {
        std::size_t cell = pick_cum(joint_cdf, unit_open(eng));
        std::size_t x = cell / ny, y = cell % ny;
        std::size_t xt = x;
        // Keep xi when the joint cell is not over-represented relative
        // to independence; otherwise resample from the excess mass.
        double bound = pxi[x] * peta[y] / joint.at(x, y);
        if (unit_open(eng) > bound && out.diag.phi_y[y] > 0.0)
            xt = pick_cum(excess_cdf[y], unit_open(eng));
        if (xt != x) ++out.diag.mismatches;
        ++table[xt * ny + y];
        out.draws.push_back({static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y),
                             static_cast<std::uint32_t>(xt)});
    }

    out.diag.draws = draws;
    double n = static_cast<double>(draws);
    out.diag.mismatch_rate = static_cast<double>(out.diag.mismatches) / n;
    out.diag.mismatch_se =
        std::sqrt(std::max(0.0, out.diag.mismatch_rate * (1.0 - out.diag.mismatch_rate) / n));

    // ECDF of xi-tilde against the xi marginal.
    double cum_emp = 0.0, cum_p = 0.0;
    for (std::size_t x = 0; x < nx; ++x) {
        std::uint64_t row = 0;
        for (std::size_t y = 0; y < ny; ++y) row += table[x * ny + y];
        cum_emp += static_cast<double>(row) / n;
        cum_p += pxi[x];
        out.diag.ks_marginal = std::max(out.diag.ks_marginal, std::abs(cum_emp - cum_p));
    }

    // Pearson independence statistic of (xi-tilde, eta) over the cells
    // with occupied empirical margins.
    std::vector<double> row_tot(nx, 0.0), col_tot(ny, 0.0);
    for (std::size_t x = 0; x < nx; ++x)
        for (std::size_t y = 0; y < ny; ++y) {
            row_tot[x] += static_cast<double>(table[x * ny + y]);
            col_tot[y] += static_cast<double>(table[x * ny + y]);
        }
    std::size_t live_rows = 0, live_cols = 0;
    for (double r : row_tot) live_rows += r > 0.0;
    for (double c : col_tot) live_cols += c > 0.0;
    if (live_rows > 1 && live_cols > 1) {
        double chi2 = 0.0;
        for (std::size_t x = 0; x < nx; ++x) {
            if (row_tot[x] <= 0.0) continue;
            for (std::size_t y = 0; y < ny; ++y) {
                if (col_tot[y] <= 0.0) continue;
                double expect = row_tot[x] * col_tot[y] / n;
                double diff = static_cast<double>(table[x * ny + y]) - expect;
                chi2 += diff * diff / expect;
            }
        }
        out.diag.chi2 = chi2;
        out.diag.chi2_df = (live_rows - 1) * (live_cols - 1);
        out.diag.chi2_pvalue = stats::chi2_sf(chi2, static_cast<unsigned>(out.diag.chi2_df));
    }
    return out;
}

// ---------------------------------------------------------------------
// Uniform mixing diagnostic

MixingEstimate phi_mixing_chain(const GridFunction& f, const NoiseModel& noise,
                                const StationaryDensity& psi, const std::vector<int>& lags,
                                int cells, std::uint64_t sim_steps, const SeedStream& seed) {
    if (lags.empty()) throw ConfigError("phi_mixing_chain: need at least one lag");
    for (std::size_t i = 0; i < lags.size(); ++i)
        if (lags[i] < 1 || (i > 0 && lags[i] <= lags[i - 1]))
            throw ConfigError("phi_mixing_chain: lags must be positive and increasing");
    if (cells < 1) throw ConfigError("phi_mixing_chain: need at least one conditioning cell");

    MixingEstimate est;
    est.lags = lags;
    est.phi.assign(lags.size(), 0.0);
    int max_lag = lags.back();

    double lo = psi.quantile(0.005), hi = psi.quantile(0.995);
    std::vector<double> edges(static_cast<std::size_t>(cells) + 1);
    for (int c = 0; c <= cells; ++c)
        edges[c] = lo + (hi - lo) * static_cast<double>(c) / static_cast<double>(cells);

    for (int c = 0; c < cells; ++c) {
        double a = edges[c], b = edges[c + 1];
        const Grid& g = psi.psi.grid();
        std::vector<double> v(g.n);
        for (std::size_t i = 0; i < g.n; ++i) {
            double x = g.x(i);
            v[i] = (x > a && x <= b) ? psi.psi.value_at(i) : 0.0;
        }
        GridFunction nu(g, std::move(v));
        double mass = nu.integral();
        if (mass < 1e-12) continue;
        nu = (1.0 / mass) * nu;
        std::size_t next = 0;
        for (int k = 1; k <= max_lag && next < lags.size(); ++k) {
            nu = transfer_apply(nu, f, noise);
            double m = nu.integral();
            if (!(m > 0.0)) break;
            nu = (1.0 / m) * nu;
            if (k == lags[next]) {
                est.phi[next] = std::max(est.phi[next], 0.5 * l1_distance(nu, psi.psi));
                ++next;
            }
        }
    }

    if (sim_steps > 0) {
        auto eng = seed.child("mixing-sim").engine();
        std::vector<double> path(sim_steps);
        double x = psi.sample(eng);
        for (std::uint64_t t = 0; t < sim_steps; ++t) {
            x = f(x) + noise.sample(eng);
            path[t] = x;
        }
        auto bin = [&](double v) {
            if (v <= lo) return 0;
            if (v > hi) return cells + 1;
            auto c = static_cast<int>((v - lo) / (hi - lo) * cells);
            return std::min(c, cells - 1) + 1;
        };
        std::size_t n_bins = static_cast<std::size_t>(cells) + 2;
        est.phi_sim.assign(lags.size(), 0.0);
        for (std::size_t li = 0; li < lags.size(); ++li) {
            auto lag = static_cast<std::uint64_t>(lags[li]);
            if (path.size() <= lag) break;
            std::uint64_t pairs = path.size() - lag;
            std::vector<double> marg(n_bins, 0.0);
            std::vector<std::vector<double>> cond(n_bins, std::vector<double>(n_bins, 0.0));
            std::vector<double> cond_n(n_bins, 0.0);
            for (std::uint64_t t = 0; t < pairs; ++t) {
                auto b0 = static_cast<std::size_t>(bin(path[t]));
                auto b1 = static_cast<std::size_t>(bin(path[t + lag]));
                marg[b1] += 1.0;
                cond[b0][b1] += 1.0;
                cond_n[b0] += 1.0;
            }
            for (double& v : marg) v /= static_cast<double>(pairs);
            for (std::size_t b0 = 0; b0 < n_bins; ++b0) {
                if (cond_n[b0] < 50.0) continue;  // too few visits to trust
                double tv = 0.0;
                for (std::size_t b1 = 0; b1 < n_bins; ++b1)
                    tv += std::abs(cond[b0][b1] / cond_n[b0] - marg[b1]);
                est.phi_sim[li] = std::max(est.phi_sim[li], 0.5 * tv);
            }
        }
    }

    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < lags.size(); ++i)
        if (est.phi[i] > 1e-14) {
            xs.push_back(static_cast<double>(lags[i]));
            ys.push_back(std::log(est.phi[i]));
        }
    if (xs.size() >= 2) {
        stats::LineFit fit = stats::fit_line(xs, ys);
        est.rho_hat = std::exp(fit.slope);
        est.c0_hat = std::exp(fit.intercept);
        est.r_squared = fit.r_squared;
    } else {
        est.r_squared = 1.0;
    }
    return est;
}

}  // namespace couplab
