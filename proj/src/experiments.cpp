#include "couplab/experiments.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <unordered_map>

#include "couplab/blocks.hpp"
#include "couplab/bounds.hpp"
#include "couplab/coupling.hpp"
#include "couplab/errors.hpp"
#include "couplab/haar.hpp"
#include "couplab/likelihood.hpp"
#include "couplab/rng.hpp"
#include "couplab/simulate.hpp"
#include "couplab/stats.hpp"

namespace couplab {

namespace io {

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void write_text(const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("io: cannot open '" + path + "' for writing");
    out << body;
    if (!out) throw ConfigError("io: short write to '" + path + "'");
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("io: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string grid_csv(const GridFunction& f) {
    std::string out = "x,value\n";
    for (std::size_t i = 0; i < f.size(); ++i) {
        out += format_double(f.grid().x(i));
        out += ',';
        out += format_double(f.value_at(i));
        out += '\n';
    }
    return out;
}

GridFunction grid_from_csv(const std::string& body) {
    std::istringstream in(body);
    std::string line;
    if (!std::getline(in, line) || line.rfind("x,", 0) != 0)
        throw ConfigError("grid_from_csv: missing 'x,value' header");
    std::vector<double> xs, vs;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto comma = line.find(',');
        if (comma == std::string::npos) throw ConfigError("grid_from_csv: malformed row '" + line + "'");
        xs.push_back(std::stod(line.substr(0, comma)));
        vs.push_back(std::stod(line.substr(comma + 1)));
    }
    if (xs.size() < 2) throw ConfigError("grid_from_csv: need at least two rows");
    Grid g;
    g.x_min = xs.front();
    g.x_max = xs.back();
    g.n = xs.size();
    g.step = (g.x_max - g.x_min) / static_cast<double>(g.n - 1);
    return GridFunction(g, std::move(vs));
}

std::string grid_descriptor_json(const GridFunction& f) {
    nlohmann::ordered_json j;
    j["x_min"] = f.grid().x_min;
    j["x_max"] = f.grid().x_max;
    j["step"] = f.grid().step;
    j["values"] = f.values();
    return j.dump(2) + "\n";
}

}  // namespace io

namespace {

using json = nlohmann::ordered_json;

json cfg_to_json(const ExperimentConfig& c) {
    json j;
    j["experiment"] = c.experiment;
    j["n"] = c.n;
    j["f0_kind"] = c.f0_kind;
    j["f0_amplitude"] = c.f0_amplitude;
    j["g_center"] = c.g_center;
    j["g_width"] = c.g_width;
    j["g_budget_fraction"] = c.g_budget_fraction;
    j["noise_p"] = c.noise_p;
    j["noise_p_param"] = c.noise_p_param;
    j["noise_q"] = c.noise_q;
    j["noise_q_param"] = c.noise_q_param;
    j["beta"] = c.beta;
    j["holder_l"] = c.holder_l;
    j["sup_m"] = c.sup_m;
    j["a_left"] = c.a_left;
    j["b_right"] = c.b_right;
    j["rate_c"] = c.rate_c;
    j["rate_c_prime"] = c.rate_c_prime;
    j["lambda"] = c.lambda;
    j["c_lambda"] = c.c_lambda;
    j["c_strong"] = c.c_strong;
    j["c_horizon"] = c.c_horizon;
    j["dt_factor"] = c.dt_factor;
    j["depth_offset"] = c.depth_offset;
    j["v_n"] = c.v_n;
    j["pilot_reps"] = c.pilot_reps;
    j["reps"] = c.reps;
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir;
    j["workers"] = c.workers;
    return j;
}

template <class T>
void take(json& j, const char* key, T& field) {
    auto it = j.find(key);
    if (it == j.end()) return;
    field = it->template get<T>();
    j.erase(it);
}

void take_n(json& j, std::vector<std::uint64_t>& n) {
    auto it = j.find("n");
    if (it == j.end()) return;
    if (it->is_number_unsigned() || it->is_number_integer())
        n = {it->get<std::uint64_t>()};
    else if (it->is_array())
        n = it->get<std::vector<std::uint64_t>>();
    else
        throw ConfigError("config: 'n' must be an integer or an array of integers");
    j.erase(it);
}

int depth_for(std::uint64_t m, int offset) {
    int bits = 0;
    while ((std::uint64_t{2} << bits) <= m) ++bits;  // bits = floor(log2 m)
    return std::max(1, bits / 2 + offset);
}

GridFunction make_f0(const ExperimentConfig& c, const Grid& g) {
    if (c.f0_kind == "zero") return GridFunction::constant(g, 0.0);
    if (c.f0_kind == "constant") return GridFunction::constant(g, c.f0_amplitude);
    double a = c.f0_amplitude;
    return GridFunction::tabulate(g, [a](double x) { return a * std::sin(x); });
}

NoiseModel make_noise(const std::string& family, double param, const Grid& g) {
    if (family == "gaussian") return NoiseModel::gaussian(param, g);
    return NoiseModel::logistic(param, g);
}

// Shared ingredients most runners start from.
struct Problem {
    Grid grid;
    GridFunction f0;
    NoiseModel p;
    NoiseModel q;
    StationaryDensity psi0;
};

Problem make_problem(const ExperimentConfig& c) {
    Grid g = default_grid();
    GridFunction f0 = make_f0(c, g);
    NoiseModel p = make_noise(c.noise_p, c.noise_p_param, g);
    NoiseModel q = match_fisher(make_noise(c.noise_q, c.noise_q_param, g), p.fisher_information());
    StationaryDensity psi0 = solve_stationary(f0, p);
    return Problem{g, std::move(f0), std::move(p), std::move(q), std::move(psi0)};
}

GridFunction make_bump(const ExperimentConfig& c, const Grid& g, std::uint64_t n) {
    Rates r = rates(c.rate_c, c.rate_c_prime, c.beta, n);
    return smooth_bump(g, c.g_center, c.g_width, c.g_budget_fraction * r.gamma_n);
}

// Artifact directory <out_dir>/<experiment>; relative names recorded in
// write order for the outcome report.
struct Sink {
    std::filesystem::path dir;
    std::vector<std::string> names;

    explicit Sink(const ExperimentConfig& c) : dir(std::filesystem::path(c.out_dir) / c.experiment) {
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw ConfigError("config: cannot create out_dir '" + dir.string() + "'");
    }
    void write(const std::string& name, const std::string& body) {
        io::write_text((dir / name).string(), body);
        names.push_back((std::filesystem::path(dir.filename()) / name).string());
    }
    void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }
};

// Replications in parallel with disjoint output slots; the first failure
// is rethrown tagged with the experiment name and replication index.
template <class F>
void run_reps(const ExperimentConfig& cfg, std::size_t count, F&& body) {
    std::exception_ptr first = nullptr;
    std::size_t failed_rep = 0;
    std::mutex mu;
    parallel_for(count, cfg.workers, [&](std::size_t i) {
        try {
            body(i);
        } catch (...) {
            std::lock_guard<std::mutex> lk(mu);
            if (!first) {
                first = std::current_exception();
                failed_rep = i;
            }
        }
    });
    if (!first) return;
    try {
        std::rethrow_exception(first);
    } catch (const std::exception& e) {
        throw std::runtime_error(cfg.experiment + ": replication " + std::to_string(failed_rep) +
                                 ": " + e.what());
    }
}

std::string csv_row(std::initializer_list<std::string> cells) {
    std::string out;
    for (const auto& c : cells) {
        if (!out.empty()) out += ',';
        out += c;
    }
    out += '\n';
    return out;
}

std::string fd(double x) { return io::format_double(x); }
std::string fu(std::uint64_t x) { return std::to_string(x); }

// ---------------------------------------------------------------- stationary-oracle

RunOutcome run_stationary_oracle(const ExperimentConfig& cfg) {
    Sink sink(cfg);
    Grid g = default_grid();
    GridFunction f0 = make_f0(cfg, g);
    NoiseModel p = make_noise(cfg.noise_p, cfg.noise_p_param, g);
    StationaryDensity psi = solve_stationary(f0, p);
    double rho = dobrushin_rho(p, cfg.sup_m);

    sink.write("psi.csv", io::grid_csv(psi.psi));
    sink.write("psi.json", io::grid_descriptor_json(psi.psi));
    json solver;
    solver["residual"] = psi.residual_l1;
    solver["iterations"] = psi.iterations;
    solver["rho"] = rho;
    solver["mass_leak"] = psi.mass_leak;
    sink.write_json("solver.json", solver);

    // Closed forms: zero drift reproduces the noise density, a constant
    // drift shifts it.
    StationaryDensity psi_zero = solve_stationary(GridFunction::constant(g, 0.0), p);
    double err_zero = l1_distance(psi_zero.psi, p.density());
    const double theta = 0.3;
    StationaryDensity psi_theta = solve_stationary(GridFunction::constant(g, theta), p);
    GridFunction shifted = GridFunction::tabulate(g, [&](double x) { return p.density_at(x - theta); });
    double err_theta = l1_distance(psi_theta.psi, shifted);

    // Long-chain marginal against the solver fixed point.
    std::uint64_t steps = cfg.n.front();
    ArTrajectory traj = simulate_ar(f0, p, psi, steps, SeedStream::root(cfg.seed).child("chain"));
    double ks = stats::ks_statistic(traj.x, [&](double x) { return psi.cdf(x); });

    bool pass = err_zero < 1e-6 && err_theta < 1e-6 && ks < 0.01;
    json rep;
    rep["zero_drift_l1"] = err_zero;
    rep["constant_shift"] = theta;
    rep["constant_drift_l1"] = err_theta;
    rep["closed_form_tolerance"] = 1e-6;
    rep["chain_steps"] = steps;
    rep["chain_ks"] = ks;
    rep["ks_threshold"] = 0.01;
    rep["residual"] = psi.residual_l1;
    rep["iterations"] = psi.iterations;
    rep["rho"] = rho;
    rep["pass"] = pass;
    sink.write_json("report.json", rep);

    char line[160];
    std::snprintf(line, sizeof line, "closed-form L1 %.2e/%.2e, chain KS %.4f over %llu steps",
                  err_zero, err_theta, ks, static_cast<unsigned long long>(steps));
    return {pass, line, sink.names, rep.dump()};
}

// ---------------------------------------------------------------- lemma-suite

json contraction_section(const ExperimentConfig& cfg, const Problem& pr) {
    std::uint64_t pairs = std::max<std::uint64_t>(50, cfg.reps);
    auto eng = SeedStream::root(cfg.seed).child("pairs").engine();
    auto unif = [&](double lo, double hi) {
        double u = (static_cast<double>(eng() >> 11) + 0.5) * 0x1p-53;
        return lo + u * (hi - lo);
    };
    const std::uint64_t sizes[3] = {256, 1024, 4096};
    std::size_t held = 0;
    double worst = 0.0;
    for (std::uint64_t i = 0; i < pairs; ++i) {
        double a = unif(0.1, 0.42), b = unif(0.5, 1.5), phase = unif(0.0, 6.2831853);
        GridFunction f0 = GridFunction::tabulate(
            pr.grid, [&](double x) { return a * std::sin(b * x + phase); });
        std::uint64_t n = sizes[eng() % 3];
        Rates r = rates(cfg.rate_c, cfg.rate_c_prime, cfg.beta, n);
        double width = unif(1.5, 3.0);
        double c0 = (cfg.b_right - cfg.a_left) / 2.0 - width / 2.0 - 0.05;
        double center = unif(-c0, c0) + (cfg.a_left + cfg.b_right) / 2.0;
        double height = std::min(unif(0.3, 1.0) * r.gamma_n, 0.95 * (cfg.sup_m - a));
        GridFunction g = smooth_bump(pr.grid, center, width, height);
        ContractionCheck chk = stationary_perturbation_check(f0 + g, f0, pr.p, cfg.sup_m);
        if (chk.holds) ++held;
        if (chk.rhs > 0.0) worst = std::max(worst, chk.lhs / chk.rhs);
    }
    double rho = dobrushin_rho(pr.p, cfg.sup_m);
    bool rho_window = true;
    if (cfg.noise_p == "gaussian" && cfg.noise_p_param == 1.0 && cfg.sup_m == 0.5)
        rho_window = std::abs(rho - 0.3829) <= 1e-3;
    json s;
    s["pairs"] = pairs;
    s["held"] = held;
    s["worst_lhs_over_rhs"] = worst;
    s["rho"] = rho;
    s["rho_in_window"] = rho_window;
    s["pass"] = (held == pairs) && rho_window;
    return s;
}

double haar_gram_error(const HaarSystem& sys, int max_level) {
    std::size_t cells = std::size_t{1} << (max_level + 1);
    double w = (sys.B - sys.A) / static_cast<double>(cells);
    struct Fn {
        int j;
        std::uint64_t k;
    };
    std::vector<Fn> fns{{-1, 0}};
    for (int j = 0; j <= max_level; ++j)
        for (std::uint64_t k = 1; k <= (std::uint64_t{1} << j); ++k) fns.push_back({j, k});
    std::vector<std::vector<double>> F(fns.size(), std::vector<double>(cells));
    for (std::size_t a = 0; a < fns.size(); ++a)
        for (std::size_t c = 0; c < cells; ++c) {
            double x = sys.A + (static_cast<double>(c) + 0.5) * w;
            F[a][c] = fns[a].j < 0 ? sys.h0(x) : sys.h(fns[a].j, fns[a].k, x);
        }
    double err = 0.0;
    for (std::size_t a = 0; a < fns.size(); ++a)
        for (std::size_t b = a; b < fns.size(); ++b) {
            double dot = 0.0;
            for (std::size_t c = 0; c < cells; ++c) dot += F[a][c] * F[b][c];
            dot *= w;
            err = std::max(err, std::abs(dot - (a == b ? 1.0 : 0.0)));
        }
    return err;
}

json haar_section(const ExperimentConfig& cfg, const Problem& pr) {
    const int level = 8;
    HaarSystem sys(cfg.a_left, cfg.b_right);
    double gram_err = haar_gram_error(sys, level);
    auto eng = SeedStream::root(cfg.seed).child("bumps").engine();
    auto unif = [&](double lo, double hi) {
        double u = (static_cast<double>(eng() >> 11) + 0.5) * 0x1p-53;
        return lo + u * (hi - lo);
    };
    std::size_t held = 0;
    const std::size_t bumps = 20;
    double worst_ratio = 0.0;
    for (std::size_t i = 0; i < bumps; ++i) {
        double width = unif(0.8, 3.5);
        double c0 = (cfg.b_right - cfg.a_left) / 2.0 - width / 2.0 - 0.02;
        double center = unif(-c0, c0) + (cfg.a_left + cfg.b_right) / 2.0;
        GridFunction g = smooth_bump(pr.grid, center, width, unif(0.2, 2.0));
        HaarExpansion e = haar_expand(g, cfg.a_left, cfg.b_right, level);
        CoefficientBounds b = haar_coefficient_bounds(e, g);
        if (b.holds) ++held;
        worst_ratio = std::max(worst_ratio, b.worst_ratio);
    }
    json s;
    s["gram_error"] = gram_err;
    s["gram_tolerance"] = 1e-6;
    s["bumps"] = bumps;
    s["held"] = held;
    s["worst_coefficient_ratio"] = worst_ratio;
    s["pass"] = gram_err <= 1e-6 && held == bumps;
    return s;
}

json berbee_section(const ExperimentConfig& cfg) {
    JointTable joint;
    joint.xi_values = {0.0, 1.0};
    joint.eta_values = {0.0, 1.0};
    joint.p = {0.4, 0.1, 0.1, 0.4};
    const std::uint64_t draws = 100000;
    BerbeeResult r = berbee_couple(joint, draws, SeedStream::root(cfg.seed).child("berbee"));
    double phi = r.diag.phi_max;  // exactly 0.3 on both cells for this table
    bool mismatch_ok = r.diag.mismatch_rate <= phi + 3.0 * r.diag.mismatch_se;
    bool indep_ok = r.diag.chi2_pvalue >= 0.01;
    bool ks_ok = r.diag.ks_marginal < 0.02;
    json s;
    s["draws"] = draws;
    s["phi_exact"] = phi;
    s["mismatch_rate"] = r.diag.mismatch_rate;
    s["mismatch_se"] = r.diag.mismatch_se;
    s["chi2"] = r.diag.chi2;
    s["chi2_pvalue"] = r.diag.chi2_pvalue;
    s["ks_marginal"] = r.diag.ks_marginal;
    s["pass"] = mismatch_ok && indep_ok && ks_ok;
    return s;
}

json exp_inequality_section(const ExperimentConfig& cfg) {
    const std::vector<double> lambdas = {-1.0, -0.5, 0.5, 1.0};
    SeedStream seed = SeedStream::root(cfg.seed).child("expineq");
    ExpInequalityReport two = exp_inequality_check(two_point_spec(1.0), lambdas, 0, seed.child(0));
    ExpInequalityReport uni =
        exp_inequality_check(truncated_uniform_spec(1.0), lambdas, 200000, seed.child(1));
    ExpInequalityReport gau =
        exp_inequality_check(truncated_gaussian_spec(1.5, 1.0), lambdas, 200000, seed.child(2));
    double cosh1 = 0.0;
    for (const auto& row : two.rows)
        if (row.lambda == 1.0) cosh1 = row.lhs;
    auto rows_json = [](const ExpInequalityReport& r) {
        json out = json::array();
        for (const auto& row : r.rows)
            out.push_back({{"lambda", row.lambda},
                           {"lhs", row.lhs},
                           {"lhs_se", row.lhs_se},
                           {"rhs", row.rhs},
                           {"holds", row.holds},
                           {"exact", row.exact}});
        return out;
    };
    json s;
    s["two_point"] = {{"a", two.a}, {"c", two.c}, {"rows", rows_json(two)}};
    s["truncated_uniform"] = {{"a", uni.a}, {"reps", uni.reps}, {"rows", rows_json(uni)}};
    s["truncated_gaussian"] = {{"a", gau.a}, {"reps", gau.reps}, {"rows", rows_json(gau)}};
    s["cosh_1"] = cosh1;
    s["pass"] = two.all_hold() && uni.all_hold() && gau.all_hold() &&
                std::abs(cosh1 - std::cosh(1.0)) < 1e-12;
    return s;
}

json block_hellinger_section(const ExperimentConfig& cfg, const Problem& pr) {
    const std::uint64_t n = 256;
    BlockPartition bp = make_blocks(n);
    GridFunction g = make_bump(cfg, pr.grid, n);
    PerturbedFunction pf{pr.f0, g};
    StationaryDensity psi1 = solve_stationary(pf.f(), pr.p);
    const NoiseModel& p = pr.p;
    const GridFunction& f0 = pr.f0;
    const StationaryDensity& psi0 = pr.psi0;

    // Chain and regression share the innovation array; covariates are
    // redrawn i.i.d. from the reference law.
    auto draw_pair = [&](const SeedStream& s) {
        ArTrajectory traj = simulate_ar(f0, p, psi0, n, s.child("chain"));
        RandomDesignSample rd;
        rd.eta = traj.innovations;
        rd.xi.resize(n);
        auto eng = s.child("design").engine();
        for (auto& v : rd.xi) v = psi0.sample(eng);
        rd.y.resize(n);
        for (std::uint64_t i = 0; i < n; ++i) rd.y[i] = f0(rd.xi[i]) + rd.eta[i];
        return std::make_pair(std::move(traj), std::move(rd));
    };
    CoupledLogLR full = [&](const SeedStream& s) {
        auto [traj, rd] = draw_pair(s);
        return std::make_pair(loglr_ar(traj, pf, p, psi1, psi0, bp).total(),
                              loglr_random(rd, pf, p, bp).total());
    };
    ConditionalBlocks cond = [&](const SeedStream& hist, const SeedStream& inner) {
        ArTrajectory traj = draw_pair(hist).first;
        std::vector<std::pair<double, double>> out(bp.count);
        for (std::size_t l = 0; l < bp.count; ++l) {
            SeedStream bs = inner.child(static_cast<std::uint64_t>(l));
            auto eng = bs.child("noise").engine();
            auto deng = bs.child("design").engine();
            double x = traj.state_before(bp.first[l]);
            std::vector<double> states(bp.size[l]), eps(bp.size[l]), xi(bp.size[l]);
            for (std::uint64_t j = 0; j < bp.size[l]; ++j) {
                states[j] = x;
                eps[j] = p.sample(eng);
                x = f0(x) + eps[j];
                xi[j] = psi0.sample(deng);
            }
            BlockPartition flat;
            flat.n = bp.size[l];
            flat.count = 1;
            flat.first = {1};
            flat.size = {bp.size[l]};
            LogLikelihoodRatio a = loglr_terms(states, eps, g, p, flat);
            LogLikelihoodRatio b = loglr_terms(xi, eps, g, p, flat);
            out[l] = {a.blocks[0].log_lr, b.blocks[0].log_lr};
        }
        return out;
    };
    double b0 = block0_hellinger(psi1, psi0);
    BlockBoundReport rep = blockwise_hellinger_check(full, cond, 10, 200, 400, b0,
                                                     SeedStream::root(cfg.seed).child("blockwise"),
                                                     cfg.workers);
    json s;
    s["n"] = n;
    s["blocks"] = bp.count;
    s["lhs"] = rep.lhs;
    s["lhs_se"] = rep.lhs_se;
    s["block0"] = rep.block0;
    s["rhs"] = rep.rhs;
    s["rhs_se"] = rep.rhs_se;
    s["holds"] = rep.holds;
    s["pass"] = rep.holds;
    return s;
}

json mixing_fit_section(const ExperimentConfig& cfg, const Problem& pr) {
    std::vector<int> lags = {1, 2, 3, 4, 6, 8};
    MixingEstimate est = phi_mixing_chain(pr.f0, pr.p, pr.psi0, lags, 8, 100000,
                                          SeedStream::root(cfg.seed).child("mixing"));
    double phi_max = *std::max_element(est.phi.begin(), est.phi.end());
    bool geometric = phi_max < 1e-10 ||
                     (est.rho_hat > 0.0 && est.rho_hat < 1.0 && est.phi.back() <= est.phi.front());
    json s;
    s["lags"] = est.lags;
    s["phi"] = est.phi;
    s["phi_sim"] = est.phi_sim;
    s["rho_hat"] = est.rho_hat;
    s["c0_hat"] = est.c0_hat;
    s["r_squared"] = est.r_squared;
    s["pass"] = geometric;
    return s;
}

RunOutcome run_lemma_suite(const ExperimentConfig& cfg) {
    Sink sink(cfg);
    Problem pr = make_problem(cfg);
    json rep;
    rep["contraction"] = contraction_section(cfg, pr);
    rep["haar"] = haar_section(cfg, pr);
    rep["berbee"] = berbee_section(cfg);
    rep["exp_inequality"] = exp_inequality_section(cfg);
    rep["block_hellinger"] = block_hellinger_section(cfg, pr);
    rep["mixing"] = mixing_fit_section(cfg, pr);
    bool pass = true;
    std::string failed;
    for (const auto& [name, section] : rep.items())
        if (!section.at("pass").get<bool>()) {
            pass = false;
            failed += (failed.empty() ? "" : ", ") + name;
        }
    rep["pass"] = pass;
    sink.write_json("report.json", rep);
    std::string summary = pass ? "all six sections hold" : "failing sections: " + failed;
    return {pass, summary, sink.names, rep.dump()};
}

// ---------------------------------------------------------------- likelihood-normalization

std::string samples_csv(const char* xname, const std::vector<double>& x,
                        const std::vector<double>& y, const std::vector<double>& innov) {
    std::string out = std::string("index,") + xname + ",y,innovation\n";
    for (std::size_t i = 0; i < x.size(); ++i)
        out += csv_row({fu(i + 1), fd(x[i]), fd(y[i]), fd(innov[i])});
    return out;
}

RunOutcome run_likelihood_normalization(const ExperimentConfig& cfg) {
    Sink sink(cfg);
    Problem pr = make_problem(cfg);
    std::uint64_t n = cfg.n.front();
    BlockPartition bp = make_blocks(n);
    GridFunction g = make_bump(cfg, pr.grid, n);
    PerturbedFunction pf{pr.f0, g};
    StationaryDensity psi_f = solve_stationary(pf.f(), pr.p);
    SeedStream seed = SeedStream::root(cfg.seed);
    std::vector<double> pts = rearrange_blocks(design_points(pr.psi0, n), bp);

    // Exemplar replication of each design, in the samples format.
    {
        ArTrajectory t = simulate_ar(pr.f0, pr.p, pr.psi0, n, seed.child("ex1"));
        std::vector<double> states(n);
        for (std::uint64_t i = 1; i <= n; ++i) states[i - 1] = t.state_before(i);
        sink.write("samples_ar.csv", samples_csv("x", states, t.x, t.innovations));
        RandomDesignSample r = simulate_random_design(pr.f0, pr.q, pr.psi0, n, seed.child("ex2"));
        sink.write("samples_random.csv", samples_csv("xi", r.xi, r.y, r.eta));
        FixedDesignSample s = simulate_fixed_design(pr.f0, pr.q, pts, seed.child("ex3"));
        sink.write("samples_fixed.csv", samples_csv("t", s.t, s.y, s.eta));
    }

    // E[L] = 1 for each experiment under the base function.
    json norm = json::array();
    bool pass = true;
    for (int e = 1; e <= 3; ++e) {
        std::vector<double> L(cfg.reps);
        SeedStream es = seed.child("normalization").child(static_cast<std::uint64_t>(e));
        run_reps(cfg, cfg.reps, [&](std::size_t i) {
            SeedStream rs = es.child(static_cast<std::uint64_t>(i));
            double ll = 0.0;
            if (e == 1) {
                ArTrajectory t = simulate_ar(pr.f0, pr.p, pr.psi0, n, rs);
                ll = loglr_ar(t, pf, pr.p, psi_f, pr.psi0, bp).total();
            } else if (e == 2) {
                RandomDesignSample s = simulate_random_design(pr.f0, pr.q, pr.psi0, n, rs);
                ll = loglr_random(s, pf, pr.q, bp).total();
            } else {
                FixedDesignSample s = simulate_fixed_design(pr.f0, pr.q, pts, rs);
                ll = loglr_fixed(s, pf, pr.q, bp).total();
            }
            L[i] = std::exp(ll);
        });
        stats::Summary s = stats::summarize(L);
        bool holds = std::abs(s.mean - 1.0) <= 3.0 * s.se;
        pass = pass && holds;
        norm.push_back({{"experiment", e},
                        {"n", n},
                        {"reps", cfg.reps},
                        {"mean", s.mean},
                        {"se", s.se},
                        {"holds", holds}});
    }

    // Analytic single-observation case: a Gaussian mean shift mu has
    // squared Hellinger distance 2(1 - exp(-mu^2/8)).
    std::string log_csv = "comparison,n,reps,estimate,se,threshold,holds\n";
    json validation = json::array();
    const std::uint64_t vreps = 100000;
    for (double mu : {0.1, 0.5, 1.0}) {
        CoupledLogLR gen = [mu](const SeedStream& s) {
            auto eng = s.engine();
            double u = (static_cast<double>(eng() >> 11) + 0.5) * 0x1p-53;
            double z = stats::normal_quantile(u);
            return std::make_pair(mu * z - mu * mu / 2.0, 0.0);
        };
        DistanceEstimate d = hellinger_mc(gen, vreps, seed.child("analytic").child(
                                              static_cast<std::uint64_t>(mu * 10)), cfg.workers);
        double analytic = 2.0 * (1.0 - std::exp(-mu * mu / 8.0));
        bool holds = std::abs(d.h2 - analytic) <= 3.0 * d.h2_se && d.l1_hellinger_consistent();
        pass = pass && holds;
        validation.push_back({{"mu", mu},
                              {"n", 1},
                              {"reps", vreps},
                              {"estimate", d.h2},
                              {"se", d.h2_se},
                              {"threshold", analytic},
                              {"holds", holds}});
        char tag[32];
        std::snprintf(tag, sizeof tag, "analytic-mu=%g", mu);
        log_csv += csv_row({tag, "1", fu(vreps), fd(d.h2), fd(d.h2_se), fd(analytic),
                            holds ? "1" : "0"});
    }

    // Half the L1 distance never exceeds the Hellinger distance; checked
    // on an independently coupled chain/regression estimate.
    std::uint64_t ereps = std::min<std::uint64_t>(cfg.reps, 4000);
    CoupledLogLR indep = [&](const SeedStream& s) {
        ArTrajectory t = simulate_ar(pr.f0, pr.p, pr.psi0, n, s.child("a"));
        RandomDesignSample r = simulate_random_design(pr.f0, pr.q, pr.psi0, n, s.child("b"));
        return std::make_pair(loglr_ar(t, pf, pr.p, psi_f, pr.psi0, bp).total(),
                              loglr_random(r, pf, pr.q, bp).total());
    };
    DistanceEstimate ind = hellinger_mc(indep, ereps, seed.child("l1h"), cfg.workers);
    bool eq_ok = ind.l1_hellinger_consistent();
    pass = pass && eq_ok;
    log_csv += csv_row({"independent-chain-vs-random", fu(n), fu(ereps), fd(ind.h2), fd(ind.h2_se),
                        fd(std::sqrt(ind.h2)), eq_ok ? "1" : "0"});

    json rep;
    rep["normalization"] = norm;
    rep["hellinger_validation"] = validation;
    rep["l1_vs_hellinger"] = {{"h2", ind.h2}, {"h2_se", ind.h2_se}, {"l1", ind.l1},
                              {"l1_se", ind.l1_se}, {"holds", eq_ok}};
    rep["pass"] = pass;
    sink.write_json("report.json", rep);
    sink.write("hellinger_log.csv", log_csv);
    std::string summary = pass ? "E[L] = 1 for all three designs; analytic Hellinger matched"
                               : "normalization or validation outside 3 s.e.";
    return {pass, summary, sink.names, rep.dump()};
}

// ---------------------------------------------------------------- embedding-check

RunOutcome run_embedding_check(const ExperimentConfig& cfg) {
    Sink sink(cfg);
    Grid g = default_grid();
    NoiseModel p = make_noise(cfg.noise_p, cfg.noise_p_param, g);
    ScoreTarget gauss = ScoreTarget::gaussian_exact(std::sqrt(p.fisher_information()));
    SeedStream seed = SeedStream::root(cfg.seed);
    const std::uint64_t per_family = 1000;
    double dt = cfg.dt_factor * gauss.variance();

    auto draw = [&](const ScoreTarget& target, std::uint64_t reps, const SeedStream& s,
                    std::vector<double>& values, std::vector<double>& taus) {
        std::size_t families = static_cast<std::size_t>((reps + per_family - 1) / per_family);
        values.assign(reps, 0.0);
        taus.assign(reps, 0.0);
        run_reps(cfg, families, [&](std::size_t f) {
            WienerFamily wf(cfg.a_left, cfg.b_right, 1, dt, s.child("family").child(f));
            std::size_t node = wf.node_id(0, 1);
            PathCursor cur;
            auto eng = s.child("stops").child(f).engine();
            std::uint64_t lo = f * per_family;
            std::uint64_t hi = std::min<std::uint64_t>(reps, lo + per_family);
            for (std::uint64_t i = lo; i < hi; ++i) {
                StopResult r = skorokhod_stop(wf, node, cur, target, eng);
                values[i] = r.value;
                taus[i] = r.tau;
            }
        });
    };

    std::vector<double> values, taus;
    draw(gauss, cfg.reps, seed.child("gaussian"), values, taus);
    double sd = std::sqrt(gauss.variance());
    double ks = stats::ks_statistic(values, [&](double x) { return stats::normal_cdf(x / sd); });
    double ks_threshold = 2.0 / std::sqrt(static_cast<double>(cfg.reps));
    stats::Summary wald = stats::summarize(taus);
    bool gauss_ok = ks < ks_threshold && std::abs(wald.mean - gauss.variance()) <= 3.0 * wald.se;

    std::string csv = "index,value,tau\n";
    for (std::size_t i = 0; i < values.size(); ++i)
        csv += csv_row({fu(i + 1), fd(values[i]), fd(taus[i])});
    sink.write("gaussian_stops.csv", csv);

    const double a = 1.3;
    ScoreTarget two = ScoreTarget::discrete({-a, a}, {0.5, 0.5});
    std::vector<double> tv, tt;
    draw(two, cfg.reps / 2, seed.child("twopoint"), tv, tt);
    std::size_t exact_exits = 0;
    for (double v : tv)
        if (v == a || v == -a) ++exact_exits;
    stats::Summary twald = stats::summarize(tt);
    bool two_ok = exact_exits == tv.size() && std::abs(twald.mean - a * a) <= 3.0 * twald.se;

    bool pass = gauss_ok && two_ok;
    json rep;
    rep["gaussian"] = {{"draws", cfg.reps},   {"ks", ks},
                       {"ks_threshold", ks_threshold}, {"mean_tau", wald.mean},
                       {"tau_se", wald.se},   {"target_tau", gauss.variance()},
                       {"pass", gauss_ok}};
    rep["two_point"] = {{"a", a},
                        {"draws", tv.size()},
                        {"exact_exits", exact_exits},
                        {"mean_tau", twald.mean},
                        {"tau_se", twald.se},
                        {"target_tau", a * a},
                        {"pass", two_ok}};
    rep["pass"] = pass;
    sink.write_json("report.json", rep);
    char line[160];
    std::snprintf(line, sizeof line, "KS %.4f (< %.4f), E[tau] %.4f, two-point exits %zu/%zu exact",
                  ks, ks_threshold, wald.mean, exact_exits, tv.size());
    return {pass, line, sink.names, rep.dump()};
}

// ---------------------------------------------------------------- coupling-gap

struct CoupledRep {
    GapReport zr;
    StrongGapReport strong;
    double independent_gap = 0.0;
    std::size_t event_failures = 0;
};

RunOutcome run_coupling_gap(const ExperimentConfig& cfg) {
    Sink sink(cfg);
    Problem pr = make_problem(cfg);
    std::uint64_t m = cfg.n.front();
    int depth = depth_for(m, cfg.depth_offset);
    Rates r = rates(cfg.rate_c, cfg.rate_c_prime, cfg.beta, m);
    GridFunction g = make_bump(cfg, pr.grid, m);
    HaarExpansion eg = haar_expand(g, cfg.a_left, cfg.b_right, depth - 1);
    PerturbedFunction pf{pr.f0, g};
    StationaryDensity psi_f = solve_stationary(pf.f(), pr.p);
    double dt = cfg.dt_factor * ScoreTarget::from_noise(pr.p).variance();
    SeedStream seed = SeedStream::root(cfg.seed);
    BlockPartition flat;
    flat.n = m;
    flat.count = 1;
    flat.first = {1};
    flat.size = {m};
    double v_n = cfg.v_n > 0.0 ? cfg.v_n : default_v_n(m);

    HorizonCalibration calib =
        set_horizons(pr.f0, pr.p, pr.psi0, m, cfg.a_left, cfg.b_right, depth, cfg.c_horizon,
                     cfg.pilot_reps, dt, seed.child("horizon"), cfg.workers);

    auto coupled = [&](const SeedStream& rs, double c_lambda, double c_strong) {
        WienerFamily wf(cfg.a_left, cfg.b_right, depth, dt, rs.child("family"));
        calib.apply(wf);
        EmbeddedAr ar = embed_ar_side(pr.f0, pr.p, pr.psi0, m, wf, rs.child("ar"));
        EmbeddedRegression reg =
            embed_regression_side(pr.f0, pr.q, pr.psi0, m, wf, rs.child("reg"));
        CoupledRep out{z_statistics(ar.ledger, reg.ledger, wf, c_lambda),
                       StrongGapReport{}, 0.0, 0};
        out.strong = strong_approx_gap(g, eg, ar.ledger, reg.ledger, out.zr, c_strong,
                                       cfg.lambda, r);
        LogLikelihoodRatio lr1 = loglr_ar(ar.traj, pf, pr.p, psi_f, pr.psi0, flat);
        LogLikelihoodRatio lr2 = loglr_random(reg.sample, pf, pr.q, flat);
        out.event_failures = event_diagnostics(lr1, lr2, r, flat, 1.0, v_n).failure_count();
        return out;
    };

    // Threshold constants from an independent pilot. Cells pool
    // pilot_reps * (2^{depth+1} - 1) ratios, so their 99.5th percentile
    // is stable; the strong gap yields one ratio per replication, so its
    // constant uses a CLT-tail bound (mean + 5 sd) instead.
    double c_lambda = cfg.c_lambda, c_strong = cfg.c_strong;
    if (c_lambda <= 0.0 || c_strong <= 0.0) {
        std::vector<std::vector<double>> cell_ratios(cfg.pilot_reps);
        std::vector<double> strong_ratios(cfg.pilot_reps);
        run_reps(cfg, cfg.pilot_reps, [&](std::size_t i) {
            CoupledRep c = coupled(seed.child("pilot").child(i), 1.0, 1.0);
            for (const auto& row : c.zr.rows)
                cell_ratios[i].push_back(row.threshold > 0.0 ? row.gap / row.threshold : 0.0);
            strong_ratios[i] = c.strong.r_n > 0.0 ? c.strong.gap / c.strong.r_n : 0.0;
        });
        std::vector<double> all;
        for (const auto& v : cell_ratios) all.insert(all.end(), v.begin(), v.end());
        if (c_lambda <= 0.0) c_lambda = std::max(stats::percentile(all, 0.995), 1e-12);
        if (c_strong <= 0.0) {
            stats::Summary s = stats::summarize(strong_ratios);
            c_strong = std::max(s.mean + 5.0 * std::sqrt(s.var), 1e-12);
        }
    }

    std::vector<CoupledRep> reps(cfg.reps);
    std::vector<double> indep_gap(cfg.reps);
    run_reps(cfg, cfg.reps, [&](std::size_t i) {
        reps[i] = coupled(seed.child("rep").child(i), c_lambda, c_strong);
        SeedStream is = seed.child("ind").child(i);
        ArTrajectory t = simulate_ar(pr.f0, pr.p, pr.psi0, m, is.child("ar"));
        double s1 = 0.0;
        for (std::uint64_t j = 1; j <= m; ++j)
            s1 += g(t.state_before(j)) * pr.p.score(t.innovations[j - 1]);
        RandomDesignSample rd = simulate_random_design(pr.f0, pr.q, pr.psi0, m, is.child("reg"));
        double s2 = 0.0;
        for (std::uint64_t j = 0; j < m; ++j) s2 += g(rd.xi[j]) * pr.q.score(rd.eta[j]);
        indep_gap[i] = std::abs(s1 - s2);
        reps[i].independent_gap = indep_gap[i];
    });

    // Cell verdicts over every (j, k, replication) triple.
    std::uint64_t cells_total = 0, cells_passed = 0;
    std::size_t strong_exceed = 0, wins = 0, event_failures = 0;
    std::vector<double> coupled_gaps(cfg.reps);
    for (std::size_t i = 0; i < cfg.reps; ++i) {
        cells_total += reps[i].zr.rows.size();
        cells_passed += reps[i].zr.rows.size() - reps[i].zr.failures();
        if (!reps[i].strong.within) ++strong_exceed;
        coupled_gaps[i] = reps[i].strong.gap;
        if (reps[i].strong.gap < indep_gap[i]) ++wins;
        event_failures += reps[i].event_failures;
    }
    double fraction = static_cast<double>(cells_passed) / static_cast<double>(cells_total);
    double strong_rate = static_cast<double>(strong_exceed) / static_cast<double>(cfg.reps);
    double sign_p = stats::binomial_sf(wins, cfg.reps, 0.5);
    double med_coupled = stats::percentile(coupled_gaps, 0.5);
    double med_indep = stats::percentile(indep_gap, 0.5);
    bool cells_ok = fraction >= 0.99;
    bool strong_ok = strong_rate <= 0.01;
    bool sign_ok = med_coupled < med_indep && sign_p < 0.01;
    bool pass = cells_ok && strong_ok && sign_ok;

    // First replication's cell table in the interchange format.
    std::string gap_csv = "j,k,z1,z2,gap,threshold,pass\n";
    for (const auto& row : reps.front().zr.rows)
        gap_csv += csv_row({std::to_string(row.j), fu(row.k), fd(row.z1), fd(row.z2), fd(row.gap),
                            fd(row.threshold), row.pass ? "1" : "0"});
    sink.write("gap_report.csv", gap_csv);

    std::string strong_csv = "rep,s1,s2,gap,decomposed,r_n,threshold,within,independent_gap\n";
    for (std::size_t i = 0; i < cfg.reps; ++i) {
        const auto& s = reps[i].strong;
        strong_csv += csv_row({fu(i), fd(s.s1), fd(s.s2), fd(s.gap), fd(s.decomposed), fd(s.r_n),
                               fd(s.threshold), s.within ? "1" : "0", fd(indep_gap[i])});
    }
    sink.write("strong_gaps.csv", strong_csv);

    json horizon;
    horizon["m"] = calib.m;
    horizon["depth"] = calib.depth;
    horizon["dt"] = calib.dt;
    horizon["c_horizon"] = cfg.c_horizon;
    horizon["pilot_reps"] = calib.pilot_reps;
    horizon["clamped"] = calib.clamped;
    horizon["occupancy"] = calib.occupancy;
    horizon["occupancy_se"] = calib.occupancy_se;
    horizon["t_effective"] = calib.t_effective;
    sink.write_json("horizon.json", horizon);

    // Binary-free audit dump of the first replication's chain side.
    {
        WienerFamily wf(cfg.a_left, cfg.b_right, depth, dt, seed.child("rep").child(0).child("family"));
        calib.apply(wf);
        EmbeddedAr ar = embed_ar_side(pr.f0, pr.p, pr.psi0, m, wf, seed.child("rep").child(0).child("ar"));
        audit_ledger(ar.ledger, wf);
        json audit;
        audit["side"] = "chain";
        audit["m"] = ar.ledger.m();
        audit["x0"] = ar.ledger.x0;
        std::size_t dump = std::min<std::size_t>(ar.ledger.steps.size(), 64);
        audit["steps_dumped"] = dump;
        json steps = json::array();
        for (std::size_t i = 0; i < dump; ++i) {
            const auto& s = ar.ledger.steps[i];
            json uses = json::array();
            for (const auto& u : s.uses)
                uses.push_back({{"node", u.node}, {"t0", u.t0}, {"t1", u.t1},
                                {"w0", u.w0}, {"w1", u.w1}});
            steps.push_back({{"state", s.state}, {"value", s.value}, {"tau", s.tau},
                             {"innovation", s.innovation}, {"uses", uses}});
        }
        audit["steps"] = steps;
        sink.write_json("ledger_audit.json", audit);
    }

    json rep;
    rep["m"] = m;
    rep["depth"] = depth;
    rep["lambda"] = cfg.lambda;
    rep["c_lambda"] = c_lambda;
    rep["c_strong"] = c_strong;
    rep["pilot_reps"] = cfg.pilot_reps;
    rep["reps"] = cfg.reps;
    rep["cells_total"] = cells_total;
    rep["cells_passed"] = cells_passed;
    rep["cell_pass_fraction"] = fraction;
    rep["cell_fraction_required"] = 0.99;
    rep["clamped_horizons"] = calib.clamped;
    rep["strong"] = {{"exceed", strong_exceed}, {"rate", strong_rate}, {"limit", 0.01},
                     {"r_n", reps.front().strong.r_n}};
    rep["sign_test"] = {{"wins", wins},
                        {"reps", cfg.reps},
                        {"p_value", sign_p},
                        {"median_coupled", med_coupled},
                        {"median_independent", med_indep}};
    rep["event_failures"] = event_failures;
    rep["pass"] = pass;
    sink.write_json("gap_summary.json", rep);

    char line[200];
    std::snprintf(line, sizeof line,
                  "cell pass %.4f, strong exceed %.3f, medians %.3g (coupled) vs %.3g (independent)",
                  fraction, strong_rate, med_coupled, med_indep);
    return {pass, line, sink.names, rep.dump()};
}

// ---------------------------------------------------------------- hellinger-sweep

RunOutcome run_hellinger_sweep(const ExperimentConfig& cfg) {
    Sink sink(cfg);
    Problem pr = make_problem(cfg);
    SeedStream seed = SeedStream::root(cfg.seed);
    std::vector<std::uint64_t> ns = cfg.n;
    std::sort(ns.begin(), ns.end());

    std::string log_csv = "comparison,n,reps,estimate,se,threshold,holds\n";
    json records = json::array();
    bool pass = true;
    struct Prev {
        bool have = false;
        double est = 0.0, se = 0.0;
    };
    Prev prev12, prev13;

    for (std::uint64_t n : ns) {
        BlockPartition bp = make_blocks(n);
        GridFunction g = make_bump(cfg, pr.grid, n);
        PerturbedFunction pf{pr.f0, g};
        StationaryDensity psi_f = solve_stationary(pf.f(), pr.p);
        double dt = cfg.dt_factor * ScoreTarget::from_noise(pr.p).variance();
        std::vector<double> pts = rearrange_blocks(design_points(pr.psi0, n), bp);
        SeedStream ns_seed = seed.child("n").child(n);

        // One horizon calibration per distinct block size.
        std::map<std::uint64_t, HorizonCalibration> calib;
        for (std::uint64_t m_l : bp.size)
            if (!calib.count(m_l))
                calib.emplace(m_l, set_horizons(pr.f0, pr.p, pr.psi0, m_l, cfg.a_left, cfg.b_right,
                                                depth_for(m_l, cfg.depth_offset), cfg.c_horizon,
                                                cfg.pilot_reps, dt, ns_seed.child("horizon").child(m_l),
                                                cfg.workers));

        // All three sides of one replication share the same per-block
        // Wiener families; the memo lets both comparisons reuse them.
        std::unordered_map<std::uint64_t, std::array<double, 3>> memo;
        std::mutex memo_mu;
        auto triple = [&](const SeedStream& rs) {
            {
                std::lock_guard<std::mutex> lk(memo_mu);
                auto it = memo.find(rs.raw());
                if (it != memo.end()) return it->second;
            }
            auto eng0 = rs.child("x0").engine();
            double x = pr.psi0.sample(eng0);
            ArTrajectory traj;
            traj.x0 = x;
            RandomDesignSample rds;
            FixedDesignSample fds;
            for (std::size_t l = 0; l < bp.count; ++l) {
                std::uint64_t m_l = bp.size[l];
                const HorizonCalibration& hc = calib.at(m_l);
                WienerFamily wf(cfg.a_left, cfg.b_right, hc.depth, dt,
                                rs.child("family").child(l));
                hc.apply(wf);
                SeedStream ls = rs.child("block").child(l);
                EmbeddedAr ar = embed_ar_side(pr.f0, pr.p, x, m_l, wf, ls.child("ar"));
                traj.x.insert(traj.x.end(), ar.traj.x.begin(), ar.traj.x.end());
                traj.innovations.insert(traj.innovations.end(), ar.traj.innovations.begin(),
                                        ar.traj.innovations.end());
                x = traj.x.back();
                EmbeddedRegression reg =
                    embed_regression_side(pr.f0, pr.q, pr.psi0, m_l, wf, ls.child("reg"));
                rds.xi.insert(rds.xi.end(), reg.sample.xi.begin(), reg.sample.xi.end());
                rds.eta.insert(rds.eta.end(), reg.sample.eta.begin(), reg.sample.eta.end());
                rds.y.insert(rds.y.end(), reg.sample.y.begin(), reg.sample.y.end());
                std::vector<double> slice(pts.begin() + static_cast<std::ptrdiff_t>(bp.first[l] - 1),
                                          pts.begin() + static_cast<std::ptrdiff_t>(bp.last(l)));
                EmbeddedFixed fix = embed_fixed_side(pr.f0, pr.q, slice, wf, ls.child("fix"));
                fds.t.insert(fds.t.end(), fix.sample.t.begin(), fix.sample.t.end());
                fds.eta.insert(fds.eta.end(), fix.sample.eta.begin(), fix.sample.eta.end());
                fds.y.insert(fds.y.end(), fix.sample.y.begin(), fix.sample.y.end());
            }
            std::array<double, 3> out{loglr_ar(traj, pf, pr.p, psi_f, pr.psi0, bp).total(),
                                      loglr_random(rds, pf, pr.q, bp).total(),
                                      loglr_fixed(fds, pf, pr.q, bp).total()};
            std::lock_guard<std::mutex> lk(memo_mu);
            memo.emplace(rs.raw(), out);
            return out;
        };
        CoupledLogLR gen12 = [&](const SeedStream& rs) {
            auto t = triple(rs);
            return std::make_pair(t[0], t[1]);
        };
        CoupledLogLR gen13 = [&](const SeedStream& rs) {
            auto t = triple(rs);
            return std::make_pair(t[0], t[2]);
        };
        SeedStream mc = ns_seed.child("mc");
        DistanceEstimate d12 = hellinger_mc(gen12, cfg.reps, mc, cfg.workers);
        DistanceEstimate d13 = hellinger_mc(gen13, cfg.reps, mc, cfg.workers);

        // The gate runs on the Gaussian-gap form: the direct mean of
        // (sqrt L1 - sqrt L2)^2 carries an exp(Var(log L)) variance
        // factor, so separating these sweep points with it would need
        // hours of replications; the gap form is exact under verified
        // gap normality and E[L] = 1 and resolves the trend in minutes.
        // Both estimates land in the record.
        auto emit = [&](const char* tag, const DistanceEstimate& d, Prev& prev) {
            double est = d.h2_gauss, se = d.h2_gauss_se;
            double combined = std::hypot(se, prev.se);
            double threshold = prev.have ? prev.est - 2.0 * combined : est;
            bool holds = !prev.have || (est < prev.est && est < threshold);
            holds = holds && d.gauss_gap_valid() && d.l1_hellinger_consistent();
            pass = pass && holds;
            records.push_back({{"comparison", tag},
                               {"n", n},
                               {"reps", cfg.reps},
                               {"estimate", est},
                               {"se", se},
                               {"threshold", threshold},
                               {"holds", holds},
                               {"baseline", !prev.have},
                               {"estimator", "gaussian-gap"},
                               {"estimate_direct", d.h2},
                               {"se_direct", d.h2_se},
                               {"gap_mean", d.gap_mean},
                               {"gap_var", d.gap_var},
                               {"gap_normal_ks", d.gap_normal_ks},
                               {"ks_threshold", 1.0 / std::sqrt(static_cast<double>(d.reps))},
                               {"lik_means", {d.norm1, d.norm2}},
                               {"lik_ses", {d.norm1_se, d.norm2_se}},
                               {"l1", d.l1},
                               {"l1_se", d.l1_se}});
            log_csv += csv_row({tag, fu(n), fu(cfg.reps), fd(est), fd(se), fd(threshold),
                                holds ? "1" : "0"});
            prev = {true, est, se};
        };
        emit("chain-vs-random", d12, prev12);
        emit("chain-vs-fixed", d13, prev13);
        // Flush the log after each sweep point so partial sweeps are usable.
        io::write_text((sink.dir / "hellinger_log.csv").string(), log_csv);
    }
    sink.write("hellinger_log.csv", log_csv);

    json rep;
    rep["records"] = records;
    rep["pass"] = pass;
    sink.write_json("hellinger.json", rep);
    std::string summary = pass ? "coupled Hellinger distances decrease across the sweep"
                               : "sweep not strictly decreasing with 2 s.e. separation";
    return {pass, summary, sink.names, rep.dump()};
}

// ---------------------------------------------------------------- mixing-tail

RunOutcome run_mixing_tail(const ExperimentConfig& cfg) {
    Sink sink(cfg);
    Problem pr = make_problem(cfg);
    std::uint64_t m = cfg.n.front();
    int depth = depth_for(m, cfg.depth_offset);
    double dt = cfg.dt_factor * ScoreTarget::from_noise(pr.p).variance();
    SeedStream seed = SeedStream::root(cfg.seed);

    json fit = mixing_fit_section(cfg, pr);

    // Occupancy deviations of tau-sums per dyadic cell, centered across
    // replications, against 2 sqrt(m 2^-j) log m thresholds.
    HaarSystem sys(cfg.a_left, cfg.b_right);
    std::size_t cells = (std::size_t{2} << depth) - 1;
    std::vector<std::vector<double>> occupancy(cfg.reps, std::vector<double>(cells, 0.0));
    run_reps(cfg, cfg.reps, [&](std::size_t i) {
        WienerFamily wf(cfg.a_left, cfg.b_right, depth, dt, seed.child("rep").child(i).child("f"));
        EmbeddedAr ar = embed_ar_side(pr.f0, pr.p, pr.psi0, m, wf, seed.child("rep").child(i));
        for (const auto& s : ar.ledger.steps) {
            std::size_t node_base = 0;
            for (int j = 0; j <= depth; ++j) {
                std::uint64_t k = sys.cell(j, s.state);
                if (k >= 1) occupancy[i][node_base + k - 1] += s.tau;
                node_base += std::size_t{1} << j;
            }
        }
    });
    std::vector<double> mean(cells, 0.0);
    for (const auto& row : occupancy)
        for (std::size_t c = 0; c < cells; ++c) mean[c] += row[c];
    for (auto& v : mean) v /= static_cast<double>(cfg.reps);
    std::vector<std::vector<double>> deviations(cfg.reps, std::vector<double>(cells));
    for (std::size_t i = 0; i < cfg.reps; ++i)
        for (std::size_t c = 0; c < cells; ++c) deviations[i][c] = occupancy[i][c] - mean[c];
    std::vector<double> thresholds(cells);
    std::vector<int> cell_level(cells);
    std::vector<std::uint64_t> cell_index(cells);
    {
        std::size_t c = 0;
        for (int j = 0; j <= depth; ++j)
            for (std::uint64_t k = 1; k <= (std::uint64_t{1} << j); ++k, ++c) {
                thresholds[c] = 2.0 * std::sqrt(static_cast<double>(m) * std::pow(2.0, -j)) *
                                std::log(static_cast<double>(m));
                cell_level[c] = j;
                cell_index[c] = k;
            }
    }
    TailReport tail = mixing_tail_check(deviations, thresholds);

    std::string csv = "cell,j,k,threshold,exceed,reps,rate,wilson_lo,wilson_hi\n";
    for (const auto& row : tail.rows)
        csv += csv_row({fu(row.cell), std::to_string(cell_level[row.cell]), fu(cell_index[row.cell]),
                        fd(row.threshold), fu(row.exceed), fu(row.reps), fd(row.rate),
                        fd(row.wilson.lo), fd(row.wilson.hi)});
    sink.write("exceedance.csv", csv);

    bool pass = tail.within(0.01) && fit.at("pass").get<bool>();
    json rep;
    rep["m"] = m;
    rep["depth"] = depth;
    rep["reps"] = cfg.reps;
    rep["max_exceedance_rate"] = tail.max_rate;
    rep["rate_limit"] = 0.01;
    rep["mixing"] = fit;
    rep["pass"] = pass;
    sink.write_json("report.json", rep);
    char line[120];
    std::snprintf(line, sizeof line, "max exceedance rate %.4f over %zu cells at m = %llu",
                  tail.max_rate, cells, static_cast<unsigned long long>(m));
    return {pass, line, sink.names, rep.dump()};
}

}  // namespace

// ---------------------------------------------------------------- config + registry

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
    bool known = false;
    for (const auto& e : list_experiments()) known = known || e.name == experiment;
    if (!known) fail("unknown experiment '" + experiment + "'");
    if (n.empty()) fail("'n' must not be empty");
    for (std::uint64_t v : n)
        if (v < 8 || v > 100000000ull) fail("'n' entries must lie in [8, 1e8]");
    if (f0_kind != "zero" && f0_kind != "constant" && f0_kind != "sin")
        fail("'f0_kind' must be zero, constant, or sin");
    if (!(std::abs(f0_amplitude) <= sup_m)) fail("'f0_amplitude' must satisfy |amplitude| <= sup_m");
    if (!(g_width > 0.0)) fail("'g_width' must be positive");
    if (g_center - g_width / 2.0 < a_left || g_center + g_width / 2.0 > b_right)
        fail("bump support must lie inside [a_left, b_right]");
    if (!(g_budget_fraction > 0.0 && g_budget_fraction <= 2.0))
        fail("'g_budget_fraction' must lie in (0, 2]");
    for (const auto* fam : {&noise_p, &noise_q})
        if (*fam != "gaussian" && *fam != "logistic") fail("noise family must be gaussian or logistic");
    if (!(noise_p_param > 0.0 && noise_q_param > 0.0)) fail("noise parameters must be positive");
    if (!(beta > 1.0)) fail("'beta' must exceed 1");
    if (!(holder_l > 0.0 && sup_m > 0.0)) fail("'holder_l' and 'sup_m' must be positive");
    if (!(a_left < b_right)) fail("need a_left < b_right");
    if (!(rate_c > 0.0 && rate_c_prime > 0.0)) fail("rate constants must be positive");
    if (!(lambda > 0.0)) fail("'lambda' must be positive");
    if (c_lambda < 0.0 || c_strong < 0.0 || c_horizon < 0.0)
        fail("threshold constants must be nonnegative");
    if (!(dt_factor > 0.0 && dt_factor <= 0.5)) fail("'dt_factor' must lie in (0, 0.5]");
    if (depth_offset < -3 || depth_offset > 3) fail("'depth_offset' must lie in [-3, 3]");
    if (v_n < 0.0) fail("'v_n' must be nonnegative");
    if (pilot_reps < 2) fail("'pilot_reps' must be at least 2");
    if (reps < 1) fail("'reps' must be at least 1");
    if (workers < 1 || workers > 64) fail("'workers' must lie in [1, 64]");
    if (out_dir.empty()) fail("'out_dir' must not be empty");
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
    ExperimentConfig c;
    try {
        std::string experiment = c.experiment;
        take(j, "experiment", experiment);
        c = default_config(experiment);
        take_n(j, c.n);
        take(j, "f0_kind", c.f0_kind);
        take(j, "f0_amplitude", c.f0_amplitude);
        take(j, "g_center", c.g_center);
        take(j, "g_width", c.g_width);
        take(j, "g_budget_fraction", c.g_budget_fraction);
        take(j, "noise_p", c.noise_p);
        take(j, "noise_p_param", c.noise_p_param);
        take(j, "noise_q", c.noise_q);
        take(j, "noise_q_param", c.noise_q_param);
        take(j, "beta", c.beta);
        take(j, "holder_l", c.holder_l);
        take(j, "sup_m", c.sup_m);
        take(j, "a_left", c.a_left);
        take(j, "b_right", c.b_right);
        take(j, "rate_c", c.rate_c);
        take(j, "rate_c_prime", c.rate_c_prime);
        take(j, "lambda", c.lambda);
        take(j, "c_lambda", c.c_lambda);
        take(j, "c_strong", c.c_strong);
        take(j, "c_horizon", c.c_horizon);
        take(j, "dt_factor", c.dt_factor);
        take(j, "depth_offset", c.depth_offset);
        take(j, "v_n", c.v_n);
        take(j, "pilot_reps", c.pilot_reps);
        take(j, "reps", c.reps);
        take(j, "seed", c.seed);
        take(j, "out_dir", c.out_dir);
        take(j, "workers", c.workers);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (!j.empty()) throw ConfigError("config: unknown key '" + j.begin().key() + "'");
    return c;
}

std::string ExperimentConfig::to_json_text() const { return cfg_to_json(*this).dump(2) + "\n"; }

ExperimentConfig default_config(const std::string& experiment) {
    ExperimentConfig c;
    c.experiment = experiment;
    if (experiment == "stationary-oracle") {
        c.f0_kind = "sin";
        c.f0_amplitude = 0.5;
        c.n = {1000000};
        c.reps = 1;
    } else if (experiment == "lemma-suite") {
        c.n = {1024};
        c.reps = 60;
    } else if (experiment == "likelihood-normalization") {
        c.n = {100};
        c.reps = 10000;
    } else if (experiment == "embedding-check") {
        c.n = {1024};
        c.reps = 10000;
    } else if (experiment == "coupling-gap") {
        c.n = {4096};
        c.reps = 200;
    } else if (experiment == "hellinger-sweep") {
        c.n = {256, 1024, 4096};
        c.reps = 2500;
    } else if (experiment == "mixing-tail") {
        c.f0_kind = "zero";
        c.f0_amplitude = 0.0;
        c.n = {4096};
        c.reps = 120;
    } else {
        throw ConfigError("config: unknown experiment '" + experiment + "'");
    }
    return c;
}

const std::vector<ExperimentInfo>& list_experiments() {
    static const std::vector<ExperimentInfo> reg = {
        {"stationary-oracle",
         "stationary solver against closed forms plus a long-chain marginal check"},
        {"lemma-suite",
         "contraction, Haar-bound, maximal-coupling, exponential-moment, and block Hellinger checks"},
        {"likelihood-normalization",
         "E[L] = 1 for all three designs and the analytic single-observation Hellinger case"},
        {"embedding-check",
         "stopped-value law, Wald identity, and exact two-point exits of the embedding"},
        {"coupling-gap",
         "interval-localized score-sum gaps and the strong block approximation on coupled pairs"},
        {"hellinger-sweep",
         "coupled Hellinger distances across a sample-size sweep, chain vs both regressions"},
        {"mixing-tail", "uniform-mixing decay fit and an occupancy-deviation tail table"},
    };
    return reg;
}

RunOutcome run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.experiment == "stationary-oracle") return run_stationary_oracle(cfg);
    if (cfg.experiment == "lemma-suite") return run_lemma_suite(cfg);
    if (cfg.experiment == "likelihood-normalization") return run_likelihood_normalization(cfg);
    if (cfg.experiment == "embedding-check") return run_embedding_check(cfg);
    if (cfg.experiment == "coupling-gap") return run_coupling_gap(cfg);
    if (cfg.experiment == "hellinger-sweep") return run_hellinger_sweep(cfg);
    if (cfg.experiment == "mixing-tail") return run_mixing_tail(cfg);
    throw ConfigError("config: unknown experiment '" + cfg.experiment + "'");
}

}  // namespace couplab
