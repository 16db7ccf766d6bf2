#pragma once

// Named batch experiments: a JSON-configured registry mapping stable
// experiment names to runners that write CSV/JSON artifacts and return
// a verdict. Outputs are deterministic for a fixed (config, seed): no
// timestamps, shortest-round-trip floats, and replication-order
// reductions independent of the worker count.

#include <cstdint>
#include <string>
#include <vector>

#include "couplab/grid.hpp"
#include "couplab/models.hpp"
#include "couplab/stationary.hpp"

namespace couplab {

// Flat, human-editable configuration; every field has an embedded
// default and serializes to/from a JSON object with matching keys.
struct ExperimentConfig {
    std::string experiment = "lemma-suite";
    // Sample sizes: a sweep for hellinger-sweep, front() elsewhere
    // (observations per side, chain length, or replication block size).
    std::vector<std::uint64_t> n{256, 1024, 4096};
    // Base function f0: "zero", "constant" (== amplitude), or
    // "sin" (amplitude * sin x).
    std::string f0_kind = "sin";
    double f0_amplitude = 0.25;
    // Perturbation g: a C^3 bump of height budget_fraction * gamma_n.
    double g_center = 0.0;
    double g_width = 4.0;
    double g_budget_fraction = 0.8;
    // Noise of the chain experiment (p) and the regression ones (q);
    // q is rescaled so both Fisher informations match.
    std::string noise_p = "gaussian";
    double noise_p_param = 1.0;
    std::string noise_q = "gaussian";
    double noise_q_param = 1.0;
    // Smoothness class, perturbation interval, and rate constants.
    double beta = 3.0;
    double holder_l = 3.0;
    double sup_m = 0.5;
    double a_left = -2.0;
    double b_right = 2.0;
    double rate_c = 1.0;
    double rate_c_prime = 1.0;
    // Coupling: gap and strong-gap threshold constants (0 = calibrate
    // as the 99.5th percentile of an independent pilot), horizon
    // penalty constant, Brownian resolution dt = dt_factor * Var(score),
    // tree depth floor(log2(m)/2) + depth_offset, and the event slack
    // v_n (0 = the (log n)^{-1/2} rule).
    double lambda = 2.0;
    double c_lambda = 0.0;
    double c_strong = 0.0;
    double c_horizon = 1.0;
    double dt_factor = 1e-3;
    int depth_offset = 0;
    double v_n = 0.0;
    std::uint64_t pilot_reps = 50;
    // Harness: replication count (per-experiment meaning documented in
    // the registry description), master seed, output directory, workers.
    std::uint64_t reps = 200;
    std::uint64_t seed = 20260815;
    std::string out_dir = "out";
    unsigned workers = 1;

    void validate() const;  // throws ConfigError naming the bad field
    static ExperimentConfig from_json_text(const std::string& text);
    std::string to_json_text() const;  // stable key order, round-trips
};

// Defaults tuned per experiment (sample sizes, replication counts).
ExperimentConfig default_config(const std::string& experiment);

struct ExperimentInfo {
    std::string name;
    std::string description;  // one line
};

// Stable registry order; names are the run/show-config/validate keys.
const std::vector<ExperimentInfo>& list_experiments();

struct RunOutcome {
    bool pass = false;
    std::string summary;                 // one line
    std::vector<std::string> artifacts;  // paths relative to out_dir
    std::string details;                 // JSON object with the metrics
};

// Dispatches on cfg.experiment; artifacts land under cfg.out_dir.
// Throws ConfigError for an invalid config; errors inside a replication
// are rethrown tagged with the experiment name and replication index.
RunOutcome run_experiment(const ExperimentConfig& cfg);

namespace io {

// %.17g: shortest exact decimal round-trip for doubles in CSV bodies.
std::string format_double(double x);
void write_text(const std::string& path, const std::string& body);
std::string read_text(const std::string& path);

// Grid-function interchange: CSV body "x,value" and a JSON descriptor
// {x_min, x_max, step, values}.
std::string grid_csv(const GridFunction& f);
GridFunction grid_from_csv(const std::string& body);
std::string grid_descriptor_json(const GridFunction& f);

}  // namespace io

}  // namespace couplab
