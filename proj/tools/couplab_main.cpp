#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>

#include "couplab/errors.hpp"
#include "couplab/experiments.hpp"

namespace {

struct CliArgs {
    std::string experiment;
    std::string config_path;
    std::uint64_t seed = 0;
    std::uint64_t reps = 0;
    std::string out_dir;
    unsigned workers = 0;
};

// File config first (its "experiment" key selects the defaults), then the
// positional name, then individual flag overrides.
couplab::ExperimentConfig assemble(const CliArgs& a, const CLI::App* cmd) {
    couplab::ExperimentConfig cfg;
    if (!a.config_path.empty())
        cfg = couplab::ExperimentConfig::from_json_text(couplab::io::read_text(a.config_path));
    else if (!a.experiment.empty())
        cfg = couplab::default_config(a.experiment);
    else
        throw couplab::ConfigError("config: give an experiment name or --config FILE");
    if (!a.experiment.empty()) cfg.experiment = a.experiment;
    if (cmd->count("--seed")) cfg.seed = a.seed;
    if (cmd->count("--reps")) cfg.reps = a.reps;
    if (cmd->count("--out-dir")) cfg.out_dir = a.out_dir;
    if (cmd->count("--workers")) cfg.workers = a.workers;
    return cfg;
}

void add_common(CLI::App* cmd, CliArgs& a) {
    cmd->add_option("experiment", a.experiment, "Experiment name (see `list`)");
    cmd->add_option("--config", a.config_path, "JSON configuration file");
    cmd->add_option("--seed", a.seed, "Master seed override");
    cmd->add_option("--reps", a.reps, "Replication count override");
    cmd->add_option("--out-dir", a.out_dir, "Artifact directory override");
    cmd->add_option("--workers", a.workers, "Worker thread count override");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"coupled simulation experiments for nonparametric autoregression and regression"};
    app.require_subcommand(1);
    CliArgs args;

    CLI::App* run = app.add_subcommand("run", "Run an experiment and write its artifacts");
    add_common(run, args);
    CLI::App* list = app.add_subcommand("list", "List the available experiments");
    CLI::App* show = app.add_subcommand("show-config",
                                        "Print the effective configuration as JSON");
    add_common(show, args);
    CLI::App* validate = app.add_subcommand("validate",
                                            "Check a configuration without running it");
    add_common(validate, args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (list->parsed()) {
            for (const auto& e : couplab::list_experiments())
                std::printf("%-26s %s\n", e.name.c_str(), e.description.c_str());
            return 0;
        }
        if (show->parsed()) {
            couplab::ExperimentConfig cfg =
                (args.config_path.empty() && args.experiment.empty())
                    ? couplab::default_config("lemma-suite")
                    : assemble(args, show);
            std::fputs(cfg.to_json_text().c_str(), stdout);
            return 0;
        }
        if (validate->parsed()) {
            couplab::ExperimentConfig cfg = assemble(args, validate);
            cfg.validate();
            std::printf("valid: %s (n front %llu, reps %llu, seed %llu)\n",
                        cfg.experiment.c_str(),
                        static_cast<unsigned long long>(cfg.n.front()),
                        static_cast<unsigned long long>(cfg.reps),
                        static_cast<unsigned long long>(cfg.seed));
            return 0;
        }
        couplab::ExperimentConfig cfg = assemble(args, run);
        couplab::RunOutcome out = couplab::run_experiment(cfg);
        std::printf("%s: %s  %s\n", cfg.experiment.c_str(), out.pass ? "PASS" : "FAIL",
                    out.summary.c_str());
        for (const auto& name : out.artifacts)
            std::printf("  %s/%s\n", cfg.out_dir.c_str(), name.c_str());
        return out.pass ? 0 : 1;
    } catch (const couplab::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
