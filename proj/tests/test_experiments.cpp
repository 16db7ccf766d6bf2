#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "couplab/errors.hpp"
#include "couplab/experiments.hpp"
#include "couplab/grid.hpp"

using namespace couplab;
using json = nlohmann::ordered_json;

namespace {

std::filesystem::path fresh_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() / ("couplab_test_" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

// Collected file bodies keyed by path relative to dir, for rerun diffs.
std::map<std::string, std::string> tree_bodies(const std::filesystem::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
        if (e.is_regular_file())
            out[std::filesystem::relative(e.path(), dir).string()] = slurp(e.path());
    return out;
}

}  // namespace

TEST_CASE("config round-trips through JSON with stable keys") {
    ExperimentConfig c = default_config("coupling-gap");
    c.seed = 123;
    c.n = {64};
    c.g_width = 3.5;
    std::string text = c.to_json_text();
    ExperimentConfig back = ExperimentConfig::from_json_text(text);
    CHECK(back.experiment == "coupling-gap");
    CHECK(back.seed == 123);
    CHECK(back.n == std::vector<std::uint64_t>{64});
    CHECK(back.g_width == doctest::Approx(3.5));
    CHECK(back.to_json_text() == text);
}

TEST_CASE("partial config keeps defaults for missing keys") {
    ExperimentConfig c =
        ExperimentConfig::from_json_text(R"({"experiment": "stationary-oracle", "seed": 9})");
    ExperimentConfig d = default_config("stationary-oracle");
    CHECK(c.seed == 9);
    CHECK(c.n == d.n);
    CHECK(c.reps == d.reps);
    CHECK(c.f0_kind == d.f0_kind);
}

TEST_CASE("scalar n is accepted as a one-element sweep") {
    ExperimentConfig c = ExperimentConfig::from_json_text(R"({"n": 500})");
    CHECK(c.n == std::vector<std::uint64_t>{500});
}

TEST_CASE("unknown keys are config errors") {
    CHECK_THROWS_AS(ExperimentConfig::from_json_text(R"({"sedd": 1})"), ConfigError);
    CHECK_THROWS_WITH(ExperimentConfig::from_json_text(R"({"sedd": 1})"),
                      doctest::Contains("unknown key 'sedd'"));
    CHECK_THROWS_AS(ExperimentConfig::from_json_text("not json"), ConfigError);
}

TEST_CASE("validate rejects bad fields by name") {
    ExperimentConfig c;
    c.experiment = "no-such-experiment";
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("experiment"), ConfigError);

    c = ExperimentConfig{};
    c.n.clear();
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("n"), ConfigError);

    c = ExperimentConfig{};
    c.n = {4};  // below the documented minimum of 8
    CHECK_THROWS_AS(c.validate(), ConfigError);

    c = ExperimentConfig{};
    c.beta = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);

    c = ExperimentConfig{};
    c.a_left = 2.0;
    c.b_right = -2.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);

    c = ExperimentConfig{};
    c.noise_p = "cauchy";
    CHECK_THROWS_AS(c.validate(), ConfigError);

    c = ExperimentConfig{};
    c.reps = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);

    c = ExperimentConfig{};
    c.workers = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("registry lists the documented experiments in stable order") {
    const auto& infos = list_experiments();
    std::vector<std::string> names;
    for (const auto& i : infos) {
        names.push_back(i.name);
        CHECK(!i.description.empty());
    }
    REQUIRE(names.size() == 7);
    CHECK(names[0] == "stationary-oracle");
    CHECK(std::set<std::string>(names.begin(), names.end()).count("hellinger-sweep") == 1);
    CHECK(std::set<std::string>(names.begin(), names.end()).count("coupling-gap") == 1);
    CHECK(std::set<std::string>(names.begin(), names.end()).count("lemma-suite") == 1);
    for (const auto& name : names) {
        ExperimentConfig c = default_config(name);
        CHECK(c.experiment == name);
        CHECK_NOTHROW(c.validate());
    }
    CHECK_THROWS_AS(default_config("nope"), ConfigError);
}

TEST_CASE("unknown experiment name fails at run with a config error") {
    ExperimentConfig c;
    c.experiment = "bogus";
    c.out_dir = fresh_dir("bogus").string();
    CHECK_THROWS_AS(run_experiment(c), ConfigError);
}

TEST_CASE("stationary-oracle writes its artifacts and passes") {
    ExperimentConfig c = default_config("stationary-oracle");
    c.n = {200000};
    c.seed = 31;
    auto dir = fresh_dir("oracle");
    c.out_dir = dir.string();
    RunOutcome out = run_experiment(c);
    CHECK(out.pass);
    CHECK(!out.summary.empty());
    for (const auto& rel : out.artifacts) {
        CAPTURE(rel);
        CHECK(std::filesystem::exists(dir / rel));
    }
    std::string psi_csv = slurp(dir / "stationary-oracle" / "psi.csv");
    CHECK(psi_csv.rfind("x,value\n", 0) == 0);

    // The CSV body is the grid interchange format and parses back.
    GridFunction psi = io::grid_from_csv(psi_csv);
    CHECK(psi.size() > 100);

    json details = json::parse(out.details);
    CHECK(details.at("zero_drift_l1").get<double>() < 1e-6);
    CHECK(details.at("constant_drift_l1").get<double>() < 1e-6);
}

TEST_CASE("zero drift oracle equals the noise density") {
    ExperimentConfig c = default_config("stationary-oracle");
    c.f0_kind = "zero";
    c.n = {50000};
    auto dir = fresh_dir("oracle_zero");
    c.out_dir = dir.string();
    RunOutcome out = run_experiment(c);
    CHECK(out.pass);
    GridFunction psi = io::grid_from_csv(slurp(dir / "stationary-oracle" / "psi.csv"));
    Grid g = default_grid();
    NoiseModel p = NoiseModel::gaussian(1.0, g);
    CHECK(l1_distance(psi, p.density()) < 1e-9);
}

TEST_CASE("reruns are byte-identical and worker count does not matter") {
    ExperimentConfig c = default_config("likelihood-normalization");
    c.n = {60};
    c.reps = 300;
    c.seed = 77;
    auto d1 = fresh_dir("rerun1");
    auto d2 = fresh_dir("rerun2");
    auto d3 = fresh_dir("rerun3");

    c.out_dir = d1.string();
    RunOutcome o1 = run_experiment(c);
    c.out_dir = d2.string();
    RunOutcome o2 = run_experiment(c);
    c.out_dir = d3.string();
    c.workers = 2;
    RunOutcome o3 = run_experiment(c);

    CHECK(o1.pass == o2.pass);
    CHECK(o1.summary == o2.summary);
    CHECK(o1.details == o2.details);
    auto b1 = tree_bodies(d1), b2 = tree_bodies(d2), b3 = tree_bodies(d3);
    REQUIRE(!b1.empty());
    CHECK(b1 == b2);
    CHECK(b1 == b3);  // workers only split the loop, never the outputs
    CHECK(o1.details == o3.details);
}

TEST_CASE("likelihood-normalization small run reports three designs") {
    ExperimentConfig c = default_config("likelihood-normalization");
    c.n = {50};
    c.reps = 400;
    auto dir = fresh_dir("norm");
    c.out_dir = dir.string();
    RunOutcome out = run_experiment(c);
    json details = json::parse(out.details);
    REQUIRE(details.at("normalization").size() == 3);
    for (const auto& row : details.at("normalization")) {
        double mean = row.at("mean").get<double>();
        CHECK(mean > 0.2);
        CHECK(mean < 5.0);
    }
    CHECK(details.at("hellinger_validation").size() == 3);
    for (const char* name : {"samples_ar.csv", "samples_random.csv", "samples_fixed.csv"})
        CHECK(std::filesystem::exists(dir / "likelihood-normalization" / name));
}

TEST_CASE("coupling-gap small run produces finite diagnostics") {
    ExperimentConfig c = default_config("coupling-gap");
    c.n = {256};
    c.reps = 20;
    c.pilot_reps = 12;
    c.seed = 5;
    auto dir = fresh_dir("gap");
    c.out_dir = dir.string();
    RunOutcome out = run_experiment(c);  // pass not asserted at toy scale
    json details = json::parse(out.details);
    CHECK(details.at("c_lambda").get<double>() > 0.0);
    CHECK(details.at("c_strong").get<double>() > 0.0);
    CHECK(details.at("cell_pass_fraction").get<double>() >= 0.0);
    CHECK(details.at("sign_test").at("median_coupled").get<double>() > 0.0);
    CHECK(details.at("sign_test").at("median_independent").get<double>() > 0.0);

    std::string report = slurp(dir / "coupling-gap" / "gap_report.csv");
    CHECK(report.rfind("j,k,z1,z2,gap,threshold,pass\n", 0) == 0);
    std::string strong = slurp(dir / "coupling-gap" / "strong_gaps.csv");
    CHECK(strong.find("independent_gap") != std::string::npos);
    CHECK(std::filesystem::exists(dir / "coupling-gap" / "ledger_audit.json"));
}

TEST_CASE("hellinger-sweep tiny run logs one row per comparison and n") {
    ExperimentConfig c = default_config("hellinger-sweep");
    c.n = {32, 64};
    c.reps = 12;
    c.pilot_reps = 8;
    auto dir = fresh_dir("sweep");
    c.out_dir = dir.string();
    RunOutcome out = run_experiment(c);  // pass not asserted at toy scale
    std::string log = slurp(dir / "hellinger-sweep" / "hellinger_log.csv");
    CHECK(log.rfind("comparison,n,reps,estimate,se,threshold,holds\n", 0) == 0);
    int rows = 0;
    for (char ch : log)
        if (ch == '\n') ++rows;
    CHECK(rows == 1 + 2 * 2);
    json details = json::parse(out.details);
    REQUIRE(details.at("records").size() == 4);
    for (const auto& rec : details.at("records")) {
        CHECK(rec.at("estimate").get<double>() >= 0.0);
        CHECK(rec.at("se").get<double>() >= 0.0);
    }
}

TEST_CASE("mixing-tail run stays within the exceedance budget") {
    ExperimentConfig c = default_config("mixing-tail");
    c.n = {256};
    c.reps = 120;
    auto dir = fresh_dir("mixing");
    c.out_dir = dir.string();
    RunOutcome out = run_experiment(c);
    CHECK(out.pass);
    std::string csv = slurp(dir / "mixing-tail" / "exceedance.csv");
    CHECK(csv.rfind("cell,j,k,threshold,exceed,reps,rate,wilson_lo,wilson_hi\n", 0) == 0);
}

TEST_CASE("unwritable out_dir is a config error") {
    ExperimentConfig c = default_config("stationary-oracle");
    c.out_dir = "/proc/definitely/not/writable";
    CHECK_THROWS_AS(run_experiment(c), ConfigError);
}

TEST_CASE("grid csv and descriptor round-trip") {
    Grid g = Grid::uniform(0.0, 1.0, 0.25);
    GridFunction f = GridFunction::tabulate(g, [](double x) { return 3.0 * x - 1.0; });
    GridFunction back = io::grid_from_csv(io::grid_csv(f));
    REQUIRE(back.size() == f.size());
    for (std::size_t i = 0; i < f.size(); ++i)
        CHECK(back.values()[i] == doctest::Approx(f.values()[i]).epsilon(1e-15));

    json desc = json::parse(io::grid_descriptor_json(f));
    CHECK(desc.at("x_min").get<double>() == doctest::Approx(0.0));
    CHECK(desc.at("x_max").get<double>() == doctest::Approx(1.0));
    CHECK(desc.at("values").size() == 5);
    CHECK(io::format_double(0.5) == "0.5");
    CHECK(io::format_double(1.0 / 3.0) == "0.33333333333333331");
}
