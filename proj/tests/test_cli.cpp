#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "dyecav/commands.hpp"
#include "dyecav/config.hpp"
#include "dyecav/manifest.hpp"

using namespace dyecav;
namespace fs = std::filesystem;

namespace {

fs::path scratch(std::string const& name) {
    fs::path const p = fs::temp_directory_path() / ("dyecav_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(fs::path const& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(fs::path const& p, std::string const& text) { std::ofstream(p) << text; }

struct CliRun {
    int code;
    std::string out, err;
};

CliRun run_cli(std::string const& args, fs::path const& dir) {
    std::string const cmd = std::string(DYECAV_CLI) + " " + args + " >" + (dir / "stdout.txt").string() + " 2>" +
                            (dir / "stderr.txt").string();
    int const status = std::system(cmd.c_str());
    return {WEXITSTATUS(status), slurp(dir / "stdout.txt"), slurp(dir / "stderr.txt")};
}

std::vector<std::vector<std::string>> read_csv(fs::path const& p) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(slurp(p));
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

// 15-mode basis on a coarser grid keeps the solver-backed CLI runs short
json small_config() {
    return json::parse(R"({
        "trap": {"max_quanta": 4},
        "grid": {"half_width": 7, "points": 96}
    })");
}

ConfigError config_error(json const& j) {
    try {
        config_from_json(j);
    } catch (ConfigError const& e) {
        return e;
    }
    return ConfigError("<none>", "no error");
}

} // namespace

TEST(Config, DefaultsMatchTheExperimentalValues) {
    RunConfig const c = config_from_json(json::object());
    EXPECT_EQ(c.trap.frequency_thz, 4.0);
    EXPECT_EQ(c.trap.anisotropy, 0.99);
    EXPECT_EQ(c.trap.max_quanta, 10);
    EXPECT_EQ(c.system.cutoff_thz, 515.0);
    EXPECT_EQ(c.dye.density_per_d2, 1e8);
    EXPECT_EQ(c.dye.absorption_at_anchor_khz, 1.0);
    EXPECT_EQ(c.system.gamma_ghz, 0.2);
    EXPECT_EQ(c.phase_diagram.xi.min, 0.01);
    EXPECT_EQ(c.phase_diagram.xi.max, 100.0);
    EXPECT_EQ(c.phase_diagram.xi.count, 40);
}

TEST(Config, RoundTripThroughJson) {
    json j = small_config();
    j["system"] = {{"xi", 3.5}, {"pump_GHz", 0.125}, {"kappa_GHz", nullptr}};
    j["pump_sweep"] = {{"slice_pumps", {1.5, 4.0}}, {"pump", {{"scale", "linear"}, {"min", 0.1}, {"max", 3.0}, {"count", 7}}}};
    j["workers"] = 3;
    RunConfig const c = config_from_json(j);
    json const once = config_to_json(c);
    json const twice = config_to_json(config_from_json(once));
    EXPECT_EQ(once, twice);
    EXPECT_EQ(c.pump_sweep.pump.scale, Axis::Scale::linear);
    EXPECT_EQ(c.workers, 3u);
    EXPECT_EQ(c.system.xi, 3.5);
}

TEST(Config, ErrorsCarryFieldPaths) {
    EXPECT_EQ(config_error(json::parse(R"({"system": {"xii": 1}})")).path(), "system.xii");
    EXPECT_EQ(config_error(json::parse(R"({"grid": {"points": "many"}})")).path(), "grid.points");
    EXPECT_EQ(config_error(json::parse(R"({"phase_diagram": {"xi": {"min": -1}}})")).path(), "phase_diagram.xi");
    EXPECT_EQ(config_error(json::parse(R"({"dye": {"source": "tabulated"}})")).path(), "dye.spectra_path");
    EXPECT_EQ(config_error(json::parse(R"({"solver": {"method": "magic"}})")).path(), "solver.method");
    EXPECT_EQ(config_error(json::parse(R"({"bogus": 1})")).path(), "bogus");
    EXPECT_EQ(config_error(json::parse(R"({"cutoff_scan": {"cutoffs_THz": [515, "x"]}})")).path(),
              "cutoff_scan.cutoffs_THz[1]");
    EXPECT_EQ(config_error(json::parse(R"({"workers": -2})")).path(), "workers");
}

TEST(Config, ManifestIsAcceptedAsConfig) {
    RunConfig const c = config_from_json(small_config());
    auto const basis = build_basis(c);
    RunManifest m = make_manifest("steady", c, *basis);
    RunConfig const back = config_from_json(m.to_json());
    EXPECT_EQ(config_to_json(back), config_to_json(c));
}

TEST(Manifest, Sha256Oracle) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Manifest, DigestsDependOnTheGrid) {
    RunConfig a = config_from_json(small_config());
    RunConfig b = a;
    b.grid.points = 97;
    EXPECT_NE(grid_digest(build_basis(a)->grid()), grid_digest(build_basis(b)->grid()));
    EXPECT_NE(basis_digest(*build_basis(a)), basis_digest(*build_basis(b)));
    EXPECT_EQ(basis_digest(*build_basis(a)), basis_digest(*build_basis(a)));
}

TEST(Cli, DefaultThresholdTable) {
    fs::path const dir = scratch("thresholds");
    CliRun const r = run_cli("thresholds --out " + (dir / "out").string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    auto const rows = read_csv(dir / "out" / "thresholds.csv");
    ASSERT_EQ(rows.size(), 41u * 66u + 1u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"xi", "nu_x", "nu_y", "G_th", "P_th", "is_argmin"}));
    auto const argmin = read_csv(dir / "out" / "threshold_argmin.csv");
    ASSERT_EQ(argmin.size(), 42u);
    EXPECT_NE(argmin[1][1] + ":" + argmin[1][2], "0:0");  // xi = 0.01
    EXPECT_EQ(argmin.back()[1] + ":" + argmin.back()[2], "0:0");
    json const m = json::parse(slurp(dir / "out" / "manifest.json"));
    EXPECT_EQ(m["outputs"]["thresholds.csv"], sha256_hex(slurp(dir / "out" / "thresholds.csv")));
    EXPECT_EQ(m["provenance"]["dye"]["source"], "surrogate");
    EXPECT_TRUE(m["status"]["all_converged"].get<bool>());
}

TEST(Cli, DoublingGammaDoublesEveryThresholdPump) {
    fs::path const dir = scratch("gamma");
    spit(dir / "g2.json", R"({"system": {"gamma_GHz": 0.4}, "thresholds": {"xi": {"min": 0.1, "max": 10, "count": 3}}})");
    spit(dir / "g1.json", R"({"thresholds": {"xi": {"min": 0.1, "max": 10, "count": 3}}})");
    ASSERT_EQ(run_cli("thresholds --config " + (dir / "g1.json").string() + " --out " + (dir / "a").string(), dir).code, 0);
    ASSERT_EQ(run_cli("thresholds --config " + (dir / "g2.json").string() + " --out " + (dir / "b").string(), dir).code, 0);
    auto const a = read_csv(dir / "a" / "thresholds.csv");
    auto const b = read_csv(dir / "b" / "thresholds.csv");
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 1; k < a.size(); ++k) {
        if (a[k][4] == "inf") continue;
        EXPECT_NEAR(std::stod(b[k][4]), 2.0 * std::stod(a[k][4]), 1e-11 * std::stod(b[k][4]));
    }
    ASSERT_EQ(run_cli("thresholds --report-p-over-gamma --config " + (dir / "g1.json").string() + " --out " +
                          (dir / "c").string(),
                      dir)
                  .code,
              0);
    auto const c = read_csv(dir / "c" / "thresholds.csv");
    EXPECT_EQ(c[0][4], "P_th_over_Gamma");
    EXPECT_NEAR(std::stod(c[1][4]), std::stod(a[1][4]) / 0.2, 1e-10 * std::stod(c[1][4]));
}

TEST(Cli, ToyPhaseDiagramBelowThresholdIsAllNone) {
    fs::path const dir = scratch("toy");
    json j = small_config();
    j["phase_diagram"] = json::parse(R"({"xi": {"min": 0.1, "max": 10, "count": 3},
                                         "pump": {"min": 1e-5, "max": 1e-4, "count": 3}})");
    spit(dir / "toy.json", j.dump());
    CliRun const r = run_cli("phase-diagram --workers 2 --config " + (dir / "toy.json").string() + " --out " +
                              (dir / "out").string(),
                          dir);
    ASSERT_EQ(r.code, 0) << r.err;
    auto const rows = read_csv(dir / "out" / "phase_cells.csv");
    ASSERT_EQ(rows.size(), 10u);
    for (std::size_t k = 1; k < rows.size(); ++k) {
        EXPECT_EQ(rows[k][2], "0");
        EXPECT_EQ(rows[k][5], "1");
    }
    EXPECT_EQ(json::parse(r.out)["status"], "ok");
}

TEST(Cli, ConfigErrorsExitNonzeroWithJson) {
    fs::path const dir = scratch("bad");
    spit(dir / "bad.json", R"({"system": {"gamma_GHz": -1}})");
    CliRun const r = run_cli("steady --config " + (dir / "bad.json").string() + " --out " + (dir / "out").string(), dir);
    EXPECT_EQ(r.code, 2);
    json const e = json::parse(r.err);
    EXPECT_EQ(e["status"], "error");
    EXPECT_EQ(e["kind"], "config");
    EXPECT_EQ(e["path"], "system.gamma_GHz");
}

TEST(Cli, SolverFailureGivesErrorSummary) {
    fs::path const dir = scratch("fail");
    json j = small_config();
    j["system"] = {{"xi", 1.0}, {"pump_GHz", 0.05}};
    j["solver"] = {{"method", "integrator"}, {"max_steps", 3}};
    spit(dir / "fail.json", j.dump());
    CliRun const r = run_cli("steady --config " + (dir / "fail.json").string() + " --out " + (dir / "out").string(), dir);
    EXPECT_EQ(r.code, 1);
    json const e = json::parse(r.err);
    EXPECT_EQ(e["status"], "error");
    ASSERT_EQ(e["failures"].size(), 1u);
    EXPECT_TRUE(fs::exists(dir / "out" / "manifest.json"));
}

TEST(Cli, ManifestRerunReproducesOutputs) {
    fs::path const dir = scratch("rerun");
    json j = small_config();
    j["system"] = {{"xi", 2.0}, {"pump_GHz", 0.05}};
    spit(dir / "steady.json", j.dump());
    ASSERT_EQ(run_cli("steady --config " + (dir / "steady.json").string() + " --out " + (dir / "a").string(), dir).code, 0);
    ASSERT_EQ(run_cli("steady --config " + (dir / "a" / "manifest.json").string() + " --out " + (dir / "b").string(), dir)
                  .code,
              0);
    EXPECT_EQ(slurp(dir / "a" / "steady_state.csv"), slurp(dir / "b" / "steady_state.csv"));
    EXPECT_EQ(slurp(dir / "a" / "fraction_slice.csv"), slurp(dir / "b" / "fraction_slice.csv"));
}

TEST(Cli, TabulatedSpectraAreResolvedAgainstTheConfigFile) {
    fs::path const dir = scratch("tab");
    {
        std::ofstream out(dir / "band.csv");
        write_spectra_csv(out, make_band_dye_table());
    }
    json j = small_config();
    j["dye"] = {{"source", "tabulated"}, {"spectra_path", "band.csv"}, {"thermo", {{"zero_phonon_THz", 527.5}}}};
    j["system"] = {{"xi", 1.0}, {"pump_GHz", 0.01}};
    spit(dir / "tab.json", j.dump());
    CliRun const r = run_cli("steady --config " + (dir / "tab.json").string() + " --out " + (dir / "out").string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    json const m = json::parse(slurp(dir / "out" / "manifest.json"));
    EXPECT_EQ(m["provenance"]["dye"]["spectra_sha256"], sha256_hex(slurp(dir / "band.csv")));
}

TEST(Cli, PumpSweepAtXi20SelectsGroundThenHigherQuanta) {
    fs::path const dir = scratch("sweep20");
    spit(dir / "s.json", R"({"system": {"xi": 20.1},
        "pump_sweep": {"pump": {"min": 0.5, "max": 1000, "count": 60}, "cold_checkpoints": 2}})");
    CliRun const r = run_cli("pump-sweep --config " + (dir / "s.json").string() + " --out " + (dir / "out").string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    auto const events = read_csv(dir / "out" / "selection_events.csv");
    ASSERT_GE(events.size(), 3u);
    EXPECT_EQ(events[1][1] + ":" + events[1][2], "0:0");
    EXPECT_EQ(events[1][4], "selected");
    int const quanta = std::stoi(events[2][1]) + std::stoi(events[2][2]);
    EXPECT_EQ(events[2][4], "selected");
    EXPECT_GE(quanta, 2);
    for (std::size_t k = 1; k < events.size(); ++k) {
        std::string const mode = events[k][1] + ":" + events[k][2];
        if (k <= 2) EXPECT_TRUE(mode != "1:0" && mode != "0:1");
    }
}

TEST(Cli, ThermalCheckAtHighXiRecoversBeta) {
    fs::path const dir = scratch("thermal");
    spit(dir / "t.json", R"({"system": {"xi": 1000}})");
    CliRun const r = run_cli("thermal-check --config " + (dir / "t.json").string() + " --out " + (dir / "out").string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    auto const rows = read_csv(dir / "out" / "thermal_summary.csv");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0][4], "beta_ratio");
    EXPECT_NEAR(std::stod(rows[1][4]), 1.0, 0.03);
}
