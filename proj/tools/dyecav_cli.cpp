#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "dyecav.hpp"

namespace {

void print_error(char const* kind, std::string const& message, std::string const& path = {}) {
    dyecav::json j = {{"status", "error"}, {"kind", kind}, {"message", message}};
    if (!path.empty()) j["path"] = path;
    std::cerr << j.dump() << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dye-filled optical microcavity: mode selection under homogeneous pumping"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    unsigned workers = 0;
    bool p_over_gamma = false;

    using Command = std::function<dyecav::CommandResult(dyecav::RunConfig const&)>;
    std::map<CLI::App*, Command> commands;
    auto add = [&](char const* name, char const* help, Command fn) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "JSON config file or run manifest")->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory (overrides output.directory)");
        sub->add_option("--workers", workers, "worker threads, 0 = all cores (overrides workers)");
        sub->add_flag("--report-p-over-gamma", p_over_gamma, "report pump rates as P/Gamma");
        commands[sub] = std::move(fn);
    };
    add("thresholds", "analytic first-threshold table and argmin curve", dyecav::cmd_thresholds);
    add("pump-sweep", "warm-started steady states along P", dyecav::cmd_pump_sweep);
    add("phase-diagram", "(P, xi) phase diagram with bisected boundaries", dyecav::cmd_phase_diagram);
    add("cutoff-scan", "pump sweeps at several cutoff frequencies", dyecav::cmd_cutoff_scan);
    add("thermal-check", "compare a steady state with the thermal distribution", dyecav::cmd_thermal_check);
    add("steady", "single steady-state solve", dyecav::cmd_steady);

    try {
        app.parse(argc, argv);
    } catch (CLI::ParseError const& e) {
        return app.exit(e);
    }

    dyecav::RunConfig config;
    try {
        if (!config_path.empty()) config = dyecav::load_config(config_path);
        if (!out_dir.empty()) config.output.directory = out_dir;
        if (app.get_subcommands().front()->count("--workers")) config.workers = workers;
        if (p_over_gamma) config.output.report_p_over_gamma = true;
    } catch (dyecav::ConfigError const& e) {
        print_error("config", e.what(), e.path());
        return 2;
    }

    try {
        dyecav::CommandResult const r = commands.at(app.get_subcommands().front())(config);
        (r.exit_code == 0 ? std::cout : std::cerr) << r.summary.dump() << '\n';
        return r.exit_code;
    } catch (dyecav::ConfigError const& e) {
        print_error("config", e.what(), e.path());
        return 2;
    } catch (dyecav::DyeWindowError const& e) {
        print_error("dye_window", e.what());
        return 3;
    } catch (std::exception const& e) {
        print_error("runtime", e.what());
        return 4;
    }
}
