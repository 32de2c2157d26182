#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dyecav/analysis.hpp"
#include "dyecav/config.hpp"
#include "dyecav/manifest.hpp"
#include "dyecav/sweep.hpp"

namespace dyecav {

/// What a subcommand hands back to the shell: exit code 0 iff every cell converged,
/// plus a machine-readable summary.
struct CommandResult {
    int exit_code = 0;
    json summary;
};

namespace detail {

class OutputDir {
  public:
    OutputDir(std::filesystem::path dir, RunManifest& manifest) : dir_(std::move(dir)), manifest_(manifest) {
        std::filesystem::create_directories(dir_);
    }

    template <class Fn>
    void write(std::string const& name, Fn&& fn) {
        std::ostringstream os;
        fn(os);
        std::string const text = os.str();
        std::ofstream out(dir_ / name, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
        out << text;
        manifest_.outputs.emplace_back(name, sha256_hex(text));
    }

    void finish(std::chrono::steady_clock::time_point start) {
        manifest_.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::ofstream out(dir_ / "manifest.json");
        out << manifest_.to_json().dump(2) << '\n';
    }

    std::filesystem::path const& path() const { return dir_; }

  private:
    std::filesystem::path dir_;
    RunManifest& manifest_;
};

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline std::string labels(ModeBasis const& basis, std::vector<int> const& modes) {
    std::string s;
    for (int i : modes) s += (s.empty() ? "" : ";") + basis.label(i);
    return s;
}

inline double pump_scale(RunConfig const& c, double gamma) { return c.output.report_p_over_gamma ? 1.0 / gamma : 1.0; }

inline CommandResult finish_command(RunManifest& m, OutputDir& out, std::chrono::steady_clock::time_point start,
                                    json results = json::object()) {
    out.finish(start);
    CommandResult r;
    r.exit_code = m.all_converged ? 0 : 1;
    r.summary = {{"status", m.all_converged ? "ok" : "error"},
                 {"command", m.command},
                 {"output", out.path().string()},
                 {"results", std::move(results)}};
    if (!m.all_converged) r.summary["failures"] = m.failures;
    return r;
}

inline void gnuplot_script(OutputDir& out, std::string const& name, std::string const& body) {
    out.write(name, [&](std::ostream& os) { os << "set datafile separator ','\nset key outside\n" << body; });
}

} // namespace detail

inline CommandResult cmd_thresholds(RunConfig const& c) {
    auto const start = std::chrono::steady_clock::now();
    auto const basis = build_basis(c);
    auto const dye = build_dye(c.dye);
    RunManifest m = make_manifest("thresholds", c, *basis);
    detail::OutputDir out(c.output.directory, m);
    ThresholdReport const r = threshold_surface(c.thresholds.xi.values(), *basis, *dye, c.system.cutoff_thz,
                                                c.system.gamma_ghz, c.thresholds.group_tolerance);
    out.write("thresholds.csv", [&](std::ostream& os) { write_threshold_csv(os, r, *basis, c.output.report_p_over_gamma); });
    out.write("threshold_argmin.csv", [&](std::ostream& os) { write_argmin_csv(os, r, *basis, c.output.report_p_over_gamma); });
    if (c.output.gnuplot)
        detail::gnuplot_script(out, "threshold_argmin.gp",
                               "set logscale xy\nset xlabel 'xi'\nset ylabel 'P_th'\n"
                               "plot 'threshold_argmin.csv' every ::1 using 1:5 with linespoints title 'min P_th'\n");
    return detail::finish_command(m, out, start, {{"columns", r.columns.size()}, {"modes", basis->size()}});
}

inline CommandResult cmd_steady(RunConfig const& c) {
    auto const start = std::chrono::steady_clock::now();
    auto const basis = build_basis(c);
    auto const dye = build_dye(c.dye);
    SystemParams const p = build_system(c, basis, dye);
    RunManifest m = make_manifest("steady", c, *basis);
    detail::OutputDir out(c.output.directory, m);
    json results;
    try {
        SteadyState const s = solve_point(p, c.solver);
        m.cells.push_back({"P=" + detail::fmt(p.pump_ghz), s.info.wall_seconds, s.info.method, true});
        out.write("steady_state.csv", [&](std::ostream& os) { write_steady_state_csv(os, s, *basis); });
        out.write("fraction_slice.csv", [&](std::ostream& os) { write_fraction_slice_csv(os, fraction_slice_x(s, p)); });
        results = {{"P_GHz", p.pump_ghz},
                   {"xi", p.xi},
                   {"kappa_GHz", p.kappa_ghz},
                   {"selected", selected_labels(s, *basis)},
                   {"residual", s.residual.max()},
                   {"balance_residual", s.balance_residual},
                   {"max_f", s.max_fraction()},
                   {"method", s.info.method}};
    } catch (std::exception const& e) {
        m.all_converged = false;
        m.failures.push_back({{"P_GHz", p.pump_ghz}, {"error", e.what()}});
        m.cells.push_back({"P=" + detail::fmt(p.pump_ghz), 0.0, "", false});
    }
    return detail::finish_command(m, out, start, results);
}

inline CommandResult cmd_pump_sweep(RunConfig const& c) {
    auto const start = std::chrono::steady_clock::now();
    auto const basis = build_basis(c);
    auto const dye = build_dye(c.dye);
    SystemParams const p = build_system(c, basis, dye);
    RunManifest m = make_manifest("pump-sweep", c, *basis);
    detail::OutputDir out(c.output.directory, m);

    double const unit = c.pump_sweep.relative_to_threshold ? detail::lowest_first_threshold(p) : 1.0;
    if (!std::isfinite(unit)) throw ConfigError("pump_sweep.relative_to_threshold", "no mode ever reaches threshold");
    PumpSweepSpec spec;
    spec.params = p;
    for (double v : c.pump_sweep.pump.values()) spec.pumps.push_back(v * unit);
    for (double v : c.pump_sweep.slice_pumps) spec.slice_pumps.push_back(v * unit);
    spec.solver = c.solver;
    spec.cold_checkpoints = c.pump_sweep.cold_checkpoints;
    spec.workers = c.workers;
    SweepResult const r = run_pump_sweep(spec);

    double const scale = detail::pump_scale(c, p.gamma_ghz);
    out.write("populations.csv", [&](std::ostream& os) { write_populations_csv(os, r, *basis, scale); });
    out.write("gains.csv", [&](std::ostream& os) { write_gains_csv(os, r, *basis, scale); });
    out.write("selection_events.csv", [&](std::ostream& os) { write_trace_csv(os, r.trace, *basis, scale); });
    out.write("fraction_slices.csv", [&](std::ostream& os) {
        os << "P,x_over_d,f\n";
        for (auto const& sl : r.slices)
            for (auto const& [x, f] : sl.values) os << detail::fmt(sl.pump_ghz * scale) << ',' << detail::fmt(x) << ',' << detail::fmt(f) << '\n';
    });
    out.write("cold_checks.csv", [&](std::ostream& os) {
        os << "P,converged,same_selected_set,max_relative_dn\n";
        for (auto const& ck : r.checks)
            os << detail::fmt(ck.pump_ghz * scale) << ',' << ck.converged << ',' << ck.same_set << ','
               << detail::fmt(ck.max_relative_dn) << '\n';
    });
    if (c.output.gnuplot) {
        std::string body = "set logscale xy\nset xlabel 'P'\nset ylabel 'n'\nplot ";
        for (int i = 0; i < std::min(basis->size(), 10); ++i)
            body += (i ? ", " : "") + std::string("'populations.csv' every ::1 using 1:") + std::to_string(i + 2) +
                    " with lines title '" + basis->label(i) + "'";
        detail::gnuplot_script(out, "populations.gp", body + "\n");
    }
    for (auto const& pt : r.points) {
        m.cells.push_back({"P=" + detail::fmt(pt.pump_ghz), pt.wall_seconds, pt.method, pt.converged});
        if (!pt.converged) {
            m.all_converged = false;
            m.failures.push_back({{"P_GHz", pt.pump_ghz}, {"error", pt.error}});
        }
    }
    for (auto const& ck : r.checks)
        if (!ck.converged) {
            m.all_converged = false;
            m.failures.push_back({{"P_GHz", ck.pump_ghz}, {"error", "cold-start checkpoint did not converge"}});
        }
    json events = json::array();
    for (auto const& e : r.trace.events)
        events.push_back({{"P_GHz", e.pump_ghz}, {"mode", basis->label(e.mode)}, {"event", to_string(e.kind)}});
    return detail::finish_command(m, out, start, {{"points", r.points.size()}, {"events", events}});
}

inline CommandResult cmd_phase_diagram(RunConfig const& c) {
    auto const start = std::chrono::steady_clock::now();
    auto const basis = build_basis(c);
    auto const dye = build_dye(c.dye);
    RunManifest m = make_manifest("phase-diagram", c, *basis);
    detail::OutputDir out(c.output.directory, m);
    PhaseDiagramSpec spec;
    spec.basis = basis;
    spec.dye = dye;
    spec.cutoff_thz = c.system.cutoff_thz;
    spec.gamma_ghz = c.system.gamma_ghz;
    spec.xi = c.phase_diagram.xi;
    spec.pump = c.phase_diagram.pump;
    spec.bisection_rtol = c.phase_diagram.bisection_rtol;
    spec.solver = c.solver;
    spec.workers = c.workers;
    PhaseDiagram const d = run_phase_diagram(spec);
    PhaseBoundaries const b = extract_phase_boundaries(d);

    double const scale = detail::pump_scale(c, c.system.gamma_ghz);
    out.write("phase_cells.csv", [&](std::ostream& os) { write_phase_cells_csv(os, d, *basis, scale); });
    out.write("phase_boundaries.csv", [&](std::ostream& os) { write_boundaries_csv(os, b, scale); });
    out.write("phase_columns.csv", [&](std::ostream& os) {
        os << "xi,kappa_GHz,analytic_first_P,analytic_argmin,first_P,first_selected,second_P,second_selected\n";
        double const nan = std::numeric_limits<double>::quiet_NaN();
        for (auto const& col : d.columns)
            os << detail::fmt(col.xi) << ',' << detail::fmt(col.kappa_ghz) << ',' << detail::fmt(col.analytic_first * scale)
               << ',' << (col.analytic_argmin >= 0 ? basis->label(col.analytic_argmin) : "") << ','
               << detail::fmt(col.first.found ? col.first.estimate() * scale : nan) << ','
               << detail::labels(*basis, col.first.set_at_high) << ','
               << detail::fmt(col.second.found ? col.second.estimate() * scale : nan) << ','
               << detail::labels(*basis, col.second.set_at_high) << '\n';
    });
    if (c.output.gnuplot)
        detail::gnuplot_script(out, "phase_diagram.gp",
                               "set logscale xy\nset xlabel 'xi'\nset ylabel 'P'\n"
                               "plot 'phase_boundaries.csv' every ::1 using 1:2 with linespoints title 'first selection', "
                               "'phase_boundaries.csv' every ::1 using 1:3 with linespoints title 'second selection', "
                               "'phase_boundaries.csv' every ::1 using 1:4 with lines title 'analytic'\n");
    for (auto const& col : d.columns)
        for (auto const& cell : col.cells) {
            m.cells.push_back({"xi=" + detail::fmt(cell.xi) + ",P=" + detail::fmt(cell.pump_ghz), cell.wall_seconds,
                               cell.method, cell.converged});
            if (!cell.converged) {
                m.all_converged = false;
                m.failures.push_back({{"xi", cell.xi}, {"P_GHz", cell.pump_ghz}, {"error", "unresolved cell"}});
            }
        }
    json results = {{"columns", d.columns.size()}};
    results["merge_xi"] = b.merge_xi ? json(*b.merge_xi) : json(nullptr);
    results["merge_P_GHz"] = b.merge_pump ? json(*b.merge_pump) : json(nullptr);
    return detail::finish_command(m, out, start, results);
}

inline CommandResult cmd_cutoff_scan(RunConfig const& c) {
    auto const start = std::chrono::steady_clock::now();
    auto const basis = build_basis(c);
    auto const dye = build_dye(c.dye);
    RunManifest m = make_manifest("cutoff-scan", c, *basis);
    detail::OutputDir out(c.output.directory, m);
    CutoffScanSpec spec;
    spec.basis = basis;
    spec.dye = dye;
    spec.cutoffs_thz = c.cutoff_scan.cutoffs;
    spec.xi = c.cutoff_scan.xi;
    spec.gamma_ghz = c.system.gamma_ghz;
    spec.pump_low_factor = c.cutoff_scan.pump_low_factor;
    spec.pump_high_factor = c.cutoff_scan.pump_high_factor;
    spec.points = c.cutoff_scan.points;
    spec.extension = c.cutoff_scan.extension;
    spec.extension_points = c.cutoff_scan.extension_points;
    spec.bisection_rtol = c.cutoff_scan.bisection_rtol;
    spec.saturation_margin = c.cutoff_scan.saturation_margin;
    spec.solver = c.solver;
    spec.workers = c.workers;
    auto const results = run_cutoff_scan(spec);

    double const scale = detail::pump_scale(c, c.system.gamma_ghz);
    out.write("cutoff_summary.csv", [&](std::ostream& os) { write_cutoff_summary_csv(os, results, *basis, scale); });
    json summary = json::array();
    for (auto const& r : results) {
        std::string const tag = "cutoff_" + detail::fmt(r.cutoff_thz);
        SweepResult sweep;
        sweep.points = r.points;
        sweep.trace = r.trace;
        out.write(tag + "_populations.csv", [&](std::ostream& os) { write_populations_csv(os, sweep, *basis, scale); });
        out.write(tag + "_events.csv", [&](std::ostream& os) { write_trace_csv(os, r.trace, *basis, scale); });
        if (!r.error.empty()) {
            m.all_converged = false;
            m.failures.push_back({{"cutoff_THz", r.cutoff_thz}, {"error", r.error}});
        }
        for (auto const& pt : r.points) {
            m.cells.push_back({"cutoff=" + detail::fmt(r.cutoff_thz) + ",P=" + detail::fmt(pt.pump_ghz), pt.wall_seconds,
                               pt.method, pt.converged});
            if (!pt.converged) {
                m.all_converged = false;
                m.failures.push_back({{"cutoff_THz", r.cutoff_thz}, {"P_GHz", pt.pump_ghz}, {"error", pt.error}});
            }
        }
        summary.push_back({{"cutoff_THz", r.cutoff_thz},
                           {"first_selected", detail::labels(*basis, r.first.set_at_high)},
                           {"second_selected", detail::labels(*basis, r.second.set_at_high)},
                           {"saturation_before_second", r.saturation_before_second}});
    }
    return detail::finish_command(m, out, start, summary);
}

inline CommandResult cmd_thermal_check(RunConfig const& c) {
    auto const start = std::chrono::steady_clock::now();
    auto const basis = build_basis(c);
    auto const dye = build_dye(c.dye);
    SystemParams const base = build_system(c, basis, dye);
    RunManifest m = make_manifest("thermal-check", c, *basis);
    detail::OutputDir out(c.output.directory, m);
    double const pth = detail::lowest_first_threshold(base);
    if (!std::isfinite(pth)) throw ConfigError("system", "no mode ever reaches threshold");
    SystemParams const p = base.with_pump(c.thermal_check.pump_factor * pth);
    json results;
    try {
        SteadyState const s = solve_point(p, c.solver);
        m.cells.push_back({"P=" + detail::fmt(p.pump_ghz), s.info.wall_seconds, s.info.method, true});
        ThermalFit const fit = thermal_compare(s, p, c.thermal_check.min_occupation);
        double const negative = top_quartile_negative_fraction(fit);
        out.write("thermal_fit.csv", [&](std::ostream& os) { write_thermal_csv(os, fit); });
        out.write("thermal_summary.csv", [&](std::ostream& os) {
            os << "xi,P,beta_reference_per_THz,beta_fit_per_THz,beta_ratio,mu_fit_THz,mu_thermal_THz,fitted_modes,"
                  "top_quartile_negative_fraction,selected_modes\n";
            os << detail::fmt(p.xi) << ',' << detail::fmt(p.pump_ghz * detail::pump_scale(c, p.gamma_ghz)) << ','
               << detail::fmt(fit.beta_reference) << ',' << detail::fmt(fit.slope) << ',' << detail::fmt(fit.beta_ratio)
               << ',' << detail::fmt(fit.mu_thz) << ',' << detail::fmt(fit.mu_thermal_thz) << ',' << fit.modes.size()
               << ',' << detail::fmt(negative) << ',' << selected_labels(s, *basis) << '\n';
        });
        if (c.output.gnuplot)
            detail::gnuplot_script(out, "thermal_fit.gp",
                                   "set xlabel 'nu (THz)'\nset ylabel 'ln(1+1/n)'\n"
                                   "plot 'thermal_fit.csv' every ::1 using 1:3 with points title 'modes', "
                                   "'' every ::1 using 1:4 with lines title 'fit', "
                                   "'' every ::1 using 1:5 with lines title 'thermal'\n");
        results = {{"P_GHz", p.pump_ghz},
                   {"beta_ratio", fit.beta_ratio},
                   {"top_quartile_negative_fraction", negative},
                   {"selected", selected_labels(s, *basis)}};
    } catch (std::exception const& e) {
        m.all_converged = false;
        m.failures.push_back({{"P_GHz", p.pump_ghz}, {"error", e.what()}});
    }
    return detail::finish_command(m, out, start, results);
}

} // namespace dyecav
