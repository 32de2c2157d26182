#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dyecav/dye_model.hpp"
#include "dyecav/mode_basis.hpp"
#include "dyecav/sweep.hpp"
#include "dyecav/system.hpp"
#include "dyecav/units.hpp"

namespace dyecav {

using json = nlohmann::json;

/// Validation failure at a field path such as "phase_diagram.xi.count".
class ConfigError : public std::invalid_argument {
  public:
    ConfigError(std::string path, std::string const& message)
        : std::invalid_argument(path + ": " + message), path_(std::move(path)) {}
    std::string const& path() const { return path_; }

  private:
    std::string path_;
};

// ---------------------------------------------------------------------------
// sections

struct GridConfig {
    double half_width = 8.0;
    int points = 256;
};

struct DyeConfig {
    enum class Source { surrogate, tabulated, band };
    Source source = Source::surrogate;
    double density_per_d2 = 1e8;
    double temperature_k = units::room_temperature_k;
    // surrogate
    double absorption_at_anchor_khz = 1.0;  // kHz d^2
    double anchor_thz = 515.0;
    double log_slope_per_thz = 0.2;
    double zero_phonon_thz = 545.0;
    double ks_constant = 1.0;
    // tabulated
    std::string spectra_path;
    // band
    BandDyeParams band;
};

struct SystemConfig {
    double cutoff_thz = 515.0;
    double gamma_ghz = 0.2;
    double xi = 1.0;
    std::optional<double> kappa_ghz;  // overrides xi when set
    double pump_ghz = 0.0;
};

struct ThresholdsConfig {
    Axis xi{Axis::Scale::log, 0.01, 100.0, 41};
    double group_tolerance = 1e-2;
};

struct PumpSweepConfig {
    Axis pump{Axis::Scale::log, 0.5, 20.0, 60};
    bool relative_to_threshold = true;  // pump axis in units of min_i P_i^th
    std::vector<double> slice_pumps;    // same units as the axis
    int cold_checkpoints = 10;
};

struct PhaseDiagramConfig {
    Axis xi{Axis::Scale::log, 0.01, 100.0, 40};
    Axis pump{Axis::Scale::log, 5e-4, 5.0, 28};
    double bisection_rtol = 1e-3;
};

struct CutoffScanConfig {
    std::vector<double> cutoffs{490.0, 515.0, 525.0};
    double xi = 1.0;
    double pump_low_factor = 0.5;
    double pump_high_factor = 20.0;
    int points = 60;
    double extension = 100.0;
    int extension_points = 60;
    double bisection_rtol = 1e-3;
    double saturation_margin = 1e-3;
};

struct ThermalCheckConfig {
    double pump_factor = 1.05;   // P = pump_factor * min_i P_i^th at system.xi
    double min_occupation = 1e-6;
};

struct OutputConfig {
    std::string directory = "out";
    bool report_p_over_gamma = false;
    bool gnuplot = false;
};

struct RunConfig {
    TrapConfig trap;
    GridConfig grid;
    DyeConfig dye;
    SystemConfig system;
    SolverSettings solver;
    ThresholdsConfig thresholds;
    PumpSweepConfig pump_sweep;
    PhaseDiagramConfig phase_diagram;
    CutoffScanConfig cutoff_scan;
    ThermalCheckConfig thermal_check;
    OutputConfig output;
    unsigned workers = 0;  // 0 = hardware concurrency
};

// ---------------------------------------------------------------------------
// reading

namespace detail {

// Reads the keys of one object, remembering which were consumed.
class Section {
  public:
    Section(json const& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string child(std::string const& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(std::string const& key) const { return j_.contains(key); }

    json const* raw(std::string const& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void number(std::string const& key, double& out) {
        if (auto const* v = raw(key)) {
            if (!v->is_number()) throw ConfigError(child(key), "expected a number");
            out = v->get<double>();
            if (!std::isfinite(out)) throw ConfigError(child(key), "must be finite");
        }
    }
    void integer(std::string const& key, int& out) {
        if (auto const* v = raw(key)) {
            if (!v->is_number_integer()) throw ConfigError(child(key), "expected an integer");
            out = v->get<int>();
        }
    }
    void boolean(std::string const& key, bool& out) {
        if (auto const* v = raw(key)) {
            if (!v->is_boolean()) throw ConfigError(child(key), "expected true or false");
            out = v->get<bool>();
        }
    }
    void string(std::string const& key, std::string& out) {
        if (auto const* v = raw(key)) {
            if (!v->is_string()) throw ConfigError(child(key), "expected a string");
            out = v->get<std::string>();
        }
    }
    void numbers(std::string const& key, std::vector<double>& out) {
        if (auto const* v = raw(key)) {
            if (!v->is_array()) throw ConfigError(child(key), "expected an array of numbers");
            out.clear();
            for (std::size_t k = 0; k < v->size(); ++k) {
                if (!(*v)[k].is_number()) throw ConfigError(child(key) + "[" + std::to_string(k) + "]", "expected a number");
                out.push_back((*v)[k].get<double>());
            }
        }
    }
    template <class Fn>
    void object(std::string const& key, Fn&& fn) {
        if (auto const* v = raw(key)) {
            Section s(*v, child(key));
            fn(s);
            s.finish();
        }
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(child(it.key()), "unknown key");
    }

    std::string const& path() const { return path_; }

  private:
    json const& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline void read_axis(Section& s, std::string const& key, Axis& axis) {
    s.object(key, [&](Section& a) {
        std::string scale = axis.scale == Axis::Scale::log ? "log" : "linear";
        a.string("scale", scale);
        if (scale == "log")
            axis.scale = Axis::Scale::log;
        else if (scale == "linear")
            axis.scale = Axis::Scale::linear;
        else
            throw ConfigError(a.child("scale"), "expected \"log\" or \"linear\"");
        a.number("min", axis.min);
        a.number("max", axis.max);
        a.integer("count", axis.count);
    });
    try {
        axis.validate(s.child(key));
    } catch (std::invalid_argument const& e) {
        std::string const msg = e.what();
        throw ConfigError(s.child(key), msg.substr(msg.find(": ") + 2));
    }
}

inline void require(bool ok, std::string const& path, char const* message) {
    if (!ok) throw ConfigError(path, message);
}

inline json axis_json(Axis const& a) {
    return {{"scale", a.scale == Axis::Scale::log ? "log" : "linear"}, {"min", a.min}, {"max", a.max}, {"count", a.count}};
}

} // namespace detail

/// Builds a RunConfig from JSON. A run manifest is accepted too (its "config" member is
/// used). Every key is checked; unknown keys and bad values raise ConfigError with the path.
/// Relative spectra paths are resolved against `base_dir`.
inline RunConfig config_from_json(json const& root, std::filesystem::path const& base_dir = {}) {
    json const& j = (root.is_object() && root.contains("config") && root.contains("provenance")) ? root["config"] : root;
    RunConfig c;
    detail::Section top(j, "");
    using detail::require;
    using detail::Section;

    top.object("trap", [&](Section& s) {
        s.number("frequency_THz", c.trap.frequency_thz);
        s.number("anisotropy", c.trap.anisotropy);
        s.integer("max_quanta", c.trap.max_quanta);
        require(c.trap.frequency_thz > 0.0, s.child("frequency_THz"), "must be positive");
        require(c.trap.anisotropy > 0.0 && c.trap.anisotropy <= 1.0, s.child("anisotropy"), "must lie in (0, 1]");
        require(c.trap.max_quanta >= 0 && c.trap.max_quanta <= 60, s.child("max_quanta"), "must lie in [0, 60]");
    });
    top.object("grid", [&](Section& s) {
        s.number("half_width", c.grid.half_width);
        s.integer("points", c.grid.points);
        require(c.grid.half_width > 0.0, s.child("half_width"), "must be positive");
        require(c.grid.points >= 3, s.child("points"), "must be >= 3");
    });
    top.object("dye", [&](Section& s) {
        std::string source = "surrogate";
        s.string("source", source);
        if (source == "surrogate")
            c.dye.source = DyeConfig::Source::surrogate;
        else if (source == "tabulated")
            c.dye.source = DyeConfig::Source::tabulated;
        else if (source == "band")
            c.dye.source = DyeConfig::Source::band;
        else
            throw ConfigError(s.child("source"), "expected \"surrogate\", \"tabulated\" or \"band\"");
        s.number("density_per_d2", c.dye.density_per_d2);
        s.number("temperature_K", c.dye.temperature_k);
        require(c.dye.density_per_d2 > 0.0, s.child("density_per_d2"), "must be positive");
        require(c.dye.temperature_k > 0.0, s.child("temperature_K"), "must be positive");
        s.object("surrogate", [&](Section& t) {
            t.number("absorption_at_anchor_kHz_d2", c.dye.absorption_at_anchor_khz);
            t.number("anchor_THz", c.dye.anchor_thz);
            t.number("log_slope_per_THz", c.dye.log_slope_per_thz);
            t.number("zero_phonon_THz", c.dye.zero_phonon_thz);
            t.number("ks_constant", c.dye.ks_constant);
            require(c.dye.absorption_at_anchor_khz > 0.0, t.child("absorption_at_anchor_kHz_d2"), "must be positive");
            require(c.dye.ks_constant > 0.0, t.child("ks_constant"), "must be positive");
        });
        s.string("spectra_path", c.dye.spectra_path);
        s.object("thermo", [&](Section& t) {
            t.number("zero_phonon_THz", c.dye.zero_phonon_thz);
            t.number("ks_constant", c.dye.ks_constant);
            require(c.dye.ks_constant > 0.0, t.child("ks_constant"), "must be positive");
        });
        s.object("band", [&](Section& t) {
            auto& b = c.dye.band;
            double absorption_khz = b.absorption_at_anchor / units::ghz_per_khz;
            t.number("absorption_peak_THz", b.absorption_peak_thz);
            t.number("band_width_THz", b.band_width_thz);
            t.number("absorption_at_anchor_kHz_d2", absorption_khz);
            t.number("anchor_THz", b.anchor_thz);
            t.number("ks_edge_THz", b.ks_edge_thz);
            t.number("edge_width_THz", b.edge_width_thz);
            t.number("zero_phonon_THz", b.thermo.zero_phonon_thz);
            t.number("lo_THz", b.lo_thz);
            t.number("hi_THz", b.hi_thz);
            t.number("step_THz", b.step_thz);
            b.absorption_at_anchor = absorption_khz * units::ghz_per_khz;
            require(b.band_width_thz > 0.0, t.child("band_width_THz"), "must be positive");
            require(absorption_khz > 0.0, t.child("absorption_at_anchor_kHz_d2"), "must be positive");
            require(b.edge_width_thz > 0.0, t.child("edge_width_THz"), "must be positive");
            require(b.hi_thz > b.lo_thz, t.child("hi_THz"), "must exceed lo_THz");
            require(b.step_thz > 0.0, t.child("step_THz"), "must be positive");
        });
        if (c.dye.source == DyeConfig::Source::tabulated) {
            require(!c.dye.spectra_path.empty(), s.child("spectra_path"), "required for a tabulated dye");
            std::filesystem::path path(c.dye.spectra_path);
            if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
            c.dye.spectra_path = path.lexically_normal().string();
        }
    });
    top.object("system", [&](Section& s) {
        s.number("cutoff_THz", c.system.cutoff_thz);
        s.number("gamma_GHz", c.system.gamma_ghz);
        s.number("xi", c.system.xi);
        if (auto const* k = s.raw("kappa_GHz"); k && !k->is_null()) {
            if (!k->is_number()) throw ConfigError(s.child("kappa_GHz"), "expected a number or null");
            c.system.kappa_ghz = k->get<double>();
            require(*c.system.kappa_ghz > 0.0, s.child("kappa_GHz"), "must be positive");
        }
        s.number("pump_GHz", c.system.pump_ghz);
        require(c.system.gamma_ghz > 0.0, s.child("gamma_GHz"), "must be positive");
        require(c.system.xi > 0.0, s.child("xi"), "must be positive");
        require(c.system.pump_ghz >= 0.0, s.child("pump_GHz"), "must be >= 0");
    });
    top.object("solver", [&](Section& s) {
        std::string method = c.solver.method == SolverSettings::Method::integrator ? "integrator" : "self_consistent";
        s.string("method", method);
        if (method == "self_consistent")
            c.solver.method = SolverSettings::Method::self_consistent;
        else if (method == "integrator")
            c.solver.method = SolverSettings::Method::integrator;
        else
            throw ConfigError(s.child("method"), "expected \"self_consistent\" or \"integrator\"");
        auto& t = c.solver.tolerances;
        s.boolean("fallback_to_integrator", c.solver.fallback_to_integrator);
        s.number("residual", t.residual);
        s.integer("sustained_steps", t.sustained_steps);
        int max_steps = static_cast<int>(t.max_steps);
        s.integer("max_steps", max_steps);
        t.max_steps = max_steps;
        s.number("occupation_rtol", t.occupation_rtol);
        s.number("fraction_atol", t.fraction_atol);
        s.integer("max_iterations", t.max_iterations);
        s.integer("max_stages", t.max_stages);
        require(t.residual > 0.0, s.child("residual"), "must be positive");
        require(t.sustained_steps >= 1, s.child("sustained_steps"), "must be >= 1");
        require(t.max_steps >= 1, s.child("max_steps"), "must be >= 1");
        require(t.occupation_rtol > 0.0, s.child("occupation_rtol"), "must be positive");
        require(t.fraction_atol > 0.0, s.child("fraction_atol"), "must be positive");
        require(t.max_iterations >= 1, s.child("max_iterations"), "must be >= 1");
        require(t.max_stages >= 1, s.child("max_stages"), "must be >= 1");
    });
    top.object("selection", [&](Section& s) {
        s.number("min_occupation", c.solver.criteria.min_occupation);
        s.number("clamp_tolerance", c.solver.criteria.clamp_tolerance);
        require(c.solver.criteria.min_occupation > 0.0, s.child("min_occupation"), "must be positive");
        require(c.solver.criteria.clamp_tolerance > 0.0, s.child("clamp_tolerance"), "must be positive");
    });
    top.object("thresholds", [&](Section& s) {
        detail::read_axis(s, "xi", c.thresholds.xi);
        s.number("group_tolerance", c.thresholds.group_tolerance);
        require(c.thresholds.group_tolerance >= 0.0, s.child("group_tolerance"), "must be >= 0");
    });
    top.object("pump_sweep", [&](Section& s) {
        detail::read_axis(s, "pump", c.pump_sweep.pump);
        s.boolean("relative_to_threshold", c.pump_sweep.relative_to_threshold);
        s.numbers("slice_pumps", c.pump_sweep.slice_pumps);
        s.integer("cold_checkpoints", c.pump_sweep.cold_checkpoints);
        require(c.pump_sweep.pump.min >= 0.0, s.child("pump.min"), "must be >= 0");
        require(c.pump_sweep.cold_checkpoints >= 0, s.child("cold_checkpoints"), "must be >= 0");
        for (std::size_t k = 0; k < c.pump_sweep.slice_pumps.size(); ++k)
            require(c.pump_sweep.slice_pumps[k] > 0.0, s.child("slice_pumps[" + std::to_string(k) + "]"),
                    "must be positive");
    });
    top.object("phase_diagram", [&](Section& s) {
        detail::read_axis(s, "xi", c.phase_diagram.xi);
        detail::read_axis(s, "pump", c.phase_diagram.pump);
        s.number("bisection_rtol", c.phase_diagram.bisection_rtol);
        require(c.phase_diagram.xi.min > 0.0, s.child("xi.min"), "must be positive");
        require(c.phase_diagram.pump.min > 0.0, s.child("pump.min"), "must be positive");
        require(c.phase_diagram.bisection_rtol > 0.0, s.child("bisection_rtol"), "must be positive");
    });
    top.object("cutoff_scan", [&](Section& s) {
        auto& cs = c.cutoff_scan;
        s.numbers("cutoffs_THz", cs.cutoffs);
        s.number("xi", cs.xi);
        s.number("pump_low_factor", cs.pump_low_factor);
        s.number("pump_high_factor", cs.pump_high_factor);
        s.integer("points", cs.points);
        s.number("extension", cs.extension);
        s.integer("extension_points", cs.extension_points);
        s.number("bisection_rtol", cs.bisection_rtol);
        s.number("saturation_margin", cs.saturation_margin);
        require(!cs.cutoffs.empty(), s.child("cutoffs_THz"), "must not be empty");
        require(cs.xi > 0.0, s.child("xi"), "must be positive");
        require(cs.pump_low_factor > 0.0, s.child("pump_low_factor"), "must be positive");
        require(cs.pump_high_factor > cs.pump_low_factor, s.child("pump_high_factor"), "must exceed pump_low_factor");
        require(cs.points >= 2, s.child("points"), "must be >= 2");
        require(cs.extension >= 1.0, s.child("extension"), "must be >= 1");
        require(cs.extension_points >= 1, s.child("extension_points"), "must be >= 1");
        require(cs.bisection_rtol > 0.0, s.child("bisection_rtol"), "must be positive");
        require(cs.saturation_margin > 0.0 && cs.saturation_margin < 1.0, s.child("saturation_margin"),
                "must lie in (0, 1)");
    });
    top.object("thermal_check", [&](Section& s) {
        s.number("pump_factor", c.thermal_check.pump_factor);
        s.number("min_occupation", c.thermal_check.min_occupation);
        require(c.thermal_check.pump_factor > 0.0, s.child("pump_factor"), "must be positive");
        require(c.thermal_check.min_occupation >= 0.0, s.child("min_occupation"), "must be >= 0");
    });
    top.object("output", [&](Section& s) {
        s.string("directory", c.output.directory);
        s.boolean("report_p_over_gamma", c.output.report_p_over_gamma);
        s.boolean("gnuplot", c.output.gnuplot);
        require(!c.output.directory.empty(), s.child("directory"), "must not be empty");
    });
    if (auto const* w = top.raw("workers")) {
        if (!w->is_number_integer() || w->get<long long>() < 0) throw ConfigError("workers", "expected an integer >= 0");
        c.workers = static_cast<unsigned>(w->get<long long>());
    }
    top.finish();
    return c;
}

inline RunConfig load_config(std::filesystem::path const& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("<file>", "cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (json::parse_error const& e) {
        throw ConfigError("<file>", std::string("invalid JSON: ") + e.what());
    }
    return config_from_json(j, path.parent_path());
}

/// Complete snapshot; config_from_json(config_to_json(c)) == c field by field.
inline json config_to_json(RunConfig const& c) {
    using detail::axis_json;
    json j;
    j["trap"] = {{"frequency_THz", c.trap.frequency_thz}, {"anisotropy", c.trap.anisotropy},
                 {"max_quanta", c.trap.max_quanta}};
    j["grid"] = {{"half_width", c.grid.half_width}, {"points", c.grid.points}};
    char const* source = c.dye.source == DyeConfig::Source::surrogate ? "surrogate"
                         : c.dye.source == DyeConfig::Source::tabulated ? "tabulated"
                                                                        : "band";
    auto const& b = c.dye.band;
    j["dye"] = {
        {"source", source},
        {"density_per_d2", c.dye.density_per_d2},
        {"temperature_K", c.dye.temperature_k},
        {"surrogate",
         {{"absorption_at_anchor_kHz_d2", c.dye.absorption_at_anchor_khz},
          {"anchor_THz", c.dye.anchor_thz},
          {"log_slope_per_THz", c.dye.log_slope_per_thz},
          {"zero_phonon_THz", c.dye.zero_phonon_thz},
          {"ks_constant", c.dye.ks_constant}}},
        {"spectra_path", c.dye.spectra_path},
        {"band",
         {{"absorption_peak_THz", b.absorption_peak_thz},
          {"band_width_THz", b.band_width_thz},
          {"absorption_at_anchor_kHz_d2", b.absorption_at_anchor / units::ghz_per_khz},
          {"anchor_THz", b.anchor_thz},
          {"ks_edge_THz", b.ks_edge_thz},
          {"edge_width_THz", b.edge_width_thz},
          {"zero_phonon_THz", b.thermo.zero_phonon_thz},
          {"lo_THz", b.lo_thz},
          {"hi_THz", b.hi_thz},
          {"step_THz", b.step_thz}}},
    };
    j["system"] = {{"cutoff_THz", c.system.cutoff_thz},
                   {"gamma_GHz", c.system.gamma_ghz},
                   {"xi", c.system.xi},
                   {"kappa_GHz", c.system.kappa_ghz ? json(*c.system.kappa_ghz) : json(nullptr)},
                   {"pump_GHz", c.system.pump_ghz}};
    auto const& t = c.solver.tolerances;
    j["solver"] = {{"method", c.solver.method == SolverSettings::Method::integrator ? "integrator" : "self_consistent"},
                   {"fallback_to_integrator", c.solver.fallback_to_integrator},
                   {"residual", t.residual},
                   {"sustained_steps", t.sustained_steps},
                   {"max_steps", t.max_steps},
                   {"occupation_rtol", t.occupation_rtol},
                   {"fraction_atol", t.fraction_atol},
                   {"max_iterations", t.max_iterations},
                   {"max_stages", t.max_stages}};
    j["selection"] = {{"min_occupation", c.solver.criteria.min_occupation},
                      {"clamp_tolerance", c.solver.criteria.clamp_tolerance}};
    j["thresholds"] = {{"xi", axis_json(c.thresholds.xi)}, {"group_tolerance", c.thresholds.group_tolerance}};
    j["pump_sweep"] = {{"pump", axis_json(c.pump_sweep.pump)},
                       {"relative_to_threshold", c.pump_sweep.relative_to_threshold},
                       {"slice_pumps", c.pump_sweep.slice_pumps},
                       {"cold_checkpoints", c.pump_sweep.cold_checkpoints}};
    j["phase_diagram"] = {{"xi", axis_json(c.phase_diagram.xi)},
                          {"pump", axis_json(c.phase_diagram.pump)},
                          {"bisection_rtol", c.phase_diagram.bisection_rtol}};
    auto const& cs = c.cutoff_scan;
    j["cutoff_scan"] = {{"cutoffs_THz", cs.cutoffs},
                        {"xi", cs.xi},
                        {"pump_low_factor", cs.pump_low_factor},
                        {"pump_high_factor", cs.pump_high_factor},
                        {"points", cs.points},
                        {"extension", cs.extension},
                        {"extension_points", cs.extension_points},
                        {"bisection_rtol", cs.bisection_rtol},
                        {"saturation_margin", cs.saturation_margin}};
    j["thermal_check"] = {{"pump_factor", c.thermal_check.pump_factor},
                          {"min_occupation", c.thermal_check.min_occupation}};
    j["output"] = {{"directory", c.output.directory},
                   {"report_p_over_gamma", c.output.report_p_over_gamma},
                   {"gnuplot", c.output.gnuplot}};
    j["workers"] = c.workers;
    return j;
}

// ---------------------------------------------------------------------------
// building the model objects

inline DyeThermo thermo_of(DyeConfig const& d) {
    return {units::beta_per_thz(d.temperature_k), d.zero_phonon_thz, d.ks_constant};
}

inline std::vector<SpectrumRow> load_spectra(std::string const& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("dye.spectra_path", "cannot open " + path);
    return read_spectra_csv(in);
}

/// Band-dye rows for a config; the band's own temperature follows dye.temperature_K.
inline std::vector<SpectrumRow> band_rows(DyeConfig const& d) {
    BandDyeParams b = d.band;
    b.thermo.beta_per_thz = units::beta_per_thz(d.temperature_k);
    return make_band_dye_table(b);
}

inline std::shared_ptr<DyeModel const> build_dye(DyeConfig const& d) {
    switch (d.source) {
    case DyeConfig::Source::surrogate: {
        SurrogateParams s;
        s.absorption_at_anchor = d.absorption_at_anchor_khz * units::ghz_per_khz;
        s.anchor_thz = d.anchor_thz;
        s.log_slope_per_thz = d.log_slope_per_thz;
        s.thermo = thermo_of(d);
        return std::make_shared<DyeModel const>(DyeModel::surrogate(s, d.density_per_d2));
    }
    case DyeConfig::Source::tabulated:
        return std::make_shared<DyeModel const>(DyeModel::tabulated(load_spectra(d.spectra_path), thermo_of(d),
                                                                    d.density_per_d2));
    case DyeConfig::Source::band: {
        BandDyeParams b = d.band;
        b.thermo.beta_per_thz = units::beta_per_thz(d.temperature_k);
        return std::make_shared<DyeModel const>(DyeModel::tabulated(band_rows(d), b.thermo, d.density_per_d2));
    }
    }
    throw std::logic_error("unknown dye source");
}

inline std::shared_ptr<ModeBasis const> build_basis(RunConfig const& c) {
    return std::make_shared<ModeBasis const>(build_basis(c.trap, SpatialGrid(c.grid.half_width, c.grid.points)));
}

inline SystemParams build_system(RunConfig const& c, std::shared_ptr<ModeBasis const> basis,
                                 std::shared_ptr<DyeModel const> dye) {
    if (c.system.kappa_ghz)
        return SystemParams::from_kappa(std::move(basis), std::move(dye), c.system.cutoff_thz, *c.system.kappa_ghz,
                                        c.system.gamma_ghz, c.system.pump_ghz);
    return SystemParams::from_xi(std::move(basis), std::move(dye), c.system.cutoff_thz, c.system.xi,
                                 c.system.gamma_ghz, c.system.pump_ghz);
}

} // namespace dyecav
