#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "dyecav/analysis.hpp"
#include "dyecav/integrator.hpp"
#include "dyecav/self_consistent.hpp"
#include "dyecav/steady_state.hpp"
#include "dyecav/system.hpp"

namespace dyecav {

// ---------------------------------------------------------------------------
// grids

struct Axis {
    enum class Scale { linear, log };
    Scale scale = Scale::log;
    double min = 0.0;
    double max = 0.0;
    int count = 1;

    void validate(std::string const& name) const {
        if (count < 1) throw std::invalid_argument(name + ": count must be >= 1");
        if (!std::isfinite(min) || !std::isfinite(max)) throw std::invalid_argument(name + ": bounds must be finite");
        if (count > 1 && !(max > min)) throw std::invalid_argument(name + ": max must exceed min");
        if (scale == Scale::log && !(min > 0.0)) throw std::invalid_argument(name + ": log axis needs min > 0");
    }

    std::vector<double> values() const {
        std::vector<double> v(count);
        if (count == 1) {
            v[0] = min;
            return v;
        }
        for (int k = 0; k < count; ++k) {
            double const t = static_cast<double>(k) / (count - 1);
            v[k] = scale == Scale::log ? std::exp((1 - t) * std::log(min) + t * std::log(max)) : min + t * (max - min);
        }
        v.back() = max;
        return v;
    }
};

inline std::vector<double> log_grid(double lo, double hi, int count) { return Axis{Axis::Scale::log, lo, hi, count}.values(); }

// ---------------------------------------------------------------------------
// work pool

/// Runs fn(0..count-1) on up to `workers` threads (0 = hardware concurrency). Tasks are
/// claimed in index order; results must be written to per-index slots by the caller.
inline void parallel_for(std::size_t count, unsigned workers, std::function<void(std::size_t)> const& fn) {
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// single solves

struct SolverSettings {
    enum class Method { self_consistent, integrator };
    Method method = Method::self_consistent;
    bool fallback_to_integrator = true;
    SolverTolerances tolerances;
    SelectionCriteria criteria;
};

/// One steady state with the configured method; the self-consistent solver falls back to
/// the integrator (seeded from the warm occupations when available) if it gives up.
inline SteadyState solve_point(SystemParams const& p, SolverSettings const& s, WarmStart const* warm = nullptr) {
    auto integrate = [&] {
        if (warm && warm->n.size() == p.mode_count()) {
            SystemState const seed = stationary_state(warm->n, p);
            return evolve_to_steady(p, s.tolerances, s.criteria, &seed);
        }
        return evolve_to_steady(p, s.tolerances, s.criteria);
    };
    if (s.method == SolverSettings::Method::integrator) return integrate();
    try {
        return solve_self_consistent(p, s.tolerances, s.criteria, warm);
    } catch (ConvergenceError const&) {
        if (!s.fallback_to_integrator) throw;
        return integrate();
    }
}

inline double max_relative_difference(Eigen::VectorXd const& a, Eigen::VectorXd const& b, double floor = 1.0) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i)
        if (a[i] > floor || b[i] > floor) worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(a[i], b[i]));
    return worst;
}

// ---------------------------------------------------------------------------
// pump sweeps

struct PumpSweepSpec {
    SystemParams params;
    std::vector<double> pumps;        // strictly ascending, GHz
    SolverSettings solver;
    std::vector<double> slice_pumps;  // f(x) slices at the nearest sweep points
    int cold_checkpoints = 10;
    unsigned workers = 1;

    void validate() const {
        if (pumps.empty()) throw std::invalid_argument("pump sweep: empty pump axis");
        for (std::size_t k = 0; k < pumps.size(); ++k) {
            if (!(pumps[k] >= 0.0)) throw std::invalid_argument("pump sweep: pumps must be >= 0");
            if (k > 0 && !(pumps[k] > pumps[k - 1])) throw std::invalid_argument("pump sweep: pumps must ascend");
        }
    }
};

struct ColdCheck {
    double pump_ghz = 0.0;
    bool converged = false;
    bool same_set = false;
    double max_relative_dn = 0.0;  // over n_i > 1
};

struct FractionSlice {
    double pump_ghz;
    std::vector<std::pair<double, double>> values;
};

struct SweepResult {
    std::vector<PointSummary> points;
    SelectionTrace trace;
    std::vector<ColdCheck> checks;
    std::vector<FractionSlice> slices;

    bool all_converged() const {
        for (auto const& p : points)
            if (!p.converged) return false;
        for (auto const& c : checks)
            if (!c.converged) return false;
        return true;
    }
};

/// Evenly spread indices (at most `count`) including both ends.
inline std::vector<std::size_t> checkpoint_indices(std::size_t size, int count) {
    std::vector<std::size_t> out;
    if (size == 0 || count <= 0) return out;
    std::size_t const k = std::min<std::size_t>(size, static_cast<std::size_t>(count));
    for (std::size_t j = 0; j < k; ++j) {
        std::size_t const idx = k == 1 ? size - 1 : (j * (size - 1) + (k - 1) / 2) / (k - 1);
        if (out.empty() || out.back() != idx) out.push_back(idx);
    }
    return out;
}

/// Ascending warm-started chain; a failed point is recorded and the chain restarts cold.
inline SweepResult run_pump_sweep(PumpSweepSpec const& spec) {
    spec.validate();
    SweepResult r;
    std::optional<WarmStart> warm;
    std::vector<std::size_t> slice_at;
    for (double target : spec.slice_pumps) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < spec.pumps.size(); ++k)
            if (std::abs(std::log(spec.pumps[k] / target)) < std::abs(std::log(spec.pumps[best] / target))) best = k;
        slice_at.push_back(best);
    }
    for (std::size_t k = 0; k < spec.pumps.size(); ++k) {
        SystemParams const p = spec.params.with_pump(spec.pumps[k]);
        try {
            SteadyState const s = solve_point(p, spec.solver, warm ? &*warm : nullptr);
            r.points.push_back(PointSummary::from(s));
            warm = WarmStart{s.pump_ghz, s.state.n};
            if (std::find(slice_at.begin(), slice_at.end(), k) != slice_at.end())
                r.slices.push_back({s.pump_ghz, fraction_slice_x(s, p)});
        } catch (std::exception const& e) {
            r.points.push_back(PointSummary::failed(spec.pumps[k], e.what()));
            warm.reset();
        }
    }
    r.trace = trace_selection(r.points);

    auto const idx = checkpoint_indices(r.points.size(), spec.cold_checkpoints);
    r.checks.resize(idx.size());
    parallel_for(idx.size(), spec.workers, [&](std::size_t j) {
        PointSummary const& warm_point = r.points[idx[j]];
        ColdCheck& c = r.checks[j];
        c.pump_ghz = warm_point.pump_ghz;
        if (!warm_point.converged) return;
        try {
            SteadyState const cold = solve_point(spec.params.with_pump(c.pump_ghz), spec.solver);
            c.converged = true;
            c.same_set = cold.selected == warm_point.selected;
            c.max_relative_dn = max_relative_difference(cold.state.n, warm_point.n);
        } catch (std::exception const&) {
            c.converged = false;
        }
    });
    return r;
}

/// CSV: P,<one column per mode label>, values n_i
inline void write_populations_csv(std::ostream& os, SweepResult const& r, ModeBasis const& basis,
                                  double pump_scale = 1.0) {
    os << "P";
    for (int i = 0; i < basis.size(); ++i) os << ",n_" << basis[i].nu_x << '_' << basis[i].nu_y;
    os << ",converged\n";
    char buf[40];
    for (auto const& p : r.points) {
        std::snprintf(buf, sizeof buf, "%.12g", p.pump_ghz * pump_scale);
        os << buf;
        for (int i = 0; i < basis.size(); ++i) {
            std::snprintf(buf, sizeof buf, ",%.12g", p.converged ? p.n[i] : std::nan(""));
            os << buf;
        }
        os << ',' << (p.converged ? 1 : 0) << '\n';
    }
}

/// CSV: P,nu_x,nu_y,G,G_th (gain clamping plots)
inline void write_gains_csv(std::ostream& os, SweepResult const& r, ModeBasis const& basis, double pump_scale = 1.0) {
    os << "P,nu_x,nu_y,G,G_th\n";
    char line[160];
    for (auto const& p : r.points) {
        if (!p.converged) continue;
        for (int i = 0; i < basis.size(); ++i) {
            std::snprintf(line, sizeof line, "%.12g,%d,%d,%.12g,%.12g\n", p.pump_ghz * pump_scale, basis[i].nu_x,
                          basis[i].nu_y, p.gains[i], p.threshold_gains[i]);
            os << line;
        }
    }
}

// ---------------------------------------------------------------------------
// bisection on the number of selected modes

struct BisectionOutcome {
    TransitionBracket bracket;
    std::vector<PhaseCell> cells;
};

/// Shrinks [low, high] (low: fewer than k selected, high: at least k) until high/low - 1 <= rtol.
/// Every solve is warm-started from the current lower end.
inline BisectionOutcome bisect_selection(SystemParams const& p, SolverSettings const& solver, std::size_t k,
                                         double low, WarmStart low_state, double high, std::vector<int> high_set,
                                         double rtol) {
    BisectionOutcome out;
    out.bracket.found = true;
    out.bracket.resolved = true;
    while (high / low - 1.0 > rtol) {
        double const mid = std::sqrt(low * high);
        PhaseCell cell;
        cell.xi = p.xi;
        cell.pump_ghz = mid;
        cell.refinement = true;
        try {
            SteadyState const s = solve_point(p.with_pump(mid), solver, &low_state);
            cell.converged = true;
            cell.selected = s.selected;
            cell.max_fraction = s.max_fraction();
            cell.wall_seconds = s.info.wall_seconds;
            cell.method = s.info.method;
            if (s.selected.size() >= k) {
                high = mid;
                high_set = s.selected;
            } else {
                low = mid;
                low_state = WarmStart{mid, s.state.n};
            }
            out.cells.push_back(std::move(cell));
        } catch (std::exception const&) {
            out.cells.push_back(std::move(cell));
            out.bracket.resolved = false;
            break;
        }
    }
    out.bracket.low = low;
    out.bracket.high = high;
    out.bracket.set_at_high = std::move(high_set);
    return out;
}

// ---------------------------------------------------------------------------
// phase diagrams

struct PhaseDiagramSpec {
    std::shared_ptr<ModeBasis const> basis;
    std::shared_ptr<DyeModel const> dye;
    double cutoff_thz = 515.0;
    double gamma_ghz = 0.2;
    Axis xi{Axis::Scale::log, 0.01, 100.0, 40};
    Axis pump{Axis::Scale::log, 5e-4, 5.0, 28};
    double bisection_rtol = 1e-3;
    SolverSettings solver;
    unsigned workers = 0;
};

/// One xi column: warm-started coarse chain in P, then bisection of the first (>= 1) and
/// second (>= 2) selection brackets.
inline PhaseColumn solve_phase_column(SystemParams const& base, std::vector<double> const& pumps,
                                      SolverSettings const& solver, double rtol) {
    auto const start = std::chrono::steady_clock::now();
    PhaseColumn col;
    col.xi = base.xi;
    col.kappa_ghz = base.kappa_ghz;
    col.analytic_first = std::numeric_limits<double>::infinity();
    for (int i = 0; i < base.mode_count(); ++i) {
        double const pth = first_threshold_pump(i, base.xi, base.rates, base.gamma_ghz);
        if (pth < col.analytic_first) {
            col.analytic_first = pth;
            col.analytic_argmin = i;
        }
    }

    std::vector<std::optional<WarmStart>> states(pumps.size());
    std::optional<WarmStart> warm;
    for (std::size_t k = 0; k < pumps.size(); ++k) {
        PhaseCell cell;
        cell.xi = base.xi;
        cell.pump_ghz = pumps[k];
        try {
            SteadyState const s = solve_point(base.with_pump(pumps[k]), solver, warm ? &*warm : nullptr);
            cell.converged = true;
            cell.selected = s.selected;
            cell.max_fraction = s.max_fraction();
            cell.wall_seconds = s.info.wall_seconds;
            cell.method = s.info.method;
            warm = WarmStart{s.pump_ghz, s.state.n};
            states[k] = warm;
        } catch (std::exception const&) {
            warm.reset();
        }
        col.cells.push_back(std::move(cell));
    }

    auto refine = [&](std::size_t count, TransitionBracket& bracket) {
        for (std::size_t k = 0; k < pumps.size(); ++k) {
            if (!col.cells[k].converged || col.cells[k].selected.size() < count) continue;
            bracket.found = true;
            if (k == 0 || !states[k - 1]) {
                // transition at or below the first grid point, or its lower end failed
                bracket.low = k == 0 ? 0.0 : pumps[k - 1];
                bracket.high = pumps[k];
                bracket.set_at_high = col.cells[k].selected;
                bracket.resolved = false;
                return;
            }
            BisectionOutcome b = bisect_selection(base, solver, count, pumps[k - 1], *states[k - 1], pumps[k],
                                                  col.cells[k].selected, rtol);
            bracket = b.bracket;
            for (auto& c : b.cells) col.cells.push_back(std::move(c));
            return;
        }
    };
    refine(1, col.first);
    refine(2, col.second);
    std::stable_sort(col.cells.begin(), col.cells.end(),
                     [](PhaseCell const& a, PhaseCell const& b) { return a.pump_ghz < b.pump_ghz; });
    col.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return col;
}

/// Columns are independent and solved in parallel; the result does not depend on the
/// number of workers.
inline PhaseDiagram run_phase_diagram(PhaseDiagramSpec const& spec) {
    spec.xi.validate("phase_diagram.xi");
    spec.pump.validate("phase_diagram.pump");
    PhaseDiagram d;
    d.cutoff_thz = spec.cutoff_thz;
    d.gamma_ghz = spec.gamma_ghz;
    d.pump_grid = spec.pump.values();
    auto const xis = spec.xi.values();
    d.columns.resize(xis.size());
    parallel_for(xis.size(), spec.workers, [&](std::size_t j) {
        SystemParams const base =
            SystemParams::from_xi(spec.basis, spec.dye, spec.cutoff_thz, xis[j], spec.gamma_ghz, 0.0);
        d.columns[j] = solve_phase_column(base, d.pump_grid, spec.solver, spec.bisection_rtol);
    });
    return d;
}

// ---------------------------------------------------------------------------
// cutoff scans

struct CutoffScanSpec {
    std::shared_ptr<ModeBasis const> basis;
    std::shared_ptr<DyeModel const> dye;
    std::vector<double> cutoffs_thz{490.0, 515.0, 525.0};
    double xi = 1.0;
    double gamma_ghz = 0.2;
    double pump_low_factor = 0.5;    // sweep from this multiple of the lowest analytic threshold
    double pump_high_factor = 20.0;  // ... to this multiple
    int points = 60;
    double extension = 100.0;        // range extension when no second selection is found
    int extension_points = 60;
    double bisection_rtol = 1e-3;
    double saturation_margin = 1e-3; // saturated once max f > 1 - margin
    SolverSettings solver;
    unsigned workers = 0;
};

struct CutoffResult {
    double cutoff_thz = 0.0;
    std::string error;  // dye-window or solver failure
    double kappa_ghz = 0.0;
    double analytic_first = 0.0;
    int analytic_argmin = -1;
    TransitionBracket first;
    TransitionBracket second;
    bool extended = false;
    std::optional<double> saturation_pump;
    bool saturation_before_second = false;
    std::vector<PointSummary> points;
    SelectionTrace trace;

    bool ok() const {
        if (!error.empty()) return false;
        for (auto const& p : points)
            if (!p.converged) return false;
        return first.resolved || !first.found;
    }
};

inline CutoffResult run_single_cutoff(CutoffScanSpec const& spec, double cutoff) {
    CutoffResult r;
    r.cutoff_thz = cutoff;
    SystemParams base;
    try {
        base = SystemParams::from_xi(spec.basis, spec.dye, cutoff, spec.xi, spec.gamma_ghz, 0.0);
    } catch (std::exception const& e) {
        r.error = e.what();
        return r;
    }
    r.kappa_ghz = base.kappa_ghz;
    r.analytic_first = std::numeric_limits<double>::infinity();
    for (int i = 0; i < base.mode_count(); ++i) {
        double const pth = first_threshold_pump(i, base.xi, base.rates, base.gamma_ghz);
        if (pth < r.analytic_first) {
            r.analytic_first = pth;
            r.analytic_argmin = i;
        }
    }
    double const anchor = std::isfinite(r.analytic_first) ? r.analytic_first : spec.gamma_ghz;
    std::vector<double> pumps = log_grid(spec.pump_low_factor * anchor, spec.pump_high_factor * anchor, spec.points);

    std::vector<std::optional<WarmStart>> states;
    std::optional<WarmStart> warm;
    auto run_chain = [&](std::size_t from) {
        for (std::size_t k = from; k < pumps.size(); ++k) {
            try {
                SteadyState const s = solve_point(base.with_pump(pumps[k]), spec.solver, warm ? &*warm : nullptr);
                r.points.push_back(PointSummary::from(s));
                warm = WarmStart{s.pump_ghz, s.state.n};
            } catch (std::exception const& e) {
                r.points.push_back(PointSummary::failed(pumps[k], e.what()));
                warm.reset();
            }
            states.push_back(warm);
        }
    };
    auto reaches = [&](std::size_t count) -> std::optional<std::size_t> {
        for (std::size_t k = 0; k < r.points.size(); ++k)
            if (r.points[k].converged && r.points[k].selected.size() >= count) return k;
        return std::nullopt;
    };
    run_chain(0);
    if (!reaches(2) && spec.extension > 1.0) {
        r.extended = true;
        auto const more = log_grid(pumps.back(), pumps.back() * spec.extension, spec.extension_points + 1);
        std::size_t const from = pumps.size();
        pumps.insert(pumps.end(), more.begin() + 1, more.end());
        run_chain(from);
    }

    auto refine = [&](std::size_t count, TransitionBracket& bracket) {
        auto const k = reaches(count);
        if (!k) return;
        bracket.found = true;
        if (*k == 0 || !states[*k - 1]) {
            bracket.low = *k == 0 ? 0.0 : pumps[*k - 1];
            bracket.high = pumps[*k];
            bracket.set_at_high = r.points[*k].selected;
            return;
        }
        bracket = bisect_selection(base, spec.solver, count, pumps[*k - 1], *states[*k - 1], pumps[*k],
                                   r.points[*k].selected, spec.bisection_rtol)
                      .bracket;
    };
    refine(1, r.first);
    refine(2, r.second);
    for (auto const& p : r.points)
        if (p.converged && p.max_fraction > 1.0 - spec.saturation_margin) {
            r.saturation_pump = p.pump_ghz;
            break;
        }
    r.saturation_before_second =
        r.saturation_pump && (!r.second.found || *r.saturation_pump < r.second.estimate());
    r.trace = trace_selection(r.points);
    return r;
}

inline std::vector<CutoffResult> run_cutoff_scan(CutoffScanSpec const& spec) {
    if (spec.cutoffs_thz.empty()) throw std::invalid_argument("cutoff scan: no cutoff values");
    std::vector<CutoffResult> out(spec.cutoffs_thz.size());
    parallel_for(out.size(), spec.workers, [&](std::size_t j) { out[j] = run_single_cutoff(spec, spec.cutoffs_thz[j]); });
    return out;
}

/// CSV: cutoff_THz,kappa_GHz,analytic_first_P,analytic_argmin,first_P,first_selected,second_P,second_selected,
///      saturation_P,saturation_before_second,extended,error
inline void write_cutoff_summary_csv(std::ostream& os, std::vector<CutoffResult> const& results,
                                     ModeBasis const& basis, double pump_scale = 1.0) {
    os << "cutoff_THz,kappa_GHz,analytic_first_P,analytic_argmin,first_P,first_selected,second_P,second_selected,"
          "saturation_P,saturation_before_second,extended,error\n";
    auto labels = [&](std::vector<int> const& v) {
        std::string s;
        for (int i : v) s += (s.empty() ? "" : ";") + basis.label(i);
        return s;
    };
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.12g", v);
        return std::string(buf);
    };
    double const nan = std::numeric_limits<double>::quiet_NaN();
    for (auto const& r : results) {
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        os << num(r.cutoff_thz) << ',' << num(r.kappa_ghz) << ',' << num(r.analytic_first * pump_scale) << ','
           << (r.analytic_argmin >= 0 ? basis.label(r.analytic_argmin) : "") << ','
           << num(r.first.found ? r.first.estimate() * pump_scale : nan) << ',' << labels(r.first.set_at_high) << ','
           << num(r.second.found ? r.second.estimate() * pump_scale : nan) << ',' << labels(r.second.set_at_high)
           << ',' << num(r.saturation_pump ? *r.saturation_pump * pump_scale : nan) << ','
           << (r.saturation_before_second ? 1 : 0) << ',' << (r.extended ? 1 : 0) << ',' << err << '\n';
    }
}

} // namespace dyecav
