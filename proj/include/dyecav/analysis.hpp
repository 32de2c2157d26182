#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dyecav/dye_model.hpp"
#include "dyecav/mode_basis.hpp"
#include "dyecav/steady_state.hpp"
#include "dyecav/system.hpp"
#include "dyecav/thresholds.hpp"

namespace dyecav {

// ---------------------------------------------------------------------------
// symmetric pairs

/// (nu_x, nu_y) together with its (nu_y, nu_x) partner; second == first for nu_x == nu_y.
struct ModePair {
    int first;
    int second;
    bool symmetric() const { return first == second; }
};

/// One entry per pair, ordered by the lower-energy member.
inline std::vector<ModePair> mode_pairs(ModeBasis const& basis) {
    std::vector<ModePair> out;
    std::vector<bool> seen(basis.size(), false);
    for (int i = 0; i < basis.size(); ++i) {
        if (seen[i]) continue;
        int const j = basis.mirror_of(i);
        seen[i] = seen[j] = true;
        out.push_back({i, j});
    }
    return out;
}

inline std::string pair_label(ModeBasis const& basis, int i) {
    int const j = basis.mirror_of(i);
    if (i == j) return basis.label(i);
    int const lo = std::min(i, j), hi = std::max(i, j);
    return basis.label(lo) + "/" + basis.label(hi);
}

// ---------------------------------------------------------------------------
// analytic thresholds

struct ThresholdColumn {
    double xi = 0.0;
    std::vector<double> gain;   // G_i^th
    std::vector<double> pump;   // P_i^th, +inf if never first-selected
    int argmin = -1;            // -1 if every threshold is infinite
    std::vector<int> argmin_group;  // modes within group_tolerance of the minimum
};

struct ThresholdReport {
    double cutoff_thz = 0.0;
    double gamma_ghz = 0.0;
    double group_tolerance = 1e-2;
    std::vector<ThresholdColumn> columns;
};

inline ThresholdColumn threshold_column(double xi, RateTable const& rates, DyeModel const& dye, double gamma,
                                        double group_tolerance = 1e-2) {
    ThresholdColumn c;
    c.xi = xi;
    int const m = rates.size();
    c.gain.resize(m);
    c.pump.resize(m);
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
        c.gain[i] = threshold_gain(i, xi, rates, dye).value;
        c.pump[i] = first_threshold_pump(i, xi, rates, gamma);
        if (c.pump[i] < best) {
            best = c.pump[i];
            c.argmin = i;
        }
    }
    if (c.argmin >= 0)
        for (int i = 0; i < m; ++i)
            if (c.pump[i] <= best * (1.0 + group_tolerance)) c.argmin_group.push_back(i);
    return c;
}

/// P_i^th over a xi grid for every mode, with the argmin curve.
inline ThresholdReport threshold_surface(std::vector<double> const& xi_grid, ModeBasis const& basis, DyeModel const& dye,
                                         double cutoff_thz, double gamma_ghz, double group_tolerance = 1e-2) {
    if (xi_grid.empty()) throw std::invalid_argument("threshold_surface: empty xi grid");
    ThresholdReport r;
    r.cutoff_thz = cutoff_thz;
    r.gamma_ghz = gamma_ghz;
    r.group_tolerance = group_tolerance;
    RateTable const rates = rates_for_basis(dye, basis, cutoff_thz);
    for (double xi : xi_grid) r.columns.push_back(threshold_column(xi, rates, dye, gamma_ghz, group_tolerance));
    return r;
}

/// CSV: xi,nu_x,nu_y,G_th,P_th,is_argmin (P_th in GHz, or P/Gamma when requested)
inline void write_threshold_csv(std::ostream& os, ThresholdReport const& r, ModeBasis const& basis,
                                bool p_over_gamma = false) {
    os << (p_over_gamma ? "xi,nu_x,nu_y,G_th,P_th_over_Gamma,is_argmin\n" : "xi,nu_x,nu_y,G_th,P_th,is_argmin\n");
    double const scale = p_over_gamma ? 1.0 / r.gamma_ghz : 1.0;
    char line[256];
    for (auto const& c : r.columns)
        for (int i = 0; i < basis.size(); ++i) {
            std::snprintf(line, sizeof line, "%.12g,%d,%d,%.12g,%.12g,%d\n", c.xi, basis[i].nu_x, basis[i].nu_y,
                          c.gain[i], c.pump[i] * scale, i == c.argmin ? 1 : 0);
            os << line;
        }
}

/// CSV: xi,nu_x,nu_y,energy_THz,P_th,group (argmin curve; group lists quasi-degenerate modes)
inline void write_argmin_csv(std::ostream& os, ThresholdReport const& r, ModeBasis const& basis,
                             bool p_over_gamma = false) {
    os << (p_over_gamma ? "xi,nu_x,nu_y,energy_THz,P_th_over_Gamma,group\n" : "xi,nu_x,nu_y,energy_THz,P_th,group\n");
    double const scale = p_over_gamma ? 1.0 / r.gamma_ghz : 1.0;
    char line[256];
    for (auto const& c : r.columns) {
        if (c.argmin < 0) continue;
        std::string group;
        for (int i : c.argmin_group) group += (group.empty() ? "" : ";") + basis.label(i);
        std::snprintf(line, sizeof line, "%.12g,%d,%d,%.12g,%.12g,", c.xi, basis[c.argmin].nu_x, basis[c.argmin].nu_y,
                      basis[c.argmin].energy_thz, c.pump[c.argmin] * scale);
        os << line << group << '\n';
    }
}

// ---------------------------------------------------------------------------
// selection traces

/// Compact record of one converged sweep point (no f field).
struct PointSummary {
    double pump_ghz = 0.0;
    bool converged = false;
    std::string error;
    std::string method;
    Eigen::VectorXd n;
    Eigen::VectorXd gains;
    Eigen::VectorXd threshold_gains;
    std::vector<int> selected;
    Residual residual;
    double balance_residual = 0.0;
    double max_fraction = 0.0;
    double wall_seconds = 0.0;

    static PointSummary from(SteadyState const& s) {
        PointSummary p;
        p.pump_ghz = s.pump_ghz;
        p.converged = true;
        p.method = s.info.method;
        p.n = s.state.n;
        p.gains = s.gains;
        p.threshold_gains = s.threshold_gains;
        p.selected = s.selected;
        p.residual = s.residual;
        p.balance_residual = s.balance_residual;
        p.max_fraction = s.max_fraction();
        p.wall_seconds = s.info.wall_seconds;
        return p;
    }
    static PointSummary failed(double pump, std::string error) {
        PointSummary p;
        p.pump_ghz = pump;
        p.error = std::move(error);
        return p;
    }
    bool is_selected(int i) const { return std::binary_search(selected.begin(), selected.end(), i); }
};

struct SelectionEvent {
    enum class Kind { selected, deselected };
    double pump_ghz;
    int mode;
    Kind kind;
    double declamp;  // (G^th - G)/G^th at the point of the event (deselection only)
};

inline char const* to_string(SelectionEvent::Kind k) {
    return k == SelectionEvent::Kind::selected ? "selected" : "deselected";
}

struct SelectionTrace {
    std::vector<SelectionEvent> events;
    std::vector<double> pumps;               // converged points, ascending
    std::vector<std::vector<int>> sets;      // selected set at each of them
    std::vector<double> excluded_pumps;      // non-converged points

    /// Events of one kind for one mode, in order.
    std::vector<SelectionEvent> for_mode(int mode) const {
        std::vector<SelectionEvent> out;
        for (auto const& e : events)
            if (e.mode == mode) out.push_back(e);
        return out;
    }
    std::optional<double> first_selection_pump() const {
        for (std::size_t k = 0; k < sets.size(); ++k)
            if (!sets[k].empty()) return pumps[k];
        return std::nullopt;
    }
};

/// Selection/deselection events from set differences between consecutive converged points.
inline SelectionTrace trace_selection(std::vector<PointSummary> const& sweep) {
    SelectionTrace t;
    std::vector<int> previous;
    double last_pump = -std::numeric_limits<double>::infinity();
    for (auto const& p : sweep) {
        if (!p.converged) {
            t.excluded_pumps.push_back(p.pump_ghz);
            continue;
        }
        if (!(p.pump_ghz > last_pump)) throw std::invalid_argument("trace_selection: sweep must ascend in P");
        last_pump = p.pump_ghz;
        std::vector<int> const& now = p.selected;
        for (int i : now)
            if (!std::binary_search(previous.begin(), previous.end(), i))
                t.events.push_back({p.pump_ghz, i, SelectionEvent::Kind::selected, 0.0});
        for (int i : previous)
            if (!std::binary_search(now.begin(), now.end(), i)) {
                double const g_th = p.threshold_gains[i];
                t.events.push_back({p.pump_ghz, i, SelectionEvent::Kind::deselected, (g_th - p.gains[i]) / g_th});
            }
        t.pumps.push_back(p.pump_ghz);
        t.sets.push_back(now);
        previous = now;
    }
    return t;
}

/// CSV: P,nu_x,nu_y,pair,event,declamp
inline void write_trace_csv(std::ostream& os, SelectionTrace const& t, ModeBasis const& basis, double pump_scale = 1.0) {
    os << "P,nu_x,nu_y,pair,event,declamp\n";
    char line[256];
    for (auto const& e : t.events) {
        std::snprintf(line, sizeof line, "%.12g,%d,%d,%s,%s,%.6g\n", e.pump_ghz * pump_scale, basis[e.mode].nu_x,
                      basis[e.mode].nu_y, pair_label(basis, e.mode).c_str(), to_string(e.kind), e.declamp);
        os << line;
    }
}

// ---------------------------------------------------------------------------
// thermal comparison

struct ThermalFit {
    double beta_reference = 0.0;  // 1/THz
    double slope = 0.0;           // beta_fit
    double intercept = 0.0;       // -beta_fit mu_fit
    double beta_ratio = 0.0;      // beta_fit / beta_reference
    double mu_thz = 0.0;
    // same data against a line of the reference slope, only mu fitted
    double mu_thermal_thz = 0.0;
    std::vector<int> modes;
    std::vector<double> energy_thz, occupation, ln_term, fit_value, residual;
    std::vector<double> thermal_value, thermal_residual;
};

/// Least-squares line through (energy, ln(1 + 1/n)).
inline ThermalFit fit_thermal_line(std::vector<double> const& energy_thz, std::vector<double> const& occupation,
                                   double beta_reference, std::vector<int> modes = {}) {
    std::size_t const k = energy_thz.size();
    if (k < 2 || occupation.size() != k) throw std::invalid_argument("thermal fit: need at least two points");
    ThermalFit fit;
    fit.beta_reference = beta_reference;
    fit.modes = std::move(modes);
    fit.energy_thz = energy_thz;
    fit.occupation = occupation;
    Eigen::MatrixXd a(k, 2);
    Eigen::VectorXd b(k);
    for (std::size_t i = 0; i < k; ++i) {
        double const l = std::log1p(1.0 / occupation[i]);
        fit.ln_term.push_back(l);
        a(i, 0) = energy_thz[i];
        a(i, 1) = 1.0;
        b[i] = l;
    }
    Eigen::Vector2d const coef = a.colPivHouseholderQr().solve(b);
    fit.slope = coef[0];
    fit.intercept = coef[1];
    fit.beta_ratio = fit.slope / beta_reference;
    fit.mu_thz = -fit.intercept / fit.slope;
    double offset = 0.0;
    for (std::size_t i = 0; i < k; ++i) offset += fit.ln_term[i] - beta_reference * energy_thz[i];
    offset /= static_cast<double>(k);
    fit.mu_thermal_thz = -offset / beta_reference;
    for (std::size_t i = 0; i < k; ++i) {
        fit.fit_value.push_back(fit.slope * energy_thz[i] + fit.intercept);
        fit.residual.push_back(fit.ln_term[i] - fit.fit_value[i]);
        fit.thermal_value.push_back(beta_reference * energy_thz[i] + offset);
        fit.thermal_residual.push_back(fit.ln_term[i] - fit.thermal_value[i]);
    }
    return fit;
}

/// Fits the unselected modes with n_i > min_occupation; the energies are the total mode
/// frequencies in THz. Throws for fewer than min_modes usable modes.
inline ThermalFit thermal_compare(PointSummary const& s, SystemParams const& p, double min_occupation = 1e-6,
                                  std::size_t min_modes = 5) {
    std::vector<double> e, n;
    std::vector<int> modes;
    for (int i = 0; i < p.mode_count(); ++i) {
        if (s.is_selected(i) || !(s.n[i] > min_occupation)) continue;
        modes.push_back(i);
        e.push_back(p.rates.frequency_thz[i]);
        n.push_back(s.n[i]);
    }
    if (modes.size() < min_modes)
        throw std::invalid_argument("thermal_compare: spectrum under-populated (" + std::to_string(modes.size()) +
                                    " usable modes)");
    return fit_thermal_line(e, n, p.dye->thermo().beta_per_thz, std::move(modes));
}

inline ThermalFit thermal_compare(SteadyState const& s, SystemParams const& p, double min_occupation = 1e-6,
                                  std::size_t min_modes = 5) {
    return thermal_compare(PointSummary::from(s), p, min_occupation, min_modes);
}

/// Fraction of negative residuals against the reference-slope line among the highest-energy
/// quarter of fitted modes; negative means more photons than the thermal distribution.
inline double top_quartile_negative_fraction(ThermalFit const& fit) {
    std::vector<std::size_t> order(fit.energy_thz.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fit.energy_thz[a] > fit.energy_thz[b]; });
    std::size_t const q = std::max<std::size_t>(1, order.size() / 4);
    std::size_t negative = 0;
    for (std::size_t k = 0; k < q; ++k) negative += fit.thermal_residual[order[k]] < 0.0;
    return static_cast<double>(negative) / q;
}

/// CSV: energy_THz,n,ln_term,fit_value,thermal_value
inline void write_thermal_csv(std::ostream& os, ThermalFit const& fit) {
    os << "energy_THz,n,ln_term,fit_value,thermal_value\n";
    char line[256];
    for (std::size_t i = 0; i < fit.energy_thz.size(); ++i) {
        std::snprintf(line, sizeof line, "%.12g,%.12g,%.12g,%.12g,%.12g\n", fit.energy_thz[i], fit.occupation[i],
                      fit.ln_term[i], fit.fit_value[i], fit.thermal_value[i]);
        os << line;
    }
}

// ---------------------------------------------------------------------------
// general threshold condition

/// Gain that mode i would see with f clamped by the selected set S alone, neglecting
/// spontaneous emission:
///   quad(|psi_i|^2 (P + sum_S R_up |psi_j|^2 n_j) / (Gamma + P + sum_S (R_up + R_down) |psi_j|^2 n_j)).
/// At the selection point of mode i this equals G_i^th.
inline double selected_set_gain(int i, Eigen::VectorXd const& n, std::vector<int> const& selected,
                                SystemParams const& p) {
    auto const& basis = *p.basis;
    Eigen::VectorXd up = Eigen::VectorXd::Zero(p.mode_count());
    Eigen::VectorXd both = Eigen::VectorXd::Zero(p.mode_count());
    for (int j : selected) {
        up[j] = p.rates.up[j] * n[j];
        both[j] = (p.rates.up[j] + p.rates.down[j]) * n[j];
    }
    Eigen::MatrixXd num = basis.synthesize(up);
    num.array() += p.pump_ghz;
    Eigen::MatrixXd den = basis.synthesize(both);
    den.array() += p.gamma_ghz + p.pump_ghz;
    return gain(num.cwiseQuotient(den), basis[i].density, basis.grid());
}

// ---------------------------------------------------------------------------
// phase diagrams

enum class PhaseLabel { none, ground_only, single_excited, multi };

inline char const* to_string(PhaseLabel l) {
    switch (l) {
    case PhaseLabel::none: return "none";
    case PhaseLabel::ground_only: return "ground_only";
    case PhaseLabel::single_excited: return "single_excited";
    case PhaseLabel::multi: return "multi";
    }
    return "?";
}

inline PhaseLabel phase_label(std::vector<int> const& selected) {
    if (selected.empty()) return PhaseLabel::none;
    if (selected.size() > 1) return PhaseLabel::multi;
    return selected[0] == 0 ? PhaseLabel::ground_only : PhaseLabel::single_excited;
}

struct PhaseCell {
    double xi = 0.0;
    double pump_ghz = 0.0;
    bool converged = false;
    bool refinement = false;  // produced by boundary bisection
    std::vector<int> selected;
    double max_fraction = 0.0;
    double wall_seconds = 0.0;
    std::string method;

    PhaseLabel label() const { return phase_label(selected); }
    bool ground_selected() const { return std::binary_search(selected.begin(), selected.end(), 0); }
};

/// A transition bracket refined by bisection: below `low` fewer than k modes are
/// selected, at `high` at least k. Unresolved when a bracketing solve failed.
struct TransitionBracket {
    bool found = false;
    bool resolved = false;
    double low = 0.0;
    double high = 0.0;
    std::vector<int> set_at_high;
    double estimate() const { return std::sqrt(low * high); }
};

struct PhaseColumn {
    double xi = 0.0;
    double kappa_ghz = 0.0;
    double analytic_first = 0.0;  // min_i P_i^th
    int analytic_argmin = -1;
    TransitionBracket first;      // 0 -> >= 1 selected
    TransitionBracket second;     // <= 1 -> >= 2 selected
    std::vector<PhaseCell> cells; // ascending P
    double wall_seconds = 0.0;
};

struct PhaseDiagram {
    double cutoff_thz = 0.0;
    double gamma_ghz = 0.0;
    std::vector<double> pump_grid;
    std::vector<PhaseColumn> columns;  // ascending xi

    bool all_converged() const {
        for (auto const& c : columns)
            for (auto const& cell : c.cells)
                if (!cell.converged) return false;
        return true;
    }
};

struct BoundaryPoint {
    double xi;
    double pump_ghz;   // NaN when the transition lies outside the scanned P range
    bool resolved;
};

struct PhaseBoundaries {
    std::vector<BoundaryPoint> lower;  // first selection
    std::vector<BoundaryPoint> upper;  // second selection
    std::vector<double> analytic_lower;
    std::vector<double> lower_over_analytic;
    std::vector<bool> coincident;      // upper within one coarse P cell of lower
    std::optional<double> merge_xi;    // boundaries meet below this xi
    std::optional<double> merge_pump;
    std::vector<std::vector<int>> first_sets;

    /// log-linear interpolation of a boundary at xi; NaN outside the resolved range
    static double interpolate(std::vector<BoundaryPoint> const& b, double xi) {
        for (std::size_t k = 0; k + 1 < b.size(); ++k) {
            if (xi < b[k].xi || xi > b[k + 1].xi) continue;
            if (!std::isfinite(b[k].pump_ghz) || !std::isfinite(b[k + 1].pump_ghz)) break;
            double const t = std::log(xi / b[k].xi) / std::log(b[k + 1].xi / b[k].xi);
            return std::exp((1 - t) * std::log(b[k].pump_ghz) + t * std::log(b[k + 1].pump_ghz));
        }
        return std::numeric_limits<double>::quiet_NaN();
    }
};

/// Lower/upper boundaries from the bisection brackets of each column, and the xi below
/// which they coincide (upper within one coarse pump-grid ratio of lower).
inline PhaseBoundaries extract_phase_boundaries(PhaseDiagram const& d) {
    PhaseBoundaries b;
    double cell_ratio = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 1 < d.pump_grid.size(); ++k)
        cell_ratio = std::min(cell_ratio, d.pump_grid[k + 1] / d.pump_grid[k]);
    double const nan = std::numeric_limits<double>::quiet_NaN();
    for (auto const& c : d.columns) {
        double const lo = c.first.found ? c.first.estimate() : nan;
        double const hi = c.second.found ? c.second.estimate() : nan;
        b.lower.push_back({c.xi, lo, c.first.resolved});
        b.upper.push_back({c.xi, hi, c.second.resolved});
        b.analytic_lower.push_back(c.analytic_first);
        b.lower_over_analytic.push_back(lo / c.analytic_first);
        b.coincident.push_back(c.first.found && c.second.found && hi <= lo * cell_ratio);
        b.first_sets.push_back(c.first.set_at_high);
    }
    // merge: last coincident column of the leading coincident run, then first separated one
    std::size_t k = 0;
    while (k < b.coincident.size() && b.coincident[k]) ++k;
    if (k > 0 && k < b.coincident.size() && b.lower[k].resolved) {
        b.merge_xi = std::sqrt(b.lower[k - 1].xi * b.lower[k].xi);
        b.merge_pump = PhaseBoundaries::interpolate(b.lower, *b.merge_xi);
    }
    return b;
}

/// CSV: xi,P,n_selected,ground_selected,selected_modes,converged
inline void write_phase_cells_csv(std::ostream& os, PhaseDiagram const& d, ModeBasis const& basis,
                                  double pump_scale = 1.0) {
    os << "xi,P,n_selected,ground_selected,selected_modes,converged\n";
    char line[128];
    for (auto const& c : d.columns)
        for (auto const& cell : c.cells) {
            std::string modes;
            for (int i : cell.selected) modes += (modes.empty() ? "" : ";") + basis.label(i);
            std::snprintf(line, sizeof line, "%.12g,%.12g,%zu,%d,", cell.xi, cell.pump_ghz * pump_scale,
                          cell.selected.size(), cell.ground_selected() ? 1 : 0);
            os << line << modes << ',' << (cell.converged ? 1 : 0) << '\n';
        }
}

/// CSV: xi,lower_P,upper_P,analytic_first_P,lower_resolved,upper_resolved,coincident
inline void write_boundaries_csv(std::ostream& os, PhaseBoundaries const& b, double pump_scale = 1.0) {
    os << "xi,lower_P,upper_P,analytic_first_P,lower_resolved,upper_resolved,coincident\n";
    char line[256];
    for (std::size_t k = 0; k < b.lower.size(); ++k) {
        std::snprintf(line, sizeof line, "%.12g,%.12g,%.12g,%.12g,%d,%d,%d\n", b.lower[k].xi,
                      b.lower[k].pump_ghz * pump_scale, b.upper[k].pump_ghz * pump_scale,
                      b.analytic_lower[k] * pump_scale, b.lower[k].resolved ? 1 : 0, b.upper[k].resolved ? 1 : 0,
                      b.coincident[k] ? 1 : 0);
        os << line;
    }
}

} // namespace dyecav
