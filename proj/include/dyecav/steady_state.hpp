#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dyecav/system.hpp"

namespace dyecav {

/// Detector thresholds for "macroscopic" occupation. A mode is selected iff it is both
/// occupied (n_i >= min_occupation) and clamped (|G_i - G_i^th| / G_i^th <= clamp_tolerance).
struct SelectionCriteria {
    double min_occupation = 100.0;
    double clamp_tolerance = 1e-2;
};

struct SelectionRecord {
    int mode = 0;
    double occupation = 0.0;
    double gain = 0.0;
    double threshold_gain = 0.0;
    double clamp_deviation = 0.0;  // |G - G^th| / G^th
    bool occupied = false;
    bool clamped = false;
    bool selected = false;
};

struct SolverTolerances {
    double residual = 1e-9;        // normalized RHS residual at convergence
    int sustained_steps = 20;      // integrator: consecutive steps below `residual`
    long max_steps = 400000;       // integrator
    double occupation_rtol = 1e-4; // integrator local error, scale n + 1
    double fraction_atol = 1e-10;  // integrator local error on f
    int max_iterations = 80;       // Newton iterations per continuation stage
    int max_stages = 400;          // continuation stages of one self-consistent solve
};

struct SolverInfo {
    std::string method;
    long iterations = 0;
    long stages = 0;
    double simulated_ns = 0.0;
    double wall_seconds = 0.0;
};

struct SteadyState {
    double pump_ghz = 0.0;
    SystemState state;
    Eigen::VectorXd gains;
    Eigen::VectorXd threshold_gains;
    Residual residual;
    double balance_residual = 0.0;
    SelectionCriteria criteria;
    std::vector<SelectionRecord> records;
    std::vector<int> selected;  // ascending mode index
    SolverInfo info;

    bool is_selected(int i) const { return std::binary_search(selected.begin(), selected.end(), i); }
    bool ground_selected() const { return is_selected(0); }
    double max_fraction() const { return state.f.maxCoeff(); }
};

/// Occupations of a converged neighbour, used to seed continuation.
struct WarmStart {
    double pump_ghz = 0.0;
    Eigen::VectorXd n;
};

/// Raised when a solver gives up; carries the residual history for diagnosis.
class ConvergenceError : public std::runtime_error {
  public:
    ConvergenceError(std::string const& what, std::vector<double> history)
        : std::runtime_error(what), history_(std::move(history)) {}
    std::vector<double> const& residual_history() const { return history_; }

  private:
    std::vector<double> history_;
};

inline std::vector<SelectionRecord> selection_records(Eigen::VectorXd const& n, Eigen::VectorXd const& gains,
                                                      SystemParams const& p, SelectionCriteria const& c) {
    std::vector<SelectionRecord> out(n.size());
    for (int i = 0; i < n.size(); ++i) {
        SelectionRecord& r = out[i];
        r.mode = i;
        r.occupation = n[i];
        r.gain = gains[i];
        r.threshold_gain = p.threshold_gain(i);
        r.clamp_deviation = std::abs(r.gain - r.threshold_gain) / r.threshold_gain;
        r.occupied = n[i] >= c.min_occupation;
        r.clamped = r.clamp_deviation <= c.clamp_tolerance;
        r.selected = r.occupied && r.clamped;
    }
    return out;
}

inline std::vector<int> detect_selected(SteadyState const& s) {
    std::vector<int> out;
    for (auto const& r : s.records)
        if (r.selected) out.push_back(r.mode);
    return out;
}

/// Re-run the detector on a converged state, e.g. with different criteria.
inline std::vector<int> detect_selected(SteadyState const& s, SystemParams const& p, SelectionCriteria const& c) {
    auto const records = selection_records(s.state.n, s.gains, p, c);
    std::vector<int> out;
    for (auto const& r : records)
        if (r.selected) out.push_back(r.mode);
    return out;
}

/// Fill gains, residuals and the selected set for a converged state.
inline SteadyState make_steady_state(SystemState state, SystemParams const& p, SelectionCriteria const& criteria,
                                     SolverInfo info) {
    SteadyState s;
    s.pump_ghz = p.pump_ghz;
    RateCoefficients const c = rate_coefficients(state, p);
    s.residual = steady_residual(state, c);
    s.gains = c.gain;
    s.threshold_gains.resize(p.mode_count());
    for (int i = 0; i < p.mode_count(); ++i) s.threshold_gains[i] = p.threshold_gain(i);
    s.state = std::move(state);
    s.balance_residual = excitation_balance_residual(s.state, p);
    s.criteria = criteria;
    s.records = selection_records(s.state.n, s.gains, p, criteria);
    s.selected = detect_selected(s);
    s.info = std::move(info);
    return s;
}

inline std::string selected_labels(SteadyState const& s, ModeBasis const& basis, char sep = ';') {
    std::string out;
    for (int i : s.selected) {
        if (!out.empty()) out += sep;
        out += basis.label(i);
    }
    return out;
}

/// CSV: nu_x,nu_y,energy_THz,n,G,G_th,selected
inline void write_steady_state_csv(std::ostream& os, SteadyState const& s, ModeBasis const& basis) {
    os << "nu_x,nu_y,energy_THz,n,G,G_th,selected\n";
    char line[256];
    for (int i = 0; i < basis.size(); ++i) {
        std::snprintf(line, sizeof line, "%d,%d,%.12g,%.12g,%.12g,%.12g,%d\n", basis[i].nu_x, basis[i].nu_y,
                      basis[i].energy_thz, s.state.n[i], s.gains[i], s.threshold_gains[i], s.is_selected(i) ? 1 : 0);
        os << line;
    }
}

/// f along the x axis (y = 0), evaluated from the stationary relation at arbitrary x.
inline std::vector<std::pair<double, double>> fraction_slice_x(SteadyState const& s, SystemParams const& p,
                                                               int samples = 401) {
    std::vector<std::pair<double, double>> out;
    double const half = p.basis->grid().half_width();
    for (int k = 0; k < samples; ++k) {
        double const x = -half + 2.0 * half * k / (samples - 1);
        out.emplace_back(x, stationary_fraction_at(s.state.n, p, x, 0.0));
    }
    return out;
}

inline void write_fraction_slice_csv(std::ostream& os, std::vector<std::pair<double, double>> const& slice) {
    os << "x_over_d,f\n";
    char line[96];
    for (auto const& [x, f] : slice) {
        std::snprintf(line, sizeof line, "%.12g,%.12g\n", x, f);
        os << line;
    }
}

} // namespace dyecav
