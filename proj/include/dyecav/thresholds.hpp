#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include "dyecav/dye_model.hpp"

namespace dyecav {

/// Gain at which the loss-corrected stimulated balance of a mode vanishes,
/// (R_up + kappa/rho) / (R_up + R_down).
inline double threshold_gain(double r_up, double r_down, double kappa_over_rho) {
    return (r_up + kappa_over_rho) / (r_up + r_down);
}

struct ThresholdGain {
    double value;    // rate form (R_up^i + kappa/rho)/(R_up^i + R_down^i)
    double ks_form;  // (1 + R_up^0/(R_up^i xi)) / (1 + C exp(-beta (nu_i - nu_z)))
};

/// Both algebraic forms of the threshold gain of mode i at thermalization xi (xi may be +inf).
/// For a KS-exact dye the two agree to rounding; a mismatch beyond 1e-10 is a logic error.
inline ThresholdGain threshold_gain(int i, double xi, RateTable const& rates, DyeModel const& dye) {
    if (!(xi > 0.0)) throw std::invalid_argument("threshold_gain: xi must be positive");
    double const r_up0 = rates.up[0];
    double const kappa_over_rho = r_up0 / xi;
    ThresholdGain g;
    g.value = threshold_gain(rates.up[i], rates.down[i], kappa_over_rho);
    g.ks_form = (1.0 + r_up0 / (rates.up[i] * xi)) / (1.0 + dye.thermo().ks_ratio(rates.frequency_thz[i]));
    if (dye.source() == DyeModel::Source::surrogate && std::abs(g.value - g.ks_form) > 1e-10 * std::abs(g.value))
        throw std::logic_error("threshold_gain: rate and Kennard-Stepanov forms disagree for a KS-exact dye");
    return g;
}

/// Homogeneous gain P/(Gamma + P) reached when no mode is macroscopically occupied.
inline double homogeneous_gain(double pump, double gamma) { return pump / (gamma + pump); }

/// Inverse of homogeneous_gain: the pump that lifts the homogeneous gain to g.
inline double pump_for_gain(double g, double gamma) {
    if (g >= 1.0) return std::numeric_limits<double>::infinity();
    return g / (1.0 - g) * gamma;
}

/// First-selection threshold pump (R_up^i + R_up^0/xi)/(R_down^i - R_up^0/xi) * Gamma;
/// +inf when the denominator is not positive.
inline double first_threshold_pump(int i, double xi, RateTable const& rates, double gamma) {
    double const u = rates.up[0] / xi;
    double const den = rates.down[i] - u;
    if (!(den > 0.0)) return std::numeric_limits<double>::infinity();
    return (rates.up[i] + u) / den * gamma;
}

} // namespace dyecav
