#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "dyecav/units.hpp"

namespace dyecav {

/// Fills out[0..n] with the L2-normalized harmonic-oscillator eigenfunctions
/// phi_n(x) = (2^n n! sqrt(pi))^(-1/2) H_n(x) exp(-x^2/2).
///
/// Uses the normalized three-term recurrence
///   phi_{n+1} = x sqrt(2/(n+1)) phi_n - sqrt(n/(n+1)) phi_{n-1},
/// so no factorials or raw Hermite polynomials are ever formed.
inline void oscillator_eigenfunctions(double x, std::span<double> out) {
    if (out.empty()) return;
    double const ground = std::pow(units::pi, -0.25) * std::exp(-0.5 * x * x);
    out[0] = ground;
    if (out.size() == 1) return;
    out[1] = std::sqrt(2.0) * x * ground;
    for (std::size_t n = 1; n + 1 < out.size(); ++n) {
        double const np1 = static_cast<double>(n + 1);
        out[n + 1] = x * std::sqrt(2.0 / np1) * out[n] - std::sqrt(static_cast<double>(n) / np1) * out[n - 1];
    }
}

inline double oscillator_eigenfunction(int n, double x) {
    if (n < 0) throw std::invalid_argument("oscillator_eigenfunction: negative quantum number");
    std::vector<double> values(static_cast<std::size_t>(n) + 1);
    oscillator_eigenfunctions(x, values);
    return values.back();
}

} // namespace dyecav
