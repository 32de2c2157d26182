#pragma once

// Unit conventions used throughout the library:
//   lengths       in units of the x-axis oscillator length d
//   frequencies   in THz (cyclic, i.e. omega/2pi); photon energies are quoted as E/h
//   kinetic rates in GHz (pump, loss, rho*R); time in ns
//   dye rates R   in GHz*d^2, so that rho*R and R*|psi|^2 are plain rates

#include <numbers>

namespace dyecav::units {

inline constexpr double planck = 6.62607015e-34;   // J s
inline constexpr double boltzmann = 1.380649e-23;  // J / K
inline constexpr double pi = std::numbers::pi;

inline constexpr double ghz_per_khz = 1e-6;

/// h / (k_B T) in 1/THz, i.e. the Boltzmann exponent per THz of photon frequency.
inline constexpr double beta_per_thz(double temperature_k) {
    return planck / (boltzmann * temperature_k) * 1e12;
}

inline constexpr double room_temperature_k = 300.0;

} // namespace dyecav::units
