#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "dyecav/mode_basis.hpp"
#include "dyecav/units.hpp"

namespace dyecav {

class DyeWindowError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Thermodynamic constants entering the Kennard-Stepanov relation
/// R_down / R_up = C exp(-beta (nu - nu_z)).
struct DyeThermo {
    double beta_per_thz = units::beta_per_thz(units::room_temperature_k);
    double zero_phonon_thz = 545.0;
    double ks_constant = 1.0;

    double ks_ratio(double nu_thz) const { return ks_constant * std::exp(-beta_per_thz * (nu_thz - zero_phonon_thz)); }
};

/// Log-linear absorption with emission tied to it by an exact Kennard-Stepanov factor.
struct SurrogateParams {
    double absorption_at_anchor = 1e-6;  // GHz d^2 (1 kHz d^2)
    double anchor_thz = 515.0;
    double log_slope_per_thz = 0.2;
    DyeThermo thermo;
};

struct SpectrumRow {
    double frequency_thz;
    double absorption;  // GHz d^2
    double emission;    // GHz d^2
};

class DyeModel {
  public:
    enum class Source { surrogate, tabulated };

    static DyeModel surrogate(SurrogateParams const& p, double density_per_d2) {
        if (!(p.absorption_at_anchor > 0.0)) throw std::invalid_argument("dye: absorption at the anchor must be positive");
        if (!(p.thermo.ks_constant > 0.0)) throw std::invalid_argument("dye: KS constant C must be positive");
        if (!(p.thermo.beta_per_thz > 0.0)) throw std::invalid_argument("dye: beta must be positive");
        check_density(density_per_d2);
        DyeModel d;
        d.thermo_ = p.thermo;
        d.density_ = density_per_d2;
        d.model_ = p;
        return d;
    }

    /// Rows must be strictly increasing in frequency with non-negative rates. When
    /// `required_window` is given, the table must cover it entirely.
    static DyeModel tabulated(std::vector<SpectrumRow> rows, DyeThermo const& thermo, double density_per_d2,
                              std::optional<std::pair<double, double>> required_window = std::nullopt) {
        if (rows.size() < 2) throw std::invalid_argument("dye table: need at least two rows");
        for (std::size_t k = 0; k < rows.size(); ++k) {
            auto const& r = rows[k];
            if (!std::isfinite(r.frequency_thz) || !std::isfinite(r.absorption) || !std::isfinite(r.emission))
                throw std::invalid_argument("dye table: non-finite entry in row " + std::to_string(k + 1));
            if (r.absorption < 0.0 || r.emission < 0.0)
                throw std::invalid_argument("dye table: negative rate in row " + std::to_string(k + 1));
            if (k > 0 && !(r.frequency_thz > rows[k - 1].frequency_thz))
                throw std::invalid_argument("dye table: frequencies not strictly increasing at row " + std::to_string(k + 1));
        }
        if (required_window &&
            (required_window->first < rows.front().frequency_thz || required_window->second > rows.back().frequency_thz)) {
            char msg[200];
            std::snprintf(msg, sizeof msg, "dye table: coverage gap, table spans [%.6g, %.6g] THz but [%.6g, %.6g] is required",
                          rows.front().frequency_thz, rows.back().frequency_thz, required_window->first,
                          required_window->second);
            throw DyeWindowError(msg);
        }
        if (!(thermo.ks_constant > 0.0) || !(thermo.beta_per_thz > 0.0))
            throw std::invalid_argument("dye: KS constant and beta must be positive");
        check_density(density_per_d2);
        DyeModel d;
        d.thermo_ = thermo;
        d.density_ = density_per_d2;
        d.model_ = std::move(rows);
        return d;
    }

    Source source() const { return std::holds_alternative<SurrogateParams>(model_) ? Source::surrogate : Source::tabulated; }
    DyeThermo const& thermo() const { return thermo_; }
    double density() const { return density_; }
    SurrogateParams const* surrogate_params() const { return std::get_if<SurrogateParams>(&model_); }
    std::vector<SpectrumRow> const* table() const { return std::get_if<std::vector<SpectrumRow>>(&model_); }

    /// Frequency interval on which rates are defined.
    std::pair<double, double> window() const {
        if (auto const* t = table()) return {t->front().frequency_thz, t->back().frequency_thz};
        return {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    }
    bool covers(double nu_thz) const {
        auto const [lo, hi] = window();
        return nu_thz >= lo && nu_thz <= hi;
    }

    double absorption(double nu_thz) const {
        if (auto const* s = surrogate_params())
            return s->absorption_at_anchor * std::exp(s->log_slope_per_thz * (nu_thz - s->anchor_thz));
        return interpolate(nu_thz, &SpectrumRow::absorption);
    }

    double emission(double nu_thz) const {
        if (surrogate_params()) return absorption(nu_thz) * thermo_.ks_ratio(nu_thz);
        return interpolate(nu_thz, &SpectrumRow::emission);
    }

    /// Largest factor by which R_down/R_up departs from C exp(-beta (nu - nu_z)), as
    /// max(r, 1/r), over table rows inside [lo, hi]. Log-linear interpolation keeps the
    /// log-ratio piecewise linear, so the rows are where extremes occur.
    double max_ks_violation(double lo, double hi) const {
        if (surrogate_params()) return 1.0;
        double worst = 1.0;
        for (auto const& r : *table()) {
            if (r.frequency_thz < lo || r.frequency_thz > hi) continue;
            if (r.absorption == 0.0 || r.emission == 0.0) return std::numeric_limits<double>::infinity();
            double const ratio = (r.emission / r.absorption) / thermo_.ks_ratio(r.frequency_thz);
            worst = std::max({worst, ratio, 1.0 / ratio});
        }
        return worst;
    }
    double max_ks_violation() const {
        auto const [lo, hi] = window();
        return max_ks_violation(lo, hi);
    }

  private:
    DyeModel() = default;

    static void check_density(double rho) {
        if (!(rho > 0.0)) throw std::invalid_argument("dye: molecule density must be positive");
    }

    double interpolate(double nu, double SpectrumRow::*field) const {
        auto const& rows = *table();
        if (nu < rows.front().frequency_thz || nu > rows.back().frequency_thz) {
            char msg[128];
            std::snprintf(msg, sizeof msg, "dye table: %.6g THz outside [%.6g, %.6g]", nu, rows.front().frequency_thz,
                          rows.back().frequency_thz);
            throw DyeWindowError(msg);
        }
        auto it = std::upper_bound(rows.begin(), rows.end(), nu,
                                   [](double v, SpectrumRow const& r) { return v < r.frequency_thz; });
        if (it == rows.end()) return rows.back().*field;
        auto const& hi = *it;
        auto const& lo = *(it - 1);
        double const t = (nu - lo.frequency_thz) / (hi.frequency_thz - lo.frequency_thz);
        double const a = lo.*field, b = hi.*field;
        if (a > 0.0 && b > 0.0) return a * std::exp(t * std::log(b / a));  // linear in log-rate
        return a + t * (b - a);
    }

    DyeThermo thermo_;
    double density_ = 1e8;
    std::variant<SurrogateParams, std::vector<SpectrumRow>> model_;
};

inline DyeModel surrogate_rates(SurrogateParams const& p, double density_per_d2 = 1e8) {
    return DyeModel::surrogate(p, density_per_d2);
}

inline DyeModel tabulated_rates(std::vector<SpectrumRow> rows, DyeThermo const& thermo, double density_per_d2 = 1e8,
                                std::optional<std::pair<double, double>> required_window = std::nullopt) {
    return DyeModel::tabulated(std::move(rows), thermo, density_per_d2, required_window);
}

/// Spectra CSV: header `frequency_THz,absorption_d2Hz,emission_d2Hz`, rates in Hz d^2.
inline std::vector<SpectrumRow> read_spectra_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("spectra csv: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "frequency_THz,absorption_d2Hz,emission_d2Hz")
        throw std::invalid_argument("spectra csv: unexpected header '" + line + "'");
    std::vector<SpectrumRow> rows;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        double v[3];
        char c1 = 0, c2 = 0;
        if (!(ss >> v[0] >> c1 >> v[1] >> c2 >> v[2]) || c1 != ',' || c2 != ',')
            throw std::invalid_argument("spectra csv: malformed line " + std::to_string(lineno));
        rows.push_back({v[0], v[1] * 1e-9, v[2] * 1e-9});
    }
    return rows;
}

inline void write_spectra_csv(std::ostream& os, std::vector<SpectrumRow> const& rows) {
    os << "frequency_THz,absorption_d2Hz,emission_d2Hz\n";
    char line[128];
    for (auto const& r : rows) {
        std::snprintf(line, sizeof line, "%.12g,%.17g,%.17g\n", r.frequency_thz, r.absorption * 1e9, r.emission * 1e9);
        os << line;
    }
}

/// Samples a model on [lo, hi] with the given spacing.
inline std::vector<SpectrumRow> sample_spectra(DyeModel const& dye, double lo_thz, double hi_thz, double step_thz) {
    std::vector<SpectrumRow> rows;
    int const n = static_cast<int>(std::llround((hi_thz - lo_thz) / step_thz));
    for (int k = 0; k <= n; ++k) {
        double const nu = lo_thz + k * step_thz;
        rows.push_back({nu, dye.absorption(nu), dye.emission(nu)});
    }
    return rows;
}

/// Gaussian absorption band with Kennard-Stepanov emission, plus an emission
/// suppression exp(-(edge - nu)/width) below `ks_edge_thz` that breaks the KS law
/// on the red side. Used for cutoff scans.
struct BandDyeParams {
    double absorption_peak_thz = 530.0;
    double band_width_thz = 14.142135623730951;  // sigma; sigma^2 = 200 THz^2
    double absorption_at_anchor = 1e-6;          // GHz d^2 at anchor_thz
    double anchor_thz = 515.0;
    double ks_edge_thz = 500.0;
    double edge_width_thz = 1.0;
    DyeThermo thermo{units::beta_per_thz(units::room_temperature_k), 527.5, 1.0};
    double lo_thz = 470.0, hi_thz = 600.0, step_thz = 0.25;
};

inline std::vector<SpectrumRow> make_band_dye_table(BandDyeParams const& p = {}) {
    auto log_band = [&](double nu) {
        double const u = (nu - p.absorption_peak_thz) / p.band_width_thz;
        return -0.5 * u * u;
    };
    std::vector<SpectrumRow> rows;
    int const n = static_cast<int>(std::llround((p.hi_thz - p.lo_thz) / p.step_thz));
    for (int k = 0; k <= n; ++k) {
        double const nu = p.lo_thz + k * p.step_thz;
        double const up = p.absorption_at_anchor * std::exp(log_band(nu) - log_band(p.anchor_thz));
        double down = up * p.thermo.ks_ratio(nu);
        if (nu < p.ks_edge_thz) down *= std::exp(-(p.ks_edge_thz - nu) / p.edge_width_thz);
        rows.push_back({nu, up, down});
    }
    return rows;
}

/// Per-mode rates at the total mode frequencies nu_i = (E_i - E_0)/h + nu_c.
struct RateTable {
    double cutoff_thz = 0.0;
    Eigen::VectorXd frequency_thz;
    Eigen::VectorXd up;
    Eigen::VectorXd down;

    int size() const { return static_cast<int>(up.size()); }
};

inline RateTable rates_for_basis(DyeModel const& dye, ModeBasis const& basis, double cutoff_thz) {
    RateTable t;
    t.cutoff_thz = cutoff_thz;
    int const m = basis.size();
    t.frequency_thz.resize(m);
    t.up.resize(m);
    t.down.resize(m);
    double const e0 = basis[0].energy_thz;
    std::string offending;
    for (int i = 0; i < m; ++i) {
        double const nu = basis[i].energy_thz - e0 + cutoff_thz;
        t.frequency_thz[i] = nu;
        if (!dye.covers(nu)) {
            char buf[64];
            std::snprintf(buf, sizeof buf, " (%d,%d)@%.4g", basis[i].nu_x, basis[i].nu_y, nu);
            offending += buf;
            continue;
        }
        t.up[i] = dye.absorption(nu);
        t.down[i] = dye.emission(nu);
    }
    if (!offending.empty()) {
        auto const [lo, hi] = dye.window();
        char head[128];
        std::snprintf(head, sizeof head, "cutoff %.6g THz: modes outside dye window [%.6g, %.6g] THz:", cutoff_thz, lo, hi);
        throw DyeWindowError(head + offending);
    }
    return t;
}

/// mu / h in THz for a homogeneous excited fraction f, from exp(beta mu) = C exp(beta nu_z) f/(1-f).
inline double chemical_potential(double f, DyeModel const& dye) {
    if (!(f > 0.0 && f < 1.0)) throw std::invalid_argument("chemical_potential: excited fraction must lie in (0, 1)");
    auto const& th = dye.thermo();
    return th.zero_phonon_thz + std::log(th.ks_constant * f / (1.0 - f)) / th.beta_per_thz;
}

} // namespace dyecav
