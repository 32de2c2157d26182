#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include <Eigen/Dense>

#include "dyecav/dye_model.hpp"
#include "dyecav/mode_basis.hpp"
#include "dyecav/thresholds.hpp"

namespace dyecav {

/// Full experiment configuration for one steady-state problem. The basis and the dye
/// are shared immutable inputs; copies of SystemParams are cheap.
struct SystemParams {
    enum class LossInput { xi, kappa };

    std::shared_ptr<ModeBasis const> basis;
    std::shared_ptr<DyeModel const> dye;
    RateTable rates;
    double pump_ghz = 0.0;
    double kappa_ghz = 0.0;
    double gamma_ghz = 0.2;
    double xi = 0.0;  // R_up^0 rho / kappa
    LossInput loss_input = LossInput::xi;

    static SystemParams from_xi(std::shared_ptr<ModeBasis const> basis, std::shared_ptr<DyeModel const> dye,
                                double cutoff_thz, double xi, double gamma_ghz, double pump_ghz) {
        SystemParams p = common(std::move(basis), std::move(dye), cutoff_thz, gamma_ghz, pump_ghz);
        if (!(xi > 0.0) || !std::isfinite(xi)) throw std::invalid_argument("system: xi must be positive and finite");
        p.xi = xi;
        p.kappa_ghz = p.rates.up[0] * p.density() / xi;
        p.loss_input = LossInput::xi;
        p.validate();
        return p;
    }

    static SystemParams from_kappa(std::shared_ptr<ModeBasis const> basis, std::shared_ptr<DyeModel const> dye,
                                   double cutoff_thz, double kappa_ghz, double gamma_ghz, double pump_ghz) {
        SystemParams p = common(std::move(basis), std::move(dye), cutoff_thz, gamma_ghz, pump_ghz);
        p.kappa_ghz = kappa_ghz;
        p.xi = p.rates.up[0] * p.density() / kappa_ghz;
        p.loss_input = LossInput::kappa;
        p.validate();
        return p;
    }

    double density() const { return dye->density(); }
    double cutoff_thz() const { return rates.cutoff_thz; }
    int mode_count() const { return basis->size(); }

    SystemParams with_pump(double pump) const {
        SystemParams p = *this;
        p.pump_ghz = pump;
        p.validate();
        return p;
    }

    double threshold_gain(int i) const {
        return dyecav::threshold_gain(rates.up[i], rates.down[i], kappa_ghz / density());
    }

    void validate() const {
        if (!basis || !dye) throw std::invalid_argument("system: basis and dye are required");
        if (!(pump_ghz >= 0.0) || !std::isfinite(pump_ghz)) throw std::invalid_argument("system: pump must be >= 0");
        if (!(gamma_ghz > 0.0)) throw std::invalid_argument("system: Gamma must be positive");
        if (!(kappa_ghz > 0.0)) throw std::invalid_argument("system: kappa must be positive");
    }

  private:
    static SystemParams common(std::shared_ptr<ModeBasis const> basis, std::shared_ptr<DyeModel const> dye,
                               double cutoff_thz, double gamma_ghz, double pump_ghz) {
        if (!basis || !dye) throw std::invalid_argument("system: basis and dye are required");
        SystemParams p;
        p.rates = rates_for_basis(*dye, *basis, cutoff_thz);
        p.basis = std::move(basis);
        p.dye = std::move(dye);
        p.gamma_ghz = gamma_ghz;
        p.pump_ghz = pump_ghz;
        return p;
    }
};

/// Mode occupations n_i and the excited-molecule fraction f(r) on the grid.
struct SystemState {
    Eigen::VectorXd n;
    Eigen::MatrixXd f;

    static SystemState dark(ModeBasis const& basis) {
        int const pts = basis.grid().points();
        return {Eigen::VectorXd::Zero(basis.size()), Eigen::MatrixXd::Zero(pts, pts)};
    }

    bool within_bounds() const {
        return (n.array() >= 0.0).all() && (f.array() >= 0.0).all() && (f.array() <= 1.0).all() && n.allFinite() &&
               f.allFinite();
    }
};

/// G_i[f] = quadrature(|psi_i|^2 f)
inline double gain(Eigen::MatrixXd const& f, Eigen::MatrixXd const& mode_density, SpatialGrid const& grid) {
    grid.check_shape(f);
    grid.check_shape(mode_density);
    return grid.integrate(mode_density.cwiseProduct(f));
}

/// Terms of the rate equations that are linear in the state, frozen at one state:
///   dn_i/dt = source_i - decay_i n_i
///   df/dt   = up (1 - f) - down f
struct RateCoefficients {
    Eigen::VectorXd gain;    // G_i
    Eigen::VectorXd source;  // R_down^i rho G_i
    Eigen::VectorXd decay;   // kappa + R_up^i rho (1 - G_i) - R_down^i rho G_i
    Eigen::MatrixXd up;      // P + sum_i R_up^i |psi_i|^2 n_i
    Eigen::MatrixXd down;    // Gamma + sum_i R_down^i |psi_i|^2 (n_i + 1)
};

inline RateCoefficients rate_coefficients(SystemState const& s, SystemParams const& p) {
    auto const& basis = *p.basis;
    double const rho = p.density();
    RateCoefficients c;
    c.gain = basis.project(s.f);
    c.source = rho * p.rates.down.cwiseProduct(c.gain);
    c.decay = (p.kappa_ghz + rho * p.rates.up.array() * (1.0 - c.gain.array()) - c.source.array()).matrix();
    c.up = basis.synthesize(p.rates.up.cwiseProduct(s.n));
    c.up.array() += p.pump_ghz;
    c.down = basis.synthesize(p.rates.down.cwiseProduct((s.n.array() + 1.0).matrix()));
    c.down.array() += p.gamma_ghz;
    return c;
}

/// Time derivatives of both rate equations; the mode sums run over the full basis.
inline SystemState rhs(SystemState const& s, SystemParams const& p) {
    RateCoefficients const c = rate_coefficients(s, p);
    SystemState d;
    d.n = c.source - c.decay.cwiseProduct(s.n);
    d.f = (c.up.array() * (1.0 - s.f.array()) - c.down.array() * s.f.array()).matrix();
    return d;
}

/// RHS residuals normalized per unit rate scale:
///   occupation: |dn_i/dt| / ((n_i + 1)(kappa + R_up rho (1-G) + R_down rho G))
///   fraction:   |df/dt| / (up + down)
struct Residual {
    double occupation = 0.0;
    double fraction = 0.0;
    double max() const { return std::max(occupation, fraction); }
};

inline Residual steady_residual(SystemState const& s, RateCoefficients const& c) {
    Residual r;
    Eigen::ArrayXd const n_dot = c.source.array() - c.decay.array() * s.n.array();
    Eigen::ArrayXd const scale = (s.n.array() + 1.0) * (c.decay.array() + 2.0 * c.source.array());
    r.occupation = (n_dot.abs() / scale).maxCoeff();
    Eigen::ArrayXXd const f_dot = c.up.array() * (1.0 - s.f.array()) - c.down.array() * s.f.array();
    r.fraction = (f_dot.abs() / (c.up.array() + c.down.array())).maxCoeff();
    return r;
}

inline Residual steady_residual(SystemState const& s, SystemParams const& p) {
    return steady_residual(s, rate_coefficients(s, p));
}

/// Relative mismatch of rho P quad(1-f) = kappa sum n + rho Gamma quad(f); the
/// photon-dye exchange terms cancel identically when both equations are summed.
inline double excitation_balance_residual(SystemState const& s, SystemParams const& p) {
    auto const& grid = p.basis->grid();
    double const rho = p.density();
    double const quad_f = grid.integrate(s.f);
    double const area = 4.0 * grid.half_width() * grid.half_width();
    double const pumped = rho * p.pump_ghz * (area - quad_f);
    double const lost = p.kappa_ghz * s.n.sum() + rho * p.gamma_ghz * quad_f;
    double const scale = std::max(pumped, lost);
    if (scale == 0.0) return 0.0;
    return std::abs(pumped - lost) / scale;
}

/// Stationary f at an arbitrary point for given occupations; used for axis slices.
inline double stationary_fraction_at(Eigen::VectorXd const& n, SystemParams const& p, double x, double y) {
    double up = p.pump_ghz, down = p.gamma_ghz;
    for (int i = 0; i < p.mode_count(); ++i) {
        double const d = p.basis->density_at(i, x, y);
        up += p.rates.up[i] * d * n[i];
        down += p.rates.down[i] * d * (n[i] + 1.0);
    }
    return up / (up + down);
}

/// State with f at its stationary value for the given occupations.
inline SystemState stationary_state(Eigen::VectorXd const& n, SystemParams const& p) {
    auto const& basis = *p.basis;
    Eigen::MatrixXd a = basis.synthesize(p.rates.up.cwiseProduct(n));
    a.array() += p.pump_ghz;
    Eigen::MatrixXd b = basis.synthesize(p.rates.down.cwiseProduct((n.array() + 1.0).matrix()));
    b.array() += p.gamma_ghz;
    return {n, a.cwiseQuotient(a + b)};
}

struct OccupationEstimate {
    double occupation;  // +inf when divergent
    double bracket;
    bool divergent;
};

/// Stationary occupation for a given gain,
///   n = (R_up/R_down (1-G)/G - 1 + kappa/(R_down rho G))^(-1),
/// flagged divergent when the bracket is not positive (at or above threshold).
inline OccupationEstimate analytic_occupation(double gain, double r_up, double r_down, double kappa, double rho) {
    if (!(gain > 0.0 && gain <= 1.0)) throw std::invalid_argument("analytic_occupation: gain must lie in (0, 1]");
    double const bracket = r_up / r_down * (1.0 - gain) / gain - 1.0 + kappa / (r_down * rho * gain);
    if (!(bracket > 0.0)) return {std::numeric_limits<double>::infinity(), bracket, true};
    return {1.0 / bracket, bracket, false};
}

inline OccupationEstimate analytic_occupation(double gain, int i, SystemParams const& p) {
    return analytic_occupation(gain, p.rates.up[i], p.rates.down[i], p.kappa_ghz, p.density());
}

} // namespace dyecav
