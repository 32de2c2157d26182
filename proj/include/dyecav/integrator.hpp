#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include <Eigen/Dense>

#include "dyecav/steady_state.hpp"
#include "dyecav/system.hpp"

namespace dyecav {

namespace detail {

// phi1(z) = (e^z - 1)/z, evaluated elementwise, z <= 0 mostly
inline Eigen::ArrayXd phi1(Eigen::ArrayXd const& z) {
    return z.unaryExpr([](double v) { return std::abs(v) < 1e-8 ? 1.0 + 0.5 * v : std::expm1(v) / v; });
}
inline Eigen::ArrayXXd phi1(Eigen::ArrayXXd const& z) {
    return z.unaryExpr([](double v) { return std::abs(v) < 1e-8 ? 1.0 + 0.5 * v : std::expm1(v) / v; });
}

// Exact solution over h of the linear system defined by frozen coefficients:
//   n' = s - d n,  f' = u - (u + w) f.
// Written as a sum of non-negative terms, so n >= 0 and 0 <= f <= 1 hold by construction.
inline SystemState exponential_advance(SystemState const& x, Eigen::VectorXd const& s, Eigen::VectorXd const& d,
                                       Eigen::MatrixXd const& u, Eigen::MatrixXd const& w, double h) {
    SystemState out;
    Eigen::ArrayXd const zd = -h * d.array();
    out.n = (x.n.array() * zd.exp() + s.array() * h * phi1(zd)).matrix();
    Eigen::ArrayXXd const lam = u.array() + w.array();
    Eigen::ArrayXXd const zf = -h * lam;
    out.f = (x.f.array() * zf.exp() + u.array() * h * phi1(zf)).min(1.0).matrix();
    return out;
}

} // namespace detail

/// Time integration of both rate equations to a steady state.
///
/// Exponential predictor-corrector: the linear-in-state parts are propagated exactly with
/// frozen coefficients (predictor), then again with coefficients averaged between the start
/// and the predicted state (corrector, second order). The predictor-corrector difference
/// drives the step size, with a relative tolerance on n (scale n + 1) and an absolute one on f.
/// Stops once the normalized RHS residual stays below tol.residual for tol.sustained_steps
/// consecutive accepted steps.
inline SteadyState evolve_to_steady(SystemParams const& p, SolverTolerances const& tol = {},
                                    SelectionCriteria const& criteria = {}, SystemState const* initial = nullptr) {
    auto const start = std::chrono::steady_clock::now();
    SystemState x = initial ? *initial : SystemState::dark(*p.basis);
    p.basis->grid().check_shape(x.f);
    if (x.n.size() != p.mode_count()) throw std::invalid_argument("integrator: occupation vector has the wrong size");
    if (!x.within_bounds()) throw std::invalid_argument("integrator: initial state violates n >= 0, 0 <= f <= 1");

    SolverInfo info;
    info.method = "integrator";
    std::vector<double> history;

    RateCoefficients c0 = rate_coefficients(x, p);
    double const fastest = p.kappa_ghz + p.pump_ghz + p.gamma_ghz + p.density() * p.rates.up.maxCoeff();
    double h = 1e-3 / fastest;
    double t = 0.0;
    int quiet = 0;

    for (long step = 0; step < tol.max_steps; ++step) {
        Residual const res = steady_residual(x, c0);
        history.push_back(res.max());
        if (res.max() < tol.residual) {
            if (++quiet >= tol.sustained_steps) {
                info.simulated_ns = t;
                info.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
                return make_steady_state(std::move(x), p, criteria, info);
            }
        } else {
            quiet = 0;
        }

        // near the fixed point, tolerance follows the residual so controller noise stays below it
        double const rtol = std::min(tol.occupation_rtol, std::max(1e-13, 0.1 * res.max()));
        while (true) {
            SystemState const pred = detail::exponential_advance(x, c0.source, c0.decay, c0.up, c0.down, h);
            RateCoefficients const c1 = rate_coefficients(pred, p);
            SystemState next = detail::exponential_advance(x, 0.5 * (c0.source + c1.source), 0.5 * (c0.decay + c1.decay),
                                                           0.5 * (c0.up + c1.up), 0.5 * (c0.down + c1.down), h);
            double const err_n =
                ((next.n - pred.n).array().abs() / (rtol * (next.n.array() + 1.0))).maxCoeff();
            double const err_f =
                ((next.f - pred.f).array().abs() / (tol.fraction_atol + rtol * next.f.array())).maxCoeff();
            double const err = std::max(err_n, err_f);
            double const grow = err > 0.0 ? 0.9 / std::sqrt(err) : 5.0;
            ++info.iterations;
            if (err <= 1.0) {
                t += h;
                h *= std::clamp(grow, 0.2, 5.0);
                x = std::move(next);
                c0 = rate_coefficients(x, p);
                break;
            }
            h *= std::clamp(grow, 0.1, 0.9);
            if (h < 1e-14 / fastest) {
                char msg[160];
                std::snprintf(msg, sizeof msg, "integrator: step size underflow at t = %.6g ns", t);
                throw ConvergenceError(msg, history);
            }
        }
        if (!x.within_bounds()) throw std::logic_error("integrator: state left the physical bounds");
    }
    char msg[200];
    std::snprintf(msg, sizeof msg, "integrator: no steady state within %ld steps (t = %.6g ns, residual %.3e)",
                  tol.max_steps, t, history.empty() ? 0.0 : history.back());
    throw ConvergenceError(msg, history);
}

} // namespace dyecav
