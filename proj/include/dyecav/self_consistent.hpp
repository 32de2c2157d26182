#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dyecav/steady_state.hpp"
#include "dyecav/system.hpp"
#include "dyecav/thresholds.hpp"

namespace dyecav {

namespace detail {

// Stationary problem reduced to the occupations. With y = ln n, f(r) is eliminated
// through its stationary value a/(a + b) and the mode equations become
//   r_i(y) = B_i (1 + e^{-y_i}) / D_i - 1 = 0,   B = R_down rho G,  D = kappa + R_up rho (1 - G).
struct ReducedEval {
    Eigen::VectorXd y, n, r;
    Eigen::VectorXd gain, b_term, d_term;
    Eigen::MatrixXd f, total;  // f and a + b on the grid
    double merit = 0.0;        // 0.5 |r|^2
    double max_abs = 0.0;
};

inline ReducedEval reduced_eval(Eigen::VectorXd const& y, SystemParams const& p) {
    auto const& basis = *p.basis;
    double const rho = p.density();
    ReducedEval e;
    e.y = y;
    e.n = y.array().exp().matrix();
    Eigen::MatrixXd a = basis.synthesize(p.rates.up.cwiseProduct(e.n));
    a.array() += p.pump_ghz;
    Eigen::MatrixXd b = basis.synthesize(p.rates.down.cwiseProduct((e.n.array() + 1.0).matrix()));
    b.array() += p.gamma_ghz;
    e.total = a + b;
    e.f = a.cwiseQuotient(e.total);
    e.gain = basis.project(e.f);
    e.b_term = rho * p.rates.down.cwiseProduct(e.gain);
    e.d_term = (p.kappa_ghz + rho * p.rates.up.array() * (1.0 - e.gain.array())).matrix();
    e.r = (e.b_term.array() * (1.0 + (-y.array()).exp()) / e.d_term.array() - 1.0).matrix();
    e.merit = 0.5 * e.r.squaredNorm();
    e.max_abs = e.r.cwiseAbs().maxCoeff();
    return e;
}

inline Eigen::MatrixXd reduced_jacobian(ReducedEval const& e, SystemParams const& p) {
    auto const& basis = *p.basis;
    double const rho = p.density();
    Eigen::MatrixXd const inv_total = e.total.cwiseInverse();
    Eigen::MatrixXd const m_up = basis.weighted_gram((1.0 - e.f.array()).matrix().cwiseProduct(inv_total));
    Eigen::MatrixXd const m_down = basis.weighted_gram(e.f.cwiseProduct(inv_total));
    // dG_i/dy_j
    Eigen::MatrixXd dg = m_up * p.rates.up.cwiseProduct(e.n).asDiagonal();
    dg.noalias() -= m_down * p.rates.down.cwiseProduct(e.n).asDiagonal();
    Eigen::ArrayXd const inv_n = (-e.y.array()).exp();
    Eigen::ArrayXd const d = e.d_term.array();
    Eigen::ArrayXd const c =
        (1.0 + inv_n) * rho * (p.rates.down.array() * d + e.b_term.array() * p.rates.up.array()) / (d * d);
    Eigen::MatrixXd j = c.matrix().asDiagonal() * dg;
    j.diagonal().array() -= e.b_term.array() * inv_n / d;
    return j;
}

struct NewtonOutcome {
    bool converged = false;
    int iterations = 0;
    ReducedEval last;
};

// Damped Newton with backtracking on 0.5 |r|^2; steps in y are capped at max_step.
inline NewtonOutcome reduced_newton(Eigen::VectorXd y, SystemParams const& p, double tol, int max_iterations,
                                    std::vector<double>& history) {
    constexpr double max_step = 4.0;
    NewtonOutcome out;
    out.last = reduced_eval(y, p);
    for (int it = 0; it < max_iterations; ++it) {
        history.push_back(out.last.max_abs);
        if (out.last.max_abs <= tol) {
            out.converged = true;
            return out;
        }
        Eigen::MatrixXd const jac = reduced_jacobian(out.last, p);
        Eigen::VectorXd step = jac.partialPivLu().solve(-out.last.r);
        if (!step.allFinite()) return out;
        double const biggest = step.cwiseAbs().maxCoeff();
        if (biggest > max_step) step *= max_step / biggest;
        double alpha = 1.0;
        bool accepted = false;
        for (int k = 0; k < 40; ++k) {
            ReducedEval trial = reduced_eval(out.last.y + alpha * step, p);
            if (std::isfinite(trial.merit) && trial.merit <= (1.0 - 1e-4 * alpha) * out.last.merit) {
                out.last = std::move(trial);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        ++out.iterations;
        if (!accepted) {
            // at rounding level the merit can stop decreasing; accept if already tight
            if (out.last.max_abs <= 1e3 * tol) out.converged = true;
            return out;
        }
    }
    history.push_back(out.last.max_abs);
    out.converged = out.last.max_abs <= tol;
    return out;
}

// Pseudo-transient continuation: linearly implicit Euler steps of the reduced dynamics
// dy/dt = D r(y), with the pseudo time step sized so that no log-occupation moves by more
// than about 1/2 per step. Crosses from a vanished branch (fold) to the attracting one,
// where plain Newton stalls; for large steps it turns into Newton's method.
inline NewtonOutcome reduced_pseudo_transient(Eigen::VectorXd y, SystemParams const& p, double tol,
                                              int max_iterations, std::vector<double>& history) {
    NewtonOutcome out;
    out.last = reduced_eval(y, p);
    double dtau = 1.0 / out.last.d_term.maxCoeff();
    for (int it = 0; it < max_iterations; ++it) {
        history.push_back(out.last.max_abs);
        if (out.last.max_abs <= tol) {
            out.converged = true;
            return out;
        }
        Eigen::MatrixXd a = -reduced_jacobian(out.last, p);
        a.diagonal().array() += 1.0 / (dtau * out.last.d_term.array());
        Eigen::VectorXd const step = a.partialPivLu().solve(out.last.r);
        ++out.iterations;
        double const biggest = step.allFinite() ? step.cwiseAbs().maxCoeff() : std::numeric_limits<double>::infinity();
        if (biggest > 1.0) {
            dtau *= 0.5 / std::min(biggest, 1e3);
            continue;
        }
        ReducedEval trial = reduced_eval(out.last.y + step, p);
        if (!std::isfinite(trial.merit)) {
            dtau *= 0.25;
            continue;
        }
        out.last = std::move(trial);
        dtau *= std::clamp(0.5 / std::max(biggest, 1e-12), 0.5, 10.0);
    }
    history.push_back(out.last.max_abs);
    out.converged = out.last.max_abs <= tol;
    return out;
}

inline Eigen::VectorXd homogeneous_guess(SystemParams const& p) {
    double const g = homogeneous_gain(p.pump_ghz, p.gamma_ghz);
    Eigen::VectorXd y(p.mode_count());
    for (int i = 0; i < p.mode_count(); ++i) {
        auto const est = analytic_occupation(g, i, p);
        // above a threshold already: start the mode at a large occupation
        y[i] = est.divergent ? std::log(1e4) : std::log(est.occupation);
    }
    return y;
}

inline double lowest_first_threshold(SystemParams const& p) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < p.mode_count(); ++i) best = std::min(best, first_threshold_pump(i, p.xi, p.rates, p.gamma_ghz));
    return best;
}

} // namespace detail

/// Steady state from the stationary equations, solved by damped Newton on the occupations
/// with pump continuation. Cold starts begin well below the lowest first threshold where
/// the homogeneous estimate is accurate; `warm` continues from a converged neighbour.
/// Throws ConvergenceError (recommending the integrator) if continuation stalls.
inline SteadyState solve_self_consistent(SystemParams const& params, SolverTolerances const& tol,
                                         SelectionCriteria const& criteria, WarmStart const* warm) {
    auto const start = std::chrono::steady_clock::now();
    SolverInfo info;
    info.method = "self-consistent";
    auto finish = [&](SystemState state) {
        info.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return make_steady_state(std::move(state), params, criteria, info);
    };

    if (params.pump_ghz == 0.0) return finish(SystemState::dark(*params.basis));

    // r bounds the normalized occupation residual; the f residual is zero by construction
    double const newton_tol = 0.1 * tol.residual;
    std::vector<double> history;

    double from_pump;
    Eigen::VectorXd y;
    if (warm && warm->pump_ghz > 0.0 && warm->n.size() == params.mode_count() && (warm->n.array() > 0.0).all()) {
        from_pump = warm->pump_ghz;
        y = warm->n.array().log().matrix();
    } else {
        double const lowest = detail::lowest_first_threshold(params);
        from_pump = std::isfinite(lowest) ? std::min(params.pump_ghz, 0.3 * lowest) : params.pump_ghz;
        y = detail::homogeneous_guess(params.with_pump(from_pump));
        auto const first = detail::reduced_newton(y, params.with_pump(from_pump), newton_tol, tol.max_iterations, history);
        info.iterations += first.iterations;
        ++info.stages;
        if (!first.converged)
            throw ConvergenceError("self-consistent solver: initial stage did not converge; fall back to the integrator",
                                   history);
        y = first.last.y;
    }

    double const target = params.pump_ghz;
    double pump = from_pump;
    double factor = 1.5;
    detail::ReducedEval last;
    while (true) {
        double const remaining = std::log(target / pump);
        bool const up = remaining > 0.0;
        double next = target;
        if (std::abs(remaining) > std::log(factor)) next = up ? pump * factor : pump / factor;
        if (info.stages >= tol.max_stages)
            throw ConvergenceError("self-consistent solver: continuation stage budget exhausted; fall back to the "
                                   "integrator",
                                   history);
        auto const outcome = detail::reduced_newton(y, params.with_pump(next), newton_tol, tol.max_iterations, history);
        info.iterations += outcome.iterations;
        ++info.stages;
        if (outcome.converged) {
            y = outcome.last.y;
            pump = next;
            factor = std::min(1.5, factor * factor);
            if (next == target) {
                last = outcome.last;
                break;
            }
        } else {
            factor = std::sqrt(factor);
            if (factor < 1.02) {
                auto const rescue = detail::reduced_pseudo_transient(y, params.with_pump(next), newton_tol,
                                                                     20 * tol.max_iterations, history);
                info.iterations += rescue.iterations;
                ++info.stages;
                if (rescue.converged) {
                    y = rescue.last.y;
                    pump = next;
                    factor = 1.5;
                    if (next == target) {
                        last = rescue.last;
                        break;
                    }
                    continue;
                }
                char msg[200];
                std::snprintf(msg, sizeof msg,
                              "self-consistent solver: Newton stalled near P = %.6g GHz; fall back to the integrator",
                              pump);
                throw ConvergenceError(msg, history);
            }
        }
    }

    SystemState state{last.n, last.f};
    SteadyState s = finish(std::move(state));
    if (!(s.residual.max() <= tol.residual))
        throw ConvergenceError("self-consistent solver: final residual above tolerance; fall back to the integrator",
                               history);
    return s;
}

inline SteadyState solve_self_consistent(SystemParams const& params, SolverTolerances const& tol = {},
                                         SelectionCriteria const& criteria = {}, SteadyState const* warm = nullptr) {
    if (!warm) return solve_self_consistent(params, tol, criteria, static_cast<WarmStart const*>(nullptr));
    WarmStart const w{warm->pump_ghz, warm->state.n};
    return solve_self_consistent(params, tol, criteria, &w);
}

} // namespace dyecav
