#include <algorithm>
#include <cmath>
#include <sstream>
#include <memory>
#include <random>

#include <gtest/gtest.h>

#include "dyecav/integrator.hpp"
#include "dyecav/self_consistent.hpp"
#include "dyecav/steady_state.hpp"
#include "dyecav/system.hpp"

using namespace dyecav;

namespace {

std::shared_ptr<ModeBasis const> small_basis() {
    static auto const b = [] {
        TrapConfig trap;
        trap.max_quanta = 4;
        return std::make_shared<ModeBasis const>(build_basis(trap, SpatialGrid(7.0, 96)));
    }();
    return b;
}

std::shared_ptr<DyeModel const> surrogate() {
    static auto const d = std::make_shared<DyeModel const>(DyeModel::surrogate(SurrogateParams{}, 1e8));
    return d;
}

SystemParams params(double xi, double pump) { return SystemParams::from_xi(small_basis(), surrogate(), 515.0, xi, 0.2, pump); }

double lowest_threshold(SystemParams const& p) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < p.mode_count(); ++i) best = std::min(best, first_threshold_pump(i, p.xi, p.rates, p.gamma_ghz));
    return best;
}

} // namespace

TEST(System, KappaFromXi) {
    SystemParams const p = params(2.0, 0.0);
    EXPECT_NEAR(p.kappa_ghz, 1e-6 * 1e8 / 2.0, 1e-12);
    SystemParams const q = SystemParams::from_kappa(small_basis(), surrogate(), 515.0, 50.0, 0.2, 0.0);
    EXPECT_NEAR(q.xi, 2.0, 1e-12);
    EXPECT_THROW(params(0.0, 0.0), std::invalid_argument);
    EXPECT_THROW(params(1.0, -1.0), std::invalid_argument);
}

TEST(System, RhsVanishesForHomogeneousBoseEinsteinState) {
    // with kappa -> 0 and homogeneous f, dn/dt = 0 at the Bose-Einstein occupation
    SystemParams p = SystemParams::from_kappa(small_basis(), surrogate(), 515.0, 1e-300, 0.2, 0.0);
    double const f = 0.005;  // mu below the cutoff
    double const mu = chemical_potential(f, *p.dye);
    SystemState s;
    s.n.resize(p.mode_count());
    for (int i = 0; i < p.mode_count(); ++i)
        s.n[i] = 1.0 / (std::exp(p.dye->thermo().beta_per_thz * (p.rates.frequency_thz[i] - mu)) - 1.0);
    s.f = Eigen::MatrixXd::Constant(96, 96, f);
    RateCoefficients const c = rate_coefficients(s, p);
    for (int i = 0; i < p.mode_count(); ++i) {
        double const dn = c.source[i] - c.decay[i] * s.n[i];
        EXPECT_NEAR(dn / c.source[i], 0.0, 1e-6);  // G = f only up to quadrature
    }
}

TEST(System, AnalyticOccupationOracle) {
    auto const e = analytic_occupation(0.5, 2.0, 1.0, 10.0, 100.0);
    // bracket = 2 * 1 - 1 + 10/(1*100*0.5) = 1.2
    EXPECT_NEAR(e.bracket, 1.2, 1e-15);
    EXPECT_NEAR(e.occupation, 1.0 / 1.2, 1e-15);
    EXPECT_TRUE(analytic_occupation(0.9, 0.1, 1.0, 0.0, 1.0).divergent);
    EXPECT_THROW(analytic_occupation(0.0, 1.0, 1.0, 1.0, 1.0), std::invalid_argument);
}

TEST(System, ExcitationBalanceHoldsIdenticallyForStationaryFraction) {
    // summing both equations: the balance residual equals the sum of the RHS terms
    SystemParams const p = params(1.0, 0.01);
    SystemState s;
    s.n = Eigen::VectorXd::LinSpaced(p.mode_count(), 3.0, 0.5);
    s.f = Eigen::MatrixXd::Constant(96, 96, 0.05);
    SystemState const d = rhs(s, p);
    auto const& g = p.basis->grid();
    double const rho = p.density();
    double const lhs = d.n.sum() + rho * g.integrate(d.f);
    double const area = 196.0;
    double const expected = rho * p.pump_ghz * (area - g.integrate(s.f)) - p.kappa_ghz * s.n.sum() -
                            rho * p.gamma_ghz * g.integrate(s.f);
    EXPECT_NEAR(lhs, expected, 1e-9 * std::abs(expected));
}

TEST(Integrator, Phi1Oracle) {
    Eigen::ArrayXd z(5);
    z << 0.0, -1e-10, -1e-3, -1.0, -50.0;
    Eigen::ArrayXd const v = detail::phi1(z);
    EXPECT_DOUBLE_EQ(v[0], 1.0);
    EXPECT_NEAR(v[1], 1.0 - 5e-11, 1e-16);
    EXPECT_NEAR(v[2], 1.0 - 5e-4 + 1e-6 / 6.0 - 1e-9 / 24.0 + 1e-12 / 120.0, 1e-15);
    EXPECT_NEAR(v[3], 1.0 - std::exp(-1.0), 1e-15);
    EXPECT_NEAR(v[4], 1.0 / 50.0, 1e-15);
}

TEST(Integrator, ExponentialAdvanceKeepsBounds) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        SystemState x{Eigen::VectorXd::Random(4).cwiseAbs() * 100.0, Eigen::MatrixXd::Random(5, 5).cwiseAbs()};
        Eigen::VectorXd const s = Eigen::VectorXd::Random(4).cwiseAbs() * 1e3;
        Eigen::VectorXd d = Eigen::VectorXd::Random(4) * 10.0;  // decay may be negative
        Eigen::MatrixXd const up = Eigen::MatrixXd::Random(5, 5).cwiseAbs() * 1e4;
        Eigen::MatrixXd const down = Eigen::MatrixXd::Random(5, 5).cwiseAbs() * 1e4;
        SystemState const y = detail::exponential_advance(x, s, d, up, down, std::pow(10.0, -6.0 + 6.0 * u(rng)));
        EXPECT_TRUE(y.within_bounds());
    }
}

TEST(Integrator, ExponentialAdvanceIsExactForConstantCoefficients) {
    SystemState x{Eigen::VectorXd::Constant(1, 2.0), Eigen::MatrixXd::Constant(1, 1, 0.1)};
    Eigen::VectorXd const s = Eigen::VectorXd::Constant(1, 3.0), d = Eigen::VectorXd::Constant(1, 0.5);
    Eigen::MatrixXd const up = Eigen::MatrixXd::Constant(1, 1, 2.0), down = Eigen::MatrixXd::Constant(1, 1, 6.0);
    double const h = 0.7;
    SystemState const y = detail::exponential_advance(x, s, d, up, down, h);
    EXPECT_NEAR(y.n[0], 6.0 + (2.0 - 6.0) * std::exp(-0.5 * h), 1e-13);
    EXPECT_NEAR(y.f(0, 0), 0.25 + (0.1 - 0.25) * std::exp(-8.0 * h), 1e-14);
}

TEST(Solvers, DarkStateAtZeroPump) {
    SystemParams const p = params(1.0, 0.0);
    SteadyState const s = solve_self_consistent(p);
    EXPECT_EQ(s.state.n.norm(), 0.0);
    EXPECT_TRUE(s.selected.empty());
}

TEST(Solvers, FarBelowThresholdMatchesHomogeneousEstimate) {
    SystemParams const p0 = params(1.0, 0.0);
    SystemParams const p = p0.with_pump(0.01 * lowest_threshold(p0));
    SteadyState const s = solve_self_consistent(p);
    double const g = homogeneous_gain(p.pump_ghz, p.gamma_ghz);
    for (int i = 0; i < p.mode_count(); ++i) {
        double const n = analytic_occupation(g, i, p).occupation;
        EXPECT_NEAR(s.state.n[i], n, 1e-3 * n);
    }
    EXPECT_TRUE(s.selected.empty());
}

TEST(Solvers, IntegratorAndSelfConsistentAgree) {
    SystemParams const p0 = params(1.0, 0.0);
    for (double m : {0.5, 3.0}) {
        SystemParams const p = p0.with_pump(m * lowest_threshold(p0));
        SteadyState const a = solve_self_consistent(p);
        SteadyState const b = evolve_to_steady(p);
        EXPECT_EQ(a.selected, b.selected);
        for (int i = 0; i < p.mode_count(); ++i)
            if (a.state.n[i] > 1.0) EXPECT_NEAR(b.state.n[i], a.state.n[i], 1e-4 * a.state.n[i]) << i;
        EXPECT_LT(a.residual.max(), 1e-9);
        EXPECT_LT(b.residual.max(), 1e-9);
        EXPECT_LT(a.balance_residual, 1e-6);
        EXPECT_LT(b.balance_residual, 1e-6);
        EXPECT_TRUE(b.state.within_bounds());
    }
}

TEST(Solvers, SelectedModesClampAtThresholdGain) {
    SystemParams const p0 = params(20.0, 0.0);
    SteadyState const s = solve_self_consistent(p0.with_pump(2.0 * lowest_threshold(p0)));
    ASSERT_TRUE(s.ground_selected());
    EXPECT_NEAR(s.gains[0], s.threshold_gains[0], 1e-4 * s.threshold_gains[0]);
    for (int i = 0; i < p0.mode_count(); ++i) EXPECT_LE(s.gains[i], s.threshold_gains[i] * (1.0 + 1e-6));
}

TEST(Solvers, WarmStartReproducesColdStart) {
    SystemParams const p0 = params(1.0, 0.0);
    double const pth = lowest_threshold(p0);
    SteadyState const near = solve_self_consistent(p0.with_pump(2.0 * pth));
    SteadyState const warm = solve_self_consistent(p0.with_pump(4.0 * pth), {}, {}, &near);
    SteadyState const cold = solve_self_consistent(p0.with_pump(4.0 * pth));
    EXPECT_EQ(warm.selected, cold.selected);
    for (int i = 0; i < p0.mode_count(); ++i) EXPECT_NEAR(warm.state.n[i], cold.state.n[i], 1e-6 * (cold.state.n[i] + 1));
}

TEST(Solvers, IntegratorReportsResidualHistoryOnFailure) {
    SystemParams const p0 = params(1.0, 0.0);
    SolverTolerances tol;
    tol.max_steps = 5;
    try {
        evolve_to_steady(p0.with_pump(lowest_threshold(p0)), tol);
        FAIL() << "expected ConvergenceError";
    } catch (ConvergenceError const& e) {
        EXPECT_EQ(e.residual_history().size(), 5u);
    }
}

TEST(Solvers, RejectsInvalidInitialState) {
    SystemParams const p = params(1.0, 0.01);
    SystemState bad = SystemState::dark(*p.basis);
    bad.f(3, 3) = 1.5;
    EXPECT_THROW(evolve_to_steady(p, {}, {}, &bad), std::invalid_argument);
}

TEST(Detector, DualCriterion) {
    SystemParams const p0 = params(20.0, 0.0);
    SteadyState const s = solve_self_consistent(p0.with_pump(2.0 * lowest_threshold(p0)));
    for (auto const& r : s.records) {
        EXPECT_EQ(r.selected, r.occupation >= 100.0 && r.clamp_deviation <= 1e-2);
        EXPECT_NEAR(r.clamp_deviation, std::abs(r.gain - r.threshold_gain) / r.threshold_gain, 1e-15);
    }
    SelectionCriteria strict;
    strict.min_occupation = 1e12;
    EXPECT_TRUE(detect_selected(s, p0, strict).empty());
}

TEST(Output, SteadyStateCsvShape) {
    SystemParams const p0 = params(1.0, 0.0);
    SteadyState const s = solve_self_consistent(p0.with_pump(0.5 * lowest_threshold(p0)));
    std::ostringstream os;
    write_steady_state_csv(os, s, *p0.basis);
    std::string const text = os.str();
    EXPECT_EQ(text.substr(0, text.find('\n')), "nu_x,nu_y,energy_THz,n,G,G_th,selected");
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), p0.mode_count() + 1);
    auto const slice = fraction_slice_x(s, p0.with_pump(s.pump_ghz), 11);
    ASSERT_EQ(slice.size(), 11u);
    EXPECT_NEAR(slice.front().first, -7.0, 1e-12);
    for (int k = 0; k < 11; ++k) EXPECT_NEAR(slice[k].second, slice[10 - k].second, 1e-12);
    for (auto const& [x, f] : slice) EXPECT_TRUE(f > 0.0 && f < 1.0);
}
