#include <cmath>
#include <memory>
#include <sstream>

#include <gtest/gtest.h>

#include "dyecav/analysis.hpp"

using namespace dyecav;

namespace {

std::shared_ptr<ModeBasis const> default_basis() {
    static auto const b = std::make_shared<ModeBasis const>(build_basis(TrapConfig{}, SpatialGrid{}));
    return b;
}

DyeModel const& surrogate() {
    static DyeModel const d = DyeModel::surrogate(SurrogateParams{}, 1e8);
    return d;
}

PointSummary point(double pump, std::vector<int> selected, int modes = 3) {
    PointSummary p;
    p.pump_ghz = pump;
    p.converged = true;
    p.selected = std::move(selected);
    p.n = Eigen::VectorXd::Ones(modes);
    p.gains = Eigen::VectorXd::Constant(modes, 0.4);
    p.threshold_gains = Eigen::VectorXd::Constant(modes, 0.5);
    return p;
}

} // namespace

TEST(Pairs, CountAndLabels) {
    auto const& b = *default_basis();
    auto const pairs = mode_pairs(b);
    EXPECT_EQ(pairs.size(), 36u);  // 30 mirrored pairs + 6 diagonal modes
    int symmetric = 0;
    for (auto const& p : pairs) symmetric += p.symmetric();
    EXPECT_EQ(symmetric, 6);
    EXPECT_EQ(pair_label(b, *b.index_of(3, 0)), "0:3/3:0");
    EXPECT_EQ(pair_label(b, *b.index_of(1, 1)), "1:1");
}

TEST(ThresholdSurface, TableShapeAndArgminSwitch) {
    auto const& b = *default_basis();
    std::vector<double> const xis{0.01, 0.1, 1.0, 100.0};
    ThresholdReport const r = threshold_surface(xis, b, surrogate(), 515.0, 0.2);
    ASSERT_EQ(r.columns.size(), 4u);
    EXPECT_NE(r.columns[0].argmin, 0);  // small xi: an excited mode
    EXPECT_GE(r.columns[0].argmin_group.size(), 2u);
    EXPECT_EQ(r.columns[3].argmin, 0);
    std::ostringstream os;
    write_threshold_csv(os, r, b);
    std::string const text = os.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4 * 66 + 1);
    EXPECT_EQ(text.substr(0, text.find('\n')), "xi,nu_x,nu_y,G_th,P_th,is_argmin");
}

TEST(ThresholdSurface, GammaScalesPumpsExactly) {
    auto const& b = *default_basis();
    ThresholdReport const a = threshold_surface({0.3, 3.0}, b, surrogate(), 515.0, 0.2);
    ThresholdReport const c = threshold_surface({0.3, 3.0}, b, surrogate(), 515.0, 0.4);
    for (std::size_t k = 0; k < 2; ++k)
        for (int i = 0; i < 66; ++i) {
            if (std::isinf(a.columns[k].pump[i])) continue;
            EXPECT_EQ(c.columns[k].pump[i], 2.0 * a.columns[k].pump[i]);
            EXPECT_EQ(c.columns[k].gain[i], a.columns[k].gain[i]);
        }
}

TEST(Trace, SelectionAndDeselectionEvents) {
    std::vector<PointSummary> sweep{point(1.0, {}), point(2.0, {0}), point(3.0, {0, 2}), point(4.0, {2}),
                                    PointSummary::failed(5.0, "x"), point(6.0, {1, 2})};
    SelectionTrace const t = trace_selection(sweep);
    ASSERT_EQ(t.events.size(), 4u);
    EXPECT_EQ(t.events[0].mode, 0);
    EXPECT_EQ(t.events[0].pump_ghz, 2.0);
    EXPECT_EQ(t.events[1].mode, 2);
    EXPECT_EQ(t.events[2].kind, SelectionEvent::Kind::deselected);
    EXPECT_NEAR(t.events[2].declamp, 0.2, 1e-15);
    EXPECT_EQ(t.events[3].mode, 1);
    EXPECT_EQ(t.excluded_pumps, std::vector<double>{5.0});
    EXPECT_EQ(*t.first_selection_pump(), 2.0);
    std::vector<PointSummary> descending{point(2.0, {}), point(1.0, {})};
    EXPECT_THROW(trace_selection(descending), std::invalid_argument);
}

TEST(Thermal, ExactBoseEinsteinDataIsRecovered) {
    double const beta = 0.16, mu = 510.0;
    std::vector<double> e, n;
    for (double nu = 515.0; nu < 560.0; nu += 3.7) {
        e.push_back(nu);
        n.push_back(1.0 / (std::exp(beta * (nu - mu)) - 1.0));
    }
    ThermalFit const f = fit_thermal_line(e, n, beta);
    EXPECT_NEAR(f.beta_ratio, 1.0, 1e-12);
    EXPECT_NEAR(f.mu_thz, mu, 1e-9);
    EXPECT_NEAR(f.mu_thermal_thz, mu, 1e-9);
    for (double r : f.residual) EXPECT_NEAR(r, 0.0, 1e-11);
}

TEST(Thermal, ExcessAtHighEnergyGivesNegativeResiduals) {
    double const beta = 0.16, mu = 510.0;
    std::vector<double> e, n;
    for (double nu = 515.0; nu < 560.0; nu += 2.0) {
        e.push_back(nu);
        // flatter than thermal: more photons at high energy
        n.push_back(1.0 / (std::exp(0.8 * beta * (nu - mu)) - 1.0));
    }
    ThermalFit const f = fit_thermal_line(e, n, beta);
    EXPECT_NEAR(f.beta_ratio, 0.8, 1e-12);
    EXPECT_EQ(top_quartile_negative_fraction(f), 1.0);
    std::vector<double> n2;
    for (double nu : e) n2.push_back(1.0 / (std::exp(1.2 * beta * (nu - mu)) - 1.0));
    EXPECT_EQ(top_quartile_negative_fraction(fit_thermal_line(e, n2, beta)), 0.0);
}

TEST(Phase, Labels) {
    EXPECT_EQ(phase_label({}), PhaseLabel::none);
    EXPECT_EQ(phase_label({0}), PhaseLabel::ground_only);
    EXPECT_EQ(phase_label({3}), PhaseLabel::single_excited);
    EXPECT_EQ(phase_label({0, 4}), PhaseLabel::multi);
    EXPECT_STREQ(to_string(PhaseLabel::ground_only), "ground_only");
}

TEST(Phase, BoundaryExtractionFindsMerge) {
    PhaseDiagram d;
    d.pump_grid = {1.0, 2.0, 4.0, 8.0};
    auto column = [](double xi, double first, double second) {
        PhaseColumn c;
        c.xi = xi;
        c.analytic_first = first;
        c.first = {true, true, first * 0.999, first * 1.001, {1, 2}};
        c.second = {true, true, second * 0.999, second * 1.001, {1, 2}};
        return c;
    };
    d.columns = {column(0.01, 1.0, 1.01), column(0.1, 1.0, 1.5), column(1.0, 1.0, 5.0), column(10.0, 1.0, 7.0)};
    PhaseBoundaries const b = extract_phase_boundaries(d);
    ASSERT_EQ(b.lower.size(), 4u);
    EXPECT_TRUE(b.coincident[0]);
    EXPECT_TRUE(b.coincident[1]);
    EXPECT_FALSE(b.coincident[2]);
    ASSERT_TRUE(b.merge_xi.has_value());
    EXPECT_NEAR(*b.merge_xi, std::sqrt(0.1 * 1.0), 1e-15);
    for (double r : b.lower_over_analytic) EXPECT_NEAR(r, 1.0, 1e-6);
}

TEST(Phase, CellsCsvFormat) {
    PhaseDiagram d;
    d.pump_grid = {1.0};
    PhaseColumn c;
    c.xi = 2.0;
    PhaseCell cell;
    cell.xi = 2.0;
    cell.pump_ghz = 0.5;
    cell.converged = true;
    cell.selected = {0, 2};
    c.cells.push_back(cell);
    d.columns.push_back(c);
    std::ostringstream os;
    write_phase_cells_csv(os, d, *default_basis());
    EXPECT_EQ(os.str(), "xi,P,n_selected,ground_selected,selected_modes,converged\n2,0.5,2,1,0:0;1:0,1\n");
}
