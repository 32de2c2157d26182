#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "dyecav/hermite.hpp"
#include "dyecav/mode_basis.hpp"

using namespace dyecav;

namespace {

// closed-form eigenfunctions, from H_0..H_3 = 1, 2x, 4x^2 - 2, 8x^3 - 12x
double phi_closed(int n, double x) {
    double const g = std::exp(-0.5 * x * x) / std::pow(units::pi, 0.25);
    switch (n) {
    case 0: return g;
    case 1: return g * 2.0 * x / std::sqrt(2.0);
    case 2: return g * (4.0 * x * x - 2.0) / std::sqrt(8.0);
    case 3: return g * (8.0 * x * x * x - 12.0 * x) / std::sqrt(48.0);
    }
    return 0.0;
}

ModeBasis small_basis(int quanta = 4, int points = 96) {
    TrapConfig trap;
    trap.max_quanta = quanta;
    return build_basis(trap, SpatialGrid(8.0, points));
}

} // namespace

TEST(Hermite, MatchesClosedForms) {
    for (double x : {-3.1, -0.7, 0.0, 0.4, 1.9, 4.2})
        for (int n = 0; n <= 3; ++n) EXPECT_NEAR(oscillator_eigenfunction(n, x), phi_closed(n, x), 1e-14) << n << " " << x;
}

TEST(Hermite, ParityAndNorm) {
    // phi_n(-x) = (-1)^n phi_n(x); fine trapezoid norm of phi_20 is 1
    for (int n = 0; n <= 20; ++n)
        EXPECT_NEAR(oscillator_eigenfunction(n, -1.3), (n % 2 ? -1 : 1) * oscillator_eigenfunction(n, 1.3), 1e-13);
    double const h = 1e-3;
    double sum = 0.0;
    for (double x = -14.0; x <= 14.0; x += h) sum += std::pow(oscillator_eigenfunction(20, x), 2) * h;
    EXPECT_NEAR(sum, 1.0, 1e-9);
}

TEST(Hermite, NegativeIndexThrows) { EXPECT_THROW(oscillator_eigenfunction(-1, 0.0), std::invalid_argument); }

TEST(SpatialGrid, QuadratureOracles) {
    SpatialGrid g(8.0, 129);
    Eigen::MatrixXd one = Eigen::MatrixXd::Ones(129, 129);
    EXPECT_NEAR(g.integrate(one), 256.0, 1e-10);
    Eigen::MatrixXd gauss(129, 129);
    for (int i = 0; i < 129; ++i)
        for (int j = 0; j < 129; ++j) gauss(i, j) = std::exp(-g.nodes()[i] * g.nodes()[i] - 2.0 * g.nodes()[j] * g.nodes()[j]);
    EXPECT_NEAR(g.integrate(gauss), units::pi / std::sqrt(2.0), 1e-12);
    for (int k = 0; k < 129; ++k) EXPECT_DOUBLE_EQ(g.nodes()[k], -g.nodes()[128 - k]);
}

TEST(SpatialGrid, RejectsBadShapes) {
    EXPECT_THROW(SpatialGrid(0.0, 64), std::invalid_argument);
    EXPECT_THROW(SpatialGrid(8.0, 2), std::invalid_argument);
    SpatialGrid g(8.0, 32);
    EXPECT_THROW(g.check_shape(Eigen::MatrixXd::Zero(31, 32)), std::invalid_argument);
}

TEST(ModeBasis, DefaultBasisIsOrthonormal) {
    ModeBasis const b = build_basis(TrapConfig{}, SpatialGrid{});
    ASSERT_EQ(b.size(), 66);
    Eigen::MatrixXd const s = overlap_matrix(b);
    EXPECT_LT((s - Eigen::MatrixXd::Identity(66, 66)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(ModeBasis, EnergiesOrderingAndMirrors) {
    ModeBasis const b = small_basis();
    ASSERT_EQ(b.size(), 15);
    EXPECT_EQ(b[0].nu_x, 0);
    EXPECT_EQ(b[0].nu_y, 0);
    for (int i = 0; i < b.size(); ++i) {
        double const expected = 4.0 * ((b[i].nu_x + 0.5) + 0.99 * (b[i].nu_y + 0.5));
        EXPECT_NEAR(b[i].energy_thz, expected, 1e-12);
        if (i > 0) EXPECT_LE(b[i - 1].energy_thz, b[i].energy_thz);
        EXPECT_EQ(b.mirror_of(b.mirror_of(i)), i);
        EXPECT_EQ(b[b.mirror_of(i)].nu_x, b[i].nu_y);
        EXPECT_EQ(*b.index_of(b[i].nu_x, b[i].nu_y), i);
    }
    // anisotropy 0.99 puts (0,1) just below (1,0)
    EXPECT_EQ(b.label(1), "0:1");
    EXPECT_EQ(b.label(2), "1:0");
    EXPECT_FALSE(b.index_of(5, 0).has_value());
}

TEST(ModeBasis, DensityMatchesProductOfEigenfunctions) {
    ModeBasis const b = small_basis();
    double const ly = 1.0 / std::sqrt(0.99);
    int const i = *b.index_of(2, 1);
    double const x = 0.37, y = -1.1;
    double const amp = oscillator_eigenfunction(2, x) * oscillator_eigenfunction(1, y / ly) / std::sqrt(ly);
    EXPECT_NEAR(b.density_at(i, x, y), amp * amp, 1e-14);
}

TEST(ModeBasis, SeparableOperationsMatchBruteForce) {
    ModeBasis const b = small_basis(3, 48);
    auto const& g = b.grid();
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd field(48, 48);
    for (int i = 0; i < 48; ++i)
        for (int j = 0; j < 48; ++j) field(i, j) = u(rng);
    Eigen::VectorXd coef(b.size());
    for (int k = 0; k < b.size(); ++k) coef[k] = u(rng);

    Eigen::VectorXd const proj = b.project(field);
    Eigen::MatrixXd const synth = b.synthesize(coef);
    Eigen::MatrixXd const gram = b.weighted_gram(field);
    Eigen::MatrixXd direct_synth = Eigen::MatrixXd::Zero(48, 48);
    for (int k = 0; k < b.size(); ++k) {
        EXPECT_NEAR(proj[k], g.integrate(b[k].density.cwiseProduct(field)), 1e-12);
        direct_synth += coef[k] * b[k].density;
        for (int l = 0; l < b.size(); ++l)
            EXPECT_NEAR(gram(k, l), g.integrate(b[k].density.cwiseProduct(b[l].density).cwiseProduct(field)), 1e-12);
    }
    EXPECT_LT((synth - direct_synth).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ModeBasis, DensitiesIntegrateToOne) {
    ModeBasis const b = small_basis();
    Eigen::MatrixXd const one = Eigen::MatrixXd::Ones(96, 96);
    Eigen::VectorXd const g = b.project(one);
    for (int k = 0; k < b.size(); ++k) EXPECT_NEAR(g[k], 1.0, 1e-8);
}

TEST(ModeBasis, SmallDomainFailsContainment) {
    TrapConfig trap;
    EXPECT_THROW(build_basis(trap, SpatialGrid(2.5, 64)), GridError);
}
