#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dyecav/hermite.hpp"

namespace dyecav {

/// Raised when a grid cannot represent the requested basis.
class GridError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct TrapConfig {
    double frequency_thz = 4.0;  // Omega_x / 2pi
    double anisotropy = 0.99;    // Omega_y / Omega_x
    int max_quanta = 10;         // nu_x + nu_y <= max_quanta

    double frequency_y_thz() const { return frequency_thz * anisotropy; }
    // oscillator length scales as frequency^(-1/2); d is the x-axis length
    double length_x() const { return 1.0; }
    double length_y() const { return 1.0 / std::sqrt(anisotropy); }
    int mode_count() const { return (max_quanta + 1) * (max_quanta + 2) / 2; }

    void validate() const {
        if (!(frequency_thz > 0.0)) throw std::invalid_argument("trap: frequency must be positive");
        if (!(anisotropy > 0.0 && anisotropy <= 1.0)) throw std::invalid_argument("trap: anisotropy must lie in (0, 1]");
        if (max_quanta < 0) throw std::invalid_argument("trap: max_quanta must be non-negative");
    }
};

/// Uniform tensor-product lattice over [-L, L]^2 with trapezoidal weights.
/// Fields on the grid are stored as points x points matrices, row = x index, column = y index.
class SpatialGrid {
  public:
    explicit SpatialGrid(double half_width = 8.0, int points_per_axis = 256)
        : half_width_(half_width), points_(points_per_axis) {
        if (!(half_width > 0.0)) throw std::invalid_argument("grid: half width must be positive");
        if (points_per_axis < 3) throw std::invalid_argument("grid: need at least 3 points per axis");
        spacing_ = 2.0 * half_width / (points_per_axis - 1);
        nodes_.resize(points_per_axis);
        weights_.resize(points_per_axis);
        for (int k = 0; k < points_per_axis; ++k) {
            // mirror-exact node placement: x_k = -x_{N-1-k}
            nodes_[k] = spacing_ * (k - 0.5 * (points_per_axis - 1));
            weights_[k] = spacing_;
        }
        weights_[0] = weights_[points_per_axis - 1] = 0.5 * spacing_;
    }

    double half_width() const { return half_width_; }
    int points() const { return points_; }
    double spacing() const { return spacing_; }
    Eigen::Index size() const { return static_cast<Eigen::Index>(points_) * points_; }
    Eigen::VectorXd const& nodes() const { return nodes_; }
    Eigen::VectorXd const& weights() const { return weights_; }
    double weight(int ix, int iy) const { return weights_[ix] * weights_[iy]; }

    Eigen::MatrixXd weight_field() const { return weights_ * weights_.transpose(); }

    double integrate(Eigen::MatrixXd const& field) const {
        check_shape(field);
        return weights_.dot(field * weights_);
    }

    void check_shape(Eigen::MatrixXd const& field) const {
        if (field.rows() != points_ || field.cols() != points_)
            throw std::invalid_argument("field does not match the spatial grid (" + std::to_string(field.rows()) + "x" +
                                        std::to_string(field.cols()) + " vs " + std::to_string(points_) + "^2)");
    }

    bool operator==(SpatialGrid const& other) const {
        return half_width_ == other.half_width_ && points_ == other.points_;
    }

  private:
    double half_width_;
    int points_;
    double spacing_ = 0.0;
    Eigen::VectorXd nodes_;
    Eigen::VectorXd weights_;
};

struct Mode {
    int nu_x = 0;
    int nu_y = 0;
    double energy_thz = 0.0;  // transverse energy E_i / h
    Eigen::MatrixXd density;  // |psi_i|^2 on the grid

    int quanta() const { return nu_x + nu_y; }
};

class ModeBasis;
ModeBasis build_basis(TrapConfig const& trap, SpatialGrid const& grid);

/// Anisotropic 2D oscillator modes, ordered by ascending energy (ties by ascending nu_x).
///
/// Every density factorizes as |phi_a(x)|^2 |phi_b(y)|^2, and the grid weights factorize
/// as w(x) w(y); project/synthesize/weighted_gram use that structure so that sums over
/// modes and nodes cost O(K N^2) with K = max_quanta + 1 instead of O(M N^2).
class ModeBasis {
  public:
    TrapConfig const& trap() const { return trap_; }
    SpatialGrid const& grid() const { return grid_; }
    std::vector<Mode> const& modes() const { return modes_; }
    Mode const& operator[](std::size_t i) const { return modes_[i]; }
    int size() const { return static_cast<int>(modes_.size()); }

    std::optional<int> index_of(int nu_x, int nu_y) const {
        for (int i = 0; i < size(); ++i)
            if (modes_[i].nu_x == nu_x && modes_[i].nu_y == nu_y) return i;
        return std::nullopt;
    }
    /// Index of the (nu_y, nu_x) partner; the mode itself when nu_x == nu_y.
    int mirror_of(int i) const { return *index_of(modes_[i].nu_y, modes_[i].nu_x); }

    std::string label(int i) const { return std::to_string(modes_[i].nu_x) + ":" + std::to_string(modes_[i].nu_y); }

    /// 1D amplitude tables phi_a(x_k / l) / sqrt(l), points x (max_quanta + 1).
    Eigen::MatrixXd const& axis_amplitude_x() const { return amp_x_; }
    Eigen::MatrixXd const& axis_amplitude_y() const { return amp_y_; }

    double amplitude(int i, double x, double y) const {
        Mode const& m = modes_[i];
        double const lx = trap_.length_x(), ly = trap_.length_y();
        return oscillator_eigenfunction(m.nu_x, x / lx) / std::sqrt(lx) *
               oscillator_eigenfunction(m.nu_y, y / ly) / std::sqrt(ly);
    }
    double density_at(int i, double x, double y) const {
        double const a = amplitude(i, x, y);
        return a * a;
    }

    /// out_i = quadrature(|psi_i|^2 * field)
    Eigen::VectorXd project(Eigen::MatrixXd const& field) const {
        grid_.check_shape(field);
        Eigen::MatrixXd const weighted = grid_.weights().asDiagonal() * field * grid_.weights().asDiagonal();
        Eigen::MatrixXd const per_pair = dens_x_.transpose() * weighted * dens_y_;
        Eigen::VectorXd out(size());
        for (int i = 0; i < size(); ++i) out[i] = per_pair(modes_[i].nu_x, modes_[i].nu_y);
        return out;
    }

    /// sum_i coefficients_i |psi_i(r)|^2 on the grid
    Eigen::MatrixXd synthesize(Eigen::VectorXd const& coefficients) const {
        Eigen::MatrixXd c = Eigen::MatrixXd::Zero(dens_x_.cols(), dens_y_.cols());
        for (int i = 0; i < size(); ++i) c(modes_[i].nu_x, modes_[i].nu_y) = coefficients[i];
        return (dens_x_ * c) * dens_y_.transpose();
    }

    /// M_ij = quadrature(|psi_i|^2 |psi_j|^2 * field)
    Eigen::MatrixXd weighted_gram(Eigen::MatrixXd const& field) const {
        grid_.check_shape(field);
        Eigen::MatrixXd const t = pair_x_.transpose() * field;  // pairs x N
        Eigen::MatrixXd const q = t * pair_y_;                  // pairs x pairs
        Eigen::MatrixXd out(size(), size());
        for (int i = 0; i < size(); ++i)
            for (int j = 0; j < size(); ++j)
                out(i, j) = q(pair_index(modes_[i].nu_x, modes_[j].nu_x), pair_index(modes_[i].nu_y, modes_[j].nu_y));
        return out;
    }

  private:
    friend ModeBasis build_basis(TrapConfig const& trap, SpatialGrid const& grid);

    ModeBasis(TrapConfig trap, SpatialGrid grid) : trap_(trap), grid_(std::move(grid)) {}

    int pair_index(int a, int b) const {
        if (a > b) std::swap(a, b);
        int const k = trap_.max_quanta + 1;
        return a * k - a * (a - 1) / 2 + (b - a);
    }

    TrapConfig trap_;
    SpatialGrid grid_;
    std::vector<Mode> modes_;
    Eigen::MatrixXd amp_x_, amp_y_;    // points x K
    Eigen::MatrixXd dens_x_, dens_y_;  // squared amplitudes
    Eigen::MatrixXd pair_x_, pair_y_;  // points x K(K+1)/2, products of densities times 1D weights
};

namespace detail {

// Axis table phi_a(x / length) / sqrt(length) for a = 0..kmax-1.
inline Eigen::MatrixXd axis_table(Eigen::VectorXd const& nodes, int kmax, double length) {
    Eigen::MatrixXd table(nodes.size(), kmax);
    std::vector<double> values(kmax);
    for (Eigen::Index r = 0; r < nodes.size(); ++r) {
        oscillator_eigenfunctions(nodes[r] / length, values);
        for (int a = 0; a < kmax; ++a) table(r, a) = values[a] / std::sqrt(length);
    }
    return table;
}

// Norm of phi_n inside [-half, half] (scaled coordinates), composite Simpson on a fine mesh.
inline std::vector<double> contained_norms(int kmax, double half) {
    int const intervals = 20000;
    double const h = 2.0 * half / intervals;
    std::vector<double> sums(kmax, 0.0), values(kmax);
    for (int k = 0; k <= intervals; ++k) {
        double const x = -half + k * h;
        double const coef = (k == 0 || k == intervals) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        oscillator_eigenfunctions(x, values);
        for (int a = 0; a < kmax; ++a) sums[a] += coef * values[a] * values[a];
    }
    for (double& s : sums) s *= h / 3.0;
    return sums;
}

} // namespace detail

inline constexpr double containment_tolerance = 1e-8;
inline constexpr double orthonormality_tolerance = 1e-6;

inline ModeBasis build_basis(TrapConfig const& trap, SpatialGrid const& grid) {
    trap.validate();
    int const kmax = trap.max_quanta + 1;
    ModeBasis basis(trap, grid);

    // every mode must keep at least 1 - 1e-8 of its norm inside the box
    auto const in_x = detail::contained_norms(kmax, grid.half_width() / trap.length_x());
    auto const in_y = detail::contained_norms(kmax, grid.half_width() / trap.length_y());
    for (int a = 0; a <= trap.max_quanta; ++a)
        for (int b = 0; a + b <= trap.max_quanta; ++b)
            if (in_x[a] * in_y[b] < 1.0 - containment_tolerance) {
                char msg[256];
                std::snprintf(msg, sizeof msg,
                              "grid half width %.3g d too small: mode (%d,%d) keeps only 1 - %.2e of its norm inside",
                              grid.half_width(), a, b, 1.0 - in_x[a] * in_y[b]);
                throw GridError(msg);
            }

    basis.amp_x_ = detail::axis_table(grid.nodes(), kmax, trap.length_x());
    basis.amp_y_ = detail::axis_table(grid.nodes(), kmax, trap.length_y());
    basis.dens_x_ = basis.amp_x_.cwiseAbs2();
    basis.dens_y_ = basis.amp_y_.cwiseAbs2();

    // resolution: the tensor quadrature of psi_i psi_j factorizes into 1D overlaps
    Eigen::MatrixXd const sx = basis.amp_x_.transpose() * grid.weights().asDiagonal() * basis.amp_x_;
    Eigen::MatrixXd const sy = basis.amp_y_.transpose() * grid.weights().asDiagonal() * basis.amp_y_;
    double worst = 0.0;
    for (int a = 0; a < kmax; ++a)
        for (int b = 0; a + b < kmax; ++b)
            for (int c = 0; c < kmax; ++c)
                for (int d = 0; c + d < kmax; ++d) {
                    double const delta = (a == c && b == d) ? 1.0 : 0.0;
                    worst = std::max(worst, std::abs(sx(a, c) * sy(b, d) - delta));
                }
    if (worst >= orthonormality_tolerance) {
        char msg[256];
        std::snprintf(msg, sizeof msg,
                      "grid too coarse for max_quanta=%d: %d points per axis give orthonormality error %.2e",
                      trap.max_quanta, grid.points(), worst);
        throw GridError(msg);
    }

    for (int a = 0; a < kmax; ++a)
        for (int b = 0; a + b < kmax; ++b) {
            Mode m;
            m.nu_x = a;
            m.nu_y = b;
            m.energy_thz = trap.frequency_thz * (a + 0.5) + trap.frequency_y_thz() * (b + 0.5);
            m.density = basis.dens_x_.col(a) * basis.dens_y_.col(b).transpose();
            basis.modes_.push_back(std::move(m));
        }
    std::stable_sort(basis.modes_.begin(), basis.modes_.end(), [](Mode const& l, Mode const& r) {
        if (l.energy_thz != r.energy_thz) return l.energy_thz < r.energy_thz;
        return l.nu_x < r.nu_x;
    });

    int const pairs = kmax * (kmax + 1) / 2;
    basis.pair_x_.resize(grid.points(), pairs);
    basis.pair_y_.resize(grid.points(), pairs);
    for (int a = 0; a < kmax; ++a)
        for (int b = a; b < kmax; ++b) {
            int const p = basis.pair_index(a, b);
            basis.pair_x_.col(p) = basis.dens_x_.col(a).cwiseProduct(basis.dens_x_.col(b)).cwiseProduct(grid.weights());
            basis.pair_y_.col(p) = basis.dens_y_.col(a).cwiseProduct(basis.dens_y_.col(b)).cwiseProduct(grid.weights());
        }
    return basis;
}

/// quadrature(psi_i psi_j); evaluated from the exact 1D factorization of the tensor rule.
inline Eigen::MatrixXd overlap_matrix(ModeBasis const& basis) {
    auto const& w = basis.grid().weights();
    Eigen::MatrixXd const sx = basis.axis_amplitude_x().transpose() * w.asDiagonal() * basis.axis_amplitude_x();
    Eigen::MatrixXd const sy = basis.axis_amplitude_y().transpose() * w.asDiagonal() * basis.axis_amplitude_y();
    int const m = basis.size();
    Eigen::MatrixXd out(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) out(i, j) = sx(basis[i].nu_x, basis[j].nu_x) * sy(basis[i].nu_y, basis[j].nu_y);
    return out;
}

inline void write_basis_csv(std::ostream& os, ModeBasis const& basis) {
    os << "nu_x,nu_y,energy_THz\n";
    char line[96];
    for (auto const& m : basis.modes()) {
        std::snprintf(line, sizeof line, "%d,%d,%.12g\n", m.nu_x, m.nu_y, m.energy_thz);
        os << line;
    }
}

} // namespace dyecav
