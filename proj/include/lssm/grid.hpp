#pragma once

#include <cmath>
#include <cstddef>

#include "lssm/common.hpp"

namespace lssm {

/// Uniform n^3 collocation grid on the periodic box [0, ell]^3.
///
/// Spectral storage convention: real-to-complex transforms keep the half
/// spectrum kz_index in [0, n/2]; the conjugate modes at -kappa are implicit
/// except on the kz = 0 plane, where both members of a conjugate pair are
/// stored and must remain conjugates.
class Grid {
public:
    Grid(int n, double ell) : n_(n), ell_(ell) {
        if (n < 4 || n % 2 != 0) throw ParameterError("grid.n must be even and >= 4");
        if (!(ell > 0.0) || !std::isfinite(ell)) throw ParameterError("grid.ell must be positive and finite");
    }

    int n() const { return n_; }
    double ell() const { return ell_; }
    double volume() const { return ell_ * ell_ * ell_; }
    double dx() const { return ell_ / n_; }

    /// Smallest Stokes eigenvalue on mean-zero periodic solenoidal fields:
    /// the Stokes operator reduces to -Laplace there, so lambda1 = (2*pi/ell)^2.
    double lambda1() const {
        const double k1 = 2.0 * M_PI / ell_;
        return k1 * k1;
    }

    /// Physical wavenumber per integer wavevector unit.
    double k_unit() const { return 2.0 * M_PI / ell_; }

    /// Two-thirds dealiasing bound: largest K with 3K < n, so that quadratic
    /// products of fields supported in |kappa_i| <= K alias only into modes
    /// the mask removes.
    int dealias_kmax() const { return (n_ - 1) / 3; }

    int nz_half() const { return n_ / 2 + 1; }
    std::size_t spectral_size() const {
        return static_cast<std::size_t>(n_) * n_ * nz_half();
    }
    std::size_t physical_size() const {
        return static_cast<std::size_t>(n_) * n_ * n_;
    }

    /// Signed wavevector component for a storage index in [0, n).
    int wavenumber(int index) const { return index <= n_ / 2 ? index : index - n_; }

    /// Storage index on the full axis for a signed wavevector component.
    int index_of(int k) const { return k >= 0 ? k : k + n_; }

    std::size_t spectral_index(int ix, int iy, int iz) const {
        return (static_cast<std::size_t>(ix) * n_ + iy) * nz_half() + iz;
    }
    std::size_t physical_index(int ix, int iy, int iz) const {
        return (static_cast<std::size_t>(ix) * n_ + iy) * n_ + iz;
    }

    bool operator==(const Grid& o) const { return n_ == o.n_ && ell_ == o.ell_; }
    bool operator!=(const Grid& o) const { return !(*this == o); }

private:
    int n_;
    double ell_;
};

} // namespace lssm
