#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <vector>

#include "lssm/fft.hpp"
#include "lssm/grid.hpp"
#include "lssm/rng.hpp"

namespace lssm {

using Complex = std::complex<double>;

/// Velocity field as half-spectrum Fourier coefficients of 3 components.
/// Invariants maintained by the operations below: mean-zero (kappa = 0
/// coefficient exactly zero), divergence-free up to roundoff, dealiased
/// (modes with any |kappa_i| beyond the two-thirds bound are zero), and
/// conjugate-symmetric so the physical field is real.
class SpectralVelocity {
public:
    explicit SpectralVelocity(const Grid& grid)
        : grid_(grid) {
        for (auto& c : coeffs_) c.assign(grid_.spectral_size(), Complex(0.0, 0.0));
    }

    const Grid& grid() const { return grid_; }

    std::vector<Complex>& component(int c) { return coeffs_[c]; }
    const std::vector<Complex>& component(int c) const { return coeffs_[c]; }

    Complex& at(int c, int ix, int iy, int iz) {
        return coeffs_[c][grid_.spectral_index(ix, iy, iz)];
    }
    const Complex& at(int c, int ix, int iy, int iz) const {
        return coeffs_[c][grid_.spectral_index(ix, iy, iz)];
    }

    SpectralVelocity& operator+=(const SpectralVelocity& o) {
        for (int c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < coeffs_[c].size(); ++i) coeffs_[c][i] += o.coeffs_[c][i];
        return *this;
    }
    SpectralVelocity& operator-=(const SpectralVelocity& o) {
        for (int c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < coeffs_[c].size(); ++i) coeffs_[c][i] -= o.coeffs_[c][i];
        return *this;
    }
    SpectralVelocity& operator*=(double s) {
        for (auto& comp : coeffs_)
            for (auto& v : comp) v *= s;
        return *this;
    }

private:
    Grid grid_;
    std::array<std::vector<Complex>, 3> coeffs_;
};

inline SpectralVelocity operator+(SpectralVelocity a, const SpectralVelocity& b) { return a += b; }
inline SpectralVelocity operator-(SpectralVelocity a, const SpectralVelocity& b) { return a -= b; }
inline SpectralVelocity operator*(double s, SpectralVelocity a) { return a *= s; }

/// Velocity samples on the collocation grid (3 components, row-major x,y,z).
struct RealField3 {
    explicit RealField3(const Grid& g) : grid(g) {
        for (auto& c : comp) c.assign(g.physical_size(), 0.0);
    }
    Grid grid;
    std::array<std::vector<double>, 3> comp;
};

/// Velocity gradient samples: comp[3*i + j](x) = du_i/dx_j.
struct GradientTensor {
    explicit GradientTensor(const Grid& g) : grid(g) {
        for (auto& c : comp) c.assign(g.physical_size(), 0.0);
    }
    Grid grid;
    std::array<std::vector<double>, 9> comp;

    double frobenius_sq(std::size_t p) const {
        double s = 0.0;
        for (const auto& c : comp) s += c[p] * c[p];
        return s;
    }
};

// ---------------------------------------------------------------------------
// Mode bookkeeping

namespace detail {

/// Parseval weight of a stored half-spectrum entry: modes with 0 < kz < n/2
/// stand for a conjugate pair.
inline double parseval_weight(const Grid& g, int iz) {
    return (iz == 0 || 2 * iz == g.n()) ? 1.0 : 2.0;
}

} // namespace detail

template <typename F>
inline void for_each_entry(const Grid& g, F&& f) {
    const int n = g.n();
    const int nzh = g.nz_half();
    std::size_t idx = 0;
    for (int ix = 0; ix < n; ++ix) {
        const int kx = g.wavenumber(ix);
        for (int iy = 0; iy < n; ++iy) {
            const int ky = g.wavenumber(iy);
            for (int iz = 0; iz < nzh; ++iz, ++idx) {
                f(kx, ky, iz, idx, detail::parseval_weight(g, iz));
            }
        }
    }
}

/// Coefficient of u at an arbitrary signed wavevector, resolving the implicit
/// conjugate half. Requires |kappa_i| <= n/2 - 1.
inline std::array<Complex, 3> mode_coefficient(const SpectralVelocity& u,
                                               const std::array<int, 3>& kappa) {
    const Grid& g = u.grid();
    for (int d = 0; d < 3; ++d) {
        if (std::abs(kappa[d]) > g.n() / 2 - 1)
            throw ParameterError("mode_coefficient: wavevector beyond representable band");
    }
    std::array<int, 3> k = kappa;
    const bool conj = k[2] < 0;
    if (conj) {
        for (auto& v : k) v = -v;
    }
    const int ix = g.index_of(k[0]);
    const int iy = g.index_of(k[1]);
    std::array<Complex, 3> out;
    for (int c = 0; c < 3; ++c) {
        const Complex v = u.at(c, ix, iy, k[2]);
        out[c] = conj ? std::conj(v) : v;
    }
    return out;
}

/// Add amp at wavevector kappa and conj(amp) at -kappa, preserving conjugate
/// symmetry across the stored kz = 0 plane. The field gains the real-valued
/// contribution 2*Re(amp * exp(i k.x)).
inline void add_mode(SpectralVelocity& u, const std::array<int, 3>& kappa,
                     const std::array<Complex, 3>& amp) {
    const Grid& g = u.grid();
    if (kappa[0] == 0 && kappa[1] == 0 && kappa[2] == 0)
        throw ParameterError("add_mode: kappa = 0 would break the mean-zero invariant");
    for (int d = 0; d < 3; ++d) {
        if (std::abs(kappa[d]) > g.n() / 2 - 1)
            throw ParameterError("add_mode: wavevector beyond representable band");
    }
    std::array<int, 3> k = kappa;
    std::array<Complex, 3> a = amp;
    if (k[2] < 0) {
        for (auto& v : k) v = -v;
        for (auto& v : a) v = std::conj(v);
    }
    const int ix = g.index_of(k[0]);
    const int iy = g.index_of(k[1]);
    for (int c = 0; c < 3; ++c) u.at(c, ix, iy, k[2]) += a[c];
    if (k[2] == 0) {
        const int jx = g.index_of(-k[0]);
        const int jy = g.index_of(-k[1]);
        for (int c = 0; c < 3; ++c) u.at(c, jx, jy, 0) += std::conj(a[c]);
    }
}

// ---------------------------------------------------------------------------
// Transforms

inline RealField3 to_physical(const SpectralVelocity& u) {
    const Fft& fft = Fft::plan_for(u.grid().n());
    RealField3 out(u.grid());
    for (int c = 0; c < 3; ++c) fft.backward(u.component(c).data(), out.comp[c].data());
    return out;
}

inline SpectralVelocity from_physical(const RealField3& f) {
    const Fft& fft = Fft::plan_for(f.grid.n());
    SpectralVelocity out(f.grid);
    for (int c = 0; c < 3; ++c) fft.forward(f.comp[c].data(), out.component(c).data());
    return out;
}

// ---------------------------------------------------------------------------
// Masking and validity

inline void dealias(SpectralVelocity& u) {
    const int kmax = u.grid().dealias_kmax();
    for_each_entry(u.grid(), [&](int kx, int ky, int iz, std::size_t idx, double) {
        if (std::abs(kx) > kmax || std::abs(ky) > kmax || iz > kmax) {
            for (int c = 0; c < 3; ++c) u.component(c)[idx] = Complex(0.0, 0.0);
        }
    });
}

inline void enforce_zero_mean(SpectralVelocity& u) {
    for (int c = 0; c < 3; ++c) u.component(c)[0] = Complex(0.0, 0.0);
}

inline bool is_finite(const SpectralVelocity& u) {
    for (int c = 0; c < 3; ++c)
        for (const auto& v : u.component(c))
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Leray projection

/// Orthogonal projection onto divergence-free fields:
/// (P v)(kappa) = (I - kappa kappa^T / |kappa|^2) vhat(kappa).
/// Idempotent; annihilates every gradient field, which is how the pressure
/// term is eliminated from the dynamics.
inline SpectralVelocity project_divergence_free(SpectralVelocity v) {
    if (!is_finite(v))
        throw DataError("project_divergence_free: non-finite coefficient");
    for_each_entry(v.grid(), [&](int kx, int ky, int iz, std::size_t idx, double) {
        const double k2 = static_cast<double>(kx) * kx + static_cast<double>(ky) * ky +
                          static_cast<double>(iz) * iz;
        if (k2 == 0.0) return; // mean mode, left untouched (zero by invariant)
        const Complex d = (v.component(0)[idx] * static_cast<double>(kx) +
                           v.component(1)[idx] * static_cast<double>(ky) +
                           v.component(2)[idx] * static_cast<double>(iz)) / k2;
        v.component(0)[idx] -= d * static_cast<double>(kx);
        v.component(1)[idx] -= d * static_cast<double>(ky);
        v.component(2)[idx] -= d * static_cast<double>(iz);
    });
    return v;
}

/// Scale-invariant divergence residual ||div u|| / ||grad u||; zero field -> 0.
inline double divergence_residual(const SpectralVelocity& u) {
    double div2 = 0.0;
    double grad2 = 0.0;
    for_each_entry(u.grid(), [&](int kx, int ky, int iz, std::size_t idx, double w) {
        const Complex d = u.component(0)[idx] * static_cast<double>(kx) +
                          u.component(1)[idx] * static_cast<double>(ky) +
                          u.component(2)[idx] * static_cast<double>(iz);
        const double k2 = static_cast<double>(kx) * kx + static_cast<double>(ky) * ky +
                          static_cast<double>(iz) * iz;
        div2 += w * std::norm(d);
        for (int c = 0; c < 3; ++c) grad2 += w * k2 * std::norm(u.component(c)[idx]);
    });
    if (grad2 == 0.0) return 0.0;
    return std::sqrt(div2 / grad2);
}

// ---------------------------------------------------------------------------
// Differentiation

/// Spectral gradient: entry (i,j) is the inverse transform of
/// i * k_j * uhat_i(kappa); exact for band-limited fields.
inline GradientTensor gradient(const SpectralVelocity& u) {
    const Grid& g = u.grid();
    const Fft& fft = Fft::plan_for(g.n());
    const double ku = g.k_unit();
    GradientTensor out(g);
    std::vector<Complex> scratch(g.spectral_size());
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            for_each_entry(g, [&](int kx, int ky, int iz, std::size_t idx, double) {
                const int kj = (j == 0) ? kx : (j == 1) ? ky : iz;
                scratch[idx] = Complex(0.0, ku * kj) * u.component(i)[idx];
            });
            fft.backward(scratch.data(), out.comp[3 * i + j].data());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Norms and inner products

/// Integral of |u|^2 over the box via Parseval on the half spectrum.
inline double norm_l2_sq(const SpectralVelocity& u) {
    double s = 0.0;
    for_each_entry(u.grid(), [&](int, int, int, std::size_t idx, double w) {
        for (int c = 0; c < 3; ++c) s += w * std::norm(u.component(c)[idx]);
    });
    return u.grid().volume() * s;
}

/// Same integral via collocation quadrature of the physical samples; agrees
/// with the spectral path to roundoff on band-limited fields.
inline double norm_l2_sq_physical(const SpectralVelocity& u) {
    const RealField3 f = to_physical(u);
    double s = 0.0;
    for (int c = 0; c < 3; ++c)
        for (const double v : f.comp[c]) s += v * v;
    const double dx = u.grid().dx();
    return s * dx * dx * dx;
}

inline double norm_l2_sq(const RealField3& f) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c)
        for (const double v : f.comp[c]) s += v * v;
    const double dx = f.grid.dx();
    return s * dx * dx * dx;
}

inline double norm_linf(const RealField3& f) {
    double m = 0.0;
    const std::size_t np = f.grid.physical_size();
    for (std::size_t p = 0; p < np; ++p) {
        const double v2 = f.comp[0][p] * f.comp[0][p] + f.comp[1][p] * f.comp[1][p] +
                          f.comp[2][p] * f.comp[2][p];
        if (v2 > m) m = v2;
    }
    return std::sqrt(m);
}

inline double inner_product(const SpectralVelocity& a, const SpectralVelocity& b) {
    if (a.grid() != b.grid()) throw DimensionError("inner_product: mismatched grids");
    double s = 0.0;
    for_each_entry(a.grid(), [&](int, int, int, std::size_t idx, double w) {
        for (int c = 0; c < 3; ++c)
            s += w * (a.component(c)[idx].real() * b.component(c)[idx].real() +
                      a.component(c)[idx].imag() * b.component(c)[idx].imag());
    });
    return a.grid().volume() * s;
}

inline double norm_l2_sq(const GradientTensor& gt) {
    double s = 0.0;
    for (const auto& c : gt.comp)
        for (const double v : c) s += v * v;
    const double dx = gt.grid.dx();
    return s * dx * dx * dx;
}

/// Collocation quadrature of |grad u|^r with the pointwise Frobenius norm.
inline double norm_lr_r(const GradientTensor& gt, double r) {
    if (!(r >= 2.0)) throw ParameterError("norm_lr_r: requires r >= 2");
    const std::size_t np = gt.grid.physical_size();
    double s = 0.0;
    if (r == 2.0) {
        for (std::size_t p = 0; p < np; ++p) s += gt.frobenius_sq(p);
    } else if (r == 3.0) {
        for (std::size_t p = 0; p < np; ++p) {
            const double f2 = gt.frobenius_sq(p);
            s += f2 * std::sqrt(f2);
        }
    } else {
        for (std::size_t p = 0; p < np; ++p) s += std::pow(gt.frobenius_sq(p), 0.5 * r);
    }
    const double dx = gt.grid.dx();
    return s * dx * dx * dx;
}

inline double norm_linf(const GradientTensor& gt) {
    double m = 0.0;
    const std::size_t np = gt.grid.physical_size();
    for (std::size_t p = 0; p < np; ++p) m = std::max(m, gt.frobenius_sq(p));
    return std::sqrt(m);
}

inline double inner_product(const GradientTensor& a, const GradientTensor& b) {
    if (a.grid != b.grid) throw DimensionError("inner_product: mismatched grids");
    double s = 0.0;
    for (int c = 0; c < 9; ++c) {
        const auto& x = a.comp[c];
        const auto& y = b.comp[c];
        for (std::size_t p = 0; p < x.size(); ++p) s += x[p] * y[p];
    }
    const double dx = a.grid.dx();
    return s * dx * dx * dx;
}

/// Largest pointwise |trace| relative to the local Frobenius norm; a
/// divergence-free field keeps this at roundoff level.
inline double max_trace_ratio(const GradientTensor& gt) {
    const std::size_t np = gt.grid.physical_size();
    double scale = 0.0;
    for (std::size_t p = 0; p < np; ++p) scale = std::max(scale, gt.frobenius_sq(p));
    scale = std::sqrt(scale);
    const double floor = scale > 0.0 ? 1e-30 * scale : 1e-300;
    double worst = 0.0;
    for (std::size_t p = 0; p < np; ++p) {
        const double tr = gt.comp[0][p] + gt.comp[4][p] + gt.comp[8][p];
        const double f = std::sqrt(gt.frobenius_sq(p));
        worst = std::max(worst, std::abs(tr) / (f + floor));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Field construction

/// Gaussian random solenoidal field, band-limited to |kappa_i| <= kmax, scaled
/// to the requested energy norm_l2_sq(u) = energy. Deterministic in rng.
inline SpectralVelocity random_solenoidal(const Grid& grid, int kmax, double energy,
                                          RngStream& rng) {
    if (kmax < 1 || kmax > grid.dealias_kmax())
        throw ParameterError("random_solenoidal: kmax outside the dealias band");
    if (!(energy >= 0.0)) throw ParameterError("random_solenoidal: negative energy");
    RealField3 white(grid);
    for (int c = 0; c < 3; ++c)
        for (auto& v : white.comp[c]) v = rng.next_gaussian();
    SpectralVelocity u = from_physical(white);
    for_each_entry(grid, [&](int kx, int ky, int iz, std::size_t idx, double) {
        if (std::abs(kx) > kmax || std::abs(ky) > kmax || iz > kmax) {
            for (int c = 0; c < 3; ++c) u.component(c)[idx] = Complex(0.0, 0.0);
        }
    });
    enforce_zero_mean(u);
    u = project_divergence_free(std::move(u));
    const double e0 = norm_l2_sq(u);
    if (energy > 0.0) {
        if (e0 <= 0.0) throw DataError("random_solenoidal: degenerate draw");
        u *= std::sqrt(energy / e0);
    } else {
        u *= 0.0;
    }
    return u;
}

} // namespace lssm
