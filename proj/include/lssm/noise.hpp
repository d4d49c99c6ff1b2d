#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "lssm/field.hpp"
#include "lssm/grid.hpp"
#include "lssm/rng.hpp"

namespace lssm {

enum class NoiseMode { additive, multiplicative };

/// Bounded time modulation m(t) with values in [0,1]; default constant 1.
struct Modulation {
    enum class Type { constant, sinusoid };
    Type type = Type::constant;
    double a = 1.0;     // constant value, or sinusoid offset
    double b = 0.0;     // sinusoid amplitude: m(t) = a + b cos(omega t)
    double omega = 0.0;

    static Modulation constant(double value) {
        Modulation m;
        m.type = Type::constant;
        m.a = value;
        m.validate();
        return m;
    }
    static Modulation sinusoid(double offset, double amplitude, double omega) {
        Modulation m;
        m.type = Type::sinusoid;
        m.a = offset;
        m.b = amplitude;
        m.omega = omega;
        m.validate();
        return m;
    }

    void validate() const {
        const double lo = type == Type::constant ? a : a - std::abs(b);
        const double hi = type == Type::constant ? a : a + std::abs(b);
        if (!(lo >= 0.0 && hi <= 1.0))
            throw ParameterError("noise modulation must stay within [0,1]");
    }

    double value(double t) const {
        return type == Type::constant ? a : a + b * std::cos(omega * t);
    }
    double sup() const { return type == Type::constant ? a : a + std::abs(b); }
};

/// One real solenoidal Fourier mode sqrt(2/V) * pol * {cos,sin}(k.x).
struct BasisMode {
    std::array<int, 3> kappa;
    std::array<double, 3> pol;
    bool sine = false;
};

namespace detail {

inline std::array<double, 3> polarization(const std::array<int, 3>& k, int which) {
    const double kx = k[0], ky = k[1], kz = k[2];
    if (k[0] == 0 && k[1] == 0) {
        // kappa along z: use the coordinate pair
        return which == 0 ? std::array<double, 3>{1.0, 0.0, 0.0}
                          : std::array<double, 3>{0.0, 1.0, 0.0};
    }
    const double nh = std::sqrt(kx * kx + ky * ky);
    if (which == 0) return {ky / nh, -kx / nh, 0.0};
    const double kn = std::sqrt(kx * kx + ky * ky + kz * kz);
    return {kz * kx / (nh * kn), kz * ky / (nh * kn), -(kx * kx + ky * ky) / (nh * kn)};
}

inline bool lexicographically_positive(const std::array<int, 3>& k) {
    if (k[0] != 0) return k[0] > 0;
    if (k[1] != 0) return k[1] > 0;
    return k[2] > 0;
}

} // namespace detail

/// Solenoidal polarization-pair basis truncated to |kappa_i| <= kmax.
/// One representative per conjugate pair {kappa, -kappa}; each representative
/// carries two polarizations and both phases, all mutually L2-orthonormal.
/// Deterministic ordering: lexicographic in kappa, then polarization index,
/// then phase (cos before sin).
inline std::vector<BasisMode> build_basis(const Grid& grid, int kmax) {
    if (kmax < 1 || kmax > grid.dealias_kmax())
        throw ParameterError("build_basis: kmax outside [1, dealias band]");
    std::vector<BasisMode> out;
    for (int kx = -kmax; kx <= kmax; ++kx)
        for (int ky = -kmax; ky <= kmax; ++ky)
            for (int kz = -kmax; kz <= kmax; ++kz) {
                const std::array<int, 3> k{kx, ky, kz};
                if (!detail::lexicographically_positive(k)) continue;
                for (int pol = 0; pol < 2; ++pol) {
                    const auto p = detail::polarization(k, pol);
                    out.push_back({k, p, false});
                    out.push_back({k, p, true});
                }
            }
    return out;
}

/// Materialize a basis mode as a unit-norm spectral field.
inline SpectralVelocity mode_field(const Grid& grid, const BasisMode& m) {
    SpectralVelocity u(grid);
    const double c = 0.5 * std::sqrt(2.0 / grid.volume());
    const Complex amp = m.sine ? Complex(0.0, -c) : Complex(c, 0.0);
    add_mode(u, m.kappa, {amp * m.pol[0], amp * m.pol[1], amp * m.pol[2]});
    return u;
}

/// Sparse inner product (e_k, u) without materializing the mode.
inline double mode_dot(const Grid& grid, const BasisMode& m, const SpectralVelocity& u) {
    const auto uk = mode_coefficient(u, m.kappa);
    const double c = 0.5 * std::sqrt(2.0 / grid.volume());
    const Complex amp = m.sine ? Complex(0.0, -c) : Complex(c, 0.0);
    Complex s(0.0, 0.0);
    for (int d = 0; d < 3; ++d) s += amp * m.pol[d] * std::conj(uk[d]);
    return 2.0 * grid.volume() * s.real();
}

/// Truncated Q-Wiener description: eigenpairs {sigma_k, e_k}, the noise mode
/// (additive or state-dependent amplitude), and the time modulation.
struct NoiseSpec {
    Grid grid;
    std::vector<BasisMode> basis;
    std::vector<double> sigmas;
    NoiseMode mode = NoiseMode::additive;
    Modulation modulation;

    /// Power-law spectrum sigma(kappa) = sigma0 |kappa|^{-alpha} on the
    /// truncated polarization basis. kmax = 0 builds an empty spectrum.
    static NoiseSpec power_law(const Grid& grid, NoiseMode mode, double sigma0,
                               double alpha, int kmax,
                               Modulation modulation = Modulation::constant(1.0)) {
        if (!(sigma0 >= 0.0)) throw ParameterError("noise.sigma0 must be >= 0");
        if (!(alpha >= 0.0)) throw ParameterError("noise.alpha must be >= 0");
        NoiseSpec ns{grid, {}, {}, mode, modulation};
        if (kmax > 0) {
            ns.basis = build_basis(grid, kmax);
            ns.sigmas.reserve(ns.basis.size());
            for (const auto& m : ns.basis) {
                const double k2 = static_cast<double>(m.kappa[0]) * m.kappa[0] +
                                  static_cast<double>(m.kappa[1]) * m.kappa[1] +
                                  static_cast<double>(m.kappa[2]) * m.kappa[2];
                ns.sigmas.push_back(sigma0 * std::pow(k2, -0.5 * alpha));
            }
        }
        return ns;
    }

    double sum_sigma_sq() const {
        double s = 0.0;
        for (const double v : sigmas) s += v * v;
        return s;
    }
    double sum_sigma_4th() const {
        double s = 0.0;
        for (const double v : sigmas) s += v * v * v * v;
        return s;
    }
    bool empty() const { return basis.empty(); }
};

/// State-dependent amplitude A(u): 1 for additive noise and
/// sqrt(1 + ||u||^2) for the multiplicative family.
inline double noise_amplitude(const NoiseSpec& ns, const SpectralVelocity& u) {
    if (ns.mode == NoiseMode::additive) return 1.0;
    const double e = norm_l2_sq(u);
    if (!std::isfinite(e)) throw DataError("noise_amplitude: non-finite state norm");
    return std::sqrt(1.0 + e);
}

/// Tr(g* g)(t, u) = sum_k sigma_k^2 m(t)^2 A(u)^2.
inline double trace_g_star_g(const NoiseSpec& ns, const SpectralVelocity& u, double t) {
    const double m = ns.modulation.value(t);
    const double a = noise_amplitude(ns, u);
    return ns.sum_sigma_sq() * m * m * a * a;
}

/// Coloring constant E_W = (1/2) sum_k sigma_k^2.
inline double e_w(const NoiseSpec& ns) { return 0.5 * ns.sum_sigma_sq(); }

/// Smallest rho with sup_t ||g(t,v)||^2 <= rho (1 + ||v||^2): for the built-in
/// families this is sum sigma_k^2 * sup_t m(t)^2 (tight for multiplicative;
/// an upper bound for additive where A = 1).
inline double rho_infty(const NoiseSpec& ns) {
    const double s = ns.modulation.sup();
    return ns.sum_sigma_sq() * s * s;
}

/// One Ito noise increment g(t, u) dW over [t, t+dt], evaluated at the
/// pre-step state: sum_k sigma_k m(t) A(u) e_k xi_k sqrt(dt) with independent
/// standard normals xi_k drawn from rng in basis order. Divergence-free and
/// mean-zero by construction.
inline SpectralVelocity sample_increment(const NoiseSpec& ns, const SpectralVelocity& u,
                                         double t, double dt, RngStream& rng) {
    if (!(dt > 0.0)) throw ParameterError("sample_increment: dt must be positive");
    SpectralVelocity out(ns.grid);
    if (ns.empty()) return out;
    const double m = ns.modulation.value(t);
    const double a = noise_amplitude(ns, u);
    const double root_dt = std::sqrt(dt);
    const double c = 0.5 * std::sqrt(2.0 / ns.grid.volume());
    for (std::size_t k = 0; k < ns.basis.size(); ++k) {
        const double xi = rng.next_gaussian();
        const double s = ns.sigmas[k] * m * a * root_dt * xi * c;
        if (s == 0.0) continue;
        const BasisMode& bm = ns.basis[k];
        const Complex amp = bm.sine ? Complex(0.0, -s) : Complex(s, 0.0);
        add_mode(out, bm.kappa, {amp * bm.pol[0], amp * bm.pol[1], amp * bm.pol[2]});
    }
    return out;
}

/// Predictable quadratic variation increment of the energy martingale
/// 2 sum (g dW, u): d<M> = 4 dt sum_k (sigma_k m A)^2 (e_k, u)^2. The factor
/// 4 belongs to the caller; this returns dt * sum_k (sigma_k m A (e_k,u))^2.
inline double martingale_qv_increment(const NoiseSpec& ns, const SpectralVelocity& u,
                                      double t, double dt) {
    if (ns.empty()) return 0.0;
    const double m = ns.modulation.value(t);
    const double a = noise_amplitude(ns, u);
    double s = 0.0;
    for (std::size_t k = 0; k < ns.basis.size(); ++k) {
        if (ns.sigmas[k] == 0.0) continue;
        const double d = ns.sigmas[k] * m * a * mode_dot(ns.grid, ns.basis[k], u);
        s += d * d;
    }
    return dt * s;
}

} // namespace lssm
