#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "lssm/field.hpp"
#include "lssm/grid.hpp"

namespace lssm {

/// Time-independent, divergence-free, mean-zero body force: either a list of
/// sine modes amp * sin((2 pi / ell) kappa . x + phase) or a field file
/// resolved by the caller into `field_data`.
struct ForcingSpec {
    struct ModeEntry {
        std::array<int, 3> kappa;
        std::array<double, 3> amp;
        double phase = 0.0;
    };
    enum class Type { none, modes, file };
    Type type = Type::none;
    std::vector<ModeEntry> modes;
    std::string path;                         // for Type::file (loaded by the cli layer)
    std::vector<std::array<std::vector<Complex>, 3>> field_data; // resolved file payload
};

/// PDE coefficients of the model: linear viscosity nu, power-law coefficient
/// nu_bar and exponent r, plus the body-force description.
///
/// For r = 2 the power-law term is itself a Laplacian, so the model reduces
/// to Navier-Stokes with viscosity nu + nu_bar; the stepper treats that case
/// through the exact integrating factor rather than an explicit term, which
/// makes the reduction hold coefficient for coefficient.
struct FlowParams {
    double nu = 0.0;
    double nu_bar = 0.0;
    double r = 2.0;
    ForcingSpec forcing;

    void validate() const {
        if (!(nu > 0.0) || !std::isfinite(nu)) throw ParameterError("flow.nu must be positive");
        if (!(nu_bar >= 0.0) || !std::isfinite(nu_bar))
            throw ParameterError("flow.nu_bar must be >= 0");
        if (!(r >= 2.0) || !std::isfinite(r)) throw ParameterError("flow.r must be >= 2");
    }

    /// Viscosity handled exactly by the integrating factor.
    double linear_viscosity() const { return r == 2.0 ? nu + nu_bar : nu; }

    /// Whether the power-law stress needs explicit evaluation.
    bool power_law_active() const { return nu_bar > 0.0 && r > 2.0; }
};

/// Realize a forcing description as a band-limited, projected, mean-zero
/// spectral field. Idempotent for specs that already satisfy the invariants.
inline SpectralVelocity forcing_field(const ForcingSpec& fs, const Grid& grid) {
    SpectralVelocity f(grid);
    switch (fs.type) {
    case ForcingSpec::Type::none:
        return f;
    case ForcingSpec::Type::modes: {
        const int kmax = grid.dealias_kmax();
        for (const auto& m : fs.modes) {
            for (int d = 0; d < 3; ++d) {
                if (std::abs(m.kappa[d]) > kmax)
                    throw ParameterError("forcing mode beyond the dealias band");
            }
            if (m.kappa[0] == 0 && m.kappa[1] == 0 && m.kappa[2] == 0)
                throw ParameterError("forcing mode kappa = 0 violates mean-zero");
            // amp * sin(theta + phase): coefficient amp (sin(phase) - i cos(phase)) / 2
            const Complex c(0.5 * std::sin(m.phase), -0.5 * std::cos(m.phase));
            add_mode(f, m.kappa, {m.amp[0] * c, m.amp[1] * c, m.amp[2] * c});
        }
        break;
    }
    case ForcingSpec::Type::file: {
        if (fs.field_data.size() != 1)
            throw IoError("forcing field file not resolved");
        for (int c = 0; c < 3; ++c) {
            if (fs.field_data[0][c].size() != grid.spectral_size())
                throw IoError("forcing field file does not match the grid");
            f.component(c) = fs.field_data[0][c];
        }
        break;
    }
    }
    dealias(f);
    enforce_zero_mean(f);
    return project_divergence_free(std::move(f));
}

/// Divergence-form advection term nabla . (u (x) u), evaluated
/// pseudo-spectrally (physical-space products, spectral divergence), then
/// dealiased and projected. The drift assembles it with the minus sign.
/// With the two-thirds mask the quadratic products are alias-free, which is
/// what makes (advection(u), u) vanish to roundoff.
inline SpectralVelocity advection(const SpectralVelocity& u) {
    const Grid& g = u.grid();
    const Fft& fft = Fft::plan_for(g.n());
    const RealField3 up = to_physical(u);
    const std::size_t np = g.physical_size();

    // symmetric products T_ab = u_a u_b
    static constexpr int kPairs[6][2] = {{0, 0}, {0, 1}, {0, 2}, {1, 1}, {1, 2}, {2, 2}};
    std::array<std::vector<Complex>, 6> that;
    {
        std::vector<double> prod(np);
        for (int p = 0; p < 6; ++p) {
            const auto& a = up.comp[kPairs[p][0]];
            const auto& b = up.comp[kPairs[p][1]];
            for (std::size_t i = 0; i < np; ++i) prod[i] = a[i] * b[i];
            that[p].resize(g.spectral_size());
            fft.forward(prod.data(), that[p].data());
        }
    }
    static constexpr int kTensorIndex[3][3] = {{0, 1, 2}, {1, 3, 4}, {2, 4, 5}};

    SpectralVelocity out(g);
    const double ku = g.k_unit();
    for_each_entry(g, [&](int kx, int ky, int kz, std::size_t idx, double) {
        const double kvec[3] = {ku * kx, ku * ky, ku * kz};
        for (int i = 0; i < 3; ++i) {
            Complex s(0.0, 0.0);
            for (int j = 0; j < 3; ++j)
                s += Complex(0.0, kvec[j]) * that[kTensorIndex[i][j]][idx];
            out.component(i)[idx] = s;
        }
    });
    dealias(out);
    enforce_zero_mean(out);
    out = project_divergence_free(std::move(out));
    if (!is_finite(out)) throw DataError("advection: non-finite result");
    return out;
}

/// Power-law stress divergence nabla . (nu_bar |grad u|^{r-2} grad u) from a
/// precomputed gradient tensor. |grad u|^{r-2} at grad u = 0 is 0 for r > 2
/// (the stress is continuous there) and 1 for r = 2.
inline SpectralVelocity nonlinear_viscosity_from_gradient(const GradientTensor& gt,
                                                          double nu_bar, double r) {
    if (!(r >= 2.0)) throw ParameterError("nonlinear_viscosity: requires r >= 2");
    const Grid& g = gt.grid;
    const Fft& fft = Fft::plan_for(g.n());
    const std::size_t np = g.physical_size();

    std::vector<double> factor(np);
    if (r == 2.0) {
        for (std::size_t p = 0; p < np; ++p) factor[p] = nu_bar;
    } else if (r == 3.0) {
        for (std::size_t p = 0; p < np; ++p) factor[p] = nu_bar * std::sqrt(gt.frobenius_sq(p));
    } else {
        for (std::size_t p = 0; p < np; ++p)
            factor[p] = nu_bar * std::pow(gt.frobenius_sq(p), 0.5 * (r - 2.0));
    }

    std::array<std::vector<Complex>, 9> shat;
    {
        std::vector<double> stress(np);
        for (int e = 0; e < 9; ++e) {
            for (std::size_t p = 0; p < np; ++p) stress[p] = factor[p] * gt.comp[e][p];
            shat[e].resize(g.spectral_size());
            fft.forward(stress.data(), shat[e].data());
        }
    }

    SpectralVelocity out(g);
    const double ku = g.k_unit();
    for_each_entry(g, [&](int kx, int ky, int kz, std::size_t idx, double) {
        const double kvec[3] = {ku * kx, ku * ky, ku * kz};
        for (int i = 0; i < 3; ++i) {
            Complex s(0.0, 0.0);
            for (int j = 0; j < 3; ++j)
                s += Complex(0.0, kvec[j]) * shat[3 * i + j][idx];
            out.component(i)[idx] = s;
        }
    });
    dealias(out);
    enforce_zero_mean(out);
    out = project_divergence_free(std::move(out));
    if (!is_finite(out)) throw DataError("nonlinear_viscosity: non-finite result");
    return out;
}

inline SpectralVelocity nonlinear_viscosity(const SpectralVelocity& u, double nu_bar,
                                            double r) {
    return nonlinear_viscosity_from_gradient(gradient(u), nu_bar, r);
}

/// Explicit drift of du/dt = -nabla.(u(x)u) + nu Lap u
///                           + nabla.(nu_bar |grad u|^{r-2} grad u) + f:
/// returns -advection(u) + nonlinear_viscosity(u) + fhat. The linear part
/// -linear_viscosity() |k|^2 uhat is left to the integrating factor and is
/// not included here.
inline SpectralVelocity drift_explicit(const SpectralVelocity& u, const FlowParams& p,
                                       const SpectralVelocity& fhat) {
    SpectralVelocity n = advection(u);
    n *= -1.0;
    if (p.power_law_active()) n += nonlinear_viscosity(u, p.nu_bar, p.r);
    n += fhat;
    return n;
}

/// Convenience wrapper resolving the forcing from the params.
inline SpectralVelocity drift(const SpectralVelocity& u, const FlowParams& p) {
    return drift_explicit(u, p, forcing_field(p.forcing, u.grid()));
}

} // namespace lssm
