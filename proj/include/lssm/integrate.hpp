#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lssm/dynamics.hpp"
#include "lssm/noise.hpp"

namespace lssm {

/// Discrete trajectory state.
struct SimState {
    SpectralVelocity u;
    double t = 0.0;
    std::uint64_t step_index = 0;
    RngStream rng;
};

/// Per-step energy-budget integrands. Integrands (gradient norms, trace,
/// (f,u)) are evaluated at the pre-step state: left-endpoint quadrature
/// matching the Ito convention of the noise term.
struct StepRecord {
    double t = 0.0;   // step start time
    double dt = 0.0;
    double ke_pre = 0.0;
    double ke_post = 0.0;
    double grad_l2_sq = 0.0;
    double grad_lr_r = 0.0;
    double trace_gg = 0.0;
    double f_dot_u = 0.0;     // (f, u_pre)
    double noise_dot_u = 0.0; // (g dW, u_pre)
    double noise_sq = 0.0;    // ||g dW||^2
    double div_residual = 0.0;

    // in-memory diagnostics (not part of the CSV schema)
    double u_dot_update = 0.0;   // (u_pre, dt psi N + g dW)
    double update_sq = 0.0;      // ||dt psi N + g dW||^2
    double presqueeze_sq = 0.0;  // ||u_pre + dt psi N + g dW||^2, before the factor
    double mart_qv = 0.0;        // dt sum_k (sigma_k m A (e_k,u))^2
};

/// Time-step selection knobs. fixed_dt > 0 bypasses the CFL estimate.
struct StepPolicy {
    double dt_max = 0.1;
    double c_adv = 0.4;
    double c_visc = 0.3;
    double fixed_dt = 0.0;

    void validate() const {
        if (!(dt_max > 0.0)) throw ParameterError("time.dt_max must be positive");
        if (!(c_adv > 0.0) || !(c_visc > 0.0))
            throw ParameterError("time.c_adv and time.c_visc must be positive");
        if (fixed_dt < 0.0) throw ParameterError("time.dt must be >= 0");
    }
};

/// Stability-limited time step:
///   dt = min(dt_max,
///            c_adv dx / (||u||_inf + floor),
///            c_visc dx^2 / (3 nu_bar (r-1) ||grad u||_inf^{r-2} + floor)).
/// The linear viscosity is exempt (integrating factor); the power-law
/// candidate only applies when that term is integrated explicitly.
inline double stable_dt(const SimState& s, const FlowParams& p, const StepPolicy& policy) {
    if (!is_finite(s.u)) throw DataError("stable_dt: non-finite state");
    constexpr double kFloor = 1e-30;
    const double dx = s.u.grid().dx();
    double dt = policy.dt_max;
    const double umax = norm_linf(to_physical(s.u));
    dt = std::min(dt, policy.c_adv * dx / (umax + kFloor));
    if (p.power_law_active()) {
        const double gmax = norm_linf(gradient(s.u));
        const double coef =
            3.0 * p.nu_bar * (p.r - 1.0) * std::pow(gmax + kFloor, p.r - 2.0);
        dt = std::min(dt, policy.c_visc * dx * dx / (coef + kFloor));
    }
    return dt;
}

namespace detail {

inline double psi_weight(double a) { return a == 0.0 ? 1.0 : std::expm1(a) / a; }

} // namespace detail

/// One IMEX Euler-Maruyama step with exact integrating factor for the linear
/// viscosity:
///   v = uhat + dt psi(a) Nhat(u) + ghat dW,   uhat+ = exp(-a) v,
/// with a = nu_lin |k|^2 dt per mode and psi(a) = (e^a - 1)/a. The weight
/// makes exp(-a)(uhat + dt psi Nhat) the exact variation-of-constants update
/// for drift frozen at the left endpoint, so a steady forcing balances the
/// linear term without O(dt) bias. The noise enters at the pre-step state
/// (Ito convention) and rides through the same factor.
inline std::pair<SimState, StepRecord> step_with_increment(
    const SimState& s, const FlowParams& p, const NoiseSpec& ns,
    const SpectralVelocity& fhat, double dt, const SpectralVelocity& xi,
    RngStream rng_after) {
    if (!(dt > 0.0)) throw ParameterError("step: dt must be positive");
    const Grid& g = s.u.grid();

    StepRecord rec;
    rec.t = s.t;
    rec.dt = dt;
    rec.ke_pre = norm_l2_sq(s.u);
    if (!std::isfinite(rec.ke_pre)) throw DataError("step: non-finite state energy");

    const GradientTensor grad_u = gradient(s.u);
    rec.grad_l2_sq = norm_l2_sq(grad_u);
    rec.grad_lr_r = norm_lr_r(grad_u, p.r);
    rec.trace_gg = trace_g_star_g(ns, s.u, s.t);
    rec.f_dot_u = inner_product(fhat, s.u);
    rec.noise_dot_u = inner_product(xi, s.u);
    rec.noise_sq = norm_l2_sq(xi);
    rec.mart_qv = martingale_qv_increment(ns, s.u, s.t, dt);

    SpectralVelocity explicit_drift = advection(s.u);
    explicit_drift *= -1.0;
    if (p.power_law_active())
        explicit_drift += nonlinear_viscosity_from_gradient(grad_u, p.nu_bar, p.r);
    explicit_drift += fhat;

    const double nu_lin = p.linear_viscosity();
    const double ku2 = g.k_unit() * g.k_unit();
    SimState next{SpectralVelocity(g), s.t + dt, s.step_index + 1, rng_after};
    double u_dot_w = 0.0, w_sq = 0.0, v_sq = 0.0;
    for_each_entry(g, [&](int kx, int ky, int kz, std::size_t idx, double weight) {
        const double k2 = ku2 * (static_cast<double>(kx) * kx +
                                 static_cast<double>(ky) * ky +
                                 static_cast<double>(kz) * kz);
        const double a = nu_lin * k2 * dt;
        const double psi = detail::psi_weight(a);
        const double decay = std::exp(-a);
        for (int c = 0; c < 3; ++c) {
            const Complex uc = s.u.component(c)[idx];
            const Complex w = dt * psi * explicit_drift.component(c)[idx] +
                              xi.component(c)[idx];
            const Complex v = uc + w;
            next.u.component(c)[idx] = decay * v;
            u_dot_w += weight * (uc.real() * w.real() + uc.imag() * w.imag());
            w_sq += weight * std::norm(w);
            v_sq += weight * std::norm(v);
        }
    });
    rec.u_dot_update = g.volume() * u_dot_w;
    rec.update_sq = g.volume() * w_sq;
    rec.presqueeze_sq = g.volume() * v_sq;

    enforce_zero_mean(next.u);
    next.u = project_divergence_free(std::move(next.u)); // throws DataError on NaN/Inf
    rec.ke_post = norm_l2_sq(next.u);
    rec.div_residual = divergence_residual(next.u);
    return {std::move(next), rec};
}

inline std::pair<SimState, StepRecord> step(const SimState& s, const FlowParams& p,
                                            const NoiseSpec& ns,
                                            const SpectralVelocity& fhat, double dt) {
    RngStream rng = s.rng;
    SpectralVelocity xi = ns.empty() ? SpectralVelocity(s.u.grid())
                                     : sample_increment(ns, s.u, s.t, dt, rng);
    return step_with_increment(s, p, ns, fhat, dt, xi, rng);
}

/// Everything needed to advance one trajectory.
struct TrajectorySetup {
    Grid grid;
    FlowParams flow;
    NoiseSpec noise;
    StepPolicy policy;
    double horizon = 0.0;
    double burn_in = 0.0;
    SpectralVelocity u0;

    TrajectorySetup(const Grid& g, FlowParams f, NoiseSpec ns, StepPolicy pol,
                    double T, double T0, SpectralVelocity init)
        : grid(g), flow(std::move(f)), noise(std::move(ns)), policy(pol),
          horizon(T), burn_in(T0), u0(std::move(init)) {
        flow.validate();
        policy.validate();
        if (!(horizon >= 0.0)) throw ParameterError("time.T must be >= 0");
        if (!(burn_in >= 0.0) || burn_in > horizon)
            throw ParameterError("time.burn_in must lie in [0, T]");
    }
};

struct TrajectoryHooks {
    std::uint64_t snapshot_stride = 0; // in steps; 0 disables
    std::function<void(const SimState&)> on_snapshot;
};

struct TrajectoryReport {
    SimState final_state;
    std::vector<StepRecord> records;
    StepRecord terminal;  // dt = 0 marker carrying the final-state integrands
    bool aborted = false;
    std::string abort_reason;
};

/// Pseudo-record for a state: integrands evaluated there, no step taken.
inline StepRecord state_record(const SimState& s, const FlowParams& p,
                               const NoiseSpec& ns, const SpectralVelocity& fhat) {
    StepRecord rec;
    rec.t = s.t;
    rec.dt = 0.0;
    rec.ke_pre = rec.ke_post = norm_l2_sq(s.u);
    const GradientTensor grad_u = gradient(s.u);
    rec.grad_l2_sq = norm_l2_sq(grad_u);
    rec.grad_lr_r = norm_lr_r(grad_u, p.r);
    rec.trace_gg = trace_g_star_g(ns, s.u, s.t);
    rec.f_dot_u = inner_product(fhat, s.u);
    rec.div_residual = divergence_residual(s.u);
    rec.presqueeze_sq = rec.ke_pre;
    return rec;
}

/// Advance from u0 (or a restart state) to the horizon. On instability the
/// partial report is flagged invalid instead of throwing.
inline TrajectoryReport run_trajectory_from(SimState start, const TrajectorySetup& setup,
                                            const TrajectoryHooks& hooks = {}) {
    const SpectralVelocity fhat = forcing_field(setup.flow.forcing, setup.grid);
    TrajectoryReport report{std::move(start), {}, {}, false, {}};
    const double t_end = setup.horizon;
    try {
        for (;;) {
            // dt depends only on the state, never on the horizon, so a run to
            // t1 produces a bitwise prefix of a longer run and restarts are
            // exact. The trajectory stops at the step boundary nearest the
            // horizon (within dt/2).
            const double dt = setup.policy.fixed_dt > 0.0
                                  ? setup.policy.fixed_dt
                                  : stable_dt(report.final_state, setup.flow, setup.policy);
            if (report.final_state.t + 0.5 * dt >= t_end) break;
            auto [next, rec] = step(report.final_state, setup.flow, setup.noise, fhat, dt);
            report.final_state = std::move(next);
            report.records.push_back(rec);
            if (hooks.snapshot_stride > 0 && hooks.on_snapshot &&
                report.final_state.step_index % hooks.snapshot_stride == 0) {
                hooks.on_snapshot(report.final_state);
            }
        }
    } catch (const DataError& e) {
        report.aborted = true;
        report.abort_reason = e.what();
    }
    report.terminal = state_record(report.final_state, setup.flow, setup.noise, fhat);
    return report;
}

inline TrajectoryReport run_trajectory(const TrajectorySetup& setup, RngStream rng,
                                       const TrajectoryHooks& hooks = {}) {
    return run_trajectory_from(SimState{setup.u0, 0.0, 0, rng}, setup, hooks);
}

} // namespace lssm
