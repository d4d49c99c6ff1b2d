#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lssm/stats.hpp"

namespace lssm {

// ---------------------------------------------------------------------------
// Pathwise energy budget

/// Tolerance policy for the budget residual. The quadrature part scales with
/// the largest step in the window times the total budget activity; the
/// stochastic band covers the gap between the realized quadratic variation
/// sum ||g dW||^2 and its compensator integral Tr(g*g) dt.
struct BudgetTolPolicy {
    double quad_coeff = 2.0;
    double stoch_band = 0.0; // absolute width, e.g. 3 * qv_band(...)
};

/// 3-sigma band for sum ||g dW||^2 - int Tr dt over a window of length
/// horizon at step dt (additive scaling; multiplicative callers should widen
/// by a bound on sup A^4).
inline double qv_band(const NoiseSpec& ns, double dt, double horizon) {
    const double m = ns.modulation.sup();
    return 3.0 * std::sqrt(2.0 * dt * horizon * ns.sum_sigma_4th() * std::pow(m, 4));
}

/// Windowed discrete energy inequality
///   ke(t1) - ke(t0) + 2 int nu ||grad u||^2 + 2 int nu_bar ||grad u||_r^r
///     <= int Tr(g*g) + 2 int (f,u) + 2 sum (g dW, u) + eps_num.
/// `residual` uses the compensator integral Tr(g*g) dt on the right (the
/// form the analysis states); `residual_qv` replaces it with the realized
/// sum ||g dW||^2, which removes the O(sqrt(dt)) martingale fluctuation and
/// isolates pure discretization error — that is the quantity whose
/// first-order shrinkage the calibration run checks.
struct BudgetWindow {
    double t_start = 0.0;
    double t_end = 0.0;
    double lhs_dke = 0.0;
    double lhs_visc_l2 = 0.0;
    double lhs_visc_lr = 0.0;
    double rhs_trace = 0.0;
    double rhs_work = 0.0;
    double rhs_martingale = 0.0;
    double sum_noise_sq = 0.0;
    double residual = 0.0;
    double residual_qv = 0.0;
    double tolerance = 0.0;
    double tolerance_qv = 0.0;
    double max_dt = 0.0;
    bool pass = false;
};

inline BudgetWindow check_budget(const std::vector<StepRecord>& records,
                                 double t_start, double t_end, const FlowParams& p,
                                 const BudgetTolPolicy& policy = {}) {
    std::vector<const StepRecord*> window;
    for (const auto& r : records) {
        if (r.dt <= 0.0) continue;
        if (r.t >= t_start - 1e-12 && r.t + r.dt <= t_end + 1e-12) window.push_back(&r);
    }
    if (window.empty()) throw WindowError("check_budget: no records in window");
    for (std::size_t i = 1; i < window.size(); ++i) {
        const double gap = window[i]->t - (window[i - 1]->t + window[i - 1]->dt);
        if (std::abs(gap) > 1e-9 * std::max(1.0, std::abs(window[i]->t)))
            throw WindowError("check_budget: gap in record stream");
    }

    BudgetWindow bw;
    bw.t_start = window.front()->t;
    bw.t_end = window.back()->t + window.back()->dt;
    bw.lhs_dke = window.back()->ke_post - window.front()->ke_pre;
    for (const StepRecord* r : window) {
        bw.lhs_visc_l2 += 2.0 * p.nu * r->dt * r->grad_l2_sq;
        bw.lhs_visc_lr += 2.0 * p.nu_bar * r->dt * r->grad_lr_r;
        bw.rhs_trace += r->dt * r->trace_gg;
        bw.rhs_work += 2.0 * r->dt * r->f_dot_u;
        bw.rhs_martingale += 2.0 * r->noise_dot_u;
        bw.sum_noise_sq += r->noise_sq;
        bw.max_dt = std::max(bw.max_dt, r->dt);
    }
    const double lhs = bw.lhs_dke + bw.lhs_visc_l2 + bw.lhs_visc_lr;
    bw.residual = lhs - (bw.rhs_trace + bw.rhs_work + bw.rhs_martingale);
    bw.residual_qv = lhs - (bw.sum_noise_sq + bw.rhs_work + bw.rhs_martingale);

    const double activity = std::abs(bw.lhs_dke) + bw.lhs_visc_l2 + bw.lhs_visc_lr +
                            bw.rhs_trace + std::abs(bw.rhs_work) +
                            std::abs(bw.rhs_martingale);
    bw.tolerance_qv = policy.quad_coeff * bw.max_dt * activity + 1e-12 * (1.0 + activity);
    bw.tolerance = bw.tolerance_qv + policy.stoch_band;
    bw.pass = bw.residual <= bw.tolerance && bw.residual_qv <= bw.tolerance_qv;
    return bw;
}

// ---------------------------------------------------------------------------
// Martingale mean-zero and variance identity

/// Per-trajectory sample of the energy martingale over a fixed horizon:
/// value = 2 sum (g dW, u_pre), qv = its predictable quadratic variation
/// 4 sum dt sum_k (sigma_k m A (e_k,u))^2.
struct MartingaleSample {
    double value = 0.0;
    double qv = 0.0;
};

inline MartingaleSample martingale_sample(const StatsAccumulator& acc) {
    return {2.0 * acc.sum_noise_dot_u, 4.0 * acc.sum_mart_qv};
}

struct MartingaleReport {
    std::size_t samples = 0;
    double mean = 0.0;
    double stderr_mean = 0.0;
    double var_empirical = 0.0;
    double var_predicted = 0.0;
    double stderr_var = 0.0;
    bool pass_mean = false;
    bool pass_var = false;
    bool pass() const { return pass_mean && pass_var; }
};

/// Ensemble check that the stochastic work term is a mean-zero martingale
/// with the predicted variance. Mean within 3 empirical standard errors;
/// empirical variance within 5 standard errors of the QV prediction.
inline MartingaleReport check_martingale_zero(const std::vector<MartingaleSample>& samples) {
    if (samples.size() < 8)
        throw SampleError("check_martingale_zero: needs at least 8 trajectories");
    MartingaleReport rep;
    rep.samples = samples.size();
    const double m = static_cast<double>(samples.size());
    double sum = 0.0, sum_qv = 0.0;
    for (const auto& s : samples) {
        sum += s.value;
        sum_qv += s.qv;
    }
    rep.mean = sum / m;
    rep.var_predicted = sum_qv / m;
    double ss = 0.0;
    for (const auto& s : samples) ss += (s.value - rep.mean) * (s.value - rep.mean);
    rep.var_empirical = ss / (m - 1.0);
    rep.stderr_mean = std::sqrt(rep.var_empirical / m);
    rep.stderr_var = rep.var_empirical * std::sqrt(2.0 / (m - 1.0));
    rep.pass_mean = std::abs(rep.mean) <= 3.0 * rep.stderr_mean;
    rep.pass_var = std::abs(rep.var_empirical - rep.var_predicted) <= 5.0 * rep.stderr_var;
    return rep;
}

// ---------------------------------------------------------------------------
// Uniform-energy envelope

/// Groenwall envelope for E||u(t)||^2 implied by the energy inequality:
///   envelope(t) = E0 exp(-beta t) + (rho + ||f||^2/(nu lambda1)) (1 - e^{-beta t})/beta
/// with beta = nu lambda1 - rho (multiplicative) or nu lambda1 (additive).
/// The multiplicative case requires rho < nu lambda1, mirroring the
/// uniform-boundedness hypothesis.
struct EnvelopeCheck {
    std::vector<double> times;
    std::vector<double> empirical; // ensemble mean of ||u(t)||^2
    std::vector<double> envelope;
    std::vector<double> margin;    // envelope - empirical
    std::vector<double> mc_stderr;
    double beta = 0.0;
    bool pass = false;
};

inline EnvelopeCheck check_envelope(const std::vector<double>& times,
                                    const std::vector<double>& mean_ke,
                                    const std::vector<double>& stderr_ke,
                                    const FlowParams& p, const NoiseSpec& ns,
                                    const Grid& grid, double initial_mean_ke,
                                    double forcing_norm_sq) {
    if (times.size() != mean_ke.size() || times.size() != stderr_ke.size())
        throw ParameterError("check_envelope: mismatched curve lengths");
    const double nu_l1 = p.nu * grid.lambda1();
    const double rho = rho_infty(ns);
    double beta = nu_l1;
    if (ns.mode == NoiseMode::multiplicative) {
        if (rho >= nu_l1)
            throw AssumptionError(
                "check_envelope: multiplicative noise requires rho_infty < nu lambda1");
        beta = nu_l1 - rho;
    }
    const double source = rho + forcing_norm_sq / nu_l1;
    EnvelopeCheck ec;
    ec.beta = beta;
    ec.times = times;
    ec.empirical = mean_ke;
    ec.mc_stderr = stderr_ke;
    ec.pass = true;
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double decay = std::exp(-beta * times[i]);
        const double env = initial_mean_ke * decay + source * (1.0 - decay) / beta;
        ec.envelope.push_back(env);
        ec.margin.push_back(env - mean_ke[i]);
        if (mean_ke[i] > env + 3.0 * stderr_ke[i]) ec.pass = false;
    }
    return ec;
}

/// Ensemble kinetic-energy curve on the common time grid of fixed-dt runs:
/// per sampled index, mean and stderr of ke across trajectories.
inline void ensemble_ke_curve(const std::vector<std::vector<StepRecord>>& ensembles,
                              std::size_t stride, std::vector<double>& times,
                              std::vector<double>& mean_ke, std::vector<double>& stderr_ke) {
    times.clear();
    mean_ke.clear();
    stderr_ke.clear();
    if (ensembles.empty()) return;
    std::size_t len = ensembles.front().size();
    for (const auto& r : ensembles) len = std::min(len, r.size());
    const double m = static_cast<double>(ensembles.size());
    for (std::size_t i = 0; i < len; i += std::max<std::size_t>(1, stride)) {
        double sum = 0.0, sum2 = 0.0;
        for (const auto& recs : ensembles) {
            sum += recs[i].ke_pre;
            sum2 += recs[i].ke_pre * recs[i].ke_pre;
        }
        const double mean = sum / m;
        const double var = m > 1.0 ? std::max(0.0, (sum2 - m * mean * mean) / (m - 1.0)) : 0.0;
        times.push_back(ensembles.front()[i].t);
        mean_ke.push_back(mean);
        stderr_ke.push_back(std::sqrt(var / m));
    }
}

// ---------------------------------------------------------------------------
// Pointwise functional inequalities

/// Exact inequalities for discrete fields; a violation beyond the stated
/// slack indicates an implementation bug, not model behavior.
struct PointwiseReport {
    struct Row {
        std::size_t snapshot = 0;
        double poincare_margin = 0.0;      // ||grad u||^2 - lambda1 ||u||^2
        double cauchy_schwarz_margin = 0.0;
        double hoelder_margin = 0.0;
        double work_margin = 0.0;          // ||f|| ||u|| - |(f,u)|
    };
    std::vector<Row> rows;
    std::vector<std::size_t> violations;
    bool pass = true;
};

inline PointwiseReport check_pointwise_inequalities(
    const std::vector<SpectralVelocity>& snapshots, const SpectralVelocity& fhat,
    const FlowParams& p) {
    PointwiseReport rep;
    const GradientTensor grad_f = gradient(fhat);
    const double f_l2 = norm_l2_sq(fhat);
    const double gf_l2 = norm_l2_sq(grad_f);
    const double gf_lr = norm_lr_r(grad_f, p.r);
    for (std::size_t i = 0; i < snapshots.size(); ++i) {
        const SpectralVelocity& u = snapshots[i];
        const Grid& g = u.grid();
        const GradientTensor grad_u = gradient(u);
        PointwiseReport::Row row;
        row.snapshot = i;
        bool ok = true;

        const double u_l2 = norm_l2_sq(u);
        const double gu_l2 = norm_l2_sq(grad_u);
        row.poincare_margin = gu_l2 - g.lambda1() * u_l2;
        if (g.lambda1() * u_l2 > gu_l2 * (1.0 + 1e-10)) ok = false;

        const double mixed = std::abs(inner_product(grad_u, grad_f));
        const double cs_bound = std::sqrt(gu_l2) * std::sqrt(gf_l2);
        row.cauchy_schwarz_margin = cs_bound - mixed;
        if (mixed > cs_bound * (1.0 + 1e-10)) ok = false;

        GradientTensor stress(g);
        if (p.r == 2.0) {
            stress = grad_u;
        } else {
            for (std::size_t pt = 0; pt < g.physical_size(); ++pt) {
                const double mag = std::pow(grad_u.frobenius_sq(pt), 0.5 * (p.r - 2.0));
                for (int e = 0; e < 9; ++e) stress.comp[e][pt] = mag * grad_u.comp[e][pt];
            }
        }
        const double gu_lr = norm_lr_r(grad_u, p.r);
        const double h_lhs = std::abs(inner_product(stress, grad_f));
        const double h_rhs = std::pow(gu_lr, (p.r - 1.0) / p.r) * std::pow(gf_lr, 1.0 / p.r);
        row.hoelder_margin = h_rhs - h_lhs;
        if (h_lhs > h_rhs * (1.0 + 1e-8)) ok = false;

        const double work = std::abs(inner_product(fhat, u));
        const double work_bound = std::sqrt(f_l2) * std::sqrt(u_l2);
        row.work_margin = work_bound - work;
        if (work > work_bound * (1.0 + 1e-10)) ok = false;

        rep.rows.push_back(row);
        if (!ok) {
            rep.violations.push_back(i);
            rep.pass = false;
        }
    }
    return rep;
}

} // namespace lssm
