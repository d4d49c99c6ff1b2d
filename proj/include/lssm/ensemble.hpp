#pragma once

#include <atomic>
#include <filesystem>
#include <mutex>
#include <thread>
#include <vector>

#include "lssm/audit.hpp"
#include "lssm/checkpoint.hpp"
#include "lssm/io.hpp"

namespace lssm {

/// Config hash with the ensemble bookkeeping keys removed: two runs with the
/// same physics hash produce identical trajectories for equal stream indices,
/// which is the compatibility requirement for merging partials.
inline std::string physics_hash(const RunConfig& cfg) {
    Json echo = config_echo(cfg);
    echo.erase("ensemble");
    std::uint64_t h = 1469598103934665603ULL;
    for (const unsigned char ch : echo.dump()) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

/// Reduced outcome of one trajectory (records are written to disk and
/// dropped; everything the pooled report needs is kept here).
struct TrajectoryOutcome {
    int index = 0;
    bool aborted = false;
    std::string abort_reason;
    StatsAccumulator window; // post burn-in
    StatsAccumulator raw;    // whole horizon
    double initial_ke = 0.0;
    double max_div_residual = 0.0;
    std::vector<double> ke_times;
    std::vector<double> ke_curve;
};

struct EnsemblePartial {
    std::string hash;        // physics hash
    std::uint64_t master_seed = 0;
    std::vector<TrajectoryOutcome> outcomes; // ordered by index
};

struct EnsembleOptions {
    std::string artifact_dir; // empty disables artifact files
    int threads = 0;          // 0: use config parallel_width
    BoundTolerances bound;    // cap_b3 pinned here
    std::size_t envelope_points = 128;
};

struct EnsembleReport {
    std::string config_hash;
    std::string physics_hash;
    std::uint64_t master_seed = 0;
    int grid_n = 0;
    int m = 0;
    int survivors = 0;
    bool failed = false;
    std::vector<Statistics> per_trajectory;
    std::vector<int> trajectory_index;
    std::vector<int> aborted_indices;
    Statistics pooled;
    double se_eps0 = 0.0, se_epsM = 0.0, se_U = 0.0, se_G2 = 0.0, se_boundary = 0.0;
    BoundaryTerms pooled_boundary;
    BoundReport bound;
    bool has_martingale = false;
    MartingaleReport martingale;
    bool has_envelope = false;
    std::string envelope_note;
    EnvelopeCheck envelope;
    int budget_pass = 0;
    int budget_total = 0;
    double max_div_residual = 0.0;
};

namespace detail {

inline std::filesystem::path trajectory_dir(const std::string& root, const std::string& hash,
                                            std::uint64_t seed, int index) {
    return std::filesystem::path(root) / hash / std::to_string(seed) /
           ("traj_" + std::to_string(index));
}

inline std::mutex& fs_mutex() {
    static std::mutex m;
    return m;
}

} // namespace detail

/// Run trajectories [first, first + count) of the configured ensemble.
/// Trajectory k uses stream index k of the master seed, so the result set is
/// a pure function of (physics config, master seed, k) and partial runs can
/// be merged. Aggregation order is fixed regardless of thread scheduling.
inline EnsemblePartial run_ensemble_partial(const RunConfig& cfg, int first, int count,
                                            const EnsembleOptions& opts = {}) {
    RunConfig cfg_resolved = cfg;
    const Grid grid = make_grid(cfg_resolved);
    resolve_forcing(cfg_resolved.forcing, grid);
    make_flow(cfg_resolved);  // validate early
    make_policy(cfg_resolved);
    const std::string hash = physics_hash(cfg_resolved);
    const std::string full_hash = config_hash(cfg_resolved);

    EnsemblePartial partial;
    partial.hash = hash;
    partial.master_seed = cfg_resolved.seed;
    partial.outcomes.resize(count);

    const std::size_t total_steps_hint =
        cfg_resolved.dt_fixed
            ? static_cast<std::size_t>(cfg_resolved.horizon / cfg_resolved.dt + 1.0)
            : 256;
    const std::size_t env_stride =
        std::max<std::size_t>(1, total_steps_hint / std::max<std::size_t>(1, opts.envelope_points));

    auto worker = [&](int k) {
        TrajectoryOutcome& out = partial.outcomes[k];
        out.index = first + k;
        try {
            RngStream rng(cfg_resolved.seed, static_cast<std::uint64_t>(first + k));
            TrajectorySetup setup = make_setup(cfg_resolved, rng);

            std::vector<std::pair<std::uint64_t, SimState>> snaps;
            TrajectoryHooks hooks;
            if (cfg_resolved.snapshot_stride > 0 && !opts.artifact_dir.empty()) {
                hooks.snapshot_stride = cfg_resolved.snapshot_stride;
                hooks.on_snapshot = [&snaps](const SimState& s) {
                    snaps.emplace_back(s.step_index, s);
                };
            }
            TrajectoryReport rep = run_trajectory(setup, rng, hooks);
            out.aborted = rep.aborted;
            out.abort_reason = rep.abort_reason;
            out.window = accumulate_window(rep.records, rep.terminal, cfg_resolved.burn_in);
            out.raw = accumulate_window(rep.records, rep.terminal, 0.0);
            out.initial_ke =
                rep.records.empty() ? rep.terminal.ke_pre : rep.records.front().ke_pre;
            for (std::size_t i = 0; i < rep.records.size(); ++i) {
                out.max_div_residual =
                    std::max(out.max_div_residual, rep.records[i].div_residual);
                if (i % env_stride == 0) {
                    out.ke_times.push_back(rep.records[i].t);
                    out.ke_curve.push_back(rep.records[i].ke_pre);
                }
            }
            if (!opts.artifact_dir.empty()) {
                const auto dir = detail::trajectory_dir(opts.artifact_dir, hash,
                                                        cfg_resolved.seed, first + k);
                {
                    std::lock_guard<std::mutex> lock(detail::fs_mutex());
                    std::filesystem::create_directories(dir / "snapshots");
                }
                write_records_csv((dir / "records.csv").string(), rep.records,
                                  rep.terminal, full_hash, cfg_resolved.cadence);
                for (const auto& [step_idx, snap] : snaps) {
                    char name[32];
                    std::snprintf(name, sizeof name, "step_%08llu.fld",
                                  static_cast<unsigned long long>(step_idx));
                    save_field((dir / "snapshots" / name).string(), snap.u, snap.t,
                               snap.step_index);
                }
                save_checkpoint((dir / "final.ckpt").string(), rep.final_state);
                Json summary;
                summary["version"] = kVersionString;
                summary["config_hash"] = full_hash;
                summary["physics_hash"] = hash;
                summary["master_seed"] = cfg_resolved.seed;
                summary["stream_index"] = first + k;
                summary["aborted"] = out.aborted;
                summary["abort_reason"] = out.abort_reason;
                summary["martingale_sum"] = json_number(2.0 * out.raw.sum_noise_dot_u);
                summary["martingale_qv"] = json_number(4.0 * out.raw.sum_mart_qv);
                summary["max_div_residual"] = json_number(out.max_div_residual);
                std::ofstream js(dir / "summary.json");
                js << summary.dump(2) << "\n";
            }
        } catch (const std::exception& e) {
            out.aborted = true;
            out.abort_reason = e.what();
        }
    };

    int width = opts.threads > 0 ? opts.threads : cfg_resolved.parallel_width;
    width = std::max(1, std::min(width, count));
    if (width == 1) {
        for (int k = 0; k < count; ++k) worker(k);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        pool.reserve(width);
        for (int w = 0; w < width; ++w) {
            pool.emplace_back([&] {
                for (;;) {
                    const int k = next.fetch_add(1);
                    if (k >= count) return;
                    worker(k);
                }
            });
        }
        for (auto& th : pool) th.join();
    }
    return partial;
}

/// Merge partials over disjoint index sets (associative; canonical order by
/// trajectory index is restored after each merge).
inline EnsemblePartial merge(const EnsemblePartial& a, const EnsemblePartial& b) {
    if (a.outcomes.empty()) return b;
    if (b.outcomes.empty()) return a;
    if (a.hash != b.hash || a.master_seed != b.master_seed)
        throw ParameterError("merge: partials come from different configurations");
    EnsemblePartial out = a;
    out.outcomes.insert(out.outcomes.end(), b.outcomes.begin(), b.outcomes.end());
    std::sort(out.outcomes.begin(), out.outcomes.end(),
              [](const TrajectoryOutcome& x, const TrajectoryOutcome& y) {
                  return x.index < y.index;
              });
    for (std::size_t i = 1; i < out.outcomes.size(); ++i)
        if (out.outcomes[i].index == out.outcomes[i - 1].index)
            throw ParameterError("merge: overlapping trajectory index sets");
    return out;
}

namespace detail {

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& xs) {
    MeanSe r;
    if (xs.empty()) return r;
    const double m = static_cast<double>(xs.size());
    for (const double x : xs) r.mean += x;
    r.mean /= m;
    if (xs.size() > 1) {
        double ss = 0.0;
        for (const double x : xs) ss += (x - r.mean) * (x - r.mean);
        r.se = std::sqrt(ss / (m - 1.0) / m);
    }
    return r;
}

} // namespace detail

/// Pool a partial into the expectation-level report: per-trajectory window
/// means are averaged across survivors (expectation before root/ratios), the
/// bound chain is evaluated on the pooled statistics with a
/// quadrature + 3-standard-error tolerance budget, and the martingale and
/// envelope audits are attached where applicable.
inline EnsembleReport finalize_ensemble(const EnsemblePartial& partial, const RunConfig& cfg,
                                        const EnsembleOptions& opts = {}) {
    RunConfig cfg_resolved = cfg;
    const Grid grid = make_grid(cfg_resolved);
    resolve_forcing(cfg_resolved.forcing, grid);
    const FlowParams flow = make_flow(cfg_resolved);
    const NoiseSpec ns = make_noise(cfg_resolved, grid);
    const SpectralVelocity fhat = forcing_field(flow.forcing, grid);

    EnsembleReport rep;
    rep.config_hash = config_hash(cfg_resolved);
    rep.physics_hash = partial.hash;
    rep.master_seed = partial.master_seed;
    rep.grid_n = grid.n();
    rep.m = static_cast<int>(partial.outcomes.size());

    const double volume = grid.volume();
    std::vector<double> x_grad, x_lr, x_ke, x_trace, x_bnd, x_fu;
    std::vector<MartingaleSample> mart;
    std::vector<const TrajectoryOutcome*> survivors;
    for (const auto& out : partial.outcomes) {
        rep.trajectory_index.push_back(out.index);
        if (out.aborted || !(out.window.elapsed > 0.0)) {
            rep.aborted_indices.push_back(out.index);
            rep.per_trajectory.push_back(Statistics{});
            continue;
        }
        survivors.push_back(&out);
        const double vt = volume * out.window.elapsed;
        x_grad.push_back(out.window.int_grad_l2_sq / vt);
        x_lr.push_back(out.window.int_grad_lr_r / vt);
        x_ke.push_back(out.window.int_ke / vt);
        x_trace.push_back(out.window.int_trace_gg / vt);
        const BoundaryTerms bt = boundary_terms(out.window, grid);
        x_bnd.push_back(bt.dke_over_2vt);
        x_fu.push_back(bt.dfu_over_vt);
        mart.push_back(martingale_sample(out.raw));
        rep.per_trajectory.push_back(finalize(out.window, flow, ns, grid, fhat));
        rep.max_div_residual = std::max(rep.max_div_residual, out.max_div_residual);
    }
    rep.survivors = static_cast<int>(survivors.size());
    rep.failed = rep.survivors * 2 < rep.m;
    if (survivors.empty()) {
        rep.failed = true;
        return rep;
    }

    const auto g2m = detail::mean_se(x_grad);
    const auto lrm = detail::mean_se(x_lr);
    const auto kem = detail::mean_se(x_ke);
    const auto trm = detail::mean_se(x_trace);
    const auto bnm = detail::mean_se(x_bnd);
    const auto fum = detail::mean_se(x_fu);

    double t0 = survivors.front()->window.t_start;
    double t1 = survivors.front()->window.t_end;
    double max_dt = 0.0;
    for (const auto* s : survivors) max_dt = std::max(max_dt, s->window.max_dt);

    rep.pooled = statistics_from_means(g2m.mean, lrm.mean, kem.mean, trm.mean, flow, ns,
                                       grid, fhat, t0, t1);
    rep.se_eps0 = flow.nu * g2m.se;
    rep.se_epsM = flow.nu_bar * lrm.se;
    rep.se_U = rep.pooled.U > 0.0 ? kem.se / (2.0 * rep.pooled.U) : 0.0;
    rep.se_G2 = trm.se;
    rep.se_boundary = bnm.se;
    rep.pooled_boundary = BoundaryTerms{bnm.mean, fum.mean};

    // tolerance budget: left-endpoint quadrature bias plus 3 standard errors
    const Statistics& st = rep.pooled;
    BoundTolerances tol = opts.bound;
    const double se_eps = rep.se_eps0 + rep.se_epsM;
    const double quad_b1 =
        2.0 * max_dt * (st.eps + 0.5 * st.G2 + st.F * st.U + std::abs(bnm.mean));
    tol.tol_b1 = quad_b1 +
                 3.0 * (0.5 * rep.se_G2 + st.F * rep.se_U + se_eps + rep.se_boundary) +
                 1e-12 * (1.0 + st.eps);
    if (st.U > 0.0) {
        const double r = st.r;
        const double db2_du =
            2.0 * st.U / st.L + 0.5 * st.nu / (st.L * st.L) +
            0.5 * st.eps0 / (st.U * st.U) + ((r - 1.0) / r) * st.epsM / (st.U * st.U) +
            ((r - 1.0) / r) * (st.nu_bar / std::pow(st.L, r)) * std::pow(st.U, r - 2.0);
        const double se_fu_term = st.F > 0.0 ? fum.se / st.F : 0.0;
        tol.tol_b2 = 2.0 * max_dt * st.F / std::max(t1 - t0, 1e-30) +
                     3.0 * (db2_du * rep.se_U + 0.5 * rep.se_eps0 / st.U +
                            ((r - 1.0) / r) * rep.se_epsM / st.U + se_fu_term) +
                     1e-12 * (1.0 + st.F);
        rep.bound = bound_check(st, rep.pooled_boundary, tol);
    } else {
        rep.bound = bound_check(st, rep.pooled_boundary, tol);
    }

    // per-trajectory pathwise budget over the averaging window
    for (const auto* s : survivors) {
        const StatsAccumulator& w = s->window;
        const double lhs = (w.boundary_ke_end - w.boundary_ke_start) +
                           2.0 * flow.nu * w.int_grad_l2_sq +
                           2.0 * flow.nu_bar * w.int_grad_lr_r;
        const double rhs_qv = w.sum_noise_sq + 2.0 * w.int_f_dot_u +
                              2.0 * w.sum_noise_dot_u;
        const double rhs_tr = w.int_trace_gg + 2.0 * w.int_f_dot_u +
                              2.0 * w.sum_noise_dot_u;
        const double activity = std::abs(w.boundary_ke_end - w.boundary_ke_start) +
                                2.0 * flow.nu * w.int_grad_l2_sq +
                                2.0 * flow.nu_bar * w.int_grad_lr_r + w.int_trace_gg +
                                2.0 * std::abs(w.int_f_dot_u) +
                                2.0 * std::abs(w.sum_noise_dot_u);
        const double tol_qv = 2.0 * w.max_dt * activity + 1e-12 * (1.0 + activity);
        const double band = qv_band(ns, w.max_dt, w.elapsed) * (1.0 + w.max_ke);
        ++rep.budget_total;
        if (lhs - rhs_qv <= tol_qv && lhs - rhs_tr <= tol_qv + band) ++rep.budget_pass;
    }

    if (ns.mode == NoiseMode::multiplicative || !cfg_resolved.noise_enabled ||
        cfg_resolved.sigma0 == 0.0) {
        rep.has_martingale = false;
    } else if (mart.size() >= 8) {
        rep.has_martingale = true;
        rep.martingale = check_martingale_zero(mart);
    }

    if (cfg_resolved.dt_fixed && rep.survivors >= 2) {
        std::size_t len = survivors.front()->ke_curve.size();
        for (const auto* s : survivors) len = std::min(len, s->ke_curve.size());
        if (len >= 2) {
            std::vector<double> times, mean_ke, se_ke;
            const double m = static_cast<double>(survivors.size());
            for (std::size_t i = 0; i < len; ++i) {
                double sum = 0.0, sum2 = 0.0;
                for (const auto* s : survivors) {
                    sum += s->ke_curve[i];
                    sum2 += s->ke_curve[i] * s->ke_curve[i];
                }
                const double mean = sum / m;
                const double var = std::max(0.0, (sum2 - m * mean * mean) / (m - 1.0));
                times.push_back(survivors.front()->ke_times[i]);
                mean_ke.push_back(mean);
                se_ke.push_back(std::sqrt(var / m));
            }
            double e0 = 0.0;
            for (const auto* s : survivors) e0 += s->initial_ke;
            e0 /= m;
            try {
                rep.envelope = check_envelope(times, mean_ke, se_ke, flow, ns, grid, e0,
                                              norm_l2_sq(fhat));
                rep.has_envelope = true;
            } catch (const AssumptionError& e) {
                rep.has_envelope = false;
                rep.envelope_note = e.what();
            }
        }
    }
    return rep;
}

inline EnsembleReport run_ensemble(const RunConfig& cfg, const EnsembleOptions& opts = {}) {
    EnsemblePartial partial = run_ensemble_partial(cfg, 0, cfg.ensemble_m, opts);
    return finalize_ensemble(partial, cfg, opts);
}

/// Deterministic JSON rendering of the report (fixed key order; identical
/// runs serialize to identical bytes).
inline Json to_json(const EnsembleReport& rep) {
    Json j;
    j["version"] = kVersionString;
    j["config_hash"] = rep.config_hash;
    j["physics_hash"] = rep.physics_hash;
    j["master_seed"] = rep.master_seed;
    j["m"] = rep.m;
    j["survivors"] = rep.survivors;
    j["failed"] = rep.failed;
    j["n"] = rep.grid_n;
    j["pooled"] = to_json(rep.pooled);
    j["stderr"] = {{"eps0", json_number(rep.se_eps0)},
                   {"epsM", json_number(rep.se_epsM)},
                   {"U", json_number(rep.se_U)},
                   {"G2", json_number(rep.se_G2)},
                   {"boundary", json_number(rep.se_boundary)}};
    j["bound"] = to_json(rep.bound);
    if (rep.has_martingale) {
        j["martingale"] = {{"samples", rep.martingale.samples},
                           {"mean", json_number(rep.martingale.mean)},
                           {"stderr", json_number(rep.martingale.stderr_mean)},
                           {"var_empirical", json_number(rep.martingale.var_empirical)},
                           {"var_predicted", json_number(rep.martingale.var_predicted)},
                           {"pass_mean", rep.martingale.pass_mean},
                           {"pass_var", rep.martingale.pass_var}};
    } else {
        j["martingale"] = nullptr;
    }
    if (rep.has_envelope) {
        j["envelope"] = {{"pass", rep.envelope.pass},
                         {"beta", json_number(rep.envelope.beta)},
                         {"points", rep.envelope.times.size()}};
    } else {
        j["envelope"] = rep.envelope_note.empty() ? Json() : Json(rep.envelope_note);
    }
    j["audit"] = {{"budget_pass", rep.budget_pass},
                  {"budget_total", rep.budget_total},
                  {"max_div_residual", json_number(rep.max_div_residual)}};
    Json trajectories = Json::array();
    for (std::size_t i = 0; i < rep.per_trajectory.size(); ++i) {
        const bool aborted =
            std::find(rep.aborted_indices.begin(), rep.aborted_indices.end(),
                      rep.trajectory_index[i]) != rep.aborted_indices.end();
        Json t;
        t["index"] = rep.trajectory_index[i];
        t["aborted"] = aborted;
        t["stats"] = aborted ? Json() : to_json(rep.per_trajectory[i]);
        trajectories.push_back(t);
    }
    j["trajectories"] = trajectories;
    return j;
}

} // namespace lssm
