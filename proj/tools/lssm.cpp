// lssm — pseudo-spectral simulator and statistics harness for the
// stochastically forced Ladyzhenskaya-Smagorinsky equations on a periodic
// box. Subcommands: run, ensemble, audit, bound-sweep, spectrum-dump.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "lssm/ensemble.hpp"

namespace fs = std::filesystem;
using namespace lssm;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    int threads = 0;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "run configuration (JSON)")->required();
    cmd->add_option("--set", args.overrides,
                    "override config keys by dotted path, e.g. --set flow.nu=0.05");
    cmd->add_option("--out", args.out_dir,
                    "artifact root (default $LSSM_ARTIFACT_ROOT or ./artifacts)");
    cmd->add_option("--threads", args.threads, "cap on concurrent trajectories");
    cmd->add_option("--seed", args.seed, "master seed override")
        ->each([&args](const std::string&) { args.seed_set = true; });
}

std::string artifact_root(const CommonArgs& args) {
    if (!args.out_dir.empty()) return args.out_dir;
    if (const char* env = std::getenv("LSSM_ARTIFACT_ROOT")) return env;
    return "artifacts";
}

RunConfig load_config(const CommonArgs& args) {
    std::ifstream in(args.config_path);
    if (!in) throw IoError("cannot open config file: " + args.config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    Json j;
    try {
        j = Json::parse(ss.str());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    for (const auto& o : args.overrides) apply_override(j, o);
    RunConfig cfg = parse_config_json(j);
    if (args.seed_set) cfg.seed = args.seed;
    return cfg;
}

fs::path ensemble_dir(const std::string& root, const RunConfig& cfg) {
    return fs::path(root) / physics_hash(cfg) / std::to_string(cfg.seed);
}

void write_json(const fs::path& path, const Json& j) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

void print_report_summary(const EnsembleReport& rep) {
    auto line = [](const std::string& name, bool ok, const std::string& detail) {
        std::cout << (ok ? "PASS " : "FAIL ") << name << "  " << detail << "\n";
    };
    const Statistics& st = rep.pooled;
    std::cout << "eps=" << st.eps << " (eps0=" << st.eps0 << ", epsM=" << st.epsM
              << ")  U=" << st.U << "  F=" << st.F << "  L=" << st.L << "  G2=" << st.G2
              << "\nRe_nu=" << st.Re_nu << "  Re_nubar=" << st.Re_nubar
              << "  tau=" << st.tau << "  T=[" << st.burn_in << "," << st.horizon << "]\n";
    line("survivors", !rep.failed,
         std::to_string(rep.survivors) + "/" + std::to_string(rep.m));
    line("bound_B1", rep.bound.pass_b1,
         "residual=" + std::to_string(rep.bound.residual_B1));
    line("bound_B2", rep.bound.pass_b2,
         "residual=" + std::to_string(rep.bound.residual_B2));
    line("bound_B3", rep.bound.pass_b3, "ratio=" + std::to_string(rep.bound.ratio_B3));
    line("budget", rep.budget_pass == rep.budget_total,
         std::to_string(rep.budget_pass) + "/" + std::to_string(rep.budget_total));
    if (rep.has_martingale)
        line("martingale", rep.martingale.pass(),
             "mean=" + std::to_string(rep.martingale.mean));
    if (rep.has_envelope)
        line("envelope", rep.envelope.pass, "beta=" + std::to_string(rep.envelope.beta));
    line("incompressibility", rep.max_div_residual <= 1e-12,
         "max_div_residual=" + std::to_string(rep.max_div_residual));
}

bool report_ok(const EnsembleReport& rep) {
    if (rep.failed) return false;
    if (!rep.bound.pass()) return false;
    if (rep.budget_pass != rep.budget_total) return false;
    if (rep.has_martingale && !rep.martingale.pass()) return false;
    if (rep.has_envelope && !rep.envelope.pass) return false;
    if (rep.max_div_residual > 1e-12) return false;
    return true;
}

int cmd_run(const CommonArgs& args) {
    RunConfig cfg = load_config(args);
    cfg.ensemble_m = 1;
    EnsembleOptions opts;
    opts.artifact_dir = artifact_root(args);
    opts.threads = 1;
    EnsembleReport rep = run_ensemble(cfg, opts);
    const fs::path dir = ensemble_dir(opts.artifact_dir, cfg);
    Json j = to_json(rep);
    j["config_echo"] = config_echo(cfg);
    write_json(dir / "run.json", j);
    print_report_summary(rep);
    std::cout << "artifacts: " << dir.string() << "\n";
    return report_ok(rep) ? 0 : 1;
}

int cmd_ensemble(const CommonArgs& args) {
    RunConfig cfg = load_config(args);
    EnsembleOptions opts;
    opts.artifact_dir = artifact_root(args);
    opts.threads = args.threads;
    EnsembleReport rep = run_ensemble(cfg, opts);
    const fs::path dir = ensemble_dir(opts.artifact_dir, cfg);
    Json j = to_json(rep);
    j["config_echo"] = config_echo(cfg);
    write_json(dir / "ensemble.json", j);
    print_report_summary(rep);
    std::cout << "artifacts: " << dir.string() << "\n";
    return report_ok(rep) ? 0 : 1;
}

int cmd_audit(const CommonArgs& args, const std::string& dir_arg) {
    RunConfig cfg = load_config(args);
    const Grid grid = make_grid(cfg);
    resolve_forcing(cfg.forcing, grid);
    const FlowParams flow = make_flow(cfg);
    const NoiseSpec ns = make_noise(cfg, grid);
    const SpectralVelocity fhat = forcing_field(flow.forcing, grid);

    fs::path dir = dir_arg.empty() ? ensemble_dir(artifact_root(args), cfg) : fs::path(dir_arg);
    if (!fs::exists(dir)) throw IoError("audit: no artifacts under " + dir.string());

    Json audit;
    audit["version"] = kVersionString;
    audit["config_hash"] = config_hash(cfg);
    audit["artifact_dir"] = dir.string();
    bool all_pass = true;

    std::map<int, fs::path> traj_dirs;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (entry.is_directory() && name.rfind("traj_", 0) == 0)
            traj_dirs[std::stoi(name.substr(5))] = entry.path();
    }
    if (traj_dirs.empty()) throw IoError("audit: no traj_* directories under " + dir.string());

    // per-trajectory pathwise budgets from the stored record streams
    Json budgets = Json::array();
    std::vector<MartingaleSample> mart;
    std::vector<std::vector<StepRecord>> curves;
    for (const auto& [index, tdir] : traj_dirs) {
        Json b;
        b["index"] = index;
        const auto rows = read_records_csv((tdir / "records.csv").string());
        std::vector<StepRecord> steps(rows.begin(), rows.empty() ? rows.end() : rows.end() - 1);
        try {
            if (steps.empty()) throw WindowError("no step rows");
            StatsAccumulator acc;
            for (const auto& r : steps) accumulate(acc, r);
            BudgetTolPolicy pol;
            pol.stoch_band = qv_band(ns, acc.max_dt, acc.elapsed) * (1.0 + acc.max_ke);
            BudgetWindow bw = check_budget(steps, steps.front().t,
                                           steps.back().t + steps.back().dt, flow, pol);
            b["residual"] = json_number(bw.residual);
            b["residual_qv"] = json_number(bw.residual_qv);
            b["tolerance"] = json_number(bw.tolerance);
            b["pass"] = bw.pass;
            if (!bw.pass) all_pass = false;
        } catch (const WindowError& e) {
            b["skipped"] = e.what(); // cadenced records cannot be audited pathwise
        }
        std::ifstream sj(tdir / "summary.json");
        if (sj) {
            Json summary = Json::parse(sj, nullptr, false);
            if (!summary.is_discarded() && summary.contains("martingale_sum") &&
                summary["martingale_sum"].is_number()) {
                mart.push_back({summary["martingale_sum"].get<double>(),
                                summary["martingale_qv"].get<double>()});
            }
        }
        curves.push_back(steps);
        budgets.push_back(b);
    }
    audit["budget"] = budgets;

    if (cfg.noise_enabled && cfg.sigma0 > 0.0 && ns.mode == NoiseMode::additive &&
        mart.size() >= 8) {
        MartingaleReport mr = check_martingale_zero(mart);
        audit["martingale"] = {{"samples", mr.samples},
                               {"mean", json_number(mr.mean)},
                               {"stderr", json_number(mr.stderr_mean)},
                               {"var_empirical", json_number(mr.var_empirical)},
                               {"var_predicted", json_number(mr.var_predicted)},
                               {"pass_mean", mr.pass_mean},
                               {"pass_var", mr.pass_var}};
        if (!mr.pass()) all_pass = false;
    } else {
        audit["martingale"] = nullptr;
    }

    if (cfg.dt_fixed && curves.size() >= 2) {
        std::vector<double> times, mean_ke, se_ke;
        ensemble_ke_curve(curves, std::max<std::size_t>(1, curves.front().size() / 128),
                          times, mean_ke, se_ke);
        try {
            EnvelopeCheck ec = check_envelope(times, mean_ke, se_ke, flow, ns, grid,
                                              mean_ke.empty() ? 0.0 : mean_ke.front(),
                                              norm_l2_sq(fhat));
            audit["envelope"] = {{"pass", ec.pass},
                                 {"beta", json_number(ec.beta)},
                                 {"points", ec.times.size()}};
            if (!ec.pass) all_pass = false;
        } catch (const AssumptionError& e) {
            audit["envelope"] = e.what();
        }
    } else {
        audit["envelope"] = nullptr;
    }

    // pointwise inequalities over the stored snapshots
    std::vector<SpectralVelocity> snaps;
    for (const auto& [index, tdir] : traj_dirs) {
        const fs::path sdir = tdir / "snapshots";
        if (!fs::exists(sdir)) continue;
        std::map<std::string, fs::path> ordered;
        for (const auto& f : fs::directory_iterator(sdir))
            ordered[f.path().filename().string()] = f.path();
        for (const auto& [name, p] : ordered) snaps.push_back(load_field(p.string()).first);
    }
    if (!snaps.empty()) {
        PointwiseReport pw = check_pointwise_inequalities(snaps, fhat, flow);
        audit["pointwise"] = {{"snapshots", pw.rows.size()},
                              {"violations", pw.violations},
                              {"pass", pw.pass}};
        if (!pw.pass) all_pass = false;
    } else {
        audit["pointwise"] = nullptr;
    }

    audit["pass"] = all_pass;
    write_json(dir / "audit.json", audit);
    std::cout << (all_pass ? "PASS" : "FAIL") << " audit over " << traj_dirs.size()
              << " trajectories -> " << (dir / "audit.json").string() << "\n";
    return all_pass ? 0 : 1;
}

int cmd_bound_sweep(const CommonArgs& args, const std::string& nu_list) {
    RunConfig base = load_config(args);
    std::vector<double> nus;
    std::stringstream ss(nu_list);
    std::string cell;
    while (std::getline(ss, cell, ',')) nus.push_back(std::stod(cell));
    if (nus.empty()) throw ConfigError("bound-sweep: empty --nu list");

    const std::string root = artifact_root(args);
    Json table = Json::array();
    std::ostringstream csv, plot;
    csv << "nu,Re_nu,eps,ratio_B3,residual_B1,residual_B2\n";
    plot << "# nu Re_nu eps ratio_B3 residual_B1 residual_B2\n";
    bool ok = true;
    for (const double nu : nus) {
        RunConfig cfg = base;
        cfg.nu = nu;
        EnsembleOptions opts;
        opts.artifact_dir = root;
        opts.threads = args.threads;
        EnsembleReport rep = run_ensemble(cfg, opts);
        write_json(ensemble_dir(root, cfg) / "ensemble.json", to_json(rep));
        if (!report_ok(rep)) ok = false;
        const Statistics& st = rep.pooled;
        csv << st.nu << ',' << st.Re_nu << ',' << st.eps << ',' << rep.bound.ratio_B3
            << ',' << rep.bound.residual_B1 << ',' << rep.bound.residual_B2 << "\n";
        plot << st.nu << ' ' << st.Re_nu << ' ' << st.eps << ' ' << rep.bound.ratio_B3
             << ' ' << rep.bound.residual_B1 << ' ' << rep.bound.residual_B2 << "\n";
        table.push_back({{"nu", st.nu},
                         {"Re_nu", json_number(st.Re_nu)},
                         {"eps", json_number(st.eps)},
                         {"ratio_B3", json_number(rep.bound.ratio_B3)},
                         {"residual_B1", json_number(rep.bound.residual_B1)},
                         {"residual_B2", json_number(rep.bound.residual_B2)},
                         {"pass", report_ok(rep)}});
        std::cout << "nu=" << nu << " Re_nu=" << st.Re_nu << " eps=" << st.eps
                  << " ratio_B3=" << rep.bound.ratio_B3
                  << (report_ok(rep) ? "  PASS" : "  FAIL") << "\n";
    }
    const fs::path dir = fs::path(root) / ("sweep_" + physics_hash(base));
    fs::create_directories(dir);
    std::ofstream(dir / "sweep.csv") << csv.str();
    std::ofstream(dir / "sweep_plot.dat") << plot.str();
    Json j;
    j["version"] = kVersionString;
    j["rows"] = table;
    write_json(dir / "sweep.json", j);
    std::cout << "sweep artifacts: " << dir.string() << "\n";
    return ok ? 0 : 1;
}

int cmd_spectrum_dump(const std::string& field_path, const std::string& out_path) {
    SpectralVelocity u = [&] {
        try {
            return load_checkpoint(field_path).u;
        } catch (const IoError&) {
            return load_field(field_path).first;
        }
    }();
    const Grid& g = u.grid();
    std::map<int, std::pair<double, std::size_t>> shells;
    for_each_entry(g, [&](int kx, int ky, int kz, std::size_t idx, double w) {
        double e = 0.0;
        for (int c = 0; c < 3; ++c) e += std::norm(u.component(c)[idx]);
        if (e == 0.0) return;
        const int shell = static_cast<int>(std::lround(
            std::sqrt(static_cast<double>(kx) * kx + static_cast<double>(ky) * ky +
                      static_cast<double>(kz) * kz)));
        shells[shell].first += g.volume() * w * e;
        shells[shell].second += 1;
    });
    std::ostringstream out;
    out << "k_shell,energy,modes\n";
    for (const auto& [shell, val] : shells)
        out << shell << ',' << val.first << ',' << val.second << "\n";
    if (out_path.empty()) {
        std::cout << out.str();
    } else {
        std::ofstream f(out_path);
        f << out.str();
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"stochastic Ladyzhenskaya-Smagorinsky pseudo-spectral harness"};
    app.require_subcommand(1);

    CommonArgs run_args, ens_args, audit_args, sweep_args;
    std::string audit_dir, sweep_nus, spectrum_field, spectrum_out;

    CLI::App* run = app.add_subcommand("run", "one trajectory with records and summary");
    add_common(run, run_args);
    CLI::App* ens = app.add_subcommand("ensemble", "Monte Carlo ensemble with pooled report");
    add_common(ens, ens_args);
    CLI::App* audit = app.add_subcommand("audit", "re-check stored artifacts");
    add_common(audit, audit_args);
    audit->add_option("--dir", audit_dir, "ensemble artifact directory (hash/seed level)");
    CLI::App* sweep = app.add_subcommand("bound-sweep", "dissipation bound across viscosities");
    add_common(sweep, sweep_args);
    sweep->add_option("--nu", sweep_nus, "comma-separated viscosity list")->required();
    CLI::App* spectrum = app.add_subcommand("spectrum-dump", "|uhat|^2 shell histogram");
    spectrum->add_option("--field", spectrum_field, "field or checkpoint file")->required();
    spectrum->add_option("--out", spectrum_out, "output CSV (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(run_args);
        if (ens->parsed()) return cmd_ensemble(ens_args);
        if (audit->parsed()) return cmd_audit(audit_args, audit_dir);
        if (sweep->parsed()) return cmd_bound_sweep(sweep_args, sweep_nus);
        if (spectrum->parsed()) return cmd_spectrum_dump(spectrum_field, spectrum_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
