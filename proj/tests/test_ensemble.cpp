#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "lssm/ensemble.hpp"

using namespace lssm;

namespace {

double rel_diff(double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

RunConfig smoke_config(int m, std::uint64_t seed) {
    Json j = Json::parse(R"({
      "grid": {"n": 8, "ell": 6.283185307179586},
      "flow": {"nu": 0.2, "nu_bar": 0.05, "r": 3.0},
      "forcing": {"type": "modes", "entries": [{"kappa": [0,1,0], "amp": [0.2,0,0], "phase": 0.0}]},
      "noise": {"mode": "additive", "sigma0": 0.05, "alpha": 1.0, "kmax": 2},
      "time": {"dt_policy": "fixed", "dt": 0.02, "T": 1.0, "burn_in": 0.2},
      "seed": 0
    })");
    RunConfig c = parse_config_json(j);
    c.ensemble_m = m;
    c.seed = seed;
    return c;
}

} // namespace

TEST_CASE("M = 1 pooled statistics equal the single trajectory", "[ensemble]") {
    RunConfig cfg = smoke_config(1, 42);
    EnsembleReport rep = run_ensemble(cfg);
    REQUIRE(rep.survivors == 1);
    CHECK(rel_diff(rep.pooled.eps0, rep.per_trajectory[0].eps0) <= 1e-15);
    CHECK(rel_diff(rep.pooled.U, rep.per_trajectory[0].U) <= 1e-15);
    CHECK(rep.se_eps0 == 0.0);
}

TEST_CASE("noise off makes all trajectories identical", "[ensemble]") {
    RunConfig cfg = smoke_config(4, 7);
    cfg.noise_enabled = false;
    cfg.sigma0 = 0.0;
    cfg.kmax = 0;
    EnsembleReport rep = run_ensemble(cfg);
    REQUIRE(rep.survivors == 4);
    CHECK(rep.se_eps0 == 0.0);
    CHECK(rep.se_U == 0.0);
    for (int k = 1; k < 4; ++k)
        CHECK(rep.per_trajectory[k].eps0 == rep.per_trajectory[0].eps0);
}

TEST_CASE("identical (config, master_seed) reproduce the report bitwise", "[ensemble]") {
    RunConfig cfg = smoke_config(6, 99);
    EnsembleOptions opts;
    opts.threads = 1;
    const std::string a = to_json(run_ensemble(cfg, opts)).dump();
    const std::string b = to_json(run_ensemble(cfg, opts)).dump();
    REQUIRE(a == b);

    SECTION("independent of the parallel width") {
        EnsembleOptions wide;
        wide.threads = 3;
        const std::string c = to_json(run_ensemble(cfg, wide)).dump();
        REQUIRE(a == c);
    }
}

TEST_CASE("merging partials equals the full run", "[ensemble]") {
    RunConfig cfg = smoke_config(8, 1234);
    EnsemblePartial full = run_ensemble_partial(cfg, 0, 8);
    EnsemblePartial lo = run_ensemble_partial(cfg, 0, 4);
    EnsemblePartial hi = run_ensemble_partial(cfg, 4, 4);
    EnsemblePartial merged = merge(lo, hi);
    REQUIRE(merged.outcomes.size() == 8);
    const std::string a = to_json(finalize_ensemble(full, cfg)).dump();
    const std::string b = to_json(finalize_ensemble(merged, cfg)).dump();
    REQUIRE(a == b);
    CHECK(to_json(finalize_ensemble(merge(hi, lo), cfg)).dump() == a);

    SECTION("merge with an empty partial is the identity") {
        EnsemblePartial empty;
        CHECK(to_json(finalize_ensemble(merge(full, empty), cfg)).dump() == a);
    }

    SECTION("overlapping index sets are rejected") {
        CHECK_THROWS_AS(merge(lo, lo), ParameterError);
    }

    SECTION("different physics is rejected") {
        RunConfig other = cfg;
        other.nu = 0.5;
        EnsemblePartial foreign = run_ensemble_partial(other, 4, 1);
        CHECK_THROWS_AS(merge(lo, foreign), ParameterError);
    }
}

TEST_CASE("survivor policy", "[ensemble]") {
    RunConfig cfg = smoke_config(4, 5);
    EnsemblePartial partial = run_ensemble_partial(cfg, 0, 4);

    SECTION("a minority of aborts keeps the pooled report") {
        partial.outcomes[1].aborted = true;
        EnsembleReport rep = finalize_ensemble(partial, cfg);
        CHECK_FALSE(rep.failed);
        CHECK(rep.survivors == 3);
        CHECK(rep.aborted_indices == std::vector<int>{1});
    }

    SECTION("losing more than half fails the ensemble") {
        partial.outcomes[0].aborted = true;
        partial.outcomes[1].aborted = true;
        partial.outcomes[2].aborted = true;
        EnsembleReport rep = finalize_ensemble(partial, cfg);
        CHECK(rep.failed);
        CHECK(rep.survivors == 1);
    }
}

TEST_CASE("artifact layout is content-addressed", "[ensemble]") {
    const auto root = std::filesystem::temp_directory_path() / "lssm_test_artifacts";
    std::filesystem::remove_all(root);
    RunConfig cfg = smoke_config(2, 77);
    cfg.snapshot_stride = 20;
    EnsembleOptions opts;
    opts.artifact_dir = root.string();
    EnsembleReport rep = run_ensemble(cfg, opts);
    REQUIRE(rep.survivors == 2);
    const auto base = root / rep.physics_hash / "77";
    for (int k = 0; k < 2; ++k) {
        const auto dir = base / ("traj_" + std::to_string(k));
        CHECK(std::filesystem::exists(dir / "records.csv"));
        CHECK(std::filesystem::exists(dir / "summary.json"));
        CHECK(std::filesystem::exists(dir / "final.ckpt"));
        CHECK(std::filesystem::exists(dir / "snapshots" / "step_00000020.fld"));
        const auto rows = read_records_csv((dir / "records.csv").string());
        CHECK(rows.size() == 51); // 50 steps + terminal marker
    }
}

TEST_CASE("ensemble statistics behave like Monte Carlo estimators", "[ensemble][statistical]") {
    // stderr ~ M^{-1/2}: nested subsets of one 256-trajectory smoke ensemble
    RunConfig cfg = smoke_config(256, 2718);
    EnsemblePartial full = run_ensemble_partial(cfg, 0, 256);

    auto slice_se = [&](int m) {
        EnsemblePartial part;
        part.hash = full.hash;
        part.master_seed = full.master_seed;
        part.outcomes.assign(full.outcomes.begin(), full.outcomes.begin() + m);
        EnsembleReport rep = finalize_ensemble(part, cfg);
        return rep.se_eps0;
    };
    const double se16 = slice_se(16);
    const double se64 = slice_se(64);
    const double se256 = slice_se(256);
    CHECK(se16 / se64 >= 2.0 * 0.8);
    CHECK(se16 / se64 <= 2.0 * 1.2);
    CHECK(se64 / se256 >= 2.0 * 0.8);
    CHECK(se64 / se256 <= 2.0 * 1.2);

    SECTION("additive G2 matches the trace formula exactly") {
        EnsembleReport rep = finalize_ensemble(full, cfg);
        const Grid g = make_grid(cfg);
        const NoiseSpec ns = make_noise(cfg, g);
        CHECK(rel_diff(rep.pooled.G2, ns.sum_sigma_sq() / g.volume()) <= 1e-12);
        CHECK(rep.has_martingale);
        CHECK(rep.martingale.pass_mean);
        CHECK(rep.martingale.pass_var);
        CHECK(rep.budget_pass == rep.budget_total);
        CHECK(rep.has_envelope);
        CHECK(rep.envelope.pass);
    }
}
