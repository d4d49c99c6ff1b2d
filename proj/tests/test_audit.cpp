#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lssm/audit.hpp"

using namespace lssm;

namespace {

ForcingSpec sine_forcing(std::array<int, 3> kappa, std::array<double, 3> amp) {
    ForcingSpec fs;
    fs.type = ForcingSpec::Type::modes;
    fs.modes.push_back({kappa, amp, 0.0});
    return fs;
}

NoiseSpec no_noise(const Grid& g) {
    return NoiseSpec::power_law(g, NoiseMode::additive, 0.0, 0.0, 0);
}

TrajectoryReport decay_run(const Grid& g, double nu, double dt, double horizon) {
    FlowParams p;
    p.nu = nu;
    p.nu_bar = 0.0;
    p.r = 2.0;
    StepPolicy pol;
    pol.fixed_dt = dt;
    SpectralVelocity u0 = forcing_field(sine_forcing({0, 1, 0}, {1.0, 0.0, 0.0}), g);
    TrajectorySetup setup(g, p, no_noise(g), pol, horizon, 0.0, u0);
    return run_trajectory(setup, RngStream(1, 0));
}

} // namespace

TEST_CASE("budget residual on quiescent and steady windows", "[audit]") {
    Grid g(16, 2.0 * M_PI);
    FlowParams p;
    p.nu = 0.2;
    p.nu_bar = 0.0;
    p.r = 2.0;

    SECTION("zero trajectory: all terms vanish") {
        StepPolicy pol;
        pol.fixed_dt = 0.01;
        TrajectorySetup setup(g, p, no_noise(g), pol, 0.5, 0.0, SpectralVelocity(g));
        TrajectoryReport rep = run_trajectory(setup, RngStream(2, 0));
        BudgetWindow bw = check_budget(rep.records, 0.0, 0.5, p);
        CHECK(bw.lhs_dke == 0.0);
        CHECK(bw.residual == 0.0);
        CHECK(bw.pass);
    }

    SECTION("steady Stokes window balances dissipation against work") {
        const double f0 = 0.1, nu = 0.25;
        FlowParams ps;
        ps.nu = nu;
        ps.nu_bar = 0.0;
        ps.r = 2.0;
        ps.forcing = sine_forcing({0, 1, 0}, {f0, 0.0, 0.0});
        StepPolicy pol;
        pol.fixed_dt = 0.01;
        SpectralVelocity u0 =
            forcing_field(sine_forcing({0, 1, 0}, {f0 / nu, 0.0, 0.0}), g);
        TrajectorySetup setup(g, ps, no_noise(g), pol, 1.0, 0.0, u0);
        TrajectoryReport rep = run_trajectory(setup, RngStream(3, 0));
        BudgetWindow bw = check_budget(rep.records, 0.0, 1.0, ps);
        CHECK(std::abs(bw.lhs_dke) <= 1e-10 * bw.lhs_visc_l2);
        CHECK(std::abs(bw.lhs_visc_l2 - bw.rhs_work) <= 1e-10 * bw.lhs_visc_l2);
        CHECK(bw.pass);
    }

    SECTION("gap in the record stream is rejected") {
        TrajectoryReport rep = decay_run(g, 0.2, 0.01, 0.3);
        std::vector<StepRecord> gappy = rep.records;
        gappy.erase(gappy.begin() + 10);
        CHECK_THROWS_AS(check_budget(gappy, 0.0, 0.3, p), WindowError);
        CHECK_THROWS_AS(check_budget(rep.records, 5.0, 6.0, p), WindowError);
    }
}

TEST_CASE("budget residual shrinks first order under dt halving", "[audit]") {
    Grid g(16, 2.0 * M_PI);
    FlowParams p;
    p.nu = 0.2;
    p.nu_bar = 0.0;
    p.r = 2.0;
    double residuals[3];
    int i = 0;
    for (const double dt : {0.02, 0.01, 0.005}) {
        TrajectoryReport rep = decay_run(g, p.nu, dt, 2.0);
        BudgetWindow bw = check_budget(rep.records, 0.0, 2.0, p);
        CHECK(bw.pass);
        residuals[i++] = std::abs(bw.residual);
    }
    CHECK(residuals[1] <= residuals[0] / 1.6);
    CHECK(residuals[2] <= residuals[1] / 1.6);
}

TEST_CASE("martingale mean-zero check", "[audit]") {
    Grid g(16, 2.0 * M_PI);

    SECTION("needs at least 8 samples") {
        CHECK_THROWS_AS(check_martingale_zero(std::vector<MartingaleSample>(4)),
                        SampleError);
    }

    SECTION("noise off: sums are identically zero") {
        std::vector<MartingaleSample> samples(8);
        MartingaleReport rep = check_martingale_zero(samples);
        CHECK(rep.mean == 0.0);
        CHECK(rep.var_predicted == 0.0);
        CHECK(rep.pass());
    }

    SECTION("increment against the zero state carries no work") {
        NoiseSpec ns = NoiseSpec::power_law(g, NoiseMode::additive, 0.1, 1.0, 2);
        RngStream rng(5, 0);
        SpectralVelocity zero(g);
        SpectralVelocity xi = sample_increment(ns, zero, 0.0, 0.01, rng);
        CHECK(inner_product(xi, zero) == 0.0);
    }

    SECTION("small additive ensemble passes both bands") {
        FlowParams p;
        p.nu = 0.2;
        p.nu_bar = 0.0;
        p.r = 2.0;
        p.forcing = sine_forcing({0, 1, 0}, {0.1, 0.0, 0.0});
        NoiseSpec ns = NoiseSpec::power_law(g, NoiseMode::additive, 0.05, 1.0, 1);
        StepPolicy pol;
        pol.fixed_dt = 0.01;
        TrajectorySetup setup(g, p, ns, pol, 1.0, 0.0, SpectralVelocity(g));
        std::vector<MartingaleSample> samples;
        for (int k = 0; k < 16; ++k) {
            TrajectoryReport rep = run_trajectory(setup, RngStream(606, k));
            REQUIRE_FALSE(rep.aborted);
            samples.push_back(
                martingale_sample(accumulate_window(rep.records, rep.terminal, 0.0)));
        }
        MartingaleReport rep = check_martingale_zero(samples);
        CHECK(rep.pass_mean);
        CHECK(rep.pass_var);
    }
}

TEST_CASE("Groenwall envelope", "[audit]") {
    Grid g(16, 2.0 * M_PI); // lambda1 = 1

    SECTION("noise-off single-mode decay sits below exp(-nu lambda1 t)") {
        const double nu = 0.3;
        TrajectoryReport rep = decay_run(g, nu, 0.01, 2.0);
        std::vector<double> times, mean_ke, err;
        for (const auto& r : rep.records) {
            times.push_back(r.t);
            mean_ke.push_back(r.ke_pre);
            err.push_back(0.0);
        }
        FlowParams p;
        p.nu = nu;
        p.nu_bar = 0.0;
        p.r = 2.0;
        EnvelopeCheck ec = check_envelope(times, mean_ke, err, p, no_noise(g), g,
                                          mean_ke.front(), 0.0);
        CHECK(ec.pass);
        CHECK(ec.beta == Catch::Approx(nu));
        CHECK(std::abs(ec.margin.front()) <= 1e-12 * mean_ke.front());
        // true decay rate 2 nu beats the envelope rate nu lambda1
        for (std::size_t i = 0; i < times.size(); ++i) {
            const double exact = mean_ke.front() * std::exp(-2.0 * nu * times[i]);
            CHECK(std::abs(mean_ke[i] - exact) <= 1e-10 * mean_ke.front());
            CHECK(ec.margin[i] >= -1e-12);
        }
    }

    SECTION("multiplicative mode refuses rho_infty >= nu lambda1") {
        NoiseSpec ns = NoiseSpec::power_law(g, NoiseMode::multiplicative, 1.0, 0.0, 1);
        FlowParams p;
        p.nu = 0.001;
        p.nu_bar = 0.0;
        p.r = 2.0;
        std::vector<double> t{0.0}, ke{1.0}, se{0.0};
        CHECK_THROWS_AS(check_envelope(t, ke, se, p, ns, g, 1.0, 0.0), AssumptionError);
    }

    SECTION("small additive ensemble stays below the stationary level") {
        const double nu = 0.5;
        FlowParams p;
        p.nu = nu;
        p.nu_bar = 0.0;
        p.r = 2.0;
        NoiseSpec ns = NoiseSpec::power_law(g, NoiseMode::additive, 0.1, 1.0, 1);
        StepPolicy pol;
        pol.fixed_dt = 0.02;
        TrajectorySetup setup(g, p, ns, pol, 8.0, 0.0, SpectralVelocity(g));
        std::vector<std::vector<StepRecord>> all;
        for (int k = 0; k < 8; ++k) {
            TrajectoryReport rep = run_trajectory(setup, RngStream(909, k));
            REQUIRE_FALSE(rep.aborted);
            all.push_back(std::move(rep.records));
        }
        std::vector<double> times, mean_ke, err;
        ensemble_ke_curve(all, 5, times, mean_ke, err);
        EnvelopeCheck ec =
            check_envelope(times, mean_ke, err, p, ns, g, 0.0, 0.0);
        CHECK(ec.pass);
        // stationary level rho/(nu lambda1) bounds the tail of the curve
        const double cap = rho_infty(ns) / (nu * g.lambda1());
        CHECK(mean_ke.back() <= cap + 3.0 * err.back());
    }
}

TEST_CASE("pointwise functional inequalities", "[audit]") {
    Grid g(16, 2.0 * M_PI);
    FlowParams p;
    p.nu = 0.1;
    p.nu_bar = 0.05;
    p.r = 3.0;
    SpectralVelocity fhat = forcing_field(sine_forcing({0, 1, 0}, {0.2, 0.0, 0.0}), g);

    SECTION("zero snapshot: all margins zero, no violations") {
        PointwiseReport rep =
            check_pointwise_inequalities({SpectralVelocity(g)}, fhat, p);
        CHECK(rep.pass);
        CHECK(rep.rows.front().poincare_margin == 0.0);
    }

    SECTION("f-aligned lowest mode saturates Poincare") {
        SpectralVelocity u = forcing_field(sine_forcing({0, 1, 0}, {0.8, 0.0, 0.0}), g);
        PointwiseReport rep = check_pointwise_inequalities({u}, fhat, p);
        CHECK(rep.pass);
        CHECK(std::abs(rep.rows.front().poincare_margin) <= 1e-10 * norm_l2_sq(u));
        // aligned single mode also saturates the work bound |(f,u)| = ||f|| ||u||
        CHECK(std::abs(rep.rows.front().work_margin) <=
              1e-10 * std::sqrt(norm_l2_sq(fhat) * norm_l2_sq(u)));
    }

    SECTION("random snapshot campaign has zero violations") {
        RngStream rng(1234, 0);
        std::vector<SpectralVelocity> snaps;
        for (int i = 0; i < 25; ++i)
            snaps.push_back(random_solenoidal(g, 5, 0.2 + 0.7 * i, rng));
        PointwiseReport rep = check_pointwise_inequalities(snaps, fhat, p);
        CHECK(rep.pass);
        CHECK(rep.violations.empty());
    }
}
