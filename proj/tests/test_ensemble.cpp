#include <catch2/catch_amalgamated.hpp>

#include "mcwf/ensemble.hpp"
#include "mcwf/master.hpp"
#include "mcwf/models.hpp"

using namespace mcwf;

TEST_CASE("deviation metric", "[ensemble]") {
    TimeSeries f, g;
    for (int i = 0; i <= 10; ++i) {
        f.t.push_back(0.1 * i);
        g.t.push_back(0.1 * i);
        f.v.push_back(1.0);
        g.v.push_back(0.0);
    }
    CHECK(deviation(f, f) == 0.0);
    CHECK(deviation(f, g) == Catch::Approx(2.0));
    CHECK(deviation(g, f) == Catch::Approx(2.0)); // symmetric

    TimeSeries h = f, h3 = f;
    for (auto& v : h3.v) v *= 3.0;
    CHECK(deviation(h3, h) == Catch::Approx(2.0 * (3.0 - 1.0) / (3.0 + 1.0)));

    TimeSeries z = f;
    for (auto& v : z.v) v = 0.0;
    CHECK_THROWS_AS(deviation(z, z), NumericError);

    TimeSeries shifted = f;
    shifted.t[3] += 0.01;
    CHECK_THROWS_AS(deviation(shifted, f), ContractError);
}

TEST_CASE("critical dp formula", "[ensemble]") {
    CHECK(critical_dp(0, 1.0, 5.0, 0.05) == Catch::Approx(0.5));
    CHECK(critical_dp(0, 1.0, 5.0, 0.015625) == Catch::Approx(0.15625));
    CHECK(critical_dp(1, 1.0, 5.0, 0.015625) == Catch::Approx(0.5));
    CHECK(critical_dp(0, 1.0, 4.0, 0.05) == Catch::Approx(0.4));
    CHECK(critical_dp(0, 1.0, 6.0, 0.05) == Catch::Approx(0.6));
}

TEST_CASE("time averaging rules", "[ensemble]") {
    const std::vector<double> v = {1.0, 3.0};
    const std::vector<double> dt = {1.0, 3.0};
    CHECK(time_average(v, dt, SamplingMethod::equal_steps) == Catch::Approx(2.5));
    CHECK(time_average(v, {}, SamplingMethod::equal_time) == Catch::Approx(2.0));

    const std::vector<double> c = {4.0, 4.0, 4.0};
    const std::vector<double> cdt = {0.1, 0.7, 0.2};
    CHECK(time_average(c, cdt, SamplingMethod::equal_steps) == Catch::Approx(4.0));
    CHECK(time_average(c, {}, SamplingMethod::equal_time) == Catch::Approx(4.0));

    CHECK_THROWS_AS(time_average(v, {}, SamplingMethod::equal_steps), ContractError);
    std::vector<std::pair<double, std::optional<double>>> pairs = {{1.0, 1.0}, {3.0, std::nullopt}};
    CHECK_THROWS_AS(time_average(pairs, SamplingMethod::equal_steps), ContractError);
    CHECK(time_average(pairs, SamplingMethod::equal_time) == Catch::Approx(2.0));
}

TEST_CASE("pairwise reduction is order-insensitive", "[ensemble]") {
    Philox rng(2, 0);
    std::vector<std::vector<double>> items;
    for (int i = 0; i < 1337; ++i) {
        std::vector<double> v(7);
        for (auto& x : v) x = std::exp(20.0 * (rng.uniform01() - 0.5));
        items.push_back(v);
    }
    detail::PairwiseAccumulator fwd, rev;
    for (const auto& v : items) fwd.add(v);
    for (auto it = items.rbegin(); it != items.rend(); ++it) rev.add(*it);
    const auto a = fwd.total(7), b = rev.total(7);
    for (int k = 0; k < 7; ++k)
        CHECK(std::abs(a[k] - b[k]) <= 1e-12 * std::abs(a[k]));
}

TEST_CASE("ensembles reduce deterministically across thread counts", "[ensemble]") {
    ModeParams p;
    p.cutoff = 48;
    p.nTh = 5.0;
    const auto sys = make_mode_system(p, Picture::nonunitary_interaction);
    const StateVector psi0 = fock_state(10, 48);
    DpControls ctl;
    ctl.dp_limit = 0.1;
    ctl.dp_overshoot = 1e6;
    ctl.Dt = 0.05;
    ctl.T = 0.5;

    EnsembleOptions o1;
    o1.n_traj = 64;
    o1.base_seed = 5;
    o1.jobs = 1;
    EnsembleOptions o4 = o1;
    o4.jobs = 4;
    const auto r1 = run_ensemble(EngineKind::stepwise, psi0, sys, ctl, StepControl{}, o1);
    const auto r4 = run_ensemble(EngineKind::stepwise, psi0, sys, ctl, StepControl{}, o4);
    REQUIRE(r1.mean.rows.size() == r4.mean.rows.size());
    for (std::size_t g = 0; g < r1.mean.rows.size(); ++g)
        for (int k = 0; k < 4; ++k) CHECK(r1.mean.rows[g][k] == r4.mean.rows[g][k]);
    CHECK(r1.stats.total_steps == r4.stats.total_steps);
    CHECK(r1.stats.mean_dt_pooled == r4.stats.mean_dt_pooled);

    // a single-trajectory ensemble is exactly that trajectory
    EnsembleOptions osingle;
    osingle.n_traj = 1;
    osingle.base_seed = 5;
    const auto rs = run_ensemble(EngineKind::stepwise, psi0, sys, ctl, StepControl{}, osingle);
    const auto tr = run_trajectory(psi0, sys, ctl, StepControl{}, 5, 0);
    for (std::size_t g = 0; g < rs.mean.rows.size(); ++g)
        for (int k = 0; k < 4; ++k) CHECK(rs.mean.rows[g][k] == tr.samples.rows[g][k]);
}

TEST_CASE("ensemble mean converges toward the master solution", "[ensemble]") {
    ModeParams p;
    p.cutoff = 64;
    p.nTh = 5.0;
    const auto sys = make_mode_system(p, Picture::nonunitary_interaction);
    const StateVector psi0 = fock_state(10, 64);
    DpControls ctl;
    ctl.dp_limit = 0.1;
    ctl.dp_overshoot = 1e6;
    ctl.Dt = 0.05;
    ctl.T = 1.0;
    const auto master = evolve_master(DensityMatrix(psi0 * psi0.adjoint()),
                                      make_mode_system(p, Picture::schroedinger), ctl.Dt, ctl.T,
                                      StepControl{});
    TimeSeries ref;
    ref.t = master.t;
    for (const auto& r : master.rows) ref.v.push_back(r[2]);

    const auto dev_for = [&](int n) {
        EnsembleOptions opt;
        opt.n_traj = n;
        opt.base_seed = 11;
        const auto res = run_ensemble(EngineKind::stepwise, psi0, sys, ctl, StepControl{}, opt);
        return deviation(res.primary_series(), ref);
    };
    const double d16 = dev_for(16), d1024 = dev_for(1024);
    CHECK(d1024 < d16);
    CHECK(d1024 < 0.1);
}

TEST_CASE("stepsize anticorrelates with the photon number", "[ensemble]") {
    // larger occupation means larger rates and a tighter dp-cap
    ModeParams p;
    p.cutoff = 72;
    p.nTh = 5.0;
    const auto sys = make_mode_system(p, Picture::nonunitary_interaction);
    const StateVector psi0 = fock_state(10, 72);
    for (double dp : {0.2, 0.5, 0.9}) {
        DpControls ctl;
        ctl.dp_limit = dp;
        ctl.dp_overshoot = 1e6;
        ctl.Dt = 0.05;
        ctl.T = 2.0;
        EnsembleOptions opt;
        opt.n_traj = 200;
        opt.base_seed = 60 + std::uint64_t(dp * 10);
        const auto res = run_ensemble(EngineKind::stepwise, psi0, sys, ctl, StepControl{}, opt);
        CHECK(res.stats.corr_dt_primary < 0.0);
        CHECK(res.stats.corr_dt_primary >= -1.0);
    }
}

TEST_CASE("ensemble failure policy counts aborted trajectories", "[ensemble]") {
    ModeParams p;
    p.cutoff = 6;
    p.nTh = 5.0;
    const auto sys = make_mode_system(p, Picture::nonunitary_interaction);
    const StateVector psi0 = fock_state(5, 6);
    DpControls ctl;
    ctl.dp_limit = 0.1;
    ctl.dp_overshoot = 1e6;
    ctl.Dt = 0.05;
    ctl.T = 5.0;
    EnsembleOptions opt;
    opt.n_traj = 8;
    opt.base_seed = 3;
    CHECK_THROWS_AS(run_ensemble(EngineKind::stepwise, psi0, sys, ctl, StepControl{}, opt),
                    NumericError);
}
