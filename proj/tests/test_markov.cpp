#include <catch2/catch_amalgamated.hpp>

#include "mcwf/markov.hpp"
#include "mcwf/models.hpp"
#include "mcwf/stepwise.hpp"
#include "support/oracles.hpp"
#include "support/stats.hpp"

using namespace mcwf;

TEST_CASE("gillespie sampling of the thermal chain", "[markov]") {
    SECTION("the vacuum is absorbing at zero temperature") {
        const ChainSpec spec{1.0, 0.0};
        CHECK(gillespie_trajectory(0, spec, 100.0, 1).empty());
    }
    SECTION("holding time at n=10 has mean 1/230") {
        const ChainSpec spec{1.0, 5.0};
        CHECK(spec.q(10) == Catch::Approx(230.0));
        double sum = 0;
        int count = 0;
        for (int i = 0; i < 4000; ++i) {
            const auto ev = gillespie_trajectory(10, spec, 1.0, 99, i);
            REQUIRE_FALSE(ev.empty());
            sum += ev.front().time;
            ++count;
        }
        CHECK(sum / count == Catch::Approx(1.0 / 230.0).epsilon(0.05));
    }
    SECTION("long-run occupation is geometric with mean nTh") {
        const ChainSpec spec{1.0, 5.0};
        const double T = 3000.0;
        const int runs = 40;
        std::vector<double> occupation(256, 0.0);
        for (int r = 0; r < runs; ++r) {
            const auto ev = gillespie_trajectory(10, spec, T, 4242, r);
            double t_prev = 0;
            int n = 10;
            for (const auto& e : ev) {
                occupation[n] += e.time - t_prev;
                t_prev = e.time;
                n = e.state;
                REQUIRE(n < 256);
            }
            occupation[n] += T - t_prev;
        }
        double mean = 0;
        for (std::size_t k = 0; k < occupation.size(); ++k) mean += k * occupation[k] / (T * runs);
        CHECK(mean == Catch::Approx(5.0).epsilon(0.01));
        // geometric shape: neighboring occupations fall off by nTh/(nTh+1)
        for (int k = 0; k < 8; ++k)
            CHECK(occupation[k + 1] / occupation[k] == Catch::Approx(5.0 / 6.0).epsilon(0.05));
    }
    SECTION("ensemble mean relaxes on the analytic curve") {
        const ChainSpec spec{1.0, 5.0};
        double sum = 0;
        const int runs = 20000;
        for (int i = 0; i < runs; ++i)
            sum += chain_state_at(gillespie_trajectory(10, spec, 1.0, 7, i), 10, 1.0);
        const double expect = 5.0 + 5.0 * std::exp(-2.0);
        CHECK(sum / runs == Catch::Approx(expect).margin(3.0 * std::sqrt(30.0 / runs)));
    }
}

TEST_CASE("discretized chain steps", "[markov]") {
    const ChainSpec spec{1.0, 5.0};
    Philox rng(13, 0);

    SECTION("dp-controlled stepsize reproduces dp/q") {
        const auto s = discrete_chain_step(10, 1e-3, 0.1, spec, rng);
        CHECK(s.dt_next == Catch::Approx(0.1 / 230.0).epsilon(1e-14));
    }
    SECTION("zero dt never moves") {
        for (int i = 0; i < 50; ++i) CHECK(discrete_chain_step(7, 0.0, {}, spec, rng).jump == -1);
    }
    SECTION("transition matrix validity limit") {
        CHECK_THROWS_AS(discrete_chain_step(10, 0.01, {}, spec, rng), ContractError);
    }
    SECTION("one-step mean matches n + (lambda - mu) dt") {
        const double dt = 1e-3;
        double sum = 0;
        const int runs = 400000;
        for (int i = 0; i < runs; ++i) sum += discrete_chain_step(10, dt, {}, spec, rng).n_next;
        // lambda - mu = 110 - 120 at n = 10
        CHECK(sum / runs == Catch::Approx(10.0 - 10.0 * dt).margin(3.0 * std::sqrt(0.23 / runs)));
    }
}

TEST_CASE("closed-form two-jump probabilities against quadrature", "[markov][oracle]") {
    const ChainSpec spec{1.0, 5.0};
    for (double dt : {1e-3, 1e-2}) {
        for (int n : {0, 1, 10}) {
            const auto closed = le2_jump_probabilities(n, dt, spec);
            const auto brute = testoracle::brute_le2(n, dt, spec);
            CHECK(closed.stay == Catch::Approx(brute.stay).epsilon(1e-9));
            CHECK(closed.up1 == Catch::Approx(brute.up1).epsilon(1e-9));
            CHECK(closed.up2 == Catch::Approx(brute.up2).epsilon(1e-8));
            if (n >= 1) CHECK(closed.down1 == Catch::Approx(brute.down1).epsilon(1e-9));
            if (n >= 2) CHECK(closed.down2 == Catch::Approx(brute.down2).epsilon(1e-8));
        }
    }

    SECTION("boundary and limit behavior") {
        const auto p0 = le2_jump_probabilities(0, 1e-3, spec);
        CHECK(p0.down1 == 0.0);
        CHECK(p0.down2 == 0.0);
        const auto tiny = le2_jump_probabilities(10, 1e-12, spec);
        CHECK(tiny.stay == Catch::Approx(1.0).margin(1e-9));
        CHECK(tiny.sum() <= 1.0 + 1e-12);
    }

    SECTION("series expansion of the stay probability") {
        const double dt = 1e-4;
        const double q = 230.0, l10 = 110.0, m11 = 132.0, l9 = 100.0, m10 = 120.0;
        const auto p = le2_jump_probabilities(10, dt, spec);
        const double series =
            1.0 - q * dt + 0.5 * q * q * dt * dt + 0.5 * (l10 * m11 + l9 * m10) * dt * dt;
        CHECK(std::abs(p.stay - series) < q * q * q * dt * dt * dt);
    }

    SECTION("probabilities stay inside [0,1] and sum below one") {
        Philox rng(71, 0);
        for (int rep = 0; rep < 200; ++rep) {
            const int n = int(rng.uniform01() * 30);
            const double dt = std::pow(10.0, -4.0 * rng.uniform01());
            const auto p = le2_jump_probabilities(n, dt, spec);
            for (double v : {p.down2, p.down1, p.stay, p.up1, p.up2}) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
            CHECK(p.sum() <= 1.0 + 1e-12);
        }
    }

    SECTION("the missing mass is bounded by a three-jump probability") {
        // 1 - P(<= 2 jumps) = P(>= 3 jumps), which only grows if every
        // holding rate is replaced by the largest one along the paths
        for (int n : {1, 5, 10, 20}) {
            for (double dt : {1e-4, 1e-3, 5e-3}) {
                const auto p = le2_jump_probabilities(n, dt, spec);
                const double qmax = spec.q(n + 2);
                const double bound =
                    three_jump_prob(qmax, qmax * (1 + 1e-6), qmax * (1 + 2e-6), dt);
                CHECK(1.0 - p.sum() <= bound * (1.0 + 1e-9) + 1e-15);
            }
        }
    }
}

TEST_CASE("one-step mean gap", "[markov][oracle]") {
    const ChainSpec spec{1.0, 5.0};

    SECTION("matches the quadrature oracle") {
        for (double dt : {1e-5, 1e-4, 1e-3})
            CHECK(one_step_mean_gap(10, dt, spec) ==
                  Catch::Approx(testoracle::brute_mean_gap(10, dt, spec)).epsilon(1e-6));
    }
    SECTION("leading coefficient is 2 kappa^2 (n - nTh)") {
        // independent route: the exact process mean is nTh + (n - nTh) e^(-2 kappa dt)
        const double dt = 1e-6;
        const double full = 5.0 + 5.0 * std::exp(-2.0 * dt) - 10.0 - (110.0 - 120.0) * dt;
        const double gap = one_step_mean_gap(10, dt, spec);
        CHECK(gap / (dt * dt) == Catch::Approx(10.0).epsilon(0.05));
        CHECK(std::abs(gap - full) < 0.1 * std::abs(gap));
    }
    SECTION("quadratic scaling in dt") {
        const double dt = 1e-6;
        const double ratio = one_step_mean_gap(10, 2 * dt, spec) / one_step_mean_gap(10, dt, spec);
        CHECK(ratio > 3.5);
        CHECK(ratio < 4.5);
    }
    SECTION("frozen chain has no gap") {
        const ChainSpec frozen{1.0, 0.0};
        CHECK(one_step_mean_gap(0, 1e-3, frozen) == 0.0);
    }
}

TEST_CASE("three-jump probability", "[markov][oracle]") {
    SECTION("small-dt limit g1 g2 g3 dt^3 / 6") {
        const double dt = 1e-4;
        const double p = three_jump_prob(1.0, 2.0, 3.0, dt);
        CHECK(p / (dt * dt * dt) == Catch::Approx(1.0).epsilon(1e-3));
    }
    SECTION("closed form agrees with the phase-type matrix exponential") {
        Philox rng(311, 0);
        for (int rep = 0; rep < 40; ++rep) {
            const double g1 = 0.5 + 300.0 * rng.uniform01();
            const double g2 = 0.5 + 300.0 * rng.uniform01();
            const double g3 = 0.5 + 300.0 * rng.uniform01();
            const double dt = 0.01 * rng.uniform01();
            Eigen::Matrix3d gen;
            gen << -g1, g1, 0, 0, -g2, g2, 0, 0, -g3;
            const double ref = 1.0 - ((gen * dt).exp().row(0).sum());
            CHECK(three_jump_prob(g1, g2, g3, dt) == Catch::Approx(ref).margin(1e-12));
        }
    }
    SECTION("near-degenerate rates fall back gracefully") {
        const double p = three_jump_prob(2.0, 2.0 + 1e-12, 2.0 - 1e-12, 0.1);
        const double erlang = 1.0 - std::exp(-0.2) * (1.0 + 0.2 + 0.02); // Erlang(3, 2) CDF
        CHECK(p == Catch::Approx(erlang).margin(1e-9));
    }
    SECTION("monte carlo confirmation at chain rates") {
        const double g1 = 230, g2 = 252, g3 = 274, dt = 1e-3;
        Philox rng(999, 0);
        const int samples = 2000000;
        int hits = 0;
        for (int i = 0; i < samples; ++i)
            hits += (rng.exponential(g1) + rng.exponential(g2) + rng.exponential(g3) < dt) ? 1 : 0;
        const double mc = double(hits) / samples;
        const double se = std::sqrt(mc * (1.0 - mc) / samples);
        CHECK(three_jump_prob(g1, g2, g3, dt) == Catch::Approx(mc).margin(4.0 * se));
    }
    SECTION("monotone in dt") {
        Philox rng(5, 0);
        for (int rep = 0; rep < 50; ++rep) {
            const double g1 = 1 + 100 * rng.uniform01(), g2 = 1 + 100 * rng.uniform01(),
                         g3 = 1 + 100 * rng.uniform01();
            const double d1 = 0.05 * rng.uniform01();
            const double d2 = d1 * (1.0 + rng.uniform01());
            CHECK(three_jump_prob(g1, g2, g3, d2) >= three_jump_prob(g1, g2, g3, d1));
        }
    }
}

TEST_CASE("dp-controlled walk mirrors the wave-function engine exactly", "[markov][engine]") {
    // with eta = 0 and a Fock start the engine is a random walk in the number
    // basis; under matched seeds the two implementations must produce the
    // same path statistics step by step
    ModeParams p;
    p.cutoff = 64;
    p.nTh = 5.0;
    const auto sys = make_mode_system(p, Picture::nonunitary_interaction);
    const ChainSpec spec{1.0, 5.0};
    DpControls ctl;
    ctl.dp_limit = 0.1;
    ctl.dp_overshoot = 1e6;
    ctl.Dt = 0.05;
    ctl.T = 1.0;
    const StateVector psi0 = fock_state(10, 64);

    for (std::uint64_t stream = 0; stream < 100; ++stream) {
        const auto rec = run_trajectory(psi0, sys, ctl, StepControl{}, 77, stream);
        const auto walk = run_chain_dp_controlled(10, spec, 0.1, 0.05, 1.0, 77, stream);
        REQUIRE_FALSE(rec.aborted);
        CHECK(rec.final_label == walk.final_state);
        CHECK(rec.stats.steps == walk.steps);
        CHECK(rec.stats.full_dt_steps == walk.full_dt_steps);
        CHECK(rec.stats.jumps[0] == walk.jumps_down);
        CHECK(rec.stats.jumps[1] == walk.jumps_up);
    }
}

TEST_CASE("engine and discretized chain agree in distribution", "[markov][engine]") {
    ModeParams p;
    p.cutoff = 64;
    p.nTh = 5.0;
    const auto sys = make_mode_system(p, Picture::nonunitary_interaction);
    const ChainSpec spec{1.0, 5.0};
    DpControls ctl;
    ctl.dp_limit = 0.1;
    ctl.dp_overshoot = 1e6;
    ctl.Dt = 0.05;
    ctl.T = 1.0;
    const StateVector psi0 = fock_state(10, 64);

    const int runs = 4000;
    std::vector<int> engine_states, chain_states;
    for (int i = 0; i < runs; ++i) {
        const auto rec = run_trajectory(psi0, sys, ctl, StepControl{}, 100, i);
        REQUIRE_FALSE(rec.aborted);
        engine_states.push_back(rec.final_label);
        chain_states.push_back(
            run_chain_dp_controlled(10, spec, 0.1, 0.05, 1.0, 200, i).final_state);
    }
    CHECK(teststats::two_sample_chi2_pvalue(engine_states, chain_states) > 0.01);
}
