#include <catch2/catch_amalgamated.hpp>

#include <unsupported/Eigen/MatrixFunctions>

#include "mcwf/master.hpp"
#include "mcwf/models.hpp"
#include "mcwf/rng.hpp"

using namespace mcwf;

TEST_CASE("lindblad right-hand side basics", "[master]") {
    ModeParams p;
    p.cutoff = 10;
    p.nTh = 0.0;
    const auto sys = make_mode_system(p, Picture::schroedinger);
    DensityMatrix drho(10, 10);

    SECTION("vacuum is steady without a drive") {
        const StateVector v = fock_state(0, 10);
        lindblad_rhs(sys, DensityMatrix(v * v.adjoint()), 0, 0, drho);
        CHECK(drho.cwiseAbs().maxCoeff() < 1e-14);
    }
    SECTION("one-photon state decays at rate 2 kappa n") {
        const StateVector v = fock_state(1, 10);
        lindblad_rhs(sys, DensityMatrix(v * v.adjoint()), 0, 0, drho);
        CHECK(trace_product(Multidiagonal::number(10), drho).real() ==
              Catch::Approx(-2.0).epsilon(1e-12));
    }
    SECTION("trace is conserved for random Hermitian rho") {
        Philox rng(41, 0);
        for (int rep = 0; rep < 10; ++rep) {
            DensityMatrix m(10, 10);
            for (int i = 0; i < 10; ++i)
                for (int j = 0; j < 10; ++j)
                    m(i, j) = Complex(rng.uniform01() - 0.5, rng.uniform01() - 0.5);
            DensityMatrix rho = m + m.adjoint();
            lindblad_rhs(sys, rho, 0, 0, drho);
            CHECK(std::abs(drho.trace()) < 1e-12 * rho.cwiseAbs().maxCoeff() * 100);
        }
    }
    SECTION("trace is conserved with drive and bath present") {
        ModeParams pd;
        pd.cutoff = 8;
        pd.nTh = 1.5;
        pd.eta = Complex(0.7, 0.1);
        pd.delta = 1.0;
        Philox rng(43, 0);
        DensityMatrix m(8, 8);
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j)
                m(i, j) = Complex(rng.uniform01() - 0.5, rng.uniform01() - 0.5);
        DensityMatrix rho = m + m.adjoint();
        DensityMatrix out(8, 8);
        lindblad_rhs(make_mode_system(pd, Picture::schroedinger), rho, 0.0, 0.0, out);
        CHECK(std::abs(out.trace()) < 1e-10);
    }
}

TEST_CASE("thermal relaxation matches the exact truncated chain", "[master]") {
    // With eta = 0 the populations close on themselves as a birth-death chain,
    // so the matrix exponential of the classical generator is an independent
    // reference for <n>(t) on the same truncated basis.
    constexpr int dim = 40;
    ModeParams p;
    p.cutoff = dim;
    p.nTh = 5.0;
    const auto sys = make_mode_system(p, Picture::schroedinger);
    const StateVector psi0 = fock_state(10, dim);
    const auto table = evolve_master(DensityMatrix(psi0 * psi0.adjoint()), sys, 0.25, 5.0,
                                     StepControl{});

    Eigen::MatrixXd gen = Eigen::MatrixXd::Zero(dim, dim); // d p / dt = gen * p
    for (int n = 0; n < dim; ++n) {
        const double lam = (n < dim - 1) ? 2.0 * p.nTh * (n + 1) : 0.0;
        const double mu = 2.0 * (p.nTh + 1.0) * n;
        gen(n, n) -= lam + mu;
        if (n < dim - 1) gen(n + 1, n) += lam;
        if (n > 0) gen(n - 1, n) += mu;
    }
    Eigen::VectorXd p0 = Eigen::VectorXd::Zero(dim);
    p0[10] = 1.0;

    double worst_chain = 0, worst_closed = 0;
    for (std::size_t g = 0; g < table.t.size(); ++g) {
        const Eigen::VectorXd pt = (gen * table.t[g]).exp() * p0;
        double n_chain = 0;
        for (int n = 0; n < dim; ++n) n_chain += n * pt[n];
        worst_chain = std::max(worst_chain, std::abs(table.rows[g][2] - n_chain));
        worst_closed =
            std::max(worst_closed, std::abs(table.rows[g][2] - (5.0 + 5.0 * std::exp(-2.0 * table.t[g]))));
        if (g > 0) CHECK(table.rows[g][2] < table.rows[g - 1][2]); // monotone relaxation
    }
    CHECK(worst_chain < 1e-7);
    // against the untruncated closed form only the thermal-tail reflection is left
    CHECK(worst_closed < 0.05);

    // a basis with a negligible thermal tail recovers the closed form tightly
    ModeParams pw = p;
    pw.cutoff = 128;
    const auto sysw = make_mode_system(pw, Picture::schroedinger);
    const StateVector psi0w = fock_state(10, 128);
    const auto tw = evolve_master(DensityMatrix(psi0w * psi0w.adjoint()), sysw, 0.5, 2.0,
                                  StepControl{});
    for (std::size_t g = 0; g < tw.t.size(); ++g)
        CHECK(tw.rows[g][2] ==
              Catch::Approx(5.0 + 5.0 * std::exp(-2.0 * tw.t[g])).margin(1e-6));
}

TEST_CASE("driven mode reaches the coherent steady state", "[master]") {
    ModeParams p;
    p.cutoff = 12;
    p.nTh = 0.0;
    p.eta = Complex(1.0, 0.0);
    const auto sys = make_mode_system(p, Picture::schroedinger);
    const StateVector psi0 = fock_state(0, 12);
    const auto table =
        evolve_master(DensityMatrix(psi0 * psi0.adjoint()), sys, 0.5, 16.0, StepControl{});
    const auto& last = table.rows.back();
    CHECK(last[0] == Catch::Approx(1.0).margin(1e-6)); // Re<a> = eta/kappa
    CHECK(std::abs(last[1]) < 1e-6);
    CHECK(last[2] == Catch::Approx(1.0).margin(1e-6)); // <n> = nTh + |eta/kappa|^2
}

TEST_CASE("steady state stays put", "[master]") {
    ModeParams p;
    p.cutoff = 16;
    p.nTh = 0.0;
    p.eta = Complex(1.0, 0.0);
    const auto sys = make_mode_system(p, Picture::schroedinger);
    const auto alpha = coherent_state(Complex(1.0, 0.0), 16);
    const auto table = evolve_master(DensityMatrix(alpha.psi * alpha.psi.adjoint()), sys, 0.5, 5.0,
                                     StepControl{});
    for (const auto& row : table.rows) {
        CHECK(row[2] == Catch::Approx(1.0).margin(2e-6));
        CHECK(row[0] == Catch::Approx(1.0).margin(2e-6));
    }
}

TEST_CASE("density invariants are enforced", "[master]") {
    DensityMatrix bad = DensityMatrix::Zero(4, 4);
    bad(0, 0) = 0.7; // trace off unity
    CHECK_THROWS_AS(check_density_invariants(bad), NumericError);
    bad(1, 1) = 0.3;
    CHECK_NOTHROW(check_density_invariants(bad));
    bad(0, 1) = Complex(0.2, 0.1); // not Hermitian
    CHECK_THROWS_AS(check_density_invariants(bad), NumericError);
}
