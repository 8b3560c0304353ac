#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mcwf/ode.hpp"
#include "mcwf/rng.hpp"

using namespace mcwf;

namespace {

const Rhs decay = [](double, const StateVector& y, StateVector& dy) { dy = -y; };
const Rhs zero_rhs = [](double, const StateVector& y, StateVector& dy) { dy.setZero(y.size()); };
const Rhs rotate = [](double, const StateVector& y, StateVector& dy) { dy = Complex(0, 1) * y; };

} // namespace

TEST_CASE("exponential decay to machine-level accuracy", "[ode]") {
    StepControl ctl;
    ctl.eps_rel = 1e-10;
    ctl.eps_abs = 1e-14;
    StateVector y(1);
    y[0] = 1.0;
    CashKarp ck;
    ck.integrate_to(decay, y, 0.0, 1.0, 0.1, ctl);
    CHECK(y[0].real() == Catch::Approx(std::exp(-1.0)).margin(1e-8));
    CHECK(y[0].real() == Catch::Approx(0.3678794412).margin(1e-8));
}

TEST_CASE("zero derivative keeps the state and grows the suggestion", "[ode]") {
    StateVector y(3);
    y << Complex(1, 2), Complex(0, 0), Complex(-3, 0.5);
    const StateVector y0 = y;
    CashKarp ck;
    const StepResult res = ck.step(zero_rhs, y, 0.0, 0.25, StepControl{});
    CHECK(res.dt_did == 0.25);
    CHECK(res.dt_next >= 0.25);
    CHECK(res.err_norm == 0.0);
    CHECK((y - y0).norm() == 0.0);
}

TEST_CASE("unit-circle rotation over a full period", "[ode]") {
    StepControl ctl;
    ctl.eps_rel = 1e-9;
    StateVector y(1);
    y[0] = 1.0;
    CashKarp ck;
    ck.integrate_to(rotate, y, 0.0, 2.0 * M_PI, 0.1, ctl);
    CHECK(std::abs(y[0]) == Catch::Approx(1.0).margin(1e-7));
    CHECK(std::abs(y[0] - Complex(1, 0)) < 1e-6);
}

TEST_CASE("fifth-order convergence on forced fixed steps", "[ode]") {
    // loose tolerances so every trial is accepted: stepsize stays fixed
    StepControl loose;
    loose.eps_rel = 1e30;
    loose.eps_abs = 1e30;
    std::vector<double> dts = {0.1, 0.05, 0.025};
    std::vector<double> errs;
    for (double dt : dts) {
        StateVector y(1);
        y[0] = 1.0;
        CashKarp ck;
        const auto steps = static_cast<long>(std::lround(1.0 / dt));
        for (long i = 0; i < steps; ++i) {
            const StepResult r = ck.step(decay, y, i * dt, dt, loose);
            REQUIRE(r.dt_did == dt);
        }
        errs.push_back(std::abs(y[0].real() - std::exp(-1.0)));
    }
    const double slope1 = std::log(errs[0] / errs[1]) / std::log(2.0);
    const double slope2 = std::log(errs[1] / errs[2]) / std::log(2.0);
    CHECK(slope1 == Catch::Approx(5.0).margin(0.3));
    CHECK(slope2 == Catch::Approx(5.0).margin(0.3));
}

TEST_CASE("dt_did never exceeds dt_try on random linear problems", "[ode][property]") {
    Philox rng(29, 0);
    for (int rep = 0; rep < 25; ++rep) {
        const int dim = 1 + int(rng.uniform01() * 6);
        Eigen::MatrixXcd m(dim, dim);
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j)
                m(i, j) = 8.0 * Complex(rng.uniform01() - 0.5, rng.uniform01() - 0.5);
        const Rhs rhs = [m](double, const StateVector& y, StateVector& dy) { dy = m * y; };
        StateVector y(dim);
        for (int i = 0; i < dim; ++i) y[i] = Complex(rng.uniform01(), rng.uniform01());
        const double dt_try = 0.01 + rng.uniform01();
        CashKarp ck;
        const StepResult r = ck.step(rhs, y, 0.0, dt_try, StepControl{});
        CHECK(r.dt_did <= dt_try);
        CHECK(r.dt_did >= StepControl{}.dt_min);
        CHECK(r.dt_next > 0);
    }
}

TEST_CASE("identical inputs give bitwise identical results", "[ode]") {
    StateVector y1(2), y2(2);
    y1 << Complex(0.3, -0.2), Complex(1.0, 0.7);
    y2 = y1;
    CashKarp ck1, ck2;
    const StepResult r1 = ck1.step(rotate, y1, 0.5, 0.37, StepControl{});
    const StepResult r2 = ck2.step(rotate, y2, 0.5, 0.37, StepControl{});
    CHECK(r1.dt_did == r2.dt_did);
    CHECK(r1.dt_next == r2.dt_next);
    CHECK(r1.err_norm == r2.err_norm);
    for (int i = 0; i < 2; ++i) {
        CHECK(y1[i].real() == y2[i].real());
        CHECK(y1[i].imag() == y2[i].imag());
    }
}

TEST_CASE("stiffness is reported as an error", "[ode]") {
    // rapidly growing mode with a dt floor too high to satisfy the tolerance
    const Rhs stiff = [](double, const StateVector& y, StateVector& dy) { dy = 1e8 * y; };
    StepControl ctl;
    ctl.dt_min = 1e-3;
    StateVector y(1);
    y[0] = 1.0;
    CashKarp ck;
    CHECK_THROWS_AS(ck.step(stiff, y, 0.0, 1.0, ctl), StiffnessError);
}
