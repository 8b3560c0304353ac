#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "mcwf/state.hpp"

namespace mcwf {

struct StepControl {
    double eps_abs = 1e-12;
    double eps_rel = 1e-6;
    double dt_min = 1e-12;
    double dt_max = std::numeric_limits<double>::infinity();

    void validate() const {
        if (eps_abs < 0 || eps_rel < 0 || (eps_abs == 0 && eps_rel == 0))
            throw ValidationError("StepControl: need eps_abs >= 0, eps_rel >= 0, not both zero");
        if (!(dt_min > 0) || !(dt_min <= dt_max))
            throw ValidationError("StepControl: need 0 < dt_min <= dt_max");
    }
};

struct StepResult {
    double dt_did = 0;  // timestep actually performed, <= dt_try
    double dt_next = 0; // suggestion for the next step
    double err_norm = 0;
};

using Rhs = std::function<void(double, const StateVector&, StateVector&)>;

// Embedded Runge-Kutta Cash-Karp 5(4) with standard error-based step control.
//
// The stepper is stateless between calls: all adaptation flows through
// dt_next, so the caller can cache {y, t, dt_try} and roll a step back by
// restoring them. The instance only holds scratch vectors.
//
// Error norm: err = max_i |e_i| / (eps_abs + eps_rel * max(|y_i|, |y_new_i|)),
// accepted iff err <= 1. On acceptance dt_next = dt * min(5, 0.9 err^-1/5);
// on rejection the retry shrinks by at least 0.2. The returned dt_did never
// exceeds dt_try.
class CashKarp {
public:
    StepResult step(const Rhs& rhs, StateVector& y, double t, double dt_try, const StepControl& ctl) {
        if (!(dt_try > 0)) throw ValidationError("CashKarp::step: dt_try must be positive");
        double h = std::min(dt_try, ctl.dt_max);
        const Eigen::Index n = y.size();
        k1_.resize(n);
        rhs(t, y, k1_);

        bool nonfinite = false;
        for (;;) {
            const double err = attempt(rhs, y, t, h, ctl);
            nonfinite = !std::isfinite(err);
            if (nonfinite) {
                h *= 0.2;
            } else if (err <= 1.0) {
                y.swap(ynew_);
                const double grow = (err > 0) ? std::min(5.0, 0.9 * std::pow(err, -0.2)) : 5.0;
                return {h, h * grow, err};
            } else {
                h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
            }
            if (h < ctl.dt_min) {
                if (nonfinite) throw NumericError("CashKarp::step: non-finite derivative values");
                throw StiffnessError("CashKarp::step: stepsize underflow below dt_min");
            }
        }
    }

private:
    // One trial step of size h; fills ynew_/yerr_ and returns the error norm.
    double attempt(const Rhs& rhs, const StateVector& y, double t, double h, const StepControl& ctl) {
        constexpr double a2 = 0.2, a3 = 0.3, a4 = 0.6, a5 = 1.0, a6 = 0.875;
        constexpr double b21 = 0.2;
        constexpr double b31 = 3.0 / 40.0, b32 = 9.0 / 40.0;
        constexpr double b41 = 0.3, b42 = -0.9, b43 = 1.2;
        constexpr double b51 = -11.0 / 54.0, b52 = 2.5, b53 = -70.0 / 27.0, b54 = 35.0 / 27.0;
        constexpr double b61 = 1631.0 / 55296.0, b62 = 175.0 / 512.0, b63 = 575.0 / 13824.0,
                         b64 = 44275.0 / 110592.0, b65 = 253.0 / 4096.0;
        constexpr double c1 = 37.0 / 378.0, c3 = 250.0 / 621.0, c4 = 125.0 / 594.0, c6 = 512.0 / 1771.0;
        constexpr double dc1 = c1 - 2825.0 / 27648.0, dc3 = c3 - 18575.0 / 48384.0,
                         dc4 = c4 - 13525.0 / 55296.0, dc5 = -277.0 / 14336.0, dc6 = c6 - 0.25;

        ytmp_ = y + (h * b21) * k1_;
        rhs(t + a2 * h, ytmp_, k2_);
        ytmp_ = y + h * (b31 * k1_ + b32 * k2_);
        rhs(t + a3 * h, ytmp_, k3_);
        ytmp_ = y + h * (b41 * k1_ + b42 * k2_ + b43 * k3_);
        rhs(t + a4 * h, ytmp_, k4_);
        ytmp_ = y + h * (b51 * k1_ + b52 * k2_ + b53 * k3_ + b54 * k4_);
        rhs(t + a5 * h, ytmp_, k5_);
        ytmp_ = y + h * (b61 * k1_ + b62 * k2_ + b63 * k3_ + b64 * k4_ + b65 * k5_);
        rhs(t + a6 * h, ytmp_, k6_);

        ynew_ = y + h * (c1 * k1_ + c3 * k3_ + c4 * k4_ + c6 * k6_);
        yerr_ = h * (dc1 * k1_ + dc3 * k3_ + dc4 * k4_ + dc5 * k5_ + dc6 * k6_);

        double err = 0.0;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            const double e = std::abs(yerr_[i]);
            if (e == 0.0) continue;
            const double scale = ctl.eps_abs + ctl.eps_rel * std::max(std::abs(y[i]), std::abs(ynew_[i]));
            err = std::max(err, e / scale);
        }
        return err;
    }

    StateVector k1_, k2_, k3_, k4_, k5_, k6_, ytmp_, ynew_, yerr_;

public:
    // Adaptive integration from t0 to t1 with clipping at t1; returns the
    // suggestion the stepper would carry past t1 (clipping does not shrink it).
    double integrate_to(const Rhs& rhs, StateVector& y, double t0, double t1, double dt_suggest,
                        const StepControl& ctl) {
        double t = t0;
        while (t < t1) {
            const double span = t1 - t;
            if (span <= 1e-14 * std::max(1.0, std::abs(t1))) break;
            const bool clipped = dt_suggest >= span;
            const double dt_try = clipped ? span : dt_suggest;
            const StepResult res = step(rhs, y, t, dt_try, ctl);
            t += res.dt_did;
            const bool shrank = res.dt_did < dt_try * (1.0 - 1e-12);
            if (!(clipped && !shrank)) dt_suggest = res.dt_next;
            if (clipped && !shrank) break; // arrived exactly at t1
        }
        return dt_suggest;
    }
};

} // namespace mcwf
