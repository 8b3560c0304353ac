#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "mcwf/ode.hpp"
#include "mcwf/rng.hpp"
#include "mcwf/system.hpp"
#include "mcwf/trajectory.hpp"

namespace mcwf {

struct IntegratingControls {
    double norm_tol = 0.001; // tolerance on the squared norm at the retrieved jump time
    int max_iters = 5;       // root-finding iterations before giving up
    double Dt = 0.1;
    double T = 1.0;

    void validate() const {
        if (!(norm_tol > 0 && norm_tol < 0.1))
            throw ValidationError("IntegratingControls: norm_tol must lie in (0, 0.1)");
        if (max_iters < 1) throw ValidationError("IntegratingControls: max_iters must be >= 1");
        if (!(Dt > 0) || !(Dt <= T)) throw ValidationError("IntegratingControls: need 0 < Dt <= T");
        const double u = T / Dt;
        if (std::abs(u - std::round(u)) > 1e-9 * u)
            throw ValidationError("IntegratingControls: Dt must divide T");
    }

    long long grid_intervals() const { return static_cast<long long>(std::llround(T / Dt)); }
};

struct JumpSearch {
    double t_star = 0;
    StateVector psi;
    double norm2 = 0;
    bool converged = false;
    int iters = 0;
};

// Retrieves the time at which the decaying squared norm crossed the threshold,
// given a bracketing pair. The first guess interpolates linearly in the
// squared norm; later iterations bisect. Each candidate is evaluated by
// re-integrating from the cached bracket start, which `reintegrate` provides:
// called with a target time, it returns the state evolved there from t_lo.
// If max_iters runs out the best iterate is returned with converged = false.
template <typename Reintegrate>
inline JumpSearch find_jump_time(double t_lo, double norm2_lo, double t_hi, double norm2_hi,
                                 double threshold, Reintegrate&& reintegrate,
                                 const IntegratingControls& ctl) {
    if (!(norm2_lo > threshold && threshold >= norm2_hi))
        throw ContractError("find_jump_time: bracket does not enclose the threshold");

    JumpSearch best;
    best.t_star = t_hi;
    best.norm2 = norm2_hi;

    double lo = t_lo, hi = t_hi, n2lo = norm2_lo;
    for (int it = 0; it < ctl.max_iters; ++it) {
        double guess;
        if (it == 0) {
            const double frac = (n2lo - threshold) / (n2lo - norm2_hi);
            guess = lo + frac * (hi - lo);
            guess = std::clamp(guess, lo + 1e-3 * (hi - lo), hi - 1e-3 * (hi - lo));
        } else {
            guess = 0.5 * (lo + hi);
        }
        const StateVector& psi_g = reintegrate(guess);
        const double n2g = psi_g.squaredNorm();
        if (it == 0 || std::abs(n2g - threshold) < std::abs(best.norm2 - threshold)) {
            best.t_star = guess;
            best.psi = psi_g;
            best.norm2 = n2g;
            best.iters = it + 1;
        }
        if (std::abs(n2g - threshold) <= ctl.norm_tol) {
            best.converged = true;
            return best;
        }
        if (n2g > threshold) {
            lo = guess;
            n2lo = n2g;
        } else {
            hi = guess;
        }
    }
    return best;
}

// The norm-decay flavor of the method: evolve without renormalization, fire a
// jump when the squared norm crosses a pre-drawn uniform threshold, retrieve
// the crossing time by root-finding, redraw, continue. The channel is chosen
// by a fresh uniform draw scaled by the total rate. Exact per-step
// renormalization is unavailable here by construction; only sampled
// observables are normalized.
inline TrajectoryRecord run_trajectory_integrating(const StateVector& psi0,
                                                   const QuantumSystem& sys,
                                                   const IntegratingControls& ctl,
                                                   const StepControl& ode_ctl, std::uint64_t seed,
                                                   std::uint64_t stream = 0,
                                                   const TrajectoryOptions& opt = {}) {
    ctl.validate();
    ode_ctl.validate();
    if (psi0.size() != sys.dim) throw DimensionError("run_trajectory_integrating: dimension mismatch");

    TrajectoryRecord rec;
    rec.seed = seed;
    rec.stream = stream;
    rec.samples.names = sys.obs.names;
    rec.stats.jumps.assign(std::max(1, sys.channels()), 0);

    Philox rng(seed, stream);
    CashKarp ck;
    StateVector psi = psi0;
    normalize(psi);
    std::vector<Complex> obs_scratch;
    std::vector<double> rates;
    StateVector unit, jpsi, cache;

    const auto sample = [&](double tt) {
        unit = psi / std::sqrt(psi.squaredNorm());
        rec.samples.t.push_back(tt);
        rec.samples.rows.push_back(sys.obs.from_state(unit, obs_scratch));
    };
    const auto primary_of = [&](const StateVector& v) {
        return sys.obs.ops[sys.obs.primary].quadratic_form(v).real() / v.squaredNorm();
    };

    // one anchored no-jump step; returns dt_did and the ODE suggestion
    const auto one_step = [&](StateVector& y, double t_from, double dt_try) -> StepResult {
        StepResult res;
        if (sys.has_drift()) {
            const auto rhs = [&sys, t_from](double tt, const StateVector& x, StateVector& dx) {
                sys.drift(tt, t_from, x, dx);
            };
            res = ck.step(rhs, y, t_from, dt_try, ode_ctl);
        } else {
            res = {dt_try, 5.0 * dt_try, 0.0};
        }
        sys.apply_propagator(res.dt_did, y);
        return res;
    };
    // re-integrate a copy of `from` across [t_from, t_to] with fresh adaptation
    const auto evolve_to = [&](const StateVector& from, double t_from, double t_to) -> StateVector {
        StateVector y = from;
        double t = t_from;
        double sugg = t_to - t_from;
        while (t < t_to - 1e-14 * std::max(1.0, std::abs(t_to))) {
            const double span = t_to - t;
            const double dt_try = std::min(sugg, span);
            const StepResult r = one_step(y, t, dt_try);
            t += r.dt_did;
            sugg = r.dt_next;
        }
        return y;
    };

    double t = 0.0;
    sample(0.0);
    double threshold = rng.uniform01();
    double dt_suggest = ctl.Dt;
    double n_before = primary_of(psi);

    try {
        const long long u_max = ctl.grid_intervals();
        for (long long u = 0; u < u_max; ++u) {
            const double boundary = double(u + 1) * ctl.Dt;
            while (t < boundary - 1e-9 * ctl.Dt) {
                const double span = boundary - t;
                const bool clipped = dt_suggest >= span * (1.0 - 1e-12);
                const double dt_try = clipped ? span : dt_suggest;

                cache = psi; // bracket start for jump-time retrieval
                const double t_from = t;
                const double n2_before_step = psi.squaredNorm();
                const StepResult res = one_step(psi, t, dt_try);
                t += res.dt_did;
                const bool shrank = res.dt_did < dt_try * (1.0 - 1e-12);
                if (!(clipped && !shrank)) dt_suggest = res.dt_next;

                double n2 = psi.squaredNorm();
                if (!(n2 > 0) || !std::isfinite(n2))
                    throw NumericError("run_trajectory_integrating: norm underflow");

                const double n_after = primary_of(psi);
                sys.jump_rates(psi, n2, rates);
                double r_tot = 0;
                for (double r : rates) r_tot += r;
                rec.stats.add_step(res.dt_did, n_before, n_after, r_tot);
                n_before = n_after;

                if (n2 <= threshold) {
                    // crossed between t_from and t: retrieve the jump time
                    const auto reint = [&](double target) -> const StateVector& {
                        static thread_local StateVector y;
                        y = evolve_to(cache, t_from, target);
                        return y;
                    };
                    JumpSearch js =
                        find_jump_time(t_from, n2_before_step, t, n2, threshold, reint, ctl);
                    if (!js.converged) ++rec.stats.retrieval_failures;
                    psi = js.psi;
                    t = js.t_star;
                    n2 = js.norm2;

                    sys.jump_rates(psi, n2, rates);
                    r_tot = 0;
                    for (double r : rates) r_tot += r;
                    int fired = -1;
                    if (r_tot > 0) {
                        const double draw = rng.uniform01() * r_tot;
                        double acc = 0;
                        int m = static_cast<int>(rates.size()) - 1;
                        for (std::size_t i = 0; i < rates.size(); ++i) {
                            acc += rates[i];
                            if (draw < acc) {
                                m = static_cast<int>(i);
                                break;
                            }
                        }
                        sys.jumps[m].apply(psi, jpsi);
                        const double jn = std::sqrt(jpsi.squaredNorm());
                        if (!(jn > 0))
                            throw DegenerateStateError("integrating jump annihilated the state");
                        psi = jpsi / jn;
                        ++rec.stats.jumps[m];
                        fired = m;
                    }
                    if (opt.record_steps) {
                        StepRecord sr; // one entry per jump: time, channel, norm at retrieval
                        sr.t_before = js.t_star;
                        sr.norm_correction = std::sqrt(n2);
                        sr.jump_index = fired;
                        sr.rates = rates;
                        rec.step_log.push_back(std::move(sr));
                    }
                    threshold = rng.uniform01();
                    n_before = primary_of(psi);
                }

                if (std::norm(psi[psi.size() - 1]) / psi.squaredNorm() > 1e-6)
                    throw TruncationError("integrating: top basis level populated beyond 1e-6",
                                          std::norm(psi[psi.size() - 1]));
            }
            t = boundary;
            sample(t);
        }
    } catch (const Error& e) {
        rec.aborted = true;
        rec.abort_reason = e.what();
    }

    rec.final_time = t;
    Eigen::Index imax = 0;
    psi.cwiseAbs().maxCoeff(&imax);
    rec.final_label = static_cast<int>(imax);
    return rec;
}

} // namespace mcwf
