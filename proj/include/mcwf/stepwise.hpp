#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "mcwf/ode.hpp"
#include "mcwf/rng.hpp"
#include "mcwf/system.hpp"
#include "mcwf/trajectory.hpp"

namespace mcwf {

// Parameters of the jump-probability control superimposed on the ODE control.
struct DpControls {
    double dp_limit = 0.1;                                    // max allowed total jump probability per step
    double dp_overshoot = std::numeric_limits<double>::max(); // layer-2 rejection threshold
    double Dt = 0.1;                                          // sampling interval
    double T = 1.0;                                           // final time

    void validate() const {
        if (!(dp_limit > 0 && dp_limit < 1))
            throw ValidationError("DpControls: dp_limit must lie in (0,1)");
        if (!(dp_overshoot > dp_limit))
            throw ValidationError("DpControls: dp_overshoot must exceed dp_limit");
        if (!(Dt > 0) || !(Dt <= T)) throw ValidationError("DpControls: need 0 < Dt <= T");
        const double u = T / Dt;
        if (std::abs(u - std::round(u)) > 1e-9 * u)
            throw ValidationError("DpControls: Dt must divide T");
    }

    long long grid_intervals() const { return static_cast<long long>(std::llround(T / Dt)); }
};

// dt suggestion capped so the expected jump probability stays below dp_limit.
inline double cap_dt_next(double dt_next_ode, double r_tot, double dp_limit) {
    if (r_tot <= 0) return dt_next_ode;
    return std::min(dt_next_ode, dp_limit / r_tot);
}

// Everything one step tells the driver.
struct StepOutcome {
    double dt_did = 0;
    double dt_next_ode = 0; // suggestion of the ODE stage alone
    double dp_cap = std::numeric_limits<double>::infinity(); // dp_limit / r_tot
    double dp_step = 0;     // r_tot * dt_did
    double r_tot = 0;
    double norm_correction = 1;
    int jump_index = -1;
    bool rejected_layer2 = false;
    bool ode_shrank = false;
};

struct StepwiseWorkspace {
    CashKarp ck;
    StateVector cache;
    StateVector jpsi;
    std::vector<double> rates;
    std::vector<Complex> obs_scratch;
};

// One adaptive step: ODE stage under the drift, exact diagonal propagator,
// exact renormalization, jump rates on the evolved state, two-layer
// dp-control, and at most one instantaneous jump applied on top of the ODE
// step. On a layer-2 rejection psi and t are restored and only the returned
// suggestion changes.
inline StepOutcome advance(StateVector& psi, double& t, double dt_try, const QuantumSystem& sys,
                           const DpControls& ctl, const StepControl& ode_ctl, Philox& rng,
                           StepwiseWorkspace& ws, bool renormalize_state = true) {
    StepOutcome out;
    ws.cache = psi;
    const double t0 = t;

    if (sys.has_drift()) {
        const auto rhs = [&sys, t0](double tt, const StateVector& x, StateVector& dx) {
            sys.drift(tt, t0, x, dx);
        };
        const StepResult res = ws.ck.step(rhs, psi, t0, dt_try, ode_ctl);
        out.dt_did = res.dt_did;
        out.dt_next_ode = res.dt_next;
        out.ode_shrank = res.dt_did < dt_try * (1.0 - 1e-12);
    } else {
        // no coherent part to integrate: the ODE stage is exactly the identity
        out.dt_did = dt_try;
        out.dt_next_ode = 5.0 * dt_try;
    }

    sys.apply_propagator(out.dt_did, psi);

    double n2 = 1.0;
    if (renormalize_state) {
        out.norm_correction = normalize(psi);
    } else {
        n2 = psi.squaredNorm();
        out.norm_correction = std::sqrt(n2);
        if (!(n2 > 0) || !std::isfinite(n2))
            throw NumericError("advance: state norm underflow with renormalization disabled");
    }

    sys.jump_rates(psi, n2, ws.rates);
    for (double r : ws.rates) out.r_tot += r;
    out.dp_step = out.r_tot * out.dt_did;

    if (out.dp_step > ctl.dp_overshoot) {
        psi = ws.cache; // roll the whole step back; retry comes via the suggestion
        out.rejected_layer2 = true;
        out.dp_cap = ctl.dp_limit / out.r_tot;
        return out;
    }

    t = t0 + out.dt_did;

    if (out.r_tot > 0) {
        const double draw = rng.uniform01();
        if (draw < out.dp_step) {
            double acc = 0.0;
            int m = static_cast<int>(ws.rates.size()) - 1; // cumulative scan over the same draw
            for (std::size_t i = 0; i < ws.rates.size(); ++i) {
                acc += ws.rates[i] * out.dt_did;
                if (draw < acc) {
                    m = static_cast<int>(i);
                    break;
                }
            }
            sys.jumps[m].apply(psi, ws.jpsi);
            const double jn = std::sqrt(ws.jpsi.squaredNorm());
            if (!(jn > 0)) throw DegenerateStateError("advance: jump annihilated the state");
            psi = ws.jpsi / jn;
            if (!renormalize_state) psi *= std::sqrt(n2); // keep the free-running norm
            out.jump_index = m;
        }
    }

    if (std::norm(psi[psi.size() - 1]) / (renormalize_state ? 1.0 : n2) > 1e-6)
        throw TruncationError("advance: top basis level populated beyond 1e-6",
                              std::norm(psi[psi.size() - 1]));

    out.dp_cap = (out.r_tot > 0) ? ctl.dp_limit / out.r_tot
                                 : std::numeric_limits<double>::infinity();
    return out;
}

// Drives advance() over the sampling grid. Steps are clipped so they never
// cross a sampling instant; the running suggestion survives the clipping, so
// boundary fragments do not permanently shrink the stepsize. Observables are
// recorded exactly at every u * Dt. Deterministic in (inputs, seed, stream).
inline TrajectoryRecord run_trajectory(const StateVector& psi0, const QuantumSystem& sys,
                                       const DpControls& ctl, const StepControl& ode_ctl,
                                       std::uint64_t seed, std::uint64_t stream = 0,
                                       const TrajectoryOptions& opt = {}) {
    ctl.validate();
    ode_ctl.validate();
    if (psi0.size() != sys.dim) throw DimensionError("run_trajectory: state dimension mismatch");

    TrajectoryRecord rec;
    rec.seed = seed;
    rec.stream = stream;
    rec.samples.names = sys.obs.names;
    rec.stats.jumps.assign(std::max(1, sys.channels()), 0);

    Philox rng(seed, stream);
    StepwiseWorkspace ws;
    StateVector psi = psi0;
    if (opt.renormalize) normalize(psi);

    const auto sample = [&](double tt) {
        StateVector unit = psi;
        if (!opt.renormalize) unit /= std::sqrt(unit.squaredNorm());
        rec.samples.t.push_back(tt);
        rec.samples.rows.push_back(sys.obs.from_state(unit, ws.obs_scratch));
    };
    const auto primary_of = [&](const StateVector& v, double n2) {
        return sys.obs.ops[sys.obs.primary].quadratic_form(v).real() / n2;
    };

    double t = 0.0;
    sample(0.0);

    // the first try is capped by the rates of the initial state
    sys.jump_rates(psi, opt.renormalize ? 1.0 : psi.squaredNorm(), ws.rates);
    double r0 = 0;
    for (double r : ws.rates) r0 += r;
    double dt_suggest = cap_dt_next(ctl.Dt, r0, ctl.dp_limit);

    double n_before = primary_of(psi, opt.renormalize ? 1.0 : psi.squaredNorm());
    bool at_boundary = true;
    long long consecutive_rejections = 0;

    try {
        const long long u_max = ctl.grid_intervals();
        for (long long u = 0; u < u_max; ++u) {
            const double boundary = double(u + 1) * ctl.Dt;
            for (;;) {
                const double span = boundary - t;
                const bool clipped = dt_suggest >= span * (1.0 - 1e-12);
                const double dt_eff = clipped ? span : dt_suggest;
                const bool started_at_boundary = at_boundary;

                const StepOutcome o =
                    advance(psi, t, dt_eff, sys, ctl, ode_ctl, rng, ws, opt.renormalize);

                if (opt.record_steps) {
                    StepRecord sr;
                    sr.t_before = o.rejected_layer2 ? t : t - o.dt_did;
                    sr.dt_did = o.dt_did;
                    sr.dp_step = o.dp_step;
                    sr.norm_correction = o.norm_correction;
                    sr.jump_index = o.jump_index;
                    sr.rejected_layer2 = o.rejected_layer2;
                    sr.rates = ws.rates;
                    if (!o.rejected_layer2) {
                        StateVector unit = psi;
                        if (!opt.renormalize) unit /= std::sqrt(unit.squaredNorm());
                        sr.obs_after = sys.obs.from_state(unit, ws.obs_scratch);
                    }
                    rec.step_log.push_back(std::move(sr));
                }

                if (o.rejected_layer2) {
                    ++rec.stats.layer2_rejections;
                    if (++consecutive_rejections > 100)
                        throw NumericError("run_trajectory: layer-2 rejection loop");
                    dt_suggest = o.dp_cap;
                    continue;
                }
                consecutive_rejections = 0;

                const double n2 = opt.renormalize ? 1.0 : psi.squaredNorm();
                const double n_after = primary_of(psi, n2);
                rec.stats.add_step(o.dt_did, n_before, n_after, o.r_tot);
                n_before = n_after;
                if (o.jump_index >= 0) ++rec.stats.jumps[o.jump_index];

                const double candidate = (clipped && !o.ode_shrank) ? dt_suggest : o.dt_next_ode;
                dt_suggest = std::min(candidate, o.dp_cap);

                const bool arrived = t >= boundary - 1e-9 * ctl.Dt;
                if (arrived) {
                    if (started_at_boundary && o.dt_did >= ctl.Dt * (1.0 - 1e-9))
                        ++rec.stats.full_dt_steps;
                    t = boundary;
                    at_boundary = true;
                    sample(t);
                    break;
                }
                at_boundary = false;
            }
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
