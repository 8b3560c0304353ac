#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "mcwf/errors.hpp"
#include "mcwf/rng.hpp"

namespace mcwf {

// Birth-death process over photon numbers: up-rate lambda_n = 2 kappa (n+1) nTh,
// down-rate mu_n = 2 kappa (nTh+1) n. This is the exact jump process of the
// undriven thermal mode, against which the trajectory engines are checked.
struct ChainSpec {
    double kappa = 1.0;
    double nTh = 0.0;

    void validate() const {
        if (!(kappa > 0)) throw ValidationError("ChainSpec: kappa must be positive");
        if (!(nTh >= 0)) throw ValidationError("ChainSpec: nTh must be >= 0");
    }

    double lambda(int n) const { return n < -1 ? 0.0 : 2.0 * kappa * double(n + 1) * nTh; }
    double mu(int n) const { return n < 1 ? 0.0 : 2.0 * kappa * (nTh + 1.0) * double(n); }
    double q(int n) const { return lambda(n) + mu(n); }
};

struct ChainEvent {
    double time;
    int state; // state after the jump
};

// Exact continuous-time sample: exponential holding times with rate q(n),
// then an up-move with probability lambda/q.
inline std::vector<ChainEvent> gillespie_trajectory(int n0, const ChainSpec& spec, double T,
                                                    std::uint64_t seed, std::uint64_t stream = 0) {
    spec.validate();
    if (n0 < 0) throw ValidationError("gillespie_trajectory: n0 must be >= 0");
    Philox rng(seed, stream);
    std::vector<ChainEvent> events;
    int n = n0;
    double t = 0.0;
    for (;;) {
        const double q = spec.q(n);
        if (q <= 0) break; // absorbing
        t += rng.exponential(q);
        if (t >= T) break;
        n += (rng.uniform01() < spec.lambda(n) / q) ? 1 : -1;
        events.push_back({t, n});
    }
    return events;
}

inline int chain_state_at(const std::vector<ChainEvent>& events, int n0, double t) {
    int n = n0;
    for (const auto& e : events) {
        if (e.time > t) break;
        n = e.state;
    }
    return n;
}

struct ChainStep {
    int n_next;
    int jump; // -1 none, 0 down (emission), 1 up (absorption)
    double dt_next = 0;
};

// One step of the time-discretized chain: down with probability mu dt, up with
// lambda dt, else stay. Valid only while q(n) dt <= 1. When dp is supplied the
// returned dt_next = dp / q(n) reproduces the jump-probability-controlled
// stepsize rule. Channel layout and draw consumption mirror the wave-function
// engine, channel 0 = emission.
inline ChainStep discrete_chain_step(int n, double dt, std::optional<double> dp,
                                     const ChainSpec& spec, Philox& rng) {
    if (n < 0) throw ValidationError("discrete_chain_step: n must be >= 0");
    if (!(dt >= 0)) throw ValidationError("discrete_chain_step: dt must be >= 0");
    const double q = spec.q(n);
    if (q * dt > 1.0) throw ContractError("discrete_chain_step: q(n) dt exceeds 1");

    ChainStep out{n, -1, 0};
    if (q > 0) {
        const double draw = rng.uniform01();
        if (draw < spec.mu(n) * dt) {
            out.n_next = n - 1;
            out.jump = 0;
        } else if (draw < q * dt) {
            out.n_next = n + 1;
            out.jump = 1;
        }
        if (dp) out.dt_next = *dp / q;
    } else if (dp) {
        out.dt_next = std::numeric_limits<double>::infinity();
    }
    return out;
}

namespace detail {

inline double phi1(double z) {
    if (std::abs(z) < 1e-5) return 1.0 + z * (0.5 + z * (1.0 / 6.0 + z / 24.0));
    return std::expm1(z) / z;
}

inline double phi2(double z) {
    if (std::abs(z) < 1e-5) return 0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z / 120.0));
    return (std::expm1(z) - z) / (z * z);
}

// Divided differences of f(x) = exp(-x dt); stable for clustered nodes.
inline double exp_dd2(double a, double b, double dt) {
    return -dt * std::exp(-a * dt) * phi1((a - b) * dt);
}

inline double exp_dd3(double a, double b, double c, double dt) {
    if (std::abs(c - a) < 1e-9 * std::max({std::abs(a), std::abs(b), std::abs(c), 1.0}))
        return 0.5 * dt * dt * std::exp(-(a + b + c) / 3.0 * dt);
    return (exp_dd2(b, c, dt) - exp_dd2(a, b, dt)) / (c - a);
}

// Repeated node: f[a, a, b].
inline double exp_dd3_rep(double a, double b, double dt) {
    return dt * dt * std::exp(-a * dt) * phi2((a - b) * dt);
}

} // namespace detail

// Exact probabilities of reaching n-2..n+2 from n within dt using at most two
// jumps. Each two-jump path integral is a divided difference of exp(-x dt)
// over the total rates along the path (Hermite-Genocchi), which evaluates
// stably even for near-equal rates.
struct Le2Probabilities {
    double down2 = 0, down1 = 0, stay = 0, up1 = 0, up2 = 0;
    double sum() const { return down2 + down1 + stay + up1 + up2; }
};

inline Le2Probabilities le2_jump_probabilities(int n, double dt, const ChainSpec& spec) {
    if (n < 0) throw ValidationError("le2_jump_probabilities: n must be >= 0");
    if (!(dt >= 0)) throw ValidationError("le2_jump_probabilities: dt must be >= 0");
    const double qn = spec.q(n);
    const double ln = spec.lambda(n), mn = spec.mu(n);

    Le2Probabilities p;
    p.stay = std::exp(-qn * dt);
    if (ln > 0) {
        const double qn1 = spec.q(n + 1);
        p.up1 = -ln * detail::exp_dd2(qn, qn1, dt);
        p.stay += ln * spec.mu(n + 1) * detail::exp_dd3_rep(qn, qn1, dt);
        const double ln1 = spec.lambda(n + 1);
        if (ln1 > 0) p.up2 = ln * ln1 * detail::exp_dd3(qn, qn1, spec.q(n + 2), dt);
    }
    if (mn > 0) {
        const double qm1 = spec.q(n - 1);
        p.down1 = -mn * detail::exp_dd2(qn, qm1, dt);
        p.stay += mn * spec.lambda(n - 1) * detail::exp_dd3_rep(qn, qm1, dt);
        const double mn1 = spec.mu(n - 1);
        if (mn1 > 0) p.down2 = mn * mn1 * detail::exp_dd3(qn, qm1, spec.q(n - 2), dt);
    }

    for (double v : {p.down2, p.down1, p.stay, p.up1, p.up2}) {
        if (!std::isfinite(v) || v < -1e-12 || v > 1.0 + 1e-12)
            throw NumericError("le2_jump_probabilities: probability outside [0,1]");
    }
    return p;
}

// E[X(t+dt) - Y(t+dt) | X = Y = n]: the one-step mean gap between the exact
// process and its discretization, computed from the closed-form <=2-jump
// probabilities. The small >=3-jump remainder mass is kept at n; displacements
// beyond two jumps contribute O(dt^3). In the dt -> 0 limit gap/dt^2
// approaches 2 kappa^2 (n - nTh), which also follows from the exact linear
// relaxation of the process mean.
inline double one_step_mean_gap(int n, double dt, const ChainSpec& spec) {
    const Le2Probabilities p = le2_jump_probabilities(n, dt, spec);
    const double ex = double(n - 2) * p.down2 + double(n - 1) * p.down1 + double(n) * p.stay +
                      double(n + 1) * p.up1 + double(n + 2) * p.up2 +
                      double(n) * (1.0 - p.sum());
    const double ey = double(n) + (spec.lambda(n) - spec.mu(n)) * dt;
    return ex - ey;
}

// P(T1 + T2 + T3 < dt) for independent exponentials: probability of at least
// three jumps within dt. Closed form for well-separated rates, 3x3 matrix
// exponential of the phase generator otherwise.
inline double three_jump_prob(double g1, double g2, double g3, double dt) {
    if (!(g1 > 0 && g2 > 0 && g3 > 0)) throw ValidationError("three_jump_prob: rates must be positive");
    if (!(dt >= 0)) throw ValidationError("three_jump_prob: dt must be >= 0");
    const double gmax = std::max({g1, g2, g3});
    const double sep = std::min({std::abs(g1 - g2), std::abs(g1 - g3), std::abs(g2 - g3)});
    double p;
    // the partial-fraction weights scale like (gmax/sep)^2, so clustered rates
    // go through the phase-type matrix exponential instead
    if (sep > 1e-3 * gmax) {
        const double w1 = (g2 / (g2 - g1)) * (g3 / (g3 - g1));
        const double w2 = (g1 / (g1 - g2)) * (g3 / (g3 - g2));
        const double w3 = (g1 / (g1 - g3)) * (g2 / (g2 - g3));
        p = 1.0 - w1 * std::exp(-g1 * dt) - w2 * std::exp(-g2 * dt) - w3 * std::exp(-g3 * dt);
    } else {
        Eigen::Matrix3d gen;
        gen << -g1, g1, 0, 0, -g2, g2, 0, 0, -g3;
        const Eigen::Matrix3d e = (gen * dt).exp();
        p = 1.0 - e.row(0).sum();
    }
    return std::clamp(p, 0.0, 1.0);
}

// Statistics of one jump-probability-controlled random walk, stepping exactly
// like the wave-function engine does for Fock states: same clipping at
// sampling boundaries, same carried suggestion, same draw layout.
struct ChainWalkRecord {
    std::vector<double> t;
    std::vector<int> n;
    long long steps = 0;
    long long full_dt_steps = 0;
    long long jumps_down = 0, jumps_up = 0;
    double sum_dt = 0;
    int final_state = 0;
};

inline ChainWalkRecord run_chain_dp_controlled(int n0, const ChainSpec& spec, double dp, double Dt,
                                               double T, std::uint64_t seed,
                                               std::uint64_t stream = 0) {
    spec.validate();
    if (!(dp > 0 && dp < 1)) throw ValidationError("run_chain_dp_controlled: dp must lie in (0,1)");
    const auto u_max = static_cast<long long>(std::llround(T / Dt));
    if (std::abs(double(u_max) * Dt - T) > 1e-9 * T)
        throw ValidationError("run_chain_dp_controlled: Dt must divide T");

    Philox rng(seed, stream);
    ChainWalkRecord rec;
    int n = n0;
    double t = 0.0;
    rec.t.push_back(0.0);
    rec.n.push_back(n);

    const double q0 = spec.q(n);
    double dt_suggest = (q0 > 0) ? std::min(Dt, dp / q0) : Dt;
    bool at_boundary = true;

    for (long long u = 0; u < u_max; ++u) {
        const double boundary = double(u + 1) * Dt;
        for (;;) {
            const double span = boundary - t;
            const bool clipped = dt_suggest >= span * (1.0 - 1e-12);
            const double dt_eff = clipped ? span : dt_suggest;
            const bool started_at_boundary = at_boundary;

            const ChainStep s = discrete_chain_step(n, dt_eff, dp, spec, rng);
            const int n_before = n;
            n = s.n_next;
            if (s.jump == 0) ++rec.jumps_down;
            if (s.jump == 1) ++rec.jumps_up;
            ++rec.steps;
            rec.sum_dt += dt_eff;
            t += dt_eff;

            const double cap = (spec.q(n_before) > 0)
                                   ? dp / spec.q(n_before)
                                   : std::numeric_limits<double>::infinity();
            const double candidate = clipped ? dt_suggest : 5.0 * dt_eff;
            dt_suggest = std::min(candidate, cap);

            if (t >= boundary - 1e-9 * Dt) {
                if (started_at_boundary && dt_eff >= Dt * (1.0 - 1e-9)) ++rec.full_dt_steps;
                t = boundary;
                at_boundary = true;
                rec.t.push_back(t);
                rec.n.push_back(n);
                break;
            }
            at_boundary = false;
        }
    }
    rec.final_state = n;
    return rec;
}

} // namespace mcwf
