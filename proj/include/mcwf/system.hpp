#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mcwf/operators.hpp"

namespace mcwf {

enum class Picture { schroedinger, interaction, nonunitary_interaction };

inline const char* to_string(Picture p) {
    switch (p) {
        case Picture::schroedinger: return "schroedinger";
        case Picture::interaction: return "interaction";
        case Picture::nonunitary_interaction: return "nui";
    }
    return "?";
}

// Output row computed from operator expectation values; four columns per row.
struct Observables {
    std::array<std::string, 4> names{};
    std::vector<Multidiagonal> ops;
    std::function<std::array<double, 4>(std::span<const Complex>)> row;
    int primary = 0; // index into ops of the scalar used for step statistics

    std::array<double, 4> from_state(const StateVector& psi, std::vector<Complex>& scratch) const {
        scratch.resize(ops.size());
        for (std::size_t i = 0; i < ops.size(); ++i) scratch[i] = ops[i].quadratic_form(psi);
        return row(scratch);
    }
};

// A concrete open system as the trajectory drivers see it.
//
// The state handed between steps always lives in the lab frame: pictures are
// applied only inside a single step. The drift callback receives (t, t0) with
// t0 the step anchor, integrates whatever part of H_nH/(i hbar) is not
// diagonal-exact, and the diagonal remainder is applied afterwards as the
// exact factor exp(prop_log * dt). An absent drift means the ODE stage is
// exactly the identity. hbar = 1 throughout.
struct QuantumSystem {
    int dim = 0;
    Picture picture = Picture::schroedinger;
    std::string name;

    std::function<void(double t, double t0, const StateVector&, StateVector&)> drift;

    std::vector<Multidiagonal> jumps;   // lab-frame jump operators
    std::vector<Multidiagonal> jump_sq; // cached J^dag J per channel

    Eigen::VectorXcd prop_log;       // diagonal exponents u; empty = no exact part
    bool prop_linear = false;        // u_n = prop_slope * n + prop_offset (+ top correction)
    Complex prop_slope{0.0, 0.0};
    Complex prop_offset{0.0, 0.0};
    Complex prop_top_extra{0.0, 0.0}; // truncation correction on the last basis level

    Observables obs;

    bool has_drift() const { return static_cast<bool>(drift); }
    bool has_propagator() const { return prop_linear || prop_log.size() > 0; }
    int channels() const { return static_cast<int>(jumps.size()); }

    void cache_jump_squares() {
        jump_sq.clear();
        jump_sq.reserve(jumps.size());
        for (const auto& j : jumps) jump_sq.push_back(j.adjoint() * j);
    }

    // psi *= exp(u * dt), elementwise.
    void apply_propagator(double dt, StateVector& psi) const {
        if (prop_linear) {
            const Complex z = std::exp(prop_slope * dt);
            Complex f = std::exp(prop_offset * dt);
            if (!std::isfinite(std::abs(z)) || !std::isfinite(std::abs(f)))
                throw NumericError("apply_propagator: exponential factor overflow");
            const Eigen::Index last = psi.size() - 1;
            for (Eigen::Index i = 0; i < last; ++i) {
                psi[i] *= f;
                f *= z;
            }
            f *= std::exp(prop_top_extra * dt);
            if (!std::isfinite(std::abs(f)))
                throw NumericError("apply_propagator: exponential factor overflow");
            psi[last] *= f;
        } else if (prop_log.size() > 0) {
            for (Eigen::Index i = 0; i < psi.size(); ++i) {
                const Complex f = std::exp(prop_log[i] * dt);
                if (!std::isfinite(std::abs(f)))
                    throw NumericError("apply_propagator: exponential factor overflow");
                psi[i] *= f;
            }
        }
    }

    // Diagonal exponent u_i of the exact part.
    Complex prop_exponent(int i) const {
        if (prop_linear) {
            Complex u = prop_slope * double(i) + prop_offset;
            if (i == dim - 1) u += prop_top_extra;
            return u;
        }
        if (prop_log.size() > 0) return prop_log[i];
        return Complex(0.0, 0.0);
    }

    // Propagator factor exp(u_i * dt) for one basis label.
    Complex propagator_factor(int i, double dt) const { return std::exp(prop_exponent(i) * dt); }

    // r_m = <J_m^dag J_m> on a state with squared norm n2.
    void jump_rates(const StateVector& psi, double n2, std::vector<double>& r) const {
        r.resize(jump_sq.size());
        for (std::size_t m = 0; m < jump_sq.size(); ++m) {
            double v = jump_sq[m].quadratic_form(psi).real() / n2;
            if (!std::isfinite(v) || v < -1e-12)
                throw NumericError("jump_rates: invalid rate in channel " + std::to_string(m));
            r[m] = std::max(0.0, v);
        }
    }
};

} // namespace mcwf
