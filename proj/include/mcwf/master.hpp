#pragma once

#include <Eigen/Eigenvalues>
#include <cmath>

#include "mcwf/ode.hpp"
#include "mcwf/system.hpp"
#include "mcwf/trajectory.hpp"

namespace mcwf {

using DensityMatrix = Eigen::MatrixXcd;

// Hermitian within 1e-10, unit trace within 1e-8, eigenvalues >= -1e-8.
inline void check_density_invariants(const DensityMatrix& rho) {
    const double herm = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
    if (herm > 1e-10)
        throw NumericError("density matrix not Hermitian; worst violation " + std::to_string(herm));
    const double tr = std::abs(rho.trace() - Complex(1.0, 0.0));
    if (tr > 1e-8)
        throw NumericError("density matrix trace off unity by " + std::to_string(tr));
    Eigen::SelfAdjointEigenSolver<DensityMatrix> es(0.5 * (rho + rho.adjoint()),
                                                    Eigen::EigenvaluesOnly);
    const double lam = es.eigenvalues().minCoeff();
    if (lam < -1e-8)
        throw NumericError("density matrix negative eigenvalue " + std::to_string(lam));
}

inline Complex trace_product(const Multidiagonal& op, const DensityMatrix& rho) {
    Complex acc(0, 0);
    for (const auto& [off, band] : op.bands()) {
        for (Eigen::Index s = 0; s < band.size(); ++s) {
            const Eigen::Index r = off >= 0 ? s : s - off;
            const Eigen::Index c = off >= 0 ? s + off : s;
            acc += band[s] * rho(c, r);
        }
    }
    return acc;
}

namespace detail {

template <typename ApplyCol>
inline void apply_columns(const ApplyCol& apply, const Eigen::Ref<const DensityMatrix>& in,
                          DensityMatrix& out, StateVector& colin, StateVector& colout) {
    const Eigen::Index d = in.rows();
    out.resize(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
        colin = in.col(j);
        apply(colin, colout);
        out.col(j) = colout;
    }
}

} // namespace detail

// drho/dt = (H_nH rho / i + h.c.) + sum_m J_m rho J_m^dag, assembled from the
// same drift and jump operators the trajectory engines use. Without an exact
// part this is the full generator and is traceless. In an anchored picture it
// is the generator of the picture state: the diagonal of H_nH is excluded
// here (it cancels against the frame rotation) and is applied afterwards as
// the factors exp(u dt) on both sides, while the jump operators are
// conjugated with the same factors, U^-1(tau) J U(tau).
inline void lindblad_rhs(const QuantumSystem& sys, const Eigen::Ref<const DensityMatrix>& rho,
                         double t, double t0, DensityMatrix& drho) {
    const Eigen::Index d = rho.rows();
    if (rho.cols() != d || d != sys.dim) throw DimensionError("lindblad_rhs: dimension mismatch");
    const double tau = t - t0;

    static thread_local DensityMatrix work, work2, rho_adj;
    static thread_local StateVector colin, colout, scaled;
    static thread_local Eigen::VectorXcd factors;

    drho.setZero(d, d);
    rho_adj = rho.adjoint();

    if (sys.has_drift()) {
        const auto apply_drift = [&](const StateVector& x, StateVector& y) {
            sys.drift(t, t0, x, y);
        };
        detail::apply_columns(apply_drift, rho, work, colin, colout);
        drho += work; // A rho with A = H_nH/i (non-diagonal part)
        detail::apply_columns(apply_drift, rho_adj, work, colin, colout);
        drho += work.adjoint(); // rho A^dag = (A rho^dag)^dag
    }
    if (!sys.jumps.empty()) {
        const bool picture = sys.has_propagator() && tau != 0.0;
        if (picture) {
            factors.resize(d);
            for (Eigen::Index i = 0; i < d; ++i)
                factors[i] = sys.propagator_factor(static_cast<int>(i), tau);
        }
        for (const auto& jump : sys.jumps) {
            const auto apply_jump = [&](const StateVector& x, StateVector& y) {
                if (!picture) {
                    jump.apply(x, y);
                } else {
                    scaled = factors.cwiseProduct(x);
                    jump.apply(scaled, y);
                    y = y.cwiseQuotient(factors);
                }
            };
            detail::apply_columns(apply_jump, rho, work, colin, colout); // J rho
            detail::apply_columns(apply_jump, work.adjoint().eval(), work2, colin, colout);
            drho += work2.adjoint(); // J rho J^dag
        }
    }
}

// Direct integration of the master equation, sampled on the grid u * Dt.
// Inside one adaptive step the picture is anchored at the step start and the
// exact diagonal factors are applied to both sides afterwards, so the stored
// rho is always the lab-frame state. Re-symmetrized at sampling instants only.
inline SampleTable evolve_master(const DensityMatrix& rho0, const QuantumSystem& sys, double Dt,
                                 double T, const StepControl& ode_ctl) {
    ode_ctl.validate();
    if (!(Dt > 0) || !(Dt <= T)) throw ValidationError("evolve_master: need 0 < Dt <= T");
    const auto u_max = static_cast<long long>(std::llround(T / Dt));
    if (std::abs(double(u_max) * Dt - T) > 1e-9 * T)
        throw ValidationError("evolve_master: Dt must divide T");
    check_density_invariants(rho0);

    const Eigen::Index d = rho0.rows();
    DensityMatrix rho = rho0;
    DensityMatrix drho(d, d);
    CashKarp ck;
    std::vector<Complex> scratch;

    SampleTable table;
    table.names = sys.obs.names;

    const auto sample = [&](double tt) {
        rho = (0.5 * (rho + rho.adjoint())).eval();
        check_density_invariants(rho);
        scratch.resize(sys.obs.ops.size());
        for (std::size_t i = 0; i < sys.obs.ops.size(); ++i)
            scratch[i] = trace_product(sys.obs.ops[i], rho);
        table.t.push_back(tt);
        table.rows.push_back(sys.obs.row(scratch));
    };

    sample(0.0);

    double dt_suggest = Dt;
    double t = 0.0;
    StateVector flat(d * d);
    for (long long u = 0; u < u_max; ++u) {
        const double boundary = double(u + 1) * Dt;
        while (t < boundary - 1e-9 * Dt) {
            const double span = boundary - t;
            const bool clipped = dt_suggest >= span * (1.0 - 1e-12);
            const double dt_try = clipped ? span : dt_suggest;

            flat = Eigen::Map<const StateVector>(rho.data(), d * d);
            const double t_anchor = t;
            const auto rhs = [&](double tt, const StateVector& x, StateVector& dx) {
                lindblad_rhs(sys, Eigen::Map<const DensityMatrix>(x.data(), d, d), tt, t_anchor,
                             drho);
                dx = Eigen::Map<const StateVector>(drho.data(), d * d);
            };
            const StepResult res = ck.step(rhs, flat, t, dt_try, ode_ctl);
            rho = Eigen::Map<const DensityMatrix>(flat.data(), d, d);
            if (sys.has_propagator()) {
                for (Eigen::Index i = 0; i < d; ++i) {
                    const Complex f = sys.propagator_factor(static_cast<int>(i), res.dt_did);
                    rho.row(i) *= f;
                    rho.col(i) *= std::conj(f);
                }
            }
            t += res.dt_did;
            const bool shrank = res.dt_did < dt_try * (1.0 - 1e-12);
            if (!(clipped && !shrank)) dt_suggest = res.dt_next;
        }
        t = boundary;
        sample(t);
    }
    return table;
}

} // namespace mcwf
