#pragma once

#include <cmath>
#include <complex>

#include "mcwf/system.hpp"

namespace mcwf {

// Damped harmonic-oscillator mode exchanging photons with a thermal bath,
// optionally driven on or off resonance. kappa sets the timescale.
struct ModeParams {
    int cutoff = 0;
    double kappa = 1.0;
    double nTh = 0.0;
    Complex eta{0.0, 0.0};
    double delta = 0.0;

    void validate() const {
        if (cutoff < 2) throw ValidationError("ModeParams: cutoff must be >= 2");
        if (!(kappa > 0)) throw ValidationError("ModeParams: kappa must be positive");
        if (!(nTh >= 0)) throw ValidationError("ModeParams: nTh must be >= 0");
        if (!std::isfinite(delta) || !std::isfinite(std::abs(eta)))
            throw ValidationError("ModeParams: parameters must be finite");
    }
};

namespace detail {

inline Observables mode_observables(int cutoff) {
    Observables obs;
    obs.names = {"re_a", "im_a", "n", "var_n"};
    obs.ops = {Multidiagonal::annihilation(cutoff), Multidiagonal::number(cutoff),
               Multidiagonal::number_squared(cutoff)};
    obs.primary = 1;
    obs.row = [](std::span<const Complex> e) -> std::array<double, 4> {
        const double n = e[1].real();
        return {e[0].real(), e[0].imag(), n, e[2].real() - n * n};
    };
    return obs;
}

} // namespace detail

// The mode system with jump channels
//   J_0 = sqrt(2 kappa (nTh+1)) a   (emission)
//   J_1 = sqrt(2 kappa nTh) a^dag   (absorption, dropped when nTh = 0)
// and drift H_nH/i = [i delta - kappa(2 nTh + 1)] a^dag a - kappa nTh + eta a^dag - conj(eta) a.
//
// The uniform -kappa nTh term keeps H_nH = H - i/2 sum J^dag J exact, so the
// no-jump norm loss equals the accumulated jump probability; it only rescales
// the norm and drops out of renormalized trajectories.
//
// Pictures: "interaction" moves the Hermitian diagonal (delta a^dag a) into the
// exact propagator; "nui" moves the full diagonal of H_nH there, so with
// eta = 0 the drift vanishes entirely and the step is exact.
inline QuantumSystem make_mode_system(const ModeParams& p, Picture picture) {
    p.validate();
    QuantumSystem sys;
    sys.dim = p.cutoff;
    sys.picture = picture;
    sys.name = "mode";

    const double kq = p.kappa * (2.0 * p.nTh + 1.0);
    const double koff = p.kappa * p.nTh;
    const Complex eta = p.eta;
    const Complex I(0.0, 1.0);

    const auto a = Multidiagonal::annihilation(p.cutoff);
    const auto adag = Multidiagonal::creation(p.cutoff);

    sys.jumps.push_back(std::sqrt(2.0 * p.kappa * (p.nTh + 1.0)) * a);
    if (p.nTh > 0) sys.jumps.push_back(std::sqrt(2.0 * p.kappa * p.nTh) * adag);
    sys.cache_jump_squares();

    // Decay diagonal -1/2 sum J^dag J built from the truncated operators: on
    // the last level a^dag is cut, so the absorption contribution vanishes
    // there. Using the analytic kappa[(2 nTh+1) n + nTh] instead would leak
    // trace out of the top of the basis.
    const auto decay = [&](int n) {
        double v = p.kappa * (p.nTh + 1.0) * double(n);
        if (n < p.cutoff - 1) v += p.kappa * p.nTh * double(n + 1);
        return v;
    };
    const Complex top_extra(p.kappa * p.nTh * double(p.cutoff), 0.0);

    const bool driven = std::abs(eta) > 0;
    switch (picture) {
        case Picture::schroedinger: {
            Multidiagonal core(p.cutoff);
            Eigen::VectorXcd diag(p.cutoff);
            for (int n = 0; n < p.cutoff; ++n) diag[n] = I * p.delta * double(n) - decay(n);
            core = Multidiagonal::diagonal(std::move(diag));
            if (driven) core += eta * adag + (-std::conj(eta)) * a;
            sys.drift = [core](double, double, const StateVector& x, StateVector& dx) {
                core.apply(x, dx);
            };
            break;
        }
        case Picture::interaction: {
            sys.prop_linear = true;
            sys.prop_slope = I * p.delta;
            sys.prop_offset = Complex(0.0, 0.0);
            Multidiagonal core(p.cutoff);
            Eigen::VectorXcd diag(p.cutoff);
            for (int n = 0; n < p.cutoff; ++n) diag[n] = -decay(n);
            core = Multidiagonal::diagonal(std::move(diag));
            const double delta = p.delta;
            sys.drift = [core, adag, a, eta, delta, I](double t, double t0, const StateVector& x,
                                                       StateVector& dx) {
                core.apply(x, dx);
                if (std::abs(eta) > 0) {
                    const double tau = t - t0;
                    adag.accumulate(x, dx, eta * std::exp(-I * delta * tau));
                    a.accumulate(x, dx, -std::conj(eta) * std::exp(I * delta * tau));
                }
            };
            break;
        }
        case Picture::nonunitary_interaction: {
            sys.prop_linear = true;
            sys.prop_slope = I * p.delta - kq;
            sys.prop_offset = Complex(-koff, 0.0);
            sys.prop_top_extra = top_extra;
            if (driven) {
                const Complex c = kq - I * p.delta; // drive coefficient exponent
                sys.drift = [adag, a, eta, c](double t, double t0, const StateVector& x,
                                              StateVector& dx) {
                    const double tau = t - t0;
                    dx.setZero(x.size());
                    adag.accumulate(x, dx, eta * std::exp(c * tau));
                    a.accumulate(x, dx, -std::conj(eta) * std::exp(-c * tau));
                };
            }
            break;
        }
    }

    sys.obs = detail::mode_observables(p.cutoff);
    return sys;
}

// Particle on a line with periodic boundary conditions in a cos^2 optical
// potential, expanded over integer wave numbers k in [-k_cutoff, k_cutoff].
// No dissipation channel; the model exercises the coherent machinery only.
struct ParticleParams {
    int k_cutoff = 0;  // basis spans -k_cutoff .. +k_cutoff
    double omega_rec = 1.0;
    double V = 0.0;
    int K_ratio = 1; // lattice wave number in units of the momentum spacing

    void validate() const {
        if (K_ratio < 1) throw ValidationError("ParticleParams: K_ratio must be >= 1");
        if (k_cutoff < K_ratio)
            throw DimensionError("ParticleParams: k_cutoff must be >= K_ratio to host the coupling");
        if (!(omega_rec > 0)) throw ValidationError("ParticleParams: omega_rec must be positive");
    }
};

// H = omega_rec K^2 + V cos^2(K_lattice x): diagonal omega_rec k^2 + V/2 plus
// V/4 couplings at k -> k +- 2 K_ratio. The interaction picture exponentiates
// the full diagonal; the couplings then carry label-dependent phases
// exp(-+ 4 i omega_rec R (k +- R) tau) relative to the step anchor.
inline QuantumSystem make_particle_system(const ParticleParams& p, Picture picture) {
    p.validate();
    QuantumSystem sys;
    const int dim = 2 * p.k_cutoff + 1;
    sys.dim = dim;
    sys.picture = picture;
    sys.name = "particle";
    const Complex I(0.0, 1.0);
    const int R = p.K_ratio;
    const int shift = 2 * R;
    const auto k_of = [&](int i) { return double(i - p.k_cutoff); };

    Multidiagonal up(dim), down(dim); // k -> k + 2R and k -> k - 2R, unit entries
    if (shift < dim) {
        up.set_band(-shift, Eigen::VectorXcd::Ones(dim - shift));
        down.set_band(shift, Eigen::VectorXcd::Ones(dim - shift));
    }

    if (picture == Picture::schroedinger) {
        Eigen::VectorXcd diag(dim);
        for (int i = 0; i < dim; ++i)
            diag[i] = -I * (p.omega_rec * k_of(i) * k_of(i) + 0.5 * p.V);
        Multidiagonal core = Multidiagonal::diagonal(std::move(diag));
        core += (-I * p.V / 4.0) * up + (-I * p.V / 4.0) * down;
        sys.drift = [core](double, double, const StateVector& x, StateVector& dx) {
            core.apply(x, dx);
        };
    } else {
        // both interaction pictures coincide: H is Hermitian, the diagonal is full
        sys.prop_log.resize(dim);
        for (int i = 0; i < dim; ++i)
            sys.prop_log[i] = -I * (p.omega_rec * k_of(i) * k_of(i) + 0.5 * p.V);
        const double wr = p.omega_rec;
        const int kc = p.k_cutoff;
        Eigen::VectorXd phase_up(dim - shift), phase_dn(dim - shift);
        for (int t = 0; t < dim - shift; ++t) {
            const double k_src_up = double(t - kc);            // entry (t+shift, t): k -> k+2R
            const double k_src_dn = double(t + shift - kc);    // entry (t, t+shift): k -> k-2R
            phase_up[t] = 4.0 * wr * R * (k_src_up + R);
            phase_dn[t] = -4.0 * wr * R * (k_src_dn - R);
        }
        sys.drift = [=](double t, double t0, const StateVector& x, StateVector& dx) {
            const double tau = t - t0;
            dx.setZero(x.size());
            const Complex c = -I * p.V / 4.0;
            for (int j = 0; j + shift < dim; ++j) {
                dx[j + shift] += c * std::exp(I * phase_up[j] * tau) * x[j];
                dx[j] += c * std::exp(I * phase_dn[j] * tau) * x[j + shift];
            }
        };
    }

    Observables obs;
    obs.names = {"re_a", "im_a", "n", "var_n"}; // n/var_n carry wave-number stats
    Eigen::VectorXcd kdiag(dim), k2diag(dim);
    for (int i = 0; i < dim; ++i) {
        kdiag[i] = k_of(i);
        k2diag[i] = k_of(i) * k_of(i);
    }
    obs.ops = {Multidiagonal::diagonal(kdiag), Multidiagonal::diagonal(k2diag)};
    obs.primary = 0;
    obs.row = [](std::span<const Complex> e) -> std::array<double, 4> {
        const double k = e[0].real();
        return {0.0, 0.0, k, e[1].real() - k * k};
    };
    sys.obs = obs;
    return sys;
}

// Gaussian wave packet over the wave-number basis, centered at k0.
inline StateVector particle_gaussian_state(const ParticleParams& p, double k0, double width) {
    const int dim = 2 * p.k_cutoff + 1;
    if (!(width > 0)) return fock_state(int(std::lround(k0)) + p.k_cutoff, dim);
    StateVector psi(dim);
    for (int i = 0; i < dim; ++i) {
        const double k = double(i - p.k_cutoff);
        psi[i] = std::exp(-0.25 * (k - k0) * (k - k0) / (width * width));
    }
    normalize(psi);
    return psi;
}

} // namespace mcwf
