#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>

#include "mcwf/errors.hpp"

namespace mcwf {

using Complex = std::complex<double>;

// Amplitudes over a truncated basis, label 0..cutoff-1.
using StateVector = Eigen::VectorXcd;

inline double norm_squared(const StateVector& psi) { return psi.squaredNorm(); }

// Rescales psi to unit norm and returns the norm it had before.
inline double normalize(StateVector& psi) {
    const double n2 = psi.squaredNorm();
    if (!(n2 > 0.0)) throw DegenerateStateError("normalize: zero or non-finite norm");
    const double n = std::sqrt(n2);
    psi /= n;
    return n;
}

inline StateVector fock_state(int n, int cutoff) {
    if (cutoff < 1) throw DimensionError("fock_state: cutoff must be >= 1");
    if (n < 0 || n >= cutoff) throw DimensionError("fock_state: label outside basis");
    StateVector psi = StateVector::Zero(cutoff);
    psi[n] = 1.0;
    return psi;
}

struct CoherentState {
    StateVector psi;    // renormalized on the truncated basis
    double tail_weight; // probability weight lost to truncation
};

// Coherent state |alpha> truncated to `cutoff` levels. Reports the tail weight
// rather than truncating silently; a tail above 1e-6 is an error.
inline CoherentState coherent_state(Complex alpha, int cutoff) {
    if (cutoff < 1) throw DimensionError("coherent_state: cutoff must be >= 1");
    StateVector psi(cutoff);
    Complex c = std::exp(-0.5 * std::norm(alpha));
    double kept = 0.0;
    for (int n = 0; n < cutoff; ++n) {
        psi[n] = c;
        kept += std::norm(c);
        c *= alpha / std::sqrt(double(n + 1));
    }
    const double tail = std::max(0.0, 1.0 - kept);
    if (tail >= 1e-6)
        throw TruncationError("coherent_state: truncated tail weight " + std::to_string(tail), tail);
    psi /= std::sqrt(kept);
    return {std::move(psi), tail};
}

} // namespace mcwf
