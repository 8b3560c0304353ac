#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <utility>

#include "mcwf/state.hpp"

namespace mcwf {

// Banded operator on the truncated basis, stored one diagonal at a time.
// Band with offset d >= 0 holds entries M(t, t+d); offset d < 0 holds
// M(t+|d|, t). Ladder and number operators are one band each, so products,
// applications and quadratic forms stay O(bands * dim). A dense matrix is
// just the set of all 2*dim-1 bands.
class Multidiagonal {
public:
    explicit Multidiagonal(int dim = 0) : dim_(dim) {
        if (dim < 0) throw DimensionError("Multidiagonal: negative dimension");
    }

    int dim() const { return dim_; }
    bool empty() const { return bands_.empty(); }

    void set_band(int offset, Eigen::VectorXcd values) {
        check_offset(offset);
        if (values.size() != dim_ - std::abs(offset))
            throw DimensionError("Multidiagonal::set_band: band length mismatch");
        if (values.isZero(0.0)) {
            bands_.erase(offset);
            return;
        }
        bands_[offset] = std::move(values);
    }

    const std::map<int, Eigen::VectorXcd>& bands() const { return bands_; }

    bool is_diagonal() const {
        return bands_.size() <= 1 && (bands_.empty() || bands_.begin()->first == 0);
    }

    // y = M x
    void apply(const StateVector& x, StateVector& y) const {
        check_state(x);
        y.setZero(dim_);
        accumulate(x, y, Complex(1.0, 0.0));
    }

    // y += scale * (M x)
    void accumulate(const StateVector& x, StateVector& y, Complex scale) const {
        check_state(x);
        if (y.size() != dim_) throw DimensionError("Multidiagonal::accumulate: output size");
        for (const auto& [d, band] : bands_) {
            const Eigen::Index len = band.size();
            if (d >= 0)
                y.head(len) += scale * band.cwiseProduct(x.segment(d, len));
            else
                y.segment(-d, len) += scale * band.cwiseProduct(x.head(len));
        }
    }

    StateVector operator*(const StateVector& x) const {
        StateVector y;
        apply(x, y);
        return y;
    }

    // <x| M |x>, no normalization applied.
    Complex quadratic_form(const StateVector& x) const {
        check_state(x);
        Complex acc(0.0, 0.0);
        for (const auto& [d, band] : bands_) {
            const Eigen::Index len = band.size();
            if (d >= 0)
                acc += x.head(len).conjugate().cwiseProduct(band).cwiseProduct(x.segment(d, len)).sum();
            else
                acc += x.segment(-d, len).conjugate().cwiseProduct(band).cwiseProduct(x.head(len)).sum();
        }
        return acc;
    }

    Multidiagonal adjoint() const {
        Multidiagonal out(dim_);
        for (const auto& [d, band] : bands_) out.bands_[-d] = band.conjugate();
        return out;
    }

    Multidiagonal& operator*=(Complex s) {
        for (auto& [d, band] : bands_) band *= s;
        return *this;
    }

    friend Multidiagonal operator*(Complex s, Multidiagonal m) {
        m *= s;
        return m;
    }

    Multidiagonal& operator+=(const Multidiagonal& other) {
        if (other.dim_ != dim_) throw DimensionError("Multidiagonal: dimension mismatch");
        for (const auto& [d, band] : other.bands_) {
            auto it = bands_.find(d);
            if (it == bands_.end())
                bands_[d] = band;
            else
                it->second += band;
        }
        return *this;
    }

    friend Multidiagonal operator+(Multidiagonal a, const Multidiagonal& b) {
        a += b;
        return a;
    }

    friend Multidiagonal operator-(Multidiagonal a, const Multidiagonal& b) {
        Multidiagonal nb = b;
        nb *= Complex(-1.0, 0.0);
        a += nb;
        return a;
    }

    // Band convolution: C(r, r+d1+d2) += A(r, r+d1) * B(r+d1, r+d1+d2).
    friend Multidiagonal operator*(const Multidiagonal& a, const Multidiagonal& b) {
        if (a.dim_ != b.dim_) throw DimensionError("Multidiagonal: dimension mismatch");
        const int dim = a.dim_;
        Multidiagonal out(dim);
        for (const auto& [d1, band1] : a.bands_) {
            for (const auto& [d2, band2] : b.bands_) {
                const int d3 = d1 + d2;
                if (std::abs(d3) >= dim) continue;
                Eigen::VectorXcd& band3 = out.bands_.try_emplace(d3, Eigen::VectorXcd::Zero(dim - std::abs(d3))).first->second;
                const int r_lo = std::max({0, -d1, -d3});
                const int r_hi = std::min({dim, dim - d1, dim - d3});
                for (int r = r_lo; r < r_hi; ++r) {
                    const Complex va = (d1 >= 0) ? band1[r] : band1[r + d1];
                    const int k = r + d1;
                    const Complex vb = (d2 >= 0) ? band2[k] : band2[k + d2];
                    band3[std::min(r, r + d3)] += va * vb;
                }
            }
        }
        for (auto it = out.bands_.begin(); it != out.bands_.end();) {
            if (it->second.isZero(0.0))
                it = out.bands_.erase(it);
            else
                ++it;
        }
        return out;
    }

    Eigen::MatrixXcd dense() const {
        Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim_, dim_);
        for (const auto& [d, band] : bands_)
            for (Eigen::Index t = 0; t < band.size(); ++t) {
                if (d >= 0)
                    m(t, t + d) = band[t];
                else
                    m(t - d, t) = band[t];
            }
        return m;
    }

    static Multidiagonal identity(int dim) {
        return diagonal(Eigen::VectorXcd::Ones(dim));
    }

    static Multidiagonal diagonal(Eigen::VectorXcd values) {
        Multidiagonal m(static_cast<int>(values.size()));
        m.set_band(0, std::move(values));
        return m;
    }

    // <n-1| a |n> = sqrt(n)
    static Multidiagonal annihilation(int cutoff) {
        if (cutoff < 1) throw DimensionError("annihilation: cutoff must be >= 1");
        Multidiagonal m(cutoff);
        if (cutoff > 1) {
            Eigen::VectorXcd band(cutoff - 1);
            for (int t = 0; t < cutoff - 1; ++t) band[t] = std::sqrt(double(t + 1));
            m.set_band(1, std::move(band));
        }
        return m;
    }

    static Multidiagonal creation(int cutoff) { return annihilation(cutoff).adjoint(); }

    static Multidiagonal number(int cutoff) {
        Eigen::VectorXcd d(cutoff);
        for (int n = 0; n < cutoff; ++n) d[n] = double(n);
        return diagonal(std::move(d));
    }

    static Multidiagonal number_squared(int cutoff) {
        Eigen::VectorXcd d(cutoff);
        for (int n = 0; n < cutoff; ++n) d[n] = double(n) * double(n);
        return diagonal(std::move(d));
    }

private:
    void check_offset(int offset) const {
        if (std::abs(offset) >= dim_) throw DimensionError("Multidiagonal: offset outside matrix");
    }
    void check_state(const StateVector& x) const {
        if (x.size() != dim_) throw DimensionError("Multidiagonal: state dimension mismatch");
    }

    int dim_;
    std::map<int, Eigen::VectorXcd> bands_;
};

// <psi| op |psi> for a normalized state.
inline Complex expectation(const Multidiagonal& op, const StateVector& psi) {
    return op.quadratic_form(psi);
}

} // namespace mcwf
