#pragma once
// Univariate truncated Taylor series and Chebyshev interpolants.

#include <cmath>
#include <vector>

#include "torusdyn/errors.hpp"

namespace torusdyn {

// Coefficients c_k of sum c_k s^k, truncated at a fixed degree.
using Taylor1 = std::vector<double>;

inline Taylor1 taylor_mul(const Taylor1& a, const Taylor1& b) {
    Taylor1 r(a.size(), 0.0);
    for (std::size_t k = 0; k < r.size(); ++k)
        for (std::size_t j = 0; j <= k; ++j) r[k] += a[j] * b[k - j];
    return r;
}

inline Taylor1 taylor_div(const Taylor1& a, const Taylor1& b) {
    Taylor1 r(a.size(), 0.0);
    for (std::size_t k = 0; k < r.size(); ++k) {
        double s = a[k];
        for (std::size_t j = 1; j <= k; ++j) s -= b[j] * r[k - j];
        r[k] = s / b[0];
    }
    return r;
}

inline Taylor1 taylor_exp(const Taylor1& a) {
    Taylor1 r(a.size(), 0.0);
    r[0] = std::exp(a[0]);
    for (std::size_t k = 1; k < r.size(); ++k) {
        double s = 0.0;
        for (std::size_t j = 1; j <= k; ++j) s += double(j) * a[j] * r[k - j];
        r[k] = s / double(k);
    }
    return r;
}

inline Taylor1 taylor_sqrt(const Taylor1& a) {
    Taylor1 r(a.size(), 0.0);
    r[0] = std::sqrt(a[0]);
    for (std::size_t k = 1; k < r.size(); ++k) {
        double s = a[k];
        for (std::size_t j = 1; j < k; ++j) s -= r[j] * r[k - j];
        r[k] = s / (2.0 * r[0]);
    }
    return r;
}

// d/ds of the series; the top coefficient is lost.
inline Taylor1 taylor_derivative(const Taylor1& a) {
    Taylor1 r(a.size(), 0.0);
    for (std::size_t k = 1; k < a.size(); ++k) r[k - 1] = double(k) * a[k];
    return r;
}

// f(t) for a jet t whose value is the expansion point of the series.
template <typename J>
J taylor_apply(const Taylor1& c, const J& t) {
    auto at = [&](std::size_t k) { return k < c.size() ? c[k] : 0.0; };
    return t.compose(at(0), at(1), 2.0 * at(2), 6.0 * at(3));
}

class Chebyshev {
public:
    Chebyshev() = default;

    static std::vector<double> nodes(double a, double b, int n) {
        std::vector<double> t(n);
        for (int j = 0; j < n; ++j) t[j] = 0.5 * (a + b) + 0.5 * (b - a) * std::cos(M_PI * (j + 0.5) / n);
        return t;
    }

    // Interpolant through values sampled at nodes(a, b, n).
    static Chebyshev fit(double a, double b, const std::vector<double>& values) {
        const int n = static_cast<int>(values.size());
        Chebyshev c;
        c.a_ = a;
        c.b_ = b;
        c.c_.assign(n, 0.0);
        for (int k = 0; k < n; ++k) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += values[j] * std::cos(M_PI * k * (j + 0.5) / n);
            c.c_[k] = 2.0 * s / n;
        }
        c.c_[0] *= 0.5;
        return c;
    }

    double lower() const { return a_; }
    double upper() const { return b_; }

    double operator()(double t) const {
        const double s = (2.0 * t - a_ - b_) / (b_ - a_);
        double b1 = 0.0, b2 = 0.0;
        for (std::size_t k = c_.size(); k-- > 1;) {
            const double b0 = 2.0 * s * b1 - b2 + c_[k];
            b2 = b1;
            b1 = b0;
        }
        return s * b1 - b2 + c_[0];
    }

    Chebyshev derivative() const {
        Chebyshev d;
        d.a_ = a_;
        d.b_ = b_;
        const std::size_t n = c_.size();
        d.c_.assign(n, 0.0);
        if (n < 2) return d;
        std::vector<double> e(n + 1, 0.0);
        for (std::size_t k = n - 1; k >= 1; --k) e[k - 1] = e[k + 1] + 2.0 * double(k) * c_[k];
        e[0] *= 0.5;
        const double scale = 2.0 / (b_ - a_);
        for (std::size_t k = 0; k < n; ++k) d.c_[k] = e[k] * scale;
        return d;
    }

private:
    double a_ = -1.0, b_ = 1.0;
    std::vector<double> c_;
};

// A Chebyshev interpolant with its derivatives precomputed, for Taylor expansion.
class ChebyshevCurve {
public:
    ChebyshevCurve() = default;
    ChebyshevCurve(const Chebyshev& f, int max_derivative) {
        chain_.push_back(f);
        for (int k = 1; k <= max_derivative; ++k) chain_.push_back(chain_.back().derivative());
    }
    double operator()(double t, int derivative = 0) const { return chain_.at(derivative)(t); }
    // f^(k)(t)/k! for k = 0..degree
    Taylor1 taylor(double t, int degree) const {
        Taylor1 r(degree + 1);
        double fact = 1.0;
        for (int k = 0; k <= degree; ++k) {
            if (k > 0) fact *= k;
            r[k] = chain_.at(k)(t) / fact;
        }
        return r;
    }

private:
    std::vector<Chebyshev> chain_;
};

}  // namespace torusdyn
