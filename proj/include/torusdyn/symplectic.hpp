#pragma once
// Symplectic linear algebra on R^4 with block order (x1, x2, p1, p2).
//
// J = [[0, I], [-I, 0]], X = J grad H, and omega(a, b) = <J a, b>, which gives
// omega(grad H, X) = |grad H|^2.

#include <array>
#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "torusdyn/types.hpp"

namespace torusdyn {

template <typename Scalar = double>
Eigen::Matrix<Scalar, 4, 4> standard_J() {
    Eigen::Matrix<Scalar, 4, 4> J = Eigen::Matrix<Scalar, 4, 4>::Zero();
    J.template block<2, 2>(0, 2).setIdentity();
    J.template block<2, 2>(2, 0) = -Eigen::Matrix<Scalar, 2, 2>::Identity();
    return J;
}

inline Mat2 standard_J2() {
    Mat2 J;
    J << 0, 1, -1, 0;
    return J;
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar omega(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
    using S = typename DerivedA::Scalar;
    return (standard_J<S>() * a).dot(b);
}

// || M^T J M - J ||_inf (max-abs entry).
template <typename Derived>
typename Derived::Scalar symplectic_defect(const Eigen::MatrixBase<Derived>& M) {
    using S = typename Derived::Scalar;
    const auto J = standard_J<S>();
    return (M.transpose() * J * M - J).cwiseAbs().maxCoeff();
}

// Characteristic polynomial det(lambda I - A) = sum_k c[k] lambda^(n-k), c[0] = 1,
// by the Faddeev-LeVerrier recursion.
template <typename Derived>
std::vector<double> characteristic_polynomial(const Eigen::MatrixBase<Derived>& A) {
    const Eigen::Index n = A.rows();
    using MatX = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    const MatX Al = A.template cast<long double>();
    std::vector<long double> c(n + 1, 0.0L);
    c[0] = 1.0L;
    MatX Mk = MatX::Zero(n, n);
    for (Eigen::Index k = 1; k <= n; ++k) {
        Mk = Al * Mk + c[k - 1] * MatX::Identity(n, n);
        c[k] = -(Al * Mk).trace() / static_cast<long double>(k);
    }
    return {c.begin(), c.end()};
}

// Coefficients (highest degree first) of the product of two polynomials.
inline std::vector<double> poly_multiply(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> r(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
    return r;
}

inline std::array<std::complex<double>, 2> eigenvalues2(const Mat2& A) {
    const double tr = A.trace();
    const double det = A.determinant();
    const double disc = 0.25 * tr * tr - det;
    if (disc >= 0) {
        const double s = std::sqrt(disc);
        // stable pair: large root first, small root from the product
        const double big = 0.5 * tr + (tr >= 0 ? s : -s);
        const double small = big != 0.0 ? det / big : 0.5 * tr - (tr >= 0 ? s : -s);
        return {std::complex<double>(big), std::complex<double>(small)};
    }
    const double s = std::sqrt(-disc);
    return {std::complex<double>(0.5 * tr, s), std::complex<double>(0.5 * tr, -s)};
}

}  // namespace torusdyn
