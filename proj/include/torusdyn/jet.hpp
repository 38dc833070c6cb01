#pragma once
// Truncated multivariate Taylor polynomials of total degree 3.
//
// A Jet<T, N> stores the coefficients c_a of x^a / (no factorials) for every
// multi-index |a| <= 3 in N variables, so c_a = d^a f / a!.

#include <array>
#include <cmath>
#include <cstddef>

#include <Eigen/Dense>

namespace torusdyn {

namespace detail {

template <int N>
struct JetTable {
    static constexpr int count() {
        int c = 0;
        for (int d = 0; d <= 3; ++d) {
            // C(N + d - 1, d)
            int num = 1, den = 1;
            for (int i = 0; i < d; ++i) { num *= (N + i); den *= (i + 1); }
            c += num / den;
        }
        return c;
    }
    static constexpr int size = count();

    std::array<std::array<int, N>, size> exps{};
    std::array<int, size> degree{};
    // product table: for i, j with deg_i + deg_j <= 3 -> index, else -1
    std::array<std::array<int, size>, size> prod{};
    std::array<int, N> linear{};
    std::array<std::array<int, N>, N> quad{};
    std::array<std::array<std::array<int, N>, N>, N> cubic{};

    constexpr JetTable() {
        int n = 0;
        std::array<int, N> e{};
        for (int d = 0; d <= 3; ++d) enumerate(e, 0, d, n);
        for (int i = 0; i < size; ++i)
            for (int j = 0; j < size; ++j) {
                prod[i][j] = -1;
                if (degree[i] + degree[j] > 3) continue;
                std::array<int, N> s{};
                for (int v = 0; v < N; ++v) s[v] = exps[i][v] + exps[j][v];
                prod[i][j] = find(s);
            }
        for (int a = 0; a < N; ++a) {
            std::array<int, N> s{};
            s[a] = 1;
            linear[a] = find(s);
            for (int b = 0; b < N; ++b) {
                std::array<int, N> q{};
                q[a] += 1; q[b] += 1;
                quad[a][b] = find(q);
                for (int c = 0; c < N; ++c) {
                    std::array<int, N> r = q;
                    r[c] += 1;
                    cubic[a][b][c] = find(r);
                }
            }
        }
    }

    constexpr void enumerate(std::array<int, N>& e, int var, int remaining, int& n) {
        if (var == N - 1) {
            e[var] = remaining;
            exps[n] = e;
            int d = 0;
            for (int v = 0; v < N; ++v) d += e[v];
            degree[n] = d;
            ++n;
            e[var] = 0;
            return;
        }
        for (int k = remaining; k >= 0; --k) {
            e[var] = k;
            enumerate(e, var + 1, remaining - k, n);
        }
        e[var] = 0;
    }

    constexpr int find(const std::array<int, N>& s) const {
        for (int i = 0; i < size; ++i) {
            bool eq = true;
            for (int v = 0; v < N; ++v) eq = eq && exps[i][v] == s[v];
            if (eq) return i;
        }
        return -1;
    }
};

template <int N>
inline constexpr JetTable<N> jet_table{};

}  // namespace detail

template <typename T, int N>
class Jet {
public:
    static constexpr int size = detail::JetTable<N>::size;
    using Table = detail::JetTable<N>;
    using Vec = Eigen::Matrix<T, N, 1>;
    using Mat = Eigen::Matrix<T, N, N>;

    Jet() { c_.fill(T(0)); }
    Jet(T constant) {  // NOLINT(google-explicit-constructor)
        c_.fill(T(0));
        c_[0] = constant;
    }

    static Jet variable(int i, T value) {
        Jet j(value);
        j.c_[table().linear[i]] = T(1);
        return j;
    }

    static const Table& table() { return detail::jet_table<N>; }

    T& operator[](int i) { return c_[i]; }
    const T& operator[](int i) const { return c_[i]; }

    T value() const { return c_[0]; }

    Vec gradient() const {
        Vec g;
        for (int a = 0; a < N; ++a) g(a) = c_[table().linear[a]];
        return g;
    }

    Mat hessian() const {
        Mat h;
        for (int a = 0; a < N; ++a)
            for (int b = 0; b < N; ++b)
                h(a, b) = c_[table().quad[a][b]] * (a == b ? T(2) : T(1));
        return h;
    }

    // Third partial derivative d^3 f / dx_a dx_b dx_c.
    T third(int a, int b, int c) const {
        int m[N] = {};
        ++m[a]; ++m[b]; ++m[c];
        T fact = 1;
        for (int v = 0; v < N; ++v) fact *= (m[v] == 2 ? 2 : (m[v] == 3 ? 6 : 1));
        return c_[table().cubic[a][b][c]] * fact;
    }

    Jet operator-() const {
        Jet r;
        for (int i = 0; i < size; ++i) r.c_[i] = -c_[i];
        return r;
    }
    Jet& operator+=(const Jet& o) {
        for (int i = 0; i < size; ++i) c_[i] += o.c_[i];
        return *this;
    }
    Jet& operator-=(const Jet& o) {
        for (int i = 0; i < size; ++i) c_[i] -= o.c_[i];
        return *this;
    }
    Jet& operator*=(T s) {
        for (int i = 0; i < size; ++i) c_[i] *= s;
        return *this;
    }
    Jet& operator*=(const Jet& o) { return *this = *this * o; }
    Jet& operator/=(const Jet& o) { return *this = *this / o; }

    friend Jet operator+(Jet a, const Jet& b) { return a += b; }
    friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
    friend Jet operator+(Jet a, T s) { a.c_[0] += s; return a; }
    friend Jet operator+(T s, Jet a) { a.c_[0] += s; return a; }
    friend Jet operator-(Jet a, T s) { a.c_[0] -= s; return a; }
    friend Jet operator-(T s, const Jet& a) { Jet r = -a; r.c_[0] += s; return r; }
    friend Jet operator*(Jet a, T s) { return a *= s; }
    friend Jet operator*(T s, Jet a) { return a *= s; }
    friend Jet operator/(Jet a, T s) { return a *= T(1) / s; }

    friend Jet operator*(const Jet& a, const Jet& b) {
        Jet r;
        const auto& tb = table();
        for (int i = 0; i < size; ++i) {
            if (a.c_[i] == T(0)) continue;
            for (int j = 0; j < size; ++j) {
                const int k = tb.prod[i][j];
                if (k >= 0) r.c_[k] += a.c_[i] * b.c_[j];
            }
        }
        return r;
    }

    // Compose with a univariate function given its derivatives f0..f3 at value().
    Jet compose(T f0, T f1, T f2, T f3) const {
        Jet d = *this;
        d.c_[0] = T(0);
        const Jet d2 = d * d;
        const Jet d3 = d2 * d;
        Jet r(f0);
        r += d * f1;
        r += d2 * (f2 / T(2));
        r += d3 * (f3 / T(6));
        return r;
    }

    friend Jet operator/(const Jet& a, const Jet& b) { return a * inv(b); }
    friend Jet operator/(T s, const Jet& b) { return inv(b) * s; }

    friend Jet inv(const Jet& a) {
        const T v = a.c_[0];
        const T i1 = T(1) / v;
        return a.compose(i1, -i1 * i1, T(2) * i1 * i1 * i1, T(-6) * i1 * i1 * i1 * i1);
    }
    friend Jet sin(const Jet& a) {
        using std::sin; using std::cos;
        const T s = sin(a.c_[0]), c = cos(a.c_[0]);
        return a.compose(s, c, -s, -c);
    }
    friend Jet cos(const Jet& a) {
        using std::sin; using std::cos;
        const T s = sin(a.c_[0]), c = cos(a.c_[0]);
        return a.compose(c, -s, -c, s);
    }
    friend Jet exp(const Jet& a) {
        using std::exp;
        const T e = exp(a.c_[0]);
        return a.compose(e, e, e, e);
    }
    friend Jet sqrt(const Jet& a) {
        using std::sqrt;
        const T s = sqrt(a.c_[0]);
        return a.compose(s, T(0.5) / s, T(-0.25) / (s * a.c_[0]),
                         T(0.375) / (s * a.c_[0] * a.c_[0]));
    }

private:
    std::array<T, size> c_;
};

using Jet2 = Jet<double, 2>;
using Jet4 = Jet<double, 4>;

// Scalar helpers so templated code can treat double and Jet uniformly.
inline double value_of(double v) { return v; }
template <typename T, int N>
T value_of(const Jet<T, N>& j) { return j.value(); }

// Evaluate a 2-variable polynomial (given as a Jet2 centered at the origin of
// its displacement) on displacement arguments d1, d2 of any scalar type.
template <typename S>
S compose_jet2(const Jet2& p, const S& d1, const S& d2) {
    const auto& tb = Jet2::table();
    S r = S(0.0);
    // powers of d1, d2 up to 3
    S pw1[4] = {S(1.0), d1, d1 * d1, S(0.0)};
    pw1[3] = pw1[2] * d1;
    S pw2[4] = {S(1.0), d2, d2 * d2, S(0.0)};
    pw2[3] = pw2[2] * d2;
    for (int i = 0; i < Jet2::size; ++i) {
        if (p[i] == 0.0) continue;
        r += pw1[tb.exps[i][0]] * pw2[tb.exps[i][1]] * p[i];
    }
    return r;
}

}  // namespace torusdyn
