#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

namespace torusdyn {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kPi = std::numbers::pi;

// Representative in [0, 2*pi).
inline double wrap_angle(double a) {
    double r = std::fmod(a, kTwoPi);
    if (r < 0) r += kTwoPi;
    if (r >= kTwoPi) r -= kTwoPi;
    return r;
}

// Shortest signed difference a - b on the circle, in [-pi, pi).
inline double angle_diff(double a, double b) {
    double d = std::fmod(a - b + kPi, kTwoPi);
    if (d < 0) d += kTwoPi;
    return d - kPi;
}

struct TorusPoint {
    double x1 = 0.0;
    double x2 = 0.0;

    static TorusPoint reduced(double a, double b) { return {wrap_angle(a), wrap_angle(b)}; }
    Vec2 vec() const { return {x1, x2}; }
};

inline double torus_distance(const TorusPoint& a, const TorusPoint& b) {
    return std::hypot(angle_diff(a.x1, b.x1), angle_diff(a.x2, b.x2));
}

// Phase-space states are handled internally as Vec4 (x1, x2, p1, p2) with
// unwrapped angles; PhasePoint is the reduced public form.
struct PhasePoint {
    TorusPoint x;
    Vec2 p = Vec2::Zero();

    static PhasePoint from_state(const Vec4& z) {
        return {TorusPoint::reduced(z(0), z(1)), Vec2(z(2), z(3))};
    }
    Vec4 state() const { return {x.x1, x.x2, p(0), p(1)}; }
    bool finite() const { return std::isfinite(x.x1) && std::isfinite(x.x2) && p.allFinite(); }
};

struct TangentPoint {
    TorusPoint x;
    Vec2 v = Vec2::Zero();
    bool finite() const { return std::isfinite(x.x1) && std::isfinite(x.x2) && v.allFinite(); }
};

// Distance between phase states with angles compared on the torus.
inline double phase_distance(const Vec4& a, const Vec4& b) {
    const double d1 = angle_diff(a(0), b(0));
    const double d2 = angle_diff(a(1), b(1));
    return std::sqrt(d1 * d1 + d2 * d2 + (a.tail<2>() - b.tail<2>()).squaredNorm());
}

// a - b with the angle part reduced to the shortest representative.
inline Vec4 phase_difference(const Vec4& a, const Vec4& b) {
    return {angle_diff(a(0), b(0)), angle_diff(a(1), b(1)), a(2) - b(2), a(3) - b(3)};
}

}  // namespace torusdyn
