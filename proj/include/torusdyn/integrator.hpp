#pragma once
// Adaptive Runge-Kutta-Fehlberg 7(8) driver on fixed-size states.

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "torusdyn/errors.hpp"

namespace torusdyn {

struct IntegratorOptions {
    double tol = 1e-10;             // absolute and relative step tolerance
    double max_step = 0.0;          // 0 = unbounded
    long max_steps = 5'000'000;
    std::vector<double> breakpoints;  // never stepped over
    // intervals (lo, hi) where |dt| <= fine_max_step
    std::vector<std::pair<double, double>> fine_intervals;
    double fine_max_step = 0.0;
    // configuration discs (center x1, x2, radius) where |dt| <= fine_max_step; the first two
    // state components are read as angles
    std::vector<std::array<double, 3>> fine_discs;
    double fine_disc_margin = 0.25;
};

namespace detail {
inline bool near_fine_disc(const IntegratorOptions& opt, double x1, double x2) {
    constexpr double two_pi = 6.283185307179586;
    for (const auto& d : opt.fine_discs) {
        const double a = std::remainder(x1 - d[0], two_pi), b = std::remainder(x2 - d[1], two_pi);
        if (std::hypot(a, b) < d[2] + opt.fine_disc_margin) return true;
    }
    return false;
}
}  // namespace detail

namespace detail {

// Integrates y from t0 to t1 (either direction). observer(t, y) is called after
// every accepted step and must return false to stop early; the stop time is returned.
template <typename R, std::size_t N, typename Rhs, typename Observer>
double drive(Rhs&& rhs, std::array<R, N>& y, double t0, double t1, const IntegratorOptions& opt,
             Observer&& observer) {
    namespace odeint = boost::numeric::odeint;
    using State = std::array<R, N>;
    if (t0 == t1) return t0;
    const double dir = t1 > t0 ? 1.0 : -1.0;
    auto stepper = odeint::make_controlled(R(opt.tol), R(opt.tol), odeint::runge_kutta_fehlberg78<State, R, State, R>());
    auto system = [&rhs](const State& s, State& ds, R t) { rhs(s, ds, double(t)); };

    std::vector<double> bps;
    for (double b : opt.breakpoints)
        if (dir * (b - t0) > 0 && dir * (t1 - b) > 0) bps.push_back(b);
    std::sort(bps.begin(), bps.end(), [dir](double a, double b) { return dir * a < dir * b; });
    std::size_t next_bp = 0;

    double t = t0;
    double dt = dir * std::min(0.05, std::abs(t1 - t0));
    if (opt.max_step > 0) dt = dir * std::min(std::abs(dt), opt.max_step);
    const double end_eps = 1e-14 * std::max(1.0, std::abs(t1));
    long steps = 0;
    while (dir * (t1 - t) > end_eps) {
        if (++steps > opt.max_steps) throw StiffnessError("integrator exceeded maximum step count");
        while (next_bp < bps.size() && dir * (bps[next_bp] - t) <= end_eps) ++next_bp;
        double target = next_bp < bps.size() ? bps[next_bp] : t1;
        double cap = std::abs(target - t);
        if (opt.max_step > 0) cap = std::min(cap, opt.max_step);
        if (opt.fine_max_step > 0)
            for (const auto& [lo, hi] : opt.fine_intervals) {
                const double probe = t + dir * 1e-12;
                if (probe > lo && probe < hi) cap = std::min(cap, opt.fine_max_step);
                // do not enter a fine interval with a coarse step
                const double edge = dir > 0 ? lo : hi;
                if (dir * (edge - t) > end_eps) cap = std::min(cap, std::abs(edge - t));
            }
        if (opt.fine_max_step > 0 && !opt.fine_discs.empty() &&
            near_fine_disc(opt, double(y[0]), double(y[1])))
            cap = std::min(cap, opt.fine_max_step);
        bool hit_target = false;
        if (std::abs(dt) >= cap) {
            dt = dir * cap;
            hit_target = cap == std::abs(target - t);
        }
        R tr = t, dtr = dt;
        const auto res = stepper.try_step(system, y, tr, dtr);
        t = double(tr);
        dt = double(dtr);
        if (res == odeint::success) {
            if (hit_target) t = target;
            if (!observer(t, static_cast<const State&>(y))) return t;
        } else if (std::abs(dt) < 1e-13 * std::max(1.0, std::abs(t))) {
            std::ostringstream os;
            os << "step size underflow at t = " << t << " (dt = " << dt << ")";
            throw StiffnessError(os.str());
        }
        if (!std::isfinite(y[0])) throw StiffnessError("non-finite state during integration");
    }
    return t;
}

}  // namespace detail

}  // namespace torusdyn
