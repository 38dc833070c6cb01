#pragma once
// Localised perturbation potentials along a periodic orbit and their first-order effect
// on the flow and on the transverse monodromy.

#include <memory>
#include <utility>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "torusdyn/orbit.hpp"
#include "torusdyn/series.hpp"

namespace torusdyn {

// Derivative of order 0, 1 or 2 of phi((t - center)/width)/width, phi(u) = C exp(-1/(1 - u^2)).
class MollifiedDelta {
public:
    MollifiedDelta(double center, double width, int order);

    double center() const { return center_; }
    double width() const { return width_; }
    int order() const { return order_; }

    double operator()(double t) const;
    // Taylor coefficients in (t - s) about s.
    Taylor1 taylor(double s, int degree) const;
    template <typename J>
    J operator()(const J& t) const {
        return taylor_apply(taylor(value_of(t), 3), t);
    }

    // Integral of g times this function.
    template <typename G>
    double integrate(G&& g) const;

    // Integral of exp(-1/(1 - u^2)) over (-1, 1).
    static double profile_mass();

private:
    double center_, width_;
    int order_;
};

// Coordinates (t, z) near a segment of the configuration curve of an orbit:
// x = base(t) + z normal(t), with t the orbit time.
class TubularChart {
public:
    static TubularChart build(const MechanicalSystem& sys, const PeriodicOrbit& orbit, double t0, double half_width,
                              double tube_radius, const IntegratorOptions& integ = {});

    double t0() const { return t0_; }
    double half_width() const { return half_width_; }
    double tube_radius() const { return tube_radius_; }
    double reach() const { return reach_; }

    Vec2 base(double t) const { return {x_[0](t), x_[1](t)}; }
    Vec2 velocity(double t) const { return {x_[0](t, 1), x_[1](t, 1)}; }
    Vec2 momentum(double t) const { return {p_[0](t), p_[1](t)}; }
    Vec2 normal(double t) const;
    Vec2 normal_rate(double t) const;
    Vec2 to_config(double t, double z) const { return base(t) + z * normal(t); }

    // Copy of x shifted by multiples of 2 pi to lie nearest base(t0).
    Vec2 lift(const Vec2& x) const;
    // (t, z) of a configuration point; ChartError outside the tube or the t-range.
    Vec2 coordinates(const Vec2& x) const;
    // Same, propagated to jets; x1, x2 must be jets at a lifted point inside the tube.
    template <typename J>
    std::pair<J, J> coordinates(const J& x1, const J& x2) const;
    // Quick test: can x be within the tube at all.
    bool may_contain(const Vec2& x) const;

    // Taylor series about t of the base curve, its normal and of pi(t) = (velocity.p, normal.p).
    std::array<Taylor1, 2> base_taylor(double t, int degree) const;
    std::array<Taylor1, 2> normal_taylor(double t, int degree) const;
    std::array<Taylor1, 2> pi_taylor(double t, int degree) const;

private:
    double t0_ = 0, half_width_ = 0, tube_radius_ = 0, reach_ = 0;
    std::array<ChebyshevCurve, 2> x_, p_;
    std::vector<double> sample_t_;
    std::vector<Vec2> sample_x_;
};

// f(x) = cutoff(z) * scale * z^power * sum_i poly_i(t - center) delta^(k_i)(t) in tube coordinates.
class TubePotential final : public PotentialTerm {
public:
    struct Term {
        int delta_order = 0;
        std::vector<double> poly;  // coefficients in (t - center)
    };

    TubePotential(std::shared_ptr<const TubularChart> chart, double center, double width, std::vector<Term> terms,
                  int z_power, double scale, std::string kind);

    Jet2 jet(double x1, double x2) const override;
    std::string kind() const override { return kind_; }
    Support support() const override;

    const TubularChart& chart() const { return *chart_; }
    std::shared_ptr<const TubularChart> chart_ptr() const { return chart_; }
    double center() const { return center_; }
    double width() const { return width_; }
    std::pair<double, double> time_support() const { return {center_ - width_, center_ + width_}; }

private:
    std::shared_ptr<const TubularChart> chart_;
    double center_, width_;
    std::vector<Term> terms_;
    std::vector<MollifiedDelta> deltas_;  // one per order 0..2
    int z_power_;
    double scale_;
    std::string kind_;
};

using TubePotentialPtr = std::shared_ptr<const TubePotential>;

// Integrator options that resolve the time support of f along its orbit with fine steps.
IntegratorOptions resolve_support(IntegratorOptions base, const TubePotential& f);

template <typename G>
double MollifiedDelta::integrate(G&& g) const {
    boost::math::quadrature::tanh_sinh<double> quad;
    return quad.integrate([&](double t) { return g(t) * (*this)(t); }, center_ - width_, center_ + width_);
}

template <typename J>
std::pair<J, J> TubularChart::coordinates(const J& x1, const J& x2) const {
    const Vec2 raw(value_of(x1), value_of(x2));
    const Vec2 shift = lift(raw) - raw;
    const J X1 = x1 + shift(0), X2 = x2 + shift(1);
    const Vec2 tz = coordinates(raw);
    const auto bt = base_taylor(tz(0), 4);
    const Taylor1 v1 = taylor_derivative(bt[0]), v2 = taylor_derivative(bt[1]);
    const Taylor1 a1 = taylor_derivative(v1), a2 = taylor_derivative(v2);
    // Newton on (x - base(t)).base'(t) = 0 in jet arithmetic
    J T = J(tz(0));
    for (int it = 0; it < 3; ++it) {
        const J d1 = X1 - taylor_apply(bt[0], T), d2 = X2 - taylor_apply(bt[1], T);
        const J w1 = taylor_apply(v1, T), w2 = taylor_apply(v2, T);
        const J G = d1 * w1 + d2 * w2;
        const J dG = -(w1 * w1 + w2 * w2) + d1 * taylor_apply(a1, T) + d2 * taylor_apply(a2, T);
        T = T - G / dG;
    }
    const auto nt = normal_taylor(tz(0), 3);
    const J Z = (X1 - taylor_apply(bt[0], T)) * taylor_apply(nt[0], T) +
                (X2 - taylor_apply(bt[1], T)) * taylor_apply(nt[1], T);
    return {T, Z};
}

struct PerturbOptions {
    OrbitOptions orbit{};
    double eps_delta = 0.0;     // 0: 1e-2 * period
    double tube_radius = 0.2;
    double margin = 1e-3;       // required |lambda^m - 1| after repair
};

// Throws SupportOverlapError when other passes of the orbit come near the tube segment.
std::shared_ptr<const TubularChart> make_orbit_chart(const MechanicalSystem& sys, const PeriodicOrbit& orbit,
                                                     double t0, double eps_delta, double tube_radius,
                                                     const IntegratorOptions& integ = {});

// h = sigma(z) (alpha(t) delta(t) + beta(t) delta'(t)) z; alpha, beta are polynomials in (t - t0).
TubePotentialPtr build_h_alpha_beta(std::shared_ptr<const TubularChart> chart, const std::vector<double>& alpha,
                                    const std::vector<double>& beta, double eps_delta);

// dpsi_T int_0^T (dpsi_t)^{-1} (0, grad h(x(t))) dt: the first-order change of psi_T(theta0)
// under H + l h, up to sign convention on l.
Vec4 B_of_h(const MechanicalSystem& sys, const PeriodicOrbit& orbit, const PotentialTerm& h,
            const std::vector<std::pair<double, double>>& support = {}, const IntegratorOptions& integ = {});

// Closed forms of B in the delta limit. alpha, beta, beta_dot are covectors at x(t0).
std::pair<Vec4, Vec4> limit_B_formulas(const MechanicalSystem& sys, const PeriodicOrbit& orbit, double t0,
                                       const Vec2& alpha, const Vec2& beta, const Vec2& beta_dot,
                                       const IntegratorOptions& integ = {});
// Scalar coefficients along the chart normal.
std::pair<Vec4, Vec4> limit_B_formulas(const MechanicalSystem& sys, const PeriodicOrbit& orbit,
                                       const TubularChart& chart, double alpha1, double beta1, double beta1_dot,
                                       const IntegratorOptions& integ = {});

struct ComplementStudy {
    double t0 = 0.0, eps_delta = 0.0;
    Vec4 B_alpha = Vec4::Zero(), B_beta = Vec4::Zero();        // h with alpha = 1, beta = 1
    Vec4 limit_alpha = Vec4::Zero(), limit_beta = Vec4::Zero();
    double tangency = 0.0;          // max |dH . B| / |B| over both
    Mat2 gram = Mat2::Zero();       // of the (u2, u2s) frame components
    int gram_rank = 0;
    double flow_residual = 0.0;     // relative least-squares residual of X = c1 B_alpha + c2 B_beta
    double limit_error_alpha = 0.0, limit_error_beta = 0.0;  // relative, against the delta limit
};

// B of the two generators h_alpha, h_beta at orbit time t0 and the complement checks.
ComplementStudy complement_study(const MechanicalSystem& sys, const PeriodicOrbit& orbit, double t0,
                                 double eps_delta, double tube_radius = 0.2, const IntegratorOptions& integ = {},
                                 double rank_tol = 1e-8);

// Z = A - [B, JH] + [C, JH'] + [[C, JH], JH].
Mat4 commutator_Z(const Mat4& A, const Mat4& B, const Mat4& C, const Mat4& JH, const Mat4& JH_dot);
// Single-entry matrix with value -v at row p2, column x2.
Mat4 abc_generator(double v);

// Canonical coordinates at gamma(t1) in which the orbit is (t, 0, 0, 0).
struct AdaptedFrame {
    double t1 = 0.0;
    Vec4 point = Vec4::Zero();
    Mat4 C = Mat4::Identity();       // d(x, p)/d(x_hat, p_hat)
    Vec4 grad = Vec4::Zero();        // gradient of the transformed Hamiltonian; (0, 0, 1, 0)
    Mat4 hess = Mat4::Zero();        // its Hessian
    Mat4 hess_dot = Mat4::Zero();    // derivative of the Hessian along the orbit
};

AdaptedFrame adapted_frame(const MechanicalSystem& sys, const TubularChart& chart, double t1);

// Transverse block of Z from the closed-form entries.
Mat2 pi_of_Z(const AdaptedFrame& frame, double a, double b, double c);
// Same block taken from commutator_Z.
Mat2 pi_of_Z_commutator(const AdaptedFrame& frame, double a, double b, double c);

struct RankResult {
    int rank = 0;
    Vec3 singular_values = Vec3::Zero();
    Mat3 matrix = Mat3::Zero();  // columns a, b, c; rows z11, z12, z21
};
RankResult dS_rank(const AdaptedFrame& frame, double rel_tol = 1e-10);

// f0 = eta(z) (a delta + b delta' + c delta'')(t) z^2 / 2 in tube coordinates.
TubePotentialPtr build_abc_potential(std::shared_ptr<const TubularChart> chart, double t1, double a, double b,
                                     double c, double eps_delta);

// Predicted d/dl of the monodromy at theta0 under H + l f0 (original coordinates).
Mat4 predicted_monodromy_derivative(const MechanicalSystem& sys, const PeriodicOrbit& orbit,
                                    const AdaptedFrame& frame, double a, double b, double c,
                                    const IntegratorOptions& integ = {});
// Transverse block of a monodromy derivative in the orbit frame.
Mat2 project_derivative(const PeriodicOrbit& orbit, const Mat4& dM);

struct NondegeneracyRepair {
    TubePotentialPtr potential;  // null when no perturbation was needed
    double a = 0, b = 0, c = 0;
    double t1 = 0, eps_delta = 0;
    PeriodicOrbit orbit;         // recomputed under H + f0
    Mat2 predicted_dP = Mat2::Identity();
    int max_order = 0;
    double min_margin = 0.0;     // min over m <= max_order of |lambda^m - 1|
    int candidates_tried = 0;
};

double min_root_margin(const Mat2& dP, int max_order);

// Searches (a, b, c) with max |.| <= budget making dP free of m'-th roots of unity for all m' <= 2m.
NondegeneracyRepair perturb_to_nondegenerate(const MechanicalSystem& sys, const PeriodicOrbit& orbit, int m,
                                             double budget, const PerturbOptions& opt = {}, unsigned jobs = 0);

}  // namespace torusdyn
