#include "torusdyn/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

#include "torusdyn/parallel.hpp"

namespace torusdyn {

// ---- mollifier ----

double MollifiedDelta::profile_mass() {
    static const double mass = [] {
        boost::math::quadrature::tanh_sinh<double> quad;
        return quad.integrate([](double u) {
            const double q = 1.0 - u * u;
            return q > 0 ? std::exp(-1.0 / q) : 0.0;
        }, -1.0, 1.0);
    }();
    return mass;
}

MollifiedDelta::MollifiedDelta(double center, double width, int order)
    : center_(center), width_(width), order_(order) {
    if (!(width > 0)) throw InvalidInputError("mollifier width must be positive");
    if (order < 0 || order > 2) throw InvalidInputError("mollifier derivative order must be 0, 1 or 2");
}

Taylor1 MollifiedDelta::taylor(double s, int degree) const {
    Taylor1 out(degree + 1, 0.0);
    const double u0 = (s - center_) / width_;
    const double q0 = 1.0 - u0 * u0;
    if (q0 < 2e-3) return out;  // exp(-1/q) underflows every coefficient
    const int D = degree + order_;
    Taylor1 q(D + 1, 0.0), minus_one(D + 1, 0.0);
    q[0] = q0;
    if (D >= 1) q[1] = -2.0 * u0;
    if (D >= 2) q[2] = -1.0;
    minus_one[0] = -1.0;
    Taylor1 phi = taylor_exp(taylor_div(minus_one, q));
    const double C = 1.0 / profile_mass();
    // coefficient j of delta^(order) in (t - s): phi^(order+j)(u0) / (j! w^(order+1+j))
    for (int j = 0; j <= degree; ++j) {
        double falling = 1.0;  // (order+j)! / j!
        for (int i = j + 1; i <= order_ + j; ++i) falling *= i;
        out[j] = C * phi[order_ + j] * falling / std::pow(width_, order_ + 1 + j);
    }
    return out;
}

double MollifiedDelta::operator()(double t) const { return taylor(t, 0)[0]; }

// ---- tubular chart ----

namespace {

Vec2 rot90(const Vec2& v) { return {-v(1), v(0)}; }

constexpr int kChartNodes = 32;
constexpr int kChartSamples = 129;

}  // namespace

TubularChart TubularChart::build(const MechanicalSystem& sys, const PeriodicOrbit& orbit, double t0, double half_width,
                                 double tube_radius, const IntegratorOptions& integ) {
    if (!(half_width > 0) || !(tube_radius > 0)) throw InvalidInputError("chart needs positive width and radius");
    TubularChart c;
    c.t0_ = t0;
    c.half_width_ = half_width;
    const double a = t0 - half_width, b = t0 + half_width;
    const Vec4 start = flow_endpoint(sys, orbit.theta0, a, integ);
    const auto nodes = Chebyshev::nodes(a, b, kChartNodes);
    std::vector<int> order(kChartNodes);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int i, int j) { return nodes[i] < nodes[j]; });
    std::vector<double> rel;
    for (int i : order) rel.push_back(nodes[i] - a);
    const auto states = variational_at_times(sys, start, rel, integ);
    std::array<std::vector<double>, 4> vals;
    for (auto& v : vals) v.assign(kChartNodes, 0.0);
    for (int k = 0; k < kChartNodes; ++k)
        for (int d = 0; d < 4; ++d) vals[d][order[k]] = states[k].z(d);
    for (int d = 0; d < 2; ++d) {
        c.x_[d] = ChebyshevCurve(Chebyshev::fit(a, b, vals[d]), 6);
        c.p_[d] = ChebyshevCurve(Chebyshev::fit(a, b, vals[2 + d]), 5);
    }

    double kappa = 0.0, min_speed = std::numeric_limits<double>::infinity();
    for (int i = 0; i < kChartSamples; ++i) {
        const double t = a + (b - a) * i / (kChartSamples - 1);
        c.sample_t_.push_back(t);
        c.sample_x_.push_back(c.base(t));
        const Vec2 v = c.velocity(t);
        const Vec2 acc(c.x_[0](t, 2), c.x_[1](t, 2));
        const double sp = v.norm();
        min_speed = std::min(min_speed, sp);
        if (sp > 0) kappa = std::max(kappa, std::abs(v(0) * acc(1) - v(1) * acc(0)) / (sp * sp * sp));
    }
    if (min_speed < 1e-8)
        throw ChartError("configuration velocity vanishes on the chart segment; move the chart time");
    c.tube_radius_ = kappa > 0 ? std::min(tube_radius, 0.4 / kappa) : tube_radius;

    // no self-intersection: chords stay comparable to arcs
    std::vector<double> arc(kChartSamples, 0.0);
    for (int i = 1; i < kChartSamples; ++i) arc[i] = arc[i - 1] + (c.sample_x_[i] - c.sample_x_[i - 1]).norm();
    for (int i = 0; i < kChartSamples; ++i)
        for (int j = i + 2; j < kChartSamples; ++j) {
            const double chord = (c.sample_x_[j] - c.sample_x_[i]).norm();
            if (chord < std::min(0.5 * (arc[j] - arc[i]), 2.0 * c.tube_radius_))
                throw ChartError("base curve nearly self-intersects on the chart segment; move the chart time");
        }
    const Vec2 centre = c.base(t0);
    for (const auto& x : c.sample_x_) c.reach_ = std::max(c.reach_, (x - centre).norm());
    c.reach_ += c.tube_radius_;
    return c;
}

Vec2 TubularChart::normal(double t) const {
    const Vec2 v = velocity(t);
    return rot90(v) / v.norm();
}

Vec2 TubularChart::normal_rate(double t) const {
    const Vec2 v = velocity(t);
    const Vec2 acc(x_[0](t, 2), x_[1](t, 2));
    const double s = v.norm();
    return rot90(acc / s - v * (v.dot(acc)) / (s * s * s));
}

Vec2 TubularChart::lift(const Vec2& x) const {
    const Vec2 c = base(t0_);
    Vec2 r = x;
    for (int i = 0; i < 2; ++i) r(i) += kTwoPi * std::round((c(i) - x(i)) / kTwoPi);
    return r;
}

bool TubularChart::may_contain(const Vec2& x) const { return (lift(x) - base(t0_)).norm() <= reach_; }

Vec2 TubularChart::coordinates(const Vec2& x) const {
    if (!may_contain(x)) throw ChartError("point outside the chart neighbourhood");
    const Vec2 xl = lift(x);
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < sample_x_.size(); ++i) {
        const double d = (sample_x_[i] - xl).squaredNorm();
        if (d < bd) { bd = d; best = i; }
    }
    double t = sample_t_[best];
    const double lo = t0_ - half_width_, hi = t0_ + half_width_;
    for (int it = 0; it < 30; ++it) {
        const Vec2 d = xl - base(t);
        const Vec2 v = velocity(t);
        const Vec2 acc(x_[0](t, 2), x_[1](t, 2));
        const double G = d.dot(v);
        const double dG = -v.squaredNorm() + d.dot(acc);
        if (dG >= 0) throw ChartError("nearest-point projection is not unique");
        const double step = G / dG;
        t -= step;
        if (t < lo - half_width_ || t > hi + half_width_) throw ChartError("point projects outside the chart segment");
        if (std::abs(step) < 1e-15 * std::max(1.0, std::abs(t))) break;
    }
    if (t < lo || t > hi) throw ChartError("point projects outside the chart segment");
    const double z = (xl - base(t)).dot(normal(t));
    if (std::abs(z) > tube_radius_) throw ChartError("point outside the chart radius");
    return {t, z};
}

std::array<Taylor1, 2> TubularChart::base_taylor(double t, int degree) const {
    return {x_[0].taylor(t, degree), x_[1].taylor(t, degree)};
}

std::array<Taylor1, 2> TubularChart::normal_taylor(double t, int degree) const {
    const auto b = base_taylor(t, degree + 1);
    Taylor1 v1 = taylor_derivative(b[0]), v2 = taylor_derivative(b[1]);
    v1.resize(degree + 1);
    v2.resize(degree + 1);
    Taylor1 s2(degree + 1, 0.0);
    const auto a = taylor_mul(v1, v1), c = taylor_mul(v2, v2);
    for (int k = 0; k <= degree; ++k) s2[k] = a[k] + c[k];
    const Taylor1 speed = taylor_sqrt(s2);
    Taylor1 m2 = v2;
    for (auto& x : m2) x = -x;
    return {taylor_div(m2, speed), taylor_div(v1, speed)};
}

std::array<Taylor1, 2> TubularChart::pi_taylor(double t, int degree) const {
    const auto b = base_taylor(t, degree + 1);
    Taylor1 v1 = taylor_derivative(b[0]), v2 = taylor_derivative(b[1]);
    v1.resize(degree + 1);
    v2.resize(degree + 1);
    const auto n = normal_taylor(t, degree);
    const Taylor1 p1 = p_[0].taylor(t, degree), p2 = p_[1].taylor(t, degree);
    Taylor1 pi1(degree + 1), pi2(degree + 1);
    const auto a = taylor_mul(v1, p1), bb = taylor_mul(v2, p2), c = taylor_mul(n[0], p1), d = taylor_mul(n[1], p2);
    for (int k = 0; k <= degree; ++k) {
        pi1[k] = a[k] + bb[k];
        pi2[k] = c[k] + d[k];
    }
    return {pi1, pi2};
}

// ---- tube potentials ----

TubePotential::TubePotential(std::shared_ptr<const TubularChart> chart, double center, double width,
                             std::vector<Term> terms, int z_power, double scale, std::string kind)
    : chart_(std::move(chart)), center_(center), width_(width), terms_(std::move(terms)), z_power_(z_power),
      scale_(scale), kind_(std::move(kind)) {
    if (std::abs(center - chart_->t0()) + width > chart_->half_width() + 1e-12)
        throw ChartError("perturbation support exceeds the chart segment");
    for (int k = 0; k <= 2; ++k) deltas_.emplace_back(center, width, k);
}

Support TubePotential::support() const {
    const Vec2 c = chart_->base(chart_->t0());
    return Support::disc(Vec2(wrap_angle(c(0)), wrap_angle(c(1))), chart_->reach());
}

Jet2 TubePotential::jet(double x1, double x2) const {
    const Vec2 x(x1, x2);
    if (!chart_->may_contain(x)) return Jet2(0.0);
    Vec2 tz;
    try {
        tz = chart_->coordinates(x);
    } catch (const ChartError&) {
        return Jet2(0.0);
    }
    const double outer = 2.0 * chart_->tube_radius() / 3.0, inner = chart_->tube_radius() / 3.0;
    if (std::abs(tz(0) - center_) >= width_ || std::abs(tz(1)) >= outer) return Jet2(0.0);
    const auto [T, Z] = chart_->coordinates(Jet2::variable(0, x1), Jet2::variable(1, x2));
    const Jet2 dt = T - center_;
    Jet2 sum(0.0);
    for (const auto& term : terms_) {
        Jet2 poly(0.0);
        for (std::size_t i = term.poly.size(); i-- > 0;) poly = poly * dt + term.poly[i];
        sum += poly * deltas_[term.delta_order](T);
    }
    Jet2 zp(1.0);
    for (int i = 0; i < z_power_; ++i) zp *= Z;
    return plateau_sq(Jet2(Z * Z), inner, outer) * zp * sum * scale_;
}

IntegratorOptions resolve_support(IntegratorOptions base, const TubePotential& f) {
    base.fine_intervals.push_back(f.time_support());
    const double step = f.width() / 300;  // the embedded RKF78 error estimate misses localised forcing
    base.fine_max_step = base.fine_max_step > 0 ? std::min(base.fine_max_step, step) : step;
    return base;
}

std::shared_ptr<const TubularChart> make_orbit_chart(const MechanicalSystem& sys, const PeriodicOrbit& orbit,
                                                     double t0, double eps_delta, double tube_radius,
                                                     const IntegratorOptions& integ) {
    const double T = orbit.period;
    const double hw = 2.0 * eps_delta;
    if (!(eps_delta > 0) || hw >= 0.5 * T) throw InvalidInputError("mollifier width too large for the period");
    if (t0 < hw || t0 > T - hw) throw ChartError("chart time too close to the ends of [0, T]; move it inward");
    auto chart = std::make_shared<TubularChart>(TubularChart::build(sys, orbit, t0, hw, tube_radius, integ));
    // other passes of the orbit must avoid the tube
    const Trajectory tr = integrate_flow(sys, orbit.theta0, T, integ);
    const double dt = std::min(0.01, eps_delta / 4);
    for (double t = 0; t <= T; t += dt) {
        if (std::abs(t - t0) <= hw) continue;
        const Vec2 x = tr.at(t).head<2>();
        if (!chart->may_contain(x)) continue;
        try {
            const Vec2 tz = chart->coordinates(x);
            if (std::abs(tz(0) - t0) < eps_delta * 1.05)
                throw SupportOverlapError("orbit returns into the perturbation tube; move the chart time");
        } catch (const ChartError&) {
        }
    }
    return chart;
}

TubePotentialPtr build_h_alpha_beta(std::shared_ptr<const TubularChart> chart, const std::vector<double>& alpha,
                                    const std::vector<double>& beta, double eps_delta) {
    const double c = chart->t0();
    return std::make_shared<TubePotential>(std::move(chart), c, eps_delta,
                                           std::vector<TubePotential::Term>{{0, alpha}, {1, beta}}, 1, 1.0,
                                           "h-alpha-beta");
}

TubePotentialPtr build_abc_potential(std::shared_ptr<const TubularChart> chart, double t1, double a, double b,
                                     double c, double eps_delta) {
    return std::make_shared<TubePotential>(std::move(chart), t1, eps_delta,
                                           std::vector<TubePotential::Term>{{0, {a}}, {1, {b}}, {2, {c}}}, 2, 0.5,
                                           "abc-family");
}

// ---- first-order effect on the flow ----

Vec4 B_of_h(const MechanicalSystem& sys, const PeriodicOrbit& orbit, const PotentialTerm& h,
            const std::vector<std::pair<double, double>>& support, const IntegratorOptions& integ) {
    Forcing f;
    f.b = [&h](double, const Vec4& z) {
        const Vec2 g = h.jet(z(0), z(1)).gradient();
        return Vec4(0, 0, g(0), g(1));
    };
    f.support = support;
    if (f.support.empty())
        if (const auto* tp = dynamic_cast<const TubePotential*>(&h)) f.support = {tp->time_support()};
    double shortest = std::numeric_limits<double>::infinity();
    for (const auto& [a, b] : f.support) shortest = std::min(shortest, b - a);
    if (std::isfinite(shortest)) f.support_max_step = shortest / 600;
    return forced_variational(sys, orbit.theta0, orbit.period, f, integ).value;
}

std::pair<Vec4, Vec4> limit_B_formulas(const MechanicalSystem& sys, const PeriodicOrbit& orbit, double t0,
                                       const Vec2& alpha, const Vec2& beta, const Vec2& beta_dot,
                                       const IntegratorOptions& integ) {
    const Vec4 z0 = flow_endpoint(sys, orbit.theta0, t0, integ);
    const Mat4 P = integrate_variational(sys, z0, orbit.period - t0, integ).M;  // dpsi_T (dpsi_t0)^{-1}
    const Mat4 A = standard_J() * sys.derivatives(z0, 2).hess;
    const Vec4 va(0, 0, alpha(0), alpha(1));
    const Vec4 vb(0, 0, beta(0), beta(1));
    const Vec4 vbd(0, 0, beta_dot(0), beta_dot(1));
    return {P * va, P * (A * vb - vbd)};
}

std::pair<Vec4, Vec4> limit_B_formulas(const MechanicalSystem& sys, const PeriodicOrbit& orbit,
                                       const TubularChart& chart, double alpha1, double beta1, double beta1_dot,
                                       const IntegratorOptions& integ) {
    const double t0 = chart.t0();
    const Vec2 n = chart.normal(t0), ndot = chart.normal_rate(t0);
    return limit_B_formulas(sys, orbit, t0, alpha1 * n, beta1 * n, beta1_dot * n + beta1 * ndot, integ);
}

ComplementStudy complement_study(const MechanicalSystem& sys, const PeriodicOrbit& orbit, double t0,
                                 double eps_delta, double tube_radius, const IntegratorOptions& integ,
                                 double rank_tol) {
    ComplementStudy r;
    r.t0 = t0;
    r.eps_delta = eps_delta;
    const auto chart = make_orbit_chart(sys, orbit, t0, eps_delta, tube_radius, integ);
    r.B_alpha = B_of_h(sys, orbit, *build_h_alpha_beta(chart, {1.0}, {0.0}, eps_delta), {}, integ);
    r.B_beta = B_of_h(sys, orbit, *build_h_alpha_beta(chart, {0.0}, {1.0}, eps_delta), {}, integ);
    std::tie(r.limit_alpha, r.limit_beta) = limit_B_formulas(sys, orbit, *chart, 1.0, 1.0, 0.0, integ);

    const Vec4 grad = sys.gradient(orbit.theta0);
    r.tangency = std::max(std::abs(grad.dot(r.B_alpha)) / r.B_alpha.norm(),
                          std::abs(grad.dot(r.B_beta)) / r.B_beta.norm());

    const Mat4 Einv = orbit.frame.matrix().inverse();
    const Vec4 ca = Einv * r.B_alpha, cb = Einv * r.B_beta;
    Mat2 W;
    W << ca(1), cb(1), ca(3), cb(3);
    r.gram = W.transpose() * W;
    const Vec2 sv = Eigen::JacobiSVD<Mat2>(r.gram).singularValues();
    r.gram_rank = int(sv(0) > 0) + int(sv(1) > rank_tol * sv(0));

    Eigen::Matrix<double, 4, 2> Bm;
    Bm << r.B_alpha, r.B_beta;
    const Vec4 X = hamiltonian_field(sys, orbit.theta0);
    const Vec2 c = Bm.colPivHouseholderQr().solve(X);
    r.flow_residual = (Bm * c - X).norm() / X.norm();

    r.limit_error_alpha = (r.B_alpha - r.limit_alpha).norm() / r.limit_alpha.norm();
    r.limit_error_beta = (r.B_beta - r.limit_beta).norm() / r.limit_beta.norm();
    return r;
}

// ---- the (a, b, c) family ----

Mat4 abc_generator(double v) {
    Mat4 m = Mat4::Zero();
    m(3, 1) = -v;
    return m;
}

Mat4 commutator_Z(const Mat4& A, const Mat4& B, const Mat4& C, const Mat4& JH, const Mat4& JH_dot) {
    auto br = [](const Mat4& x, const Mat4& y) -> Mat4 { return x * y - y * x; };
    return A - br(B, JH) + br(C, JH_dot) + br(br(C, JH), JH);
}

AdaptedFrame adapted_frame(const MechanicalSystem& sys, const TubularChart& chart, double t1) {
    if (std::abs(t1 - chart.t0()) > chart.half_width())
        throw ChartError("adapted frame requested outside the chart segment");
    const Jet4 d = Jet4::variable(0, 0.0), X2 = Jet4::variable(1, 0.0);
    const Jet4 P1 = Jet4::variable(2, 0.0), P2 = Jet4::variable(3, 0.0);
    const auto bt = chart.base_taylor(t1, 4);
    const auto nt = chart.normal_taylor(t1, 4);
    const auto pt = chart.pi_taylor(t1, 4);
    auto ap = [&](const Taylor1& s) { return taylor_apply(s, d); };
    const Jet4 N1 = ap(nt[0]), N2 = ap(nt[1]);
    const Jet4 x1 = ap(bt[0]) + X2 * N1;
    const Jet4 x2 = ap(bt[1]) + X2 * N2;
    // columns of the configuration Jacobian: d x / d x_hat1, d x / d x_hat2
    const Jet4 a = ap(taylor_derivative(bt[0])) + X2 * ap(taylor_derivative(nt[0]));
    const Jet4 c = ap(taylor_derivative(bt[1])) + X2 * ap(taylor_derivative(nt[1]));
    const Jet4& b = N1;
    const Jet4& dd = N2;
    // cotangent lift shifted by dS, S = int pi1 + x_hat2 pi2
    const Jet4 q1 = P1 + ap(pt[0]) + X2 * ap(taylor_derivative(pt[1]));
    const Jet4 q2 = P2 + ap(pt[1]);
    const Jet4 det = a * dd - b * c;
    const Jet4 p1 = (dd * q1 - c * q2) / det;
    const Jet4 p2 = (a * q2 - b * q1) / det;
    const Jet4 H = sys.hamiltonian_generic(x1, x2, p1, p2);

    AdaptedFrame f;
    f.t1 = t1;
    f.point = Vec4(x1.value(), x2.value(), p1.value(), p2.value());
    f.C.row(0) = x1.gradient().transpose();
    f.C.row(1) = x2.gradient().transpose();
    f.C.row(2) = p1.gradient().transpose();
    f.C.row(3) = p2.gradient().transpose();
    f.grad = H.gradient();
    f.hess = H.hessian();
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) f.hess_dot(i, j) = H.third(0, i, j);
    return f;
}

Mat2 pi_of_Z(const AdaptedFrame& f, double a, double b, double c) {
    const Mat4& H = f.hess;
    const Mat4& Hd = f.hess_dot;
    // indices: x1 = 0, x2 = 1, p1 = 2, p2 = 3
    const double z11 = 2 * c * H(3, 3) * H(1, 3) - b * H(3, 3) + c * Hd(3, 3);
    const double z12 = 2 * c * H(3, 3) * H(3, 3);
    const double z21 = -a + 2 * b * H(1, 3) + 2 * c * H(2, 3) * H(0, 1) + 2 * c * H(3, 3) * H(1, 1) -
                       2 * c * H(0, 3) * H(1, 2) - 4 * c * H(1, 3) * H(1, 3) - 2 * c * Hd(1, 3);
    Mat2 z;
    z << z11, z12, z21, -z11;
    return z;
}

Mat2 pi_of_Z_commutator(const AdaptedFrame& f, double a, double b, double c) {
    const Mat4 J = standard_J();
    const Mat4 Z = commutator_Z(abc_generator(a), abc_generator(b), abc_generator(c), J * f.hess, J * f.hess_dot);
    Mat2 z;
    z << Z(1, 1), Z(1, 3), Z(3, 1), Z(3, 3);
    return z;
}

RankResult dS_rank(const AdaptedFrame& frame, double rel_tol) {
    RankResult r;
    for (int k = 0; k < 3; ++k) {
        const Mat2 z = pi_of_Z(frame, k == 0, k == 1, k == 2);
        r.matrix.col(k) = Vec3(z(0, 0), z(0, 1), z(1, 0));
    }
    Eigen::JacobiSVD<Mat3> svd(r.matrix);
    r.singular_values = svd.singularValues();
    const double top = r.singular_values(0);
    for (int i = 0; i < 3; ++i)
        if (top > 0 && r.singular_values(i) > rel_tol * top) ++r.rank;
    return r;
}

Mat4 predicted_monodromy_derivative(const MechanicalSystem& sys, const PeriodicOrbit& orbit,
                                    const AdaptedFrame& frame, double a, double b, double c,
                                    const IntegratorOptions& integ) {
    const Mat4 J = standard_J();
    const Mat4 Z =
        commutator_Z(abc_generator(a), abc_generator(b), abc_generator(c), J * frame.hess, J * frame.hess_dot);
    const auto head = integrate_variational(sys, orbit.theta0, frame.t1, integ);
    const Mat4 tail = integrate_variational(sys, head.z, orbit.period - frame.t1, integ).M;
    return tail * frame.C * Z * frame.C.inverse() * head.M;
}

Mat2 project_derivative(const PeriodicOrbit& orbit, const Mat4& dM) {
    const Mat4 m = in_frame(orbit.frame, dM);
    Mat2 r;
    r << m(1, 1), m(1, 3), m(3, 1), m(3, 3);
    return r;
}

double min_root_margin(const Mat2& dP, int max_order) {
    const auto ev = eigenvalues2(dP);
    double best = std::numeric_limits<double>::infinity();
    for (int m = 1; m <= max_order; ++m)
        for (const auto& l : ev) best = std::min(best, std::abs(std::pow(l, m) - 1.0));
    return best;
}

NondegeneracyRepair perturb_to_nondegenerate(const MechanicalSystem& sys, const PeriodicOrbit& orbit, int m,
                                             double budget, const PerturbOptions& opt, unsigned jobs) {
    if (m < 1 || !(budget > 0)) throw InvalidInputError("perturb_to_nondegenerate needs m >= 1 and budget > 0");
    NondegeneracyRepair rep;
    rep.max_order = 2 * m;
    rep.orbit = orbit;
    rep.min_margin = min_root_margin(orbit.dP, rep.max_order);
    if (rep.min_margin > opt.margin) {
        rep.predicted_dP = orbit.dP;
        return rep;
    }
    const double T = orbit.period;
    const double eps = opt.eps_delta > 0 ? opt.eps_delta : 1e-2 * T;
    double best_margin = rep.min_margin;

    for (double frac : {0.5, 0.35, 0.65, 0.25, 0.75}) {
        const double t1 = frac * T;
        std::shared_ptr<const TubularChart> chart;
        AdaptedFrame frame;
        try {
            chart = make_orbit_chart(sys, orbit, t1, eps, opt.tube_radius, opt.orbit.integ);
            frame = adapted_frame(sys, *chart, t1);
        } catch (const ChartError&) {
            continue;
        } catch (const SupportOverlapError&) {
            continue;
        }
        if (dS_rank(frame).rank < 3) continue;
        std::array<Mat2, 3> D;
        for (int k = 0; k < 3; ++k)
            D[k] = project_derivative(orbit, predicted_monodromy_derivative(sys, orbit, frame, k == 0, k == 1,
                                                                            k == 2, opt.orbit.integ));
        // linearised screening over a direction grid
        struct Cand {
            Vec3 coef;
            double predicted;
        };
        std::vector<Cand> cands;
        for (double s : {1.0, 0.5, 0.25, 0.125})
            for (int i = -2; i <= 2; ++i)
                for (int j = -2; j <= 2; ++j)
                    for (int k = -2; k <= 2; ++k) {
                        if (i == 0 && j == 0 && k == 0) continue;
                        Vec3 v(i, j, k);
                        v *= budget * s / v.cwiseAbs().maxCoeff();
                        const Mat2 pred = orbit.dP + v(0) * D[0] + v(1) * D[1] + v(2) * D[2];
                        cands.push_back({v, min_root_margin(pred, rep.max_order)});
                    }
        std::stable_sort(cands.begin(), cands.end(),
                         [](const Cand& x, const Cand& y) { return x.predicted > y.predicted; });
        const std::size_t K = std::min<std::size_t>(12, cands.size());
        std::vector<std::optional<PeriodicOrbit>> full(K);
        std::vector<TubePotentialPtr> pots(K);
        parallel_for(K, jobs, [&](std::size_t i) {
            const Vec3& v = cands[i].coef;
            pots[i] = build_abc_potential(chart, t1, v(0), v(1), v(2), eps);
            try {
                OrbitOptions oo = opt.orbit;
                oo.integ = resolve_support(oo.integ, *pots[i]);
                full[i] = complete_orbit(sys.with_potential(pots[i]), orbit.theta0, T, oo);
            } catch (const Error&) {
            }
        });
        for (std::size_t i = 0; i < K; ++i) {
            ++rep.candidates_tried;
            if (!full[i] || full[i]->residual > 1e-8) continue;
            const double mg = min_root_margin(full[i]->dP, rep.max_order);
            best_margin = std::max(best_margin, mg);
            if (mg > opt.margin) {
                const Vec3& v = cands[i].coef;
                rep.potential = pots[i];
                rep.a = v(0);
                rep.b = v(1);
                rep.c = v(2);
                rep.t1 = t1;
                rep.eps_delta = eps;
                rep.orbit = *full[i];
                rep.predicted_dP = orbit.dP + v(0) * D[0] + v(1) * D[1] + v(2) * D[2];
                rep.min_margin = mg;
                return rep;
            }
        }
    }
    throw BudgetError("no perturbation within the coefficient budget removes the roots of unity", best_margin);
}

}  // namespace torusdyn
