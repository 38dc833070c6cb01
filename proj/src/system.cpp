#include "torusdyn/system.hpp"

#include <cmath>
#include <sstream>

namespace torusdyn {

namespace {

void require_finite(const Vec4& z) {
    if (!z.allFinite()) throw InvalidInputError("non-finite phase point");
}

struct MetricJets {
    Jet2 g11, g12, g22;
    Mat2 value() const {
        Mat2 m;
        m << g11.value(), g12.value(), g12.value(), g22.value();
        return m;
    }
    Mat2 d1(int a) const {
        Mat2 m;
        m << g11.gradient()(a), g12.gradient()(a), g12.gradient()(a), g22.gradient()(a);
        return m;
    }
    Mat2 d2(int a, int b) const {
        Mat2 m;
        m << g11.hessian()(a, b), g12.hessian()(a, b), g12.hessian()(a, b), g22.hessian()(a, b);
        return m;
    }
    Mat2 d3(int a, int b, int c) const {
        Mat2 m;
        m << g11.third(a, b, c), g12.third(a, b, c), g12.third(a, b, c), g22.third(a, b, c);
        return m;
    }
};

MetricJets metric_jets(const MetricInverse& g, double x1, double x2) {
    const Jet2 a = Jet2::variable(0, x1), b = Jet2::variable(1, x2);
    return {eval_trig(g.g11, a, b), eval_trig(g.g12, a, b), eval_trig(g.g22, a, b)};
}

}  // namespace

MechanicalSystem::MechanicalSystem(MetricInverse metric, std::vector<PotentialPtr> potentials)
    : metric_(std::move(metric)), potentials_(std::move(potentials)) {
    constexpr int n = 24;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const Mat2 g = metric_inverse(kTwoPi * i / n, kTwoPi * j / n);
            if (!(g(0, 0) > 0.0 && g.determinant() > 0.0)) {
                std::ostringstream os;
                os << "inverse metric not positive definite at grid point (" << i << ", " << j << ")";
                throw InvalidInputError(os.str());
            }
        }
    for (const auto& p : potentials_)
        if (!p) throw InvalidInputError("null potential term");
}

MechanicalSystem MechanicalSystem::with_potential(PotentialPtr f) const {
    auto terms = potentials_;
    terms.push_back(std::move(f));
    return MechanicalSystem(metric_, std::move(terms));
}

Mat2 MechanicalSystem::metric_inverse(double x1, double x2) const {
    Mat2 g;
    const double a = eval_trig(metric_.g11, x1, x2);
    const double b = eval_trig(metric_.g12, x1, x2);
    const double c = eval_trig(metric_.g22, x1, x2);
    g << a, b, b, c;
    return g;
}

double MechanicalSystem::potential(double x1, double x2) const {
    double u = 0.0;
    for (const auto& p : potentials_) u += p->value(x1, x2);
    return u;
}

Jet2 MechanicalSystem::potential_jet(double x1, double x2) const {
    Jet2 u(0.0);
    for (const auto& p : potentials_) u += p->jet(x1, x2);
    return u;
}

double MechanicalSystem::hamiltonian(const Vec4& z) const {
    require_finite(z);
    const Vec2 p = z.tail<2>();
    return 0.5 * p.dot(metric_inverse(z(0), z(1)) * p) + potential(z(0), z(1));
}

double MechanicalSystem::hamiltonian(const PhasePoint& th) const { return hamiltonian(th.state()); }

Vec4 MechanicalSystem::gradient(const Vec4& z) const { return derivatives(z, 1).grad; }

HamiltonianDerivatives MechanicalSystem::derivatives(const Vec4& z, int order) const {
    require_finite(z);
    HamiltonianDerivatives d;
    d.order = order;
    const MetricJets g = metric_jets(metric_, z(0), z(1));
    const Jet2 u = potential_jet(z(0), z(1));
    const Vec2 p = z.tail<2>();
    const Mat2 G = g.value();
    const Vec2 Gp = G * p;
    const Vec2 ug = u.gradient();

    d.value = 0.5 * p.dot(Gp) + u.value();
    Mat2 dG[2] = {g.d1(0), g.d1(1)};
    for (int a = 0; a < 2; ++a) d.grad(a) = 0.5 * p.dot(dG[a] * p) + ug(a);
    d.grad.tail<2>() = Gp;
    if (order < 2) return d;

    const Mat2 uh = u.hessian();
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) d.hess(a, b) = 0.5 * p.dot(g.d2(a, b) * p) + uh(a, b);
        const Vec2 row = dG[a] * p;
        d.hess(a, 2) = d.hess(2, a) = row(0);
        d.hess(a, 3) = d.hess(3, a) = row(1);
    }
    d.hess.block<2, 2>(2, 2) = G;
    if (order < 3) return d;

    for (int c = 0; c < 2; ++c) {
        Mat4& T = d.third[c];
        for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) T(a, b) = 0.5 * p.dot(g.d3(a, b, c) * p) + u.third(a, b, c);
            const Vec2 row = g.d2(a, c) * p;
            T(a, 2) = T(2, a) = row(0);
            T(a, 3) = T(3, a) = row(1);
        }
        T.block<2, 2>(2, 2) = dG[c];
    }
    for (int c = 0; c < 2; ++c) {
        Mat4& T = d.third[2 + c];
        for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) T(a, b) = (g.d2(a, b) * p)(c);
            for (int j = 0; j < 2; ++j) T(a, 2 + j) = T(2 + j, a) = dG[a](j, c);
        }
    }
    return d;
}

PhasePoint MechanicalSystem::legendre(const TangentPoint& th) const {
    if (!th.finite()) throw InvalidInputError("non-finite tangent point");
    const Mat2 gi = metric_inverse(th.x.x1, th.x.x2);
    return {th.x, gi.ldlt().solve(th.v)};
}

TangentPoint MechanicalSystem::legendre_inverse(const PhasePoint& th) const {
    if (!th.finite()) throw InvalidInputError("non-finite phase point");
    return {th.x, metric_inverse(th.x.x1, th.x.x2) * th.p};
}

double MechanicalSystem::energy_function(const TangentPoint& th) const {
    if (!th.finite()) throw InvalidInputError("non-finite tangent point");
    // L = 1/2 v^T G v - U, E = L_v v - L = 1/2 v^T G v + U
    const Mat2 G = metric_inverse(th.x.x1, th.x.x2).inverse();
    return 0.5 * th.v.dot(G * th.v) + potential(th.x.x1, th.x.x2);
}

namespace systems {

MechanicalSystem free_particle() { return MechanicalSystem(MetricInverse::identity()); }

MechanicalSystem pendulum_rotor() {
    return MechanicalSystem(MetricInverse::identity(),
                            {std::make_shared<TrigPotential>(std::vector<Harmonic>{{1, 0, -1.0, 0.0}})});
}

MechanicalSystem coupled_pendulum_rotor(double eps) {
    // eps (1 + cos x1) cos x2 vanishes to second order on x1 = pi
    return MechanicalSystem(MetricInverse::identity(),
                            {std::make_shared<TrigPotential>(std::vector<Harmonic>{
                                {1, 0, -1.0, 0.0}, {0, 1, eps, 0.0}, {1, 1, 0.5 * eps, 0.0}, {1, -1, 0.5 * eps, 0.0}})});
}

MechanicalSystem anisotropic() {
    MetricInverse g;
    g.g22 = {{0, 0, 1.0, 0.0}, {1, 0, 0.5, 0.0}};
    return MechanicalSystem(g, {std::make_shared<TrigPotential>(std::vector<Harmonic>{
                                   {1, 0, -1.0, 0.0}, {1, 1, -0.05, 0.0}, {1, -1, -0.05, 0.0}})});
}

MechanicalSystem twin_wells(double w1, double w2) {
    return MechanicalSystem(MetricInverse::identity(),
                            {std::make_shared<TrigPotential>(
                                std::vector<Harmonic>{{1, 0, -w1 * w1, 0.0}, {0, 1, -w2 * w2, 0.0}})});
}

}  // namespace systems

}  // namespace torusdyn
