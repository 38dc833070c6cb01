#include "doctest.h"
#include "torusdyn/perturb.hpp"

using namespace torusdyn;

namespace {

PeriodicOrbit free_orbit() {
    return find_periodic_orbit(systems::free_particle(), 0.5, Vec4(0.0, 0.0, 1.0, 0.0), kTwoPi);
}
PeriodicOrbit rotor_orbit() {
    return find_periodic_orbit(systems::pendulum_rotor(), 1.5, Vec4(kPi, 0.0, 0.0, 1.0), kTwoPi);
}
PeriodicOrbit aniso_orbit() {
    return find_periodic_orbit(systems::anisotropic(), 1.5, Vec4(kPi, 0.0, 0.0, 2.0 * std::sqrt(0.4)), 8.9);
}

}  // namespace

TEST_CASE("mollified delta moments") {
    for (double w : {0.1, 0.03}) {
        const double t1 = 0.7;
        const MollifiedDelta d0(t1, w, 0), d1(t1, w, 1), d2(t1, w, 2);
        CHECK(d0.integrate([](double) { return 1.0; }) == doctest::Approx(1.0).epsilon(1e-8));
        CHECK(d1.integrate([](double t) { return t * t; }) == doctest::Approx(-2 * t1).epsilon(1e-8));
        CHECK(d2.integrate([](double t) { return t * t; }) == doctest::Approx(2.0).epsilon(1e-8));
        // cubic: int g delta' = -g'(t1) + O(w^2)
        const double m = d1.integrate([](double t) { return t * t * t; });
        CHECK(std::abs(m + 3 * t1 * t1) < 2 * w * w);
        CHECK(d0(t1 + w) == 0.0);
        CHECK(d0(t1 - 1.01 * w) == 0.0);
    }
    // Taylor coefficients against finite differences
    const MollifiedDelta d(0.0, 1.0, 1);
    const double s = 0.3, h = 1e-5;
    const auto tay = d.taylor(s, 3);
    CHECK(tay[0] == doctest::Approx(d(s)).epsilon(1e-14));
    CHECK(tay[1] == doctest::Approx((d(s + h) - d(s - h)) / (2 * h)).epsilon(1e-7));
    CHECK(2 * tay[2] == doctest::Approx((d(s + h) - 2 * d(s) + d(s - h)) / (h * h)).epsilon(1e-4));
    const MollifiedDelta d2(0.0, 1.0, 2);
    CHECK(d2(s) == doctest::Approx(tay[1]).epsilon(1e-12));
}

TEST_CASE("Chebyshev interpolation and series") {
    const auto nodes = Chebyshev::nodes(0.2, 1.4, 24);
    std::vector<double> v;
    for (double t : nodes) v.push_back(std::sin(3 * t));
    const ChebyshevCurve c(Chebyshev::fit(0.2, 1.4, v), 3);
    CHECK(c(0.9) == doctest::Approx(std::sin(2.7)).epsilon(1e-13));
    CHECK(c(0.9, 1) == doctest::Approx(3 * std::cos(2.7)).epsilon(1e-11));
    CHECK(c(0.9, 3) == doctest::Approx(-27 * std::cos(2.7)).epsilon(1e-8));
    const Taylor1 x{4.0, 1.0, 0.5, 0.0};
    const Taylor1 r = taylor_sqrt(x);
    const Taylor1 back = taylor_mul(r, r);
    for (int k = 0; k < 4; ++k) CHECK(back[k] == doctest::Approx(x[k]).epsilon(1e-14));
}

TEST_CASE("tubular chart") {
    const auto fp = systems::free_particle();
    const auto fo = free_orbit();
    const auto chart = make_orbit_chart(fp, fo, kPi, 0.05, 0.2);
    for (double t : {kPi - 0.09, kPi, kPi + 0.05}) {
        const Vec2 tz = chart->coordinates(chart->base(t));
        CHECK(std::abs(tz(0) - t) < 1e-12);
        CHECK(std::abs(tz(1)) < 1e-12);
    }
    // straight line: affine chart
    const Vec2 tz = chart->coordinates(Vec2(kPi + 0.02, 0.07));
    CHECK(tz(0) == doctest::Approx(kPi + 0.02).epsilon(1e-12));
    CHECK(tz(1) == doctest::Approx(0.07).epsilon(1e-12));
    CHECK_THROWS_AS(chart->coordinates(Vec2(kPi, 0.3)), ChartError);

    const auto s1 = systems::pendulum_rotor();
    const auto ro = rotor_orbit();
    const auto rc = make_orbit_chart(s1, ro, 2.0, 0.06, 0.2);
    for (double t : {1.9, 2.0, 2.07}) {
        const Vec2 x = rc->base(t);
        const Vec2 c = rc->coordinates(x);
        CHECK(std::abs(c(0) - t) < 1e-8);
        CHECK(std::abs(c(1)) < 1e-8);
        // d F . H_p = (1, 0)
        const auto [T, Z] = rc->coordinates(Jet2::variable(0, x(0)), Jet2::variable(1, x(1)));
        const Vec2 v = rc->velocity(t);
        CHECK(std::abs(T.gradient().dot(v) - 1.0) < 1e-6);
        CHECK(std::abs(Z.gradient().dot(v)) < 1e-6);
        // signed distance in x1
        const Vec2 off = rc->coordinates(Vec2(x(0) + 0.05, x(1)));
        CHECK(std::abs(std::abs(off(1)) - 0.05) < 1e-8);
    }
    // jets of the chart coordinates against finite differences
    const Vec2 q(kPi + 0.03, rc->base(2.0)(1) + 0.01);
    const auto [T, Z] = rc->coordinates(Jet2::variable(0, q(0)), Jet2::variable(1, q(1)));
    const double h = 1e-6;
    for (int i = 0; i < 2; ++i) {
        Vec2 e = Vec2::Zero();
        e(i) = h;
        const Vec2 fd = (rc->coordinates(q + e) - rc->coordinates(q - e)) / (2 * h);
        CHECK(T.gradient()(i) == doctest::Approx(fd(0)).epsilon(1e-7));
        CHECK(Z.gradient()(i) == doctest::Approx(fd(1)).epsilon(1e-7));
    }
}

TEST_CASE("h_alpha_beta potentials") {
    const auto s1 = systems::pendulum_rotor();
    const auto ro = rotor_orbit();
    const double eps = 0.05;
    const auto chart = make_orbit_chart(s1, ro, 2.5, eps, 0.2);
    const auto zero = build_h_alpha_beta(chart, {0.0}, {0.0}, eps);
    CHECK(zero->value(chart->base(2.5)(0) + 0.02, chart->base(2.5)(1)) == 0.0);
    const auto h = build_h_alpha_beta(chart, {1.0, 0.5}, {0.3}, eps);
    for (double t = 2.5 - eps; t <= 2.5 + eps; t += eps / 7) {
        const Vec2 x = chart->base(t);
        const Jet2 j = h->jet(x(0), x(1));
        CHECK(std::abs(j.value()) <= 1e-10);
        CHECK(std::abs(j.gradient().dot(chart->velocity(t))) <= 1e-7 * std::max(1.0, j.gradient().norm()));
    }
    // jet against finite differences off the curve
    const Vec2 q = chart->base(2.51) + 0.03 * chart->normal(2.51);
    const Jet2 j = h->jet(q(0), q(1));
    const double e = 1e-6;
    for (int i = 0; i < 2; ++i) {
        Vec2 d = Vec2::Zero();
        d(i) = e;
        const double fd = (h->value(q(0) + d(0), q(1) + d(1)) - h->value(q(0) - d(0), q(1) - d(1))) / (2 * e);
        CHECK(j.gradient()(i) == doctest::Approx(fd).epsilon(1e-6));
    }
    // far away: zero
    CHECK(h->jet(chart->base(2.5)(0) + 1.0, chart->base(2.5)(1)).value() == 0.0);
}

TEST_CASE("B(h): tangency, limit formulas and convergence") {
    const auto fp = systems::free_particle();
    const auto fo = free_orbit();
    const double T = fo.period, t0 = T / 2;
    const auto [ba, bb] = limit_B_formulas(fp, fo, t0, Vec2(0, 1), Vec2(0, 0), Vec2(0, 0));
    CHECK((ba - Vec4(0, T - t0, 0, 1)).norm() < 1e-10);
    CHECK(bb.norm() == 0.0);
    const auto [za, zb] = limit_B_formulas(fp, fo, t0, Vec2::Zero(), Vec2::Zero(), Vec2::Zero());
    CHECK(za.norm() == 0.0);
    CHECK(zb.norm() == 0.0);

    const auto sys = systems::anisotropic();
    const auto orb = aniso_orbit();
    const double tc = 0.4 * orb.period;
    std::vector<double> err_a, err_b;
    for (double eps : {0.08, 0.04, 0.02}) {
        const auto chart = make_orbit_chart(sys, orb, tc, eps, 0.2);
        const Vec4 Ba = B_of_h(sys, orb, *build_h_alpha_beta(chart, {1.0}, {0.0}, eps));
        const Vec4 Bb = B_of_h(sys, orb, *build_h_alpha_beta(chart, {0.0}, {1.0}, eps));
        const Vec4 grad = sys.gradient(orb.theta0);
        CHECK(std::abs(grad.dot(Ba)) <= 1e-7 * Ba.norm());
        CHECK(std::abs(grad.dot(Bb)) <= 1e-7 * Bb.norm());
        const auto [La, Lb] = limit_B_formulas(sys, orb, *chart, 1.0, 1.0, 0.0);
        err_a.push_back((Ba - La).norm() / La.norm());
        err_b.push_back((Bb - Lb).norm() / Lb.norm());
    }
    for (int i = 0; i < 2; ++i) {
        CHECK(err_a[i + 1] < 0.6 * err_a[i]);
        CHECK(err_b[i + 1] < 0.6 * err_b[i]);
    }
    CHECK(err_a[2] < 1e-2);
    CHECK(err_b[2] < 1e-2);
}

TEST_CASE("commutator Z") {
    const Mat4 J = standard_J();
    CHECK(commutator_Z(abc_generator(0), abc_generator(0), abc_generator(0), J, J).norm() == 0.0);
    Mat4 JH = Mat4::Zero();
    JH.block<2, 2>(0, 2) = Mat2::Identity();  // free particle
    const Mat4 A = abc_generator(1.3), B = abc_generator(0.4);
    CHECK((commutator_Z(A, B, abc_generator(0), JH, Mat4::Zero()) - (A - (B * JH - JH * B))).norm() < 1e-15);
    const Mat4 Z = commutator_Z(abc_generator(1), abc_generator(1), abc_generator(1), JH, Mat4::Zero());
    // hand expansion: a at (p2, x2); b gives -b at (x2, x2) and +b at (p2, p2); c gives 2c at (x2, p2)
    Mat4 expect = Mat4::Zero();
    expect(3, 1) = -1;
    expect(1, 1) = -1;
    expect(3, 3) = 1;
    expect(1, 3) = 2;
    CHECK((Z - expect).norm() < 1e-15);
}

TEST_CASE("adapted frame and pi(Z)") {
    const auto fp = systems::free_particle();
    const auto fo = free_orbit();
    const auto fchart = make_orbit_chart(fp, fo, kPi, 0.06, 0.2);
    const auto ff = adapted_frame(fp, *fchart, kPi);
    CHECK((ff.grad - Vec4(0, 0, 1, 0)).norm() < 1e-10);
    const double a = 0.7, b = -0.3, c = 0.45;
    Mat2 oracle;
    oracle << -b, 2 * c, -a, b;
    CHECK((pi_of_Z(ff, a, b, c) - oracle).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(pi_of_Z(ff, 0, 0, 0).norm() == 0.0);
    const auto fr = dS_rank(ff);
    CHECK(fr.rank == 3);
    Mat3 expect;
    expect << 0, -1, 0, 0, 0, 2, -1, 0, 0;
    CHECK((fr.matrix - expect).cwiseAbs().maxCoeff() < 1e-12);
    AdaptedFrame flat = ff;
    flat.hess(3, 3) = 0.0;
    flat.hess_dot(3, 3) = 0.0;
    CHECK(dS_rank(flat).rank < 3);

    for (int which = 0; which < 2; ++which) {
        const auto sys = which == 0 ? systems::pendulum_rotor() : systems::anisotropic();
        const auto orb = which == 0 ? rotor_orbit() : aniso_orbit();
        const double t1 = 0.4 * orb.period;
        const auto chart = make_orbit_chart(sys, orb, t1, 0.01 * orb.period, 0.2);
        const auto fr2 = adapted_frame(sys, *chart, t1);
        CHECK((fr2.grad - Vec4(0, 0, 1, 0)).norm() < 1e-8);
        CHECK(symplectic_defect(fr2.C) < 1e-9);
        CHECK((fr2.point - flow_endpoint(sys, orb.theta0, t1)).norm() < 1e-8);
        // orbit direction and momenta: the adapted Hamiltonian's Hessian against finite differences is
        // covered indirectly by the monodromy prediction below
        for (const Vec3 abc : {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1), Vec3(0.3, -0.7, 0.2)}) {
            const Mat2 z = pi_of_Z(fr2, abc(0), abc(1), abc(2));
            const Mat2 zc = pi_of_Z_commutator(fr2, abc(0), abc(1), abc(2));
            CHECK((z - zc).cwiseAbs().maxCoeff() <= 1e-7);
            CHECK(std::abs(z.trace()) <= 1e-8);
        }
        const auto rk = dS_rank(fr2);
        CHECK(rk.rank == 3);
        CHECK(rk.singular_values(2) > 1e-4);
    }
}

TEST_CASE("abc potential: jet along the orbit and first-order monodromy change") {
    for (int which = 0; which < 2; ++which) {
        const auto sys = which == 0 ? systems::pendulum_rotor() : systems::anisotropic();
        const auto orb = which == 0 ? rotor_orbit() : aniso_orbit();
        const double t1 = 0.4 * orb.period, eps = 0.01 * orb.period;
        const auto chart = make_orbit_chart(sys, orb, t1, eps, 0.2);
        const auto frame = adapted_frame(sys, *chart, t1);
        const Vec3 abc(0.6, -0.4, 0.3);
        const auto f0 = build_abc_potential(chart, t1, abc(0), abc(1), abc(2), eps);
        for (double t = t1 - eps; t <= t1 + eps; t += eps / 9) {
            const Vec2 x = chart->base(t);
            const Jet2 j = f0->jet(x(0), x(1));
            CHECK(std::abs(j.value()) <= 1e-10);
            CHECK(j.gradient().norm() <= 1e-7);
        }
        const auto zero = build_abc_potential(chart, t1, 0, 0, 0, eps);
        const auto same = complete_orbit(sys.with_potential(zero), orb.theta0, orb.period);
        CHECK((same.monodromy - orb.monodromy).cwiseAbs().maxCoeff() <= 1e-9 * orb.monodromy.norm());

        const double l = 1e-4;
        OrbitOptions oo;
        oo.integ = resolve_support(oo.integ, *f0);
        const auto plus = complete_orbit(sys.with_potential(std::make_shared<ScaledPotential>(f0, l)), orb.theta0,
                                         orb.period, oo);
        const auto minus = complete_orbit(sys.with_potential(std::make_shared<ScaledPotential>(f0, -l)), orb.theta0,
                                          orb.period, oo);
        CHECK(plus.residual < 1e-8);
        const Mat2 measured = (plus.dP - minus.dP) / (2 * l);
        const Mat2 predicted =
            project_derivative(orb, predicted_monodromy_derivative(sys, orb, frame, abc(0), abc(1), abc(2)));
        const double rel = (measured - predicted).norm() / predicted.norm();
        MESSAGE("system " << which << " first-order relative error " << rel);
        CHECK(rel <= std::max(1e-4, 5 * eps));
    }
}

TEST_CASE("perturb_to_nondegenerate") {
    const auto fp = systems::free_particle();
    const auto fo = free_orbit();
    const auto rep = perturb_to_nondegenerate(fp, fo, 2, 1e-2);
    REQUIRE(rep.potential);
    CHECK(rep.orbit.residual <= 1e-8);
    CHECK(std::max({std::abs(rep.a), std::abs(rep.b), std::abs(rep.c)}) <= 1e-2 + 1e-15);
    for (int m = 1; m <= 4; ++m) CHECK(rep.orbit.verdicts[m - 1].margin > 1e-3);
    CHECK(rep.min_margin > 1e-3);

    // hyperbolic orbit needs nothing
    const auto ro = rotor_orbit();
    const auto none = perturb_to_nondegenerate(systems::pendulum_rotor(), ro, 2, 1e-2);
    CHECK_FALSE(none.potential);

    // rotation by 2 pi / 5: move off the fifth roots of unity
    const auto s1 = systems::pendulum_rotor();
    const auto el = find_periodic_orbit(s1, 11.5, Vec4(0.0, 0.0, 0.0, 5.0), kTwoPi / 5);
    const auto r5 = perturb_to_nondegenerate(s1, el, 5, 5e-2);
    REQUIRE(r5.potential);
    CHECK(r5.orbit.verdicts[4].margin > 1e-3);
}
