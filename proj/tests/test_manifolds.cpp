#include <cmath>

#include "doctest.h"
#include "torusdyn/manifolds.hpp"

using namespace torusdyn;

namespace {

OrbitOptions tight() {
    OrbitOptions o;
    o.integ.tol = 1e-12;
    return o;
}

PeriodicOrbit saddle_orbit(const MechanicalSystem& sys, double p2) {
    return find_periodic_orbit(sys, 0.5 * p2 * p2 + 1.0, Vec4(kPi, 0.0, 0.0, p2), kTwoPi / p2, tight());
}

std::shared_ptr<const Section> section_for(const MechanicalSystem& sys, const PeriodicOrbit& orb) {
    return std::make_shared<const Section>(sys, orb.energy, 0.0, tight().integ);
}

// upper separatrix of the pendulum through the saddle at x1 = pi
std::array<Jet2, 2> separatrix_graph(const Jet2& x1, const Jet2&) { return {-2.0 * cos(x1 * 0.5), Jet2(1.0)}; }

PlanarMap linear_map(const Mat2& A) {
    const Mat2 Ai = A.inverse();
    return {[A](const Vec2& s) -> Vec2 { return A * s; }, [Ai](const Vec2& s) -> Vec2 { return Ai * s; }};
}

SplitSpec product_split(double tilt) {
    SplitSpec sp;
    sp.tilt = tilt;
    sp.center = Vec2(kTwoPi - 0.8, -0.6);
    sp.unstable_graph = separatrix_graph;
    return sp;
}

}  // namespace

TEST_CASE("hyperbolic splitting") {
    const auto orb = saddle_orbit(systems::pendulum_rotor(), 1.0);
    const auto sp = hyperbolic_splitting(orb);
    CHECK(std::abs(sp.lambda_u / std::exp(kTwoPi) - 1.0) < 1e-6);
    CHECK(std::abs(sp.lambda_s / std::exp(-kTwoPi) - 1.0) < 1e-5);
    CHECK(std::abs(sp.lambda_u * sp.lambda_s - 1.0) < 1e-6);
    CHECK(std::abs(sp.v_u.norm() - 1.0) < 1e-15);

    const auto lin = hyperbolic_splitting(Mat2(Eigen::DiagonalMatrix<double, 2>(2.0, 0.5)));
    CHECK(lin.lambda_u == 2.0);
    CHECK(lin.lambda_s == 0.5);
    CHECK((lin.v_u - Vec2(1, 0)).norm() == 0.0);
    CHECK((lin.v_s - Vec2(0, 1)).norm() == 0.0);

    Mat2 rot;
    rot << std::cos(0.3), -std::sin(0.3), std::sin(0.3), std::cos(0.3);
    CHECK_THROWS_AS(hyperbolic_splitting(rot), NotHyperbolicError);
    CHECK_THROWS_AS(hyperbolic_splitting(Mat2(Mat2::Identity())), NotHyperbolicError);
}

TEST_CASE("section return map") {
    const auto sys = systems::pendulum_rotor();
    const auto orb = saddle_orbit(sys, 1.0);
    const auto sec = section_for(sys, orb);
    const Vec2 fp = sec->fixed_point(orb);
    CHECK((sec->forward(fp) - fp).norm() < 1e-10);
    CHECK((sec->backward(fp) - fp).norm() < 1e-10);
    const auto sp = hyperbolic_splitting(sec->derivative(fp));
    CHECK(std::abs(sp.lambda_u / std::exp(kTwoPi) - 1.0) < 1e-6);
    // separatrix directions (1, +-1) at the saddle
    CHECK((sp.v_u - Vec2(1, 1).normalized()).norm() < 1e-8);
    CHECK((sp.v_s - Vec2(1, -1).normalized()).norm() < 1e-8);
    // forward then backward is the identity
    const Vec2 s(3.3, 0.1);
    CHECK((sec->backward(sec->forward(s)) - s).norm() < 1e-9);
    CHECK_THROWS_AS(sec->lift(Vec2(0.0, 3.0)), InvalidInputError);

    // several section levels inside one step at high momentum
    const auto fast = saddle_orbit(sys, 4.0);
    const auto fsec = section_for(sys, fast);
    const auto fsp = hyperbolic_splitting(fsec->derivative(fsec->fixed_point(fast)));
    CHECK(std::abs(fsp.lambda_s / std::exp(-kPi / 2) - 1.0) < 1e-7);
}

TEST_CASE("local manifolds of the product system") {
    const auto sys = systems::pendulum_rotor();
    const auto orb = saddle_orbit(sys, 1.0);
    const auto sec = section_for(sys, orb);
    const auto map = section_map(sec);
    const auto wu = grow_local_manifold(sec, orb, Side::Unstable, 1, 6.0);
    const auto ws = grow_local_manifold(sec, orb, Side::Stable, -1, 6.0);
    REQUIRE_FALSE(wu.truncated);
    REQUIRE_FALSE(ws.truncated);
    CHECK(wu.length() > 6.0);
    CHECK(wu.points.back()(0) > kTwoPi);   // past the top of the separatrix
    CHECK(ws.points.back()(0) < 0.0);

    double sep = 0.0, level = 0.0;
    for (const auto& p : wu.points) {
        sep = std::max(sep, std::abs(p(1) + 2 * std::cos(p(0) / 2)));
        level = std::max(level, std::abs(sys.hamiltonian(sec->lift(p)) - 1.5));
    }
    for (const auto& p : ws.points) sep = std::max(sep, std::abs(p(1) - 2 * std::cos(p(0) / 2)));
    CHECK(sep < 1e-5);
    CHECK(level < 1e-8);
    CHECK(invariance_defect(wu, map) < 1e-6);
    CHECK(invariance_defect(ws, map) < 1e-6);

    // adjacent segments turn by less than the angle bound
    for (std::size_t i = 1; i + 1 < wu.points.size(); ++i) {
        const Vec2 a = wu.points[i] - wu.points[i - 1], b = wu.points[i + 1] - wu.points[i];
        CHECK(std::atan2(std::abs(a(0) * b(1) - a(1) * b(0)), a.dot(b)) < 0.2);
    }
}

TEST_CASE("branch tends to the tangent line") {
    const auto sys = systems::pendulum_rotor();
    const auto orb = saddle_orbit(sys, 1.0);
    const auto sec = section_for(sys, orb);
    auto deviation = [&](double a) {
        const auto br = grow_local_manifold(sec, orb, Side::Unstable, 1, a);
        double dev = 0.0;
        for (const auto& p : br.points) {
            const Vec2 d = p - br.fixed_point;
            dev = std::max(dev, std::abs(d(0) * br.direction(1) - d(1) * br.direction(0)));
        }
        return dev;
    };
    const double d1 = deviation(0.04), d2 = deviation(0.02), d3 = deviation(0.01);
    CHECK(d1 < 0.04 * 0.04);
    CHECK(d2 / d1 < 0.3);
    CHECK(d3 / d2 < 0.3);
}

TEST_CASE("stable branch contraction") {
    const auto sys = systems::pendulum_rotor();
    const auto orb = saddle_orbit(sys, 4.0);
    const auto sec = section_for(sys, orb);
    const auto map = section_map(sec);
    const Vec2 fp = sec->fixed_point(orb);
    const auto sp = hyperbolic_splitting(sec->derivative(fp));
    const auto ws = grow_branch(map, fp, sp, Side::Stable, 1, 0.5);
    for (double target : {0.3, 0.1, 0.03}) {
        std::size_t i = 0;
        while (i + 1 < ws.points.size() && (ws.points[i] - fp).norm() < target) ++i;
        Vec2 q = ws.points[i];
        const double d0 = (q - fp).norm();
        for (int k = 0; k < 5; ++k) q = map.forward(q);
        CHECK((q - fp).norm() / d0 <= std::pow(std::abs(sp.lambda_s), 5) * 1.1);
    }
}

TEST_CASE("fundamental domains") {
    const Mat2 A = Eigen::DiagonalMatrix<double, 2>(2.0, 0.5);
    const auto map = linear_map(A);
    const auto sp = hyperbolic_splitting(A);
    const auto br = grow_branch(map, Vec2::Zero(), sp, Side::Unstable, 1, 1.0);
    const auto fd = fundamental_domain(br, map);
    const Vec2 xi = br.evaluate(1.0);
    CHECK(std::abs(xi(1)) == 0.0);
    CHECK((fd.start - xi).norm() == 0.0);
    CHECK((fd.end - 2.0 * xi).norm() < 1e-15 * xi.norm());
    for (const auto& p : fd.points) {
        CHECK(p(0) >= xi(0) * (1 - 1e-14));
        CHECK(p(0) <= 2 * xi(0) * (1 + 1e-14));
    }

    ManifoldBranch single = br;
    single.points.resize(1);
    single.params.resize(1);
    CHECK_THROWS_AS(fundamental_domain(single, map), InvalidInputError);
    CHECK_THROWS_AS(fundamental_domain(br, map, br.params.back()), BranchError);

    const auto sys = systems::pendulum_rotor();
    const auto orb = saddle_orbit(sys, 1.0);
    const auto sec = section_for(sys, orb);
    const auto wu = grow_local_manifold(sec, orb, Side::Unstable, 1, 6.0);
    const double top = wu.params.back() - 1.0;
    REQUIRE(top > 0.5);
    for (double u0 : {0.5, top - 0.3, top}) CHECK(fundamental_domain(wu, section_map(sec), u0).endpoint_defect < 1e-6);
}

TEST_CASE("heteroclinic search") {
    SUBCASE("coincident separatrices are tangential") {
        const auto sys = systems::pendulum_rotor();
        const auto orb = saddle_orbit(sys, 1.0);
        const auto sec = section_for(sys, orb);
        const auto wu = grow_local_manifold(sec, orb, Side::Unstable, 1, 6.0);
        const auto ws = grow_local_manifold(sec, orb, Side::Stable, -1, 6.0);
        const auto recs = find_heteroclinic(wu, ws);
        REQUIRE_FALSE(recs.empty());
        for (const auto& r : recs) {
            CHECK(r.angle <= 1e-4);
            CHECK_FALSE(r.transversal);
            CHECK(r.gap < 1e-6);
            CHECK(r.shift == 1);
        }
    }
    SUBCASE("coupling splits the separatrices") {
        std::vector<double> angles;
        for (double eps : {0.005, 0.01, 0.02}) {
            const auto sys = systems::coupled_pendulum_rotor(eps);
            const auto orb = saddle_orbit(sys, 1.0);
            const auto sec = section_for(sys, orb);
            const auto recs = find_heteroclinic(grow_local_manifold(sec, orb, Side::Unstable, 1, 6.0),
                                                grow_local_manifold(sec, orb, Side::Stable, -1, 6.0));
            double best = 0.0;
            for (const auto& r : recs) {
                CHECK(r.gap < 1e-6);
                CHECK(r.angle >= 0.0);
                CHECK(r.angle <= kPi / 2);
                best = std::max(best, r.angle);
            }
            angles.push_back(best);
        }
        CHECK(angles[0] > 1e-4);
        CHECK(angles[1] > angles[0]);
        CHECK(angles[2] > angles[1]);
        // first-order growth: doubling eps roughly doubles the angle
        CHECK(std::abs(angles[2] / angles[1] - 2.0) < 0.1);
    }
    SUBCASE("disjoint branches") {
        const auto sys = systems::pendulum_rotor();
        const auto orb = saddle_orbit(sys, 1.0);
        const auto sec = section_for(sys, orb);
        // upper unstable and lower stable branches on the same side meet only at the saddle
        const auto recs = find_heteroclinic(grow_local_manifold(sec, orb, Side::Unstable, 1, 2.0),
                                            grow_local_manifold(sec, orb, Side::Stable, 1, 2.0));
        CHECK(recs.empty());
    }
}

TEST_CASE("Lagrangian graphs and graph potentials") {
    const auto sys = systems::pendulum_rotor();
    LagrangianGraph g;
    g.center = Vec2(kTwoPi - 0.8, -0.6);
    g.inner = 0.3;
    g.outer = 0.5;
    g.momentum = separatrix_graph;
    CHECK(g.curl_defect() < 1e-12);

    SUBCASE("graph in the level gives zero inside") {
        const auto f = graph_potential(sys, g, 1.5);
        for (double r : {0.0, 0.1, 0.25})
            for (double phi : {0.0, 1.0, 2.5}) {
                const Vec2 x = g.center + r * Vec2(std::cos(phi), std::sin(phi));
                CHECK(std::abs(f->value(x(0), x(1))) < 1e-14);
            }
        CHECK(f->value(g.center(0) + 0.6, g.center(1)) == 0.0);
    }
    SUBCASE("constant offset") {
        const double c = 0.01;
        const auto f = graph_potential(sys, g, 1.5 - c);
        const Jet2 j = f->jet(g.center(0) + 0.1, g.center(1) - 0.05);
        CHECK(std::abs(j.value() + c) < 1e-14);
        CHECK(j.gradient().norm() < 1e-13);
    }
    SUBCASE("blend failure and non-Lagrangian input") {
        CHECK_THROWS_AS(graph_potential(sys, g, 2.0), BlendError);
        LagrangianGraph twisted = g;
        twisted.momentum = [](const Jet2& x1, const Jet2& x2) { return std::array<Jet2, 2>{x2, Jet2(1.0) + 0.0 * x1}; };
        CHECK(twisted.curl_defect() > 0.5);
        CHECK_THROWS_AS(graph_potential(sys, twisted, 1.5), InvalidInputError);
    }
    SUBCASE("tilted graph lies in the new level and is invariant") {
        LagrangianGraph tilted = g;
        const Vec2 bc = g.center;
        tilted.momentum = [bc](const Jet2& x1, const Jet2& x2) {
            auto p = separatrix_graph(x1, x2);
            const Jet2 e1 = x1 - bc(0), e2 = x2 - bc(1);
            const Jet2 w = bump_of_sq_derivative(Jet2((e1 * e1 + e2 * e2) / 0.04)) * (2.0 * 1e-3 / 0.04);
            p[0] += w * e1;
            p[1] += w * e2;
            return p;
        };
        CHECK(tilted.curl_defect() < 1e-6);
        const auto f = graph_potential(sys, tilted, 1.5);
        const auto perturbed = sys.with_potential(f);
        for (double r : {0.0, 0.12, 0.25})
            for (double phi : {0.3, 2.0, 4.0}) {
                const Vec2 x = g.center + r * Vec2(std::cos(phi), std::sin(phi));
                const auto p = tilted.at(x(0), x(1));
                CHECK(std::abs(perturbed.hamiltonian(Vec4(x(0), x(1), p[0].value(), p[1].value())) - 1.5) < 1e-8);
            }
        // the step-size controller alone does not resolve the narrow bump
        IntegratorOptions integ;
        integ.tol = 1e-12;
        integ.fine_discs = {{g.center(0), g.center(1), g.outer}};
        integ.fine_max_step = 0.005;
        CHECK(graph_invariance_defect(perturbed, tilted, 50, kTwoPi, integ) < 1e-5);
    }
    SUBCASE("generating-function fit") {
        std::vector<Vec4> samples;
        for (int i = -6; i <= 6; ++i)
            for (int j = -6; j <= 6; ++j) {
                const Vec2 x = g.center + 0.09 * Vec2(i, j);
                samples.emplace_back(x(0), x(1), -2 * std::cos(x(0) / 2), 1.0);
            }
        const auto fit = fit_lagrangian_graph(samples, g.center, g.inner, g.outer);
        CHECK(fit.curl_defect() < 1e-10);
        const auto p = fit.at(g.center(0) + 0.2, g.center(1) - 0.1);
        CHECK(std::abs(p[0].value() + 2 * std::cos((g.center(0) + 0.2) / 2)) < 1e-8);
        CHECK(std::abs(p[1].value() - 1.0) < 1e-8);
    }
}

TEST_CASE("manifold splitting by a graph tilt") {
    const auto sys = systems::pendulum_rotor();
    const auto orb = saddle_orbit(sys, 1.0);

    const auto tilted = split_manifolds(sys, orb, orb, 1.5, 0.0, product_split(1e-3));
    CHECK(tilted.max_angle_before <= 1e-4);
    CHECK(tilted.max_angle_after > 1e-3);
    CHECK(tilted.closure_1 <= 1e-8);
    CHECK(tilted.period_change_1 <= 1e-8);
    CHECK(std::any_of(tilted.after.begin(), tilted.after.end(), [](const auto& r) { return r.transversal; }));
    for (const auto& r : tilted.after) CHECK(r.gap < 1e-6);

    const auto flat = split_manifolds(sys, orb, orb, 1.5, 0.0, product_split(0.0));
    CHECK(flat.max_angle_after <= 1e-4);
    CHECK(std::abs(flat.max_angle_after - flat.max_angle_before) < 1e-6);

    SplitSpec bad = product_split(1e-3);
    bad.center = Vec2(kPi + 0.2, 1.0);
    CHECK_THROWS_AS(split_manifolds(sys, orb, orb, 1.5, 0.0, bad), SupportOverlapError);
}
