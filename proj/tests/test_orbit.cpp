#include "doctest.h"
#include "torusdyn/orbit.hpp"

using namespace torusdyn;

TEST_CASE("rho components") {
    const auto sys = systems::free_particle();
    const Vec4 z(0, 0, 1, 0);
    const auto r = rho_eval(sys, 0.5, z, kTwoPi, 0.0);
    CHECK(phase_distance(r.flow_image, z) < 1e-12);
    CHECK(std::abs(r.level_defect) < 1e-15);
    const auto moved = rho_eval(sys, 0.5, z, 0.0, 0.05);
    CHECK(std::abs(sys.hamiltonian(moved.normal_image) - 0.5) > 1e-3);
}

TEST_CASE("symplectic frame") {
    const auto f = symplectic_frame(systems::free_particle(), Vec4(0, 0, 1, 0));
    CHECK((f.u1 - Vec4(1, 0, 0, 0)).norm() < 1e-15);
    CHECK((f.u1s - Vec4(0, 0, -1, 0)).norm() < 1e-15);
    const auto sys = systems::anisotropic();
    for (const Vec4 z : {Vec4(0.3, 1.0, 0.5, -0.7), Vec4(2.0, 4.0, -1.1, 0.2), Vec4(kPi, 1.0, 0.0, 1.3)}) {
        const auto fr = symplectic_frame(sys, z);
        CHECK((fr.gram() - standard_J()).cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK_THROWS_AS(symplectic_frame(systems::pendulum_rotor(), Vec4(kPi, 0, 0, 0)), SingularFrameError);
}

TEST_CASE("pendulum rotor orbit: hyperbolic multipliers") {
    const auto sys = systems::pendulum_rotor();
    const auto o = find_periodic_orbit(sys, 1.5, Vec4(kPi + 0.01, 0.02, 0.0, 1.0), 6.2);
    CHECK(o.period == doctest::Approx(kTwoPi).epsilon(1e-9));
    CHECK(o.residual < 1e-8);
    const auto ev = eigenvalues2(o.dP);
    const double big = std::max(std::abs(ev[0]), std::abs(ev[1]));
    const double small = std::min(std::abs(ev[0]), std::abs(ev[1]));
    CHECK(big == doctest::Approx(535.4917).epsilon(1e-6));
    CHECK(small == doctest::Approx(0.0018674).epsilon(1e-4));
    CHECK(o.stability == Stability::Hyperbolic);
    for (const auto& v : o.verdicts) {
        CHECK(v.nondegenerate);
        CHECK(v.agree());
    }
    CHECK(block_form_defect(o.monodromy_in_frame) < 1e-8);
    for (int m = 1; m <= 3; ++m) CHECK(charpoly_factorization_residual(o, m) < 1e-6);
}

TEST_CASE("free particle orbit: parabolic and degenerate") {
    const auto sys = systems::free_particle();
    const auto o = find_periodic_orbit(sys, 0.5, Vec4(0.0, 0.0, 1.0, 0.0), kTwoPi);
    CHECK(o.period == doctest::Approx(kTwoPi).epsilon(1e-10));
    CHECK(o.stability == Stability::Parabolic);
    for (const auto& v : o.verdicts) {
        CHECK_FALSE(v.nondegenerate);
        CHECK(v.agree());
    }
}

TEST_CASE("minimal period from a doubled guess") {
    const auto sys = systems::free_particle();
    const auto o = find_periodic_orbit(sys, 0.5, Vec4(0.0, 0.0, 1.0, 0.0), 2 * kTwoPi);
    CHECK(o.period == doctest::Approx(kTwoPi).epsilon(1e-10));
}

TEST_CASE("degenerate guess and failure") {
    const auto sys = systems::free_particle();
    CHECK_THROWS_AS(find_periodic_orbit(sys, 0.5, Vec4(0, 0, 1, 0), 0.0), InvalidInputError);
    CHECK_THROWS_AS(find_periodic_orbit(sys, 0.5, Vec4(0, 0, 0.6, 0.8), 3.0), DegenerateGuessError);
    OrbitOptions opt;
    opt.max_iterations = 1;
    CHECK_THROWS_AS(find_periodic_orbit(systems::pendulum_rotor(), 1.5, Vec4(kPi + 0.3, 0, 0, 1), 6.0, opt),
                    NoOrbitError);
}

TEST_CASE("rotation transverse map: roots of unity") {
    const double a = kTwoPi / 5;
    Mat2 R;
    R << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    const auto v = classify_nondegeneracy(embed_transverse(R), 12, 1e-6);
    for (const auto& x : v) {
        CHECK(x.nondegenerate == (x.order % 5 != 0));
        CHECK(x.agree());
    }
    CHECK(v[4].root_index % 5 != 0);
    CHECK(classify_stability(R) == Stability::Elliptic);

    // elliptic orbit of the rotor with rotation number 1/5
    const auto sys = systems::pendulum_rotor();
    const auto o = find_periodic_orbit(sys, 11.5, Vec4(0.0, 0.0, 0.0, 5.0), kTwoPi / 5);
    CHECK(o.stability == Stability::Elliptic);
    CHECK(std::abs(o.dP.trace() - 2 * std::cos(a)) < 1e-6);
    CHECK_FALSE(o.verdicts[4].nondegenerate);
}

TEST_CASE("orbit scan on the free particle") {
    const auto sys = systems::free_particle();
    const auto res = scan_short_orbits(sys, 0.5, 7.0, 2, {}, 0);
    REQUIRE(res.min_period);
    CHECK(*res.min_period == doctest::Approx(kTwoPi).epsilon(1e-8));
    // x2-direction and x1-direction families in both orientations, one per seed x-coordinate class
    CHECK(res.orbits.size() >= 4);
    for (const auto& o : res.orbits) CHECK(o.period == doctest::Approx(kTwoPi).epsilon(1e-8));
}

TEST_CASE("regular level check") {
    const auto fr = regular_level_check(systems::free_particle(), 0.5, 8);
    CHECK(fr.is_regular);
    CHECK(fr.min_gradient_norm == doctest::Approx(1.0).epsilon(1e-12));
    const auto crit = regular_level_check(systems::pendulum_rotor(), 1.0, 8);
    CHECK_FALSE(crit.is_regular);
    REQUIRE(crit.suggested_delta);
    CHECK(*crit.suggested_delta > 0);
    CHECK(regular_level_check(systems::pendulum_rotor(), 1.5, 8).is_regular);
    const auto empty = regular_level_check(systems::pendulum_rotor(), -2.0, 8);
    CHECK(empty.is_regular);
    CHECK(empty.level_empty);
}

TEST_CASE("twist times") {
    const auto fp = systems::free_particle();
    const Vec4 z(0, 0, 1, 0);
    const auto vert = twist_times(fp, z, Vec4(0, 0, 1, 0), Vec4(0, 0, 0, 1), 5.0);
    REQUIRE(vert.roots.size() == 1);
    CHECK(vert.roots[0] == 0.0);
    const auto hor = twist_times(fp, z, Vec4(1, 0, 0, 0), Vec4(0, 1, 0, 0), 5.0);
    CHECK(hor.roots.empty());

    const double w2 = std::sqrt(2.0);
    const auto tw = systems::twin_wells(1.0, w2);
    // linearised flow is diag(cos, sin/omega) per axis, so the vertical plane hits the vertical
    // subspace at k pi / omega and the horizontal plane at (k + 1/2) pi / omega
    const auto rv = twist_times(tw, Vec4(0, 0, 1e-3, 0), Vec4(0, 0, 1, 0), Vec4(0, 0, 0, 1), 7.0);
    std::vector<double> ev{0.0, kPi / w2, kPi, 2 * kPi / w2, 2 * kPi, 3 * kPi / w2};
    REQUIRE(rv.roots.size() == ev.size());
    for (std::size_t i = 0; i < ev.size(); ++i) CHECK(rv.roots[i] == doctest::Approx(ev[i]).epsilon(1e-4));
    const auto rh = twist_times(tw, Vec4(0, 0, 1e-3, 0), Vec4(1, 0, 0, 0), Vec4(0, 1, 0, 0), 7.0);
    std::vector<double> eh{kPi / (2 * w2), kPi / 2, 3 * kPi / (2 * w2), 3 * kPi / 2, 5 * kPi / (2 * w2)};
    REQUIRE(rh.roots.size() == eh.size());
    for (std::size_t i = 0; i < eh.size(); ++i) CHECK(rh.roots[i] == doctest::Approx(eh[i]).epsilon(1e-4));
}
