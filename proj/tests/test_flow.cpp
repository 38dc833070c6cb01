#include <random>

#include "doctest.h"
#include "torusdyn/flow.hpp"

using namespace torusdyn;

TEST_CASE("J convention: omega(Y, X) = |grad H|^2 and X = J Y") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const auto sys = systems::anisotropic();
    for (int i = 0; i < 200; ++i) {
        const Vec4 z(u(rng), u(rng), u(rng), u(rng));
        const Vec4 X = hamiltonian_field(sys, z), Y = normal_field(sys, z);
        CHECK((X - standard_J() * Y).norm() <= 1e-12);
        CHECK(std::abs(omega(Y, X) - Y.squaredNorm()) <= 1e-10 * std::max(1.0, Y.squaredNorm()));
    }
    CHECK((hamiltonian_field(systems::free_particle(), Vec4(0, 0, 1, 0)) - Vec4(1, 0, 0, 0)).norm() == 0.0);
    CHECK((normal_field(systems::free_particle(), Vec4(0, 0, 1, 0)) - Vec4(0, 0, 1, 0)).norm() == 0.0);
    CHECK(hamiltonian_field(systems::pendulum_rotor(), Vec4(kPi, 0, 0, 0)).norm() < 1e-15);
}

TEST_CASE("integrate_flow examples") {
    const Vec4 free_end = flow_endpoint(systems::free_particle(), Vec4(0, 0, 1, 0), kTwoPi);
    CHECK(phase_distance(free_end, Vec4(0, 0, 1, 0)) < 1e-12);
    const auto traj = integrate_flow(systems::pendulum_rotor(), Vec4(kPi, 0, 0, 1), kTwoPi);
    CHECK(phase_distance(traj.end_state(), Vec4(kPi, 0, 0, 1)) < 1e-10);
    CHECK(traj.relative_energy_drift() <= 1e-9);

    // time reversal
    const auto sys = systems::anisotropic();
    const Vec4 z0(0.3, 1.1, 0.8, -0.5);
    const Vec4 z1 = flow_endpoint(sys, z0, 20.0);
    const Vec4 back = flow_endpoint(sys, z1, -20.0);
    CHECK((back - z0).norm() <= 10 * 1e-10 * 10);

    // dense output reproduces a direct integration
    const auto tr = integrate_flow(sys, z0, 10.0);
    CHECK((tr.at(3.7) - flow_endpoint(sys, z0, 3.7)).norm() < 1e-6);
}

TEST_CASE("variational examples and properties") {
    const double T = 3.3;
    const auto fr = integrate_variational(systems::free_particle(), Vec4(0.2, 0.1, 0.7, -0.4), T);
    Mat4 expect = Mat4::Identity();
    expect.block<2, 2>(0, 2) = T * Mat2::Identity();
    CHECK((fr.M - expect).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((integrate_variational(systems::anisotropic(), Vec4(1, 2, 0.3, 0.4), 0.0).M - Mat4::Identity()).norm() == 0);

    // S1 rotor orbit: pendulum block (x1, p1) has eigenvalues exp(+-T)
    const auto s1 = integrate_variational(systems::pendulum_rotor(), Vec4(kPi, 0, 0, 1), kTwoPi);
    Mat2 blk;
    blk << s1.M(0, 0), s1.M(0, 2), s1.M(2, 0), s1.M(2, 2);
    const auto ev = eigenvalues2(blk);
    CHECK(ev[0].real() == doctest::Approx(std::exp(kTwoPi)).epsilon(1e-8));
    CHECK(ev[1].real() == doctest::Approx(std::exp(-kTwoPi)).epsilon(1e-6));

    const auto sys = systems::anisotropic();
    const Vec4 z0(0.5, 2.0, 0.9, 0.3);
    const auto v = integrate_variational(sys, z0, 7.0);
    CHECK(symplectic_defect(v.M) <= 1e-8);
    CHECK(std::abs(v.M.determinant() - 1.0) <= 1e-6);
    // finite differences of the flow
    for (int k = 0; k < 4; ++k) {
        Vec4 e = Vec4::Zero();
        e(k) = 1e-6;
        const Vec4 fd = (flow_endpoint(sys, z0 + e, 7.0) - flow_endpoint(sys, z0 - e, 7.0)) / 2e-6;
        CHECK((fd - v.M.col(k)).norm() <= 1e-5 * std::max(1.0, v.M.col(k).norm()));
    }
    // flow direction invariance and cocycle
    CHECK((v.M * hamiltonian_field(sys, z0) - hamiltonian_field(sys, v.z)).norm() <= 1e-7);
    const auto a = integrate_variational(sys, z0, 3.0);
    const auto b = integrate_variational(sys, a.z, 4.0);
    CHECK((b.M * a.M - v.M).cwiseAbs().maxCoeff() <= 1e-7);

    const auto many = variational_at_times(sys, z0, {1.0, 3.0, 7.0});
    CHECK((many[2].M - v.M).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("normal flow") {
    const auto sys = systems::free_particle();
    const Vec4 z0(0, 0, 1, 0);
    CHECK((integrate_normal_flow(sys, z0, 0.0) - z0).norm() == 0.0);
    const double h = 1e-4;
    const double de = (sys.hamiltonian(integrate_normal_flow(sys, z0, h)) -
                       sys.hamiltonian(integrate_normal_flow(sys, z0, -h))) / (2 * h);
    CHECK(de == doctest::Approx(1.0).epsilon(1e-8));
    double prev = -1e9;
    for (int i = -9; i <= 9; ++i) {
        const double e = sys.hamiltonian(integrate_normal_flow(sys, z0, 0.01 * i));
        CHECK(e > prev);
        prev = e;
    }
    const Vec4 crit(kPi, 0, 0, 0);
    CHECK((integrate_normal_flow(systems::pendulum_rotor(), crit, 0.05) - crit).norm() < 1e-14);
    CHECK_THROWS_AS(integrate_normal_flow(sys, z0, 0.2), InvalidInputError);
}

TEST_CASE("forced variational") {
    const auto sys = systems::free_particle();
    Forcing zero;
    CHECK(forced_variational(sys, Vec4(0, 0, 1, 0), 2.0, zero).value.norm() == 0.0);
    Forcing c;
    c.b = [](double, const Vec4&) { return Vec4(0, 0, 1, 0); };
    const double T = 2.5;
    const Vec4 r = forced_variational(sys, Vec4(0, 0, 1, 0), T, c).value;
    CHECK((r - Vec4(T * T / 2, 0, T, 0)).norm() < 1e-12);

    // hyperbolic orbit: adjoint co-integration vs explicit inversion, and refinement
    const auto s1 = systems::pendulum_rotor();
    Forcing g;
    g.b = [](double t, const Vec4&) { return Vec4(0, 0, std::exp(-50 * (t - 3) * (t - 3)), 0); };
    g.support = {{2.0, 4.0}};
    g.support_max_step = 0.02;
    g.verify = true;
    const Vec4 ra = forced_variational(s1, Vec4(kPi, 0, 0, 1), kTwoPi, g).value;
    g.verify = false;
    const Vec4 rb = forced_variational(s1, Vec4(kPi, 0, 0, 1), kTwoPi, g, {}, false).value;
    CHECK((ra - rb).norm() <= 1e-7 * ra.norm());
}
