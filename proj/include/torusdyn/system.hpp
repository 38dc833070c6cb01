#pragma once
// Mechanical Hamiltonians H(x, p) = 1/2 p^T G^{-1}(x) p + sum U_i(x) on the torus.

#include <array>
#include <memory>
#include <vector>

#include "torusdyn/errors.hpp"
#include "torusdyn/potential.hpp"
#include "torusdyn/types.hpp"

namespace torusdyn {

// Entries (11, 12, 22) of the symmetric inverse metric, each a trig polynomial.
struct MetricInverse {
    std::vector<Harmonic> g11{{0, 0, 1.0, 0.0}};
    std::vector<Harmonic> g12{};
    std::vector<Harmonic> g22{{0, 0, 1.0, 0.0}};

    static MetricInverse identity() { return {}; }
};

// Value and partial derivatives of H in the variables (x1, x2, p1, p2).
struct HamiltonianDerivatives {
    double value = 0.0;
    Vec4 grad = Vec4::Zero();
    Mat4 hess = Mat4::Zero();
    // third[k] = d/dz_k of the Hessian; filled when order == 3
    std::array<Mat4, 4> third{Mat4::Zero(), Mat4::Zero(), Mat4::Zero(), Mat4::Zero()};
    int order = 0;
};

template <typename S>
S eval_trig(const std::vector<Harmonic>& hs, const S& x1, const S& x2) {
    using std::cos;
    using std::sin;
    S r = S(0.0);
    for (const auto& h : hs) {
        if (h.k1 == 0 && h.k2 == 0) {
            r += S(h.cos_coef);
            continue;
        }
        const S phase = x1 * double(h.k1) + x2 * double(h.k2);
        if (h.cos_coef != 0.0) r += cos(phase) * h.cos_coef;
        if (h.sin_coef != 0.0) r += sin(phase) * h.sin_coef;
    }
    return r;
}

class MechanicalSystem {
public:
    MechanicalSystem() = default;
    explicit MechanicalSystem(MetricInverse metric, std::vector<PotentialPtr> potentials = {});

    const MetricInverse& metric() const { return metric_; }
    const std::vector<PotentialPtr>& potentials() const { return potentials_; }

    // New system evaluating H + f; this one is unchanged.
    MechanicalSystem with_potential(PotentialPtr f) const;

    double hamiltonian(const Vec4& z) const;
    double hamiltonian(const PhasePoint& th) const;
    HamiltonianDerivatives derivatives(const Vec4& z, int order) const;
    Vec4 gradient(const Vec4& z) const;

    Mat2 metric_inverse(double x1, double x2) const;
    double potential(double x1, double x2) const;
    Jet2 potential_jet(double x1, double x2) const;

    PhasePoint legendre(const TangentPoint& th) const;
    TangentPoint legendre_inverse(const PhasePoint& th) const;
    double energy_function(const TangentPoint& th) const;

    // H evaluated on any scalar type (used with jets for coordinate changes).
    template <typename S>
    S hamiltonian_generic(const S& x1, const S& x2, const S& p1, const S& p2) const {
        const S g11 = eval_trig(metric_.g11, x1, x2);
        const S g12 = eval_trig(metric_.g12, x1, x2);
        const S g22 = eval_trig(metric_.g22, x1, x2);
        S h = 0.5 * (g11 * p1 * p1 + g22 * p2 * p2) + g12 * p1 * p2;
        for (const auto& u : potentials_) h += evaluate_potential(*u, x1, x2);
        return h;
    }

private:
    MetricInverse metric_;
    std::vector<PotentialPtr> potentials_;
};

// Named systems used by tests, the acceptance suite and the CLI defaults.
namespace systems {
MechanicalSystem free_particle();
// Pendulum x rotor: G^{-1} = I, U = -cos x1.
MechanicalSystem pendulum_rotor();
// Pendulum x rotor plus eps (1 + cos x1) cos x2; the orbits x1 = pi, p1 = 0 persist.
MechanicalSystem coupled_pendulum_rotor(double eps);
// G^{-1} = diag(1, 1 + cos(x1)/2), U = -cos x1 - 0.1 cos x1 cos x2.
MechanicalSystem anisotropic();
// Decoupled harmonic-like wells: U = -w1^2 cos x1 - w2^2 cos x2.
MechanicalSystem twin_wells(double w1, double w2);
}  // namespace systems

}  // namespace torusdyn
