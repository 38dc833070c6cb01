#pragma once
// Hamiltonian flow, normal (gradient) flow, variational and forced variational equations.

#include <functional>
#include <utility>
#include <vector>

#include "torusdyn/integrator.hpp"
#include "torusdyn/symplectic.hpp"
#include "torusdyn/system.hpp"

namespace torusdyn {

Vec4 hamiltonian_field(const MechanicalSystem& sys, const Vec4& z);
Vec4 normal_field(const MechanicalSystem& sys, const Vec4& z);

struct TrajectorySample {
    double t = 0.0;
    Vec4 z = Vec4::Zero();
    Vec4 dz = Vec4::Zero();   // X(z)
    Vec4 ddz = Vec4::Zero();  // J Hess(z) X(z)
    double energy = 0.0;
};

class Trajectory {
public:
    Trajectory() = default;
    explicit Trajectory(std::vector<TrajectorySample> samples) : samples_(std::move(samples)) {}

    const std::vector<TrajectorySample>& samples() const { return samples_; }
    double t_begin() const { return samples_.front().t; }
    double t_end() const { return samples_.back().t; }
    const Vec4& end_state() const { return samples_.back().z; }

    // Quintic Hermite interpolation between accepted steps.
    Vec4 at(double t) const;
    // max |H(sample) - H(initial)| / max(1, |H(initial)|)
    double relative_energy_drift() const;

private:
    std::vector<TrajectorySample> samples_;
};

Trajectory integrate_flow(const MechanicalSystem& sys, const Vec4& z0, double T,
                          const IntegratorOptions& opt = {});
Vec4 flow_endpoint(const MechanicalSystem& sys, const Vec4& z0, double T, const IntegratorOptions& opt = {});

template <typename Scalar>
struct VariationalStateT {
    Eigen::Matrix<Scalar, 4, 1> z = Eigen::Matrix<Scalar, 4, 1>::Zero();
    Eigen::Matrix<Scalar, 4, 4> M = Eigen::Matrix<Scalar, 4, 4>::Identity();
};
using VariationalState = VariationalStateT<double>;

// Flow and its differential. Scalar = long double runs the variational equation
// in extended precision (the Hessian itself is evaluated in double).
template <typename Scalar = double>
VariationalStateT<Scalar> integrate_variational(const MechanicalSystem& sys, const Eigen::Matrix<Scalar, 4, 1>& z0,
                                                Scalar T, const IntegratorOptions& opt = {});
extern template VariationalStateT<double> integrate_variational<double>(const MechanicalSystem&, const Vec4&, double,
                                                                        const IntegratorOptions&);
extern template VariationalStateT<long double> integrate_variational<long double>(
    const MechanicalSystem&, const Eigen::Matrix<long double, 4, 1>&, long double, const IntegratorOptions&);

// States at increasing times t_i in [0, T] (one integration pass).
std::vector<VariationalState> variational_at_times(const MechanicalSystem& sys, const Vec4& z0,
                                                   const std::vector<double>& times,
                                                   const IntegratorOptions& opt = {});

// Flow of the normal field grad H for time s, |s| < eps_normal.
Vec4 integrate_normal_flow(const MechanicalSystem& sys, const Vec4& z0, double s, double eps_normal = 0.1,
                           const IntegratorOptions& opt = {});

// e(s) = H(normal flow of z for time s): central-difference slope at 0 (Richardson, base step h)
// and strict monotonicity over `samples` points of (-eps_normal, eps_normal).
struct NormalGerm {
    double slope = 0.0;
    double expected = 0.0;  // |grad H(z)|^2
    bool monotone = true;
};
NormalGerm normal_germ(const MechanicalSystem& sys, const Vec4& z, double eps_normal = 0.1, int samples = 19,
                       double h = 1e-3, const IntegratorOptions& opt = {});

struct Forcing {
    std::function<Vec4(double t, const Vec4& z)> b;
    // intervals where the forcing varies quickly; stepped finely and never skipped
    std::vector<std::pair<double, double>> support;
    double support_max_step = 0.0;
    // re-run with halved support steps and throw AccuracyError if the change exceeds verify_tol
    bool verify = false;
    double verify_tol = 1e-8;
};

struct ForcedResult {
    Vec4 value = Vec4::Zero();  // dpsi_T * int_0^T (dpsi_t)^{-1} b(t) dt
    Vec4 z_end = Vec4::Zero();
    Mat4 M = Mat4::Identity();
};

// Variation of constants along the trajectory from z0. With use_adjoint the inverse
// differential is co-integrated (W' = -W J Hess); otherwise it is formed by explicit
// inversion at every right-hand-side evaluation (testing only).
ForcedResult forced_variational(const MechanicalSystem& sys, const Vec4& z0, double T, const Forcing& forcing,
                                const IntegratorOptions& opt = {}, bool use_adjoint = true);

}  // namespace torusdyn
