#pragma once
// Periodic orbits on a fixed energy level: shooting, frames, restricted Poincare
// derivative, nondegeneracy and stability, seeded scans, level regularity, twist times.

#include <algorithm>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "torusdyn/flow.hpp"

namespace torusdyn {

struct OrbitOptions {
    IntegratorOptions integ{};
    double newton_tol = 1e-10;    // residual norm for convergence
    int max_iterations = 40;
    double closure_tol = 1e-8;    // psi_T(theta) = theta
    double energy_tol = 1e-9;
    double min_period = 1e-2;     // converged T below this is a degenerate guess
    double tol_root = 1e-6;       // |lambda^m - 1|
    double tol_stability = 1e-6;  // |tr dP| vs 2
    int m_max = 12;
    double eps_normal = 0.1;
};

struct RhoValue {
    Vec4 normal_image = Vec4::Zero();
    Vec4 flow_image = Vec4::Zero();
    double level_defect = 0.0;
};

RhoValue rho_eval(const MechanicalSystem& sys, double k, const Vec4& z, double t, double s,
                  const OrbitOptions& opt = {});

// Columns u1, u2, u1s, u2s.
struct SymplecticFrame {
    Vec4 u1 = Vec4::Zero(), u2 = Vec4::Zero(), u1s = Vec4::Zero(), u2s = Vec4::Zero();
    Mat4 matrix() const;
    // Gram matrix omega(e_i, e_j); equals standard_J() for a valid frame.
    Mat4 gram() const;
};

SymplecticFrame symplectic_frame(const MechanicalSystem& sys, const Vec4& z);

// Coordinates of a linear map in the frame: E^{-1} M E.
Mat4 in_frame(const SymplecticFrame& frame, const Mat4& M);

enum class Stability { Hyperbolic, Elliptic, Parabolic };
std::string to_string(Stability s);

struct Verdict {
    int order = 1;
    bool nondegenerate = true;
    std::complex<double> eigenvalue{};  // eigenvalue closest to an m-th root of unity
    int root_index = 0;                 // j in exp(2 pi i j / m)
    double margin = 0.0;                // min |lambda^m - 1|
    bool cross_check_nondegenerate = true;
    double cross_check_margin = 0.0;    // min |mu - 1| over the deflated level spectrum of M^m
    bool agree() const { return nondegenerate == cross_check_nondegenerate; }
};

struct PeriodicOrbit {
    Vec4 theta0 = Vec4::Zero();
    double period = 0.0;
    double energy = 0.0;
    Mat4 monodromy = Mat4::Identity();
    SymplecticFrame frame;
    Mat4 monodromy_in_frame = Mat4::Identity();
    Mat2 dP = Mat2::Identity();
    std::vector<Verdict> verdicts;
    Stability stability = Stability::Parabolic;
    double residual = 0.0;
};

PeriodicOrbit find_periodic_orbit(const MechanicalSystem& sys, double k, const Vec4& guess, double guess_T,
                                  const OrbitOptions& opt = {});

// Smallest T/n (n integer) that still closes the orbit.
double minimal_period(const MechanicalSystem& sys, const PeriodicOrbit& orbit, const OrbitOptions& opt = {});

// Fills monodromy, frame, dP, verdicts, stability and residual for a closed orbit.
PeriodicOrbit complete_orbit(const MechanicalSystem& sys, const Vec4& theta0, double period,
                             const OrbitOptions& opt = {});

// Rows/columns (u2, u2s) of the frame monodromy.
Mat2 restricted_poincare(const PeriodicOrbit& orbit);

// Verdicts for orders 1..m_max from a monodromy written in a symplectic frame.
std::vector<Verdict> classify_nondegeneracy(const Mat4& monodromy_in_frame, int m_max, double tol_root);
std::vector<Verdict> classify_nondegeneracy(const PeriodicOrbit& orbit, int m_max, double tol_root = 1e-6);

Stability classify_stability(const Mat2& dP, double tol = 1e-6);

// Embeds a 2x2 transverse block into the frame form [[1,0,0,0],[0,A,0,B],[0,0,1,0],[0,C,0,D]].
Mat4 embed_transverse(const Mat2& dP);

// Max coefficient difference between det(lambda - M^m) and (lambda - 1)^2 det(lambda - dP^m),
// relative to the largest coefficient.
double charpoly_factorization_residual(const PeriodicOrbit& orbit, int m);

// Max deviation of the frame monodromy from the block form of the group fixing the
// flow/energy pair: column u1 = e1, row u1s = e3.
double block_form_defect(const Mat4& monodromy_in_frame);

// Defects of the frame identities along an orbit: generators u1 = X, u1s = -Y/|Y|^2; Gram = J;
// level tangency of u2, u2s; dpsi_T u1 = u1 and dpsi_T u1s = c u1 + u1s + (W1 part).
struct FrameInvariants {
    double generators = 0.0, gram = 0.0, tangency = 0.0, monodromy = 0.0;
    double max() const { return std::max({generators, gram, tangency, monodromy}); }
};
FrameInvariants frame_invariants(const MechanicalSystem& sys, const PeriodicOrbit& orbit);

struct ScanResult {
    std::vector<PeriodicOrbit> orbits;
    std::optional<double> min_period;  // empirical lower-bound estimate, not a certificate
    int seeds = 0;
    int newton_attempts = 0;
};

ScanResult scan_short_orbits(const MechanicalSystem& sys, double k, double T_max, int grid_density,
                             const OrbitOptions& opt = {}, unsigned jobs = 0, double dedup_radius = 1e-4);

// Hausdorff distance between two orbit curves (phase space, angles on the torus).
double orbit_distance(const MechanicalSystem& sys, const PeriodicOrbit& a, const PeriodicOrbit& b,
                      int samples = 600, const IntegratorOptions& integ = {});

struct RegularityResult {
    bool is_regular = true;
    bool level_empty = false;
    double min_gradient_norm = 0.0;
    std::vector<double> critical_values;  // critical values of H (= of the potential)
    std::optional<double> suggested_delta;
};

RegularityResult regular_level_check(const MechanicalSystem& sys, double k, int grid_density,
                                     double tol_reg = 1e-5);

struct TwistResult {
    std::vector<double> roots;
    bool non_discrete = false;
    std::vector<std::pair<double, double>> flagged_intervals;
};

// Times where the propagated plane span{f1, f2} meets the vertical subspace.
TwistResult twist_times(const MechanicalSystem& sys, const Vec4& z, const Vec4& f1, const Vec4& f2, double T,
                        const IntegratorOptions& integ = {}, double sample_step = 0.01);

}  // namespace torusdyn
