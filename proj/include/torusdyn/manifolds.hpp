#pragma once
// Stable and unstable manifolds of hyperbolic orbits on a Poincare section x2 = const,
// heteroclinic intersections, and graph potentials that tilt a Lagrangian graph.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "torusdyn/orbit.hpp"

namespace torusdyn {

// Section {x2 = c} of a fixed energy level, crossed with x2 increasing; coordinates (x1, p1).
class Section {
public:
    Section(MechanicalSystem sys, double k, double x2, IntegratorOptions integ = {});

    const MechanicalSystem& system() const { return sys_; }
    double energy() const { return k_; }
    double level() const { return c_; }

    // Phase point above s on the level; InvalidInputError when no such point exists.
    Vec4 lift(const Vec2& s) const;
    Vec2 project(const Vec4& z) const { return {z(0), z(2)}; }

    struct Crossing {
        Vec4 z = Vec4::Zero();
        double time = 0.0;
    };
    // Next crossing forward (or previous, backward) in time; BranchError if none within max_time.
    Crossing next_crossing(const Vec4& z, bool forward = true, double max_time = 200.0) const;

    Vec2 forward(const Vec2& s) const;
    Vec2 backward(const Vec2& s) const;
    // Derivative of the forward return map.
    Mat2 derivative(const Vec2& s) const;
    // Section point of an orbit and the return map derivative there.
    Vec2 fixed_point(const PeriodicOrbit& orbit) const;

private:
    MechanicalSystem sys_;
    double k_, c_;
    IntegratorOptions integ_;
};

struct PlanarMap {
    std::function<Vec2(const Vec2&)> forward;
    std::function<Vec2(const Vec2&)> backward;
};

PlanarMap section_map(std::shared_ptr<const Section> section);

struct HyperbolicSplitting {
    double lambda_u = 0.0, lambda_s = 0.0;
    Vec2 v_u = Vec2::Zero(), v_s = Vec2::Zero();  // unit, first nonzero component positive
};

HyperbolicSplitting hyperbolic_splitting(const Mat2& dP, double tol = 1e-6);
HyperbolicSplitting hyperbolic_splitting(const PeriodicOrbit& orbit, double tol = 1e-6);

enum class Side { Stable, Unstable };
std::string to_string(Side s);

struct ManifoldBranch {
    Side side = Side::Unstable;
    int sign = 1;
    Vec2 fixed_point = Vec2::Zero();
    Vec2 direction = Vec2::Zero();   // eigenvector, times sign
    double expansion = 0.0;          // |eigenvalue| of the outward map F^stride
    int stride = 1;                  // 2 when the eigenvalue is negative
    double seed_distance = 0.0;
    // point(u) = F^n(fixed + seed_distance * expansion^f * direction), n = floor(u), f = u - n,
    // with F the forward map (unstable) or backward map (stable), iterated stride times per level
    std::vector<double> params;
    std::vector<Vec2> points;
    std::vector<double> arclength;   // measured from the fixed point
    bool truncated = false;
    std::string warning;
    std::function<Vec2(double)> evaluate;  // the parametrisation above

    double length() const { return arclength.empty() ? 0.0 : arclength.back(); }
};

struct GrowOptions {
    double tol = 1e-9;           // first-iterate deviation of the seed from the tangent line
    double max_angle = 0.2;      // turning angle between adjacent segments
    double max_spacing = 0.05;
    int max_points = 4000;
    unsigned jobs = 0;
};

ManifoldBranch grow_branch(const PlanarMap& map, const Vec2& fixed_point, const HyperbolicSplitting& split,
                           Side side, int sign, double radius, const GrowOptions& opt = {});
ManifoldBranch grow_local_manifold(std::shared_ptr<const Section> section, const PeriodicOrbit& orbit, Side side,
                                   int sign, double radius, const GrowOptions& opt = {});

// Distance of F(point) (stable: forward, unstable: backward) from the polyline, max over samples.
double invariance_defect(const ManifoldBranch& branch, const PlanarMap& map, int samples = 50);

struct FundamentalDomain {
    double u0 = 0.0;
    std::vector<Vec2> points;   // from xi to its image
    Vec2 start = Vec2::Zero(), end = Vec2::Zero();
    double endpoint_defect = 0.0;  // |F(start) - end| with F the outward map
};
FundamentalDomain fundamental_domain(const ManifoldBranch& branch, const PlanarMap& map, double u0 = 1.0);

struct HeteroclinicRecord {
    Vec2 point = Vec2::Zero();          // on the unstable branch
    Vec2 tangent_u = Vec2::Zero(), tangent_s = Vec2::Zero();
    double angle = 0.0;                 // in [0, pi/2]
    double gap = 0.0;                   // distance between the curves at the record
    int shift = 0;                      // stable branch shifted by 2 pi * shift in x1
    bool refined = false;
    bool transversal = false;
};

std::vector<HeteroclinicRecord> find_heteroclinic(const ManifoldBranch& unstable, const ManifoldBranch& stable,
                                                  double tol_angle = 1e-4, double contact_tol = 1e-6);

// Momentum field p(x) on a disc of the torus, with a blend collar between radii inner and outer.
struct LagrangianGraph {
    Vec2 center = Vec2::Zero();
    double inner = 0.0, outer = 0.0;
    std::function<std::array<Jet2, 2>(const Jet2& x1, const Jet2& x2)> momentum;  // x lifted near center

    std::array<Jet2, 2> at(double x1, double x2) const;
    // max |dp1/dx2 - dp2/dx1| over a polar grid of the outer disc
    double curl_defect(int n = 24) const;
};

// f(x) = sigma(x) (k - H(x, p(x))), sigma = 1 on the inner disc and 0 outside the outer one.
class GraphPotential final : public PotentialTerm {
public:
    GraphPotential(MechanicalSystem base, LagrangianGraph graph, double k);
    Jet2 jet(double x1, double x2) const override;
    std::string kind() const override { return "graph-potential"; }
    Support support() const override { return Support::disc(graph_.center, graph_.outer); }
    const LagrangianGraph& graph() const { return graph_; }

private:
    MechanicalSystem base_;
    LagrangianGraph graph_;
    double k_;
};

// BlendError when |H(x, p(x)) - k| exceeds blend_tol somewhere in the collar.
std::shared_ptr<const GraphPotential> graph_potential(const MechanicalSystem& sys, const LagrangianGraph& graph,
                                                      double k, double blend_tol = 0.1);

// Max over sample graph points of |p(t) - p_graph(x(t))| while the trajectory under `perturbed`
// stays in the plateau disc, for at most max_time.
double graph_invariance_defect(const MechanicalSystem& perturbed, const LagrangianGraph& graph, int samples = 50,
                               double max_time = kTwoPi, const IntegratorOptions& integ = {});

// Least-squares polynomial generating function S (total degree) with grad S ~ p at the samples.
LagrangianGraph fit_lagrangian_graph(const std::vector<Vec4>& samples, const Vec2& center, double inner,
                                     double outer, int degree = 8);

struct SplitSpec {
    double tilt = 1e-3;            // sup norm of the momentum tilt
    Vec2 center = Vec2::Zero();    // disc centre (configuration)
    double inner = 0.35;           // plateau radius
    double outer = 0.5;            // support radius
    double bump_radius_factor = 0.25;
    double unstable_radius = 6.0, stable_radius = 6.0;
    int unstable_sign = 1, stable_sign = -1;
    double tol_angle = 1e-4;
    double contact_tol = 1e-6;
    double blend_tol = 0.1;
    // momentum of the unperturbed unstable manifold over the disc; fitted from the branch when empty
    std::function<std::array<Jet2, 2>(const Jet2&, const Jet2&)> unstable_graph;
};

struct SplitResult {
    std::shared_ptr<const GraphPotential> potential;
    std::vector<HeteroclinicRecord> before, after;
    double max_angle_before = 0.0, max_angle_after = 0.0;
    double closure_1 = 0.0, closure_2 = 0.0;     // |psi_T(theta0) - theta0| under H + f
    double period_change_1 = 0.0, period_change_2 = 0.0;  // orbits re-found under H + f
    double graph_fit_residual = 0.0;             // max |p_fit - p| over the fit samples
    ManifoldBranch unstable_before, stable_before, unstable_after, stable_after;
};

// Tilts the unstable manifold of orbit2 inside a disc and measures the splitting against
// the stable manifold of orbit1 on the section x2 = section_x2.
SplitResult split_manifolds(const MechanicalSystem& sys, const PeriodicOrbit& orbit1, const PeriodicOrbit& orbit2,
                            double k, double section_x2, const SplitSpec& spec, const GrowOptions& grow = {},
                            const OrbitOptions& orbit_opt = {});

// Distance in configuration space from the disc to the orbit's projection.
double support_clearance(const MechanicalSystem& sys, const PeriodicOrbit& orbit, const Vec2& center, double radius,
                         const IntegratorOptions& integ = {});

}  // namespace torusdyn
