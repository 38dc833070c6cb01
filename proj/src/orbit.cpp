#include "torusdyn/orbit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <Eigen/Eigenvalues>

#include "torusdyn/parallel.hpp"

namespace torusdyn {

namespace {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

Vec4 wrap_state(const Vec4& z) { return {wrap_angle(z(0)), wrap_angle(z(1)), z(2), z(3)}; }

}  // namespace

RhoValue rho_eval(const MechanicalSystem& sys, double k, const Vec4& z, double t, double s,
                  const OrbitOptions& opt) {
    RhoValue r;
    r.normal_image = integrate_normal_flow(sys, z, s, opt.eps_normal, opt.integ);
    r.flow_image = flow_endpoint(sys, z, t, opt.integ);
    r.level_defect = sys.hamiltonian(z) - k;
    return r;
}

Mat4 SymplecticFrame::matrix() const {
    Mat4 E;
    E << u1, u2, u1s, u2s;
    return E;
}

Mat4 SymplecticFrame::gram() const {
    const Mat4 E = matrix();
    Mat4 G;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) G(i, j) = omega(E.col(i), E.col(j));
    return G;
}

SymplecticFrame symplectic_frame(const MechanicalSystem& sys, const Vec4& z) {
    const Vec4 Y = normal_field(sys, z);
    const double n2 = Y.squaredNorm();
    if (!(n2 > 1e-24)) throw SingularFrameError("critical point of H: no symplectic frame");
    SymplecticFrame f;
    f.u1 = standard_J() * Y;
    f.u1s = -Y / n2;
    // projection onto the omega-complement of span{u1, u1s}
    auto project = [&](const Vec4& v) -> Vec4 { return v - omega(v, f.u1s) * f.u1 + omega(v, f.u1) * f.u1s; };
    int best = 0;
    double best_norm = -1.0;
    for (int i = 0; i < 4; ++i) {
        const double n = project(Vec4::Unit(i)).norm();
        if (n > best_norm + 1e-12) { best_norm = n; best = i; }
    }
    f.u2 = project(Vec4::Unit(best));
    f.u2 /= f.u2.norm();
    best = -1;
    double best_pair = 0.0;
    Vec4 cand = Vec4::Zero();
    for (int i = 0; i < 4; ++i) {
        const Vec4 w = project(Vec4::Unit(i));
        const double pr = omega(f.u2, w);
        if (std::abs(pr) > std::abs(best_pair) + 1e-12) { best_pair = pr; cand = w; best = i; }
    }
    if (best < 0 || std::abs(best_pair) < 1e-12) throw SingularFrameError("degenerate complement plane");
    f.u2s = cand / best_pair;
    return f;
}

Mat4 in_frame(const SymplecticFrame& frame, const Mat4& M) {
    const Mat4 E = frame.matrix();
    return E.partialPivLu().solve(M * E);
}

std::string to_string(Stability s) {
    switch (s) {
        case Stability::Hyperbolic: return "hyperbolic";
        case Stability::Elliptic: return "elliptic";
        case Stability::Parabolic: return "parabolic";
    }
    return "unknown";
}

Mat2 restricted_poincare(const PeriodicOrbit& orbit) {
    const Mat4& m = orbit.monodromy_in_frame;
    Mat2 d;
    d << m(1, 1), m(1, 3), m(3, 1), m(3, 3);
    return d;
}

Mat4 embed_transverse(const Mat2& dP) {
    Mat4 m = Mat4::Identity();
    m(1, 1) = dP(0, 0);
    m(1, 3) = dP(0, 1);
    m(3, 1) = dP(1, 0);
    m(3, 3) = dP(1, 1);
    return m;
}

namespace {

std::array<std::complex<double>, 2> quadratic_roots(double b, double c) {
    // lambda^2 + b lambda + c
    const double disc = b * b - 4 * c;
    if (disc >= 0) {
        const double s = std::sqrt(disc);
        const double big = -0.5 * (b + (b >= 0 ? s : -s));
        const double small = big != 0.0 ? c / big : 0.0;
        return {std::complex<double>(big), std::complex<double>(small)};
    }
    const double s = std::sqrt(-disc);
    return {std::complex<double>(-0.5 * b, 0.5 * s), std::complex<double>(-0.5 * b, -0.5 * s)};
}

}  // namespace

std::vector<Verdict> classify_nondegeneracy(const Mat4& m_frame, int m_max, double tol_root) {
    Mat2 dP;
    dP << m_frame(1, 1), m_frame(1, 3), m_frame(3, 1), m_frame(3, 3);
    const auto ev = eigenvalues2(dP);
    // level block in the frame: (u1, u2, u2s)
    Mat3 L;
    const int idx[3] = {0, 1, 3};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) L(i, j) = m_frame(idx[i], idx[j]);
    std::vector<Verdict> out;
    Mat3 Lm = Mat3::Identity();
    for (int m = 1; m <= m_max; ++m) {
        Lm = Lm * L;
        Verdict v;
        v.order = m;
        v.margin = std::numeric_limits<double>::infinity();
        for (const auto& lam : ev) {
            const double d = std::abs(std::pow(lam, m) - 1.0);
            if (d < v.margin) {
                v.margin = d;
                v.eigenvalue = lam;
                long j = std::lround(std::arg(lam) * m / kTwoPi);
                v.root_index = static_cast<int>(((j % m) + m) % m);
            }
        }
        v.nondegenerate = v.margin > tol_root;
        // deflate the flow eigenvalue 1 from det(lambda - L^m) and test what remains
        const auto c = characteristic_polynomial(Lm);
        const double q1 = c[1] + 1.0;
        const double q0 = c[2] + q1;
        const auto mu = quadratic_roots(q1, q0);
        v.cross_check_margin = std::min(std::abs(mu[0] - 1.0), std::abs(mu[1] - 1.0));
        v.cross_check_nondegenerate = v.cross_check_margin > tol_root;
        out.push_back(v);
    }
    return out;
}

std::vector<Verdict> classify_nondegeneracy(const PeriodicOrbit& orbit, int m_max, double tol_root) {
    return classify_nondegeneracy(orbit.monodromy_in_frame, m_max, tol_root);
}

Stability classify_stability(const Mat2& dP, double tol) {
    const double tr = std::abs(dP.trace());
    if (tr > 2.0 + tol) return Stability::Hyperbolic;
    if (tr < 2.0 - tol) return Stability::Elliptic;
    return Stability::Parabolic;
}

double charpoly_factorization_residual(const PeriodicOrbit& orbit, int m) {
    // det(lambda - M^m) from the spectrum of M; Faddeev-LeVerrier on M^m loses everything to cancellation
    const Eigen::EigenSolver<Mat4> es(orbit.monodromy, false);
    std::vector<std::complex<double>> lhs{1.0};
    for (int i = 0; i < 4; ++i) {
        const std::complex<double> mu = std::pow(es.eigenvalues()(i), m);
        std::vector<std::complex<double>> next(lhs.size() + 1, 0.0);
        for (std::size_t j = 0; j < lhs.size(); ++j) {
            next[j] += lhs[j];
            next[j + 1] -= mu * lhs[j];
        }
        lhs = std::move(next);
    }
    Mat2 Pm = Mat2::Identity();
    for (int i = 0; i < m; ++i) Pm = Pm * orbit.dP;
    const auto rhs = poly_multiply({1.0, -2.0, 1.0}, {1.0, -Pm.trace(), Pm.determinant()});
    double diff = 0.0, scale = 1.0;
    for (std::size_t i = 0; i < lhs.size(); ++i) {
        diff = std::max(diff, std::abs(lhs[i] - rhs[i]));
        scale = std::max({scale, std::abs(lhs[i]), std::abs(rhs[i])});
    }
    return diff / scale;
}

double block_form_defect(const Mat4& m) {
    double d = 0.0;
    for (int i = 0; i < 4; ++i) {
        d = std::max(d, std::abs(m(i, 0) - (i == 0 ? 1.0 : 0.0)));
        d = std::max(d, std::abs(m(2, i) - (i == 2 ? 1.0 : 0.0)));
    }
    return d / std::max(1.0, m.cwiseAbs().maxCoeff());
}

FrameInvariants frame_invariants(const MechanicalSystem& sys, const PeriodicOrbit& orbit) {
    const auto& f = orbit.frame;
    const Vec4 Y = normal_field(sys, orbit.theta0);
    FrameInvariants r;
    r.generators = std::max((f.u1 - hamiltonian_field(sys, orbit.theta0)).cwiseAbs().maxCoeff(),
                            (f.u1s + Y / Y.squaredNorm()).cwiseAbs().maxCoeff());
    r.gram = (f.gram() - standard_J()).cwiseAbs().maxCoeff();
    r.tangency = std::max(std::abs(Y.dot(f.u2)), std::abs(Y.dot(f.u2s)));
    const Mat4& Mf = orbit.monodromy_in_frame;
    r.monodromy = std::max((Mf.col(0) - Vec4::Unit(0)).cwiseAbs().maxCoeff(), std::abs(Mf(2, 2) - 1.0));
    return r;
}

PeriodicOrbit complete_orbit(const MechanicalSystem& sys, const Vec4& theta0, double period, const OrbitOptions& opt) {
    PeriodicOrbit o;
    o.theta0 = wrap_state(theta0);
    o.period = period;
    o.energy = sys.hamiltonian(o.theta0);
    const auto var = integrate_variational(sys, o.theta0, period, opt.integ);
    o.monodromy = var.M;
    o.residual = phase_distance(var.z, o.theta0);
    o.frame = symplectic_frame(sys, o.theta0);
    o.monodromy_in_frame = in_frame(o.frame, o.monodromy);
    o.dP = restricted_poincare(o);
    o.verdicts = classify_nondegeneracy(o.monodromy_in_frame, opt.m_max, opt.tol_root);
    o.stability = classify_stability(o.dP, opt.tol_stability);
    return o;
}

PeriodicOrbit find_periodic_orbit(const MechanicalSystem& sys, double k, const Vec4& guess, double guess_T,
                                  const OrbitOptions& opt) {
    if (!guess.allFinite() || !std::isfinite(guess_T)) throw InvalidInputError("non-finite orbit guess");
    if (!(guess_T > 0)) throw InvalidInputError("guess period must be positive");
    const Vec4 z_ref = guess;
    const Vec4 X_ref = hamiltonian_field(sys, guess);
    if (X_ref.norm() < 1e-12) throw SingularFrameError("orbit guess at a critical point of H");

    auto residual = [&](const Vec4& z, double T, double s, const Vec4& end) {
        Vec6 F;
        F.head<4>() = phase_difference(end, z) + s * normal_field(sys, z);
        F(4) = sys.hamiltonian(z) - k;
        F(5) = X_ref.dot(phase_difference(z, z_ref));
        (void)T;
        return F;
    };

    Vec4 z = guess;
    double T = guess_T, s = 0.0;
    double norm = std::numeric_limits<double>::infinity();
    bool converged = false;
    for (int it = 0; it < opt.max_iterations; ++it) {
        const auto var = integrate_variational(sys, z, T, opt.integ);
        const Vec6 F = residual(z, T, s, var.z);
        norm = F.norm();
        if (norm <= opt.newton_tol) { converged = true; break; }
        const auto d = sys.derivatives(z, 2);
        Mat6 Jm = Mat6::Zero();
        Jm.block<4, 4>(0, 0) = var.M - Mat4::Identity() + s * d.hess;
        Jm.block<4, 1>(0, 4) = hamiltonian_field(sys, var.z);
        Jm.block<4, 1>(0, 5) = d.grad;
        Jm.block<1, 4>(4, 0) = d.grad.transpose();
        Jm.block<1, 4>(5, 0) = X_ref.transpose();
        const Vec6 step = Jm.completeOrthogonalDecomposition().solve(-F);
        double lambda = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 12; ++ls) {
            const Vec4 zt = z + lambda * step.head<4>();
            const double Tt = T + lambda * step(4);
            const double st = s + lambda * step(5);
            if (Tt > 0 && zt.allFinite()) {
                try {
                    const Vec6 Ft = residual(zt, Tt, st, flow_endpoint(sys, zt, Tt, opt.integ));
                    if (Ft.norm() < norm) {
                        z = zt; T = Tt; s = st;
                        accepted = true;
                        break;
                    }
                } catch (const StiffnessError&) {
                }
            }
            lambda *= 0.5;
        }
        if (!accepted) break;
        if (T < opt.min_period) break;
    }
    if (T < opt.min_period)
        throw DegenerateGuessError("Newton iteration collapsed to a near-zero period");
    if (!converged) throw NoOrbitError("periodic-orbit Newton iteration did not converge", norm);

    PeriodicOrbit raw;
    raw.theta0 = wrap_state(z);
    raw.period = T;
    const double Tmin = minimal_period(sys, raw, opt);
    PeriodicOrbit o = complete_orbit(sys, raw.theta0, Tmin, opt);
    if (std::abs(o.energy - k) > opt.energy_tol * std::max(1.0, std::abs(k)))
        throw NoOrbitError("converged point is off the energy level", std::abs(o.energy - k));
    return o;
}

double minimal_period(const MechanicalSystem& sys, const PeriodicOrbit& orbit, const OrbitOptions& opt) {
    const double tol = std::max(10.0 * opt.closure_tol, 10.0 * orbit.residual);
    for (int n = 24; n >= 2; --n) {
        const double t = orbit.period / n;
        if (t < opt.min_period) continue;
        if (phase_distance(flow_endpoint(sys, orbit.theta0, t, opt.integ), orbit.theta0) <= tol) return t;
    }
    return orbit.period;
}

namespace {

std::vector<Vec4> sample_orbit(const MechanicalSystem& sys, const PeriodicOrbit& o, int n,
                               const IntegratorOptions& integ) {
    const Trajectory tr = integrate_flow(sys, o.theta0, o.period, integ);
    std::vector<Vec4> pts;
    pts.reserve(n + 1);
    for (int i = 0; i <= n; ++i) pts.push_back(tr.at(o.period * i / n));
    return pts;
}

double point_to_segment(const Vec4& q, const Vec4& a, const Vec4& b) {
    const Vec4 qa = phase_difference(q, a);
    const Vec4 ab = b - a;  // consecutive unwrapped samples
    const double L2 = ab.squaredNorm();
    double t = L2 > 0 ? qa.dot(ab) / L2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return (qa - t * ab).norm();
}

double directed_hausdorff(const std::vector<Vec4>& A, const std::vector<Vec4>& B) {
    double worst = 0.0;
    for (const auto& q : A) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j + 1 < B.size(); ++j) {
            // cheap reject on the nearest vertex
            best = std::min(best, point_to_segment(q, B[j], B[j + 1]));
            if (best == 0.0) break;
        }
        worst = std::max(worst, best);
    }
    return worst;
}

double hausdorff(const std::vector<Vec4>& A, const std::vector<Vec4>& B) {
    return std::max(directed_hausdorff(A, B), directed_hausdorff(B, A));
}

}  // namespace

double orbit_distance(const MechanicalSystem& sys, const PeriodicOrbit& a, const PeriodicOrbit& b, int samples,
                      const IntegratorOptions& integ) {
    return hausdorff(sample_orbit(sys, a, samples, integ), sample_orbit(sys, b, samples, integ));
}

ScanResult scan_short_orbits(const MechanicalSystem& sys, double k, double T_max, int grid_density,
                             const OrbitOptions& opt, unsigned jobs, double dedup_radius) {
    if (grid_density < 1) throw InvalidInputError("grid density must be >= 1");
    struct Seed {
        Vec4 z;
    };
    std::vector<Seed> seeds;
    const int g = grid_density;
    const int ndir = 4 * g;
    for (int i = 0; i < g; ++i)
        for (int j = 0; j < g; ++j)
            for (int l = 0; l < ndir; ++l) {
                const double x1 = kTwoPi * i / g, x2 = kTwoPi * j / g;
                const double phi = kTwoPi * l / ndir;
                const Vec2 u(std::cos(phi), std::sin(phi));
                const double U = sys.potential(x1, x2);
                const double q = u.dot(sys.metric_inverse(x1, x2) * u);
                if (k <= U) continue;
                const double r = std::sqrt(2.0 * (k - U) / q);
                seeds.push_back({Vec4(x1, x2, r * u(0), r * u(1))});
            }

    ScanResult result;
    result.seeds = static_cast<int>(seeds.size());
    std::vector<std::vector<PeriodicOrbit>> found(seeds.size());
    std::vector<int> attempts(seeds.size(), 0);
    const double dt = 0.01;
    const double t_start = std::max(opt.min_period, 0.2);
    parallel_for(seeds.size(), jobs, [&](std::size_t si) {
        const Vec4 z0 = seeds[si].z;
        Trajectory tr;
        try {
            tr = integrate_flow(sys, z0, T_max * 1.05, opt.integ);
        } catch (const Error&) {
            return;
        }
        // local minima of the return distance
        std::vector<std::pair<double, double>> cands;
        double prev2 = std::numeric_limits<double>::infinity(), prev1 = prev2;
        double tprev = 0.0;
        for (double t = t_start; t <= tr.t_end(); t += dt) {
            const double d = phase_distance(tr.at(t), z0);
            if (prev1 < prev2 && prev1 <= d && prev1 < 0.5) cands.emplace_back(prev1, tprev);
            prev2 = prev1;
            prev1 = d;
            tprev = t;
        }
        std::sort(cands.begin(), cands.end());
        if (cands.size() > 4) cands.resize(4);
        for (const auto& [d, t] : cands) {
            (void)d;
            ++attempts[si];
            try {
                PeriodicOrbit o = find_periodic_orbit(sys, k, z0, t, opt);
                if (o.period <= T_max + 1e-9 && o.residual <= opt.closure_tol) found[si].push_back(std::move(o));
            } catch (const Error&) {
            }
        }
    });

    // single-writer dedup in seed order
    std::vector<std::vector<Vec4>> curves;
    for (std::size_t si = 0; si < seeds.size(); ++si) {
        result.newton_attempts += attempts[si];
        for (auto& o : found[si]) {
            const auto curve = sample_orbit(sys, o, 600, opt.integ);
            bool dup = false;
            for (std::size_t j = 0; j < result.orbits.size() && !dup; ++j) {
                const auto& other = result.orbits[j];
                if (std::abs(other.period - o.period) > 1e-6 * std::max(1.0, o.period)) continue;
                dup = hausdorff(curve, curves[j]) <= dedup_radius;
            }
            if (!dup) {
                curves.push_back(curve);
                result.orbits.push_back(std::move(o));
            }
        }
    }
    for (const auto& o : result.orbits)
        result.min_period = result.min_period ? std::min(*result.min_period, o.period) : o.period;
    return result;
}

RegularityResult regular_level_check(const MechanicalSystem& sys, double k, int grid_density, double tol_reg) {
    if (grid_density < 1) throw InvalidInputError("grid density must be >= 1");
    RegularityResult r;
    // critical points of the potential by Newton from a grid
    const int ng = std::max(8, 2 * grid_density);
    std::vector<Vec2> crit;
    for (int i = 0; i < ng; ++i)
        for (int j = 0; j < ng; ++j) {
            Vec2 x(kTwoPi * i / ng, kTwoPi * j / ng);
            bool ok = false;
            for (int it = 0; it < 40; ++it) {
                const Jet2 u = sys.potential_jet(x(0), x(1));
                const Vec2 g = u.gradient();
                if (g.norm() < 1e-13) { ok = true; break; }
                const Mat2 h = u.hessian();
                if (std::abs(h.determinant()) < 1e-14) break;
                Vec2 step = -h.lu().solve(g);
                if (step.norm() > 0.5) step *= 0.5 / step.norm();
                x += step;
            }
            if (!ok) continue;
            const TorusPoint p = TorusPoint::reduced(x(0), x(1));
            bool dup = false;
            for (const auto& c : crit) dup = dup || torus_distance(p, {c(0), c(1)}) < 1e-6;
            if (!dup) crit.emplace_back(p.x1, p.x2);
        }
    for (const auto& c : crit) {
        const double v = sys.potential(c(0), c(1));
        bool dup = false;
        for (double w : r.critical_values) dup = dup || std::abs(w - v) < 1e-9;
        if (!dup) r.critical_values.push_back(v);
    }
    std::sort(r.critical_values.begin(), r.critical_values.end());

    double min_norm = std::numeric_limits<double>::infinity();
    bool any = false;
    const int g = grid_density;
    const int ndir = 4 * g;
    for (int i = 0; i < g; ++i)
        for (int j = 0; j < g; ++j) {
            const double x1 = kTwoPi * i / g, x2 = kTwoPi * j / g;
            const double U = sys.potential(x1, x2);
            if (k < U) continue;
            const Mat2 gi = sys.metric_inverse(x1, x2);
            for (int l = 0; l < ndir; ++l) {
                const double phi = kTwoPi * l / ndir;
                const Vec2 u(std::cos(phi), std::sin(phi));
                // H along the ray is 1/2 r^2 u^T G^{-1} u + U: monotone in r, solved exactly
                const double rad = std::sqrt(2.0 * (k - U) / u.dot(gi * u));
                const Vec4 z(x1, x2, rad * u(0), rad * u(1));
                min_norm = std::min(min_norm, sys.gradient(z).norm());
                any = true;
            }
        }
    for (const auto& c : crit) {
        if (std::abs(sys.potential(c(0), c(1)) - k) <= 1e-9 * std::max(1.0, std::abs(k))) {
            min_norm = std::min(min_norm, sys.gradient(Vec4(c(0), c(1), 0, 0)).norm());
            any = true;
        }
    }
    const double minU = r.critical_values.empty() ? -std::numeric_limits<double>::infinity() : r.critical_values.front();
    r.level_empty = !any && k < minU;
    r.min_gradient_norm = any ? min_norm : std::numeric_limits<double>::infinity();
    r.is_regular = r.level_empty || r.min_gradient_norm > tol_reg;
    if (!r.is_regular) {
        double gap = std::numeric_limits<double>::infinity();
        for (double c : r.critical_values)
            if (std::abs(c - k) > 1e-9) gap = std::min(gap, std::abs(c - k));
        r.suggested_delta = std::isfinite(gap) ? std::min(0.1, 0.5 * gap) : 0.1;
    }
    return r;
}

TwistResult twist_times(const MechanicalSystem& sys, const Vec4& z, const Vec4& f1, const Vec4& f2, double T,
                        const IntegratorOptions& integ, double sample_step) {
    if (!(T > 0) || !(sample_step > 0)) throw InvalidInputError("twist_times needs T > 0 and a positive step");
    Eigen::Matrix<double, 4, 2> F;
    F << f1, f2;
    if (Eigen::JacobiSVD<Eigen::Matrix<double, 4, 2>>(F).singularValues()(1) < 1e-12)
        throw InvalidInputError("twist_times needs two independent vectors");
    using Frame = Eigen::Matrix<double, 4, 2>;
    // orientation-preserving Gram-Schmidt; the plane is all that matters and an orthonormal
    // basis keeps the propagated entries O(1) however strongly the flow stretches
    auto orthonormal = [](Frame P) {
        P.col(0).normalize();
        P.col(1) -= P.col(0).dot(P.col(1)) * P.col(0);
        P.col(1).normalize();
        return P;
    };
    const int n = static_cast<int>(std::ceil(T / sample_step));
    std::vector<double> times(n + 1);
    for (int i = 0; i <= n; ++i) times[i] = std::min(T, i * sample_step);
    std::vector<Vec4> zs{z};
    std::vector<Frame> frames{orthonormal(F)};
    for (int i = 1; i <= n; ++i) {
        const auto step = integrate_variational(sys, zs.back(), times[i] - times[i - 1], integ);
        zs.push_back(step.z);
        frames.push_back(orthonormal(step.M * frames.back()));
    }
    // det of the position block of an orthonormal basis: zero exactly when the plane meets the vertical
    auto g_of = [](const Frame& P) { return P(0, 0) * P(1, 1) - P(0, 1) * P(1, 0); };
    auto g_at = [&](int i, double t) {
        const double tau = t - times[i];
        if (tau == 0.0) return g_of(frames[i]);
        return g_of(orthonormal(integrate_variational(sys, zs[i], tau, integ).M * frames[i]));
    };
    std::vector<double> g(n + 1);
    for (int i = 0; i <= n; ++i) g[i] = g_of(frames[i]);

    TwistResult r;
    constexpr double kZero = 1e-10;
    // non-discrete runs: three or more consecutive samples at zero level
    for (int i = 0; i <= n;) {
        int j = i;
        while (j <= n && std::abs(g[j]) <= kZero) ++j;
        if (j - i >= 3) {
            r.non_discrete = true;
            r.flagged_intervals.emplace_back(times[i], times[j - 1]);
        }
        i = std::max(j, i + 1);
    }
    auto flagged = [&](double t) {
        for (const auto& [a, b] : r.flagged_intervals)
            if (t >= a && t <= b) return true;
        return false;
    };
    std::vector<double> roots;
    for (int i = 0; i <= n; ++i) {
        if (std::abs(g[i]) <= 1e-14 && !flagged(times[i])) roots.push_back(times[i]);
        if (i == n) break;
        if (g[i] * g[i + 1] < 0) {
            double a = times[i], b = times[i + 1], ga = g[i];
            for (int it = 0; it < 60 && b - a > 1e-13; ++it) {
                const double m = 0.5 * (a + b);
                const double gm = g_at(i, m);
                if (gm * ga <= 0) b = m; else { a = m; ga = gm; }
            }
            roots.push_back(0.5 * (a + b));
        } else if (i > 0 && std::abs(g[i]) < std::abs(g[i - 1]) && std::abs(g[i]) <= std::abs(g[i + 1]) &&
                   std::abs(g[i]) < 1e-3 && std::abs(g[i]) > 1e-14 && g[i - 1] * g[i] > 0 && g[i] * g[i + 1] > 0) {
            // touching zero without a sign change: golden-section on |g|
            double a = times[i - 1], b = times[i + 1];
            const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
            auto G = [&](double t) { return std::abs(t >= times[i] ? g_at(i, t) : g_at(i - 1, t)); };
            double c = b - phi * (b - a), d = a + phi * (b - a);
            double gc = G(c), gd = G(d);
            for (int it = 0; it < 80 && b - a > 1e-12; ++it) {
                if (gc < gd) { b = d; d = c; gd = gc; c = b - phi * (b - a); gc = G(c); }
                else { a = c; c = d; gc = gd; d = a + phi * (b - a); gd = G(d); }
            }
            if (std::min(gc, gd) <= 1e-9) roots.push_back(0.5 * (a + b));
        }
    }
    std::sort(roots.begin(), roots.end());
    for (double t : roots)
        if (r.roots.empty() || t - r.roots.back() > 1e-9) r.roots.push_back(t);
    return r;
}

}  // namespace torusdyn
