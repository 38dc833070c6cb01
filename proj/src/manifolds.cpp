#include "torusdyn/manifolds.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include <Eigen/QR>

#include "torusdyn/flow.hpp"
#include "torusdyn/parallel.hpp"

namespace torusdyn {

namespace {

double cross2(const Vec2& a, const Vec2& b) { return a(0) * b(1) - a(1) * b(0); }

double point_segment_distance(const Vec2& q, const Vec2& a, const Vec2& b, double* frac = nullptr) {
    const Vec2 d = b - a;
    const double len2 = d.squaredNorm();
    double s = len2 > 0 ? (q - a).dot(d) / len2 : 0.0;
    s = std::clamp(s, 0.0, 1.0);
    if (frac) *frac = s;
    return (q - (a + s * d)).norm();
}

// Index of the closest segment, its fraction and the distance.
struct Nearest {
    std::size_t seg = 0;
    double frac = 0.0;
    double dist = std::numeric_limits<double>::infinity();
};

Nearest nearest_on_polyline(const std::vector<Vec2>& pts, const Vec2& q, const Vec2& shift = Vec2::Zero()) {
    Nearest best;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        double f = 0;
        const double d = point_segment_distance(q, pts[i] + shift, pts[i + 1] + shift, &f);
        if (d < best.dist) best = {i, f, d};
    }
    if (pts.size() == 1) best = {0, 0.0, (q - pts[0] - shift).norm()};
    return best;
}

double acute_angle(const Vec2& a, const Vec2& b) {
    return std::atan2(std::abs(cross2(a, b)), std::abs(a.dot(b)));
}

}  // namespace

// ---------------------------------------------------------------------------------------------
// Section

Section::Section(MechanicalSystem sys, double k, double x2, IntegratorOptions integ)
    : sys_(std::move(sys)), k_(k), c_(x2), integ_(std::move(integ)) {}

Vec4 Section::lift(const Vec2& s) const {
    const Mat2 g = sys_.metric_inverse(s(0), c_);
    const double u = sys_.potential(s(0), c_);
    const double a = 0.5 * g(1, 1), b = g(0, 1) * s(1), cc = 0.5 * g(0, 0) * s(1) * s(1) + u - k_;
    const double disc = b * b - 4 * a * cc;
    if (!(disc > 0) || a <= 0) {
        std::ostringstream os;
        os << "no crossing momentum above section point (" << s(0) << ", " << s(1) << ")";
        throw InvalidInputError(os.str());
    }
    // root with dx2/dt = sqrt(disc) > 0
    return {s(0), c_, s(1), (-b + std::sqrt(disc)) / (2 * a)};
}

Section::Crossing Section::next_crossing(const Vec4& z, bool forward, double max_time) const {
    const double dir = forward ? 1.0 : -1.0;
    const double min_time = 1e-6;
    double offset = 0.0;
    Vec4 start = z;
    double chunk = 8.0;
    while (offset < max_time) {
        const double span = std::min(chunk, max_time - offset);
        const Trajectory tr = integrate_flow(sys_, start, dir * span, integ_);
        const auto& smp = tr.samples();
        for (std::size_t i = 0; i + 1 < smp.size(); ++i) {
            const double xa = smp[i].z(1), xb = smp[i + 1].z(1);
            // levels c + 2 pi m crossed upward (in forward time), in the order this pass meets them
            const double lo = forward ? xa : xb, hi = forward ? xb : xa;
            if (!(hi > lo)) continue;
            const double m_first = forward ? std::floor((lo - c_) / kTwoPi) + 1 : std::floor((hi - c_) / kTwoPi);
            for (double m = m_first;; m += forward ? 1 : -1) {
                const double L = c_ + kTwoPi * m;
                if (!(L > lo && L <= hi)) break;
                double t = smp[i].t + (L - xa) / (xb - xa) * (smp[i + 1].t - smp[i].t);
                Vec4 zt;
                for (int it = 0; it < 12; ++it) {
                    zt = flow_endpoint(sys_, smp[i].z, t - smp[i].t, integ_);
                    const double gval = zt(1) - L;
                    if (std::abs(gval) < 1e-14 * std::max(1.0, std::abs(L))) break;
                    t -= gval / hamiltonian_field(sys_, zt)(1);
                }
                if (offset + std::abs(t) < min_time) continue;
                zt(1) = L;
                return {zt, offset + std::abs(t)};
            }
        }
        offset += span;
        start = tr.end_state();
        chunk *= 2;
    }
    throw BranchError("no return to the section within the time limit");
}

Vec2 Section::forward(const Vec2& s) const { return project(next_crossing(lift(s), true).z); }
Vec2 Section::backward(const Vec2& s) const { return project(next_crossing(lift(s), false).z); }

Mat2 Section::derivative(const Vec2& s) const {
    const Vec4 z = lift(s);
    const Crossing cr = next_crossing(z, true);
    const VariationalState v = integrate_variational<double>(sys_, z, cr.time, integ_);
    const Vec4 grad = sys_.gradient(z);
    // tangent of the lift: dp2 from the energy constraint
    Eigen::Matrix<double, 4, 2> dz = Eigen::Matrix<double, 4, 2>::Zero();
    dz(0, 0) = 1.0;
    dz(3, 0) = -grad(0) / grad(3);
    dz(2, 1) = 1.0;
    dz(3, 1) = -grad(2) / grad(3);
    const Vec4 X = hamiltonian_field(sys_, v.z);
    Mat2 D;
    for (int j = 0; j < 2; ++j) {
        const Vec4 w = v.M * dz.col(j);
        const Vec4 c = w - X * (w(1) / X(1));
        D(0, j) = c(0);
        D(1, j) = c(2);
    }
    return D;
}

Vec2 Section::fixed_point(const PeriodicOrbit& orbit) const {
    if (std::abs(angle_diff(orbit.theta0(1), c_)) < 1e-12) return {orbit.theta0(0), orbit.theta0(2)};
    const Crossing cr = next_crossing(orbit.theta0, true, 2.0 * orbit.period + 1.0);
    return {cr.z(0), cr.z(2)};
}

PlanarMap section_map(std::shared_ptr<const Section> section) {
    return {[section](const Vec2& s) { return section->forward(s); },
            [section](const Vec2& s) { return section->backward(s); }};
}

// ---------------------------------------------------------------------------------------------
// Splitting

HyperbolicSplitting hyperbolic_splitting(const Mat2& A, double tol) {
    const double tr = A.trace(), det = A.determinant();
    const double disc = tr * tr - 4 * det;
    if (!(disc > 0)) throw NotHyperbolicError("return map has complex or double eigenvalues");
    const double q = -0.5 * (tr + std::copysign(std::sqrt(disc), tr));
    double l1 = -q, l2 = det / -q;  // roots of l^2 - tr l + det
    if (std::abs(l1) < std::abs(l2)) std::swap(l1, l2);
    if (std::abs(std::abs(l1) - 1.0) <= tol || std::abs(std::abs(l2) - 1.0) <= tol)
        throw NotHyperbolicError("eigenvalue on the unit circle");
    if (std::abs(l1) < 1.0 || std::abs(l2) > 1.0) throw NotHyperbolicError("eigenvalues on the same side of the circle");
    auto eigvec = [&](double l) {
        const Vec2 a(A(0, 1), l - A(0, 0)), b(l - A(1, 1), A(1, 0));
        Vec2 v = a.norm() >= b.norm() ? a : b;
        v.normalize();
        const int lead = std::abs(v(0)) > 1e-12 ? 0 : 1;
        if (v(lead) < 0) v = -v;
        return v;
    };
    return {l1, l2, eigvec(l1), eigvec(l2)};
}

HyperbolicSplitting hyperbolic_splitting(const PeriodicOrbit& orbit, double tol) {
    if (orbit.stability != Stability::Hyperbolic) throw NotHyperbolicError("orbit is " + to_string(orbit.stability));
    return hyperbolic_splitting(orbit.dP, tol);
}

std::string to_string(Side s) { return s == Side::Stable ? "stable" : "unstable"; }

// ---------------------------------------------------------------------------------------------
// Branch growth

namespace {

struct Parametrisation {
    std::function<Vec2(const Vec2&)> outward;
    Vec2 fixed, direction;
    double delta = 0, expansion = 0;
    int stride = 1;

    Vec2 operator()(double u) const {
        const double n = std::floor(u);
        Vec2 p = fixed + delta * std::pow(expansion, u - n) * direction;
        for (int i = 0; i < int(n) * stride; ++i) p = outward(p);
        return p;
    }
};

}  // namespace

ManifoldBranch grow_branch(const PlanarMap& map, const Vec2& fixed_point, const HyperbolicSplitting& split, Side side,
                           int sign, double radius, const GrowOptions& opt) {
    if (!(radius > 0)) throw InvalidInputError("branch radius must be positive");
    if (sign != 1 && sign != -1) throw InvalidInputError("branch sign must be +1 or -1");
    const bool unstable = side == Side::Unstable;
    const double lambda = unstable ? split.lambda_u : 1.0 / split.lambda_s;
    Parametrisation par;
    par.outward = unstable ? map.forward : map.backward;
    par.fixed = fixed_point;
    par.direction = sign * (unstable ? split.v_u : split.v_s);
    par.stride = lambda < 0 ? 2 : 1;
    par.expansion = std::pow(std::abs(lambda), par.stride);

    auto apply = [&](Vec2 p) {
        for (int i = 0; i < par.stride; ++i) p = par.outward(p);
        return p;
    };
    // seed distance: image stays within tol of the tangent line
    double delta = std::min(0.1, 0.25 * radius) / par.expansion;
    for (int it = 0; it < 80; ++it) {
        const Vec2 q = apply(fixed_point + delta * par.direction) - fixed_point;
        if (std::abs(cross2(q, par.direction)) <= opt.tol) break;
        delta *= 0.5;
    }
    par.delta = delta;

    ManifoldBranch br;
    br.side = side;
    br.sign = sign;
    br.fixed_point = fixed_point;
    br.direction = par.direction;
    br.expansion = par.expansion;
    br.stride = par.stride;
    br.seed_distance = delta;
    br.evaluate = par;

    std::vector<double> us;
    std::vector<Vec2> pts;
    std::string failure;

    // evaluates new parameters; returns false if some evaluation failed
    auto evaluate_batch = [&](const std::vector<double>& batch, std::vector<std::optional<Vec2>>& out) {
        out.assign(batch.size(), std::nullopt);
        std::vector<std::string> errs(batch.size());
        parallel_for(batch.size(), opt.jobs, [&](std::size_t i) {
            try {
                out[i] = par(batch[i]);
            } catch (const Error& e) {
                errs[i] = e.what();
            }
        });
        for (std::size_t i = 0; i < batch.size(); ++i)
            if (!out[i]) {
                if (failure.empty()) failure = errs[i];
                return false;
            }
        return true;
    };

    auto turning = [&](std::size_t i) {  // angle at vertex i
        if (i == 0 || i + 1 >= pts.size()) return 0.0;
        const Vec2 a = pts[i] - pts[i - 1], b = pts[i + 1] - pts[i];
        if (a.norm() == 0 || b.norm() == 0) return 0.0;
        return std::atan2(std::abs(cross2(a, b)), a.dot(b));
    };

    bool done = false;
    const int levels_max = 80;
    for (int level = 0; level < levels_max && !done; ++level) {
        std::vector<double> batch;
        const int base = 16;
        for (int j = (level == 0 ? 0 : 1); j <= base; ++j) batch.push_back(level + double(j) / base);
        std::vector<std::optional<Vec2>> out;
        if (!evaluate_batch(batch, out)) {
            // keep the prefix that succeeded
            for (std::size_t i = 0; i < batch.size() && out[i]; ++i) {
                us.push_back(batch[i]);
                pts.push_back(*out[i]);
            }
            br.truncated = true;
            break;
        }
        const std::size_t level_start = us.empty() ? 0 : us.size() - 1;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            us.push_back(batch[i]);
            pts.push_back(*out[i]);
        }
        // adaptive refinement of this level
        for (int pass = 0; pass < 40; ++pass) {
            std::vector<double> ins;
            for (std::size_t i = level_start; i + 1 < pts.size(); ++i) {
                const double gap = us[i + 1] - us[i];
                if (gap < 1e-12) continue;
                const bool coarse = (pts[i + 1] - pts[i]).norm() > opt.max_spacing;
                const bool bent = turning(i) > opt.max_angle || turning(i + 1) > opt.max_angle;
                if (coarse || bent) ins.push_back(0.5 * (us[i] + us[i + 1]));
            }
            if (ins.empty()) break;
            if (int(us.size() + ins.size()) > opt.max_points) {
                br.truncated = true;
                failure = "point budget exhausted";
                break;
            }
            std::vector<std::optional<Vec2>> got;
            const bool ok = evaluate_batch(ins, got);
            for (std::size_t i = 0; i < ins.size(); ++i) {
                if (!got[i]) continue;
                const auto pos = std::lower_bound(us.begin(), us.end(), ins[i]) - us.begin();
                us.insert(us.begin() + pos, ins[i]);
                pts.insert(pts.begin() + pos, *got[i]);
            }
            if (!ok) {
                br.truncated = true;
                break;
            }
        }
        // arclength check
        double s = (pts.front() - fixed_point).norm();
        for (std::size_t i = 1; i < pts.size(); ++i) {
            s += (pts[i] - pts[i - 1]).norm();
            if (s > radius) {
                us.resize(i + 1);
                pts.resize(i + 1);
                done = true;
                break;
            }
        }
        if (br.truncated) break;
    }
    if (!done && !br.truncated) {
        br.truncated = true;
        failure = "level limit reached before the requested radius";
    }
    if (br.truncated) br.warning = "branch truncated: " + failure;

    br.params = std::move(us);
    br.points = std::move(pts);
    br.arclength.resize(br.points.size());
    double s = br.points.empty() ? 0.0 : (br.points.front() - fixed_point).norm();
    for (std::size_t i = 0; i < br.points.size(); ++i) {
        if (i > 0) s += (br.points[i] - br.points[i - 1]).norm();
        br.arclength[i] = s;
    }
    return br;
}

ManifoldBranch grow_local_manifold(std::shared_ptr<const Section> section, const PeriodicOrbit& orbit, Side side,
                                   int sign, double radius, const GrowOptions& opt) {
    const Vec2 fp = section->fixed_point(orbit);
    const HyperbolicSplitting split = hyperbolic_splitting(section->derivative(fp));
    return grow_branch(section_map(section), fp, split, side, sign, radius, opt);
}

double invariance_defect(const ManifoldBranch& br, const PlanarMap& map, int samples) {
    const auto& inward = br.side == Side::Unstable ? map.backward : map.forward;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < br.points.size(); ++i)
        if (br.params[i] >= 1.0) idx.push_back(i);
    if (idx.empty()) throw InvalidInputError("branch has no points beyond its first level");
    double worst = 0.0;
    const int n = std::min<int>(samples, int(idx.size()));
    for (int k = 0; k < n; ++k) {
        Vec2 q = br.points[idx[std::size_t(k) * (idx.size() - 1) / std::max(1, n - 1)]];
        for (int i = 0; i < br.stride; ++i) q = inward(q);
        worst = std::max(worst, nearest_on_polyline(br.points, q).dist);
    }
    return worst;
}

FundamentalDomain fundamental_domain(const ManifoldBranch& br, const PlanarMap& map, double u0) {
    if (br.points.size() < 2 || !br.evaluate) throw InvalidInputError("branch has fewer than two points");
    if (br.params.back() < u0 + 1.0) throw BranchError("branch too short to contain a point and its image");
    FundamentalDomain fd;
    fd.u0 = u0;
    fd.start = br.evaluate(u0);
    fd.end = br.evaluate(u0 + 1.0);
    fd.points.push_back(fd.start);
    for (std::size_t i = 0; i < br.points.size(); ++i)
        if (br.params[i] > u0 && br.params[i] < u0 + 1.0) fd.points.push_back(br.points[i]);
    fd.points.push_back(fd.end);
    const auto& outward = br.side == Side::Unstable ? map.forward : map.backward;
    Vec2 img = fd.start;
    for (int i = 0; i < br.stride; ++i) img = outward(img);
    fd.endpoint_defect = (img - fd.end).norm();
    return fd;
}

// ---------------------------------------------------------------------------------------------
// Heteroclinic search

namespace {

// Central difference in the parameter; the step is large enough that integrator noise in the
// evaluations does not tilt the direction.
Vec2 param_tangent(const ManifoldBranch& br, double u) {
    const double h = 1e-3;
    const double lo = std::max(0.0, u - h);
    const Vec2 d = br.evaluate(u + h) - br.evaluate(lo);
    return d / (u + h - lo);
}

// Signed distance from a point to the stable curve (shifted), via a foot point in parameter space.
struct Foot {
    double d = 0.0;   // signed by cross(tangent_s, q - foot)
    double us = 0.0;
    bool valid = false;
};

Foot foot_point(const ManifoldBranch& S, const Vec2& shift, const Vec2& q, double us) {
    Foot f;
    const double umax = S.params.back();
    Vec2 ts = param_tangent(S, us);
    for (int it = 0; it < 6; ++it) {
        const Vec2 r = q - S.evaluate(us) - shift;
        const double step = r.dot(ts) / ts.squaredNorm();
        us += step;
        if (us <= 0.0 || us >= umax) return f;
        if (it == 2) ts = param_tangent(S, us);
        if (std::abs(step) < 1e-15 * std::max(1.0, us)) break;
    }
    ts = param_tangent(S, us);
    const Vec2 r = q - S.evaluate(us) - shift;
    f.d = cross2(ts.normalized(), r);
    f.us = us;
    f.valid = true;
    return f;
}

}  // namespace

std::vector<HeteroclinicRecord> find_heteroclinic(const ManifoldBranch& U, const ManifoldBranch& S, double tol_angle,
                                                  double contact_tol) {
    std::vector<HeteroclinicRecord> out;
    if (U.points.size() < 2 || S.points.size() < 2) return out;

    auto bbox = [](const std::vector<Vec2>& p) {
        Vec2 lo = p[0], hi = p[0];
        for (const auto& q : p) {
            lo = lo.cwiseMin(q);
            hi = hi.cwiseMax(q);
        }
        return std::pair{lo, hi};
    };
    const auto [ulo, uhi] = bbox(U.points);
    const auto [slo, shi] = bbox(S.points);
    const int mlo = int(std::floor((ulo(0) - shi(0)) / kTwoPi)) - 1;
    const int mhi = int(std::ceil((uhi(0) - slo(0)) / kTwoPi)) + 1;
    auto interp = [](const std::vector<double>& u, std::size_t i, double f) { return u[i] + f * (u[i + 1] - u[i]); };
    // vertices farther than this from the stable polyline are not examined
    const double near_tol = 0.05;

    auto make_record = [&](double uu, double us, int m) {
        const Vec2 shift(kTwoPi * m, 0.0);
        HeteroclinicRecord r;
        r.point = U.evaluate(uu);
        r.tangent_u = param_tangent(U, uu).normalized();
        r.tangent_s = param_tangent(S, us).normalized();
        r.angle = acute_angle(r.tangent_u, r.tangent_s);
        r.gap = (r.point - S.evaluate(us) - shift).norm();
        r.shift = m;
        r.refined = true;
        r.transversal = r.angle > tol_angle;
        return r;
    };

    for (int m = mlo; m <= mhi; ++m) {
        const Vec2 shift(kTwoPi * m, 0.0);
        if (ulo(0) > shi(0) + shift(0) + near_tol || uhi(0) < slo(0) + shift(0) - near_tol) continue;
        if (ulo(1) > shi(1) + near_tol || uhi(1) < slo(1) - near_tol) continue;

        const std::size_t n = U.points.size();
        std::vector<Foot> feet(n);
        parallel_for(n, 0, [&](std::size_t i) {
            const Nearest nr = nearest_on_polyline(S.points, U.points[i], shift);
            if (nr.dist > near_tol) return;
            feet[i] = foot_point(S, shift, U.points[i], interp(S.params, nr.seg, nr.frac));
        });
        auto contact = [&](std::size_t i) { return feet[i].valid && std::abs(feet[i].d) < contact_tol; };

        // Contact runs become one tangential record unless the curve passes through: then the run
        // is bracketed by its neighbours like any sign change.
        std::vector<std::pair<std::size_t, std::size_t>> brackets;
        auto clear = [&](std::size_t i) { return feet[i].valid && !contact(i); };
        for (std::size_t i = 0; i < n;) {
            if (!contact(i)) {
                if (i + 1 < n && clear(i) && clear(i + 1) && (feet[i].d > 0) != (feet[i + 1].d > 0))
                    brackets.emplace_back(i, i + 1);
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j < n && contact(j)) ++j;
            if (i > 0 && j < n && clear(i - 1) && clear(j) && (feet[i - 1].d > 0) != (feet[j].d > 0)) {
                brackets.emplace_back(i - 1, j);
            } else {
                const std::size_t mid = (i + j - 1) / 2;
                out.push_back(make_record(U.params[mid], feet[mid].us, m));
            }
            i = j;
        }
        std::vector<std::optional<HeteroclinicRecord>> roots(brackets.size());
        parallel_for(brackets.size(), 0, [&](std::size_t k) {
            const auto [i, j] = brackets[k];
            double a = U.params[i], b = U.params[j];
            double fa = feet[i].d, fb = feet[j].d;
            double us = feet[i].us;
            int side = 0;
            Foot fc;
            double c = a;
            // Illinois iteration on the signed distance along the unstable parameter
            for (int it = 0; it < 60; ++it) {
                c = (a * fb - b * fa) / (fb - fa);
                fc = foot_point(S, shift, U.evaluate(c), us);
                if (!fc.valid) return;
                us = fc.us;
                if (std::abs(fc.d) < 1e-13 || std::abs(b - a) < 1e-14 * std::max(1.0, c)) break;
                if ((fc.d > 0) == (fb > 0)) {
                    b = c;
                    fb = fc.d;
                    if (side == -1) fa *= 0.5;
                    side = -1;
                } else {
                    a = c;
                    fa = fc.d;
                    if (side == 1) fb *= 0.5;
                    side = 1;
                }
            }
            roots[k] = make_record(c, us, m);
        });
        for (auto& r : roots)
            if (r) out.push_back(*r);
    }

    std::vector<HeteroclinicRecord> merged;
    for (const auto& r : out) {
        if (r.gap > std::max(1e-6, contact_tol)) continue;
        const bool dup = std::any_of(merged.begin(), merged.end(), [&](const HeteroclinicRecord& o) {
            return o.shift == r.shift && (o.point - r.point).norm() < 1e-6;
        });
        if (!dup) merged.push_back(r);
    }
    std::sort(merged.begin(), merged.end(), [](const auto& a, const auto& b) { return a.point(0) < b.point(0); });
    return merged;
}

// ---------------------------------------------------------------------------------------------
// Lagrangian graphs and graph potentials

std::array<Jet2, 2> LagrangianGraph::at(double x1, double x2) const {
    const double a = center(0) + angle_diff(x1, center(0)), b = center(1) + angle_diff(x2, center(1));
    return momentum(Jet2::variable(0, a), Jet2::variable(1, b));
}

double LagrangianGraph::curl_defect(int n) const {
    double worst = 0.0;
    for (int i = 0; i <= n; ++i)
        for (int j = 0; j < 4 * n; ++j) {
            const double r = outer * i / n, phi = kTwoPi * j / (4 * n);
            const auto p = at(center(0) + r * std::cos(phi), center(1) + r * std::sin(phi));
            worst = std::max(worst, std::abs(p[0].gradient()(1) - p[1].gradient()(0)));
        }
    return worst;
}

GraphPotential::GraphPotential(MechanicalSystem base, LagrangianGraph graph, double k)
    : base_(std::move(base)), graph_(std::move(graph)), k_(k) {}

Jet2 GraphPotential::jet(double x1, double x2) const {
    const double d1 = angle_diff(x1, graph_.center(0)), d2 = angle_diff(x2, graph_.center(1));
    if (d1 * d1 + d2 * d2 >= graph_.outer * graph_.outer) return Jet2(0.0);
    const Jet2 X1 = Jet2::variable(0, graph_.center(0) + d1), X2 = Jet2::variable(1, graph_.center(1) + d2);
    const auto p = graph_.momentum(X1, X2);
    const Jet2 h = base_.hamiltonian_generic(X1, X2, p[0], p[1]);
    const Jet2 e1 = X1 - graph_.center(0), e2 = X2 - graph_.center(1);
    return plateau_sq(Jet2(e1 * e1 + e2 * e2), graph_.inner, graph_.outer) * (k_ - h);
}

std::shared_ptr<const GraphPotential> graph_potential(const MechanicalSystem& sys, const LagrangianGraph& graph,
                                                      double k, double blend_tol) {
    if (!(graph.inner > 0 && graph.outer > graph.inner)) throw InvalidInputError("graph radii must satisfy 0 < inner < outer");
    if (!graph.momentum) throw InvalidInputError("graph has no momentum field");
    if (graph.outer >= kPi) throw InvalidInputError("graph disc must be smaller than the torus");
    const double curl = graph.curl_defect();
    if (curl > 1e-6) {
        std::ostringstream os;
        os << "momentum field is not Lagrangian (curl " << curl << ")";
        throw InvalidInputError(os.str());
    }
    double worst = 0.0;
    const int nr = 12, na = 64;
    for (int i = 0; i <= nr; ++i)
        for (int j = 0; j < na; ++j) {
            const double r = graph.inner + (graph.outer - graph.inner) * i / nr, phi = kTwoPi * j / na;
            const Vec2 x = graph.center + r * Vec2(std::cos(phi), std::sin(phi));
            const auto p = graph.at(x(0), x(1));
            worst = std::max(worst, std::abs(sys.hamiltonian(Vec4(x(0), x(1), p[0].value(), p[1].value())) - k));
        }
    if (worst > blend_tol) {
        std::ostringstream os;
        os << "graph leaves the energy level by " << worst << " in the blend collar (tolerance " << blend_tol << ")";
        throw BlendError(os.str());
    }
    return std::make_shared<GraphPotential>(sys, graph, k);
}

double graph_invariance_defect(const MechanicalSystem& perturbed, const LagrangianGraph& graph, int samples,
                               double max_time, const IntegratorOptions& integ) {
    IntegratorOptions io = integ;
    io.max_step = io.max_step > 0 ? std::min(io.max_step, graph.inner / 20) : graph.inner / 20;
    std::vector<double> worst(samples, 0.0);
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    parallel_for(std::size_t(samples), 0, [&](std::size_t i) {
        // sunflower points on 0.9 of the plateau
        const double r = 0.9 * graph.inner * std::sqrt((i + 0.5) / samples), phi = golden * i;
        const Vec2 x = graph.center + r * Vec2(std::cos(phi), std::sin(phi));
        const auto p = graph.at(x(0), x(1));
        const Trajectory tr = integrate_flow(perturbed, Vec4(x(0), x(1), p[0].value(), p[1].value()), max_time, io);
        for (const auto& s : tr.samples()) {
            if (std::hypot(angle_diff(s.z(0), graph.center(0)), angle_diff(s.z(1), graph.center(1))) >= graph.inner)
                break;
            const auto q = graph.at(s.z(0), s.z(1));
            worst[i] = std::max(worst[i], std::hypot(s.z(2) - q[0].value(), s.z(3) - q[1].value()));
        }
    });
    return *std::max_element(worst.begin(), worst.end());
}

LagrangianGraph fit_lagrangian_graph(const std::vector<Vec4>& samples, const Vec2& center, double inner, double outer,
                                     int degree) {
    std::vector<std::pair<int, int>> mono;
    for (int d = 1; d <= degree; ++d)
        for (int i = d; i >= 0; --i) mono.emplace_back(i, d - i);
    const int nm = int(mono.size());
    if (int(samples.size()) * 2 < 2 * nm) throw InvalidInputError("too few samples for the generating function fit");
    Eigen::MatrixXd A(2 * samples.size(), nm);
    Eigen::VectorXd rhs(2 * samples.size());
    for (std::size_t r = 0; r < samples.size(); ++r) {
        const double y1 = angle_diff(samples[r](0), center(0)) / outer, y2 = angle_diff(samples[r](1), center(1)) / outer;
        for (int c = 0; c < nm; ++c) {
            const auto [i, j] = mono[c];
            A(2 * r, c) = i == 0 ? 0.0 : i * std::pow(y1, i - 1) * std::pow(y2, j) / outer;
            A(2 * r + 1, c) = j == 0 ? 0.0 : j * std::pow(y1, i) * std::pow(y2, j - 1) / outer;
        }
        rhs(2 * r) = samples[r](2);
        rhs(2 * r + 1) = samples[r](3);
    }
    const Eigen::VectorXd coef = A.colPivHouseholderQr().solve(rhs);
    LagrangianGraph g;
    g.center = center;
    g.inner = inner;
    g.outer = outer;
    g.momentum = [coef, mono, center, outer](const Jet2& x1, const Jet2& x2) {
        const Jet2 y1 = (x1 - center(0)) / outer, y2 = (x2 - center(1)) / outer;
        int maxd = 0;
        for (const auto& [i, j] : mono) maxd = std::max({maxd, i, j});
        std::vector<Jet2> pw1(maxd + 1, Jet2(1.0)), pw2(maxd + 1, Jet2(1.0));
        for (int d = 1; d <= maxd; ++d) {
            pw1[d] = pw1[d - 1] * y1;
            pw2[d] = pw2[d - 1] * y2;
        }
        Jet2 p1(0.0), p2(0.0);
        for (std::size_t c = 0; c < mono.size(); ++c) {
            const auto [i, j] = mono[c];
            if (i > 0) p1 += pw1[i - 1] * pw2[j] * (coef(c) * i / outer);
            if (j > 0) p2 += pw1[i] * pw2[j - 1] * (coef(c) * j / outer);
        }
        return std::array<Jet2, 2>{p1, p2};
    };
    return g;
}

// ---------------------------------------------------------------------------------------------
// Splitting by a tilted graph

double support_clearance(const MechanicalSystem& sys, const PeriodicOrbit& orbit, const Vec2& center, double radius,
                         const IntegratorOptions& integ) {
    const Trajectory tr = integrate_flow(sys, orbit.theta0, orbit.period, integ);
    double best = std::numeric_limits<double>::infinity();
    const int n = 2000;
    for (int i = 0; i <= n; ++i) {
        const Vec4 z = tr.at(orbit.period * i / n);
        best = std::min(best, std::hypot(angle_diff(z(0), center(0)), angle_diff(z(1), center(1))));
    }
    return best - radius;
}

namespace {

// max over rho in (0, 1) of |d/dq bump(q)| * 2 rho at q = rho^2
double bump_gradient_peak() {
    double best = 0.0;
    for (int i = 1; i < 4000; ++i) {
        const double r = i / 4000.0;
        best = std::max(best, std::abs(bump_of_sq_derivative(r * r)) * 2 * r);
    }
    return best;
}

std::vector<Vec4> sample_unstable_surface(const Section& section, const ManifoldBranch& wu, const Vec2& center,
                                          double radius, const IntegratorOptions& integ, unsigned jobs) {
    std::vector<std::vector<Vec4>> per(wu.points.size());
    parallel_for(wu.points.size(), jobs, [&](std::size_t i) {
        Vec4 z;
        try {
            z = section.lift(wu.points[i]);
        } catch (const Error&) {
            return;
        }
        const Trajectory tr = integrate_flow(section.system(), z, -kTwoPi * 1.5, integ);
        const int n = 600;
        for (int k = 0; k <= n; ++k) {
            const Vec4 q = tr.at(tr.t_end() * k / n);
            if (std::hypot(angle_diff(q(0), center(0)), angle_diff(q(1), center(1))) < radius) per[i].push_back(q);
        }
    });
    std::vector<Vec4> all;
    for (auto& v : per) all.insert(all.end(), v.begin(), v.end());
    return all;
}

}  // namespace

SplitResult split_manifolds(const MechanicalSystem& sys, const PeriodicOrbit& orbit1, const PeriodicOrbit& orbit2,
                            double k, double section_x2, const SplitSpec& spec, const GrowOptions& grow,
                            const OrbitOptions& orbit_opt) {
    if (!(spec.inner > 0 && spec.outer > spec.inner)) throw InvalidInputError("split disc radii must satisfy 0 < inner < outer");
    if (spec.tilt < 0) throw InvalidInputError("tilt must be non-negative");
    for (const auto* orb : {&orbit1, &orbit2})
        if (support_clearance(sys, *orb, spec.center, spec.outer, orbit_opt.integ) <= 0)
            throw SupportOverlapError("perturbation disc meets a periodic orbit's configuration projection");

    IntegratorOptions integ = orbit_opt.integ;
    integ.tol = std::min(integ.tol, 1e-12);

    auto branches = [&](const MechanicalSystem& s, const IntegratorOptions& io) {
        auto sec = std::make_shared<const Section>(s, k, section_x2, io);
        const PlanarMap map = section_map(sec);
        const Vec2 f1 = sec->fixed_point(orbit1), f2 = sec->fixed_point(orbit2);
        const auto sp1 = hyperbolic_splitting(sec->derivative(f1));
        const auto sp2 = hyperbolic_splitting(sec->derivative(f2));
        std::array<ManifoldBranch, 2> br;
        parallel_for(2, 2, [&](std::size_t i) {
            br[i] = i == 0 ? grow_branch(map, f2, sp2, Side::Unstable, spec.unstable_sign, spec.unstable_radius, grow)
                           : grow_branch(map, f1, sp1, Side::Stable, spec.stable_sign, spec.stable_radius, grow);
        });
        return std::pair{sec, br};
    };

    SplitResult res;
    const auto [sec0, br0] = branches(sys, integ);
    res.before = find_heteroclinic(br0[0], br0[1], spec.tol_angle, spec.contact_tol);
    for (const auto& r : res.before) res.max_angle_before = std::max(res.max_angle_before, r.angle);

    // unperturbed unstable graph over the disc
    std::function<std::array<Jet2, 2>(const Jet2&, const Jet2&)> pu = spec.unstable_graph;
    if (!pu) {
        const auto samples = sample_unstable_surface(*sec0, br0[0], spec.center, spec.outer * 1.1, integ, grow.jobs);
        const LagrangianGraph fit = fit_lagrangian_graph(samples, spec.center, spec.inner, spec.outer);
        for (const auto& q : samples) {
            const auto p = fit.at(q(0), q(1));
            res.graph_fit_residual = std::max(res.graph_fit_residual, std::hypot(p[0].value() - q(2), p[1].value() - q(3)));
        }
        pu = fit.momentum;
    }

    // tilt by the gradient of a bump at the downstream edge of the plateau
    const auto pc = pu(Jet2(spec.center(0)), Jet2(spec.center(1)));
    const Mat2 ginv = sys.metric_inverse(spec.center(0), spec.center(1));
    const Vec2 vel = ginv * Vec2(pc[0].value(), pc[1].value());
    const Vec2 bump_center = spec.center + spec.inner * vel.normalized();
    const double rb = spec.bump_radius_factor * spec.outer;
    const double amp = spec.tilt * rb / bump_gradient_peak();

    LagrangianGraph graph;
    graph.center = spec.center;
    graph.inner = spec.inner;
    graph.outer = spec.outer;
    graph.momentum = [pu, bump_center, rb, amp](const Jet2& x1, const Jet2& x2) {
        auto p = pu(x1, x2);
        if (amp == 0.0) return p;
        const Jet2 e1 = x1 - bump_center(0), e2 = x2 - bump_center(1);
        const Jet2 q = (e1 * e1 + e2 * e2) / (rb * rb);
        const Jet2 w = bump_of_sq_derivative(q) * (2.0 * amp / (rb * rb));
        p[0] += w * e1;
        p[1] += w * e2;
        return p;
    };
    res.potential = graph_potential(sys, graph, k, spec.blend_tol);
    const MechanicalSystem perturbed = sys.with_potential(res.potential);

    // the step-size control does not see the bump; cap steps near the disc
    IntegratorOptions integ2 = integ;
    integ2.max_step = integ2.max_step > 0 ? std::min(integ2.max_step, 0.1) : 0.1;
    integ2.fine_discs.push_back({spec.center(0), spec.center(1), spec.outer});
    integ2.fine_max_step = rb / 40;
    integ2.fine_disc_margin = 0.25;
    res.closure_1 = phase_distance(flow_endpoint(perturbed, orbit1.theta0, orbit1.period, integ2), orbit1.theta0);
    res.closure_2 = phase_distance(flow_endpoint(perturbed, orbit2.theta0, orbit2.period, integ2), orbit2.theta0);

    OrbitOptions refind = orbit_opt;
    refind.integ = integ2;
    res.period_change_1 =
        std::abs(find_periodic_orbit(perturbed, k, orbit1.theta0, orbit1.period, refind).period - orbit1.period);
    res.period_change_2 =
        std::abs(find_periodic_orbit(perturbed, k, orbit2.theta0, orbit2.period, refind).period - orbit2.period);

    auto [sec1, br1] = branches(perturbed, integ2);
    res.after = find_heteroclinic(br1[0], br1[1], spec.tol_angle, spec.contact_tol);
    for (const auto& r : res.after) res.max_angle_after = std::max(res.max_angle_after, r.angle);
    res.unstable_before = br0[0];
    res.stable_before = br0[1];
    res.unstable_after = std::move(br1[0]);
    res.stable_after = std::move(br1[1]);
    return res;
}

}  // namespace torusdyn
