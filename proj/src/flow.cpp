#include "torusdyn/flow.hpp"

#include <limits>

#include <algorithm>
#include <cmath>

namespace torusdyn {

namespace {

using S4 = std::array<double, 4>;
using S20 = std::array<double, 20>;
using S40 = std::array<double, 40>;

Vec4 load4(const double* a) { return {a[0], a[1], a[2], a[3]}; }
void store4(const Vec4& v, double* a) {
    for (int i = 0; i < 4; ++i) a[i] = v(i);
}

TrajectorySample make_sample(const MechanicalSystem& sys, double t, const Vec4& z) {
    const auto d = sys.derivatives(z, 2);
    const Mat4 J = standard_J();
    TrajectorySample s;
    s.t = t;
    s.z = z;
    s.dz = J * d.grad;
    s.ddz = J * d.hess * s.dz;
    s.energy = d.value;
    return s;
}

}  // namespace

Vec4 hamiltonian_field(const MechanicalSystem& sys, const Vec4& z) { return standard_J() * sys.gradient(z); }

Vec4 normal_field(const MechanicalSystem& sys, const Vec4& z) { return sys.gradient(z); }

Vec4 Trajectory::at(double t) const {
    if (samples_.empty()) throw InvalidInputError("empty trajectory");
    const bool forward = t_end() >= t_begin();
    const double lo = std::min(t_begin(), t_end()), hi = std::max(t_begin(), t_end());
    if (t < lo - 1e-12 || t > hi + 1e-12) throw InvalidInputError("interpolation time outside trajectory");
    auto it = forward ? std::lower_bound(samples_.begin(), samples_.end(), t,
                                         [](const TrajectorySample& s, double v) { return s.t < v; })
                      : std::lower_bound(samples_.begin(), samples_.end(), t,
                                         [](const TrajectorySample& s, double v) { return s.t > v; });
    if (it == samples_.begin()) return samples_.front().z;
    if (it == samples_.end()) return samples_.back().z;
    const TrajectorySample& b = *it;
    const TrajectorySample& a = *(it - 1);
    const double h = b.t - a.t;
    const double s = (t - a.t) / h;
    const double s2 = s * s, s3 = s2 * s, s4 = s3 * s, s5 = s4 * s;
    const double h00 = 1 - 10 * s3 + 15 * s4 - 6 * s5;
    const double h10 = s - 6 * s3 + 8 * s4 - 3 * s5;
    const double h20 = 0.5 * (s2 - 3 * s3 + 3 * s4 - s5);
    const double h01 = 10 * s3 - 15 * s4 + 6 * s5;
    const double h11 = -4 * s3 + 7 * s4 - 3 * s5;
    const double h21 = 0.5 * (s3 - 2 * s4 + s5);
    return h00 * a.z + h10 * h * a.dz + h20 * h * h * a.ddz + h01 * b.z + h11 * h * b.dz + h21 * h * h * b.ddz;
}

double Trajectory::relative_energy_drift() const {
    const double e0 = samples_.front().energy;
    double worst = 0.0;
    for (const auto& s : samples_) worst = std::max(worst, std::abs(s.energy - e0));
    return worst / std::max(1.0, std::abs(e0));
}

Trajectory integrate_flow(const MechanicalSystem& sys, const Vec4& z0, double T, const IntegratorOptions& opt) {
    if (!std::isfinite(T)) throw InvalidInputError("non-finite integration time");
    if (!(opt.tol > 0)) throw InvalidInputError("tolerance must be positive");
    std::vector<TrajectorySample> samples{make_sample(sys, 0.0, z0)};
    S4 y;
    store4(z0, y.data());
    auto rhs = [&sys](const S4& s, S4& ds, double) { store4(hamiltonian_field(sys, load4(s.data())), ds.data()); };
    detail::drive(rhs, y, 0.0, T, opt, [&](double t, const S4& s) {
        samples.push_back(make_sample(sys, t, load4(s.data())));
        return true;
    });
    return Trajectory(std::move(samples));
}

Vec4 flow_endpoint(const MechanicalSystem& sys, const Vec4& z0, double T, const IntegratorOptions& opt) {
    S4 y;
    store4(z0, y.data());
    auto rhs = [&sys](const S4& s, S4& ds, double) { store4(hamiltonian_field(sys, load4(s.data())), ds.data()); };
    detail::drive(rhs, y, 0.0, T, opt, [](double, const S4&) { return true; });
    return load4(y.data());
}

namespace {

template <typename R>
void variational_rhs(const MechanicalSystem& sys, const std::array<R, 20>& s, std::array<R, 20>& ds) {
    using M4 = Eigen::Matrix<R, 4, 4>;
    const Vec4 z{static_cast<double>(s[0]), static_cast<double>(s[1]), static_cast<double>(s[2]), static_cast<double>(s[3])};
    const auto d = sys.derivatives(z, 2);
    const Mat4 J = standard_J();
    const Vec4 f = J * d.grad;
    for (int i = 0; i < 4; ++i) ds[i] = f(i);
    const Eigen::Map<const M4> M(s.data() + 4);
    Eigen::Map<M4> dM(ds.data() + 4);
    dM.noalias() = (J * d.hess).cast<R>() * M;
}

S20 pack20(const Vec4& z, const Mat4& M) {
    S20 y;
    store4(z, y.data());
    Eigen::Map<Mat4>(y.data() + 4) = M;
    return y;
}

VariationalState unpack20(const S20& y) {
    return {load4(y.data()), Eigen::Map<const Mat4>(y.data() + 4)};
}

}  // namespace

template <typename Scalar>
VariationalStateT<Scalar> integrate_variational(const MechanicalSystem& sys, const Eigen::Matrix<Scalar, 4, 1>& z0,
                                                Scalar T, const IntegratorOptions& opt) {
    using St = std::array<Scalar, 20>;
    using M4 = Eigen::Matrix<Scalar, 4, 4>;
    if (!std::isfinite(double(T)) || !z0.allFinite()) throw InvalidInputError("non-finite variational input");
    St y{};
    for (int i = 0; i < 4; ++i) y[i] = z0(i);
    Eigen::Map<M4>(y.data() + 4).setIdentity();
    auto rhs = [&sys](const St& s, St& ds, double) { variational_rhs<Scalar>(sys, s, ds); };
    detail::drive(rhs, y, 0.0, double(T), opt, [](double, const St&) { return true; });
    VariationalStateT<Scalar> r;
    for (int i = 0; i < 4; ++i) r.z(i) = y[i];
    r.M = Eigen::Map<const M4>(y.data() + 4);
    return r;
}

template VariationalStateT<double> integrate_variational<double>(const MechanicalSystem&, const Vec4&, double,
                                                                 const IntegratorOptions&);
template VariationalStateT<long double> integrate_variational<long double>(
    const MechanicalSystem&, const Eigen::Matrix<long double, 4, 1>&, long double, const IntegratorOptions&);

std::vector<VariationalState> variational_at_times(const MechanicalSystem& sys, const Vec4& z0,
                                                   const std::vector<double>& times,
                                                   const IntegratorOptions& opt) {
    std::vector<VariationalState> out;
    out.reserve(times.size());
    S20 y = pack20(z0, Mat4::Identity());
    auto rhs = [&sys](const S20& s, S20& ds, double) { variational_rhs<double>(sys, s, ds); };
    double t = 0.0;
    for (double ti : times) {
        if (ti < t) throw InvalidInputError("times must be non-decreasing");
        detail::drive(rhs, y, t, ti, opt, [](double, const S20&) { return true; });
        t = ti;
        out.push_back(unpack20(y));
    }
    return out;
}

Vec4 integrate_normal_flow(const MechanicalSystem& sys, const Vec4& z0, double s, double eps_normal,
                           const IntegratorOptions& opt) {
    if (!(std::abs(s) < eps_normal)) throw InvalidInputError("normal-flow time outside (-eps_normal, eps_normal)");
    S4 y;
    store4(z0, y.data());
    auto rhs = [&sys](const S4& st, S4& ds, double) { store4(sys.gradient(load4(st.data())), ds.data()); };
    detail::drive(rhs, y, 0.0, s, opt, [](double, const S4&) { return true; });
    return load4(y.data());
}

NormalGerm normal_germ(const MechanicalSystem& sys, const Vec4& z, double eps_normal, int samples, double h,
                       const IntegratorOptions& opt) {
    auto e = [&](double s) { return sys.hamiltonian(integrate_normal_flow(sys, z, s, eps_normal, opt)); };
    NormalGerm g;
    g.expected = sys.gradient(z).squaredNorm();
    const double d1 = (e(h) - e(-h)) / (2 * h);
    const double d2 = (e(h / 2) - e(-h / 2)) / h;
    g.slope = (4 * d2 - d1) / 3;
    const double span = 0.95 * eps_normal;
    double prev = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < samples; ++i) {
        const double v = e(-span + 2 * span * i / (samples - 1));
        if (!(v > prev)) g.monotone = false;
        prev = v;
    }
    return g;
}

namespace {

ForcedResult forced_once(const MechanicalSystem& sys, const Vec4& z0, double T, const Forcing& forcing,
                         const IntegratorOptions& base, bool use_adjoint, double support_step) {
    IntegratorOptions opt = base;
    for (const auto& [lo, hi] : forcing.support) {
        opt.breakpoints.push_back(lo);
        opt.breakpoints.push_back(hi);
        opt.fine_intervals.emplace_back(lo, hi);
    }
    opt.fine_max_step = support_step;
    const Mat4 J = standard_J();
    S40 y{};
    store4(z0, y.data());
    Eigen::Map<Mat4>(y.data() + 4) = Mat4::Identity();
    Eigen::Map<Mat4>(y.data() + 20) = Mat4::Identity();
    auto rhs = [&](const S40& s, S40& ds, double t) {
        const Vec4 z = load4(s.data());
        const auto d = sys.derivatives(z, 2);
        const Mat4 A = J * d.hess;
        store4(J * d.grad, ds.data());
        const Eigen::Map<const Mat4> M(s.data() + 4);
        const Eigen::Map<const Mat4> W(s.data() + 20);
        Eigen::Map<Mat4>(ds.data() + 4).noalias() = A * M;
        Eigen::Map<Mat4>(ds.data() + 20).noalias() = -W * A;
        const Vec4 b = forcing.b ? forcing.b(t, z) : Vec4::Zero();
        const Vec4 q = use_adjoint ? Vec4(W * b) : Vec4(M.partialPivLu().solve(b));
        store4(q, ds.data() + 36);
    };
    detail::drive(rhs, y, 0.0, T, opt, [](double, const S40&) { return true; });
    ForcedResult r;
    r.z_end = load4(y.data());
    r.M = Eigen::Map<const Mat4>(y.data() + 4);
    r.value = r.M * load4(y.data() + 36);
    return r;
}

}  // namespace

ForcedResult forced_variational(const MechanicalSystem& sys, const Vec4& z0, double T, const Forcing& forcing,
                                const IntegratorOptions& opt, bool use_adjoint) {
    if (!std::isfinite(T) || T < 0) throw InvalidInputError("forced variational needs finite T >= 0");
    const double step = forcing.support_max_step;
    ForcedResult r = forced_once(sys, z0, T, forcing, opt, use_adjoint, step);
    if (forcing.verify) {
        const double finer = step > 0 ? 0.5 * step : 0.0;
        IntegratorOptions tight = opt;
        if (step <= 0) tight.max_step = opt.max_step > 0 ? 0.5 * opt.max_step : 0.5;
        const ForcedResult r2 = forced_once(sys, z0, T, forcing, tight, use_adjoint, finer);
        const double diff = (r2.value - r.value).norm();
        if (diff > forcing.verify_tol * std::max(1.0, r.value.norm()))
            throw AccuracyError("variation-of-constants quadrature did not converge under refinement");
        r = r2;
    }
    return r;
}

}  // namespace torusdyn
