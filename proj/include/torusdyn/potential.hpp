#pragma once
// Scalar potential terms on the torus with Taylor data to third order.

#include <memory>
#include <string>
#include <vector>

#include "torusdyn/jet.hpp"
#include "torusdyn/types.hpp"

namespace torusdyn {

struct Support {
    enum class Kind { Full, Disc };
    Kind kind = Kind::Full;
    Vec2 center = Vec2::Zero();
    double radius = 0.0;

    static Support full() { return {}; }
    static Support disc(const Vec2& c, double r) { return {Kind::Disc, c, r}; }
    bool contains(double x1, double x2) const;
};

class PotentialTerm {
public:
    virtual ~PotentialTerm() = default;
    // Taylor coefficients (value, gradient, Hessian, third derivatives) at x.
    virtual Jet2 jet(double x1, double x2) const = 0;
    virtual std::string kind() const = 0;
    virtual Support support() const { return Support::full(); }

    double value(double x1, double x2) const { return jet(x1, x2).value(); }
};

using PotentialPtr = std::shared_ptr<const PotentialTerm>;

// Evaluate a potential on arbitrary scalar arguments (double or Jet).
template <typename S>
S evaluate_potential(const PotentialTerm& term, const S& x1, const S& x2) {
    const double a = value_of(x1), b = value_of(x2);
    const Jet2 j = term.jet(a, b);
    return compose_jet2(j, S(x1 - a), S(x2 - b));
}

struct Harmonic {
    int k1 = 0;
    int k2 = 0;
    double cos_coef = 0.0;
    double sin_coef = 0.0;
};

// sum_h c_h cos(k.x) + s_h sin(k.x)
class TrigPotential final : public PotentialTerm {
public:
    explicit TrigPotential(std::vector<Harmonic> harmonics) : harmonics_(std::move(harmonics)) {}
    Jet2 jet(double x1, double x2) const override;
    std::string kind() const override { return "trig-polynomial"; }
    const std::vector<Harmonic>& harmonics() const { return harmonics_; }

private:
    std::vector<Harmonic> harmonics_;
};

class ConstantPotential final : public PotentialTerm {
public:
    explicit ConstantPotential(double c) : c_(c) {}
    Jet2 jet(double, double) const override { return Jet2(c_); }
    std::string kind() const override { return "constant"; }

private:
    double c_;
};

// height * exp(1 - 1/(1 - r^2/R^2)) inside the disc of radius R; peak value = height.
class RadialBump final : public PotentialTerm {
public:
    RadialBump(Vec2 center, double radius, double height)
        : center_(center), radius_(radius), height_(height) {}
    Jet2 jet(double x1, double x2) const override;
    std::string kind() const override { return "radial-bump"; }
    Support support() const override { return Support::disc(center_, radius_); }

private:
    Vec2 center_;
    double radius_;
    double height_;
};

// scale * base
class ScaledPotential final : public PotentialTerm {
public:
    ScaledPotential(PotentialPtr base, double scale) : base_(std::move(base)), scale_(scale) {}
    Jet2 jet(double x1, double x2) const override { return base_->jet(x1, x2) * scale_; }
    std::string kind() const override { return base_->kind(); }
    Support support() const override { return base_->support(); }

private:
    PotentialPtr base_;
    double scale_;
};

// Smooth transition: 0 for u <= 0, 1 for u >= 1, C-infinity in between.
template <typename S>
S smooth_step(const S& u) {
    using std::exp;
    const double v = value_of(u);
    constexpr double kEdge = 1.0 / 600.0;
    if (v <= kEdge) return S(0.0);
    if (v >= 1.0 - kEdge) return S(1.0);
    const S a = exp(-1.0 / u);
    const S b = exp(-1.0 / (1.0 - u));
    return a / (a + b);
}

// 1 for s2 <= inner^2, 0 for s2 >= outer^2, smooth in the squared radius s2.
template <typename S>
S plateau_sq(const S& s2, double inner, double outer) {
    const double i2 = inner * inner, o2 = outer * outer;
    return 1.0 - smooth_step(S((s2 - i2) / (o2 - i2)));
}

// exp(1 - 1/(1 - q)) for q < 1, zero otherwise; q is a squared scaled radius.
template <typename S>
S bump_of_sq(const S& q) {
    using std::exp;
    const double v = value_of(q);
    if (v >= 1.0 - 1.0 / 700.0) return S(0.0);
    return exp(1.0 - 1.0 / (1.0 - q));
}

// Derivative of bump_of_sq with respect to q.
template <typename S>
S bump_of_sq_derivative(const S& q) {
    const double v = value_of(q);
    if (v >= 1.0 - 1.0 / 700.0) return S(0.0);
    const S u = 1.0 - q;
    return -bump_of_sq(q) / (u * u);
}

}  // namespace torusdyn
