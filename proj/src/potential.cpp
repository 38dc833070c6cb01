#include "torusdyn/potential.hpp"

#include "torusdyn/system.hpp"

namespace torusdyn {

bool Support::contains(double x1, double x2) const {
    if (kind == Kind::Full) return true;
    return std::hypot(angle_diff(x1, center(0)), angle_diff(x2, center(1))) < radius;
}

Jet2 TrigPotential::jet(double x1, double x2) const {
    return eval_trig(harmonics_, Jet2::variable(0, x1), Jet2::variable(1, x2));
}

Jet2 RadialBump::jet(double x1, double x2) const {
    const double d1 = angle_diff(x1, center_(0));
    const double d2 = angle_diff(x2, center_(1));
    if (d1 * d1 + d2 * d2 >= radius_ * radius_) return Jet2(0.0);
    const Jet2 a = Jet2::variable(0, d1);
    const Jet2 b = Jet2::variable(1, d2);
    const Jet2 q = (a * a + b * b) / (radius_ * radius_);
    return bump_of_sq(q) * height_;
}

}  // namespace torusdyn
