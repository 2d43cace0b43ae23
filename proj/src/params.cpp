#include "rotaens/params.hpp"

#include <cmath>

namespace rotaens {

const std::array<std::string_view, ParamVector::kSize>& ParamVector::names() {
    static const std::array<std::string_view, kSize> n{"b",     "phi",   "r",     "rho",   "beta1",
                                                       "beta2", "beta3", "beta4", "beta5", "beta6"};
    return n;
}

std::array<double, ParamVector::kSize> ParamVector::to_array() const {
    return {b, phi, r, rho, beta[0], beta[1], beta[2], beta[3], beta[4], beta[5]};
}

ParamVector ParamVector::from_array(const std::array<double, kSize>& v) {
    ParamVector p;
    p.b = v[0];
    p.phi = v[1];
    p.r = v[2];
    p.rho = v[3];
    for (std::size_t i = 0; i < kAgeClasses; ++i) p.beta[i] = v[4 + i];
    return p;
}

bool ParamVector::in_support() const {
    if (!(b >= 0.0 && b <= 1.0)) return false;
    if (!(phi >= kPhaseLower && phi <= kPhaseUpper)) return false;
    if (!(r > 0.0) || !std::isfinite(r)) return false;
    if (!(rho > 0.0 && rho <= 1.0)) return false;
    for (double x : beta)
        if (!(x > 0.0) || !std::isfinite(x)) return false;
    return true;
}

} // namespace rotaens
