#pragma once

#include "rotaens/model_suite.hpp"

#include <array>
#include <numbers>
#include <string_view>

namespace rotaens {

/// The ten free parameters fitted per model.
struct ParamVector {
    static constexpr std::size_t kSize = 10;

    double b = 0.5;                        ///< seasonal amplitude, [0, 1]
    double phi = std::numbers::pi + 2.0;   ///< seasonal phase, [2, 2 pi + 2]
    double r = 1.0;                        ///< negative-binomial dispersion, > 0
    double rho = 0.117;                    ///< reporting rate, (0, 1]
    std::array<double, kAgeClasses> beta{20.0, 20.0, 20.0, 20.0, 20.0, 20.0};

    /// Column order used everywhere: b, phi, r, rho, beta1..beta6.
    static const std::array<std::string_view, kSize>& names();

    std::array<double, kSize> to_array() const;
    static ParamVector from_array(const std::array<double, kSize>& values);

    bool in_support() const;
    SeasonalForcing forcing() const { return SeasonalForcing{beta, b, phi}; }

    friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

inline constexpr double kPhaseLower = 2.0;
inline constexpr double kPhaseUpper = 2.0 * std::numbers::pi + 2.0;

} // namespace rotaens
