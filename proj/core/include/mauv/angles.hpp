#pragma once

#include <cmath>
#include <numbers>

namespace mauv {

constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

// Wraps to (-pi, pi].
inline double wrap_pi(double a)
{
    a = std::remainder(a, 2.0 * std::numbers::pi);
    if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
    return a;
}

// Wraps to (-180, 180].
inline double wrap_180(double deg)
{
    deg = std::remainder(deg, 360.0);
    if (deg <= -180.0) deg += 360.0;
    return deg;
}

// Heading in [0, 360).
inline double wrap_360(double deg)
{
    deg = std::fmod(deg, 360.0);
    if (deg < 0.0) deg += 360.0;
    return deg;
}

} // namespace mauv
