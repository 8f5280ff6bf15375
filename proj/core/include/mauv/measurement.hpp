#pragma once

#include <variant>

namespace mauv {

struct DepthMeas {
    double z = 0.0;
    double t = 0.0;
};

struct ImuMeas {
    double phi = 0.0, theta = 0.0, psi = 0.0;
    double p = 0.0, q = 0.0, r = 0.0;
    double t = 0.0;
};

struct GpsFix {
    double x = 0.0, y = 0.0;
    double t = 0.0;
};

// Acoustic position fix. Position is valid at t_n, received at t_rx.
struct LblFix {
    double x = 0.0, y = 0.0;
    double t_n = 0.0;
    double t_rx = 0.0;
};

enum class DvlFrame { sensor, body, earth };

struct DvlMeas {
    double vx = 0.0, vy = 0.0, vz = 0.0;
    double t = 0.0;
    DvlFrame frame = DvlFrame::sensor;
};

// Propeller speed, needed by the flight dynamic model.
struct RpmMeas {
    double rpm = 0.0;
    double t = 0.0;
};

using Measurement = std::variant<DepthMeas, ImuMeas, GpsFix, LblFix, DvlMeas, RpmMeas>;

inline double timestamp(const Measurement& m)
{
    return std::visit(
        [](const auto& v) {
            if constexpr (requires { v.t_rx; })
                return v.t_rx;
            else
                return v.t;
        },
        m);
}

} // namespace mauv
