#pragma once

#include <random>
#include <string>

#include "mauv/harness.hpp"
#include "mauv/hydromath.hpp"

#ifndef MAUV_DATA_DIR
#define MAUV_DATA_DIR "."
#endif

namespace test {

inline std::string data_path(const std::string& rel) { return std::string(MAUV_DATA_DIR) + "/" + rel; }

inline mauv::harness::Scenario shipped() { return mauv::harness::load_scenario(data_path("config/default.ini")); }

inline double uni(std::mt19937_64& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// A random but physically valid hull with mU - Y_r > 0.
inline mauv::hydro::HydroConfig random_hull(std::mt19937_64& rng, double speed)
{
    mauv::hydro::HydroConfig c;
    do {
        c.mass = uni(rng, 5, 50);
        c.izz = uni(rng, 0.5, 5);
        c.x_g = uni(rng, -0.1, 0.1);
        c.y_vdot = uni(rng, -30, -1);
        c.n_rdot = uni(rng, -3, -0.1);
        c.y_v = uni(rng, -100, -5);
        c.y_r = uni(rng, -20, 20);
        c.n_v = uni(rng, -30, 30);
        c.n_r = uni(rng, -20, -0.1);
        c.ref_speed = speed;
    } while (!(c.mass * speed - c.y_r > 0.0));
    return c;
}

} // namespace test
