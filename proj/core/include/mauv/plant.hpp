#pragma once

// Truth side of the software-in-the-loop setup: vehicle dynamics, actuator
// servos, health telemetry and the simulated sensor suite.

#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "mauv/angles.hpp"
#include "mauv/hydromath.hpp"
#include "mauv/measurement.hpp"

namespace mauv::plant {

class PlantError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kSternLimit = deg2rad(15.0);
inline constexpr double kFinLimit = deg2rad(20.0);
inline constexpr double kMaxStep = 0.1;

struct BodyState {
    double u = 0.0, v = 0.0, w = 0.0;         // body velocities, m/s
    double p = 0.0, q = 0.0, r = 0.0;         // body rates, rad/s
    double phi = 0.0, theta = 0.0, psi = 0.0; // rad
    double x = 0.0, y = 0.0;                  // north, east, m
    double z = 0.0;                           // depth, m, positive down

    double speed() const { return u; }
};

struct Vec3d {
    double x = 0.0, y = 0.0, z = 0.0;
};

// Rotates a body-frame vector to north/east/down with the roll-pitch-yaw
// Euler sequence; earth_to_body is its transpose.
Vec3d body_to_earth(double phi, double theta, double psi, const Vec3d& b);
Vec3d earth_to_body(double phi, double theta, double psi, const Vec3d& e);

struct ActuatorSet {
    double uppr_rudd = 0.0, lowr_rudd = 0.0;
    double port_elev = 0.0, stbd_elev = 0.0;
    double fin_deploy = 0.0;  // 0 retracted .. 1 deployed
    double fin_angle = 0.0;   // rad
    double thrust_pct = 0.0;  // 0..100
    double rpm = 0.0;
};

struct SensorNoise {
    double depth = 0.0;     // m
    double attitude = 0.0;  // rad
    double rate = 0.0;      // rad/s
    double gps = 0.0;       // m
    double lbl = 0.0;       // m
    double dvl = 0.0;       // m/s
};

struct Environment {
    double current_n = 0.0, current_e = 0.0;  // m/s
    double water_density = 1000.0;
    double prop_torque_roll = 0.0;  // roll the propeller torque induces at 100 % thrust, rad
    double lbl_latency = 0.0;       // s
    double lbl_interval = 0.0;      // s, <= 0 disables LBL
    double dvl_interval = 0.0;      // s, <= 0 disables the DVL
    double gps_surface_depth = 0.3; // GPS only above this depth, m
    SensorNoise noise;
    std::optional<double> roll_override;  // pins roll, rad
    double leak_rate = 0.0;   // internal pressure units per second
    double leak_start = 0.0;  // s
};

struct SurgeModel {
    double added_mass = 1.0;     // -X_udot, kg
    double thrust_gain = 0.5;    // N per thrust percent
    double linear_drag = 20.0;   // N per m/s
    double induced_drag = 0.0;   // rudder pair in the turning plane, N per (m/s)^2 per rad^2
    double fin_drag = 0.0;       // deployed fins, N per (m/s)^2 per rad^2
};

struct PitchModel {
    double gain = 1.0;           // steady pitch per net elevator angle at ref speed
    double time_constant = 1.0;  // s
    double buoyancy_rise = 0.0;  // m/s
};

struct RollModel {
    double time_constant = 0.5;      // s
    double surface_gain = 2.0;       // roll per differential surface angle at ref speed
    double fixed_fin_counter = 0.0;  // roll countered by the fixed fins at ref speed, rad
    double yaw_coupling = 0.0;       // heel-induced yaw moment at ref speed, N m per rad
};

struct ActuatorModel {
    double slew_rate = deg2rad(60.0);  // rad/s
    double deploy_time = 1.0;          // s
    double rpm_per_pct = 30.0;
};

struct HealthModel {
    double current_per_pct = 0.1;     // A per thrust percent
    double drain_per_amp_s = 1.0e-4;  // V per A s
    double initial_voltage = 16.8;
    double nominal_pressure = 100.0;
};

struct VehicleModel {
    hydro::HydroConfig bare;
    hydro::Appendage rudder;
    hydro::Appendage fin;
    SurgeModel surge;
    PitchModel pitch;
    RollModel roll;
    ActuatorModel actuators;
    HealthModel health;

    void validate() const;
};

struct VehicleHealth {
    double battery_v = 16.8;
    double motor_current = 0.0;
    double internal_pressure = 100.0;
};

// One fixed RK4 step of length dt in (0, 0.1]. Throws PlantError on a singular
// mass matrix or a non-finite result.
BodyState step(const BodyState& state, const ActuatorSet& act, const Environment& env, const VehicleModel& model,
               double dt);

// Rate-limited servos. Fin articulation only follows its command once the fin
// is fully deployed; otherwise it slews back to zero.
ActuatorSet actuator_dynamics(const ActuatorSet& cmd, const ActuatorSet& actual, const ActuatorModel& model, double dt);

VehicleHealth health_step(const VehicleHealth& health, const ActuatorSet& act, const HealthModel& model,
                          const Environment& env, double t, double dt);

class SensorSuite {
public:
    explicit SensorSuite(std::uint64_t seed);

    std::vector<Measurement> sense(const BodyState& state, const ActuatorSet& act, const Environment& env, double t);

private:
    struct TrackPoint {
        double t, x, y;
    };

    double gauss(double sigma);
    TrackPoint position_at(double t) const;

    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::deque<TrackPoint> history_;
    std::optional<double> next_lbl_;
    std::optional<double> next_dvl_;
};

} // namespace mauv::plant
