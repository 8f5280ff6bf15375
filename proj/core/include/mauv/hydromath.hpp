#pragma once

// Linear sway/yaw stability and maneuverability of a torpedo-shaped hull with
// a stern rudder pair and forward morphing fins.
//
// Frame: body x forward, origin at the coefficient reference point. Stations
// are signed x positions; a stern rudder sits at x_R < 0 (xi = -x_R > 0), a
// forward fin at x_f = eta. All coefficients are dimensional SI values at the
// config's reference speed.

#include <optional>
#include <stdexcept>
#include <string>

namespace mauv::hydro {

class HydroError : public std::runtime_error {
public:
    enum class Kind { division_by_zero, precondition, singular, invalid_config };

    HydroError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

struct HydroConfig {
    double mass = 0.0;       // kg
    double izz = 0.0;        // kg m^2, about the origin
    double x_g = 0.0;        // m
    double y_vdot = 0.0;     // added mass terms
    double y_rdot = 0.0;
    double n_vdot = 0.0;
    double n_rdot = 0.0;
    double y_v = 0.0;        // linear damping (bare body unless composed)
    double y_r = 0.0;
    double n_v = 0.0;
    double n_r = 0.0;
    double rho = 1000.0;     // kg/m^3
    double ref_speed = 1.5;  // speed the damping coefficients were taken at, m/s

    // Throws HydroError(invalid_config) when the physical sign conditions fail.
    void validate() const;
};

enum class AppendageKind { rudder, fin };

struct Appendage {
    AppendageKind kind = AppendageKind::rudder;
    double lift_per_angle = 0.0;  // Y_delta or Y_f_delta at ref speed, N/rad, negative
    double station = 0.0;         // x_R or x_f, m
    double area = 0.0;            // planform area of one blade, m^2
    double cl_alpha = 0.0;        // 1/rad

    // A = Y_delta / U (rudder) or B = Y_f_delta / U (fin).
    double coefficient(double speed) const { return lift_per_angle / speed; }
};

// Stern rudder pair; requires station < 0 and lift_per_angle <= 0.
Appendage make_rudder(double lift_per_angle, double station, double area = 0.0, double cl_alpha = 0.0);
// Forward fin pair; requires station > 0 and lift_per_angle <= 0.
Appendage make_fin(double lift_per_angle, double station, double area = 0.0, double cl_alpha = 0.0);

struct StabilityReport {
    double c = 0.0;
    double c_bare = 0.0;
    double x_r = 0.0;
    double x_ac = 0.0;
    bool stable = false;
    double r_per_delta = 0.0;  // NaN when c == 0
};

double aerodynamic_center(const HydroConfig& cfg);
double center_of_rotation(const HydroConfig& cfg, double speed);
double stability_index(const HydroConfig& cfg, double speed);

HydroConfig with_rudder(const HydroConfig& cfg, const Appendage& rudder, double speed);
// deploy_fraction scales the fin lift linearly; 0 is retracted, 1 fully deployed.
HydroConfig with_fin(const HydroConfig& cfg, const Appendage& fin, double deploy_fraction, double speed);

// Steady yaw rate for rudder angle delta (rad). With a fin present it is
// deflected to -delta. `bare` is the bare-body config; composition happens
// internally. Throws HydroError(singular) when the composed index is zero.
double steady_yaw_rate(const HydroConfig& bare, const Appendage& rudder, const std::optional<Appendage>& fin,
                       double delta, double speed);

struct RudderThreshold {
    double a = 0.0;               // A* = Y_delta* / U
    double lift_per_angle = 0.0;  // Y_delta*
};

// Rudder lift at which the composed stability index crosses zero.
RudderThreshold min_stabilizing_rudder(const HydroConfig& bare, double rudder_station, double speed);

// x_r,b < eta < x_AC,b (exclusive); empty when the bare body is stable.
bool fin_placement_valid(double eta, const HydroConfig& bare, double speed);

// -1/2 rho CL_alpha (2 S) U^2.
double rudder_lift_per_angle(double rho, double cl_alpha, double area_one_blade, double speed);

StabilityReport analyze(const HydroConfig& bare, const Appendage& rudder, const std::optional<Appendage>& fin,
                        double deploy_fraction, double speed);

// Linear damping scales with U and surface lift with U^2, so every composed
// coefficient above scales with U / ref_speed.
HydroConfig at_speed(const HydroConfig& cfg, double speed);

} // namespace mauv::hydro
