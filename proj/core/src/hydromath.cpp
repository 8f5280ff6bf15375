#include "mauv/hydromath.hpp"

#include <cmath>
#include <limits>

namespace mauv::hydro {

namespace {

void require_speed(double speed)
{
    if (!(speed > 0.0)) throw HydroError(HydroError::Kind::precondition, "speed must be positive");
}

// Rank-one update of a lifting surface with coefficient k = Y_delta/U at station x:
// the local sideslip seen by the surface is v + x r, and its moment arm is x.
HydroConfig add_surface(HydroConfig cfg, double k, double x)
{
    cfg.y_v += k;
    cfg.y_r += x * k;
    cfg.n_v += x * k;
    cfg.n_r += x * x * k;
    return cfg;
}

} // namespace

void HydroConfig::validate() const
{
    if (!(mass > 0.0)) throw HydroError(HydroError::Kind::invalid_config, "mass must be positive");
    if (!(izz > 0.0)) throw HydroError(HydroError::Kind::invalid_config, "izz must be positive");
    if (!(rho > 0.0)) throw HydroError(HydroError::Kind::invalid_config, "rho must be positive");
    if (!(ref_speed > 0.0)) throw HydroError(HydroError::Kind::invalid_config, "ref_speed must be positive");
    if (!(y_v < 0.0)) throw HydroError(HydroError::Kind::invalid_config, "Y_v must be negative");
}

Appendage make_rudder(double lift_per_angle, double station, double area, double cl_alpha)
{
    if (!(station < 0.0)) throw HydroError(HydroError::Kind::invalid_config, "rudder station must be aft (x_R < 0)");
    if (lift_per_angle > 0.0) throw HydroError(HydroError::Kind::invalid_config, "rudder lift per angle must be <= 0");
    return Appendage{AppendageKind::rudder, lift_per_angle, station, area, cl_alpha};
}

Appendage make_fin(double lift_per_angle, double station, double area, double cl_alpha)
{
    if (!(station > 0.0)) throw HydroError(HydroError::Kind::invalid_config, "fin station must be forward (x_f > 0)");
    if (lift_per_angle > 0.0) throw HydroError(HydroError::Kind::invalid_config, "fin lift per angle must be <= 0");
    return Appendage{AppendageKind::fin, lift_per_angle, station, area, cl_alpha};
}

double aerodynamic_center(const HydroConfig& cfg)
{
    if (cfg.y_v == 0.0) throw HydroError(HydroError::Kind::division_by_zero, "Y_v is zero");
    return cfg.n_v / cfg.y_v;
}

double center_of_rotation(const HydroConfig& cfg, double speed)
{
    const double den = cfg.mass * speed - cfg.y_r;
    if (!(den > 0.0)) throw HydroError(HydroError::Kind::precondition, "mU - Y_r must be positive");
    return (cfg.mass * cfg.x_g * speed - cfg.n_r) / den;
}

double stability_index(const HydroConfig& cfg, double speed)
{
    return -cfg.y_v * (cfg.mass * cfg.x_g * speed - cfg.n_r) + cfg.n_v * (cfg.mass * speed - cfg.y_r);
}

HydroConfig with_rudder(const HydroConfig& cfg, const Appendage& rudder, double speed)
{
    require_speed(speed);
    if (rudder.kind != AppendageKind::rudder)
        throw HydroError(HydroError::Kind::precondition, "with_rudder needs a rudder appendage");
    return add_surface(cfg, rudder.coefficient(speed), rudder.station);
}

HydroConfig with_fin(const HydroConfig& cfg, const Appendage& fin, double deploy_fraction, double speed)
{
    require_speed(speed);
    if (fin.kind != AppendageKind::fin) throw HydroError(HydroError::Kind::precondition, "with_fin needs a fin appendage");
    if (!(deploy_fraction >= 0.0 && deploy_fraction <= 1.0))
        throw HydroError(HydroError::Kind::precondition, "deploy fraction outside [0, 1]");
    if (deploy_fraction == 0.0) return cfg;
    return add_surface(cfg, deploy_fraction * fin.coefficient(speed), fin.station);
}

double steady_yaw_rate(const HydroConfig& bare, const Appendage& rudder, const std::optional<Appendage>& fin,
                       double delta, double speed)
{
    require_speed(speed);
    HydroConfig composed = with_rudder(bare, rudder, speed);
    if (fin) composed = with_fin(composed, *fin, 1.0, speed);
    const double c = stability_index(composed, speed);
    if (c == 0.0) throw HydroError(HydroError::Kind::singular, "stability index is zero (stability transition)");

    const double a = rudder.coefficient(speed);
    const double xi = -rudder.station;
    const double x_ac = aerodynamic_center(bare);
    const double yv = bare.y_v;

    double bracket = (-a) * (-yv) * (x_ac + xi);
    if (fin) {
        const double b = fin->coefficient(speed);
        const double eta = fin->station;
        bracket += (-b) * (-yv) * (eta - x_ac) + 2.0 * (-a) * (-b) * (eta + xi);
    }
    return speed / c * bracket * delta;
}

RudderThreshold min_stabilizing_rudder(const HydroConfig& bare, double rudder_station, double speed)
{
    require_speed(speed);
    const double xi = -rudder_station;
    const double c_b = stability_index(bare, speed);
    const double x_ac = aerodynamic_center(bare);
    const double x_r = center_of_rotation(bare, speed);
    const double q = bare.mass * speed - bare.y_r;
    // C(A) = C_b - A * k
    const double k = -bare.y_v * xi * (x_ac + xi) + q * (x_r + xi);
    if (k == 0.0) throw HydroError(HydroError::Kind::singular, "rudder has no leverage on the stability index");
    const double a = c_b / k;
    return RudderThreshold{a, a * speed};
}

bool fin_placement_valid(double eta, const HydroConfig& bare, double speed)
{
    const double x_r = center_of_rotation(bare, speed);
    const double x_ac = aerodynamic_center(bare);
    return x_r < eta && eta < x_ac;
}

double rudder_lift_per_angle(double rho, double cl_alpha, double area_one_blade, double speed)
{
    return -0.5 * rho * cl_alpha * (2.0 * area_one_blade) * speed * speed;
}

StabilityReport analyze(const HydroConfig& bare, const Appendage& rudder, const std::optional<Appendage>& fin,
                        double deploy_fraction, double speed)
{
    HydroConfig composed = with_rudder(bare, rudder, speed);
    if (fin) composed = with_fin(composed, *fin, deploy_fraction, speed);

    StabilityReport rep;
    rep.c = stability_index(composed, speed);
    rep.c_bare = stability_index(bare, speed);
    rep.x_r = center_of_rotation(composed, speed);
    rep.x_ac = aerodynamic_center(composed);
    rep.stable = rep.c > 0.0;
    if (rep.c == 0.0) {
        rep.r_per_delta = std::numeric_limits<double>::quiet_NaN();
    } else if (fin && deploy_fraction == 1.0) {
        rep.r_per_delta = steady_yaw_rate(bare, rudder, fin, 1.0, speed);
    } else if (!fin || deploy_fraction == 0.0) {
        rep.r_per_delta = steady_yaw_rate(bare, rudder, std::nullopt, 1.0, speed);
    } else {
        Appendage partial = *fin;
        partial.lift_per_angle *= deploy_fraction;
        rep.r_per_delta = steady_yaw_rate(bare, rudder, partial, 1.0, speed);
    }
    return rep;
}

HydroConfig at_speed(const HydroConfig& cfg, double speed)
{
    const double s = speed / cfg.ref_speed;
    HydroConfig out = cfg;
    out.y_v *= s;
    out.y_r *= s;
    out.n_v *= s;
    out.n_r *= s;
    out.ref_speed = speed;
    return out;
}

} // namespace mauv::hydro
