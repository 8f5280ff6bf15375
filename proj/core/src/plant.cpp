#include "mauv/plant.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace mauv::plant {

namespace {

using Vec = std::array<double, 9>;  // u v r theta phi psi x y z
enum Idx { U, V, R, TH, PH, PS, X, Y, Z };

struct Forcing {
    // Effective deflections in the turning and pitching planes.
    double yaw_defl = 0.0;
    double pitch_defl = 0.0;
    double roll_defl = 0.0;
    double fin_defl = 0.0;
    double turn_sq = 0.0;  // squared turning-plane deflection, both blades
    double fin_sq = 0.0;
};

struct Composed {
    hydro::HydroConfig at_ref;  // rudder plus deployed fraction of the fin
    double m11, m12, m21, m22, det;
};

Composed compose(const VehicleModel& model, double fin_deploy)
{
    const auto& b = model.bare;
    Composed c;
    c.at_ref = hydro::with_rudder(b, model.rudder, b.ref_speed);
    c.at_ref = hydro::with_fin(c.at_ref, model.fin, std::clamp(fin_deploy, 0.0, 1.0), b.ref_speed);
    c.m11 = b.mass - b.y_vdot;
    c.m12 = b.mass * b.x_g - b.y_rdot;
    c.m21 = b.mass * b.x_g - b.n_vdot;
    c.m22 = b.izz - b.n_rdot;
    c.det = c.m11 * c.m22 - c.m12 * c.m21;
    if (!(std::abs(c.det) > 1e-12) || !std::isfinite(c.det)) throw PlantError("sway/yaw mass matrix is singular");
    return c;
}

Vec derivative(const Vec& s, const Forcing& f, double thrust_pct, double fin_deploy, const Environment& env,
               const VehicleModel& model, const Composed& comp)
{
    const auto& b = model.bare;
    const double u = s[U], v = s[V], r = s[R];
    const double theta = s[TH], phi = s[PH], psi = s[PS];
    const double ratio = std::max(u, 0.0) / b.ref_speed;
    const double ratio2 = ratio * ratio;

    // Sway / yaw, linearized about the current forward speed.
    const double yv = comp.at_ref.y_v * ratio, yr = comp.at_ref.y_r * ratio;
    const double nv = comp.at_ref.n_v * ratio, nr = comp.at_ref.n_r * ratio;
    const double rudder_force = model.rudder.lift_per_angle * ratio2 * f.yaw_defl;
    const double fin_force = model.fin.lift_per_angle * ratio2 * fin_deploy * f.fin_defl;
    const double force = rudder_force + fin_force;
    const double moment = model.rudder.station * rudder_force + model.fin.station * fin_force
                          + model.roll.yaw_coupling * ratio2 * phi;
    const double rhs_v = force + yv * v - (b.mass * u - yr) * r;
    const double rhs_r = moment + nv * v - (b.mass * b.x_g * u - nr) * r;
    const double vdot = (comp.m22 * rhs_v - comp.m12 * rhs_r) / comp.det;
    const double rdot = (-comp.m21 * rhs_v + comp.m11 * rhs_r) / comp.det;

    const auto& sm = model.surge;
    const double drag = sm.linear_drag * u + (sm.induced_drag * f.turn_sq + sm.fin_drag * f.fin_sq) * u * std::abs(u);
    const double udot = (sm.thrust_gain * thrust_pct - drag) / (b.mass + sm.added_mass);

    const auto& pm = model.pitch;
    const double theta_dot = (pm.gain * ratio2 * f.pitch_defl - theta) / pm.time_constant;

    double phi_dot = 0.0;
    if (!env.roll_override) {
        const auto& rm = model.roll;
        const double phi_eq = env.prop_torque_roll * thrust_pct / 100.0 - rm.fixed_fin_counter * ratio2
                              + rm.surface_gain * ratio2 * f.roll_defl;
        phi_dot = (phi_eq - phi) / rm.time_constant;
    }

    Vec d{};
    d[U] = udot;
    d[V] = vdot;
    d[R] = rdot;
    d[TH] = theta_dot;
    d[PH] = phi_dot;
    d[PS] = r;
    const Vec3d e = body_to_earth(phi, theta, psi, {u, v, 0.0});
    d[X] = e.x + env.current_n;
    d[Y] = e.y + env.current_e;
    d[Z] = -u * std::sin(theta) - pm.buoyancy_rise;  // no sway or heave contribution to depth
    return d;
}

Vec axpy(const Vec& a, const Vec& d, double h)
{
    Vec out;
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + h * d[i];
    return out;
}

double slew(double current, double target, double max_delta)
{
    return current + std::clamp(target - current, -max_delta, max_delta);
}

} // namespace

Vec3d body_to_earth(double phi, double theta, double psi, const Vec3d& b)
{
    const double cf = std::cos(phi), sf = std::sin(phi);
    const double ct = std::cos(theta), st = std::sin(theta);
    const double cp = std::cos(psi), sp = std::sin(psi);
    return {ct * cp * b.x + (sf * st * cp - cf * sp) * b.y + (cf * st * cp + sf * sp) * b.z,
            ct * sp * b.x + (sf * st * sp + cf * cp) * b.y + (cf * st * sp - sf * cp) * b.z,
            -st * b.x + sf * ct * b.y + cf * ct * b.z};
}

Vec3d earth_to_body(double phi, double theta, double psi, const Vec3d& e)
{
    const double cf = std::cos(phi), sf = std::sin(phi);
    const double ct = std::cos(theta), st = std::sin(theta);
    const double cp = std::cos(psi), sp = std::sin(psi);
    return {ct * cp * e.x + ct * sp * e.y - st * e.z,
            (sf * st * cp - cf * sp) * e.x + (sf * st * sp + cf * cp) * e.y + sf * ct * e.z,
            (cf * st * cp + sf * sp) * e.x + (cf * st * sp - sf * cp) * e.y + cf * ct * e.z};
}

void VehicleModel::validate() const
{
    bare.validate();
    if (rudder.kind != hydro::AppendageKind::rudder || fin.kind != hydro::AppendageKind::fin)
        throw PlantError("vehicle model needs one rudder and one fin appendage");
    if (!(surge.thrust_gain >= 0.0 && surge.linear_drag > 0.0)) throw PlantError("invalid surge model");
    if (!(pitch.time_constant > 0.0 && roll.time_constant > 0.0)) throw PlantError("time constants must be positive");
    if (!(actuators.slew_rate > 0.0 && actuators.deploy_time > 0.0)) throw PlantError("invalid actuator model");
}

BodyState step(const BodyState& state, const ActuatorSet& act, const Environment& env, const VehicleModel& model,
               double dt)
{
    if (!(dt > 0.0 && dt <= kMaxStep)) throw PlantError("dt must be in (0, 0.1] s");

    const double fin_deploy = std::clamp(act.fin_deploy, 0.0, 1.0);
    const Composed comp = compose(model, fin_deploy);

    Vec s{state.u, state.v, state.r, state.theta, state.phi, state.psi, state.x, state.y, state.z};
    if (env.roll_override) s[PH] = *env.roll_override;

    const double phi = s[PH];
    const double rudd = 0.5 * (act.uppr_rudd + act.lowr_rudd);
    const double elev = 0.5 * (act.port_elev + act.stbd_elev);
    Forcing f;
    f.yaw_defl = rudd * std::cos(phi) + elev * std::sin(phi);
    f.pitch_defl = -rudd * std::sin(phi) + elev * std::cos(phi);
    f.roll_defl = 0.25 * ((act.uppr_rudd - act.lowr_rudd) + (act.stbd_elev - act.port_elev));
    f.fin_defl = act.fin_angle * std::cos(phi);
    f.turn_sq = 2.0 * f.yaw_defl * f.yaw_defl;
    f.fin_sq = 2.0 * fin_deploy * act.fin_angle * act.fin_angle;

    const double thrust = std::clamp(act.thrust_pct, 0.0, 100.0);
    auto deriv = [&](const Vec& x) { return derivative(x, f, thrust, fin_deploy, env, model, comp); };

    const Vec k1 = deriv(s);
    const Vec k2 = deriv(axpy(s, k1, 0.5 * dt));
    const Vec k3 = deriv(axpy(s, k2, 0.5 * dt));
    const Vec k4 = deriv(axpy(s, k3, dt));
    Vec next;
    for (std::size_t i = 0; i < s.size(); ++i) next[i] = s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);

    const Vec rates = deriv(next);

    BodyState out;
    out.u = next[U];
    out.v = next[V];
    out.r = next[R];
    out.theta = wrap_pi(next[TH]);
    out.phi = env.roll_override ? *env.roll_override : wrap_pi(next[PH]);
    out.psi = wrap_pi(next[PS]);
    out.x = next[X];
    out.y = next[Y];
    out.z = std::max(next[Z], 0.0);
    out.p = env.roll_override ? 0.0 : rates[PH];
    out.q = rates[TH];
    out.w = 0.0;  // no heave dynamics

    for (double c : {out.u, out.v, out.w, out.p, out.q, out.r, out.phi, out.theta, out.psi, out.x, out.y, out.z})
        if (!std::isfinite(c)) throw PlantError("non-finite vehicle state (integration blow-up)");
    return out;
}

ActuatorSet actuator_dynamics(const ActuatorSet& cmd, const ActuatorSet& actual, const ActuatorModel& model, double dt)
{
    const double max_delta = model.slew_rate * dt;
    auto surface = [&](double target, double current) {
        return slew(current, std::clamp(target, -kSternLimit, kSternLimit), max_delta);
    };

    ActuatorSet out = actual;
    out.uppr_rudd = surface(cmd.uppr_rudd, actual.uppr_rudd);
    out.lowr_rudd = surface(cmd.lowr_rudd, actual.lowr_rudd);
    out.port_elev = surface(cmd.port_elev, actual.port_elev);
    out.stbd_elev = surface(cmd.stbd_elev, actual.stbd_elev);

    const double deploy_target = std::clamp(cmd.fin_deploy, 0.0, 1.0);
    out.fin_deploy = slew(actual.fin_deploy, deploy_target, dt / model.deploy_time);

    const double fin_target = out.fin_deploy >= 1.0 ? std::clamp(cmd.fin_angle, -kFinLimit, kFinLimit) : 0.0;
    out.fin_angle = slew(actual.fin_angle, fin_target, max_delta);

    out.thrust_pct = std::clamp(cmd.thrust_pct, 0.0, 100.0);
    out.rpm = out.thrust_pct * model.rpm_per_pct;
    return out;
}

VehicleHealth health_step(const VehicleHealth& health, const ActuatorSet& act, const HealthModel& model,
                          const Environment& env, double t, double dt)
{
    VehicleHealth out = health;
    out.motor_current = model.current_per_pct * std::clamp(act.thrust_pct, 0.0, 100.0);
    out.battery_v = health.battery_v - model.drain_per_amp_s * out.motor_current * dt;
    if (env.leak_rate > 0.0 && t >= env.leak_start) out.internal_pressure = health.internal_pressure + env.leak_rate * dt;
    return out;
}

SensorSuite::SensorSuite(std::uint64_t seed) : rng_(seed) {}

double SensorSuite::gauss(double sigma)
{
    if (sigma <= 0.0) return 0.0;
    return sigma * normal_(rng_);
}

SensorSuite::TrackPoint SensorSuite::position_at(double t) const
{
    if (history_.empty()) return {t, 0.0, 0.0};
    if (t <= history_.front().t) return history_.front();
    for (std::size_t i = 1; i < history_.size(); ++i) {
        const auto& a = history_[i - 1];
        const auto& b = history_[i];
        if (t <= b.t) {
            const double w = (b.t - a.t) > 0.0 ? (t - a.t) / (b.t - a.t) : 1.0;
            return {t, a.x + w * (b.x - a.x), a.y + w * (b.y - a.y)};
        }
    }
    return history_.back();
}

std::vector<Measurement> SensorSuite::sense(const BodyState& state, const ActuatorSet& act, const Environment& env,
                                            double t)
{
    history_.push_back({t, state.x, state.y});
    const double keep = env.lbl_latency + 5.0;
    while (history_.size() > 2 && history_[1].t < t - keep) history_.pop_front();

    const auto& n = env.noise;
    std::vector<Measurement> out;
    out.reserve(6);
    out.emplace_back(DepthMeas{state.z + gauss(n.depth), t});
    out.emplace_back(ImuMeas{wrap_pi(state.phi + gauss(n.attitude)), wrap_pi(state.theta + gauss(n.attitude)),
                             wrap_pi(state.psi + gauss(n.attitude)), state.p + gauss(n.rate),
                             state.q + gauss(n.rate), state.r + gauss(n.rate), t});
    out.emplace_back(RpmMeas{act.rpm, t});

    if (state.z < env.gps_surface_depth) out.emplace_back(GpsFix{state.x + gauss(n.gps), state.y + gauss(n.gps), t});

    if (env.lbl_interval > 0.0) {
        if (!next_lbl_) next_lbl_ = env.lbl_latency;
        if (t + 1e-9 >= *next_lbl_) {
            const double t_n = t - env.lbl_latency;
            const TrackPoint p = position_at(t_n);
            out.emplace_back(LblFix{p.x + gauss(n.lbl), p.y + gauss(n.lbl), t_n, t});
            *next_lbl_ += env.lbl_interval;
        }
    }

    if (env.dvl_interval > 0.0) {
        if (!next_dvl_) next_dvl_ = 0.0;
        if (t + 1e-9 >= *next_dvl_) {
            // Bottom-track velocity in the sensor frame (mounted aligned with the body).
            Vec3d ground = body_to_earth(state.phi, state.theta, state.psi, {state.u, state.v, 0.0});
            ground.x += env.current_n;
            ground.y += env.current_e;
            const Vec3d b = earth_to_body(state.phi, state.theta, state.psi, ground);
            out.emplace_back(DvlMeas{b.x + gauss(n.dvl), b.y + gauss(n.dvl), b.z + gauss(n.dvl), t, DvlFrame::sensor});
            *next_dvl_ += env.dvl_interval;
        }
    }
    return out;
}

} // namespace mauv::plant
