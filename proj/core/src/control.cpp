#include "mauv/control.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mauv::control {

double pid_step(const PidGains& g, double error, double dt, PidState& st)
{
    if (!(dt > 0.0)) throw ControlError("pid_step: dt must be positive");

    st.integral += g.ki * error * dt;
    if (g.i_limit > 0.0) st.integral = std::clamp(st.integral, -g.i_limit, g.i_limit);

    const double deriv = st.primed ? (error - st.prev_error) / dt : 0.0;
    st.prev_error = error;
    st.primed = true;

    double out = g.kp * error + st.integral + g.kd * deriv;
    if (g.out_limit > 0.0) out = std::clamp(out, -g.out_limit, g.out_limit);
    return out;
}

double heading_error_deg(double desired_deg, double actual_deg)
{
    return wrap_180(desired_deg - actual_deg);
}

const GainSet& ModeGainSet::at(const std::string& mode) const
{
    auto it = modes.find(mode);
    if (it == modes.end()) throw ControlError("unknown control mode '" + mode + "'");
    return it->second;
}

Attitude imu_offset_correct(const Attitude& raw, const ImuOffsets& off)
{
    return Attitude{wrap_pi(raw.phi - off.roll), wrap_pi(raw.theta - off.pitch), wrap_pi(raw.psi - off.heading)};
}

ImuOffsets capture_offset(OffsetAxis axis, const Attitude& raw, ImuOffsets offsets)
{
    switch (axis) {
    case OffsetAxis::roll: offsets.roll = raw.phi; break;
    case OffsetAxis::pitch: offsets.pitch = raw.theta; break;
    case OffsetAxis::heading: offsets.heading = raw.psi; break;
    }
    return offsets;
}

void save_offsets(const std::filesystem::path& file, const ImuOffsets& o)
{
    std::ofstream out(file);
    if (!out) throw ControlError("cannot write offsets file " + file.string());
    out.precision(17);
    out << "# IMU mount offsets, degrees\n";
    out << "roll_offset=" << rad2deg(o.roll) << "\n";
    out << "pitch_offset=" << rad2deg(o.pitch) << "\n";
    out << "heading_offset=" << rad2deg(o.heading) << "\n";
}

ImuOffsets load_offsets(const std::filesystem::path& file, bool* missing)
{
    ImuOffsets o;
    std::ifstream in(file);
    if (missing) *missing = !in;
    if (!in) return o;

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ControlError("offsets line " + std::to_string(line_no) + ": expected key=value");
        const std::string key = line.substr(0, eq);
        const double value = deg2rad(std::stod(line.substr(eq + 1)));
        if (key == "roll_offset")
            o.roll = value;
        else if (key == "pitch_offset")
            o.pitch = value;
        else if (key == "heading_offset")
            o.heading = value;
        else
            throw ControlError("offsets line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    return o;
}

double depth_cascade(double desired_depth, double depth, double theta, const GainSet& gains, double dt,
                     ControlMode mode, DepthLoopState& st, double glide_pitch, double* desired_pitch_out)
{
    double desired_pitch = glide_pitch;
    if (mode == ControlMode::propelled) {
        // Too shallow (positive error) needs nose down, i.e. negative pitch.
        desired_pitch = -pid_step(gains.depth, desired_depth - depth, dt, st.depth);
    }
    desired_pitch = std::clamp(desired_pitch, -kPitchLimit, kPitchLimit);
    if (desired_pitch_out) *desired_pitch_out = desired_pitch;
    return pid_step(gains.pitch, desired_pitch - theta, dt, st.pitch);
}

void apply_gain(GainSet& set, const std::string& name, double value)
{
    const auto us = name.rfind('_');
    if (us == std::string::npos) throw ControlError("bad gain name '" + name + "'");
    const std::string loop = name.substr(0, us);
    const std::string term = name.substr(us + 1);

    PidGains* g = nullptr;
    if (loop == "heading")
        g = &set.heading;
    else if (loop == "speed")
        g = &set.speed;
    else if (loop == "roll")
        g = &set.roll;
    else if (loop == "depth")
        g = &set.depth;
    else if (loop == "pitch")
        g = &set.pitch;
    else
        throw ControlError("unknown control loop in gain name '" + name + "'");

    if (term == "kp")
        g->kp = value;
    else if (term == "ki")
        g->ki = value;
    else if (term == "kd")
        g->kd = value;
    else if (term == "ilimit")
        g->i_limit = value;
    else if (term == "outlimit")
        g->out_limit = value;
    else
        throw ControlError("unknown gain term in '" + name + "'");
}

ControlEngine::ControlEngine(ModeGainSet gains, std::string initial_mode, double thrust_per_speed)
    : gains_(std::move(gains)), mode_(std::move(initial_mode)), thrust_per_speed_(thrust_per_speed)
{
    (void)gains_.at(mode_);
}

void ControlEngine::set_mode(const std::string& mode, ControlMode kind)
{
    (void)gains_.at(mode);
    pending_mode_ = std::make_pair(mode, kind);
}

void ControlEngine::queue_gain_update(const std::string& name, double value)
{
    GainSet probe;
    apply_gain(probe, name, value);  // validates the name now
    pending_gains_.emplace_back(name, value);
}

void ControlEngine::reset()
{
    heading_.reset();
    speed_.reset();
    roll_.reset();
    depth_ = DepthLoopState{};
    pending_gains_.clear();
    pending_mode_.reset();
}

void ControlEngine::apply_pending()
{
    if (pending_mode_) {
        if (pending_mode_->first != mode_ || pending_mode_->second != kind_) {
            mode_ = pending_mode_->first;
            kind_ = pending_mode_->second;
            heading_.reset();
            speed_.reset();
            roll_.reset();
            depth_ = DepthLoopState{};
        }
        pending_mode_.reset();
    }
    for (const auto& [name, value] : pending_gains_) {
        apply_gain(gains_.modes.at(mode_), name, value);
        const std::string loop = name.substr(0, name.rfind('_'));
        if (loop == "heading") heading_.reset();
        if (loop == "speed") speed_.reset();
        if (loop == "roll") roll_.reset();
        if (loop == "depth") depth_.depth.reset();
        if (loop == "pitch") depth_.pitch.reset();
    }
    pending_gains_.clear();
}

ControlCorrectives ControlEngine::step(const Setpoints& sp, const EngineInput& in, double dt)
{
    apply_pending();
    const GainSet& g = gains_.at(mode_);

    ControlCorrectives c;
    const double herr = heading_error_deg(sp.heading_deg, rad2deg(in.attitude.psi));
    c.psi_corr = pid_step(g.heading, deg2rad(herr), dt, heading_);
    c.theta_corr = depth_cascade(sp.depth, in.depth, in.attitude.theta, g, dt, kind_, depth_, sp.glide_pitch,
                                 &desired_pitch_);
    c.phi_corr = std::clamp(pid_step(g.roll, -in.attitude.phi, dt, roll_), -kRollCorrectiveLimit, kRollCorrectiveLimit);
    const double feedforward = thrust_per_speed_ * sp.speed;
    c.speed_corr = sp.speed > 0.0 ? feedforward + pid_step(g.speed, sp.speed - in.speed, dt, speed_) : 0.0;
    return c;
}

SternAngles map_correctives_unclamped(const ControlCorrectives& c, double phi)
{
    const double cp = std::cos(phi), sp = std::sin(phi);
    const double phic = std::clamp(c.phi_corr, -kRollCorrectiveLimit, kRollCorrectiveLimit);
    SternAngles a;
    a.uppr_rudd = c.psi_corr * cp - c.theta_corr * sp + phic;
    a.lowr_rudd = c.psi_corr * cp - c.theta_corr * sp - phic;
    a.port_elev = c.psi_corr * sp + c.theta_corr * cp - phic;
    a.stbd_elev = c.psi_corr * sp + c.theta_corr * cp + phic;
    return a;
}

SternAngles map_correctives(const ControlCorrectives& c, double phi)
{
    SternAngles a = map_correctives_unclamped(c, phi);
    const double lim = plant::kSternLimit;
    a.uppr_rudd = std::clamp(a.uppr_rudd, -lim, lim);
    a.lowr_rudd = std::clamp(a.lowr_rudd, -lim, lim);
    a.port_elev = std::clamp(a.port_elev, -lim, lim);
    a.stbd_elev = std::clamp(a.stbd_elev, -lim, lim);
    return a;
}

FinCommand morphing_logic(double heading_error_deg, FinState current, double rudder_cmd)
{
    const double mag = std::abs(heading_error_deg);
    FinCommand cmd;
    if (mag > kFinDeployErrorDeg && current == FinState::retracted) {
        cmd.action = FinAction::deploy;
        cmd.state = FinState::deployed;
    } else if (mag < kFinRetractErrorDeg && current == FinState::deployed) {
        cmd.action = FinAction::retract;
        cmd.state = FinState::retracted;
    } else {
        cmd.action = FinAction::hold;
        cmd.state = current;
    }
    if (cmd.state == FinState::deployed) cmd.fin_angle = std::clamp(-rudder_cmd, -plant::kFinLimit, plant::kFinLimit);
    return cmd;
}

ThrustCommand thrust_map(double speed_corr_pct)
{
    const double pct = std::clamp(speed_corr_pct, 0.0, 100.0);
    return ThrustCommand{pct, pct / 100.0};
}

MapperOutput ActuatorMapper::map(const ControlCorrectives& corr, double phi, double heading_error)
{
    const SternAngles s = map_correctives(corr, cfg_.roll_compensation ? phi : 0.0);

    MapperOutput out;
    out.command.uppr_rudd = s.uppr_rudd;
    out.command.lowr_rudd = s.lowr_rudd;
    out.command.port_elev = s.port_elev;
    out.command.stbd_elev = s.stbd_elev;

    const double rudder_cmd = std::clamp(corr.psi_corr, -plant::kSternLimit, plant::kSternLimit);
    switch (cfg_.fins) {
    case FinPolicy::off:
        out.fin = FinCommand{FinAction::hold, FinState::retracted, 0.0};
        break;
    case FinPolicy::deployed:
        out.fin = FinCommand{FinAction::hold, FinState::deployed,
                             std::clamp(-rudder_cmd, -plant::kFinLimit, plant::kFinLimit)};
        break;
    case FinPolicy::morphing:
        out.fin = morphing_logic(heading_error, fin_state_, rudder_cmd);
        break;
    }
    fin_state_ = out.fin.state;
    out.command.fin_deploy = fin_state_ == FinState::deployed ? 1.0 : 0.0;
    out.command.fin_angle = out.fin.fin_angle;

    const ThrustCommand t = thrust_map(corr.speed_corr);
    out.command.thrust_pct = t.thrust_pct;
    return out;
}

} // namespace mauv::control
