#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "mauv/gateway.hpp"
#include "mauv/harness.hpp"

namespace mauv::harness {

// --- Telemetry ----------------------------------------------------------------------------

std::vector<std::string> telemetry_columns()
{
    return {"t",
            // truth
            "x", "y", "z", "u", "v", "w", "p", "q", "r", "phi", "theta", "psi", "heading_deg",
            // navigation
            "nav_x", "nav_y", "nav_z", "nav_vn", "nav_ve", "nav_vd", "nav_phi", "nav_theta", "nav_psi",
            // setpoints
            "des_heading", "des_speed", "des_depth",
            // correctives
            "psi_corr", "theta_corr", "phi_corr", "speed_corr",
            // actuators
            "uppr_rudd", "lowr_rudd", "port_elev", "stbd_elev", "fin_deploy", "fin_angle", "thrust_pct", "rpm",
            "mode", "events"};
}

void write_telemetry_header(std::ostream& out)
{
    out << "# schema=" << kTelemetrySchema << "\n";
    const auto cols = telemetry_columns();
    for (std::size_t i = 0; i < cols.size(); ++i)
        out << (i ? "," : "") << cols[i];
    out << "\n";
}

void write_telemetry_row(std::ostream& out, const TelemetryRow& r)
{
    const double values[] = {r.t,
                             r.truth.x, r.truth.y, r.truth.z, r.truth.u, r.truth.v, r.truth.w,
                             r.truth.p, r.truth.q, r.truth.r, r.truth.phi, r.truth.theta, r.truth.psi,
                             wrap_360(rad2deg(r.truth.psi)),
                             r.nav.x, r.nav.y, r.nav.z, r.nav.vn, r.nav.ve, r.nav.vd,
                             r.nav.phi, r.nav.theta, r.nav.psi,
                             r.desired.heading_deg, r.desired.speed, r.desired.depth,
                             r.corr.psi_corr, r.corr.theta_corr, r.corr.phi_corr, r.corr.speed_corr,
                             r.act.uppr_rudd, r.act.lowr_rudd, r.act.port_elev, r.act.stbd_elev,
                             r.act.fin_deploy, r.act.fin_angle, r.act.thrust_pct, r.act.rpm};
    char buf[32];
    bool first = true;
    for (double v : values) {
        std::snprintf(buf, sizeof(buf), "%.9g", v);
        if (!first)
            out << ',';
        out << buf;
        first = false;
    }
    out << ',' << r.mode << ',' << r.events << '\n';
}

const std::vector<double>& Telemetry::col(const std::string& name) const
{
    const auto it = numeric.find(name);
    if (it == numeric.end())
        throw ConfigError("telemetry has no column '" + name + "'");
    return it->second;
}

Telemetry read_telemetry(std::istream& in)
{
    Telemetry tel;
    std::string line;
    bool schema_ok = false;
    while (std::getline(in, line)) {
        if (line.rfind("# schema=", 0) == 0) {
            if (line.substr(9) != kTelemetrySchema)
                throw ConfigError("unsupported telemetry schema '" + line.substr(9) + "'");
            schema_ok = true;
            continue;
        }
        if (line.empty() || line[0] == '#')
            continue;
        break;
    }
    if (!schema_ok)
        throw ConfigError("telemetry file lacks a schema line");
    {
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ','))
            tel.columns.push_back(c);
    }
    if (tel.columns != telemetry_columns())
        throw ConfigError("telemetry columns do not match the schema");
    const std::size_t numeric_cols = tel.columns.size() - 2;
    for (std::size_t i = 0; i < numeric_cols; ++i)
        tel.numeric[tel.columns[i]];

    std::vector<std::vector<double>*> slots;
    for (std::size_t i = 0; i < numeric_cols; ++i)
        slots.push_back(&tel.numeric[tel.columns[i]]);

    std::size_t line_no = 2;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        std::size_t pos = 0;
        for (std::size_t i = 0; i < numeric_cols; ++i) {
            const auto comma = line.find(',', pos);
            if (comma == std::string::npos)
                throw ConfigError("telemetry line " + std::to_string(line_no) + " is short");
            slots[i]->push_back(std::strtod(line.c_str() + pos, nullptr));
            pos = comma + 1;
        }
        const auto comma = line.find(',', pos);
        if (comma == std::string::npos)
            throw ConfigError("telemetry line " + std::to_string(line_no) + " is short");
        tel.mode.push_back(line.substr(pos, comma - pos));
        tel.events.push_back(line.substr(comma + 1));
    }
    return tel;
}

Telemetry read_telemetry(const std::filesystem::path& file)
{
    std::ifstream in(file);
    if (!in)
        throw ConfigError("cannot open telemetry '" + file.string() + "'");
    return read_telemetry(in);
}

// --- Run loop ------------------------------------------------------------------------------

namespace {

nav::NavSolution truth_solution(const plant::BodyState& s, const plant::Environment& env, double t)
{
    nav::NavSolution sol;
    sol.t = t;
    sol.x = s.x;
    sol.y = s.y;
    sol.z = s.z;
    const plant::Vec3d e = plant::body_to_earth(s.phi, s.theta, s.psi, {s.u, s.v, s.w});
    sol.vn = e.x + env.current_n;
    sol.ve = e.y + env.current_e;
    sol.vd = e.z;
    sol.phi = s.phi;
    sol.theta = s.theta;
    sol.psi = s.psi;
    sol.cov = nav::Mat6::Zero();
    return sol;
}

} // namespace

RunResult run(const Scenario& sc, const RunHooks& hooks)
{
    const auto wall_start = std::chrono::steady_clock::now();
    sc.validate();

    RunResult result;
    plant::BodyState truth = sc.initial;
    plant::ActuatorSet actual;
    plant::VehicleHealth health;
    health.battery_v = sc.vehicle.health.initial_voltage;
    health.internal_pressure = sc.vehicle.health.nominal_pressure;
    plant::SensorSuite sensors(sc.seed);

    nav::NavigationEngine engine(sc.nav, sc.model);
    std::unique_ptr<gateway::HydromanBridge> nav_bridge;
    std::unique_ptr<gateway::PayloadBridge> payload_bridge;
    helm::PayloadIngest payload(sc.payload, sc.safety);
    if (hooks.bus) {
        nav_bridge = std::make_unique<gateway::HydromanBridge>(*hooks.bus, engine);
        if (sc.payload.enabled)
            payload_bridge = std::make_unique<gateway::PayloadBridge>(*hooks.bus, payload);
    }

    helm::PassiveHelm helm(sc.legs);
    control::ControlEngine ctrl(sc.gains, sc.gain_mode, sc.thrust_per_speed);
    control::ActuatorMapper mapper(sc.mapper);
    helm::ModeState mode;
    result.mode_sequence.emplace_back(helm::to_string(mode.mode));

    if (hooks.csv)
        write_telemetry_header(*hooks.csv);

    nav::NavStatus nav_status = nav::NavStatus::ok;
    const auto ticks = static_cast<long>(std::llround(sc.duration / sc.dt));
    try {
        for (long k = 0; k < ticks; ++k) {
            const double t = static_cast<double>(k) * sc.dt;
            TelemetryRow row;
            row.t = t;
            std::string events;
            auto add_event = [&](const std::string& e) { events += events.empty() ? e : ";" + e; };

            // Sense and navigate.
            const auto meas = sensors.sense(truth, actual, sc.env, t);
            nav::NavSolution sol;
            if (sc.nav_mode == NavMode::truth) {
                sol = truth_solution(truth, sc.env, t);
            }
            else if (nav_bridge) {
                for (const auto& m : meas)
                    for (const auto& msg : gateway::sensor_messages(m))
                        hooks.bus->publish(msg);
                nav_bridge->pump();
                sol = nav_bridge->tick(t, sc.dt);
            }
            else {
                for (const auto& m : meas)
                    engine.push(m);
                sol = engine.tick(t, sc.dt);
            }
            if (sc.nav_mode == NavMode::hydroman && engine.status() != nav_status) {
                nav_status = engine.status();
                add_event("NAV " + nav::to_string(nav_status));
            }

            // Frontseat manager.
            const helm::FsmOutput fsm = helm::fsm_step(mode, t, health, sol, sc.safety);
            if (fsm.event) {
                add_event(*fsm.event);
                result.mode_sequence.emplace_back(helm::to_string(fsm.state.mode));
            }
            mode = fsm.state;

            // Guidance.
            const control::Attitude att = control::imu_offset_correct({sol.phi, sol.theta, sol.psi}, sc.imu_offsets);
            const double heading_deg = wrap_360(rad2deg(att.psi));
            control::Setpoints sp;
            if (payload_bridge)
                payload_bridge->pump();
            const helm::HelmOutput ho = helm.step(t, heading_deg, sol.z);
            if (sc.payload.enabled) {
                const helm::Desired d = payload.desired(t, {heading_deg, 0.0, 0.0});
                sp.heading_deg = d.heading;
                sp.speed = d.speed;
                sp.depth = d.depth;
            }
            else {
                sp.heading_deg = ho.heading;
                sp.speed = ho.speed;
                sp.depth = ho.depth;
                for (const auto& [name, value] : ho.gain_updates) {
                    ctrl.queue_gain_update(name, value);
                    add_event("GAIN " + name + "=" + std::to_string(value));
                }
            }
            if (!fsm.actuators_enabled) {
                sp.speed = 0.0;
                if (mode.mode == helm::VehicleMode::mission_ended || mode.mode == helm::VehicleMode::safe_mode)
                    sp.depth = 0.0;
            }

            // Control and actuation.
            const double horiz_speed = std::hypot(sol.vn, sol.ve);
            const control::ControlCorrectives corr = ctrl.step(sp, {att, sol.z, horiz_speed}, sc.dt);
            const double herr = control::heading_error_deg(sp.heading_deg, heading_deg);
            control::MapperOutput mo = mapper.map(corr, att.phi, herr);
            if (mo.fin.action == control::FinAction::deploy)
                add_event("FIN deploy");
            else if (mo.fin.action == control::FinAction::retract)
                add_event("FIN retract");
            plant::ActuatorSet cmd = mo.command;
            if (!fsm.actuators_enabled)
                cmd = plant::ActuatorSet{};
            actual = plant::actuator_dynamics(cmd, actual, sc.vehicle.actuators, sc.dt);
            health = plant::health_step(health, actual, sc.vehicle.health, sc.env, t, sc.dt);

            row.truth = truth;
            row.nav = sol;
            row.desired = sp;
            row.corr = corr;
            row.act = actual;
            row.mode = std::string(helm::to_string(mode.mode));
            row.events = events;
            if (hooks.csv)
                write_telemetry_row(*hooks.csv, row);
            if (hooks.keep_rows)
                result.rows.push_back(row);

            if (mode.mode == helm::VehicleMode::safe_mode && sc.stop_on_safe_mode) {
                result.end = RunEnd::safe_mode;
                break;
            }
            truth = plant::step(truth, actual, sc.env, sc.vehicle, sc.dt);
        }
    }
    catch (const RunAbort&) {
        if (hooks.csv)
            hooks.csv->flush();
        throw;
    }
    catch (const std::exception& e) {
        if (hooks.csv)
            hooks.csv->flush();
        throw RunAbort(e.what());
    }
    if (hooks.csv)
        hooks.csv->flush();
    result.nav_counters = engine.counters();
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    return result;
}

} // namespace mauv::harness

namespace mauv::harness {

Telemetry to_telemetry(const std::vector<TelemetryRow>& rows)
{
    std::stringstream buf;
    write_telemetry_header(buf);
    for (const auto& r : rows)
        write_telemetry_row(buf, r);
    return read_telemetry(buf);
}

std::string mission_label(const Scenario& s)
{
    if (!s.mission_path.empty())
        return s.mission_path.filename().string();
    const auto text = helm::render_mission(s.legs);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "inline-%016zx", std::hash<std::string>{}(text));
    return buf;
}

} // namespace mauv::harness
