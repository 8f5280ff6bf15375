#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "mauv/harness.hpp"

namespace mauv::harness {

namespace pt = boost::property_tree;

// --- Config -------------------------------------------------------------------------------

Config Config::parse(const std::string& text, const std::string& origin)
{
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::ini_parser::read_ini(in, tree);
    }
    catch (const pt::ini_parser_error& e) {
        throw ConfigError(origin + ": line " + std::to_string(e.line()) + ": " + e.message());
    }
    Config cfg;
    for (const auto& [section, body] : tree) {
        if (body.empty()) {
            // Top-level key outside any section.
            cfg.values_[section] = body.data();
            cfg.origin_[section] = origin;
            continue;
        }
        for (const auto& [key, value] : body) {
            const std::string full = section + "." + key;
            cfg.values_[full] = value.data();
            cfg.origin_[full] = origin;
        }
    }
    return cfg;
}

Config Config::load(const std::filesystem::path& file)
{
    std::ifstream in(file);
    if (!in)
        throw ConfigError("cannot open config file '" + file.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), file.string());
}

void Config::merge(const Config& other)
{
    for (const auto& [k, v] : other.values_) {
        values_[k] = v;
        origin_[k] = other.origin_.count(k) ? other.origin_.at(k) : "<merged>";
    }
}

void Config::set(const std::string& key, const std::string& value)
{
    values_[key] = value;
    origin_[key] = "<set>";
}

bool Config::has(const std::string& key) const
{
    return values_.count(key) > 0;
}

std::string Config::get_string(const std::string& key, std::optional<std::string> fallback) const
{
    const auto it = values_.find(key);
    if (it == values_.end()) {
        if (!fallback)
            throw ConfigError("missing config key '" + key + "'");
        return *fallback;
    }
    used_.insert(key);
    return it->second;
}

double Config::get_double(const std::string& key, std::optional<double> fallback) const
{
    if (!has(key)) {
        if (!fallback)
            throw ConfigError("missing config key '" + key + "'");
        return *fallback;
    }
    const std::string s = get_string(key);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
        throw ConfigError("config key '" + key + "' is not a number: '" + s + "'");
    return v;
}

int Config::get_int(const std::string& key, std::optional<int> fallback) const
{
    if (!has(key)) {
        if (!fallback)
            throw ConfigError("missing config key '" + key + "'");
        return *fallback;
    }
    const std::string s = get_string(key);
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw ConfigError("config key '" + key + "' is not an integer: '" + s + "'");
    return v;
}

bool Config::get_bool(const std::string& key, std::optional<bool> fallback) const
{
    if (!has(key)) {
        if (!fallback)
            throw ConfigError("missing config key '" + key + "'");
        return *fallback;
    }
    std::string s = get_string(key);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "true" || s == "1" || s == "yes" || s == "on")
        return true;
    if (s == "false" || s == "0" || s == "no" || s == "off")
        return false;
    throw ConfigError("config key '" + key + "' is not a boolean: '" + s + "'");
}

std::vector<std::string> Config::unused() const
{
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
        if (!used_.count(k))
            out.push_back(k + " (" + origin_.at(k) + ")");
    return out;
}

std::string Config::render() const
{
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
    for (const auto& [k, v] : values_) {
        const auto dot = k.find('.');
        if (dot == std::string::npos)
            sections[""].emplace_back(k, v);
        else
            sections[k.substr(0, dot)].emplace_back(k.substr(dot + 1), v);
    }
    std::string out;
    for (const auto& [name, entries] : sections) {
        if (!name.empty())
            out += "[" + name + "]\n";
        for (const auto& [k, v] : entries)
            out += k + " = " + v + "\n";
        out += "\n";
    }
    return out;
}

// --- Scenario ------------------------------------------------------------------------------

namespace {

std::string fmt(double v)
{
    std::array<char, 64> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

std::vector<double> parse_list(const std::string& text, const std::string& key)
{
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (item.empty() || ec != std::errc{} || ptr != item.data() + item.size())
            throw ConfigError("config key '" + key + "' has a bad list entry '" + item + "'");
        out.push_back(v);
    }
    return out;
}

std::string render_list(const Eigen::VectorXd& v)
{
    std::string out;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        out += (i ? ", " : "") + fmt(v[i]);
    return out;
}

std::string render_mask(const std::vector<bool>& m)
{
    std::string out;
    for (std::size_t i = 0; i < m.size(); ++i)
        out += (i ? ", " : "") + std::string(m[i] ? "1" : "0");
    return out;
}

void read_channel(const Config& c, const std::string& name, nav::RlsChannel& ch)
{
    const std::string key = "model." + name;
    if (c.has(key)) {
        const auto v = parse_list(c.get_string(key), key);
        if (static_cast<Eigen::Index>(v.size()) != ch.theta.size())
            throw ConfigError("'" + key + "' needs " + std::to_string(ch.theta.size()) + " values");
        for (std::size_t i = 0; i < v.size(); ++i)
            ch.theta[static_cast<Eigen::Index>(i)] = v[i];
    }
    const std::string mkey = "model." + name + "_active";
    if (c.has(mkey)) {
        const auto v = parse_list(c.get_string(mkey), mkey);
        if (v.size() != ch.active.size())
            throw ConfigError("'" + mkey + "' needs " + std::to_string(ch.active.size()) + " flags");
        for (std::size_t i = 0; i < v.size(); ++i)
            ch.active[i] = v[i] != 0.0;
    }
}

control::GainSet read_gains(const Config& c, const std::string& section, const control::GainSet& defaults)
{
    control::GainSet g = defaults;
    for (const char* loop : {"heading", "speed", "roll", "depth", "pitch"})
        for (const char* term : {"kp", "ki", "kd", "ilimit", "outlimit"}) {
            const std::string name = std::string(loop) + "_" + term;
            const std::string key = section + "." + name;
            if (c.has(key))
                control::apply_gain(g, name, c.get_double(key));
        }
    return g;
}

void write_gains(Config& c, const std::string& section, const control::GainSet& g)
{
    auto put = [&](const char* loop, const control::PidGains& p) {
        c.set(section + "." + loop + "_kp", fmt(p.kp));
        c.set(section + "." + loop + "_ki", fmt(p.ki));
        c.set(section + "." + loop + "_kd", fmt(p.kd));
        c.set(section + "." + loop + "_ilimit", fmt(p.i_limit));
        c.set(section + "." + loop + "_outlimit", fmt(p.out_limit));
    };
    put("heading", g.heading);
    put("speed", g.speed);
    put("roll", g.roll);
    put("depth", g.depth);
    put("pitch", g.pitch);
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& relative_to)
{
    if (p.empty() || p.is_absolute())
        return p;
    return (relative_to / p).lexically_normal();
}

} // namespace

void Scenario::validate() const
{
    vehicle.validate();
    safety.validate();
    if (!(duration >= 0.0))
        throw ConfigError("scenario duration must be non-negative");
    if (!(dt > 0.0 && dt <= plant::kMaxStep))
        throw ConfigError("scenario time step must be in (0, 0.1] s");
    if (env.lbl_latency < 0.0)
        throw ConfigError("lbl_latency must be non-negative");
    for (double s : {env.noise.depth, env.noise.attitude, env.noise.rate, env.noise.gps, env.noise.lbl, env.noise.dvl})
        if (s < 0.0)
            throw ConfigError("sensor noise sigmas must be non-negative");
    if (thrust_per_speed < 0.0)
        throw ConfigError("thrust_per_speed must be non-negative");
}

Scenario scenario_from_config(const Config& c, const std::filesystem::path& relative_to)
{
    Scenario s;
    s.name = c.get_string("scenario.name", s.name);
    s.duration = c.get_double("scenario.duration", s.duration);
    s.dt = c.get_double("scenario.dt", s.dt);
    s.seed = static_cast<std::uint64_t>(c.get_int("scenario.seed", 1));
    s.stop_on_safe_mode = c.get_bool("scenario.stop_on_safe_mode", true);
    const std::string nav_mode = c.get_string("scenario.nav", "truth");
    if (nav_mode == "truth")
        s.nav_mode = NavMode::truth;
    else if (nav_mode == "hydroman")
        s.nav_mode = NavMode::hydroman;
    else
        throw ConfigError("scenario.nav must be 'truth' or 'hydroman'");

    auto& h = s.vehicle.bare;
    h.mass = c.get_double("hull.mass");
    h.izz = c.get_double("hull.izz");
    h.x_g = c.get_double("hull.x_g", 0.0);
    h.y_vdot = c.get_double("hull.y_vdot");
    h.y_rdot = c.get_double("hull.y_rdot", 0.0);
    h.n_vdot = c.get_double("hull.n_vdot", 0.0);
    h.n_rdot = c.get_double("hull.n_rdot");
    h.y_v = c.get_double("hull.y_v");
    h.y_r = c.get_double("hull.y_r");
    h.n_v = c.get_double("hull.n_v");
    h.n_r = c.get_double("hull.n_r");
    h.rho = c.get_double("hull.rho", 1000.0);
    h.ref_speed = c.get_double("hull.ref_speed", 1.5);

    try {
        s.vehicle.rudder = hydro::make_rudder(c.get_double("rudder.lift_per_angle"), c.get_double("rudder.station"),
                                              c.get_double("rudder.area", 0.0), c.get_double("rudder.cl_alpha", 0.0));
        s.vehicle.fin = hydro::make_fin(c.get_double("fin.lift_per_angle"), c.get_double("fin.station"),
                                        c.get_double("fin.area", 0.0), c.get_double("fin.cl_alpha", 0.0));
    }
    catch (const hydro::HydroError& e) {
        throw ConfigError(std::string("appendage config: ") + e.what());
    }

    auto& sm = s.vehicle.surge;
    sm.added_mass = c.get_double("surge.added_mass", sm.added_mass);
    sm.thrust_gain = c.get_double("surge.thrust_gain", sm.thrust_gain);
    sm.linear_drag = c.get_double("surge.linear_drag", sm.linear_drag);
    sm.induced_drag = c.get_double("surge.induced_drag", sm.induced_drag);
    sm.fin_drag = c.get_double("surge.fin_drag", sm.fin_drag);

    auto& pm = s.vehicle.pitch;
    pm.gain = c.get_double("pitch.gain", pm.gain);
    pm.time_constant = c.get_double("pitch.time_constant", pm.time_constant);
    pm.buoyancy_rise = c.get_double("pitch.buoyancy_rise", pm.buoyancy_rise);

    auto& rm = s.vehicle.roll;
    rm.time_constant = c.get_double("roll.time_constant", rm.time_constant);
    rm.surface_gain = c.get_double("roll.surface_gain", rm.surface_gain);
    rm.fixed_fin_counter = deg2rad(c.get_double("roll.fixed_fin_counter_deg", rad2deg(rm.fixed_fin_counter)));
    rm.yaw_coupling = c.get_double("roll.yaw_coupling", rm.yaw_coupling);

    auto& am = s.vehicle.actuators;
    am.slew_rate = deg2rad(c.get_double("actuators.slew_rate_deg", rad2deg(am.slew_rate)));
    am.deploy_time = c.get_double("actuators.deploy_time", am.deploy_time);
    am.rpm_per_pct = c.get_double("actuators.rpm_per_pct", am.rpm_per_pct);

    auto& hm = s.vehicle.health;
    hm.current_per_pct = c.get_double("health.current_per_pct", hm.current_per_pct);
    hm.drain_per_amp_s = c.get_double("health.drain_per_amp_s", hm.drain_per_amp_s);
    hm.initial_voltage = c.get_double("health.initial_voltage", hm.initial_voltage);
    hm.nominal_pressure = c.get_double("health.nominal_pressure", hm.nominal_pressure);

    auto& e = s.env;
    e.current_n = c.get_double("environment.current_n", 0.0);
    e.current_e = c.get_double("environment.current_e", 0.0);
    e.water_density = c.get_double("environment.water_density", 1000.0);
    e.prop_torque_roll = deg2rad(c.get_double("environment.prop_torque_roll_deg", 0.0));
    e.lbl_latency = c.get_double("environment.lbl_latency", 0.0);
    e.lbl_interval = c.get_double("environment.lbl_interval", 0.0);
    e.dvl_interval = c.get_double("environment.dvl_interval", 0.0);
    e.gps_surface_depth = c.get_double("environment.gps_surface_depth", e.gps_surface_depth);
    if (c.has("environment.roll_override_deg"))
        e.roll_override = deg2rad(c.get_double("environment.roll_override_deg"));
    e.leak_rate = c.get_double("environment.leak_rate", 0.0);
    e.leak_start = c.get_double("environment.leak_start", 0.0);
    e.noise.depth = c.get_double("noise.depth", 0.0);
    e.noise.attitude = deg2rad(c.get_double("noise.attitude_deg", 0.0));
    e.noise.rate = deg2rad(c.get_double("noise.rate_deg", 0.0));
    e.noise.gps = c.get_double("noise.gps", 0.0);
    e.noise.lbl = c.get_double("noise.lbl", 0.0);
    e.noise.dvl = c.get_double("noise.dvl", 0.0);

    s.initial.x = c.get_double("initial.x", 0.0);
    s.initial.y = c.get_double("initial.y", 0.0);
    s.initial.z = c.get_double("initial.z", 0.0);
    s.initial.psi = wrap_pi(deg2rad(c.get_double("initial.heading_deg", 0.0)));
    s.initial.u = c.get_double("initial.speed", 0.0);

    auto& sf = s.safety;
    sf.max_depth = c.get_double("safety.max_depth", sf.max_depth);
    sf.min_voltage = c.get_double("safety.min_voltage", sf.min_voltage);
    sf.max_current = c.get_double("safety.max_current", sf.max_current);
    sf.max_internal_pressure = c.get_double("safety.max_internal_pressure", sf.max_internal_pressure);
    sf.actuator_engage_delay = c.get_double("safety.actuator_engage_delay", sf.actuator_engage_delay);
    sf.mission_end_time = c.get_double("safety.mission_end_time", sf.mission_end_time);
    sf.max_cruise_depth = c.get_double("safety.max_cruise_depth", sf.max_cruise_depth);

    s.payload.enabled = c.get_bool("payload.enabled", false);
    s.payload.safety_off = c.get_bool("payload.safety_off", false);
    s.payload.timeout = c.get_double("payload.timeout", s.payload.timeout);

    s.gain_mode = c.get_string("control.mode", "propelled");
    s.thrust_per_speed = c.get_double("control.thrust_per_speed", s.thrust_per_speed);
    s.mapper.roll_compensation = c.get_bool("control.roll_compensation", true);
    const std::string fins = c.get_string("control.fins", "morphing");
    if (fins == "morphing")
        s.mapper.fins = control::FinPolicy::morphing;
    else if (fins == "off")
        s.mapper.fins = control::FinPolicy::off;
    else if (fins == "deployed")
        s.mapper.fins = control::FinPolicy::deployed;
    else
        throw ConfigError("control.fins must be morphing, off or deployed");
    s.imu_offsets.roll = deg2rad(c.get_double("control.imu_roll_offset_deg", 0.0));
    s.imu_offsets.pitch = deg2rad(c.get_double("control.imu_pitch_offset_deg", 0.0));
    s.imu_offsets.heading = deg2rad(c.get_double("control.imu_heading_offset_deg", 0.0));

    // Gain sets: [gains.<mode>] sections; every mode starts from [gains].
    const control::GainSet base = read_gains(c, "gains", control::GainSet{});
    s.gains.modes["propelled"] = base;
    std::set<std::string> modes;
    for (const auto& [k, v] : c.values())
        if (k.rfind("gains.", 0) == 0) {
            const auto rest = k.substr(6);
            const auto dot = rest.find('.');
            if (dot != std::string::npos)
                modes.insert(rest.substr(0, dot));
        }
    for (const auto& m : modes)
        s.gains.modes[m] = read_gains(c, "gains." + m, base);
    if (!s.gains.modes.count(s.gain_mode))
        throw ConfigError("control.mode names an undefined gain set '" + s.gain_mode + "'");

    auto& nc = s.nav;
    nc.fusion.pos_sigma = c.get_double("nav.pos_sigma", nc.fusion.pos_sigma);
    nc.fusion.depth_sigma = c.get_double("nav.depth_sigma", nc.fusion.depth_sigma);
    nc.fusion.model_sigma = c.get_double("nav.model_sigma", nc.fusion.model_sigma);
    nc.fusion.dvl_sigma = c.get_double("nav.dvl_sigma", nc.fusion.dvl_sigma);
    nc.fusion.bias_time = c.get_double("nav.bias_time", nc.fusion.bias_time);
    nc.fusion.bias_sigma = c.get_double("nav.bias_sigma", nc.fusion.bias_sigma);
    nc.fusion.gate_sigma = c.get_double("nav.gate_sigma", nc.fusion.gate_sigma);
    nc.fusion.dvl_in_suite = e.dvl_interval > 0.0;
    nc.calibrator.smoothing_time = c.get_double("nav.smoothing_time", nc.calibrator.smoothing_time);
    nc.calibrator.timeout = c.get_double("nav.calibration_timeout", nc.calibrator.timeout);
    nc.calibrator.initial_sigma = nc.fusion.model_sigma;
    nc.manager.reinit_sigma = c.get_double("nav.reinit_sigma", nc.manager.reinit_sigma);
    nc.manager.mismatch_limit = c.get_int("nav.mismatch_limit", nc.manager.mismatch_limit);
    nc.manager.watchdog = c.get_double("nav.watchdog", nc.manager.watchdog);
    nc.dvl.mismatch_threshold = c.get_double("nav.dvl_mismatch_threshold", nc.dvl.mismatch_threshold);
    const std::string cal = c.get_string("nav.calibration", "position");
    if (cal == "position")
        nc.calibration = nav::CalibrationSource::position;
    else if (cal == "bias")
        nc.calibration = nav::CalibrationSource::bias;
    else if (cal == "off")
        nc.calibration = nav::CalibrationSource::off;
    else
        throw ConfigError("nav.calibration must be position, bias or off");
    nc.online_identification = c.get_bool("nav.online_identification", false);
    nc.depth_max_rate = c.get_double("nav.depth_max_rate", nc.depth_max_rate);
    nc.depth_window = static_cast<std::size_t>(c.get_int("nav.depth_window", static_cast<int>(nc.depth_window)));
    nc.track_span = c.get_double("nav.track_span", nc.track_span);
    nc.track_decimation = c.get_double("nav.track_decimation", nc.track_decimation);
    nc.start_x = s.initial.x;
    nc.start_y = s.initial.y;

    try {
        s.model = nav::ModelParams::make(c.get_double("model.lambda", 0.999), c.get_double("model.initial_cov", 1e6));
    }
    catch (const std::invalid_argument& ex) {
        throw ConfigError(std::string("model config: ") + ex.what());
    }
    read_channel(c, "surge", s.model.surge);
    read_channel(c, "sway", s.model.sway);
    read_channel(c, "heave", s.model.heave);

    const std::string mission = c.get_string("scenario.mission", "");
    if (!mission.empty()) {
        s.mission_path = resolve(mission, relative_to);
        try {
            s.legs = helm::load_mission(s.mission_path.string());
        }
        catch (const helm::MissionParseError& ex) {
            throw ConfigError(s.mission_path.string() + ": " + ex.what());
        }
        catch (const std::runtime_error& ex) {
            throw ConfigError(ex.what());
        }
    }

    try {
        s.validate();
    }
    catch (const ConfigError&) {
        throw;
    }
    catch (const std::exception& ex) {
        throw ConfigError(ex.what());
    }
    return s;
}

Scenario load_scenario(const std::filesystem::path& scenario_file)
{
    const Config overlay = Config::load(scenario_file);
    const auto dir = scenario_file.parent_path();
    Config merged;
    if (overlay.has("scenario.base")) {
        const auto base_path = resolve(overlay.get_string("scenario.base"), dir);
        merged = Config::load(base_path);
    }
    merged.merge(overlay);
    if (merged.has("scenario.base"))
        merged.get_string("scenario.base");
    Scenario s = scenario_from_config(merged, dir);
    const auto unused = merged.unused();
    if (!unused.empty()) {
        std::string msg = "unknown config keys:";
        for (const auto& k : unused)
            msg += " " + k;
        throw ConfigError(msg);
    }
    return s;
}

Config scenario_to_config(const Scenario& s)
{
    Config c;
    const auto& h = s.vehicle.bare;
    c.set("hull.mass", fmt(h.mass));
    c.set("hull.izz", fmt(h.izz));
    c.set("hull.x_g", fmt(h.x_g));
    c.set("hull.y_vdot", fmt(h.y_vdot));
    c.set("hull.y_rdot", fmt(h.y_rdot));
    c.set("hull.n_vdot", fmt(h.n_vdot));
    c.set("hull.n_rdot", fmt(h.n_rdot));
    c.set("hull.y_v", fmt(h.y_v));
    c.set("hull.y_r", fmt(h.y_r));
    c.set("hull.n_v", fmt(h.n_v));
    c.set("hull.n_r", fmt(h.n_r));
    c.set("hull.rho", fmt(h.rho));
    c.set("hull.ref_speed", fmt(h.ref_speed));
    c.set("rudder.lift_per_angle", fmt(s.vehicle.rudder.lift_per_angle));
    c.set("rudder.station", fmt(s.vehicle.rudder.station));
    c.set("fin.lift_per_angle", fmt(s.vehicle.fin.lift_per_angle));
    c.set("fin.station", fmt(s.vehicle.fin.station));
    const auto& sm = s.vehicle.surge;
    c.set("surge.added_mass", fmt(sm.added_mass));
    c.set("surge.thrust_gain", fmt(sm.thrust_gain));
    c.set("surge.linear_drag", fmt(sm.linear_drag));
    c.set("surge.induced_drag", fmt(sm.induced_drag));
    c.set("surge.fin_drag", fmt(sm.fin_drag));
    c.set("pitch.gain", fmt(s.vehicle.pitch.gain));
    c.set("pitch.time_constant", fmt(s.vehicle.pitch.time_constant));
    c.set("pitch.buoyancy_rise", fmt(s.vehicle.pitch.buoyancy_rise));
    c.set("roll.time_constant", fmt(s.vehicle.roll.time_constant));
    c.set("roll.surface_gain", fmt(s.vehicle.roll.surface_gain));
    c.set("roll.fixed_fin_counter_deg", fmt(rad2deg(s.vehicle.roll.fixed_fin_counter)));
    c.set("roll.yaw_coupling", fmt(s.vehicle.roll.yaw_coupling));
    c.set("actuators.slew_rate_deg", fmt(rad2deg(s.vehicle.actuators.slew_rate)));
    c.set("actuators.deploy_time", fmt(s.vehicle.actuators.deploy_time));
    c.set("actuators.rpm_per_pct", fmt(s.vehicle.actuators.rpm_per_pct));
    c.set("environment.prop_torque_roll_deg", fmt(rad2deg(s.env.prop_torque_roll)));
    c.set("control.thrust_per_speed", fmt(s.thrust_per_speed));
    write_gains(c, "gains", s.gains.at(s.gain_mode));
    c.set("model.lambda", fmt(s.model.lambda));
    c.set("model.initial_cov", fmt(s.model.initial_cov));
    c.set("model.surge", render_list(s.model.surge.theta));
    c.set("model.sway", render_list(s.model.sway.theta));
    c.set("model.heave", render_list(s.model.heave.theta));
    c.set("model.surge_active", render_mask(s.model.surge.active));
    c.set("model.sway_active", render_mask(s.model.sway.active));
    c.set("model.heave_active", render_mask(s.model.heave.active));
    return c;
}

void apply_fins_option(Scenario& s, FinsOption opt)
{
    switch (opt) {
    case FinsOption::on: s.mapper.fins = control::FinPolicy::morphing; break;
    case FinsOption::off: s.mapper.fins = control::FinPolicy::off; break;
    case FinsOption::auto_: break;
    }
}

void self_check(const plant::VehicleModel& v)
{
    const double u = v.bare.ref_speed;
    try {
        const double cb = hydro::stability_index(v.bare, u);
        if (cb >= 0.0)
            throw ConfigError("self-check: bare hull must be directionally unstable (C_b < 0)");
        const double cr = hydro::stability_index(hydro::with_rudder(v.bare, v.rudder, u), u);
        if (cr <= 0.0)
            throw ConfigError("self-check: rudder does not stabilize the hull (C <= 0)");
        if (!hydro::fin_placement_valid(v.fin.station, v.bare, u))
            throw ConfigError("self-check: fin station outside the placement window x_r < eta < x_AC");
    }
    catch (const hydro::HydroError& e) {
        throw ConfigError(std::string("self-check: ") + e.what());
    }
}

} // namespace mauv::harness
