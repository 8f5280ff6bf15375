#include "mauv/helm.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "mauv/angles.hpp"

namespace mauv::helm {

namespace {

std::string_view trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

double parse_number(std::string_view text, int line, std::string_view key)
{
    double v = 0.0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc{} || ptr != end || !std::isfinite(v))
        throw MissionParseError(line, "bad number for '" + std::string(key) + "': '" + std::string(text) + "'");
    return v;
}

std::string format_number(double v)
{
    std::array<char, 64> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

constexpr std::array<std::string_view, 5> kLoops{"heading", "speed", "roll", "depth", "pitch"};
constexpr std::array<std::string_view, 5> kTerms{"kp", "ki", "kd", "ilimit", "outlimit"};

} // namespace

bool is_gain_key(std::string_view key)
{
    const auto us = key.find('_');
    if (us == std::string_view::npos)
        return false;
    const auto loop = key.substr(0, us);
    const auto term = key.substr(us + 1);
    return std::find(kLoops.begin(), kLoops.end(), loop) != kLoops.end() &&
           std::find(kTerms.begin(), kTerms.end(), term) != kTerms.end();
}

std::vector<MissionLeg> parse_mission(std::string_view text)
{
    std::vector<MissionLeg> legs;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;

        if (const auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;

        constexpr std::string_view prefix = "ADD_LEG:";
        if (line.substr(0, prefix.size()) != prefix)
            throw MissionParseError(line_no, "expected 'ADD_LEG:' directive");
        std::string_view body = line.substr(prefix.size());

        MissionLeg leg;
        std::set<std::string, std::less<>> seen;
        while (!body.empty()) {
            const auto comma = body.find(',');
            const std::string_view item = trim(body.substr(0, comma));
            body = comma == std::string_view::npos ? std::string_view{} : body.substr(comma + 1);
            if (item.empty())
                throw MissionParseError(line_no, "empty field");
            const auto eq = item.find('=');
            if (eq == std::string_view::npos)
                throw MissionParseError(line_no, "field without '=': '" + std::string(item) + "'");
            const std::string_view key = trim(item.substr(0, eq));
            const std::string_view val = trim(item.substr(eq + 1));
            if (!seen.emplace(key).second)
                throw MissionParseError(line_no, "duplicate key '" + std::string(key) + "'");
            const double v = parse_number(val, line_no, key);
            if (key == "start_time")
                leg.start_time = v;
            else if (key == "heading")
                leg.heading = v;
            else if (key == "speed")
                leg.speed = v;
            else if (key == "depth")
                leg.depth = v;
            else if (is_gain_key(key))
                leg.gain_overrides.emplace(std::string(key), v);
            else
                throw MissionParseError(line_no, "unknown key '" + std::string(key) + "'");
        }
        for (const char* required : {"start_time", "heading", "speed", "depth"})
            if (!seen.count(std::string_view(required)))
                throw MissionParseError(line_no, std::string("missing '") + required + "'");
        if (leg.start_time < 0.0)
            throw MissionParseError(line_no, "negative start_time");
        if (leg.speed < 0.0 || leg.depth < 0.0)
            throw MissionParseError(line_no, "speed and depth must be non-negative");
        if (!legs.empty() && leg.start_time <= legs.back().start_time)
            throw MissionParseError(line_no, "start_time must be strictly increasing");
        legs.push_back(std::move(leg));
    }
    return legs;
}

std::vector<MissionLeg> load_mission(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open mission file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_mission(ss.str());
}

std::string render_mission(const std::vector<MissionLeg>& legs)
{
    std::string out;
    for (const auto& leg : legs) {
        out += "ADD_LEG: start_time=" + format_number(leg.start_time) + ", heading=" + format_number(leg.heading) +
               ", speed=" + format_number(leg.speed) + ", depth=" + format_number(leg.depth);
        for (const auto& [k, v] : leg.gain_overrides)
            out += ", " + k + "=" + format_number(v);
        out += '\n';
    }
    return out;
}

PassiveHelm::PassiveHelm(std::vector<MissionLeg> legs) : legs_(std::move(legs))
{
    for (std::size_t i = 1; i < legs_.size(); ++i)
        if (legs_[i].start_time <= legs_[i - 1].start_time)
            throw std::invalid_argument("mission legs must have strictly increasing start times");
}

HelmOutput PassiveHelm::step(double t, double current_heading_deg, double current_depth)
{
    HelmOutput out;
    int active = -1;
    for (std::size_t i = 0; i < legs_.size() && legs_[i].start_time <= t; ++i)
        active = static_cast<int>(i);
    out.active_leg = active;
    if (active < 0) {
        out.heading = current_heading_deg;
        out.speed = 0.0;
        out.depth = current_depth;
        return out;
    }
    const MissionLeg& leg = legs_[active];
    out.heading = leg.heading;
    out.speed = leg.speed;
    out.depth = leg.depth;
    // Legs skipped within one step still deliver their gain changes in order.
    for (int i = last_emitted_ + 1; i <= active; ++i)
        for (const auto& kv : legs_[i].gain_overrides)
            out.gain_updates.emplace_back(kv);
    last_emitted_ = std::max(last_emitted_, active);
    return out;
}

// --- Frontseat manager --------------------------------------------------------------

void SafetyEnvelope::validate() const
{
    for (double v : {max_depth, min_voltage, max_current, max_internal_pressure, mission_end_time, max_cruise_depth})
        if (!(v > 0.0))
            throw std::invalid_argument("safety envelope limits must be positive");
    if (actuator_engage_delay < 0.0)
        throw std::invalid_argument("actuator engage delay must be non-negative");
    if (max_cruise_depth > max_depth)
        throw std::invalid_argument("max_cruise_depth exceeds max_depth");
    if (mission_end_time <= actuator_engage_delay)
        throw std::invalid_argument("mission must end after the actuators engage");
}

std::string_view to_string(VehicleMode m)
{
    switch (m) {
    case VehicleMode::launch_wait: return "LAUNCH_WAIT";
    case VehicleMode::engage_imminent: return "ENGAGE_IMMINENT";
    case VehicleMode::mission_active: return "MISSION_ACTIVE";
    case VehicleMode::mission_ended: return "MISSION_ENDED";
    case VehicleMode::safe_mode: return "SAFE_MODE";
    }
    return "UNKNOWN";
}

std::string_view to_string(SafetyReason r)
{
    switch (r) {
    case SafetyReason::none: return "none";
    case SafetyReason::depth: return "depth";
    case SafetyReason::voltage: return "voltage";
    case SafetyReason::current: return "current";
    case SafetyReason::pressure: return "pressure";
    case SafetyReason::operator_request: return "operator";
    }
    return "unknown";
}

namespace {

int led_for(VehicleMode m)
{
    switch (m) {
    case VehicleMode::launch_wait: return 1;
    case VehicleMode::engage_imminent: return 2;
    case VehicleMode::mission_active: return 3;
    default: return 4;
    }
}

SafetyReason envelope_violation(VehicleMode mode, const plant::VehicleHealth& health, const nav::NavSolution& nav,
                                const SafetyEnvelope& env)
{
    if (nav.z > env.max_depth || (mode == VehicleMode::mission_active && nav.z > env.max_cruise_depth))
        return SafetyReason::depth;
    if (health.battery_v < env.min_voltage)
        return SafetyReason::voltage;
    if (health.motor_current > env.max_current)
        return SafetyReason::current;
    if (health.internal_pressure > env.max_internal_pressure)
        return SafetyReason::pressure;
    return SafetyReason::none;
}

} // namespace

FsmOutput fsm_step(const ModeState& current, double t, const plant::VehicleHealth& health,
                   const nav::NavSolution& nav, const SafetyEnvelope& env)
{
    FsmOutput out;
    out.state = current;

    if (current.mode != VehicleMode::safe_mode) {
        VehicleMode next = current.mode;
        if (current.mode != VehicleMode::mission_ended) {
            if (t >= env.mission_end_time)
                next = VehicleMode::mission_ended;
            else if (t >= env.actuator_engage_delay)
                next = VehicleMode::mission_active;
            else if (t >= env.actuator_engage_delay - kEngageWarning)
                next = VehicleMode::engage_imminent;
            else
                next = VehicleMode::launch_wait;
        }
        // The timeline only moves forward.
        if (static_cast<int>(next) < static_cast<int>(current.mode))
            next = current.mode;

        const SafetyReason why = envelope_violation(next, health, nav, env);
        if (why != SafetyReason::none)
            out.state = {VehicleMode::safe_mode, why};
        else
            out.state = {next, SafetyReason::none};
    }

    out.actuators_enabled = out.state.mode == VehicleMode::mission_active;
    out.led_pattern = led_for(out.state.mode);
    if (out.state.mode != current.mode) {
        std::string ev = "MODE " + std::string(to_string(current.mode)) + "->" + std::string(to_string(out.state.mode));
        if (out.state.mode == VehicleMode::safe_mode)
            ev += " reason=" + std::string(to_string(out.state.reason));
        ev += " LED " + std::to_string(out.led_pattern);
        out.event = std::move(ev);
    }
    return out;
}

ModeState operator_reset()
{
    return {VehicleMode::launch_wait, SafetyReason::none};
}

// --- Payload --------------------------------------------------------------------------

bool PayloadIngest::push(const PayloadCommand& cmd)
{
    auto bad = [](const std::optional<double>& v, bool non_negative) {
        return v && (!std::isfinite(*v) || (non_negative && *v < 0.0));
    };
    if (!cfg_.enabled || !std::isfinite(cmd.t) || bad(cmd.heading, false) || bad(cmd.speed, true) ||
        bad(cmd.depth, true) || (!cmd.heading && !cmd.speed && !cmd.depth)) {
        ++rejected_;
        return false;
    }
    if (cmd.heading)
        current_.heading = wrap_360(*cmd.heading);
    if (cmd.speed)
        current_.speed = *cmd.speed;
    if (cmd.depth) {
        current_.depth = *cmd.depth;
        if (!cfg_.safety_off && current_.depth > env_.max_cruise_depth) {
            current_.depth = env_.max_cruise_depth;
            ++clamped_;
        }
    }
    last_ = cmd;
    return true;
}

Desired PayloadIngest::desired(double t, const Desired& hold_safe) const
{
    if (!cfg_.enabled || !last_ || t - last_->t > cfg_.timeout)
        return hold_safe;
    return current_;
}

} // namespace mauv::helm
