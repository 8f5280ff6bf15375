#pragma once

// Passive helm (time-scheduled mission legs) and the frontseat manager that
// enforces mission timing and the safety envelope.

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mauv/navigation.hpp"
#include "mauv/plant.hpp"

namespace mauv::helm {

class MissionParseError : public std::runtime_error {
public:
    MissionParseError(int line, const std::string& what)
        : std::runtime_error("mission line " + std::to_string(line) + ": " + what), line_(line)
    {
    }
    int line() const noexcept { return line_; }

private:
    int line_;
};

struct MissionLeg {
    double start_time = 0.0;  // s since mission start
    double heading = 0.0;     // deg
    double speed = 0.0;       // m/s
    double depth = 0.0;       // m
    std::map<std::string, double> gain_overrides;

    bool operator==(const MissionLeg&) const = default;
};

// One `ADD_LEG: key=value, ...` directive per line; blank lines and `#`
// comments are ignored. Gain overrides use <loop>_<term> names such as
// heading_kp.
std::vector<MissionLeg> parse_mission(std::string_view text);
std::vector<MissionLeg> load_mission(const std::string& path);
std::string render_mission(const std::vector<MissionLeg>& legs);

bool is_gain_key(std::string_view key);

struct HelmOutput {
    double heading = 0.0;  // deg
    double speed = 0.0;
    double depth = 0.0;
    int active_leg = -1;   // -1 before the first leg
    std::vector<std::pair<std::string, double>> gain_updates;
};

class PassiveHelm {
public:
    explicit PassiveHelm(std::vector<MissionLeg> legs);

    // Before the first leg the output holds: zero speed, current heading,
    // current depth. Gain updates of a leg are emitted once, on activation.
    HelmOutput step(double t, double current_heading_deg, double current_depth);
    const std::vector<MissionLeg>& legs() const { return legs_; }

private:
    std::vector<MissionLeg> legs_;
    int last_emitted_ = -1;
};

// --- Frontseat manager ------------------------------------------------------

struct SafetyEnvelope {
    double max_depth = 20.0;
    double min_voltage = 13.0;
    double max_current = 12.0;
    double max_internal_pressure = 110.0;
    double actuator_engage_delay = 30.0;
    double mission_end_time = 600.0;
    double max_cruise_depth = 10.0;

    void validate() const;
};

enum class VehicleMode { launch_wait, engage_imminent, mission_active, mission_ended, safe_mode };
enum class SafetyReason { none, depth, voltage, current, pressure, operator_request };

std::string_view to_string(VehicleMode m);
std::string_view to_string(SafetyReason r);

struct ModeState {
    VehicleMode mode = VehicleMode::launch_wait;
    SafetyReason reason = SafetyReason::none;
};

struct FsmOutput {
    ModeState state;
    bool actuators_enabled = false;
    int led_pattern = 1;  // 1 launch wait, 2 engage imminent, 3 active, 4 ended/safe
    std::optional<std::string> event;
};

inline constexpr double kEngageWarning = 10.0;  // s before engage

FsmOutput fsm_step(const ModeState& current, double t, const plant::VehicleHealth& health,
                   const nav::NavSolution& nav, const SafetyEnvelope& env);

// Clears SAFE_MODE back to LAUNCH_WAIT; the only way out of it.
ModeState operator_reset();

// --- Payload autonomy -----------------------------------------------------------

struct PayloadCommand {
    double t = 0.0;
    std::optional<double> heading, speed, depth;
};

struct PayloadConfig {
    bool enabled = false;
    bool safety_off = false;
    double timeout = 5.0;  // s without commands before falling back to hold-safe
};

struct Desired {
    double heading = 0.0, speed = 0.0, depth = 0.0;
};

class PayloadIngest {
public:
    PayloadIngest(PayloadConfig cfg, SafetyEnvelope env) : cfg_(cfg), env_(env) {}

    // Malformed commands (non-finite or negative depth/speed) are ignored and
    // counted. Returns false when the command was rejected.
    bool push(const PayloadCommand& cmd);
    // Desired setpoints at time t, or hold-safe values after the watchdog expires.
    Desired desired(double t, const Desired& hold_safe) const;

    int rejected() const { return rejected_; }
    int clamped() const { return clamped_; }

private:
    PayloadConfig cfg_;
    SafetyEnvelope env_;
    std::optional<PayloadCommand> last_;
    Desired current_;
    int rejected_ = 0;
    int clamped_ = 0;
};

} // namespace mauv::helm
