#pragma once

// Platform-independent control engine (PID correctives) and the actuator
// mapper for a four-surface cruciform tail with forward morphing fins.

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mauv/angles.hpp"
#include "mauv/plant.hpp"

namespace mauv::control {

class ControlError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PidGains {
    double kp = 0.0, ki = 0.0, kd = 0.0;
    double i_limit = 0.0;    // clamp on the integral contribution
    double out_limit = 0.0;  // clamp on the output; 0 means unlimited
};

struct PidState {
    double integral = 0.0;
    double prev_error = 0.0;
    bool primed = false;

    void reset() { *this = PidState{}; }
};

double pid_step(const PidGains& gains, double error, double dt, PidState& state);

// Signed error desired - actual wrapped to (-180, 180] degrees.
double heading_error_deg(double desired_deg, double actual_deg);

inline constexpr double kRollCorrectiveLimit = deg2rad(5.0);
inline constexpr double kPitchLimit = deg2rad(25.0);

struct ControlCorrectives {
    double psi_corr = 0.0;    // rad
    double theta_corr = 0.0;  // rad
    double phi_corr = 0.0;    // rad, |.| <= 5 deg
    double speed_corr = 0.0;  // thrust percent
};

struct GainSet {
    PidGains heading, speed, roll, depth, pitch;
};

enum class ControlMode { propelled, glide };

struct ModeGainSet {
    std::map<std::string, GainSet> modes;

    const GainSet& at(const std::string& mode) const;
};

// --- IMU mount offsets -------------------------------------------------------

struct Attitude {
    double phi = 0.0, theta = 0.0, psi = 0.0;  // rad
};

struct ImuOffsets {
    double roll = 0.0, pitch = 0.0, heading = 0.0;  // rad
};

enum class OffsetAxis { roll, pitch, heading };

Attitude imu_offset_correct(const Attitude& raw, const ImuOffsets& offsets);
// Records the current raw reading as the offset of one axis. The vehicle must
// be at rest with that axis at its reference (nose north, level).
ImuOffsets capture_offset(OffsetAxis axis, const Attitude& raw, ImuOffsets offsets);

void save_offsets(const std::filesystem::path& file, const ImuOffsets& offsets);
// Missing file yields zero offsets and sets `missing`.
ImuOffsets load_offsets(const std::filesystem::path& file, bool* missing = nullptr);

// --- Depth cascade -----------------------------------------------------------

struct DepthLoopState {
    PidState depth, pitch;
};

// Outer loop depth error -> desired pitch (clamped to +-25 deg), inner loop
// pitch error -> pitch corrective. In glide mode the outer loop is bypassed
// and `glide_pitch` is the desired pitch.
double depth_cascade(double desired_depth, double depth, double theta, const GainSet& gains, double dt,
                     ControlMode mode, DepthLoopState& state, double glide_pitch = 0.0,
                     double* desired_pitch_out = nullptr);

// --- Control engine -----------------------------------------------------------

struct Setpoints {
    double heading_deg = 0.0;
    double speed = 0.0;      // m/s
    double depth = 0.0;      // m
    double glide_pitch = 0.0;
};

struct EngineInput {
    Attitude attitude;  // corrected
    double depth = 0.0;
    double speed = 0.0;
};

class ControlEngine {
public:
    ControlEngine(ModeGainSet gains, std::string initial_mode, double thrust_per_speed);

    // Switches gain sets; takes effect on the next tick.
    void set_mode(const std::string& mode, ControlMode kind = ControlMode::propelled);
    // Runtime gain update such as "heading_kp"; applied at the start of the
    // next tick and resets the affected integrators.
    void queue_gain_update(const std::string& name, double value);

    ControlCorrectives step(const Setpoints& sp, const EngineInput& in, double dt);

    const GainSet& active_gains() const { return gains_.at(mode_); }
    const std::string& mode() const { return mode_; }
    double desired_pitch() const { return desired_pitch_; }
    void reset();

private:
    void apply_pending();

    ModeGainSet gains_;
    std::string mode_;
    ControlMode kind_ = ControlMode::propelled;
    std::optional<std::pair<std::string, ControlMode>> pending_mode_;
    std::vector<std::pair<std::string, double>> pending_gains_;
    double thrust_per_speed_;
    PidState heading_, speed_, roll_;
    DepthLoopState depth_;
    double desired_pitch_ = 0.0;
};

// Throws ControlError for an unknown gain name.
void apply_gain(GainSet& set, const std::string& name, double value);

// --- Actuator mapping -----------------------------------------------------------

struct SternAngles {
    double uppr_rudd = 0.0, lowr_rudd = 0.0, port_elev = 0.0, stbd_elev = 0.0;
};

// Roll-compensated mixing of heading/pitch/roll correctives onto the four
// stern surfaces, then per-surface clamp to +-15 deg.
SternAngles map_correctives(const ControlCorrectives& corr, double phi);
SternAngles map_correctives_unclamped(const ControlCorrectives& corr, double phi);

enum class FinState { retracted, deployed };
enum class FinAction { deploy, hold, retract };

struct FinCommand {
    FinAction action = FinAction::hold;
    FinState state = FinState::retracted;  // state after applying the action
    double fin_angle = 0.0;                // rad
};

inline constexpr double kFinDeployErrorDeg = 30.0;
inline constexpr double kFinRetractErrorDeg = 5.0;

FinCommand morphing_logic(double heading_error_deg, FinState current, double rudder_cmd);

struct ThrustCommand {
    double thrust_pct = 0.0;
    double normalized = 0.0;
};

ThrustCommand thrust_map(double speed_corr_pct);

// off: always retracted; morphing: heading-error hysteresis; deployed: always out.
enum class FinPolicy { off, morphing, deployed };

struct MapperConfig {
    bool roll_compensation = true;
    FinPolicy fins = FinPolicy::morphing;
};

struct MapperOutput {
    plant::ActuatorSet command;
    FinCommand fin;
};

class ActuatorMapper {
public:
    explicit ActuatorMapper(MapperConfig cfg) : cfg_(cfg) {}

    MapperOutput map(const ControlCorrectives& corr, double phi, double heading_error_deg);
    FinState fin_state() const { return fin_state_; }
    const MapperConfig& config() const { return cfg_; }
    void reset() { fin_state_ = FinState::retracted; }

private:
    MapperConfig cfg_;
    FinState fin_state_ = FinState::retracted;
};

} // namespace mauv::control
