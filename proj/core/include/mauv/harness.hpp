#pragma once

// Scenario runner: configuration loading, the fixed-step closed loop, telemetry
// and the metrics computed from it.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mauv/control.hpp"
#include "mauv/helm.hpp"
#include "mauv/navigation.hpp"
#include "mauv/plant.hpp"

namespace mauv::gateway {
class Bus;
}

namespace mauv::harness {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Abnormal end of a run; telemetry written so far is flushed.
class RunAbort : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// --- Key=value configuration with [section] headers -------------------------------

class Config {
public:
    Config() = default;
    static Config load(const std::filesystem::path& file);
    static Config parse(const std::string& text, const std::string& origin = "<string>");

    // Later values win.
    void merge(const Config& other);
    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const;
    double get_double(const std::string& key, std::optional<double> fallback = std::nullopt) const;
    int get_int(const std::string& key, std::optional<int> fallback = std::nullopt) const;
    bool get_bool(const std::string& key, std::optional<bool> fallback = std::nullopt) const;
    std::string get_string(const std::string& key, std::optional<std::string> fallback = std::nullopt) const;

    // Keys never read by any getter; used to reject typos.
    std::vector<std::string> unused() const;
    const std::map<std::string, std::string>& values() const { return values_; }
    std::string render() const;

private:
    std::map<std::string, std::string> values_;  // "section.key" -> value
    std::map<std::string, std::string> origin_;
    mutable std::set<std::string> used_;
};

// --- Scenario ------------------------------------------------------------------------

enum class NavMode { truth, hydroman };
enum class FinsOption { on, off, auto_ };

struct Scenario {
    std::string name = "scenario";
    plant::VehicleModel vehicle;
    plant::Environment env;
    plant::BodyState initial;
    helm::SafetyEnvelope safety;
    helm::PayloadConfig payload;
    control::ModeGainSet gains;
    std::string gain_mode = "propelled";
    double thrust_per_speed = 40.0;  // thrust percent per m/s of desired speed
    control::MapperConfig mapper;
    control::ImuOffsets imu_offsets;
    nav::NavConfig nav;
    nav::ModelParams model = nav::ModelParams::make();
    NavMode nav_mode = NavMode::truth;
    std::filesystem::path mission_path;
    std::vector<helm::MissionLeg> legs;
    std::uint64_t seed = 1;
    double duration = 120.0;
    double dt = 0.05;
    bool stop_on_safe_mode = true;

    void validate() const;
};

// Loads the base config the scenario names (or `base` when given), overlays
// the scenario file, and rejects unknown keys.
Scenario load_scenario(const std::filesystem::path& scenario_file);
Scenario scenario_from_config(const Config& cfg, const std::filesystem::path& relative_to);
Config scenario_to_config(const Scenario& s);

void apply_fins_option(Scenario& s, FinsOption opt);

// Shipped hydro/control config self-check: bare hull unstable, rudder
// stabilizes, fin station inside the placement window. Throws ConfigError.
void self_check(const plant::VehicleModel& vehicle);

// --- Telemetry -------------------------------------------------------------------------

inline constexpr const char* kTelemetrySchema = "mauv-telemetry/1";
inline constexpr const char* kMetricsSchema = "mauv-metrics/1";

struct TelemetryRow {
    double t = 0.0;
    plant::BodyState truth;
    nav::NavSolution nav;
    control::Setpoints desired;
    control::ControlCorrectives corr;
    plant::ActuatorSet act;
    std::string mode;
    std::string events;
};

std::vector<std::string> telemetry_columns();
void write_telemetry_header(std::ostream& out);
void write_telemetry_row(std::ostream& out, const TelemetryRow& row);

// Parsed telemetry keyed by column name.
struct Telemetry {
    std::vector<std::string> columns;
    std::map<std::string, std::vector<double>> numeric;
    std::vector<std::string> mode;
    std::vector<std::string> events;

    std::size_t rows() const { return mode.size(); }
    const std::vector<double>& col(const std::string& name) const;
};

Telemetry read_telemetry(std::istream& in);
Telemetry read_telemetry(const std::filesystem::path& file);
// Formats rows exactly as the CSV writer does and parses them back, so
// metrics computed in memory match those recomputed from a saved file.
Telemetry to_telemetry(const std::vector<TelemetryRow>& rows);

// --- Run ---------------------------------------------------------------------------------

enum class RunEnd { completed, safe_mode };

struct RunResult {
    RunEnd end = RunEnd::completed;
    std::vector<TelemetryRow> rows;
    std::vector<std::string> mode_sequence;
    nav::NavCounters nav_counters;
    double wall_seconds = 0.0;
};

struct RunHooks {
    gateway::Bus* bus = nullptr;   // when set, sensors and nav travel over the bus
    std::ostream* csv = nullptr;   // streamed telemetry
    bool keep_rows = true;
};

RunResult run(const Scenario& scenario, const RunHooks& hooks = {});

// --- Metrics ----------------------------------------------------------------------------

class DegenerateFit : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CircleFit {
    double radius = 0.0;
    double cx = 0.0, cy = 0.0;
    double rate_deg_s = 0.0;  // mean d(psi)/dt over the segment, signed
    double rms_residual = 0.0;
};

// Algebraic (Kasa) circle fit followed by one Gauss-Newton step on the
// geometric residuals. psi in radians, unwrapped internally.
CircleFit fit_turn(std::span<const double> t, std::span<const double> x, std::span<const double> y,
                   std::span<const double> psi);
CircleFit fit_circle(std::span<const double> x, std::span<const double> y);

struct TurnMetrics {
    int index = 0;
    std::string direction;  // "starboard" or "port"
    double t_start = 0.0, t_end = 0.0;
    double heading_change_deg = 0.0;
    double radius = 0.0;
    double cx = 0.0, cy = 0.0;
    double mean_rate_deg_s = 0.0;
    double peak_rate_deg_s = 0.0;
    double speed = 0.0;         // mean speed over the fitted portion
    double fin_deployed = 0.0;  // fraction of the fitted portion with fins fully out
};

struct LegMetrics {
    int leg = 0;
    double t_start = 0.0, t_end = 0.0;
    double heading_settle_s = -1.0;  // -1 when it never settled within 5 deg
    double heading_overshoot_deg = 0.0;
    double depth_rmse = 0.0;
};

struct SideSummary {
    int turns = 0;
    double radius = 0.0;
    double peak_rate = 0.0;
    double mean_rate = 0.0;
};

struct RunMetrics {
    std::string mission;
    std::vector<TurnMetrics> turns;
    std::vector<LegMetrics> legs;
    SideSummary all, port, starboard;
    double nav_rmse = 0.0;
    double nav_max_error = 0.0;
    double nav_final_error = 0.0;
    std::vector<std::string> mode_sequence;
    double duration = 0.0;
};

struct TurnDetection {
    double min_rate_deg_s = 5.0;       // a turn is a run of |r| above this
    double min_heading_change = 90.0;  // deg over the fitted portion
    double steady_fraction = 0.8;      // fitted portion: |r| >= fraction * peak
};

// Mission label recorded in metrics; runs are comparable only when it matches.
std::string mission_label(const Scenario& s);
RunMetrics compute_metrics(const Telemetry& tel, const std::vector<helm::MissionLeg>& legs = {},
                           const TurnDetection& det = {});
std::string metrics_json(const RunMetrics& m);
RunMetrics metrics_from_json(const std::string& text);

struct ComparisonRow {
    std::string metric;
    double a = 0.0, b = 0.0;
    double delta_pct = 0.0;
};

struct Comparison {
    std::vector<ComparisonRow> rows;
    double turn_rate_improvement_pct = 0.0;  // peak rate, b relative to a
    double radius_reduction_pct = 0.0;
};

// Throws ConfigError when the runs used different missions.
Comparison compare(const RunMetrics& a, const RunMetrics& b);
std::string comparison_json(const Comparison& c);
std::string comparison_table(const Comparison& c, const std::string& label_a, const std::string& label_b);

// --- Calibration ------------------------------------------------------------------------

struct CalibrationTargets {
    double radius_off = 2.5;
    double radius_on = 1.5;
    double peak_rate_lo = 25.0, peak_rate_hi = 35.0;
    double improvement_lo = 35.0, improvement_hi = 50.0;
    // Analytic steady yaw-rate ratio fins-on / fins-off at equal speed and rudder angle.
    double yaw_ratio_lo = 1.35, yaw_ratio_hi = 1.50;
};

struct PairResult {
    RunMetrics off, on;
    double improvement_pct = 0.0;
    double yaw_ratio = 0.0;  // analytic, at the reference speed
};

// Runs the scenario with fins retracted and with morphing fins.
PairResult run_pair(const Scenario& base);

struct CalibrationReport {
    plant::VehicleModel vehicle;
    PairResult achieved;
    double loss = 0.0;
    int evaluations = 0;
    bool feasible = false;
    std::vector<std::string> diagnostics;
};

double calibration_loss(const PairResult& r, const CalibrationTargets& targets);
double analytic_yaw_ratio(const plant::VehicleModel& v);
CalibrationReport calibrate(const Scenario& base, const CalibrationTargets& targets = {}, int max_rounds = 12);

// Identifies the flight dynamic model by RLS on a training run, using
// true water-relative body velocities as the reference.
nav::ModelParams identify_flight_model(const Scenario& base, double duration = 300.0);

} // namespace mauv::harness
