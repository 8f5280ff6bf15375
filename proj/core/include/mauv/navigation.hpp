#pragma once

// Model-aided navigation: sensor preprocessors, a flight dynamic model with
// online recursive least squares identification, environment calibration,
// layered bias/main-state Kalman fusion and a navigation manager.

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mauv/measurement.hpp"

namespace mauv::nav {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// --- Depth preprocessing ---------------------------------------------------------

class DepthFilter {
public:
    explicit DepthFilter(double max_rate = 5.0, std::size_t window = 20);

    // Returns the filtered depth after this sample; rejected samples leave the
    // output unchanged.
    std::optional<double> push(const DepthMeas& m);

    std::optional<double> value() const;
    int rejected() const { return rejected_; }

private:
    double max_rate_;
    std::size_t window_;
    std::deque<double> samples_;
    double sum_ = 0.0;
    std::optional<DepthMeas> last_accepted_;
    int rejected_ = 0;
};

// --- Flight dynamic model -----------------------------------------------------------

struct ModelRegressors {
    double rpm = 0.0;
    double p = 0.0, q = 0.0, r = 0.0;
    double z = 0.0;
    double u_prev = 0.0, v_prev = 0.0, w_prev = 0.0;
};

inline constexpr int kSurgeTerms = 10;
inline constexpr int kSwayTerms = 8;
inline constexpr int kHeaveTerms = 8;

struct RlsChannel {
    Eigen::VectorXd theta;
    Eigen::MatrixXd cov;
    std::vector<bool> active;
};

struct ModelParams {
    RlsChannel surge;  // alpha_1..alpha_10
    RlsChannel sway;   // beta_1..beta_8
    RlsChannel heave;  // gamma_1..gamma_8
    double lambda = 0.999;
    double initial_cov = 1e6;
    double trace_limit = 1e12;

    // All regressor terms active, zero weights, cov = initial_cov * I.
    static ModelParams make(double lambda = 0.999, double initial_cov = 1e6);
};

Eigen::VectorXd surge_regressors(const ModelRegressors& x);
Eigen::VectorXd sway_regressors(const ModelRegressors& x);
Eigen::VectorXd heave_regressors(const ModelRegressors& x);

// Body-frame water-relative (u, v, w).
Vec3 model_velocity(const ModelRegressors& x, const ModelParams& params);

struct RlsEvents {
    int covariance_resets = 0;
};

ModelParams rls_update(const ModelParams& params, const ModelRegressors& x, const Vec3& measured,
                       RlsEvents* events = nullptr);

// --- Environment calibration --------------------------------------------------------

struct CalibratorConfig {
    double smoothing_time = 10.0;  // s
    double timeout = 60.0;         // s without a reference before estimates freeze
    double initial_sigma = 0.2;    // m/s
    double sigma_floor = 0.02;     // m/s
};

// Earth-frame water current and model uncertainty from the residual between a
// trusted reference velocity and the rotated model velocity.
class ModelCalibrator {
public:
    explicit ModelCalibrator(CalibratorConfig cfg = {});

    // model_vel_earth: model (water-relative) velocity rotated to the earth frame.
    void calibrate(const Vec3& model_vel_earth, const Vec3& reference_vel_earth, double t);
    // Folds an externally estimated model bias (earth frame) into the current estimate.
    void absorb_bias(const Vec3& bias, double fraction);

    const Vec3& current_est() const { return current_; }
    double model_sigma() const { return sigma_; }
    bool frozen(double t) const;
    // nu_adaptM = nu_model + nu_water
    Vec3 adapt(const Vec3& model_vel_earth) const { return model_vel_earth + current_; }

private:
    CalibratorConfig cfg_;
    Vec3 current_ = Vec3::Zero();
    double sigma_;
    double var_;
    std::optional<double> last_t_;
};

// Body-to-earth rotation from Euler angles (roll, pitch, yaw).
Eigen::Matrix3d body_to_earth(double phi, double theta, double psi);

// --- DVL preprocessing --------------------------------------------------------------

struct DvlConfig {
    Eigen::Matrix3d mount = Eigen::Matrix3d::Identity();  // sensor -> body
    double mismatch_threshold = 0.15;                     // m/s of mean lateral velocity
    double mismatch_time = 30.0;                          // averaging time constant, s
    double straight_rate = 0.02;                          // |r| below this counts as straight, rad/s
    double min_speed = 0.3;                               // m/s
};

struct DvlOutput {
    Vec3 velocity = Vec3::Zero();  // standard (body) frame; earth-relative when ice drift was added
    bool mismatch = false;
};

class DvlProcessor {
public:
    explicit DvlProcessor(DvlConfig cfg = {}) : cfg_(std::move(cfg)) {}

    // ice_drift is in the same (body) frame as the output; only used for
    // upward-facing, ice-relative measurements.
    DvlOutput process(const DvlMeas& m, const std::optional<Vec3>& ice_drift, double yaw_rate = 0.0);
    double lateral_average() const { return lateral_avg_; }

private:
    DvlConfig cfg_;
    double lateral_avg_ = 0.0;
    std::optional<double> last_t_;
};

// --- Position track buffer and LBL extrapolation ------------------------------------

class TrackBuffer {
public:
    explicit TrackBuffer(double span = 600.0, double decimation = 1.0) : span_(span), decimation_(decimation) {}

    void push(double t, const Vec2& pos);
    // Linear interpolation; nullopt outside the buffered span.
    std::optional<Vec2> at(double t) const;
    std::optional<double> oldest() const;
    bool empty() const { return points_.empty() && !latest_; }
    void clear();
    // Shifts every stored position, used on navigation re-initialization.
    void shift(const Vec2& delta);

private:
    struct Point {
        double t;
        Vec2 pos;
    };
    double span_;
    double decimation_;
    std::deque<Point> points_;
    std::optional<Point> latest_;
};

// x_lbl(t) = x_lbl(t_N) + (x_model(t) - x_model(t_N)); nullopt when t_N is not
// covered by the track.
std::optional<Vec2> lbl_extrapolate(const LblFix& fix, const TrackBuffer& model_track, double now);

// --- Layered fusion ---------------------------------------------------------------------

struct FusionConfig {
    double pos_sigma = 1.0;           // m
    double depth_sigma = 0.05;        // m
    double model_sigma = 0.2;         // m/s, replaced by the calibrator's running sigma
    double dvl_sigma = 0.05;          // m/s
    double bias_time = 300.0;         // Gauss-Markov correlation time, s
    double bias_sigma = 0.3;          // steady-state bias std, m/s
    double gate_sigma = 5.0;          // innovation gate
    bool dvl_in_suite = false;        // position fixes estimate DVL bias instead of model bias
    bool fixes_update_model_bias = true;
};

struct BiasState {
    Vec2 mean = Vec2::Zero();
    Eigen::Matrix2d cov = Eigen::Matrix2d::Identity() * 0.09;
};

struct NavSolution {
    double t = 0.0;
    double x = 0.0, y = 0.0, z = 0.0;
    double vn = 0.0, ve = 0.0, vd = 0.0;
    double phi = 0.0, theta = 0.0, psi = 0.0;
    Mat6 cov = Mat6::Identity();
    Vec2 dvl_bias = Vec2::Zero();
    Vec2 model_bias = Vec2::Zero();
    Vec3 current_est = Vec3::Zero();
    double model_sigma = 0.2;

    double speed() const;
};

struct FusionInputs {
    Vec3 model_vel = Vec3::Zero();           // earth frame, adapted model velocity
    std::optional<Vec3> dvl_vel;             // earth frame ground velocity
    std::optional<double> depth;
    std::optional<Vec2> position_fix;        // valid at the current time
    std::optional<Vec2> raw_fix;             // fix as received, valid at fix_time
    std::optional<double> fix_time;          // time the raw fix was valid (t_N)
    std::optional<double> model_sigma;       // overrides config when set
};

struct FusionEvents {
    bool fix_rejected = false;
    bool covariance_repaired = false;
    bool dvl_bias_updated = false;
    bool model_bias_updated = false;
};

class SensorFusion {
public:
    explicit SensorFusion(FusionConfig cfg = {});

    void initialize(const NavSolution& start, double pos_sigma);
    bool initialized() const { return initialized_; }

    NavSolution fuse(const FusionInputs& in, double t, double dt, FusionEvents* events = nullptr);

    // Hard reset of the position states to a trusted fix.
    void reinitialize(const Vec2& pos, double pos_sigma);
    // Moves part of the model bias elsewhere (into the current estimate).
    void shift_model_bias(const Vec2& delta) { model_bias_.mean += delta; }

    const NavSolution& solution() const { return sol_; }
    const BiasState& dvl_bias() const { return dvl_bias_; }
    const BiasState& model_bias() const { return model_bias_; }
    const FusionConfig& config() const { return cfg_; }

private:
    void propagate_bias(BiasState& b, double dt) const;
    bool update_bias(BiasState& b, const Vec2& measured, double variance) const;
    void bias_from_fix(const Vec2& fix, double fix_time, FusionEvents* ev);
    void enforce_psd(FusionEvents* ev);

    FusionConfig cfg_;
    bool initialized_ = false;
    NavSolution sol_;
    Eigen::Matrix<double, 6, 1> state_ = Eigen::Matrix<double, 6, 1>::Zero();
    Mat6 cov_ = Mat6::Identity();
    Vec3 prev_vel_ = Vec3::Zero();
    BiasState dvl_bias_;
    BiasState model_bias_;
    // Raw-velocity tracks used to measure source bias between position fixes.
    TrackBuffer dvl_track_{900.0, 0.0};
    TrackBuffer model_track_{900.0, 0.0};
    Vec2 dvl_pos_ = Vec2::Zero();
    Vec2 model_pos_ = Vec2::Zero();
    std::optional<std::pair<double, Vec2>> last_fix_;
};

// --- Manager --------------------------------------------------------------------------

enum class NavStatus { ok, reinit, degraded };
std::string to_string(NavStatus s);

struct ManagerConfig {
    double reinit_sigma = 10.0;  // reinit when disagreement exceeds this many combined sigmas
    int mismatch_limit = 10;     // consecutive DVL mismatch flags before DEGRADED
    double watchdog = 5.0;       // s without any measurement before DEGRADED
};

class NavManager {
public:
    explicit NavManager(ManagerConfig cfg = {}) : cfg_(cfg) {}

    // True when the fix disagrees with the solution enough to re-initialize.
    bool needs_reinit(const NavSolution& sol, const Vec2& fix, double fix_sigma) const;
    void on_reinit() { ++reinit_count_; pending_reinit_ = true; }
    void on_dvl(bool mismatch) { mismatch_run_ = mismatch ? mismatch_run_ + 1 : 0; }
    void on_measurement(double t) { last_meas_ = t; }

    // Status for this tick. REINIT is reported once per re-initialization.
    NavStatus status(double t);
    int reinit_count() const { return reinit_count_; }

private:
    ManagerConfig cfg_;
    int reinit_count_ = 0;
    bool pending_reinit_ = false;
    int mismatch_run_ = 0;
    std::optional<double> last_meas_;
};

// --- Engine -----------------------------------------------------------------------------

enum class CalibrationSource { position, bias, off };

struct NavConfig {
    FusionConfig fusion;
    CalibratorConfig calibrator;
    DvlConfig dvl;
    ManagerConfig manager;
    CalibrationSource calibration = CalibrationSource::position;
    double bias_transfer_time = 60.0;  // s, used with CalibrationSource::bias
    bool online_identification = false; // train the flight model from DVL
    std::optional<Vec3> ice_drift;      // earth frame, for an upward-facing DVL
    double depth_max_rate = 5.0;
    std::size_t depth_window = 20;
    double track_span = 600.0;
    double track_decimation = 1.0;
    double dvl_timeout = 1.5;           // s a DVL velocity stays usable
    double start_x = 0.0, start_y = 0.0;
};

struct NavCounters {
    int out_of_order = 0;
    int depth_rejected = 0;
    int lbl_rejected = 0;
    int fixes_gated = 0;
    int dvl_mismatch = 0;
    int reinits = 0;
};

class NavigationEngine {
public:
    NavigationEngine(NavConfig cfg, ModelParams model);

    // Measurements must be non-decreasing in time per stream; others are
    // rejected and counted.
    bool push(const Measurement& m);

    // Consumes queued measurements up to t and advances the solution by dt.
    NavSolution tick(double t, double dt);

    NavStatus status() const { return status_; }
    const NavCounters& counters() const { return counters_; }
    const ModelParams& model() const { return model_; }
    const ModelCalibrator& calibrator() const { return calibrator_; }
    const SensorFusion& fusion() const { return fusion_; }
    const TrackBuffer& model_track() const { return adapt_track_; }
    Vec3 last_model_body_velocity() const { return model_body_; }

private:
    void handle(const Measurement& m, double t);

    NavConfig cfg_;
    ModelParams model_;
    DepthFilter depth_;
    ModelCalibrator calibrator_;
    DvlProcessor dvl_;
    SensorFusion fusion_;
    NavManager manager_;
    NavCounters counters_;
    NavStatus status_ = NavStatus::ok;

    std::deque<Measurement> queue_;
    std::array<double, 6> last_stamp_;

    ImuMeas imu_;
    bool have_imu_ = false;
    double rpm_ = 0.0;
    std::optional<Vec3> dvl_earth_;
    std::optional<Vec3> dvl_body_;
    double dvl_t_ = -1e300;
    bool dvl_new_ = false;
    std::optional<GpsFix> gps_;
    std::optional<LblFix> lbl_;

    Vec3 model_body_ = Vec3::Zero();
    Vec2 adapt_pos_ = Vec2::Zero();
    Vec2 water_pos_ = Vec2::Zero();
    Vec3 prev_adapt_vel_ = Vec3::Zero();
    Vec3 prev_water_vel_ = Vec3::Zero();
    TrackBuffer adapt_track_;
    TrackBuffer water_track_;
    std::optional<std::pair<double, Vec2>> last_cal_fix_;
    bool started_ = false;
};

} // namespace mauv::nav
