#include "mauv/navigation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mauv::nav {

// --- DepthFilter ----------------------------------------------------------------------

DepthFilter::DepthFilter(double max_rate, std::size_t window) : max_rate_(max_rate), window_(window)
{
    if (max_rate <= 0.0 || window == 0)
        throw std::invalid_argument("depth filter needs a positive rate limit and window");
}

std::optional<double> DepthFilter::push(const DepthMeas& m)
{
    if (last_accepted_) {
        const double dz = std::abs(m.z - last_accepted_->z);
        const double dt = m.t - last_accepted_->t;
        const bool too_fast = dt <= 0.0 ? dz > 0.0 : dz / dt > max_rate_;
        if (too_fast || !std::isfinite(m.z)) {
            ++rejected_;
            return value();
        }
    }
    last_accepted_ = m;
    samples_.push_back(m.z);
    sum_ += m.z;
    if (samples_.size() > window_) {
        sum_ -= samples_.front();
        samples_.pop_front();
    }
    return value();
}

std::optional<double> DepthFilter::value() const
{
    if (samples_.empty())
        return std::nullopt;
    return sum_ / static_cast<double>(samples_.size());
}

// --- Flight dynamic model ---------------------------------------------------------

Eigen::VectorXd surge_regressors(const ModelRegressors& x)
{
    Eigen::VectorXd f(kSurgeTerms);
    f << x.rpm, x.rpm * x.rpm, x.q * x.p * x.p, x.r * x.v_prev * x.v_prev, x.q * x.w_prev * x.w_prev,
        x.p * x.p, x.q * x.q, x.r * x.r, x.p * x.r * x.r, x.z;
    return f;
}

Eigen::VectorXd sway_regressors(const ModelRegressors& x)
{
    Eigen::VectorXd f(kSwayTerms);
    f << x.q * x.p * x.p, x.p * x.p, x.r * x.u_prev * x.u_prev, x.q * x.u_prev * x.u_prev, x.q * x.q,
        x.r * x.r, x.p * x.r * x.r, x.z;
    return f;
}

Eigen::VectorXd heave_regressors(const ModelRegressors& x)
{
    Eigen::VectorXd f(kHeaveTerms);
    f << x.r * x.u_prev * x.u_prev, x.q * x.u_prev * x.u_prev, x.q * x.p * x.p, x.p * x.p, x.q * x.q,
        x.r * x.r, x.p * x.r * x.r, x.z;
    return f;
}

namespace {

RlsChannel make_channel(int n, double initial_cov)
{
    return {Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Identity(n, n) * initial_cov, std::vector<bool>(n, true)};
}

Eigen::VectorXd masked(Eigen::VectorXd f, const std::vector<bool>& active)
{
    for (Eigen::Index i = 0; i < f.size(); ++i)
        if (!active[i])
            f[i] = 0.0;
    return f;
}

// One exponentially weighted RLS step restricted to the active terms so that
// inactive covariance entries do not wind up.
bool rls_channel_step(RlsChannel& ch, const Eigen::VectorXd& full_phi, double y, double lambda, double p0,
                      double trace_limit)
{
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < full_phi.size(); ++i)
        if (ch.active[i])
            idx.push_back(i);
    const auto n = static_cast<Eigen::Index>(idx.size());
    if (n == 0)
        return false;

    Eigen::VectorXd phi(n), theta(n);
    Eigen::MatrixXd P(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
        phi[a] = full_phi[idx[a]];
        theta[a] = ch.theta[idx[a]];
        for (Eigen::Index b = 0; b < n; ++b)
            P(a, b) = ch.cov(idx[a], idx[b]);
    }

    const Eigen::VectorXd Pphi = P * phi;
    const double denom = lambda + phi.dot(Pphi);
    const Eigen::VectorXd k = Pphi / denom;
    theta += k * (y - phi.dot(theta));
    P = (P - k * Pphi.transpose()) / lambda;
    P = 0.5 * (P + P.transpose());

    bool reset = false;
    if (!P.allFinite() || P.trace() > trace_limit || P.diagonal().minCoeff() <= 0.0) {
        P = Eigen::MatrixXd::Identity(n, n) * p0;
        reset = true;
    }
    for (Eigen::Index a = 0; a < n; ++a) {
        ch.theta[idx[a]] = theta[a];
        for (Eigen::Index b = 0; b < n; ++b)
            ch.cov(idx[a], idx[b]) = P(a, b);
    }
    return reset;
}

} // namespace

ModelParams ModelParams::make(double lambda, double initial_cov)
{
    if (!(lambda > 0.9 && lambda <= 1.0))
        throw std::invalid_argument("forgetting factor must lie in (0.9, 1]");
    if (!(initial_cov > 0.0))
        throw std::invalid_argument("initial covariance must be positive");
    ModelParams m;
    m.surge = make_channel(kSurgeTerms, initial_cov);
    m.sway = make_channel(kSwayTerms, initial_cov);
    m.heave = make_channel(kHeaveTerms, initial_cov);
    m.lambda = lambda;
    m.initial_cov = initial_cov;
    return m;
}

Vec3 model_velocity(const ModelRegressors& x, const ModelParams& params)
{
    return {masked(surge_regressors(x), params.surge.active).dot(params.surge.theta),
            masked(sway_regressors(x), params.sway.active).dot(params.sway.theta),
            masked(heave_regressors(x), params.heave.active).dot(params.heave.theta)};
}

ModelParams rls_update(const ModelParams& params, const ModelRegressors& x, const Vec3& measured, RlsEvents* events)
{
    ModelParams out = params;
    int resets = 0;
    resets += rls_channel_step(out.surge, surge_regressors(x), measured.x(), out.lambda, out.initial_cov, out.trace_limit);
    resets += rls_channel_step(out.sway, sway_regressors(x), measured.y(), out.lambda, out.initial_cov, out.trace_limit);
    resets += rls_channel_step(out.heave, heave_regressors(x), measured.z(), out.lambda, out.initial_cov, out.trace_limit);
    if (events)
        events->covariance_resets += resets;
    return out;
}

// --- Calibrator ----------------------------------------------------------------------------

ModelCalibrator::ModelCalibrator(CalibratorConfig cfg)
    : cfg_(cfg), sigma_(cfg.initial_sigma), var_(cfg.initial_sigma * cfg.initial_sigma)
{
    if (cfg.smoothing_time <= 0.0 || cfg.timeout <= 0.0)
        throw std::invalid_argument("calibrator time constants must be positive");
}

void ModelCalibrator::calibrate(const Vec3& model_vel_earth, const Vec3& reference_vel_earth, double t)
{
    if (!last_t_) {
        last_t_ = t;
        return;
    }
    const double dt = std::min(t - *last_t_, cfg_.timeout);
    if (dt <= 0.0)
        return;
    last_t_ = t;
    const double alpha = 1.0 - std::exp(-dt / cfg_.smoothing_time);
    const Vec3 residual = reference_vel_earth - model_vel_earth;
    current_ += alpha * (residual - current_);
    const double spread = (residual - current_).head<2>().squaredNorm() / 2.0;
    var_ += alpha * (spread - var_);
    sigma_ = std::max(cfg_.sigma_floor, std::sqrt(var_));
}

void ModelCalibrator::absorb_bias(const Vec3& bias, double fraction)
{
    current_ -= fraction * bias;
}

bool ModelCalibrator::frozen(double t) const
{
    return !last_t_ || t - *last_t_ > cfg_.timeout;
}

Eigen::Matrix3d body_to_earth(double phi, double theta, double psi)
{
    return (Eigen::AngleAxisd(psi, Vec3::UnitZ()) * Eigen::AngleAxisd(theta, Vec3::UnitY()) *
            Eigen::AngleAxisd(phi, Vec3::UnitX()))
        .toRotationMatrix();
}

// --- DVL ---------------------------------------------------------------------------------

DvlOutput DvlProcessor::process(const DvlMeas& m, const std::optional<Vec3>& ice_drift, double yaw_rate)
{
    DvlOutput out;
    out.velocity = Vec3(m.vx, m.vy, m.vz);
    if (m.frame == DvlFrame::sensor)
        out.velocity = cfg_.mount * out.velocity;
    if (ice_drift)
        out.velocity += *ice_drift;

    if (m.frame != DvlFrame::earth && std::abs(yaw_rate) < cfg_.straight_rate &&
        std::abs(out.velocity.x()) > cfg_.min_speed) {
        const double dt = last_t_ ? std::max(0.0, m.t - *last_t_) : 0.0;
        const double alpha = 1.0 - std::exp(-dt / cfg_.mismatch_time);
        lateral_avg_ += alpha * (out.velocity.y() - lateral_avg_);
        last_t_ = m.t;
    }
    else {
        last_t_.reset();
    }
    out.mismatch = std::abs(lateral_avg_) > cfg_.mismatch_threshold;
    return out;
}

// --- Track buffer ------------------------------------------------------------------------

void TrackBuffer::push(double t, const Vec2& pos)
{
    if (latest_ && t < latest_->t)
        throw std::invalid_argument("track samples must be time ordered");
    latest_ = Point{t, pos};
    if (points_.empty() || t - points_.back().t >= decimation_)
        points_.push_back({t, pos});
    while (!points_.empty() && points_.front().t < t - span_)
        points_.pop_front();
}

std::optional<double> TrackBuffer::oldest() const
{
    if (!points_.empty())
        return points_.front().t;
    if (latest_)
        return latest_->t;
    return std::nullopt;
}

std::optional<Vec2> TrackBuffer::at(double t) const
{
    constexpr double eps = 1e-9;
    if (!latest_)
        return std::nullopt;
    std::vector<Point> tail;
    const bool extra = points_.empty() || latest_->t > points_.back().t;
    const std::size_t n = points_.size() + (extra ? 1 : 0);
    auto point = [&](std::size_t i) -> const Point& { return i < points_.size() ? points_[i] : *latest_; };

    if (t > latest_->t + eps || t < point(0).t - eps)
        return std::nullopt;
    if (t >= latest_->t)
        return latest_->pos;
    if (t <= point(0).t)
        return point(0).pos;

    std::size_t lo = 0, hi = n - 1;
    while (hi - lo > 1) {
        const std::size_t mid = (lo + hi) / 2;
        if (point(mid).t <= t)
            lo = mid;
        else
            hi = mid;
    }
    const Point& a = point(lo);
    const Point& b = point(hi);
    const double span = b.t - a.t;
    if (span <= 0.0)
        return b.pos;
    const double w = (t - a.t) / span;
    return ((1.0 - w) * a.pos + w * b.pos).eval();
}

void TrackBuffer::clear()
{
    points_.clear();
    latest_.reset();
}

void TrackBuffer::shift(const Vec2& delta)
{
    for (auto& p : points_)
        p.pos += delta;
    if (latest_)
        latest_->pos += delta;
}

std::optional<Vec2> lbl_extrapolate(const LblFix& fix, const TrackBuffer& model_track, double now)
{
    const auto then_pos = model_track.at(fix.t_n);
    const auto now_pos = model_track.at(now);
    if (!then_pos || !now_pos)
        return std::nullopt;
    return (Vec2(fix.x, fix.y) + (*now_pos - *then_pos)).eval();
}

// --- Fusion --------------------------------------------------------------------------------

double NavSolution::speed() const
{
    return std::sqrt(vn * vn + ve * ve + vd * vd);
}

SensorFusion::SensorFusion(FusionConfig cfg) : cfg_(cfg)
{
    if (cfg.pos_sigma <= 0.0 || cfg.depth_sigma <= 0.0 || cfg.model_sigma <= 0.0 || cfg.dvl_sigma <= 0.0)
        throw std::invalid_argument("fusion noise sigmas must be positive");
    if (cfg.bias_time <= 0.0 || cfg.gate_sigma <= 0.0)
        throw std::invalid_argument("bias correlation time and gate must be positive");
    dvl_bias_.cov = Eigen::Matrix2d::Identity() * cfg.bias_sigma * cfg.bias_sigma;
    model_bias_.cov = dvl_bias_.cov;
}

void SensorFusion::initialize(const NavSolution& start, double pos_sigma)
{
    sol_ = start;
    state_ << start.x, start.y, start.z, start.vn, start.ve, start.vd;
    cov_.setZero();
    cov_.diagonal() << pos_sigma * pos_sigma, pos_sigma * pos_sigma, cfg_.depth_sigma * cfg_.depth_sigma,
        cfg_.model_sigma * cfg_.model_sigma, cfg_.model_sigma * cfg_.model_sigma, cfg_.model_sigma * cfg_.model_sigma;
    sol_.cov = cov_;
    prev_vel_ = Vec3(start.vn, start.ve, start.vd);
    dvl_pos_ = model_pos_ = Vec2(start.x, start.y);
    dvl_track_.clear();
    model_track_.clear();
    last_fix_.reset();
    initialized_ = true;
}

void SensorFusion::reinitialize(const Vec2& pos, double pos_sigma)
{
    if (!initialized_)
        throw std::logic_error("fusion not initialized");
    state_.head<2>() = pos;
    const double inflated = 4.0 * pos_sigma * pos_sigma;
    cov_.row(0).setZero();
    cov_.row(1).setZero();
    cov_.col(0).setZero();
    cov_.col(1).setZero();
    cov_(0, 0) = cov_(1, 1) = inflated;
    last_fix_.reset();
    sol_.x = pos.x();
    sol_.y = pos.y();
    sol_.cov = cov_;
}

void SensorFusion::propagate_bias(BiasState& b, double dt) const
{
    const double decay = std::exp(-dt / cfg_.bias_time);
    b.mean *= decay;
    const double q = cfg_.bias_sigma * cfg_.bias_sigma * (1.0 - decay * decay);
    b.cov = decay * decay * b.cov + q * Eigen::Matrix2d::Identity();
}

bool SensorFusion::update_bias(BiasState& b, const Vec2& measured, double variance) const
{
    const Eigen::Matrix2d S = b.cov + variance * Eigen::Matrix2d::Identity();
    const Eigen::Matrix2d K = b.cov * S.inverse();
    b.mean += K * (measured - b.mean);
    const Eigen::Matrix2d I_K = Eigen::Matrix2d::Identity() - K;
    b.cov = I_K * b.cov * I_K.transpose() + variance * K * K.transpose();
    b.cov = 0.5 * (b.cov + b.cov.transpose());
    return true;
}

void SensorFusion::bias_from_fix(const Vec2& fix, double fix_time, FusionEvents* ev)
{
    if (last_fix_) {
        const double T = fix_time - last_fix_->first;
        const bool to_dvl = cfg_.dvl_in_suite;
        const TrackBuffer& track = to_dvl ? dvl_track_ : model_track_;
        const auto a = track.at(last_fix_->first);
        const auto b = track.at(fix_time);
        if (T > 0.5 && a && b && (to_dvl || cfg_.fixes_update_model_bias)) {
            const Vec2 travelled = *b - *a;
            const Vec2 truth = fix - last_fix_->second;
            const Vec2 measured = (travelled - truth) / T;
            const double variance = 2.0 * cfg_.pos_sigma * cfg_.pos_sigma / (T * T);
            if (to_dvl) {
                update_bias(dvl_bias_, measured, variance);
                if (ev)
                    ev->dvl_bias_updated = true;
            }
            else {
                update_bias(model_bias_, measured, variance);
                if (ev)
                    ev->model_bias_updated = true;
            }
        }
    }
    last_fix_ = std::make_pair(fix_time, fix);
}

void SensorFusion::enforce_psd(FusionEvents* ev)
{
    cov_ = 0.5 * (cov_ + cov_.transpose());
    Eigen::SelfAdjointEigenSolver<Mat6> es(cov_);
    if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() < 0.0 || !cov_.allFinite()) {
        Eigen::Matrix<double, 6, 1> ev_vals = es.eigenvalues().cwiseMax(1e-9);
        if (!ev_vals.allFinite())
            ev_vals.setConstant(cfg_.pos_sigma * cfg_.pos_sigma);
        cov_ = es.eigenvectors() * ev_vals.asDiagonal() * es.eigenvectors().transpose();
        cov_ = 0.5 * (cov_ + cov_.transpose());
        cov_ += 1e-9 * Mat6::Identity();
        if (ev)
            ev->covariance_repaired = true;
    }
}

NavSolution SensorFusion::fuse(const FusionInputs& in, double t, double dt, FusionEvents* events)
{
    if (!initialized_)
        throw std::logic_error("fusion not initialized");
    if (dt < 0.0)
        throw std::invalid_argument("negative fusion step");

    const double model_sigma = in.model_sigma.value_or(cfg_.model_sigma);

    // Error-state layer.
    propagate_bias(dvl_bias_, dt);
    propagate_bias(model_bias_, dt);

    model_pos_ += in.model_vel.head<2>() * dt;
    model_track_.push(t, model_pos_);
    if (in.dvl_vel) {
        dvl_pos_ += in.dvl_vel->head<2>() * dt;
        dvl_track_.push(t, dvl_pos_);
        const Vec2 corrected_dvl = in.dvl_vel->head<2>() - dvl_bias_.mean;
        const Vec2 measured = in.model_vel.head<2>() - corrected_dvl;
        update_bias(model_bias_, measured, model_sigma * model_sigma + cfg_.dvl_sigma * cfg_.dvl_sigma);
        if (events)
            events->model_bias_updated = true;
    }

    Vec3 vel;
    double vel_sigma;
    if (in.dvl_vel) {
        vel = *in.dvl_vel;
        vel.head<2>() -= dvl_bias_.mean;
        vel_sigma = cfg_.dvl_sigma;
    }
    else {
        vel = in.model_vel;
        vel.head<2>() -= model_bias_.mean;
        vel_sigma = model_sigma;
    }

    // Main filter prediction: velocity enters as an input, position integrates it.
    state_.head<3>() += 0.5 * (prev_vel_ + vel) * dt;
    state_.tail<3>() = vel;
    prev_vel_ = vel;
    constexpr double correlation_time = 30.0;
    const double q_pos = vel_sigma * vel_sigma * correlation_time * dt;
    cov_.topLeftCorner<3, 3>() += q_pos * Eigen::Matrix3d::Identity();
    cov_.topRightCorner<3, 3>().setZero();
    cov_.bottomLeftCorner<3, 3>().setZero();
    cov_.bottomRightCorner<3, 3>() = vel_sigma * vel_sigma * Eigen::Matrix3d::Identity();

    auto joseph = [&](const auto& H, const auto& innov, const auto& R) {
        using HType = std::decay_t<decltype(H)>;
        constexpr int m = HType::RowsAtCompileTime;
        const Eigen::Matrix<double, m, m> S = H * cov_ * H.transpose() + R;
        const Eigen::Matrix<double, 6, m> K = cov_ * H.transpose() * S.inverse();
        state_ += K * innov;
        const Mat6 I_KH = Mat6::Identity() - K * H;
        cov_ = I_KH * cov_ * I_KH.transpose() + K * R * K.transpose();
    };

    if (in.depth) {
        Eigen::Matrix<double, 1, 6> H = Eigen::Matrix<double, 1, 6>::Zero();
        H(0, 2) = 1.0;
        Eigen::Matrix<double, 1, 1> innov, R;
        innov << *in.depth - state_[2];
        R << cfg_.depth_sigma * cfg_.depth_sigma;
        joseph(H, innov, R);
    }

    if (in.position_fix) {
        Eigen::Matrix<double, 2, 6> H = Eigen::Matrix<double, 2, 6>::Zero();
        H(0, 0) = H(1, 1) = 1.0;
        const Vec2 innov = *in.position_fix - state_.head<2>();
        const Eigen::Matrix2d R = Eigen::Matrix2d::Identity() * cfg_.pos_sigma * cfg_.pos_sigma;
        const Eigen::Matrix2d S = cov_.topLeftCorner<2, 2>() + R;
        const double d2 = innov.dot(S.ldlt().solve(innov));
        if (d2 > cfg_.gate_sigma * cfg_.gate_sigma) {
            if (events)
                events->fix_rejected = true;
        }
        else {
            joseph(H, innov, R);
            bias_from_fix(in.raw_fix.value_or(*in.position_fix), in.fix_time.value_or(t), events);
        }
    }

    enforce_psd(events);

    sol_.t = t;
    sol_.x = state_[0];
    sol_.y = state_[1];
    sol_.z = state_[2];
    sol_.vn = state_[3];
    sol_.ve = state_[4];
    sol_.vd = state_[5];
    sol_.cov = cov_;
    sol_.dvl_bias = dvl_bias_.mean;
    sol_.model_bias = model_bias_.mean;
    sol_.model_sigma = model_sigma;
    return sol_;
}

// --- Manager -------------------------------------------------------------------------------

std::string to_string(NavStatus s)
{
    switch (s) {
    case NavStatus::ok: return "OK";
    case NavStatus::reinit: return "REINIT";
    case NavStatus::degraded: return "DEGRADED";
    }
    return "UNKNOWN";
}

bool NavManager::needs_reinit(const NavSolution& sol, const Vec2& fix, double fix_sigma) const
{
    const double sol_var = 0.5 * (sol.cov(0, 0) + sol.cov(1, 1));
    const double threshold = cfg_.reinit_sigma * std::sqrt(sol_var + fix_sigma * fix_sigma);
    return (fix - Vec2(sol.x, sol.y)).norm() > threshold;
}

NavStatus NavManager::status(double t)
{
    if (pending_reinit_) {
        pending_reinit_ = false;
        return NavStatus::reinit;
    }
    if (mismatch_run_ >= cfg_.mismatch_limit)
        return NavStatus::degraded;
    const double since = last_meas_ ? t - *last_meas_ : t;
    if (since > cfg_.watchdog)
        return NavStatus::degraded;
    return NavStatus::ok;
}

// --- Engine --------------------------------------------------------------------------------

NavigationEngine::NavigationEngine(NavConfig cfg, ModelParams model)
    : cfg_(std::move(cfg)),
      model_(std::move(model)),
      depth_(cfg_.depth_max_rate, cfg_.depth_window),
      calibrator_(cfg_.calibrator),
      dvl_(cfg_.dvl),
      fusion_(cfg_.fusion),
      manager_(cfg_.manager),
      adapt_track_(cfg_.track_span, cfg_.track_decimation),
      water_track_(cfg_.track_span, cfg_.track_decimation)
{
    last_stamp_.fill(-1e300);
    if (cfg_.calibration == CalibrationSource::position)
        cfg_.fusion.fixes_update_model_bias = false;
    fusion_ = SensorFusion(cfg_.fusion);
    NavSolution start;
    start.x = cfg_.start_x;
    start.y = cfg_.start_y;
    start.model_sigma = cfg_.fusion.model_sigma;
    fusion_.initialize(start, cfg_.fusion.pos_sigma);
    adapt_pos_ = water_pos_ = Vec2(cfg_.start_x, cfg_.start_y);
}

bool NavigationEngine::push(const Measurement& m)
{
    const auto stream = m.index();
    const double ts = timestamp(m);
    if (!std::isfinite(ts) || ts < last_stamp_[stream]) {
        ++counters_.out_of_order;
        return false;
    }
    last_stamp_[stream] = ts;
    const auto pos = std::upper_bound(queue_.begin(), queue_.end(), ts,
                                      [](double v, const Measurement& q) { return v < timestamp(q); });
    queue_.insert(pos, m);
    return true;
}

void NavigationEngine::handle(const Measurement& m, double t)
{
    manager_.on_measurement(timestamp(m));
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, DepthMeas>) {
                depth_.push(v);
                counters_.depth_rejected = depth_.rejected();
            }
            else if constexpr (std::is_same_v<T, ImuMeas>) {
                imu_ = v;
                have_imu_ = true;
            }
            else if constexpr (std::is_same_v<T, RpmMeas>) {
                rpm_ = v.rpm;
            }
            else if constexpr (std::is_same_v<T, GpsFix>) {
                gps_ = v;
            }
            else if constexpr (std::is_same_v<T, LblFix>) {
                lbl_ = v;
            }
            else if constexpr (std::is_same_v<T, DvlMeas>) {
                const Eigen::Matrix3d R = body_to_earth(imu_.phi, imu_.theta, imu_.psi);
                std::optional<Vec3> ice_body;
                if (cfg_.ice_drift)
                    ice_body = R.transpose() * *cfg_.ice_drift;
                const DvlOutput out = dvl_.process(v, v.frame == DvlFrame::earth ? cfg_.ice_drift : ice_body, imu_.r);
                manager_.on_dvl(out.mismatch);
                if (out.mismatch)
                    ++counters_.dvl_mismatch;
                if (v.frame == DvlFrame::earth) {
                    dvl_earth_ = out.velocity;
                    dvl_body_ = R.transpose() * out.velocity;
                }
                else {
                    dvl_body_ = out.velocity;
                    dvl_earth_ = R * out.velocity;
                }
                dvl_t_ = v.t;
                dvl_new_ = true;
            }
        },
        m);
    (void)t;
}

NavSolution NavigationEngine::tick(double t, double dt)
{
    while (!queue_.empty() && timestamp(queue_.front()) <= t + 1e-9) {
        handle(queue_.front(), t);
        queue_.pop_front();
    }

    const std::optional<double> depth = depth_.value();
    ModelRegressors reg;
    reg.rpm = rpm_;
    reg.p = imu_.p;
    reg.q = imu_.q;
    reg.r = imu_.r;
    reg.z = depth.value_or(0.0);
    reg.u_prev = model_body_.x();
    reg.v_prev = model_body_.y();
    reg.w_prev = model_body_.z();
    model_body_ = model_velocity(reg, model_);

    const Eigen::Matrix3d R = body_to_earth(imu_.phi, imu_.theta, imu_.psi);
    const Vec3 water_e = R * model_body_;
    const Vec3 adapt_e = calibrator_.adapt(water_e);

    if (!started_) {
        prev_adapt_vel_ = adapt_e;
        prev_water_vel_ = water_e;
        started_ = true;
    }
    adapt_pos_ += 0.5 * (prev_adapt_vel_ + adapt_e).head<2>() * dt;
    water_pos_ += 0.5 * (prev_water_vel_ + water_e).head<2>() * dt;
    prev_adapt_vel_ = adapt_e;
    prev_water_vel_ = water_e;
    adapt_track_.push(t, adapt_pos_);
    water_track_.push(t, water_pos_);

    const bool dvl_fresh = dvl_earth_ && t - dvl_t_ <= cfg_.dvl_timeout;
    if (dvl_new_ && dvl_body_ && cfg_.online_identification) {
        const Vec3 water_body = *dvl_body_ - R.transpose() * calibrator_.current_est();
        model_ = rls_update(model_, reg, water_body);
    }

    // Reference positions for calibration and fusion.
    std::optional<Vec2> fix_now, fix_raw;
    std::optional<double> fix_time;
    if (gps_) {
        fix_now = fix_raw = Vec2(gps_->x, gps_->y);
        fix_time = gps_->t;
    }
    else if (lbl_) {
        fix_now = lbl_extrapolate(*lbl_, adapt_track_, t);
        if (fix_now) {
            fix_raw = Vec2(lbl_->x, lbl_->y);
            fix_time = lbl_->t_n;
        }
        else {
            ++counters_.lbl_rejected;
        }
    }
    gps_.reset();
    lbl_.reset();

    if (cfg_.calibration == CalibrationSource::position) {
        if (fix_raw) {
            if (last_cal_fix_ && *fix_time - last_cal_fix_->first >= 1.0) {
                const double T = *fix_time - last_cal_fix_->first;
                const auto a = water_track_.at(last_cal_fix_->first);
                const auto b = water_track_.at(*fix_time);
                if (a && b) {
                    Vec3 model_mean = Vec3::Zero(), ref = Vec3::Zero();
                    model_mean.head<2>() = (*b - *a) / T;
                    ref.head<2>() = (*fix_raw - last_cal_fix_->second) / T;
                    calibrator_.calibrate(model_mean, ref, *fix_time);
                }
            }
            if (!last_cal_fix_ || *fix_time - last_cal_fix_->first >= 1.0)
                last_cal_fix_ = std::make_pair(*fix_time, *fix_raw);
        }
        if (dvl_new_ && dvl_fresh) {
            Vec3 ref = *dvl_earth_;
            ref.head<2>() -= fusion_.dvl_bias().mean;
            calibrator_.calibrate(water_e, ref, t);
        }
    }
    else if (cfg_.calibration == CalibrationSource::bias && cfg_.bias_transfer_time > 0.0) {
        const double fraction = std::min(1.0, dt / cfg_.bias_transfer_time);
        Vec3 bias = Vec3::Zero();
        bias.head<2>() = fusion_.model_bias().mean;
        calibrator_.absorb_bias(bias, fraction);
        fusion_.shift_model_bias(-fraction * bias.head<2>());
    }
    dvl_new_ = false;

    FusionInputs in;
    in.model_vel = calibrator_.adapt(water_e);
    if (dvl_fresh)
        in.dvl_vel = dvl_earth_;
    in.depth = depth;
    in.model_sigma = calibrator_.model_sigma();

    if (fix_now) {
        if (manager_.needs_reinit(fusion_.solution(), *fix_now, cfg_.fusion.pos_sigma)) {
            fusion_.reinitialize(*fix_now, cfg_.fusion.pos_sigma);
            manager_.on_reinit();
            ++counters_.reinits;
            last_cal_fix_.reset();
        }
        else {
            in.position_fix = fix_now;
            in.raw_fix = fix_raw;
            in.fix_time = fix_time;
        }
    }

    FusionEvents ev;
    NavSolution sol = fusion_.fuse(in, t, dt, &ev);
    if (ev.fix_rejected)
        ++counters_.fixes_gated;
    sol.phi = imu_.phi;
    sol.theta = imu_.theta;
    sol.psi = imu_.psi;
    sol.current_est = calibrator_.current_est();
    sol.model_sigma = calibrator_.model_sigma();
    status_ = manager_.status(t);
    return sol;
}

} // namespace mauv::nav
