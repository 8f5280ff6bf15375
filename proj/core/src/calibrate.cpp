#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "mauv/harness.hpp"

namespace mauv::harness {

namespace {

RunMetrics run_metrics(const Scenario& s)
{
    RunHooks hooks;
    hooks.keep_rows = true;
    const auto result = run(s, hooks);
    auto m = compute_metrics(to_telemetry(result.rows), s.legs);
    m.mission = mission_label(s);
    return m;
}

constexpr double kCentreWeight = 0.05;

double band_miss(double v, double lo, double hi)
{
    if (v < lo)
        return (lo - v) / (hi - lo);
    if (v > hi)
        return (v - hi) / (hi - lo);
    return 0.0;
}

struct Knob {
    const char* name;
    std::function<double&(plant::VehicleModel&)> ref;
};

std::vector<Knob> knobs()
{
    return {
        {"hull.y_v", [](plant::VehicleModel& v) -> double& { return v.bare.y_v; }},
        {"hull.n_v", [](plant::VehicleModel& v) -> double& { return v.bare.n_v; }},
        {"hull.n_r", [](plant::VehicleModel& v) -> double& { return v.bare.n_r; }},
        {"rudder.lift_per_angle", [](plant::VehicleModel& v) -> double& { return v.rudder.lift_per_angle; }},
        {"rudder.station", [](plant::VehicleModel& v) -> double& { return v.rudder.station; }},
        {"fin.lift_per_angle", [](plant::VehicleModel& v) -> double& { return v.fin.lift_per_angle; }},
        {"fin.station", [](plant::VehicleModel& v) -> double& { return v.fin.station; }},
        {"surge.induced_drag", [](plant::VehicleModel& v) -> double& { return v.surge.induced_drag; }},
        {"surge.fin_drag", [](plant::VehicleModel& v) -> double& { return v.surge.fin_drag; }},
    };
}

bool admissible(const plant::VehicleModel& v)
{
    try {
        v.validate();
        self_check(v);
        return true;
    }
    catch (const std::exception&) {
        return false;
    }
}

} // namespace

double analytic_yaw_ratio(const plant::VehicleModel& v)
{
    const double u = v.bare.ref_speed;
    const double with_fin = hydro::steady_yaw_rate(v.bare, v.rudder, v.fin, 1.0, u);
    const double without = hydro::steady_yaw_rate(v.bare, v.rudder, std::nullopt, 1.0, u);
    return std::abs(with_fin / without);
}

PairResult run_pair(const Scenario& base)
{
    PairResult r;
    Scenario off = base, on = base;
    apply_fins_option(off, FinsOption::off);
    apply_fins_option(on, FinsOption::on);
    r.off = run_metrics(off);
    r.on = run_metrics(on);
    if (r.off.all.peak_rate > 0.0)
        r.improvement_pct = (r.on.all.peak_rate / r.off.all.peak_rate - 1.0) * 100.0;
    r.yaw_ratio = analytic_yaw_ratio(base.vehicle);
    return r;
}

double calibration_loss(const PairResult& r, const CalibrationTargets& t)
{
    if (r.off.all.turns == 0 || r.on.all.turns == 0)
        return 1e6;
    const double e_off = (r.off.all.radius - t.radius_off) / t.radius_off;
    const double e_on = (r.on.all.radius - t.radius_on) / t.radius_on;
    const double e_rate = band_miss(r.on.all.peak_rate, t.peak_rate_lo, t.peak_rate_hi);
    const double e_imp = band_miss(r.improvement_pct, t.improvement_lo, t.improvement_hi);
    const double e_ratio = band_miss(r.yaw_ratio, t.yaw_ratio_lo, t.yaw_ratio_hi);
    // A weak pull toward the middle of each band keeps the result away from its edges.
    const double c_rate = (r.on.all.peak_rate - 0.5 * (t.peak_rate_lo + t.peak_rate_hi)) / (t.peak_rate_hi - t.peak_rate_lo);
    const double c_imp = (r.improvement_pct - 0.5 * (t.improvement_lo + t.improvement_hi)) / (t.improvement_hi - t.improvement_lo);
    const double c_ratio = (r.yaw_ratio - 0.5 * (t.yaw_ratio_lo + t.yaw_ratio_hi)) / (t.yaw_ratio_hi - t.yaw_ratio_lo);
    return e_off * e_off + e_on * e_on + e_rate * e_rate + e_imp * e_imp + e_ratio * e_ratio
           + kCentreWeight * (c_rate * c_rate + c_imp * c_imp + c_ratio * c_ratio);
}

CalibrationReport calibrate(const Scenario& base, const CalibrationTargets& targets, int max_rounds)
{
    CalibrationReport rep;
    if (!admissible(base.vehicle))
        throw ConfigError("starting vehicle fails the hydrodynamic self-check");

    Scenario s = base;
    rep.vehicle = s.vehicle;
    rep.achieved = run_pair(s);
    rep.loss = calibration_loss(rep.achieved, targets);
    rep.evaluations = 1;

    const auto ks = knobs();
    double step = 0.2;
    for (int round = 0; round < max_rounds && rep.loss > 1e-6; ++round) {
        bool improved = false;
        for (const auto& k : ks) {
            for (double dir : {1.0, -1.0}) {
                plant::VehicleModel trial = rep.vehicle;
                double& value = k.ref(trial);
                value = value == 0.0 ? dir * step * 0.1 : value * (1.0 + dir * step);
                if (!admissible(trial))
                    continue;
                s.vehicle = trial;
                PairResult pr;
                try {
                    pr = run_pair(s);
                }
                catch (const std::exception& e) {
                    rep.diagnostics.push_back(std::string(k.name) + ": run failed: " + e.what());
                    continue;
                }
                ++rep.evaluations;
                const double loss = calibration_loss(pr, targets);
                if (loss < rep.loss) {
                    rep.loss = loss;
                    rep.vehicle = trial;
                    rep.achieved = pr;
                    improved = true;
                    break;
                }
            }
        }
        if (!improved)
            step *= 0.5;
        if (step < 1e-3)
            break;
    }

    const auto& a = rep.achieved;
    const bool radius_off_ok = std::abs(a.off.all.radius - targets.radius_off) <= 0.1 * targets.radius_off;
    const bool radius_on_ok = std::abs(a.on.all.radius - targets.radius_on) <= 0.1 * targets.radius_on;
    const bool rate_ok = a.on.all.peak_rate >= 20.0 && a.on.all.peak_rate <= 40.0;
    const bool imp_ok = a.improvement_pct >= targets.improvement_lo && a.improvement_pct <= targets.improvement_hi;
    const bool ratio_ok = a.yaw_ratio >= targets.yaw_ratio_lo && a.yaw_ratio <= targets.yaw_ratio_hi;
    rep.feasible = radius_off_ok && radius_on_ok && rate_ok && imp_ok && ratio_ok;
    if (!ratio_ok)
        rep.diagnostics.push_back("analytic yaw-rate ratio outside target band");
    if (!radius_off_ok)
        rep.diagnostics.push_back("fins-off radius outside tolerance");
    if (!radius_on_ok)
        rep.diagnostics.push_back("fins-on radius outside tolerance");
    if (!rate_ok)
        rep.diagnostics.push_back("fins-on peak rate outside [20, 40] deg/s");
    if (!imp_ok)
        rep.diagnostics.push_back("turn-rate improvement outside target band");
    return rep;
}

nav::ModelParams identify_flight_model(const Scenario& base, double duration)
{
    Scenario s = base;
    s.nav_mode = NavMode::truth;
    s.duration = duration + s.safety.actuator_engage_delay;
    s.safety.mission_end_time = s.duration + 1.0;
    s.mission_path.clear();
    s.legs.clear();

    // Excitation: stepped speeds, headings and depths.
    const double speeds[] = {0.8, 1.2, 1.6, 1.0, 1.4, 0.6};
    const double depths[] = {2.0, 3.0, 1.5, 2.5};
    double heading = 0.0;
    int k = 0;
    for (double t = 0.0; t < s.duration; t += 15.0, ++k) {
        helm::MissionLeg leg;
        leg.start_time = t;
        heading = wrap_360(heading + (k % 3 == 2 ? -120.0 : 75.0));
        leg.heading = heading;
        leg.speed = speeds[k % 6];
        leg.depth = depths[k % 4];
        s.legs.push_back(leg);
    }

    RunHooks hooks;
    const auto result = run(s, hooks);

    nav::ModelParams params = s.model;
    const nav::ModelParams fresh = nav::ModelParams::make(params.lambda, params.initial_cov);
    params.surge.theta = fresh.surge.theta;
    params.surge.cov = fresh.surge.cov;
    params.sway.theta = fresh.sway.theta;
    params.sway.cov = fresh.sway.cov;
    params.heave.theta = fresh.heave.theta;
    params.heave.cov = fresh.heave.cov;

    const double engage = s.safety.actuator_engage_delay;
    nav::Vec3 prev{0.0, 0.0, 0.0};
    bool have_prev = false;
    for (const auto& row : result.rows) {
        const auto& b = row.truth;
        const nav::Vec3 meas{b.u, b.v, b.w};  // plant body velocities are water-relative
        if (row.t >= engage && have_prev) {
            nav::ModelRegressors x;
            x.rpm = row.act.rpm;
            x.p = b.p;
            x.q = b.q;
            x.r = b.r;
            x.z = b.z;
            x.u_prev = prev[0];
            x.v_prev = prev[1];
            x.w_prev = prev[2];
            params = nav::rls_update(params, x, meas);
        }
        prev = meas;
        have_prev = true;
    }
    return params;
}

} // namespace mauv::harness
