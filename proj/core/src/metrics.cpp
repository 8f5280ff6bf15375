#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mauv/harness.hpp"

namespace mauv::harness {

using json = nlohmann::ordered_json;

// --- Circle fitting ---------------------------------------------------------------------

CircleFit fit_circle(std::span<const double> x, std::span<const double> y)
{
    const std::size_t n = x.size();
    if (n != y.size())
        throw std::invalid_argument("circle fit needs matching x and y");
    if (n < 3)
        throw DegenerateFit("circle fit needs at least three points");

    // Centre the data for conditioning.
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    Eigen::MatrixXd A(n, 3);
    Eigen::VectorXd b(n);
    double extent = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = x[i] - mx, yi = y[i] - my;
        A(i, 0) = xi;
        A(i, 1) = yi;
        A(i, 2) = 1.0;
        b[i] = -(xi * xi + yi * yi);
        extent = std::max(extent, std::hypot(xi, yi));
    }
    if (extent <= 0.0)
        throw DegenerateFit("all points coincide");

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv[2] <= 1e-9 * sv[0])
        throw DegenerateFit("points are collinear");
    const Eigen::Vector3d sol = svd.solve(b);
    double cx = -sol[0] / 2.0, cy = -sol[1] / 2.0;
    const double r2 = cx * cx + cy * cy - sol[2];
    if (!(r2 > 0.0))
        throw DegenerateFit("algebraic fit produced no circle");
    double r = std::sqrt(r2);
    if (r > 1e4 * extent)
        throw DegenerateFit("points are nearly collinear");

    // One Gauss-Newton step on geometric distance residuals.
    Eigen::MatrixXd J(n, 3);
    Eigen::VectorXd res(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx - cx, dy = y[i] - my - cy;
        const double d = std::hypot(dx, dy);
        if (d <= 0.0)
            throw DegenerateFit("point at circle centre");
        J(i, 0) = -dx / d;
        J(i, 1) = -dy / d;
        J(i, 2) = -1.0;
        res[i] = d - r;
    }
    const Eigen::Vector3d delta = J.colPivHouseholderQr().solve(-res);
    cx += delta[0];
    cy += delta[1];
    r += delta[2];

    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = std::hypot(x[i] - mx - cx, y[i] - my - cy) - r;
        ss += e * e;
    }
    CircleFit fit;
    fit.radius = r;
    fit.cx = cx + mx;
    fit.cy = cy + my;
    fit.rms_residual = std::sqrt(ss / static_cast<double>(n));
    return fit;
}

namespace {

std::vector<double> unwrap(std::span<const double> psi)
{
    std::vector<double> out(psi.begin(), psi.end());
    for (std::size_t i = 1; i < out.size(); ++i)
        out[i] = out[i - 1] + wrap_pi(psi[i] - psi[i - 1]);
    return out;
}

} // namespace

CircleFit fit_turn(std::span<const double> t, std::span<const double> x, std::span<const double> y,
                   std::span<const double> psi)
{
    if (t.size() != x.size() || t.size() != psi.size())
        throw std::invalid_argument("turn segment columns differ in length");
    CircleFit fit = fit_circle(x, y);
    const auto un = unwrap(psi);
    const double span_t = t.back() - t.front();
    if (span_t <= 0.0)
        throw DegenerateFit("turn segment has no duration");
    fit.rate_deg_s = rad2deg(un.back() - un.front()) / span_t;
    return fit;
}

// --- Run metrics --------------------------------------------------------------------------

RunMetrics compute_metrics(const Telemetry& tel, const std::vector<helm::MissionLeg>& legs, const TurnDetection& det)
{
    RunMetrics m;
    const std::size_t n = tel.rows();
    if (n == 0)
        return m;
    const auto& t = tel.col("t");
    const auto& x = tel.col("x");
    const auto& y = tel.col("y");
    const auto& z = tel.col("z");
    const auto& psi = tel.col("psi");
    const auto& r = tel.col("r");
    const auto& u = tel.col("u");
    const auto& deploy = tel.col("fin_deploy");
    const auto un = unwrap(psi);
    m.duration = t.back();

    // Turns: runs of same-signed yaw rate above the threshold.
    std::size_t i = 0;
    while (i < n) {
        const double ri = rad2deg(r[i]);
        if (std::abs(ri) < det.min_rate_deg_s) {
            ++i;
            continue;
        }
        const double sign = ri > 0.0 ? 1.0 : -1.0;
        std::size_t j = i;
        double peak = 0.0;
        while (j < n && rad2deg(r[j]) * sign >= det.min_rate_deg_s) {
            peak = std::max(peak, std::abs(rad2deg(r[j])));
            ++j;
        }
        const std::size_t seg_begin = i, seg_end = j;  // [begin, end)
        i = j;
        if (rad2deg(std::abs(un[seg_end - 1] - un[seg_begin])) < det.min_heading_change)
            continue;

        std::size_t a = seg_begin, b = seg_end - 1;
        while (a < b && std::abs(rad2deg(r[a])) < det.steady_fraction * peak)
            ++a;
        while (b > a && std::abs(rad2deg(r[b])) < det.steady_fraction * peak)
            --b;
        if (rad2deg(std::abs(un[b] - un[a])) < det.min_heading_change) {
            a = seg_begin;
            b = seg_end - 1;
        }
        const std::size_t len = b - a + 1;
        CircleFit fit;
        try {
            fit = fit_turn(std::span(t).subspan(a, len), std::span(x).subspan(a, len), std::span(y).subspan(a, len),
                           std::span(psi).subspan(a, len));
        }
        catch (const DegenerateFit&) {
            continue;
        }
        TurnMetrics tm;
        tm.index = static_cast<int>(m.turns.size());
        tm.direction = sign > 0.0 ? "starboard" : "port";
        tm.t_start = t[a];
        tm.t_end = t[b];
        tm.heading_change_deg = rad2deg(std::abs(un[b] - un[a]));
        tm.radius = fit.radius;
        tm.cx = fit.cx;
        tm.cy = fit.cy;
        tm.mean_rate_deg_s = std::abs(fit.rate_deg_s);
        tm.peak_rate_deg_s = peak;
        double us = 0.0, dep = 0.0;
        for (std::size_t k = a; k <= b; ++k) {
            us += u[k];
            dep += deploy[k] >= 0.999 ? 1.0 : 0.0;
        }
        tm.speed = us / static_cast<double>(len);
        tm.fin_deployed = dep / static_cast<double>(len);
        m.turns.push_back(tm);
    }

    auto summarize = [&](const std::string& dir) {
        SideSummary s;
        for (const auto& tm : m.turns) {
            if (!dir.empty() && tm.direction != dir)
                continue;
            ++s.turns;
            s.radius += tm.radius;
            s.peak_rate += tm.peak_rate_deg_s;
            s.mean_rate += tm.mean_rate_deg_s;
        }
        if (s.turns > 0) {
            s.radius /= s.turns;
            s.peak_rate /= s.turns;
            s.mean_rate /= s.turns;
        }
        return s;
    };
    m.all = summarize("");
    m.port = summarize("port");
    m.starboard = summarize("starboard");

    // Per-leg response.
    for (std::size_t l = 0; l < legs.size(); ++l) {
        const double t0 = legs[l].start_time;
        const double t1 = l + 1 < legs.size() ? legs[l + 1].start_time : m.duration;
        LegMetrics lm;
        lm.leg = static_cast<int>(l);
        lm.t_start = t0;
        lm.t_end = t1;
        double e0 = 0.0, worst = 0.0, sq = 0.0, last_unsettled = t0;
        std::size_t count = 0;
        bool first = true;
        for (std::size_t k = 0; k < n; ++k) {
            if (t[k] < t0 || t[k] >= t1)
                continue;
            const double e = control::heading_error_deg(legs[l].heading, wrap_360(rad2deg(psi[k])));
            if (first) {
                e0 = e;
                first = false;
            }
            const double s = e0 >= 0.0 ? 1.0 : -1.0;
            worst = std::max(worst, -s * e);
            if (std::abs(e) >= 5.0)
                last_unsettled = t[k];
            sq += (z[k] - legs[l].depth) * (z[k] - legs[l].depth);
            ++count;
        }
        if (count > 0) {
            lm.heading_overshoot_deg = worst;
            lm.depth_rmse = std::sqrt(sq / static_cast<double>(count));
            lm.heading_settle_s = last_unsettled >= t1 - 1e-9 ? -1.0 : last_unsettled - t0;
        }
        m.legs.push_back(lm);
    }

    // Navigation error against truth.
    const auto& nx = tel.col("nav_x");
    const auto& ny = tel.col("nav_y");
    double sq = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double e = std::hypot(nx[k] - x[k], ny[k] - y[k]);
        sq += e * e;
        m.nav_max_error = std::max(m.nav_max_error, e);
        m.nav_final_error = e;
    }
    m.nav_rmse = std::sqrt(sq / static_cast<double>(n));

    for (std::size_t k = 0; k < n; ++k)
        if (m.mode_sequence.empty() || m.mode_sequence.back() != tel.mode[k])
            m.mode_sequence.push_back(tel.mode[k]);
    return m;
}

// --- JSON -----------------------------------------------------------------------------------

namespace {

json side_json(const SideSummary& s)
{
    return json{{"turns", s.turns}, {"radius", s.radius}, {"peak_rate", s.peak_rate}, {"mean_rate", s.mean_rate}};
}

SideSummary side_from(const json& j)
{
    SideSummary s;
    s.turns = j.at("turns").get<int>();
    s.radius = j.at("radius").get<double>();
    s.peak_rate = j.at("peak_rate").get<double>();
    s.mean_rate = j.at("mean_rate").get<double>();
    return s;
}

} // namespace

std::string metrics_json(const RunMetrics& m)
{
    json j;
    j["schema"] = kMetricsSchema;
    j["mission"] = m.mission;
    j["duration"] = m.duration;
    j["summary"] = side_json(m.all);
    j["port"] = side_json(m.port);
    j["starboard"] = side_json(m.starboard);
    json turns = json::array();
    for (const auto& t : m.turns)
        turns.push_back({{"index", t.index},
                         {"direction", t.direction},
                         {"t_start", t.t_start},
                         {"t_end", t.t_end},
                         {"heading_change_deg", t.heading_change_deg},
                         {"radius", t.radius},
                         {"center_x", t.cx},
                         {"center_y", t.cy},
                         {"mean_rate", t.mean_rate_deg_s},
                         {"peak_rate", t.peak_rate_deg_s},
                         {"speed", t.speed},
                         {"fin_deployed", t.fin_deployed}});
    j["turns"] = turns;
    json legs = json::array();
    for (const auto& l : m.legs)
        legs.push_back({{"leg", l.leg},
                        {"t_start", l.t_start},
                        {"t_end", l.t_end},
                        {"heading_settle_s", l.heading_settle_s},
                        {"heading_overshoot_deg", l.heading_overshoot_deg},
                        {"depth_rmse", l.depth_rmse}});
    j["legs"] = legs;
    j["nav"] = {{"rmse", m.nav_rmse}, {"max_error", m.nav_max_error}, {"final_error", m.nav_final_error}};
    j["mode_sequence"] = m.mode_sequence;
    return j.dump(2) + "\n";
}

RunMetrics metrics_from_json(const std::string& text)
{
    RunMetrics m;
    try {
        const json j = json::parse(text);
        if (j.at("schema").get<std::string>() != kMetricsSchema)
            throw ConfigError("unsupported metrics schema");
        m.mission = j.at("mission").get<std::string>();
        m.duration = j.at("duration").get<double>();
        m.all = side_from(j.at("summary"));
        m.port = side_from(j.at("port"));
        m.starboard = side_from(j.at("starboard"));
        for (const auto& t : j.at("turns")) {
            TurnMetrics tm;
            tm.index = t.at("index").get<int>();
            tm.direction = t.at("direction").get<std::string>();
            tm.t_start = t.at("t_start").get<double>();
            tm.t_end = t.at("t_end").get<double>();
            tm.heading_change_deg = t.at("heading_change_deg").get<double>();
            tm.radius = t.at("radius").get<double>();
            tm.cx = t.at("center_x").get<double>();
            tm.cy = t.at("center_y").get<double>();
            tm.mean_rate_deg_s = t.at("mean_rate").get<double>();
            tm.peak_rate_deg_s = t.at("peak_rate").get<double>();
            tm.speed = t.at("speed").get<double>();
            tm.fin_deployed = t.at("fin_deployed").get<double>();
            m.turns.push_back(tm);
        }
        for (const auto& l : j.at("legs")) {
            LegMetrics lm;
            lm.leg = l.at("leg").get<int>();
            lm.t_start = l.at("t_start").get<double>();
            lm.t_end = l.at("t_end").get<double>();
            lm.heading_settle_s = l.at("heading_settle_s").get<double>();
            lm.heading_overshoot_deg = l.at("heading_overshoot_deg").get<double>();
            lm.depth_rmse = l.at("depth_rmse").get<double>();
            m.legs.push_back(lm);
        }
        m.nav_rmse = j.at("nav").at("rmse").get<double>();
        m.nav_max_error = j.at("nav").at("max_error").get<double>();
        m.nav_final_error = j.at("nav").at("final_error").get<double>();
        m.mode_sequence = j.at("mode_sequence").get<std::vector<std::string>>();
    }
    catch (const json::exception& e) {
        throw ConfigError(std::string("bad metrics JSON: ") + e.what());
    }
    return m;
}

// --- Comparison ------------------------------------------------------------------------------

Comparison compare(const RunMetrics& a, const RunMetrics& b)
{
    if (a.mission != b.mission)
        throw ConfigError("runs used different missions ('" + a.mission + "' vs '" + b.mission + "')");
    Comparison c;
    auto add = [&](const std::string& name, double va, double vb) {
        ComparisonRow row{name, va, vb, 0.0};
        if (va != 0.0)
            row.delta_pct = (vb - va) / std::abs(va) * 100.0;
        else if (vb != 0.0)
            row.delta_pct = std::nan("");
        c.rows.push_back(row);
    };
    add("turns", a.all.turns, b.all.turns);
    add("radius_m", a.all.radius, b.all.radius);
    add("peak_rate_deg_s", a.all.peak_rate, b.all.peak_rate);
    add("mean_rate_deg_s", a.all.mean_rate, b.all.mean_rate);
    add("port_radius_m", a.port.radius, b.port.radius);
    add("port_peak_rate_deg_s", a.port.peak_rate, b.port.peak_rate);
    add("starboard_radius_m", a.starboard.radius, b.starboard.radius);
    add("starboard_peak_rate_deg_s", a.starboard.peak_rate, b.starboard.peak_rate);
    add("nav_rmse_m", a.nav_rmse, b.nav_rmse);
    c.turn_rate_improvement_pct = a.all.peak_rate != 0.0 ? (b.all.peak_rate / a.all.peak_rate - 1.0) * 100.0 : 0.0;
    c.radius_reduction_pct = a.all.radius != 0.0 ? (1.0 - b.all.radius / a.all.radius) * 100.0 : 0.0;
    return c;
}

std::string comparison_json(const Comparison& c)
{
    json j;
    j["schema"] = "mauv-compare/1";
    json rows = json::array();
    for (const auto& r : c.rows) {
        json row{{"metric", r.metric}, {"a", r.a}, {"b", r.b}};
        if (std::isfinite(r.delta_pct))
            row["delta_pct"] = r.delta_pct;
        else
            row["delta_pct"] = nullptr;
        rows.push_back(row);
    }
    j["metrics"] = rows;
    j["turn_rate_improvement_pct"] = c.turn_rate_improvement_pct;
    j["radius_reduction_pct"] = c.radius_reduction_pct;
    return j.dump(2) + "\n";
}

std::string comparison_table(const Comparison& c, const std::string& label_a, const std::string& label_b)
{
    std::ostringstream out;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-28s %12s %12s %10s\n", "metric", label_a.c_str(), label_b.c_str(), "delta %");
    out << buf;
    for (const auto& r : c.rows) {
        std::snprintf(buf, sizeof(buf), "%-28s %12.4f %12.4f %10.2f\n", r.metric.c_str(), r.a, r.b, r.delta_pct);
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "turn-rate improvement: %.2f %%   radius reduction: %.2f %%\n",
                  c.turn_rate_improvement_pct, c.radius_reduction_pct);
    out << buf;
    return out.str();
}

} // namespace mauv::harness
