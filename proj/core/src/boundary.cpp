#include <cmath>

#include "mauv/angles.hpp"
#include "mauv/gateway.hpp"

namespace mauv::gateway {

namespace {

WireMessage make(std::string_view key, double t, double v, const std::string& source)
{
    return WireMessage{t, std::string(key), v, source};
}

} // namespace

std::vector<WireMessage> sensor_messages(const Measurement& m, const std::string& source)
{
    std::vector<WireMessage> out;
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, DepthMeas>) {
                out.push_back(make(keys::depth, v.t, v.z, source));
            }
            else if constexpr (std::is_same_v<T, ImuMeas>) {
                out.push_back(make(keys::imu_phi, v.t, v.phi, source));
                out.push_back(make(keys::imu_theta, v.t, v.theta, source));
                out.push_back(make(keys::imu_psi, v.t, v.psi, source));
                out.push_back(make(keys::imu_p, v.t, v.p, source));
                out.push_back(make(keys::imu_q, v.t, v.q, source));
                out.push_back(make(keys::imu_r, v.t, v.r, source));
            }
            else if constexpr (std::is_same_v<T, GpsFix>) {
                out.push_back(make(keys::gps_x, v.t, v.x, source));
                out.push_back(make(keys::gps_y, v.t, v.y, source));
            }
            else if constexpr (std::is_same_v<T, LblFix>) {
                out.push_back(make(keys::lbl_x, v.t_rx, v.x, source));
                out.push_back(make(keys::lbl_y, v.t_rx, v.y, source));
                out.push_back(make(keys::lbl_tn, v.t_rx, v.t_n, source));
            }
            else if constexpr (std::is_same_v<T, DvlMeas>) {
                out.push_back(make(keys::dvl_vx, v.t, v.vx, source));
                out.push_back(make(keys::dvl_vy, v.t, v.vy, source));
                out.push_back(make(keys::dvl_vz, v.t, v.vz, source));
            }
            else {
                out.push_back(make(keys::rpm, v.t, v.rpm, source));
            }
        },
        m);
    return out;
}

bool SensorTranslator::collect(Group& g, const WireMessage& msg, std::size_t needed)
{
    if (!g.fields.empty() && g.t != msg.timestamp) {
        ++incomplete_;
        g.fields.clear();
    }
    g.t = msg.timestamp;
    g.fields[msg.key] = std::get<double>(msg.value);
    return g.fields.size() >= needed;
}

std::optional<Measurement> SensorTranslator::accept(const WireMessage& msg)
{
    const std::string_view key = msg.key;
    if (key.substr(0, 7) != "SENSOR_") {
        ++unknown_;
        return std::nullopt;
    }
    const auto* value = std::get_if<double>(&msg.value);
    if (!value || !std::isfinite(msg.timestamp)) {
        ++malformed_;
        return std::nullopt;
    }
    const double t = msg.timestamp;

    if (key == keys::depth)
        return DepthMeas{*value, t};
    if (key == keys::rpm)
        return RpmMeas{*value, t};

    auto take = [](Group& g, std::string_view k) {
        const auto it = g.fields.find(k);
        return it->second;
    };

    if (key == keys::imu_phi || key == keys::imu_theta || key == keys::imu_psi || key == keys::imu_p ||
        key == keys::imu_q || key == keys::imu_r) {
        if (!collect(imu_, msg, 6))
            return std::nullopt;
        ImuMeas m{take(imu_, keys::imu_phi), take(imu_, keys::imu_theta), take(imu_, keys::imu_psi),
                  take(imu_, keys::imu_p),   take(imu_, keys::imu_q),     take(imu_, keys::imu_r),
                  t};
        imu_.fields.clear();
        return m;
    }
    if (key == keys::gps_x || key == keys::gps_y) {
        if (!collect(gps_, msg, 2))
            return std::nullopt;
        GpsFix m{take(gps_, keys::gps_x), take(gps_, keys::gps_y), t};
        gps_.fields.clear();
        return m;
    }
    if (key == keys::lbl_x || key == keys::lbl_y || key == keys::lbl_tn) {
        if (!collect(lbl_, msg, 3))
            return std::nullopt;
        LblFix m{take(lbl_, keys::lbl_x), take(lbl_, keys::lbl_y), take(lbl_, keys::lbl_tn), t};
        lbl_.fields.clear();
        return m;
    }
    if (key == keys::dvl_vx || key == keys::dvl_vy || key == keys::dvl_vz) {
        if (!collect(dvl_, msg, 3))
            return std::nullopt;
        DvlMeas m{take(dvl_, keys::dvl_vx), take(dvl_, keys::dvl_vy), take(dvl_, keys::dvl_vz), t, dvl_frame_};
        dvl_.fields.clear();
        return m;
    }
    ++unknown_;
    return std::nullopt;
}

std::vector<WireMessage> nav_messages(const nav::NavSolution& sol, nav::NavStatus status, const std::string& source)
{
    return {
        make(keys::nav_x, sol.t, sol.x, source),
        make(keys::nav_y, sol.t, sol.y, source),
        make(keys::nav_depth, sol.t, sol.z, source),
        make(keys::nav_heading, sol.t, wrap_360(rad2deg(sol.psi)), source),
        make(keys::nav_speed, sol.t, sol.speed(), source),
        WireMessage{sol.t, std::string(keys::nav_status), nav::to_string(status), source},
    };
}

HydromanBridge::HydromanBridge(Bus& bus, nav::NavigationEngine& engine, DvlFrame dvl_frame)
    : bus_(bus), engine_(engine), inbox_(bus.subscribe({"SENSOR_*"})), translator_(dvl_frame)
{
}

HydromanBridge::~HydromanBridge()
{
    bus_.unsubscribe(inbox_);
}

int HydromanBridge::pump()
{
    int pushed = 0;
    while (auto msg = inbox_->queue().try_pop()) {
        ++messages_in_;
        if (auto m = translator_.accept(*msg))
            pushed += engine_.push(*m) ? 1 : 0;
    }
    return pushed;
}

int HydromanBridge::pump_until(std::size_t count, std::chrono::milliseconds timeout)
{
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    int pushed = 0;
    while (messages_in_ < count) {
        const auto left =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0)
            break;
        auto msg = inbox_->queue().pop_for(left);
        if (!msg)
            break;
        ++messages_in_;
        if (auto m = translator_.accept(*msg))
            pushed += engine_.push(*m) ? 1 : 0;
    }
    return pushed + pump();
}

nav::NavSolution HydromanBridge::tick(double t, double dt)
{
    nav::NavSolution sol = engine_.tick(t, dt);
    for (const auto& msg : nav_messages(sol, engine_.status()))
        bus_.publish(msg, inbox_->id());
    return sol;
}

std::optional<helm::PayloadCommand> payload_command(const WireMessage& msg)
{
    const auto* v = std::get_if<double>(&msg.value);
    if (!v)
        return std::nullopt;
    helm::PayloadCommand cmd;
    cmd.t = msg.timestamp;
    if (msg.key == keys::desired_heading)
        cmd.heading = *v;
    else if (msg.key == keys::desired_speed)
        cmd.speed = *v;
    else if (msg.key == keys::desired_depth)
        cmd.depth = *v;
    else
        return std::nullopt;
    return cmd;
}

PayloadBridge::PayloadBridge(Bus& bus, helm::PayloadIngest& ingest)
    : bus_(bus), ingest_(ingest), inbox_(bus.subscribe({"DESIRED_*"}))
{
}

PayloadBridge::~PayloadBridge()
{
    bus_.unsubscribe(inbox_);
}

int PayloadBridge::pump()
{
    int accepted = 0;
    while (auto msg = inbox_->queue().try_pop()) {
        const auto cmd = payload_command(*msg);
        if (!cmd) {
            ++ignored_;
            continue;
        }
        accepted += ingest_.push(*cmd) ? 1 : 0;
    }
    return accepted;
}

} // namespace mauv::gateway
