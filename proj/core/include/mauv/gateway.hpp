#pragma once

// Framed key/value messages over TCP, an in-process bus, and the adapters that
// connect the bus to the navigation engine and the payload-autonomy inputs.
//
// Frame layout (all integers big-endian):
//   u32 length of everything after this field
//   u8  version (1)
//   u8  value tag (1 double, 2 string, 3 binary)
//   f64 timestamp (IEEE-754)
//   u8  key length, key bytes
//   u16 source length, source bytes
//   u32 value length, value bytes

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include "mauv/helm.hpp"
#include "mauv/measurement.hpp"
#include "mauv/navigation.hpp"

namespace mauv::gateway {

using Bytes = std::vector<std::uint8_t>;
using Value = std::variant<double, std::string, Bytes>;

struct WireMessage {
    double timestamp = 0.0;
    std::string key;
    Value value;
    std::string source;

    bool operator==(const WireMessage&) const = default;
};

inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kMaxFrameBytes = 64 * 1024;
inline constexpr std::size_t kHeaderBytes = 4;

inline constexpr std::uint16_t kNavPort = 9001;
inline constexpr std::uint16_t kPayloadPort = 9002;

// Control keys understood by the server; the value is a key pattern.
inline constexpr std::string_view kSubscribeKey = "__SUBSCRIBE";
inline constexpr std::string_view kUnsubscribeKey = "__UNSUBSCRIBE";

class CodecError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

Bytes encode(const WireMessage& msg);

enum class DecodeStatus { ok, incomplete, error };

struct DecodeResult {
    DecodeStatus status = DecodeStatus::incomplete;
    WireMessage message;
    std::size_t consumed = 0;
    std::string error;
};

// Decodes the first frame in `data`. Never reads past the span.
DecodeResult decode_frame(std::span<const std::uint8_t> data);
// Strict form: `data` must hold exactly one well-formed frame.
WireMessage decode(std::span<const std::uint8_t> data);

// Incremental decoder for a byte stream; after an error it stays failed.
class FrameDecoder {
public:
    void feed(std::span<const std::uint8_t> data);
    std::optional<WireMessage> next();
    bool failed() const { return !error_.empty(); }
    const std::string& error() const { return error_; }
    std::size_t buffered() const { return buf_.size() - pos_; }

private:
    Bytes buf_;
    std::size_t pos_ = 0;
    std::string error_;
};

// "NAV_X" matches only itself; "NAV_*" matches any key starting with NAV_;
// "*" matches everything.
bool key_matches(std::string_view pattern, std::string_view key);

// --- In-process bus ------------------------------------------------------------------

template <typename T>
class BoundedQueue {
public:
    explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

    // False when full or closed.
    bool push(T v)
    {
        {
            std::lock_guard lk(m_);
            if (closed_ || q_.size() >= capacity_)
                return false;
            q_.push_back(std::move(v));
        }
        cv_.notify_one();
        return true;
    }

    std::optional<T> try_pop()
    {
        std::lock_guard lk(m_);
        if (q_.empty())
            return std::nullopt;
        T v = std::move(q_.front());
        q_.pop_front();
        return v;
    }

    std::optional<T> pop_for(std::chrono::milliseconds timeout)
    {
        std::unique_lock lk(m_);
        cv_.wait_for(lk, timeout, [&] { return closed_ || !q_.empty(); });
        if (q_.empty())
            return std::nullopt;
        T v = std::move(q_.front());
        q_.pop_front();
        return v;
    }

    void close()
    {
        {
            std::lock_guard lk(m_);
            closed_ = true;
        }
        cv_.notify_all();
    }

    bool closed() const
    {
        std::lock_guard lk(m_);
        return closed_;
    }

    std::size_t size() const
    {
        std::lock_guard lk(m_);
        return q_.size();
    }

private:
    mutable std::mutex m_;
    std::condition_variable cv_;
    std::deque<T> q_;
    std::size_t capacity_;
    bool closed_ = false;
};

inline constexpr std::size_t kClientBacklog = 1024;

class Subscriber {
public:
    Subscriber(std::uint64_t id, std::size_t capacity) : id_(id), queue_(capacity) {}

    void add_pattern(std::string p);
    void remove_pattern(const std::string& p);
    bool wants(std::string_view key) const;

    std::uint64_t id() const { return id_; }
    BoundedQueue<WireMessage>& queue() { return queue_; }
    bool overflowed() const { return overflowed_; }
    void mark_overflow() { overflowed_ = true; }

private:
    std::uint64_t id_;
    mutable std::mutex m_;
    std::vector<std::string> patterns_;
    BoundedQueue<WireMessage> queue_;
    std::atomic<bool> overflowed_{false};
};

class Bus {
public:
    std::shared_ptr<Subscriber> subscribe(std::vector<std::string> patterns, std::size_t capacity = 1 << 16);
    void unsubscribe(const std::shared_ptr<Subscriber>& s);

    // Delivers to every matching subscriber except the origin. A subscriber
    // whose queue is full is flagged as overflowed and loses the message.
    void publish(const WireMessage& msg, std::uint64_t origin = 0);

    std::uint64_t published() const { return published_; }

private:
    std::mutex m_;
    std::vector<std::shared_ptr<Subscriber>> subs_;
    std::uint64_t next_id_ = 1;
    std::atomic<std::uint64_t> published_{0};
};

// --- TCP ---------------------------------------------------------------------------------

class GatewayError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class GatewayServer {
public:
    // Port 0 binds an ephemeral port; see port().
    GatewayServer(Bus& bus, std::uint16_t port, std::string bind_address = "127.0.0.1");
    ~GatewayServer();
    GatewayServer(const GatewayServer&) = delete;
    GatewayServer& operator=(const GatewayServer&) = delete;

    void start();
    void stop();
    std::uint16_t port() const { return port_; }
    std::size_t client_count() const;
    std::uint64_t dropped_clients() const { return dropped_; }

private:
    struct Connection;
    void accept_loop();
    void reader_loop(const std::shared_ptr<Connection>& c);
    void writer_loop(const std::shared_ptr<Connection>& c);
    void reap();

    Bus& bus_;
    std::uint16_t port_;
    std::string address_;
    int listen_fd_ = -1;
    std::atomic<bool> running_{false};
    std::thread acceptor_;
    mutable std::mutex m_;
    std::list<std::shared_ptr<Connection>> conns_;
    std::atomic<std::uint64_t> dropped_{0};
};

class GatewayClient {
public:
    GatewayClient(const std::string& host, std::uint16_t port, std::string source = "client");
    ~GatewayClient();
    GatewayClient(const GatewayClient&) = delete;
    GatewayClient& operator=(const GatewayClient&) = delete;

    void publish(const WireMessage& msg);
    void publish(std::string key, Value value, double timestamp);
    void subscribe(const std::string& pattern);
    void unsubscribe(const std::string& pattern);
    // Raw bytes, for fault-injection tests.
    void send_raw(std::span<const std::uint8_t> bytes);

    std::optional<WireMessage> receive(std::chrono::milliseconds timeout);
    void close();
    bool connected() const { return fd_ >= 0; }

private:
    int fd_ = -1;
    std::string source_;
    std::mutex send_m_;
    FrameDecoder decoder_;
};

// --- Navigation boundary ---------------------------------------------------------------

namespace keys {
inline constexpr std::string_view depth = "SENSOR_DEPTH";
inline constexpr std::string_view imu_phi = "SENSOR_IMU_PHI";
inline constexpr std::string_view imu_theta = "SENSOR_IMU_THETA";
inline constexpr std::string_view imu_psi = "SENSOR_IMU_PSI";
inline constexpr std::string_view imu_p = "SENSOR_IMU_P";
inline constexpr std::string_view imu_q = "SENSOR_IMU_Q";
inline constexpr std::string_view imu_r = "SENSOR_IMU_R";
inline constexpr std::string_view gps_x = "SENSOR_GPS_X";
inline constexpr std::string_view gps_y = "SENSOR_GPS_Y";
inline constexpr std::string_view lbl_x = "SENSOR_LBL_X";
inline constexpr std::string_view lbl_y = "SENSOR_LBL_Y";
inline constexpr std::string_view lbl_tn = "SENSOR_LBL_TN";
inline constexpr std::string_view dvl_vx = "SENSOR_DVL_VX";
inline constexpr std::string_view dvl_vy = "SENSOR_DVL_VY";
inline constexpr std::string_view dvl_vz = "SENSOR_DVL_VZ";
inline constexpr std::string_view rpm = "SENSOR_RPM";

inline constexpr std::string_view nav_x = "NAV_X";
inline constexpr std::string_view nav_y = "NAV_Y";
inline constexpr std::string_view nav_depth = "NAV_DEPTH";
inline constexpr std::string_view nav_heading = "NAV_HEADING";
inline constexpr std::string_view nav_speed = "NAV_SPEED";
inline constexpr std::string_view nav_status = "NAV_STATUS";

inline constexpr std::string_view desired_heading = "DESIRED_HEADING";
inline constexpr std::string_view desired_speed = "DESIRED_SPEED";
inline constexpr std::string_view desired_depth = "DESIRED_DEPTH";
} // namespace keys

// Splits a measurement into its sensor messages (grouped fields share the
// timestamp; the group's last key completes it).
std::vector<WireMessage> sensor_messages(const Measurement& m, const std::string& source = "sim");

// Reassembles sensor messages into measurements.
class SensorTranslator {
public:
    explicit SensorTranslator(DvlFrame dvl_frame = DvlFrame::body) : dvl_frame_(dvl_frame) {}

    // Returns a measurement when this message completes one.
    std::optional<Measurement> accept(const WireMessage& msg);

    int unknown() const { return unknown_; }
    int malformed() const { return malformed_; }
    int incomplete_groups() const { return incomplete_; }

private:
    struct Group {
        double t = 0.0;
        std::map<std::string, double, std::less<>> fields;
    };
    bool collect(Group& g, const WireMessage& msg, std::size_t needed);

    DvlFrame dvl_frame_;
    Group imu_, gps_, lbl_, dvl_;
    int unknown_ = 0;
    int malformed_ = 0;
    int incomplete_ = 0;
};

std::vector<WireMessage> nav_messages(const nav::NavSolution& sol, nav::NavStatus status,
                                      const std::string& source = "hydroman");

// Drains sensor messages from the bus into a navigation engine and publishes
// the solution each tick.
class HydromanBridge {
public:
    HydromanBridge(Bus& bus, nav::NavigationEngine& engine, DvlFrame dvl_frame = DvlFrame::body);
    ~HydromanBridge();

    // Moves every queued sensor message into the engine; returns how many
    // measurements were pushed.
    int pump();
    // Optionally waits until `count` messages arrived (for transports with latency).
    int pump_until(std::size_t count, std::chrono::milliseconds timeout);
    nav::NavSolution tick(double t, double dt);

    const SensorTranslator& translator() const { return translator_; }
    std::uint64_t messages_in() const { return messages_in_; }

private:
    Bus& bus_;
    nav::NavigationEngine& engine_;
    std::shared_ptr<Subscriber> inbox_;
    SensorTranslator translator_;
    std::uint64_t messages_in_ = 0;
};

// --- Payload boundary -------------------------------------------------------------

std::optional<helm::PayloadCommand> payload_command(const WireMessage& msg);

class PayloadBridge {
public:
    PayloadBridge(Bus& bus, helm::PayloadIngest& ingest);
    ~PayloadBridge();

    // Feeds queued DESIRED_* messages to the ingest; returns accepted count.
    int pump();
    int ignored() const { return ignored_; }

private:
    Bus& bus_;
    helm::PayloadIngest& ingest_;
    std::shared_ptr<Subscriber> inbox_;
    int ignored_ = 0;
};

} // namespace mauv::gateway
