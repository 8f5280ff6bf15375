#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "mauv/gateway.hpp"

namespace mauv::gateway {

namespace {

bool send_all(int fd, const std::uint8_t* data, std::size_t n)
{
    while (n > 0) {
        const ssize_t k = ::send(fd, data, n, MSG_NOSIGNAL);
        if (k < 0) {
            if (errno == EINTR)
                continue;
            return false;
        }
        data += k;
        n -= static_cast<std::size_t>(k);
    }
    return true;
}

void set_nodelay(int fd)
{
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

std::string errno_text(const char* what)
{
    return std::string(what) + ": " + std::strerror(errno);
}

} // namespace

struct GatewayServer::Connection {
    int fd = -1;
    std::shared_ptr<Subscriber> sub;
    std::thread reader;
    std::thread writer;
    std::atomic<int> finished{0};
};

GatewayServer::GatewayServer(Bus& bus, std::uint16_t port, std::string bind_address)
    : bus_(bus), port_(port), address_(std::move(bind_address))
{
}

GatewayServer::~GatewayServer()
{
    stop();
}

void GatewayServer::start()
{
    if (running_)
        return;
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0)
        throw GatewayError(errno_text("socket"));
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port_);
    if (::inet_pton(AF_INET, address_.c_str(), &addr.sin_addr) != 1) {
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw GatewayError("invalid bind address '" + address_ + "'");
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0 || ::listen(listen_fd_, 16) < 0) {
        const std::string msg = errno_text("bind");
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw GatewayError(msg);
    }
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);

    running_ = true;
    acceptor_ = std::thread([this] { accept_loop(); });
}

void GatewayServer::stop()
{
    if (!running_.exchange(false))
        return;
    if (acceptor_.joinable())
        acceptor_.join();
    ::close(listen_fd_);
    listen_fd_ = -1;

    std::list<std::shared_ptr<Connection>> conns;
    {
        std::lock_guard lk(m_);
        conns.swap(conns_);
    }
    for (auto& c : conns) {
        ::shutdown(c->fd, SHUT_RDWR);
        bus_.unsubscribe(c->sub);
        if (c->reader.joinable())
            c->reader.join();
        if (c->writer.joinable())
            c->writer.join();
        ::close(c->fd);
    }
}

std::size_t GatewayServer::client_count() const
{
    std::lock_guard lk(m_);
    std::size_t n = 0;
    for (const auto& c : conns_)
        if (c->finished < 2)
            ++n;
    return n;
}

void GatewayServer::reap()
{
    std::lock_guard lk(m_);
    for (auto it = conns_.begin(); it != conns_.end();) {
        if ((*it)->finished == 2) {
            (*it)->reader.join();
            (*it)->writer.join();
            ::close((*it)->fd);
            it = conns_.erase(it);
        }
        else {
            ++it;
        }
    }
}

void GatewayServer::accept_loop()
{
    while (running_) {
        pollfd pfd{listen_fd_, POLLIN, 0};
        const int ready = ::poll(&pfd, 1, 50);
        reap();
        if (ready <= 0 || !(pfd.revents & POLLIN))
            continue;
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0)
            continue;
        set_nodelay(fd);
        auto c = std::make_shared<Connection>();
        c->fd = fd;
        c->sub = bus_.subscribe({}, kClientBacklog);
        {
            std::lock_guard lk(m_);
            conns_.push_back(c);
        }
        c->reader = std::thread([this, c] { reader_loop(c); });
        c->writer = std::thread([this, c] { writer_loop(c); });
    }
}

void GatewayServer::reader_loop(const std::shared_ptr<Connection>& c)
{
    FrameDecoder decoder;
    std::uint8_t buf[8192];
    for (;;) {
        const ssize_t n = ::recv(c->fd, buf, sizeof(buf), 0);
        if (n < 0 && errno == EINTR)
            continue;
        if (n <= 0)
            break;
        decoder.feed(std::span<const std::uint8_t>(buf, static_cast<std::size_t>(n)));
        while (auto msg = decoder.next()) {
            const auto* pattern = std::get_if<std::string>(&msg->value);
            if (msg->key == kSubscribeKey && pattern)
                c->sub->add_pattern(*pattern);
            else if (msg->key == kUnsubscribeKey && pattern)
                c->sub->remove_pattern(*pattern);
            else
                bus_.publish(*msg, c->sub->id());
        }
        if (decoder.failed())
            break;
    }
    ::shutdown(c->fd, SHUT_RDWR);
    bus_.unsubscribe(c->sub);
    ++c->finished;
}

void GatewayServer::writer_loop(const std::shared_ptr<Connection>& c)
{
    for (;;) {
        if (c->sub->overflowed()) {
            ++dropped_;
            break;
        }
        auto msg = c->sub->queue().pop_for(std::chrono::milliseconds(50));
        if (!msg) {
            if (c->sub->queue().closed())
                break;
            continue;
        }
        const Bytes frame = encode(*msg);
        if (!send_all(c->fd, frame.data(), frame.size()))
            break;
    }
    ::shutdown(c->fd, SHUT_RDWR);
    ++c->finished;
}

// --- Client ---------------------------------------------------------------------------

GatewayClient::GatewayClient(const std::string& host, std::uint16_t port, std::string source)
    : source_(std::move(source))
{
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string service = std::to_string(port);
    if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0)
        throw GatewayError("resolve " + host + ": " + ::gai_strerror(rc));
    for (addrinfo* a = res; a; a = a->ai_next) {
        const int fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
        if (fd < 0)
            continue;
        if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) {
            fd_ = fd;
            break;
        }
        ::close(fd);
    }
    ::freeaddrinfo(res);
    if (fd_ < 0)
        throw GatewayError("cannot connect to " + host + ":" + service);
    set_nodelay(fd_);
}

GatewayClient::~GatewayClient()
{
    close();
}

void GatewayClient::close()
{
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_RDWR);
        ::close(fd_);
        fd_ = -1;
    }
}

void GatewayClient::send_raw(std::span<const std::uint8_t> bytes)
{
    std::lock_guard lk(send_m_);
    if (fd_ < 0 || !send_all(fd_, bytes.data(), bytes.size()))
        throw GatewayError("send failed");
}

void GatewayClient::publish(const WireMessage& msg)
{
    const Bytes frame = encode(msg);
    send_raw(frame);
}

void GatewayClient::publish(std::string key, Value value, double timestamp)
{
    publish(WireMessage{timestamp, std::move(key), std::move(value), source_});
}

void GatewayClient::subscribe(const std::string& pattern)
{
    publish(std::string(kSubscribeKey), pattern, 0.0);
}

void GatewayClient::unsubscribe(const std::string& pattern)
{
    publish(std::string(kUnsubscribeKey), pattern, 0.0);
}

std::optional<WireMessage> GatewayClient::receive(std::chrono::milliseconds timeout)
{
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        if (auto msg = decoder_.next())
            return msg;
        if (decoder_.failed())
            throw GatewayError("malformed frame from server: " + decoder_.error());
        if (fd_ < 0)
            return std::nullopt;
        const auto left =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0)
            return std::nullopt;
        pollfd pfd{fd_, POLLIN, 0};
        const int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
        if (ready <= 0)
            continue;
        std::uint8_t buf[8192];
        const ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
        if (n < 0 && errno == EINTR)
            continue;
        if (n <= 0) {
            close();
            continue;
        }
        decoder_.feed(std::span<const std::uint8_t>(buf, static_cast<std::size_t>(n)));
    }
}

} // namespace mauv::gateway
