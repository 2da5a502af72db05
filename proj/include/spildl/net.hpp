#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>

#include "spildl/wire.hpp"

namespace spildl {

/// Socket-level failure (connect, send, receive, timeout, peer closed).
class NetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Millis = std::chrono::milliseconds;

/// Owning POSIX socket descriptor.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Socket& operator=(Socket&& o) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() { close(); }

    int fd() const noexcept { return fd_; }
    bool valid() const noexcept { return fd_ >= 0; }
    void close() noexcept;
    /// Stops pending and future I/O from other threads without releasing the fd.
    void shutdown() noexcept;

private:
    int fd_ = -1;
};

struct Endpoint {
    std::string host;
    std::uint16_t port = 0;
    auto operator<=>(const Endpoint&) const = default;
    std::string str() const { return host + ":" + std::to_string(port); }
};

/// Listening TCP socket on all interfaces; port 0 picks a free port.
Socket tcp_listen(std::uint16_t port, std::uint16_t& bound_port);
/// Waits up to `timeout` for a connection. Empty on timeout.
std::optional<Socket> tcp_accept(const Socket& listener, Millis timeout, Endpoint* peer = nullptr);
Socket tcp_connect(const Endpoint& ep, Millis timeout);

/// True once the socket has data (or EOF) to read.
bool wait_readable(const Socket& s, Millis timeout);

void send_all(const Socket& s, std::span<const std::uint8_t> data);
/// Throws NetError on timeout or peer close.
void recv_exact(const Socket& s, std::span<std::uint8_t> out, Millis timeout);

void send_message(const Socket& s, const WireMessage& m);
WireMessage recv_message(const Socket& s, Millis timeout);

/// UDP socket bound to `port` on all interfaces with address reuse, so
/// several listeners on one host all receive broadcasts.
Socket udp_bind(std::uint16_t port, std::uint16_t& bound_port);
void udp_send(const Socket& s, const Endpoint& to, std::span<const std::uint8_t> data, bool broadcast);
/// Empty on timeout.
std::optional<Bytes> udp_recv(const Socket& s, Millis timeout, Endpoint* from = nullptr);

}  // namespace spildl
