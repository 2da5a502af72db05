#include "spildl/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace spildl {

namespace {

using Clock = std::chrono::steady_clock;

[[noreturn]] void fail(const std::string& what) { throw NetError(what + ": " + std::strerror(errno)); }

int remaining_ms(Clock::time_point deadline) {
    const auto left = std::chrono::duration_cast<Millis>(deadline - Clock::now()).count();
    return left > 0 ? static_cast<int>(std::min<long long>(left, 1 << 30)) : 0;
}

// True if fd became ready for `events` before the deadline.
bool wait_ready(int fd, short events, Clock::time_point deadline) {
    while (true) {
        pollfd p{fd, events, 0};
        const int r = ::poll(&p, 1, remaining_ms(deadline));
        if (r > 0) return true;
        if (r == 0) return false;
        if (errno != EINTR) fail("poll");
    }
}

sockaddr_in resolve(const Endpoint& ep) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(ep.port);
    if (::inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) == 1) return addr;
    addrinfo hints{};
    hints.ai_family = AF_INET;
    addrinfo* res = nullptr;
    if (::getaddrinfo(ep.host.c_str(), nullptr, &hints, &res) != 0 || !res)
        throw NetError("cannot resolve host '" + ep.host + "'");
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    ::freeaddrinfo(res);
    return addr;
}

Endpoint to_endpoint(const sockaddr_in& addr) {
    char buf[INET_ADDRSTRLEN] = {};
    ::inet_ntop(AF_INET, &addr.sin_addr, buf, sizeof buf);
    return {buf, ntohs(addr.sin_port)};
}

std::uint16_t local_port(int fd) {
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    if (::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0) fail("getsockname");
    return ntohs(addr.sin_port);
}

void set_flag(int fd, int level, int opt) {
    const int one = 1;
    if (::setsockopt(fd, level, opt, &one, sizeof one) != 0) fail("setsockopt");
}

}  // namespace

Socket& Socket::operator=(Socket&& o) noexcept {
    if (this != &o) {
        close();
        fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
}

void Socket::close() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
}

void Socket::shutdown() noexcept {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

Socket tcp_listen(std::uint16_t port, std::uint16_t& bound_port) {
    Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!s.valid()) fail("socket");
    set_flag(s.fd(), SOL_SOCKET, SO_REUSEADDR);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
    addr.sin_port = htons(port);
    if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
        fail("bind tcp port " + std::to_string(port));
    if (::listen(s.fd(), 16) != 0) fail("listen");
    bound_port = local_port(s.fd());
    return s;
}

std::optional<Socket> tcp_accept(const Socket& listener, Millis timeout, Endpoint* peer) {
    if (!wait_ready(listener.fd(), POLLIN, Clock::now() + timeout)) return std::nullopt;
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    Socket s(::accept4(listener.fd(), reinterpret_cast<sockaddr*>(&addr), &len, SOCK_CLOEXEC));
    if (!s.valid()) {
        if (errno == EAGAIN || errno == EINTR || errno == ECONNABORTED) return std::nullopt;
        fail("accept");
    }
    set_flag(s.fd(), IPPROTO_TCP, TCP_NODELAY);
    if (peer) *peer = to_endpoint(addr);
    return s;
}

Socket tcp_connect(const Endpoint& ep, Millis timeout) {
    const auto addr = resolve(ep);
    Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC | SOCK_NONBLOCK, 0));
    if (!s.valid()) fail("socket");
    if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
        if (errno != EINPROGRESS) fail("connect to " + ep.str());
        if (!wait_ready(s.fd(), POLLOUT, Clock::now() + timeout)) throw NetError("connect to " + ep.str() + " timed out");
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
        if (err != 0) {
            errno = err;
            fail("connect to " + ep.str());
        }
    }
    const int flags = ::fcntl(s.fd(), F_GETFL);
    ::fcntl(s.fd(), F_SETFL, flags & ~O_NONBLOCK);
    set_flag(s.fd(), IPPROTO_TCP, TCP_NODELAY);
    return s;
}

bool wait_readable(const Socket& s, Millis timeout) { return wait_ready(s.fd(), POLLIN, Clock::now() + timeout); }

void send_all(const Socket& s, std::span<const std::uint8_t> data) {
    std::size_t off = 0;
    while (off < data.size()) {
        const auto n = ::send(s.fd(), data.data() + off, data.size() - off, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            fail("send");
        }
        off += static_cast<std::size_t>(n);
    }
}

void recv_exact(const Socket& s, std::span<std::uint8_t> out, Millis timeout) {
    const auto deadline = Clock::now() + timeout;
    std::size_t off = 0;
    while (off < out.size()) {
        if (!wait_ready(s.fd(), POLLIN, deadline)) throw NetError("receive timed out");
        const auto n = ::recv(s.fd(), out.data() + off, out.size() - off, 0);
        if (n == 0) throw NetError("connection closed by peer");
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            fail("recv");
        }
        off += static_cast<std::size_t>(n);
    }
}

void send_message(const Socket& s, const WireMessage& m) { send_all(s, encode_frame(m)); }

WireMessage recv_message(const Socket& s, Millis timeout) {
    Bytes frame(kFrameHeaderSize);
    recv_exact(s, frame, timeout);
    const auto len = frame_payload_length(std::span<const std::uint8_t, kFrameHeaderSize>(frame.data(), kFrameHeaderSize));
    frame.resize(kFrameHeaderSize + len + kFrameTrailerSize);
    recv_exact(s, std::span(frame).subspan(kFrameHeaderSize), timeout);
    return decode_frame(frame);
}

Socket udp_bind(std::uint16_t port, std::uint16_t& bound_port) {
    Socket s(::socket(AF_INET, SOCK_DGRAM | SOCK_CLOEXEC, 0));
    if (!s.valid()) fail("socket");
    set_flag(s.fd(), SOL_SOCKET, SO_REUSEADDR);
    set_flag(s.fd(), SOL_SOCKET, SO_BROADCAST);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
    addr.sin_port = htons(port);
    if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
        fail("bind udp port " + std::to_string(port));
    bound_port = local_port(s.fd());
    return s;
}

void udp_send(const Socket& s, const Endpoint& to, std::span<const std::uint8_t> data, bool broadcast) {
    if (broadcast) set_flag(s.fd(), SOL_SOCKET, SO_BROADCAST);
    const auto addr = resolve(to);
    if (::sendto(s.fd(), data.data(), data.size(), 0, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) < 0)
        fail("sendto " + to.str());
}

std::optional<Bytes> udp_recv(const Socket& s, Millis timeout, Endpoint* from) {
    if (!wait_ready(s.fd(), POLLIN, Clock::now() + timeout)) return std::nullopt;
    Bytes buf(2048);
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    const auto n = ::recvfrom(s.fd(), buf.data(), buf.size(), 0, reinterpret_cast<sockaddr*>(&addr), &len);
    if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) return std::nullopt;
        fail("recvfrom");
    }
    buf.resize(static_cast<std::size_t>(n));
    if (from) *from = to_endpoint(addr);
    return buf;
}

}  // namespace spildl
