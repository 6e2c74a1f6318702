#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <optional>
#include <string>

#include "facekit/errors.hpp"

namespace facekit::net {

// Owning socket fd.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    ~Socket() { close_fd(); }

    Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
    Socket& operator=(Socket&& o) noexcept {
        if (this != &o) {
            close_fd();
            fd_ = o.fd_;
            o.fd_ = -1;
        }
        return *this;
    }
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;

    int fd() const { return fd_; }
    bool valid() const { return fd_ >= 0; }

    void close_fd() {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

    // stops further reads on the peer thread without closing the fd
    void shutdown_read() {
        if (fd_ >= 0) ::shutdown(fd_, SHUT_RD);
    }
    void shutdown_both() {
        if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
    }

private:
    int fd_ = -1;
};

inline Socket listen_on(const std::string& host, int port, int backlog = 64) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw ConnectionError(std::string("socket: ") + std::strerror(errno));
    Socket sock(fd);
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
        throw ConnectionError("listen: bad address '" + host + "'");
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
        throw ConnectionError("bind " + host + ":" + std::to_string(port) + ": " +
                              std::strerror(errno));
    if (::listen(fd, backlog) != 0)
        throw ConnectionError(std::string("listen: ") + std::strerror(errno));
    return sock;
}

inline int bound_port(const Socket& sock) {
    sockaddr_in addr{};
    socklen_t len = sizeof(addr);
    if (::getsockname(sock.fd(), reinterpret_cast<sockaddr*>(&addr), &len) != 0)
        throw ConnectionError(std::string("getsockname: ") + std::strerror(errno));
    return ntohs(addr.sin_port);
}

inline Socket tcp_connect(const std::string& host, int port) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw ConnectionError(std::string("socket: ") + std::strerror(errno));
    Socket sock(fd);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
        throw ConnectionError("connect: bad address '" + host + "'");
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
        throw ConnectionError("connect " + host + ":" + std::to_string(port) + ": " +
                              std::strerror(errno));
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return sock;
}

inline bool send_all(int fd, std::string_view data) {
    std::size_t sent = 0;
    while (sent < data.size()) {
        const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
        if (n <= 0) {
            if (n < 0 && errno == EINTR) continue;
            return false;
        }
        sent += static_cast<std::size_t>(n);
    }
    return true;
}

inline bool send_line(int fd, std::string line) {
    line.push_back('\n');
    return send_all(fd, line);
}

// Buffered newline framing over a blocking socket.
class LineReader {
public:
    explicit LineReader(int fd, std::size_t max_line = 32u << 20) : fd_(fd), max_line_(max_line) {}

    // nullopt on EOF / peer close. Throws ProtocolError when a line exceeds
    // the size limit.
    std::optional<std::string> read_line() {
        while (true) {
            const auto nl = buf_.find('\n');
            if (nl != std::string::npos) {
                std::string line = buf_.substr(0, nl);
                buf_.erase(0, nl + 1);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                return line;
            }
            if (buf_.size() > max_line_) throw ProtocolError("line exceeds size limit");
            char chunk[16384];
            const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
            if (n == 0) return std::nullopt;
            if (n < 0) {
                if (errno == EINTR) continue;
                return std::nullopt;
            }
            buf_.append(chunk, static_cast<std::size_t>(n));
        }
    }

private:
    int fd_;
    std::size_t max_line_;
    std::string buf_;
};

// "host:port" -> (host, port)
inline std::pair<std::string, int> parse_address(const std::string& addr) {
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos || colon + 1 >= addr.size())
        throw ConnectionError("address must look like host:port, got '" + addr + "'");
    const std::string host = addr.substr(0, colon);
    int port = 0;
    try {
        port = std::stoi(addr.substr(colon + 1));
    } catch (const std::exception&) {
        throw ConnectionError("bad port in address '" + addr + "'");
    }
    if (port < 0 || port > 65535) throw ConnectionError("port out of range in '" + addr + "'");
    return {host.empty() ? "127.0.0.1" : host, port};
}

}  // namespace facekit::net
