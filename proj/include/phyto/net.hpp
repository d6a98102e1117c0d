#pragma once

// Minimal POSIX text-line sender for the message_to_ip actuator.

#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

namespace phyto::net {

enum class Transport { stream, datagram };

inline std::optional<Transport> parse_transport(std::string_view s) {
  if (s == "tcp" || s == "stream") return Transport::stream;
  if (s == "udp" || s == "datagram") return Transport::datagram;
  return std::nullopt;
}

class Socket {
 public:
  explicit Socket(int fd = -1) : fd_(fd) {}
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Socket() { reset(); }

  int fd() const { return fd_; }
  explicit operator bool() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_;
};

struct AddrInfoDeleter {
  void operator()(addrinfo* p) const { ::freeaddrinfo(p); }
};

/// Sends one line; returns an error description on failure.
inline std::optional<std::string> send_line(const std::string& host, int port, Transport transport,
                                            std::string_view line, int timeout_ms = 500) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = transport == Transport::stream ? SOCK_STREAM : SOCK_DGRAM;
  addrinfo* raw = nullptr;
  const std::string service = std::to_string(port);
  if (int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &raw); rc != 0) {
    return std::string("resolve ") + host + ": " + ::gai_strerror(rc);
  }
  std::unique_ptr<addrinfo, AddrInfoDeleter> addrs(raw);

  std::string last_error = "no usable address";
  for (addrinfo* a = addrs.get(); a; a = a->ai_next) {
    Socket s(::socket(a->ai_family, a->ai_socktype, a->ai_protocol));
    if (!s) {
      last_error = std::strerror(errno);
      continue;
    }
    if (transport == Transport::datagram) {
      const auto n = ::sendto(s.fd(), line.data(), line.size(), 0, a->ai_addr, a->ai_addrlen);
      if (n == static_cast<ssize_t>(line.size())) return std::nullopt;
      last_error = std::string("sendto: ") + std::strerror(errno);
      continue;
    }

    const int flags = ::fcntl(s.fd(), F_GETFL, 0);
    ::fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);
    if (::connect(s.fd(), a->ai_addr, a->ai_addrlen) != 0) {
      if (errno != EINPROGRESS) {
        last_error = std::string("connect: ") + std::strerror(errno);
        continue;
      }
      pollfd pfd{s.fd(), POLLOUT, 0};
      if (::poll(&pfd, 1, timeout_ms) != 1) {
        last_error = "connect: timed out";
        continue;
      }
      int err = 0;
      socklen_t len = sizeof err;
      ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
      if (err != 0) {
        last_error = std::string("connect: ") + std::strerror(err);
        continue;
      }
    }
    ::fcntl(s.fd(), F_SETFL, flags);
    std::size_t sent = 0;
    while (sent < line.size()) {
      const auto n = ::send(s.fd(), line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
      if (n <= 0) break;
      sent += static_cast<std::size_t>(n);
    }
    if (sent == line.size()) return std::nullopt;
    last_error = std::string("send: ") + std::strerror(errno);
  }
  return last_error;
}

}  // namespace phyto::net
