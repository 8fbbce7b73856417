#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

#include "isf/routing.hpp"

namespace isf::net {

/// Owning file descriptor for a TCP socket.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) noexcept : fd_(fd) {}
  ~Socket() { reset(); }

  Socket(Socket&& o) noexcept : fd_(o.release()) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) reset(o.release());
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }
  int release() noexcept {
    int fd = fd_;
    fd_ = -1;
    return fd;
  }
  void reset(int fd = -1) noexcept;
  /// shutdown(2) both directions; wakes a thread blocked in recv.
  void shutdown() noexcept;

 private:
  int fd_ = -1;
};

class Timeout : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Single connect attempt bounded by `timeout`. Throws std::system_error on
/// refusal and net::Timeout when the deadline passes.
Socket connect_tcp(const HostPort& addr, std::chrono::milliseconds timeout);

/// Binds and listens. Port 0 picks an ephemeral port; see local_port().
Socket listen_tcp(const HostPort& addr, int backlog = 512);
std::uint16_t local_port(const Socket& s);

/// Per-call send/recv deadline (SO_SNDTIMEO / SO_RCVTIMEO); 0 disables.
void set_io_timeout(const Socket& s, std::chrono::milliseconds timeout);
void set_nodelay(const Socket& s);

/// Writes every byte or throws (net::Timeout on SO_SNDTIMEO expiry).
void send_all(const Socket& s, std::span<const std::uint8_t> data);
/// Returns bytes read, 0 on orderly EOF. Throws on error/timeout.
std::size_t recv_some(const Socket& s, std::span<std::uint8_t> buf);

}  // namespace isf::net
