#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mms::net {

class NetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Owning TCP socket descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& other) noexcept : fd_(other.release()) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }
  int release();
  void close();
  /// Wakes up any thread blocked on this socket.
  void shutdown();

  /// Throws NetError on failure.
  void send_all(std::string_view data);
  /// Bytes read, 0 on orderly close. Throws NetError on failure.
  std::size_t recv_some(char* buf, std::size_t len);
  /// Waits up to timeout_ms for readability; false on timeout.
  bool wait_readable(int timeout_ms);

 private:
  int fd_ = -1;
};

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;
};

/// "host:port". Throws std::invalid_argument.
Endpoint parse_endpoint(std::string_view text);

Socket connect_tcp(const std::string& host, std::uint16_t port);

class Listener {
 public:
  /// Port 0 binds an ephemeral port.
  Listener(const std::string& host, std::uint16_t port);
  std::uint16_t port() const { return port_; }
  /// nullopt once shut down.
  std::optional<Socket> accept(Endpoint* peer = nullptr);
  void shutdown() { sock_.shutdown(); }

 private:
  Socket sock_;
  std::uint16_t port_ = 0;
};

}  // namespace mms::net
