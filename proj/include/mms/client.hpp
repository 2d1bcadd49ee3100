#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "mms/net.hpp"
#include "mms/trace.hpp"
#include "mms/transport.hpp"

namespace mms {

/// Blocking TCP driver for a ClientSession. Single owner.
class TcpClient {
 public:
  TcpClient(std::string client_id, const std::string& host, std::uint16_t port, FrameTracer* tracer = nullptr);

  transport::ClientSession& session() { return session_; }

  /// Writes every frame the session has queued (acks first).
  void flush();

  /// Reads whatever arrives within timeout_ms, feeds it to the session and
  /// flushes the resulting acks. Returns the events produced.
  std::vector<transport::AppEvent> poll(int timeout_ms);

  /// Flushes, then reads until `txn` resolves. Other events are kept for
  /// take_events(). Throws NetError on timeout or close.
  transport::SendResolved await(std::uint32_t txn, int timeout_ms);

  /// REGISTER and wait for its status.
  transport::SendResolved register_client(int timeout_ms);

  /// Events seen by await() that were not the awaited status.
  std::vector<transport::AppEvent> take_events();

  void close() { sock_.close(); }

 private:
  std::vector<transport::AppEvent> read_once(int timeout_ms);
  std::int64_t now() const;

  transport::ClientSession session_;
  net::Socket sock_;
  std::string peer_;
  FrameTracer* tracer_;
  transport::FrameReader reader_;
  std::deque<transport::AppEvent> backlog_;
};

}  // namespace mms
