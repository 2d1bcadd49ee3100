#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "mms/journal.hpp"
#include "mms/net.hpp"
#include "mms/relay.hpp"
#include "mms/trace.hpp"

namespace mms::relay {

/// Milliseconds since the Unix epoch.
std::int64_t wall_clock_ms();

/// TCP front end of the Registry. One reader and one writer thread per
/// connection; every registry call runs under a single mutex.
class RelayServer {
 public:
  explicit RelayServer(ServerConfig config, FrameTracer* tracer = nullptr);
  ~RelayServer();
  RelayServer(const RelayServer&) = delete;
  RelayServer& operator=(const RelayServer&) = delete;

  /// Binds and starts serving. Returns the bound port (useful with port 0).
  std::uint16_t start();
  /// Closes the listener and all connections, joins every thread.
  void stop();
  /// Blocks until stop() is called from another thread.
  void wait();

  StatsCounters stats() const;
  std::string stats_json() const;
  std::size_t connection_count() const;

 private:
  struct Connection;

  void accept_loop();
  void reader_loop(const std::shared_ptr<Connection>& conn);
  void writer_loop(const std::shared_ptr<Connection>& conn);
  void housekeeping_loop();
  void handle_frame(const std::shared_ptr<Connection>& conn, const std::string& frame);
  void dispatch(const std::vector<Delivery>& deliveries);
  void enqueue(Connection& conn, const transport::Pdu& pdu);
  void reap(bool all);
  std::int64_t now() const { return wall_clock_ms(); }

  ServerConfig config_;
  FrameTracer* tracer_;
  std::unique_ptr<Journal> journal_;

  mutable std::mutex core_mu_;
  Registry registry_;
  std::map<std::string, std::shared_ptr<Connection>> bound_;  // client id -> live connection

  std::unique_ptr<net::Listener> listener_;
  std::thread accept_thread_;
  std::thread housekeeping_thread_;

  mutable std::mutex conns_mu_;
  std::vector<std::shared_ptr<Connection>> conns_;

  std::mutex stop_mu_;
  std::condition_variable stop_cv_;
  bool stopping_ = false;
  bool started_ = false;
};

}  // namespace mms::relay
