#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mms::bench {

enum class Mode { Sim, Tcp };

struct BenchOptions {
  int clients = 7;
  int messages = 100;  // commands per client
  Mode mode = Mode::Sim;
  std::uint64_t seed = 1;
  /// Command mix in percent; must sum to 100.
  int send_pct = 80;
  int delete_pct = 10;
  int forward_pct = 10;
  /// Sim only: chance in percent that a client drops offline after a
  /// command, and the dead time used there (virtual ms).
  int churn_pct = 5;
  std::int64_t sim_dead_time_ms = 1000;
  std::int64_t sim_latency_ms = 5;
  std::size_t payload_bytes = 512;
  /// Tcp only: per-request status timeout.
  int timeout_ms = 10'000;
};

struct BenchReport {
  std::string mode;
  int clients = 0;
  int messages = 0;
  std::uint64_t requests = 0;
  double elapsed_s = 0;
  double requests_per_second = 0;
  /// Submit-to-status latency; virtual ms in sim mode.
  double p50_ms = 0, p90_ms = 0, p99_ms = 0, max_ms = 0;
  std::uint64_t sends = 0, deletes = 0, forwards = 0;
  std::uint64_t accepted = 0;   // routed SEND/FORWARD (OK or STORED_OFFLINE)
  std::uint64_t delivered = 0;  // NOTIFYs received by clients
  std::uint64_t stored = 0;     // routings that went through an offline queue
  std::uint64_t held = 0;       // still queued when the run ended
  std::uint64_t retrieved = 0;  // NOTIFYs caused by RETRIEVE, not routing
  std::uint64_t expired = 0;    // EXPIRED statuses received by senders
  std::uint64_t deleted = 0;    // DELETE answered OK
  std::uint64_t lost = 0;
  std::uint64_t duplicated = 0;
  std::uint64_t virtual_ms = 0;  // sim only

  std::string to_json() const;
};

/// Conservation failed; the numbers are meaningless.
class BenchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Drives `clients` sessions issuing `messages` commands each and checks
/// that every accepted routing ends in exactly one delivery, expiry or
/// deletion. Throws BenchError otherwise, std::invalid_argument on bad
/// options.
BenchReport run_bench(const BenchOptions& options);

}  // namespace mms::bench
