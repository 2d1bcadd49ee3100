#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mms/relay.hpp"
#include "mms/trace.hpp"
#include "mms/transport.hpp"

namespace mms::sim {

/// 64-bit mixer used for every seeded decision in the simulator.
std::uint64_t splitmix64(std::uint64_t x);

/// Small deterministic generator (splitmix64 stream).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  /// Uniform in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) { return next() % n; }
  /// Uniform in [lo, hi].
  std::int64_t range(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }
  /// True with probability pct/100.
  bool percent(int pct) { return static_cast<int>(below(100)) < pct; }

 private:
  std::uint64_t state_;
};

struct SimConfig {
  std::int64_t latency_ms = 5;
  std::uint64_t seed = 1;
  /// Fraction of frames lost in [0, 1]; the choice depends only on
  /// (seed, frame ordinal).
  double drop_rate = 0.0;
};

struct InFlight {
  std::int64_t arrive_at = 0;
  std::uint64_t ordinal = 0;
  std::string from;
  std::string to;
  std::uint64_t epoch = 0;  // connection generation of the client end
  std::string frame;
};

/// Virtual network: constant per-link latency, FIFO per link, seeded drops.
class SimNet {
 public:
  explicit SimNet(SimConfig config = {}) : config_(config) {}

  std::int64_t now() const { return now_; }
  /// Moves the clock forward. Throws std::logic_error if t < now().
  void advance_to(std::int64_t t);

  /// Queues a frame; false if the drop rule discarded it.
  bool send(std::string from, std::string to, std::uint64_t epoch, std::string frame);
  std::optional<std::int64_t> next_arrival() const;
  /// Removes the earliest frame and advances the clock to its arrival.
  std::optional<InFlight> pop();
  bool idle() const { return queue_.empty(); }
  std::size_t in_flight() const { return queue_.size(); }
  /// Frames still queued toward `to`.
  std::size_t in_flight_to(std::string_view to) const;

  std::uint64_t sent() const { return ordinal_; }
  std::uint64_t dropped() const { return dropped_; }
  const SimConfig& config() const { return config_; }

  /// The drop predicate.
  static bool drops(std::uint64_t seed, std::uint64_t ordinal, double rate);

 private:
  struct Later {
    bool operator()(const InFlight& a, const InFlight& b) const {
      return a.arrive_at != b.arrive_at ? a.arrive_at > b.arrive_at : a.ordinal > b.ordinal;
    }
  };

  SimConfig config_;
  std::int64_t now_ = 0;
  std::uint64_t ordinal_ = 0;
  std::uint64_t dropped_ = 0;
  std::map<std::pair<std::string, std::string>, std::int64_t> last_arrival_;
  std::priority_queue<InFlight, std::vector<InFlight>, Later> queue_;
};

inline constexpr std::string_view kServerNode = "server";

/// One relay Registry and any number of ClientSessions joined by a SimNet.
/// Single-threaded; all time is virtual.
class SimWorld {
 public:
  SimWorld(relay::ServerConfig server, SimConfig net, FrameTracer* tracer = nullptr);

  using ClientHook = std::function<void(const std::string& client, const transport::Pdu& pdu,
                                        const std::vector<transport::AppEvent>& events)>;
  /// Called for every frame a client receives, after its session saw it.
  void on_client_frame(ClientHook hook) { client_hook_ = std::move(hook); }

  std::int64_t now() const { return net_.now(); }
  SimNet& net() { return net_; }
  relay::Registry& registry() { return registry_; }
  transport::ClientSession& session(const std::string& client);
  bool connected(const std::string& client) const;

  /// Opens a connection and sends REGISTER. Returns the txn.
  std::uint32_t connect(const std::string& client);
  /// Closes the connection at the current instant. Frames in flight on it
  /// are lost.
  void disconnect(const std::string& client);
  /// Puts the client's queued frames on the wire.
  void pump(const std::string& client);
  /// Runs the server's dead-time sweep now.
  void expire_tick();

  /// Schedules fn at time t (>= now). Same-time timers run in schedule order,
  /// after frames arriving at that instant.
  void at(std::int64_t t, std::function<void()> fn);

  /// Processes frames and timers up to and including t, then sets the clock
  /// to t.
  void run_until(std::int64_t t);
  /// Processes until nothing is in flight and no timer is pending.
  void run_until_idle();

  /// Chronological record of deliveries, statuses, expiries and drops.
  const nlohmann::ordered_json& log() const { return log_; }
  std::uint64_t lost_on_disconnect() const { return lost_on_disconnect_; }

 private:
  struct Client {
    transport::ClientSession session;
    bool connected = false;
    bool bound = false;  // server side: REGISTER processed on this connection
    std::uint64_t epoch = 0;
  };

  bool step(std::int64_t limit);
  void deliver(const InFlight& f);
  void server_receive(Client& c, const std::string& id, const std::string& frame);
  void client_receive(Client& c, const std::string& id, const std::string& frame);
  void dispatch(const std::vector<relay::Delivery>& deliveries);
  void server_send(const std::string& to, const transport::Pdu& pdu);
  Client& client(const std::string& id);

  SimNet net_;
  relay::Registry registry_;
  FrameTracer* tracer_;
  std::map<std::string, Client> clients_;
  std::map<std::pair<std::int64_t, std::uint64_t>, std::function<void()>> timers_;
  std::uint64_t timer_seq_ = 0;
  nlohmann::ordered_json log_ = nlohmann::ordered_json::array();
  std::uint64_t lost_on_disconnect_ = 0;
  ClientHook client_hook_;
};

class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(const std::string& what, std::string report) : std::runtime_error(what), report_(std::move(report)) {}
  /// The report up to and including the failed expectation.
  const std::string& report() const { return report_; }

 private:
  std::string report_;
};

/// Runs a JSON scenario script on virtual time and returns the report JSON.
/// Identical input gives byte-identical output. Throws ScenarioError on the
/// first failed expectation and std::invalid_argument on a malformed script.
/// Manifest paths in "send" actions resolve against base_dir.
std::string run_scenario(std::string_view script_json, const std::string& base_dir = {},
                         FrameTracer* tracer = nullptr);

}  // namespace mms::sim
