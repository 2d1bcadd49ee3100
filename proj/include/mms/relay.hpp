#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mms/transport.hpp"

namespace mms::relay {

class Journal;

struct Address {
  std::string host;
  std::uint16_t port = 0;
  bool operator==(const Address&) const = default;
};

struct ServerConfig {
  std::int64_t dead_time_ms = 86'400'000;
  std::string bind_host = "127.0.0.1";
  std::uint16_t port = transport::kDefaultPort;
  std::string journal_path;  // empty: in-memory only
  std::string stats_log;     // empty: no periodic stats lines
  std::int64_t stats_interval_ms = 10'000;
  std::size_t max_body = transport::kDefaultMaxBody;
};

/// Reads the server config JSON (dead_time_ms, port, bind_host, journal,
/// stats_log, stats_interval_ms). Missing keys keep their defaults.
ServerConfig config_from_json(std::string_view json_text);
ServerConfig load_config(const std::string& path);

/// A PDU held for a client: a NOTIFY waiting for its recipient, or a STATUS
/// owed to an offline sender.
struct StoredEntry {
  std::uint64_t seq = 0;
  std::int64_t stored_at = 0;
  std::string sender;             // who answers for the message
  std::uint32_t sender_txn = 0;   // the SEND/FORWARD txn, for EXPIRED statuses
  std::string message_id;
  transport::Pdu pdu;
};

struct ClientRecord {
  std::string client_id;
  Address address;
  bool online = false;
  std::int64_t last_seen = 0;
  std::deque<StoredEntry> offline_queue;   // NOTIFYs, FIFO
  std::deque<StoredEntry> pending_status;  // EXPIRED statuses owed to this client
  /// Messages delivered to this client, by Message-ID (FORWARD/RETRIEVE).
  std::map<std::string, transport::Pdu> received;
};

struct StatsCounters {
  std::array<std::uint64_t, transport::kCommandCount> in_by_command{};
  std::array<std::uint64_t, transport::kCommandCount> out_by_command{};
  std::array<std::uint64_t, transport::kStatusCount> by_status{};
  std::uint64_t accepted = 0;   // SEND/FORWARD routed (OK or STORED_OFFLINE)
  std::uint64_t delivered = 0;  // routed straight to an online recipient
  std::uint64_t stored = 0;     // put on an offline queue
  std::uint64_t flushed = 0;    // delivered from an offline queue
  std::uint64_t expired = 0;
  std::uint64_t deleted = 0;
  std::uint64_t retrieved = 0;

  bool operator==(const StatsCounters&) const = default;
};

struct Delivery {
  std::string client_id;
  transport::Pdu pdu;
};

struct Outcome {
  transport::StatusCode status = transport::StatusCode::OK;
  std::vector<Delivery> deliveries;
  /// STATUS for the requesting connection (handle_pdu only).
  std::optional<transport::Pdu> reply;
  /// Set when a REGISTER bound the requesting connection to a client id.
  std::optional<std::string> registered_client;
  /// Message-ID a routed SEND ended up with (possibly server-assigned).
  std::optional<std::string> message_id;
};

struct ExpiredMessage {
  std::string client_id;  // recipient whose queue held it
  std::string message_id;
  bool operator==(const ExpiredMessage&) const = default;
};

struct ExpiryOutcome {
  std::vector<ExpiredMessage> expired;
  std::vector<Delivery> deliveries;  // EXPIRED statuses to online senders
};

/// Registry, routing and offline store of the relay. Time is supplied by the
/// caller. Not internally synchronized: callers serialize access.
class Registry {
 public:
  explicit Registry(ServerConfig config = {}, Journal* journal = nullptr);

  /// Marks the client online at `address` and hands back everything held
  /// for it: unexpired NOTIFYs in storage order, then owed statuses. Stored
  /// entries past the dead time are expired first.
  Outcome handle_register(const std::string& client_id, const Address& address, std::int64_t now);

  /// Routes a SEND: online recipient gets a NOTIFY (OK), offline one has it
  /// stored (STORED_OFFLINE), unknown one is refused (UNKNOWN_RECIPIENT).
  Outcome handle_send(const std::string& from_id, const transport::Pdu& pdu, std::int64_t now);

  /// Removes a still-stored message. Only its sender or recipient may.
  Outcome handle_delete(const std::string& from_id, const std::string& message_id, std::int64_t now);

  /// Re-routes a message the requester received to `new_to`, keeping its
  /// Message-ID and adding X-Mms-Forwarded-By.
  Outcome handle_forward(const std::string& from_id, const std::string& message_id, const std::string& new_to,
                         std::int64_t now, std::uint32_t forward_txn = 0);

  /// Re-sends a received message to its recipient.
  Outcome handle_retrieve(const std::string& from_id, const std::string& message_id, std::int64_t now);

  /// Drops stored NOTIFYs older than the dead time (strictly greater) and
  /// owes each sender an EXPIRED status.
  ExpiryOutcome expire_offline(std::int64_t now);

  /// Connection closed. Idempotent; unknown ids are ignored.
  void mark_offline(const std::string& client_id, std::int64_t now);

  /// Full protocol dispatch for one decoded frame from a connection bound to
  /// `connection_client` (nullopt before REGISTER). Fills `reply` and counts
  /// traffic.
  Outcome handle_pdu(const std::optional<std::string>& connection_client, const Address& address,
                     const transport::Pdu& pdu, std::int64_t now);

  /// STATUS(MALFORMED) for a frame that failed to decode.
  transport::Pdu malformed_reply(std::uint32_t orig_txn);

  /// Counts a frame the network layer sent outside handle_pdu.
  void count_out(const transport::Pdu& pdu);

  const ClientRecord* find(const std::string& client_id) const;
  const std::map<std::string, ClientRecord>& clients() const { return clients_; }
  const StatsCounters& stats() const { return stats_; }
  std::size_t currently_stored() const;
  std::string stats_json() const;
  const ServerConfig& config() const { return config_; }

  /// Rebuilds clients and queues from a journal file. All restored clients
  /// start offline.
  void restore(const std::string& journal_path);

 private:
  std::uint32_t next_txn() { return next_txn_++; }
  transport::StatusCode route(transport::Pdu notify, const std::string& sender, std::uint32_t sender_txn,
                              std::int64_t now, std::vector<Delivery>& out);
  void expire_queue(ClientRecord& rec, std::int64_t now, ExpiryOutcome& out);
  void owe_status(const std::string& sender, transport::Pdu status, std::int64_t now, std::vector<Delivery>& out);
  void deliver_notify(ClientRecord& rec, transport::Pdu notify, std::vector<Delivery>& out);

  ServerConfig config_;
  Journal* journal_;
  std::map<std::string, ClientRecord> clients_;
  StatsCounters stats_;
  std::uint32_t next_txn_ = 1;
  std::uint64_t next_seq_ = 1;
  std::uint64_t next_message_ = 1;
};

}  // namespace mms::relay
