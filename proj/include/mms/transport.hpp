#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace mms::transport {

enum class Command { REGISTER, SEND, DELETE, FORWARD, RETRIEVE, NOTIFY, STATUS };

enum class StatusCode { OK, STORED_OFFLINE, EXPIRED, UNKNOWN_RECIPIENT, UNKNOWN_MESSAGE, MALFORMED, UNAUTHORIZED };

inline constexpr int kCommandCount = 7;
inline constexpr int kStatusCount = 7;

std::string_view command_name(Command c);
std::optional<Command> command_from_name(std::string_view name);
std::string_view status_name(StatusCode s);
std::optional<StatusCode> status_from_name(std::string_view name);

/// Header names with defined meaning on the wire.
namespace hdr {
inline constexpr std::string_view From = "From";
inline constexpr std::string_view To = "To";
inline constexpr std::string_view MessageId = "Message-ID";
inline constexpr std::string_view Date = "Date";
inline constexpr std::string_view Subject = "Subject";
inline constexpr std::string_view Status = "X-Mms-Status";
inline constexpr std::string_view OrigTxn = "X-Mms-Orig-Txn";
inline constexpr std::string_view ForwardedBy = "X-Mms-Forwarded-By";
}  // namespace hdr

/// `To:` value that addresses the server itself (stats queries).
inline constexpr std::string_view kServerAddress = "server";

inline constexpr std::uint16_t kDefaultPort = 7275;
inline constexpr std::size_t kDefaultMaxBody = 16u << 20;

struct Pdu {
  Command command = Command::STATUS;
  std::uint32_t txn_id = 0;
  std::vector<std::pair<std::string, std::string>> headers;
  std::optional<std::string> body;  // never empty when present

  const std::string* header(std::string_view name) const;
  void set_header(std::string_view name, std::string value);
  bool operator==(const Pdu&) const = default;
};

/// STATUS reply for `orig_txn`.
Pdu make_status(std::uint32_t txn, StatusCode code, std::uint32_t orig_txn);

std::optional<StatusCode> status_of(const Pdu& pdu);
std::optional<std::uint32_t> orig_txn_of(const Pdu& pdu);

class FrameError : public std::runtime_error {
 public:
  enum class Code { Truncated, BadCommand, BadHeaders, TooLarge, LengthMismatch, InvalidPdu };
  FrameError(Code code, std::size_t offset, const std::string& detail, std::optional<std::uint32_t> txn = {});
  Code code() const { return code_; }
  std::size_t offset() const { return offset_; }
  /// Transaction number, when the command line parsed far enough to tell.
  std::optional<std::uint32_t> txn() const { return txn_; }

 private:
  Code code_;
  std::size_t offset_;
  std::optional<std::uint32_t> txn_;
};

std::string_view frame_error_name(FrameError::Code code);

/// Throws FrameError(InvalidPdu) unless the per-command invariants hold:
/// SEND/NOTIFY carry a body, STATUS carries X-Mms-Status and
/// X-Mms-Orig-Txn, header names are visible ASCII without ':' and values
/// hold no CR or LF.
void check_pdu(const Pdu& pdu);

/// 4-byte big-endian length N, then N bytes of
/// "COMMAND txn\r\n" + "Name: value\r\n"... + "\r\n" + body.
std::string encode_frame(const Pdu& pdu, std::size_t max_body = kDefaultMaxBody);

/// Exact inverse of encode_frame; `bytes` must hold exactly one frame.
Pdu decode_frame(std::span<const char> bytes, std::size_t max_body = kDefaultMaxBody);
inline Pdu decode_frame(std::string_view bytes, std::size_t max_body = kDefaultMaxBody) {
  return decode_frame(std::span<const char>(bytes.data(), bytes.size()), max_body);
}
inline Pdu decode_frame(const std::string& bytes, std::size_t max_body = kDefaultMaxBody) {
  return decode_frame(std::string_view(bytes), max_body);
}

/// Reassembles frames from a byte stream.
class FrameReader {
 public:
  explicit FrameReader(std::size_t max_body = kDefaultMaxBody) : max_body_(max_body) {}

  void feed(std::string_view bytes) { buffer_.append(bytes); }
  /// Next complete frame's bytes, or nullopt if more input is needed.
  /// Throws FrameError(TooLarge) when a declared length exceeds the cap.
  std::optional<std::string> next_frame();
  std::size_t buffered() const { return buffer_.size(); }

 private:
  std::size_t max_body_;
  std::string buffer_;
};

// ---------------------------------------------------------------------------
// Client session

struct SendResolved {
  std::uint32_t txn = 0;
  Command command = Command::SEND;
  StatusCode code = StatusCode::OK;
  std::optional<std::string> body;
  bool operator==(const SendResolved&) const = default;
};

struct MessageArrived {
  std::string message_id;
  std::string from;
  bool operator==(const MessageArrived&) const = default;
};

/// STATUS for a transaction this session is not waiting on.
struct Orphan {
  std::uint32_t txn = 0;
  bool operator==(const Orphan&) const = default;
};

/// A server frame with no meaning for a client (e.g. a stray SEND).
struct Unexpected {
  Command command = Command::STATUS;
  bool operator==(const Unexpected&) const = default;
};

using AppEvent = std::variant<SendResolved, MessageArrived, Orphan, Unexpected>;

class NotRegistered : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Client side of the transport layer. Four FIFO queues decouple the send
/// and receive paths:
///   cmd_out      commands waiting to go on the wire
///   await_status commands sent and waiting for their STATUS, by txn
///   inbox        delivered messages waiting for the application
///   status_out   acknowledgements owed to the server
/// Single owner; not internally synchronized.
class ClientSession {
 public:
  explicit ClientSession(std::string client_id) : client_id_(std::move(client_id)) {}

  const std::string& client_id() const { return client_id_; }
  bool registered() const { return registered_; }

  std::uint32_t submit_register(std::int64_t now_ms = 0);
  std::uint32_t submit_send(std::string envelope_bytes, const std::string& to,
                            std::optional<std::string> message_id = {}, std::int64_t now_ms = 0);
  std::uint32_t submit_delete(const std::string& message_id, std::int64_t now_ms = 0);
  std::uint32_t submit_forward(const std::string& message_id, const std::string& new_to, std::int64_t now_ms = 0);
  std::uint32_t submit_retrieve(const std::string& message_id, std::int64_t now_ms = 0);
  std::uint32_t submit_stats_query(std::int64_t now_ms = 0);

  /// Next frame to put on the wire: owed statuses first, then commands.
  std::optional<Pdu> next_outgoing();

  std::vector<AppEvent> on_frame(const Pdu& pdu);

  std::optional<Pdu> take_inbox();

  std::size_t cmd_out_size() const { return cmd_out_.size(); }
  std::size_t await_status_size() const { return await_status_.size(); }
  std::size_t inbox_size() const { return inbox_.size(); }
  std::size_t status_out_size() const { return status_out_.size(); }
  const std::deque<Pdu>& cmd_out() const { return cmd_out_; }
  const std::deque<Pdu>& inbox() const { return inbox_; }
  const std::deque<Pdu>& status_out() const { return status_out_; }
  bool awaiting(std::uint32_t txn) const { return await_status_.count(txn) != 0; }

  /// Age of the oldest command still waiting for its STATUS.
  std::optional<std::int64_t> oldest_pending_age(std::int64_t now_ms) const;

 private:
  std::uint32_t enqueue(Pdu pdu, std::int64_t now_ms);
  void require_registered() const;

  struct Pending {
    Command command;
    std::int64_t submitted_at;
  };

  std::string client_id_;
  bool registered_ = false;
  std::uint32_t next_txn_ = 1;
  std::deque<Pdu> cmd_out_;
  std::map<std::uint32_t, Pending> await_status_;
  std::deque<Pdu> inbox_;
  std::deque<Pdu> status_out_;
};

}  // namespace mms::transport
