#include "mms/transport.hpp"

#include <algorithm>
#include <charconv>
#include <limits>

namespace mms::transport {

namespace {

constexpr std::string_view kCommandNames[] = {"REGISTER", "SEND", "DELETE", "FORWARD", "RETRIEVE", "NOTIFY", "STATUS"};
constexpr std::string_view kStatusNames[] = {"OK",          "STORED_OFFLINE", "EXPIRED",     "UNKNOWN_RECIPIENT",
                                             "UNKNOWN_MESSAGE", "MALFORMED",  "UNAUTHORIZED"};

// Room for the command line and headers on top of the body cap.
constexpr std::size_t kHeaderAllowance = 64 * 1024;

std::optional<std::uint32_t> parse_u32(std::string_view s) {
  if (s.empty() || s.size() > 10 || (s.size() > 1 && s.front() == '0')) return std::nullopt;
  std::uint64_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + static_cast<std::uint64_t>(c - '0');
  }
  if (v > std::numeric_limits<std::uint32_t>::max()) return std::nullopt;
  return static_cast<std::uint32_t>(v);
}

bool valid_name(std::string_view name) {
  return !name.empty() && std::all_of(name.begin(), name.end(), [](char c) { return c > 0x20 && c < 0x7F && c != ':'; });
}

bool valid_value(std::string_view value) { return value.find_first_of("\r\n") == std::string_view::npos; }

}  // namespace

std::string_view command_name(Command c) { return kCommandNames[static_cast<int>(c)]; }

std::optional<Command> command_from_name(std::string_view name) {
  for (int i = 0; i < kCommandCount; ++i) {
    if (kCommandNames[i] == name) return static_cast<Command>(i);
  }
  return std::nullopt;
}

std::string_view status_name(StatusCode s) { return kStatusNames[static_cast<int>(s)]; }

std::optional<StatusCode> status_from_name(std::string_view name) {
  for (int i = 0; i < kStatusCount; ++i) {
    if (kStatusNames[i] == name) return static_cast<StatusCode>(i);
  }
  return std::nullopt;
}

const std::string* Pdu::header(std::string_view name) const {
  for (const auto& [k, v] : headers) {
    if (k == name) return &v;
  }
  return nullptr;
}

void Pdu::set_header(std::string_view name, std::string value) {
  for (auto& [k, v] : headers) {
    if (k == name) {
      v = std::move(value);
      return;
    }
  }
  headers.emplace_back(std::string(name), std::move(value));
}

Pdu make_status(std::uint32_t txn, StatusCode code, std::uint32_t orig_txn) {
  Pdu p;
  p.command = Command::STATUS;
  p.txn_id = txn;
  p.headers.emplace_back(std::string(hdr::Status), std::string(status_name(code)));
  p.headers.emplace_back(std::string(hdr::OrigTxn), std::to_string(orig_txn));
  return p;
}

std::optional<StatusCode> status_of(const Pdu& pdu) {
  const std::string* v = pdu.header(hdr::Status);
  return v ? status_from_name(*v) : std::nullopt;
}

std::optional<std::uint32_t> orig_txn_of(const Pdu& pdu) {
  const std::string* v = pdu.header(hdr::OrigTxn);
  return v ? parse_u32(*v) : std::nullopt;
}

std::string_view frame_error_name(FrameError::Code code) {
  switch (code) {
    case FrameError::Code::Truncated: return "Truncated";
    case FrameError::Code::BadCommand: return "BadCommand";
    case FrameError::Code::BadHeaders: return "BadHeaders";
    case FrameError::Code::TooLarge: return "TooLarge";
    case FrameError::Code::LengthMismatch: return "LengthMismatch";
    case FrameError::Code::InvalidPdu: return "InvalidPdu";
  }
  return "?";
}

FrameError::FrameError(Code code, std::size_t offset, const std::string& detail, std::optional<std::uint32_t> txn)
    : std::runtime_error(std::string(frame_error_name(code)) + " at byte " + std::to_string(offset) + ": " + detail),
      code_(code),
      offset_(offset),
      txn_(txn) {}

void check_pdu(const Pdu& pdu) {
  auto bad = [&](const std::string& what) { throw FrameError(FrameError::Code::InvalidPdu, 0, what, pdu.txn_id); };
  for (const auto& [name, value] : pdu.headers) {
    if (!valid_name(name)) bad("bad header name '" + name + "'");
    if (!valid_value(value)) bad("header '" + name + "' holds CR or LF");
  }
  if (pdu.body && pdu.body->empty()) bad("present body must not be empty");
  if ((pdu.command == Command::SEND || pdu.command == Command::NOTIFY) && !pdu.body) {
    bad(std::string(command_name(pdu.command)) + " requires a body");
  }
  if (pdu.command == Command::STATUS) {
    if (!status_of(pdu)) bad("STATUS without a valid X-Mms-Status");
    if (!orig_txn_of(pdu)) bad("STATUS without a valid X-Mms-Orig-Txn");
  }
}

std::string encode_frame(const Pdu& pdu, std::size_t max_body) {
  check_pdu(pdu);
  if (pdu.body && pdu.body->size() > max_body) {
    throw FrameError(FrameError::Code::TooLarge, 0, "body of " + std::to_string(pdu.body->size()) + " bytes", pdu.txn_id);
  }
  std::string payload;
  payload += command_name(pdu.command);
  payload += ' ';
  payload += std::to_string(pdu.txn_id);
  payload += "\r\n";
  for (const auto& [name, value] : pdu.headers) {
    payload += name;
    payload += ": ";
    payload += value;
    payload += "\r\n";
  }
  payload += "\r\n";
  if (pdu.body) payload += *pdu.body;
  if (payload.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw FrameError(FrameError::Code::TooLarge, 0, "frame exceeds 4 GiB", pdu.txn_id);
  }

  const auto n = static_cast<std::uint32_t>(payload.size());
  std::string frame;
  frame.reserve(4 + payload.size());
  frame += static_cast<char>((n >> 24) & 0xFF);
  frame += static_cast<char>((n >> 16) & 0xFF);
  frame += static_cast<char>((n >> 8) & 0xFF);
  frame += static_cast<char>(n & 0xFF);
  frame += payload;
  return frame;
}

namespace {

std::uint32_t read_length(std::string_view b) {
  return (static_cast<std::uint32_t>(static_cast<unsigned char>(b[0])) << 24) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(b[1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(b[2])) << 8) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[3]));
}

}  // namespace

Pdu decode_frame(std::span<const char> span, std::size_t max_body) {
  const std::string_view bytes(span.data(), span.size());
  if (bytes.size() < 4) throw FrameError(FrameError::Code::Truncated, bytes.size(), "missing length prefix");
  const std::uint32_t n = read_length(bytes);
  if (n > max_body + kHeaderAllowance) {
    throw FrameError(FrameError::Code::TooLarge, 0, "declared length " + std::to_string(n));
  }
  if (bytes.size() - 4 < n) {
    throw FrameError(FrameError::Code::Truncated, bytes.size(),
                     "declared " + std::to_string(n) + " bytes, have " + std::to_string(bytes.size() - 4));
  }
  if (bytes.size() - 4 > n) {
    throw FrameError(FrameError::Code::LengthMismatch, 4 + n, "trailing bytes after frame");
  }
  const std::string_view payload = bytes.substr(4);
  auto at = [](std::size_t pos) { return pos + 4; };

  const auto eol = payload.find("\r\n");
  if (eol == std::string_view::npos) throw FrameError(FrameError::Code::Truncated, bytes.size(), "command line incomplete");
  const std::string_view line = payload.substr(0, eol);
  const auto space = line.find(' ');
  if (space == std::string_view::npos) throw FrameError(FrameError::Code::BadCommand, at(0), "no transaction number");
  const auto txn = parse_u32(line.substr(space + 1));
  const auto command = command_from_name(line.substr(0, space));
  if (!command) {
    throw FrameError(FrameError::Code::BadCommand, at(0), "unknown command '" + std::string(line.substr(0, space)) + "'",
                     txn);
  }
  if (!txn) throw FrameError(FrameError::Code::BadCommand, at(space + 1), "bad transaction number");

  Pdu pdu;
  pdu.command = *command;
  pdu.txn_id = *txn;
  std::size_t pos = eol + 2;
  while (true) {
    const auto end = payload.find("\r\n", pos);
    if (end == std::string_view::npos) {
      throw FrameError(FrameError::Code::Truncated, bytes.size(), "header section incomplete", txn);
    }
    const std::string_view h = payload.substr(pos, end - pos);
    if (h.empty()) {
      pos = end + 2;
      break;
    }
    const auto colon = h.find(':');
    if (colon == std::string_view::npos || h.substr(colon, 2) != ": ") {
      throw FrameError(FrameError::Code::BadHeaders, at(pos), "header line without ': '", txn);
    }
    const std::string_view name = h.substr(0, colon);
    const std::string_view value = h.substr(colon + 2);
    if (!valid_name(name) || !valid_value(value)) {
      throw FrameError(FrameError::Code::BadHeaders, at(pos), "malformed header", txn);
    }
    pdu.headers.emplace_back(std::string(name), std::string(value));
    pos = end + 2;
  }
  if (pos < payload.size()) {
    if (payload.size() - pos > max_body) {
      throw FrameError(FrameError::Code::TooLarge, at(pos), "body exceeds cap", txn);
    }
    pdu.body = std::string(payload.substr(pos));
  }
  try {
    check_pdu(pdu);
  } catch (const FrameError& e) {
    throw FrameError(FrameError::Code::InvalidPdu, 4, e.what(), txn);
  }
  return pdu;
}

std::optional<std::string> FrameReader::next_frame() {
  if (buffer_.size() < 4) return std::nullopt;
  const std::uint32_t n = read_length(buffer_);
  if (n > max_body_ + kHeaderAllowance) {
    throw FrameError(FrameError::Code::TooLarge, 0, "declared length " + std::to_string(n));
  }
  if (buffer_.size() < 4 + static_cast<std::size_t>(n)) return std::nullopt;
  std::string frame = buffer_.substr(0, 4 + n);
  buffer_.erase(0, 4 + n);
  return frame;
}

// ---------------------------------------------------------------------------

void ClientSession::require_registered() const {
  if (!registered_) throw NotRegistered("client '" + client_id_ + "' has not registered");
}

std::uint32_t ClientSession::enqueue(Pdu pdu, std::int64_t now_ms) {
  pdu.txn_id = next_txn_++;
  check_pdu(pdu);
  await_status_[pdu.txn_id] = {pdu.command, now_ms};
  const std::uint32_t txn = pdu.txn_id;
  cmd_out_.push_back(std::move(pdu));
  return txn;
}

std::uint32_t ClientSession::submit_register(std::int64_t now_ms) {
  Pdu p;
  p.command = Command::REGISTER;
  p.headers.emplace_back(std::string(hdr::From), client_id_);
  const auto txn = enqueue(std::move(p), now_ms);
  registered_ = true;
  return txn;
}

std::uint32_t ClientSession::submit_send(std::string envelope_bytes, const std::string& to,
                                         std::optional<std::string> message_id, std::int64_t now_ms) {
  require_registered();
  if (envelope_bytes.empty()) throw std::invalid_argument("SEND needs a non-empty envelope");
  Pdu p;
  p.command = Command::SEND;
  p.headers.emplace_back(std::string(hdr::From), client_id_);
  p.headers.emplace_back(std::string(hdr::To), to);
  p.headers.emplace_back(std::string(hdr::MessageId),
                         message_id.value_or(client_id_ + "-" + std::to_string(next_txn_)));
  p.body = std::move(envelope_bytes);
  return enqueue(std::move(p), now_ms);
}

std::uint32_t ClientSession::submit_delete(const std::string& message_id, std::int64_t now_ms) {
  require_registered();
  Pdu p;
  p.command = Command::DELETE;
  p.headers.emplace_back(std::string(hdr::From), client_id_);
  p.headers.emplace_back(std::string(hdr::MessageId), message_id);
  return enqueue(std::move(p), now_ms);
}

std::uint32_t ClientSession::submit_forward(const std::string& message_id, const std::string& new_to,
                                            std::int64_t now_ms) {
  require_registered();
  Pdu p;
  p.command = Command::FORWARD;
  p.headers.emplace_back(std::string(hdr::From), client_id_);
  p.headers.emplace_back(std::string(hdr::To), new_to);
  p.headers.emplace_back(std::string(hdr::MessageId), message_id);
  return enqueue(std::move(p), now_ms);
}

std::uint32_t ClientSession::submit_retrieve(const std::string& message_id, std::int64_t now_ms) {
  require_registered();
  Pdu p;
  p.command = Command::RETRIEVE;
  p.headers.emplace_back(std::string(hdr::From), client_id_);
  p.headers.emplace_back(std::string(hdr::MessageId), message_id);
  return enqueue(std::move(p), now_ms);
}

std::uint32_t ClientSession::submit_stats_query(std::int64_t now_ms) {
  Pdu p = make_status(0, StatusCode::OK, 0);
  p.headers.emplace_back(std::string(hdr::From), client_id_);
  p.headers.emplace_back(std::string(hdr::To), std::string(kServerAddress));
  return enqueue(std::move(p), now_ms);
}

std::optional<Pdu> ClientSession::next_outgoing() {
  auto& q = !status_out_.empty() ? status_out_ : cmd_out_;
  if (q.empty()) return std::nullopt;
  Pdu p = std::move(q.front());
  q.pop_front();
  return p;
}

std::vector<AppEvent> ClientSession::on_frame(const Pdu& pdu) {
  std::vector<AppEvent> events;
  switch (pdu.command) {
    case Command::STATUS: {
      const auto orig = orig_txn_of(pdu);
      const auto code = status_of(pdu);
      auto it = orig ? await_status_.find(*orig) : await_status_.end();
      if (it == await_status_.end() || !code) {
        events.push_back(Orphan{orig.value_or(pdu.txn_id)});
        break;
      }
      events.push_back(SendResolved{*orig, it->second.command, *code, pdu.body});
      await_status_.erase(it);
      break;
    }
    case Command::NOTIFY: {
      const std::string* mid = pdu.header(hdr::MessageId);
      const std::string* from = pdu.header(hdr::From);
      inbox_.push_back(pdu);
      Pdu ack = make_status(next_txn_++, StatusCode::OK, pdu.txn_id);
      ack.headers.emplace_back(std::string(hdr::From), client_id_);
      if (mid) ack.headers.emplace_back(std::string(hdr::MessageId), *mid);
      status_out_.push_back(std::move(ack));
      events.push_back(MessageArrived{mid ? *mid : std::string{}, from ? *from : std::string{}});
      break;
    }
    default:
      events.push_back(Unexpected{pdu.command});
  }
  return events;
}

std::optional<Pdu> ClientSession::take_inbox() {
  if (inbox_.empty()) return std::nullopt;
  Pdu p = std::move(inbox_.front());
  inbox_.pop_front();
  return p;
}

std::optional<std::int64_t> ClientSession::oldest_pending_age(std::int64_t now_ms) const {
  if (await_status_.empty()) return std::nullopt;
  std::int64_t oldest = now_ms;
  for (const auto& [txn, p] : await_status_) oldest = std::min(oldest, p.submitted_at);
  return now_ms - oldest;
}

}  // namespace mms::transport
