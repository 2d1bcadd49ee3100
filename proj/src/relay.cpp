#include "mms/relay.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"
#include "mms/journal.hpp"

namespace mms::relay {

using transport::Command;
using transport::Pdu;
using transport::StatusCode;
namespace hdr = transport::hdr;

ServerConfig config_from_json(std::string_view json_text) {
  ServerConfig c;
  try {
    const auto j = nlohmann::json::parse(json_text);
    c.dead_time_ms = j.value("dead_time_ms", c.dead_time_ms);
    c.port = j.value("port", c.port);
    c.bind_host = j.value("bind_host", c.bind_host);
    c.journal_path = j.value("journal", c.journal_path);
    c.stats_log = j.value("stats_log", c.stats_log);
    c.stats_interval_ms = j.value("stats_interval_ms", c.stats_interval_ms);
    c.max_body = j.value("max_body", c.max_body);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad server config: ") + e.what());
  }
  if (c.dead_time_ms <= 0) throw std::invalid_argument("dead_time_ms must be positive");
  if (c.stats_interval_ms <= 0) throw std::invalid_argument("stats_interval_ms must be positive");
  return c;
}

ServerConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot read server config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

Registry::Registry(ServerConfig config, Journal* journal) : config_(std::move(config)), journal_(journal) {
  if (config_.dead_time_ms <= 0) throw std::invalid_argument("dead_time_ms must be positive");
}

const ClientRecord* Registry::find(const std::string& client_id) const {
  const auto it = clients_.find(client_id);
  return it == clients_.end() ? nullptr : &it->second;
}

std::size_t Registry::currently_stored() const {
  std::size_t n = 0;
  for (const auto& [id, rec] : clients_) n += rec.offline_queue.size();
  return n;
}

void Registry::deliver_notify(ClientRecord& rec, Pdu notify, std::vector<Delivery>& out) {
  if (const std::string* mid = notify.header(hdr::MessageId)) rec.received[*mid] = notify;
  out.push_back({rec.client_id, std::move(notify)});
}

void Registry::owe_status(const std::string& sender, Pdu status, std::int64_t now, std::vector<Delivery>& out) {
  const auto it = clients_.find(sender);
  if (it == clients_.end()) return;
  ClientRecord& rec = it->second;
  if (rec.online) {
    out.push_back({sender, std::move(status)});
    return;
  }
  StoredEntry entry;
  entry.seq = next_seq_++;
  entry.stored_at = now;
  entry.sender = sender;
  if (const std::string* mid = status.header(hdr::MessageId)) entry.message_id = *mid;
  entry.pdu = std::move(status);
  if (journal_) journal_->pending_status(sender, entry);
  rec.pending_status.push_back(std::move(entry));
}

StatusCode Registry::route(Pdu notify, const std::string& sender, std::uint32_t sender_txn, std::int64_t now,
                           std::vector<Delivery>& out) {
  const std::string* to = notify.header(hdr::To);
  const auto it = to ? clients_.find(*to) : clients_.end();
  if (it == clients_.end()) return StatusCode::UNKNOWN_RECIPIENT;
  ClientRecord& rec = it->second;
  ++stats_.accepted;
  if (rec.online) {
    ++stats_.delivered;
    deliver_notify(rec, std::move(notify), out);
    return StatusCode::OK;
  }
  StoredEntry entry;
  entry.seq = next_seq_++;
  entry.stored_at = now;
  entry.sender = sender;
  entry.sender_txn = sender_txn;
  entry.message_id = *notify.header(hdr::MessageId);
  entry.pdu = std::move(notify);
  if (journal_) journal_->store(rec.client_id, entry);
  rec.offline_queue.push_back(std::move(entry));
  ++stats_.stored;
  return StatusCode::STORED_OFFLINE;
}

void Registry::expire_queue(ClientRecord& rec, std::int64_t now, ExpiryOutcome& out) {
  auto& q = rec.offline_queue;
  for (auto it = q.begin(); it != q.end();) {
    if (now - it->stored_at <= config_.dead_time_ms) {
      ++it;
      continue;
    }
    StoredEntry entry = std::move(*it);
    it = q.erase(it);
    ++stats_.expired;
    if (journal_) journal_->remove(entry.seq);
    out.expired.push_back({rec.client_id, entry.message_id});

    Pdu status = transport::make_status(next_txn(), StatusCode::EXPIRED, entry.sender_txn);
    status.headers.emplace_back(std::string(hdr::MessageId), entry.message_id);
    status.headers.emplace_back(std::string(hdr::To), rec.client_id);
    owe_status(entry.sender, std::move(status), now, out.deliveries);
  }
}

Outcome Registry::handle_register(const std::string& client_id, const Address& address, std::int64_t now) {
  auto [it, created] = clients_.try_emplace(client_id);
  ClientRecord& rec = it->second;
  if (created || rec.address != address) {
    rec.client_id = client_id;
    rec.address = address;
    if (journal_) journal_->client(client_id, address);
  }
  rec.online = true;
  rec.last_seen = now;

  Outcome out;
  ExpiryOutcome expiry;
  expire_queue(rec, now, expiry);

  while (!rec.offline_queue.empty()) {
    StoredEntry entry = std::move(rec.offline_queue.front());
    rec.offline_queue.pop_front();
    if (journal_) journal_->remove(entry.seq);
    ++stats_.flushed;
    deliver_notify(rec, std::move(entry.pdu), out.deliveries);
  }
  while (!rec.pending_status.empty()) {
    StoredEntry entry = std::move(rec.pending_status.front());
    rec.pending_status.pop_front();
    if (journal_) journal_->remove(entry.seq);
    out.deliveries.push_back({client_id, std::move(entry.pdu)});
  }
  for (auto& d : expiry.deliveries) out.deliveries.push_back(std::move(d));
  out.status = StatusCode::OK;
  return out;
}

Outcome Registry::handle_send(const std::string& from_id, const Pdu& pdu, std::int64_t now) {
  Outcome out;
  const auto sender = clients_.find(from_id);
  if (sender == clients_.end() || !sender->second.online) {
    out.status = StatusCode::UNAUTHORIZED;
    return out;
  }
  const std::string* to = pdu.header(hdr::To);
  if (!to || to->empty() || !pdu.body) {
    out.status = StatusCode::MALFORMED;
    return out;
  }
  Pdu notify;
  notify.command = Command::NOTIFY;
  notify.txn_id = next_txn();
  notify.headers.emplace_back(std::string(hdr::From), from_id);
  notify.headers.emplace_back(std::string(hdr::To), *to);
  const std::string* mid = pdu.header(hdr::MessageId);
  out.message_id = mid && !mid->empty() ? *mid : "srv-" + std::to_string(next_message_++);
  notify.headers.emplace_back(std::string(hdr::MessageId), *out.message_id);
  if (const std::string* v = pdu.header(hdr::Date)) notify.headers.emplace_back(std::string(hdr::Date), *v);
  if (const std::string* v = pdu.header(hdr::Subject)) notify.headers.emplace_back(std::string(hdr::Subject), *v);
  notify.body = pdu.body;
  out.status = route(std::move(notify), from_id, pdu.txn_id, now, out.deliveries);
  return out;
}

Outcome Registry::handle_delete(const std::string& from_id, const std::string& message_id, std::int64_t) {
  Outcome out;
  const auto requester = clients_.find(from_id);
  if (requester == clients_.end() || !requester->second.online) {
    out.status = StatusCode::UNAUTHORIZED;
    return out;
  }
  bool exists_elsewhere = false;
  for (auto& [owner, rec] : clients_) {
    auto& q = rec.offline_queue;
    for (auto it = q.begin(); it != q.end(); ++it) {
      if (it->message_id != message_id) continue;
      if (it->sender == from_id || owner == from_id) {
        if (journal_) journal_->remove(it->seq);
        q.erase(it);
        ++stats_.deleted;
        out.status = StatusCode::OK;
        return out;
      }
      exists_elsewhere = true;
    }
  }
  out.status = exists_elsewhere ? StatusCode::UNAUTHORIZED : StatusCode::UNKNOWN_MESSAGE;
  return out;
}

Outcome Registry::handle_forward(const std::string& from_id, const std::string& message_id, const std::string& new_to,
                                 std::int64_t now, std::uint32_t forward_txn) {
  Outcome out;
  const auto requester = clients_.find(from_id);
  if (requester == clients_.end() || !requester->second.online) {
    out.status = StatusCode::UNAUTHORIZED;
    return out;
  }
  const auto& received = requester->second.received;
  const auto msg = received.find(message_id);
  if (msg == received.end()) {
    out.status = StatusCode::UNKNOWN_MESSAGE;
    return out;
  }
  if (!clients_.count(new_to)) {
    out.status = StatusCode::UNKNOWN_RECIPIENT;
    return out;
  }
  Pdu notify = msg->second;
  notify.txn_id = next_txn();
  notify.set_header(hdr::To, new_to);
  notify.set_header(hdr::ForwardedBy, from_id);
  out.status = route(std::move(notify), from_id, forward_txn, now, out.deliveries);
  return out;
}

Outcome Registry::handle_retrieve(const std::string& from_id, const std::string& message_id, std::int64_t) {
  Outcome out;
  const auto requester = clients_.find(from_id);
  if (requester == clients_.end() || !requester->second.online) {
    out.status = StatusCode::UNAUTHORIZED;
    return out;
  }
  const auto msg = requester->second.received.find(message_id);
  if (msg == requester->second.received.end()) {
    out.status = StatusCode::UNKNOWN_MESSAGE;
    return out;
  }
  Pdu notify = msg->second;
  notify.txn_id = next_txn();
  ++stats_.retrieved;
  out.deliveries.push_back({from_id, std::move(notify)});
  out.status = StatusCode::OK;
  return out;
}

ExpiryOutcome Registry::expire_offline(std::int64_t now) {
  ExpiryOutcome out;
  for (auto& [id, rec] : clients_) expire_queue(rec, now, out);
  for (const auto& d : out.deliveries) count_out(d.pdu);
  return out;
}

void Registry::mark_offline(const std::string& client_id, std::int64_t now) {
  const auto it = clients_.find(client_id);
  if (it == clients_.end()) return;
  it->second.online = false;
  it->second.last_seen = now;
}

Pdu Registry::malformed_reply(std::uint32_t orig_txn) {
  Pdu reply = transport::make_status(next_txn(), StatusCode::MALFORMED, orig_txn);
  count_out(reply);
  return reply;
}

void Registry::count_out(const Pdu& pdu) {
  ++stats_.out_by_command[static_cast<int>(pdu.command)];
  if (pdu.command == Command::STATUS) {
    if (const auto code = transport::status_of(pdu)) ++stats_.by_status[static_cast<int>(*code)];
  }
}

namespace {

bool valid_client_id(std::string_view id) {
  if (id.empty() || id == transport::kServerAddress) return false;
  return std::none_of(id.begin(), id.end(), [](char c) { return c <= 0x20 || c == 0x7F; });
}

}  // namespace

Outcome Registry::handle_pdu(const std::optional<std::string>& connection_client, const Address& address,
                             const Pdu& pdu, std::int64_t now) {
  ++stats_.in_by_command[static_cast<int>(pdu.command)];
  Outcome out;
  std::optional<std::string> message_id;
  if (const std::string* mid = pdu.header(hdr::MessageId)) message_id = *mid;
  bool reply = true;

  auto require = [&](std::string_view name) -> const std::string* {
    const std::string* v = pdu.header(name);
    return v && !v->empty() ? v : nullptr;
  };

  if (pdu.command == Command::REGISTER) {
    const std::string* id = pdu.header(hdr::From);
    if (!id || !valid_client_id(*id)) {
      out.status = StatusCode::MALFORMED;
    } else {
      out = handle_register(*id, address, now);
      out.registered_client = *id;
    }
  } else if (pdu.command == Command::STATUS && !connection_client) {
    out.status = StatusCode::UNAUTHORIZED;
  } else if (pdu.command == Command::STATUS) {
    const std::string* to = pdu.header(hdr::To);
    if (to && *to == transport::kServerAddress) {
      Pdu r = transport::make_status(next_txn(), StatusCode::OK, pdu.txn_id);
      r.body = stats_json();
      out.reply = std::move(r);
    }
    reply = false;  // delivery acknowledgements get no answer
  } else if (!connection_client) {
    out.status = StatusCode::UNAUTHORIZED;
  } else {
    const std::string& me = *connection_client;
    switch (pdu.command) {
      case Command::SEND:
        out = handle_send(me, pdu, now);
        if (out.message_id) message_id = out.message_id;
        break;
      case Command::DELETE:
        if (const std::string* mid = require(hdr::MessageId)) {
          out = handle_delete(me, *mid, now);
        } else {
          out.status = StatusCode::MALFORMED;
        }
        break;
      case Command::FORWARD: {
        const std::string* mid = require(hdr::MessageId);
        const std::string* to = require(hdr::To);
        if (mid && to) {
          out = handle_forward(me, *mid, *to, now, pdu.txn_id);
        } else {
          out.status = StatusCode::MALFORMED;
        }
        break;
      }
      case Command::RETRIEVE:
        if (const std::string* mid = require(hdr::MessageId)) {
          out = handle_retrieve(me, *mid, now);
        } else {
          out.status = StatusCode::MALFORMED;
        }
        break;
      default:  // NOTIFY never comes from a client
        out.status = StatusCode::MALFORMED;
    }
  }

  if (reply) {
    Pdu r = transport::make_status(next_txn(), out.status, pdu.txn_id);
    if (message_id) r.headers.emplace_back(std::string(hdr::MessageId), *message_id);
    out.reply = std::move(r);
  }
  for (const auto& d : out.deliveries) count_out(d.pdu);
  if (out.reply) count_out(*out.reply);
  return out;
}

std::string Registry::stats_json() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json in = nlohmann::ordered_json::object();
  nlohmann::ordered_json outj = nlohmann::ordered_json::object();
  for (int i = 0; i < transport::kCommandCount; ++i) {
    const auto name = std::string(transport::command_name(static_cast<Command>(i)));
    in[name] = stats_.in_by_command[i];
    outj[name] = stats_.out_by_command[i];
  }
  nlohmann::ordered_json st = nlohmann::ordered_json::object();
  for (int i = 0; i < transport::kStatusCount; ++i) {
    st[std::string(transport::status_name(static_cast<StatusCode>(i)))] = stats_.by_status[i];
  }
  j["in"] = std::move(in);
  j["out"] = std::move(outj);
  j["status"] = std::move(st);
  j["accepted"] = stats_.accepted;
  j["delivered"] = stats_.delivered;
  j["stored"] = stats_.stored;
  j["flushed"] = stats_.flushed;
  j["expired"] = stats_.expired;
  j["deleted"] = stats_.deleted;
  j["retrieved"] = stats_.retrieved;
  j["currently_stored"] = currently_stored();
  std::size_t online = 0;
  for (const auto& [id, rec] : clients_) online += rec.online ? 1 : 0;
  j["clients"] = clients_.size();
  j["online"] = online;
  return j.dump();
}

void Registry::restore(const std::string& journal_path) {
  std::unordered_map<std::uint64_t, std::string> owner_of;
  for (auto& r : Journal::replay(journal_path)) {
    switch (r.kind) {
      case 'C': {
        auto& rec = clients_[r.owner];
        rec.client_id = r.owner;
        rec.address = r.address;
        rec.online = false;
        break;
      }
      case 'Q':
      case 'P': {
        auto& rec = clients_[r.owner];
        rec.client_id = r.owner;
        owner_of[r.entry.seq] = r.owner;
        next_seq_ = std::max(next_seq_, r.entry.seq + 1);
        (r.kind == 'Q' ? rec.offline_queue : rec.pending_status).push_back(std::move(r.entry));
        break;
      }
      case 'D': {
        const auto it = owner_of.find(r.entry.seq);
        if (it == owner_of.end()) break;
        auto& rec = clients_[it->second];
        for (auto* q : {&rec.offline_queue, &rec.pending_status}) {
          std::erase_if(*q, [&](const StoredEntry& e) { return e.seq == r.entry.seq; });
        }
        owner_of.erase(it);
        break;
      }
      default:
        break;
    }
  }
  for (auto& [id, rec] : clients_) {
    rec.online = false;
    stats_.stored += rec.offline_queue.size();
    for (const auto& e : rec.offline_queue) next_txn_ = std::max(next_txn_, e.pdu.txn_id + 1);
  }
}

}  // namespace mms::relay
