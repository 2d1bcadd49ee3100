#include "mms/client.hpp"

#include <chrono>

namespace mms {

using transport::AppEvent;
using transport::SendResolved;

TcpClient::TcpClient(std::string client_id, const std::string& host, std::uint16_t port, FrameTracer* tracer)
    : session_(std::move(client_id)),
      sock_(net::connect_tcp(host, port)),
      peer_(host + ":" + std::to_string(port)),
      tracer_(tracer) {}

std::int64_t TcpClient::now() const {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

void TcpClient::flush() {
  std::string batch;
  while (auto pdu = session_.next_outgoing()) {
    std::string frame = transport::encode_frame(*pdu);
    if (tracer_) tracer_->trace(Direction::Out, now(), peer_, frame);
    batch += frame;
  }
  if (!batch.empty()) sock_.send_all(batch);
}

std::vector<AppEvent> TcpClient::read_once(int timeout_ms) {
  std::vector<AppEvent> events;
  if (!sock_.wait_readable(timeout_ms)) return events;
  char buf[64 * 1024];
  const std::size_t n = sock_.recv_some(buf, sizeof buf);
  if (n == 0) throw net::NetError("connection closed by " + peer_);
  reader_.feed(std::string_view(buf, n));
  while (auto frame = reader_.next_frame()) {
    if (tracer_) tracer_->trace(Direction::In, now(), peer_, *frame);
    auto evs = session_.on_frame(transport::decode_frame(*frame));
    events.insert(events.end(), evs.begin(), evs.end());
  }
  flush();
  return events;
}

std::vector<AppEvent> TcpClient::poll(int timeout_ms) {
  flush();
  std::vector<AppEvent> events(std::make_move_iterator(backlog_.begin()), std::make_move_iterator(backlog_.end()));
  backlog_.clear();
  auto more = read_once(timeout_ms);
  events.insert(events.end(), more.begin(), more.end());
  return events;
}

SendResolved TcpClient::await(std::uint32_t txn, int timeout_ms) {
  flush();
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  while (true) {
    for (auto it = backlog_.begin(); it != backlog_.end(); ++it) {
      if (const auto* r = std::get_if<SendResolved>(&*it); r && r->txn == txn) {
        SendResolved found = *r;
        backlog_.erase(it);
        return found;
      }
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw net::NetError("timed out waiting for status of txn " + std::to_string(txn));
    for (auto& e : read_once(static_cast<int>(left.count()))) backlog_.push_back(std::move(e));
  }
}

SendResolved TcpClient::register_client(int timeout_ms) { return await(session_.submit_register(), timeout_ms); }

std::vector<AppEvent> TcpClient::take_events() {
  std::vector<AppEvent> events(std::make_move_iterator(backlog_.begin()), std::make_move_iterator(backlog_.end()));
  backlog_.clear();
  return events;
}

}  // namespace mms
