#include "mms/relay_server.hpp"

#include <algorithm>
#include <chrono>
#include <deque>
#include <fstream>

namespace mms::relay {

using transport::Pdu;

std::int64_t wall_clock_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

struct RelayServer::Connection {
  net::Socket sock;
  Address peer;
  std::string peer_text;
  std::optional<std::string> client;  // guarded by core_mu_

  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::string> outbox;
  bool closed = false;

  std::thread reader;
  std::thread writer;
  std::atomic<bool> reader_done{false};
  std::atomic<bool> writer_done{false};

  void close() {
    {
      std::lock_guard lock(mu);
      closed = true;
    }
    cv.notify_all();
    sock.shutdown();
  }
};

RelayServer::RelayServer(ServerConfig config, FrameTracer* tracer)
    : config_(std::move(config)),
      tracer_(tracer),
      journal_(config_.journal_path.empty() ? nullptr : std::make_unique<Journal>(config_.journal_path)),
      registry_(config_, journal_.get()) {
  if (journal_) registry_.restore(config_.journal_path);
}

RelayServer::~RelayServer() { stop(); }

std::uint16_t RelayServer::start() {
  listener_ = std::make_unique<net::Listener>(config_.bind_host, config_.port);
  started_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
  housekeeping_thread_ = std::thread([this] { housekeeping_loop(); });
  return listener_->port();
}

void RelayServer::stop() {
  {
    std::lock_guard lock(stop_mu_);
    if (stopping_) return;
    stopping_ = true;
  }
  stop_cv_.notify_all();
  if (!started_) return;
  listener_->shutdown();
  if (accept_thread_.joinable()) accept_thread_.join();
  if (housekeeping_thread_.joinable()) housekeeping_thread_.join();
  {
    std::lock_guard lock(conns_mu_);
    for (auto& c : conns_) c->close();
  }
  reap(true);
}

void RelayServer::wait() {
  std::unique_lock lock(stop_mu_);
  stop_cv_.wait(lock, [this] { return stopping_; });
}

StatsCounters RelayServer::stats() const {
  std::lock_guard lock(core_mu_);
  return registry_.stats();
}

std::string RelayServer::stats_json() const {
  std::lock_guard lock(core_mu_);
  return registry_.stats_json();
}

std::size_t RelayServer::connection_count() const {
  std::lock_guard lock(conns_mu_);
  return conns_.size();
}

void RelayServer::reap(bool all) {
  std::vector<std::shared_ptr<Connection>> finished;
  {
    std::lock_guard lock(conns_mu_);
    for (auto it = conns_.begin(); it != conns_.end();) {
      if (all || ((*it)->reader_done && (*it)->writer_done)) {
        finished.push_back(std::move(*it));
        it = conns_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& c : finished) {
    if (c->reader.joinable()) c->reader.join();
    if (c->writer.joinable()) c->writer.join();
  }
}

void RelayServer::accept_loop() {
  while (true) {
    net::Endpoint peer;
    auto sock = listener_->accept(&peer);
    if (!sock) return;
    {
      std::lock_guard lock(stop_mu_);
      if (stopping_) return;
    }
    reap(false);
    auto conn = std::make_shared<Connection>();
    conn->sock = std::move(*sock);
    conn->peer = {peer.host, peer.port};
    conn->peer_text = peer.host + ":" + std::to_string(peer.port);
    std::lock_guard lock(conns_mu_);
    conns_.push_back(conn);
    conn->reader = std::thread([this, conn] { reader_loop(conn); });
    conn->writer = std::thread([this, conn] { writer_loop(conn); });
  }
}

void RelayServer::enqueue(Connection& conn, const Pdu& pdu) {
  std::string frame = transport::encode_frame(pdu, config_.max_body);
  {
    std::lock_guard lock(conn.mu);
    if (conn.closed) return;
    conn.outbox.push_back(std::move(frame));
  }
  conn.cv.notify_one();
}

void RelayServer::dispatch(const std::vector<Delivery>& deliveries) {
  for (const auto& d : deliveries) {
    const auto it = bound_.find(d.client_id);
    if (it != bound_.end()) enqueue(*it->second, d.pdu);
  }
}

void RelayServer::handle_frame(const std::shared_ptr<Connection>& conn, const std::string& frame) {
  const std::int64_t t = now();
  if (tracer_) tracer_->trace(Direction::In, t, conn->peer_text, frame);
  std::lock_guard lock(core_mu_);
  Pdu pdu;
  try {
    pdu = transport::decode_frame(frame, config_.max_body);
  } catch (const transport::FrameError& e) {
    enqueue(*conn, registry_.malformed_reply(e.txn().value_or(0)));
    return;
  }
  Outcome out = registry_.handle_pdu(conn->client, conn->peer, pdu, t);
  if (out.registered_client) {
    auto& slot = bound_[*out.registered_client];
    if (slot && slot != conn) slot->client.reset();  // superseded by the new login
    if (conn->client && *conn->client != *out.registered_client) bound_.erase(*conn->client);
    slot = conn;
    conn->client = out.registered_client;
  }
  dispatch(out.deliveries);
  if (out.reply) enqueue(*conn, *out.reply);
}

void RelayServer::reader_loop(const std::shared_ptr<Connection>& conn) {
  transport::FrameReader reader(config_.max_body);
  std::string buf(64 * 1024, '\0');
  try {
    while (true) {
      const std::size_t n = conn->sock.recv_some(buf.data(), buf.size());
      if (n == 0) break;
      reader.feed(std::string_view(buf.data(), n));
      while (auto frame = reader.next_frame()) handle_frame(conn, *frame);
    }
  } catch (const transport::FrameError&) {
    // Oversized declared length: the stream cannot be resynchronized.
    std::lock_guard lock(core_mu_);
    enqueue(*conn, registry_.malformed_reply(0));
  } catch (const net::NetError&) {
  }
  {
    std::lock_guard lock(core_mu_);
    if (conn->client) {
      const auto it = bound_.find(*conn->client);
      if (it != bound_.end() && it->second == conn) {
        registry_.mark_offline(*conn->client, now());
        bound_.erase(it);
      }
      conn->client.reset();
    }
  }
  {
    // Let the writer drain what is already queued, then stop.
    std::lock_guard lock(conn->mu);
    conn->closed = true;
  }
  conn->cv.notify_all();
  conn->reader_done = true;
}

void RelayServer::writer_loop(const std::shared_ptr<Connection>& conn) {
  std::deque<std::string> batch;
  while (true) {
    {
      std::unique_lock lock(conn->mu);
      conn->cv.wait(lock, [&] { return conn->closed || !conn->outbox.empty(); });
      if (conn->outbox.empty()) break;
      batch.swap(conn->outbox);
    }
    try {
      for (const auto& frame : batch) {
        if (tracer_) tracer_->trace(Direction::Out, now(), conn->peer_text, frame);
        conn->sock.send_all(frame);
      }
    } catch (const net::NetError&) {
      conn->sock.shutdown();
      break;
    }
    batch.clear();
  }
  conn->sock.shutdown();
  conn->writer_done = true;
}

void RelayServer::housekeeping_loop() {
  const auto tick = std::chrono::milliseconds(std::clamp<std::int64_t>(config_.dead_time_ms / 4, 5, 1000));
  std::unique_ptr<std::ofstream> log;
  if (!config_.stats_log.empty()) log = std::make_unique<std::ofstream>(config_.stats_log, std::ios::app);
  std::int64_t next_stats = now() + config_.stats_interval_ms;
  while (true) {
    {
      std::unique_lock lock(stop_mu_);
      if (stop_cv_.wait_for(lock, tick, [this] { return stopping_; })) break;
    }
    const std::int64_t t = now();
    std::string line;
    {
      std::lock_guard lock(core_mu_);
      dispatch(registry_.expire_offline(t).deliveries);
      if (log && t >= next_stats) line = registry_.stats_json();
    }
    if (!line.empty()) {
      *log << "{\"t\":" << t << ",\"stats\":" << line << "}\n";
      log->flush();
      next_stats = t + config_.stats_interval_ms;
    }
  }
  if (log) *log << "{\"t\":" << now() << ",\"stats\":" << stats_json() << "}\n";
}

}  // namespace mms::relay
