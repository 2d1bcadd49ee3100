#include "mms/bench.hpp"

#include <algorithm>
#include <atomic>
#include <barrier>
#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <thread>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "mms/client.hpp"
#include "mms/composer.hpp"
#include "mms/relay_server.hpp"
#include "mms/sim.hpp"

namespace mms::bench {

using transport::Command;
using transport::Pdu;
using transport::StatusCode;
namespace hdr = transport::hdr;

std::string BenchReport::to_json() const {
  nlohmann::ordered_json j;
  j["mode"] = mode;
  j["clients"] = clients;
  j["messages"] = messages;
  j["requests"] = requests;
  j["elapsed_s"] = elapsed_s;
  j["requests_per_second"] = requests_per_second;
  j["latency_ms"] = {{"p50", p50_ms}, {"p90", p90_ms}, {"p99", p99_ms}, {"max", max_ms}};
  j["commands"] = {{"SEND", sends}, {"DELETE", deletes}, {"FORWARD", forwards}};
  j["accepted"] = accepted;
  j["delivered"] = delivered;
  j["stored"] = stored;
  j["held"] = held;
  j["retrieved"] = retrieved;
  j["expired"] = expired;
  j["deleted"] = deleted;
  j["lost"] = lost;
  j["duplicated"] = duplicated;
  if (mode == "sim") j["virtual_ms"] = virtual_ms;
  return j.dump(2) + "\n";
}

namespace {

/// (recipient, message id, forwarded by)
using Key = std::tuple<std::string, std::string, std::string>;

/// Every accepted routing must end in exactly one delivery, expiry or
/// deletion.
class Ledger {
 public:
  void routed(const std::string& sender, std::uint32_t txn, Key key, Command cmd) {
    std::lock_guard lock(mu_);
    if (cmd == Command::SEND) send_recipient_[std::get<1>(key)] = std::get<0>(key);
    ++expected_[key];
    routed_[{sender, txn}] = std::move(key);
    ++accepted_;
  }
  void delivered(const std::string& client, const Pdu& notify) {
    std::lock_guard lock(mu_);
    const auto* mid = notify.header(hdr::MessageId);
    const auto* fwd = notify.header(hdr::ForwardedBy);
    ++observed_[{client, mid ? *mid : "", fwd ? *fwd : ""}];
    ++delivered_;
  }
  void expired(const std::string& client, std::uint32_t orig_txn) {
    std::lock_guard lock(mu_);
    ++expired_;
    const auto it = routed_.find({client, orig_txn});
    if (it == routed_.end()) {
      ++unmatched_;
      return;
    }
    ++observed_[it->second];
  }
  void deleted(const std::string& mid) {
    std::lock_guard lock(mu_);
    ++deleted_;
    const auto it = send_recipient_.find(mid);
    if (it == send_recipient_.end()) {
      ++unmatched_;
      return;
    }
    ++observed_[{it->second, mid, ""}];
  }
  void unexpected() {
    std::lock_guard lock(mu_);
    ++unmatched_;
  }
  std::uint64_t expected_for(const std::string& recipient) {
    std::lock_guard lock(mu_);
    std::uint64_t n = 0;
    for (const auto& [k, c] : expected_) n += std::get<0>(k) == recipient ? c : 0;
    return n;
  }

  void settle(BenchReport& r) {
    std::lock_guard lock(mu_);
    r.accepted = accepted_;
    r.delivered = delivered_;
    r.expired = expired_;
    r.deleted = deleted_;
    r.lost = 0;
    r.duplicated = unmatched_;
    for (const auto& [k, want] : expected_) {
      const auto it = observed_.find(k);
      const std::int64_t got = it == observed_.end() ? 0 : it->second;
      if (got < want) r.lost += want - got;
      if (got > want) r.duplicated += got - want;
    }
    for (const auto& [k, got] : observed_) {
      if (!expected_.count(k)) r.duplicated += got;
    }
  }

 private:
  std::mutex mu_;
  std::map<Key, std::int64_t> expected_, observed_;
  std::map<std::pair<std::string, std::uint32_t>, Key> routed_;
  std::map<std::string, std::string> send_recipient_;
  std::uint64_t accepted_ = 0, delivered_ = 0, expired_ = 0, deleted_ = 0, unmatched_ = 0;
};

void check_options(const BenchOptions& o) {
  if (o.clients < 1 || o.messages < 1) throw std::invalid_argument("bench needs at least 1 client and 1 message");
  if (o.send_pct < 0 || o.delete_pct < 0 || o.forward_pct < 0 || o.send_pct + o.delete_pct + o.forward_pct != 100) {
    throw std::invalid_argument("command mix must be non-negative and sum to 100");
  }
  if (o.churn_pct < 0 || o.churn_pct > 100) throw std::invalid_argument("churn must be in [0, 100]");
  if (o.sim_dead_time_ms <= 0 || o.sim_latency_ms < 0) throw std::invalid_argument("bad sim timing");
}

std::string client_name(int i) { return "c" + std::to_string(i + 1); }

std::string make_payload(const BenchOptions& o) {
  composer::Manifest m;
  m.from = "bench";
  m.to = "bench";
  composer::SlideSpec slide;
  std::string text;
  for (std::size_t i = 0; i < std::max<std::size_t>(o.payload_bytes, 1); ++i) text += static_cast<char>('a' + i % 26);
  slide.text = text;
  m.slides.push_back(slide);
  composer::ExportOptions opts;
  opts.date_epoch_ms = 0;
  opts.message_id = "bench";
  return composer::export_mms(m, opts);
}

void percentiles(std::vector<double> lat, BenchReport& r) {
  if (lat.empty()) return;
  std::sort(lat.begin(), lat.end());
  auto rank = [&](double p) {
    const auto idx = static_cast<std::size_t>(std::ceil(p * static_cast<double>(lat.size())));
    return lat[std::min(lat.size() - 1, idx == 0 ? 0 : idx - 1)];
  };
  r.p50_ms = rank(0.50);
  r.p90_ms = rank(0.90);
  r.p99_ms = rank(0.99);
  r.max_ms = lat.back();
}

/// One command choice; shared by both modes so they issue the same mix.
struct Choice {
  Command command = Command::SEND;
  std::string to;
  std::string message_id;
};

Choice choose(sim::Rng& rng, const BenchOptions& o, int self, int issued, const std::vector<std::string>& sent,
              const std::vector<std::string>& received) {
  const std::string me = client_name(self);
  auto other = [&] {
    if (o.clients == 1) return me;
    int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(o.clients - 1)));
    if (j >= self) ++j;
    return client_name(j);
  };
  Choice c;
  const int roll = static_cast<int>(rng.below(100));
  if (roll < o.send_pct) {
    c.command = Command::SEND;
    c.to = other();
    c.message_id = me + "-" + std::to_string(issued + 1);
  } else if (roll < o.send_pct + o.delete_pct) {
    c.command = Command::DELETE;
    c.message_id = sent.empty() ? me + "-none" : sent[rng.below(sent.size())];
  } else {
    c.command = Command::FORWARD;
    c.to = other();
    c.message_id = received.empty() ? me + "-none" : received[rng.below(received.size())];
  }
  return c;
}

bool originated_by(const std::string& mid, const std::string& client) {
  return mid.size() > client.size() && mid.compare(0, client.size(), client) == 0 && mid[client.size()] == '-';
}

void check_registry(const relay::StatsCounters& s, std::size_t currently_stored, const BenchReport& r) {
  if (s.accepted != s.delivered + s.stored) {
    throw BenchError("server counters: accepted " + std::to_string(s.accepted) + " != delivered " +
                     std::to_string(s.delivered) + " + stored " + std::to_string(s.stored));
  }
  if (s.stored != s.flushed + s.expired + s.deleted + currently_stored) {
    throw BenchError("server counters: stored " + std::to_string(s.stored) + " != flushed + expired + deleted + held");
  }
  if (s.accepted != r.accepted) {
    throw BenchError("server accepted " + std::to_string(s.accepted) + " routings, clients saw " +
                     std::to_string(r.accepted));
  }
  if (r.lost != 0 || r.duplicated != 0) {
    throw BenchError("conservation failed: " + std::to_string(r.lost) + " lost, " + std::to_string(r.duplicated) +
                     " duplicated");
  }
  if (r.accepted != r.delivered - r.retrieved + r.held + r.expired + r.deleted) {
    throw BenchError("accepted " + std::to_string(r.accepted) + " != delivered + held + expired + deleted");
  }
}

// ---------------------------------------------------------------------------
// Sim mode

struct SimDriver {
  std::string id;
  sim::Rng rng{1};
  int issued = 0;
  bool done = false;
  std::optional<std::uint32_t> pending;
  Choice pending_choice;
  std::int64_t submitted_at = 0;
  std::vector<std::string> sent;
  std::vector<std::string> received;
};

BenchReport run_sim(const BenchOptions& o) {
  relay::ServerConfig server;
  server.dead_time_ms = o.sim_dead_time_ms;
  sim::SimConfig net;
  net.seed = o.seed;
  net.latency_ms = o.sim_latency_ms;
  sim::SimWorld world(server, net);
  const std::string payload = make_payload(o);

  std::vector<SimDriver> drivers(static_cast<std::size_t>(o.clients));
  std::map<std::string, std::size_t> index;
  for (int i = 0; i < o.clients; ++i) {
    drivers[i].id = client_name(i);
    drivers[i].rng = sim::Rng(sim::splitmix64(o.seed) ^ sim::splitmix64(static_cast<std::uint64_t>(i) + 1));
    index[drivers[i].id] = static_cast<std::size_t>(i);
  }

  Ledger ledger;
  BenchReport report;
  std::vector<double> latencies;
  int registered = 0;
  bool started = false;
  bool finished = false;
  std::int64_t last_progress = 0;

  std::function<void(SimDriver&)> issue;
  auto schedule_next = [&](SimDriver& d, std::int64_t delay) {
    world.at(world.now() + delay, [&, di = index[d.id]] { issue(drivers[di]); });
  };

  issue = [&](SimDriver& d) {
    if (d.issued >= o.messages) {
      d.done = true;
      return;
    }
    const int self = static_cast<int>(index[d.id]);
    Choice c = choose(d.rng, o, self, d.issued, d.sent, d.received);
    auto& s = world.session(d.id);
    std::uint32_t txn = 0;
    switch (c.command) {
      case Command::SEND:
        txn = s.submit_send(payload, c.to, c.message_id, world.now());
        ++report.sends;
        break;
      case Command::DELETE:
        txn = s.submit_delete(c.message_id, world.now());
        ++report.deletes;
        break;
      default:
        txn = s.submit_forward(c.message_id, c.to, world.now());
        ++report.forwards;
        break;
    }
    ++d.issued;
    d.pending = txn;
    d.pending_choice = std::move(c);
    d.submitted_at = world.now();
    world.pump(d.id);
  };

  auto resolved = [&](SimDriver& d, const transport::SendResolved& r) {
    if (r.command == Command::REGISTER) {
      d.pending.reset();
      if (!started) {
        if (++registered == o.clients) {
          started = true;  // barrier: everyone is online before the first command
          for (auto& x : drivers) schedule_next(x, static_cast<std::int64_t>(x.rng.below(20)));
        }
      } else {
        schedule_next(d, static_cast<std::int64_t>(d.rng.below(20)));
      }
      return;
    }
    last_progress = world.now();
    latencies.push_back(static_cast<double>(world.now() - d.submitted_at));
    d.pending.reset();
    const Choice& c = d.pending_choice;
    const bool routed = r.code == StatusCode::OK || r.code == StatusCode::STORED_OFFLINE;
    if (c.command == Command::SEND && routed) {
      ledger.routed(d.id, r.txn, {c.to, c.message_id, ""}, Command::SEND);
      d.sent.push_back(c.message_id);
    } else if (c.command == Command::FORWARD && routed) {
      ledger.routed(d.id, r.txn, {c.to, c.message_id, d.id}, Command::FORWARD);
    } else if (c.command == Command::DELETE && r.code == StatusCode::OK) {
      ledger.deleted(c.message_id);
    }
    if (d.issued >= o.messages) {
      d.done = true;
      return;
    }
    if (d.rng.percent(o.churn_pct) && world.net().in_flight_to(d.id) == 0) {
      world.disconnect(d.id);
      const std::int64_t away = d.rng.range(50, o.sim_dead_time_ms * 3 / 2);
      world.at(world.now() + away, [&, di = index[d.id]] { drivers[di].pending = world.connect(drivers[di].id); });
      return;
    }
    schedule_next(d, static_cast<std::int64_t>(d.rng.below(20)));
  };

  world.on_client_frame([&](const std::string& client, const Pdu& pdu, const std::vector<transport::AppEvent>& evs) {
    SimDriver& d = drivers[index[client]];
    if (pdu.command == Command::NOTIFY) {
      ledger.delivered(client, pdu);
      const auto* mid = pdu.header(hdr::MessageId);
      if (mid && !originated_by(*mid, client) && std::find(d.received.begin(), d.received.end(), *mid) == d.received.end()) {
        d.received.push_back(*mid);
      }
      return;
    }
    for (const auto& ev : evs) {
      if (const auto* r = std::get_if<transport::SendResolved>(&ev)) {
        if (d.pending && r->txn == *d.pending) resolved(d, *r);
      } else if (const auto* orphan = std::get_if<transport::Orphan>(&ev)) {
        if (transport::status_of(pdu) == StatusCode::EXPIRED) {
          ledger.expired(client, orphan->txn);
        } else {
          ledger.unexpected();
        }
      }
    }
  });

  std::function<void()> tick = [&] {
    world.expire_tick();
    const bool all_done = std::all_of(drivers.begin(), drivers.end(), [](const SimDriver& d) { return d.done; });
    if (all_done && world.registry().currently_stored() == 0) {
      finished = true;
      return;
    }
    if (world.now() - last_progress > 10 * o.sim_dead_time_ms + 10'000) return;  // stalled
    world.at(world.now() + 100, tick);
  };

  const auto wall0 = std::chrono::steady_clock::now();
  for (auto& d : drivers) d.pending = world.connect(d.id);
  world.at(100, tick);
  world.run_until_idle();
  const auto wall1 = std::chrono::steady_clock::now();

  if (!finished) throw BenchError("simulation stalled before every client finished");
  for (auto& d : drivers) {
    if (!world.connected(d.id)) throw BenchError(d.id + " ended offline");
  }

  report.mode = "sim";
  report.clients = o.clients;
  report.messages = o.messages;
  report.requests = static_cast<std::uint64_t>(o.clients) * static_cast<std::uint64_t>(o.messages);
  report.elapsed_s = std::chrono::duration<double>(wall1 - wall0).count();
  report.requests_per_second = static_cast<double>(report.requests) / std::max(report.elapsed_s, 1e-9);
  report.virtual_ms = static_cast<std::uint64_t>(world.now());
  report.stored = world.registry().stats().stored;
  report.held = world.registry().currently_stored();
  report.retrieved = world.registry().stats().retrieved;
  percentiles(std::move(latencies), report);
  ledger.settle(report);
  check_registry(world.registry().stats(), world.registry().currently_stored(), report);
  return report;
}

// ---------------------------------------------------------------------------
// TCP loopback mode

BenchReport run_tcp(const BenchOptions& o) {
  relay::ServerConfig cfg;
  cfg.bind_host = "127.0.0.1";
  cfg.port = 0;
  relay::RelayServer server(cfg);
  const std::uint16_t port = server.start();
  const std::string payload = make_payload(o);

  Ledger ledger;
  BenchReport report;
  std::mutex mu;
  std::vector<double> latencies;
  std::string first_error;
  std::atomic<std::uint64_t> sends{0}, deletes{0}, forwards{0};

  using Clock = std::chrono::steady_clock;
  Clock::time_point phase_start, phase_end;
  int phase = 0;
  std::barrier sync(o.clients, [&]() noexcept {
    if (phase == 0) phase_start = Clock::now();
    if (phase == 1) phase_end = Clock::now();
    ++phase;
  });

  auto fail = [&](const std::string& what) {
    std::lock_guard lock(mu);
    if (first_error.empty()) first_error = what;
  };

  auto body = [&](int self) {
    const std::string me = client_name(self);
    int stage = 0;  // barriers passed
    try {
      TcpClient client(me, "127.0.0.1", port);
      sim::Rng rng(sim::splitmix64(o.seed) ^ sim::splitmix64(static_cast<std::uint64_t>(self) + 1));
      std::vector<std::string> sent, received;
      std::vector<double> mine;
      std::uint64_t got = 0;

      auto drain_inbox = [&] {
        while (auto n = client.session().take_inbox()) {
          ledger.delivered(me, *n);
          ++got;
          const auto* mid = n->header(hdr::MessageId);
          if (mid && !originated_by(*mid, me) && std::find(received.begin(), received.end(), *mid) == received.end()) {
            received.push_back(*mid);
          }
        }
        for (const auto& ev : client.take_events()) {
          if (std::holds_alternative<transport::Orphan>(ev)) ledger.unexpected();
        }
      };

      if (client.register_client(o.timeout_ms).code != StatusCode::OK) throw BenchError(me + ": REGISTER refused");
      sync.arrive_and_wait();
      stage = 1;

      for (int k = 0; k < o.messages; ++k) {
        Choice c = choose(rng, o, self, k, sent, received);
        auto& s = client.session();
        std::uint32_t txn = 0;
        if (c.command == Command::SEND) {
          txn = s.submit_send(payload, c.to, c.message_id);
          ++sends;
        } else if (c.command == Command::DELETE) {
          txn = s.submit_delete(c.message_id);
          ++deletes;
        } else {
          txn = s.submit_forward(c.message_id, c.to);
          ++forwards;
        }
        const auto t0 = Clock::now();
        const auto r = client.await(txn, o.timeout_ms);
        mine.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
        const bool routed = r.code == StatusCode::OK || r.code == StatusCode::STORED_OFFLINE;
        if (c.command == Command::SEND && routed) {
          ledger.routed(me, txn, {c.to, c.message_id, ""}, Command::SEND);
          sent.push_back(c.message_id);
        } else if (c.command == Command::FORWARD && routed) {
          ledger.routed(me, txn, {c.to, c.message_id, me}, Command::FORWARD);
        } else if (c.command == Command::DELETE && r.code == StatusCode::OK) {
          ledger.deleted(c.message_id);
        }
        drain_inbox();
      }
      sync.arrive_and_wait();
      stage = 2;

      // Every routing is recorded now; wait for this client's share.
      const std::uint64_t want = ledger.expected_for(me);
      const auto deadline = Clock::now() + std::chrono::milliseconds(o.timeout_ms);
      while (got < want && Clock::now() < deadline) {
        client.poll(50);
        drain_inbox();
      }
      {
        std::lock_guard lock(mu);
        latencies.insert(latencies.end(), mine.begin(), mine.end());
      }
      sync.arrive_and_wait();
      stage = 3;
    } catch (const std::exception& e) {
      fail(me + ": " + e.what());
      // Keep the barrier phases consistent for the other threads.
      if (stage < 3) sync.arrive_and_drop();
    }
  };

  std::vector<std::thread> threads;
  for (int i = 0; i < o.clients; ++i) threads.emplace_back(body, i);
  for (auto& t : threads) t.join();

  const relay::StatsCounters stats = server.stats();
  std::size_t held = 0;
  {
    const auto j = nlohmann::json::parse(server.stats_json());
    held = j.value("currently_stored", std::size_t{0});
  }
  server.stop();
  if (!first_error.empty()) throw BenchError(first_error);

  report.mode = "tcp";
  report.clients = o.clients;
  report.messages = o.messages;
  report.requests = static_cast<std::uint64_t>(o.clients) * static_cast<std::uint64_t>(o.messages);
  report.elapsed_s = std::chrono::duration<double>(phase_end - phase_start).count();
  report.requests_per_second = static_cast<double>(report.requests) / std::max(report.elapsed_s, 1e-9);
  report.sends = sends;
  report.deletes = deletes;
  report.forwards = forwards;
  report.stored = stats.stored;
  report.held = held;
  report.retrieved = stats.retrieved;
  percentiles(std::move(latencies), report);
  ledger.settle(report);
  check_registry(stats, held, report);
  return report;
}

}  // namespace

BenchReport run_bench(const BenchOptions& options) {
  check_options(options);
  return options.mode == Mode::Sim ? run_sim(options) : run_tcp(options);
}

}  // namespace mms::bench
