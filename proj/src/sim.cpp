#include "mms/sim.hpp"

#include <limits>

#include "mms/composer.hpp"

namespace mms::sim {

using nlohmann::ordered_json;
using transport::Command;
using transport::Pdu;
namespace hdr = transport::hdr;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t Rng::next() {
  state_ += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// SimNet

void SimNet::advance_to(std::int64_t t) {
  if (t < now_) throw std::logic_error("virtual clock cannot go backwards");
  now_ = t;
}

bool SimNet::drops(std::uint64_t seed, std::uint64_t ordinal, double rate) {
  if (rate <= 0.0) return false;
  const double u = static_cast<double>(splitmix64(seed ^ splitmix64(ordinal)) >> 11) * 0x1.0p-53;
  return u < rate;
}

bool SimNet::send(std::string from, std::string to, std::uint64_t epoch, std::string frame) {
  const std::uint64_t ordinal = ordinal_++;
  if (drops(config_.seed, ordinal, config_.drop_rate)) {
    ++dropped_;
    return false;
  }
  auto& last = last_arrival_[{from, to}];
  const std::int64_t arrive = std::max(now_ + config_.latency_ms, last);
  last = arrive;
  queue_.push(InFlight{arrive, ordinal, std::move(from), std::move(to), epoch, std::move(frame)});
  return true;
}

std::optional<std::int64_t> SimNet::next_arrival() const {
  if (queue_.empty()) return std::nullopt;
  return queue_.top().arrive_at;
}

std::optional<InFlight> SimNet::pop() {
  if (queue_.empty()) return std::nullopt;
  InFlight f = queue_.top();
  queue_.pop();
  advance_to(std::max(now_, f.arrive_at));
  return f;
}

std::size_t SimNet::in_flight_to(std::string_view to) const {
  // priority_queue hides its container; copy is fine at simulator scale.
  auto copy = queue_;
  std::size_t n = 0;
  while (!copy.empty()) {
    n += copy.top().to == to ? 1 : 0;
    copy.pop();
  }
  return n;
}

// ---------------------------------------------------------------------------
// SimWorld

SimWorld::SimWorld(relay::ServerConfig server, SimConfig net, FrameTracer* tracer)
    : net_(net), registry_(std::move(server)), tracer_(tracer) {}

SimWorld::Client& SimWorld::client(const std::string& id) {
  if (id.empty() || id == kServerNode) throw std::invalid_argument("bad simulated client id '" + id + "'");
  auto it = clients_.find(id);
  if (it == clients_.end()) it = clients_.emplace(id, Client{transport::ClientSession(id)}).first;
  return it->second;
}

transport::ClientSession& SimWorld::session(const std::string& id) { return client(id).session; }

bool SimWorld::connected(const std::string& id) const {
  const auto it = clients_.find(id);
  return it != clients_.end() && it->second.connected;
}

std::uint32_t SimWorld::connect(const std::string& id) {
  Client& c = client(id);
  if (c.connected) throw std::logic_error(id + " is already connected");
  c.connected = true;
  c.bound = false;
  ++c.epoch;
  const std::uint32_t txn = c.session.submit_register(now());
  pump(id);
  return txn;
}

void SimWorld::disconnect(const std::string& id) {
  Client& c = client(id);
  if (!c.connected) return;
  c.connected = false;
  c.bound = false;
  while (c.session.next_outgoing()) {
  }
  registry_.mark_offline(id, now());
  log_.push_back({{"t", now()}, {"event", "disconnect"}, {"client", id}});
}

void SimWorld::pump(const std::string& id) {
  Client& c = client(id);
  if (!c.connected) return;
  while (auto pdu = c.session.next_outgoing()) {
    std::string frame = transport::encode_frame(*pdu);
    if (tracer_) tracer_->trace(Direction::Out, now(), id + " -> server", frame);
    if (!net_.send(id, std::string(kServerNode), c.epoch, std::move(frame))) {
      log_.push_back({{"t", now()}, {"event", "drop"}, {"from", id}, {"to", kServerNode}});
    }
  }
}

void SimWorld::expire_tick() {
  const auto out = registry_.expire_offline(now());
  for (const auto& e : out.expired) {
    log_.push_back({{"t", now()}, {"event", "expire"}, {"client", e.client_id}, {"message_id", e.message_id}});
  }
  dispatch(out.deliveries);
}

void SimWorld::at(std::int64_t t, std::function<void()> fn) {
  if (t < now()) throw std::logic_error("timer scheduled in the past");
  timers_.emplace(std::make_pair(t, timer_seq_++), std::move(fn));
}

void SimWorld::server_send(const std::string& to, const Pdu& pdu) {
  const auto it = clients_.find(to);
  if (it == clients_.end() || !it->second.connected) return;
  std::string frame = transport::encode_frame(pdu);
  if (tracer_) tracer_->trace(Direction::Out, now(), "server -> " + to, frame);
  if (!net_.send(std::string(kServerNode), to, it->second.epoch, std::move(frame))) {
    log_.push_back({{"t", now()}, {"event", "drop"}, {"from", kServerNode}, {"to", to}});
  }
}

void SimWorld::dispatch(const std::vector<relay::Delivery>& deliveries) {
  for (const auto& d : deliveries) server_send(d.client_id, d.pdu);
}

void SimWorld::server_receive(Client& c, const std::string& id, const std::string& frame) {
  if (tracer_) tracer_->trace(Direction::In, now(), id + " -> server", frame);
  Pdu pdu;
  try {
    pdu = transport::decode_frame(frame);
  } catch (const transport::FrameError& e) {
    server_send(id, registry_.malformed_reply(e.txn().value_or(0)));
    return;
  }
  std::optional<std::string> bound;
  if (c.bound) bound = id;
  const relay::Address address{"sim", static_cast<std::uint16_t>(c.epoch & 0xFFFF)};
  const relay::Outcome out = registry_.handle_pdu(bound, address, pdu, now());
  if (out.registered_client && *out.registered_client == id) c.bound = true;
  dispatch(out.deliveries);
  if (out.reply) server_send(id, *out.reply);
}

void SimWorld::client_receive(Client& c, const std::string& id, const std::string& frame) {
  if (tracer_) tracer_->trace(Direction::In, now(), "server -> " + id, frame);
  Pdu pdu;
  try {
    pdu = transport::decode_frame(frame);
  } catch (const transport::FrameError& e) {
    log_.push_back({{"t", now()}, {"event", "undecodable"}, {"client", id}, {"error", e.what()}});
    return;
  }
  const auto events = c.session.on_frame(pdu);
  ordered_json entry{{"t", now()}};
  if (pdu.command == Command::NOTIFY) {
    entry["event"] = "deliver";
    entry["client"] = id;
    if (const auto* v = pdu.header(hdr::MessageId)) entry["message_id"] = *v;
    if (const auto* v = pdu.header(hdr::From)) entry["from"] = *v;
    if (const auto* v = pdu.header(hdr::ForwardedBy)) entry["forwarded_by"] = *v;
  } else if (pdu.command == Command::STATUS) {
    entry["event"] = "status";
    entry["client"] = id;
    entry["txn"] = transport::orig_txn_of(pdu).value_or(0);
    for (const auto& ev : events) {
      if (const auto* r = std::get_if<transport::SendResolved>(&ev)) {
        entry["command"] = transport::command_name(r->command);
      }
    }
    if (const auto code = transport::status_of(pdu)) entry["status"] = transport::status_name(*code);
    if (const auto* v = pdu.header(hdr::MessageId)) entry["message_id"] = *v;
    if (const auto* v = pdu.header(hdr::To)) entry["to"] = *v;
  } else {
    entry["event"] = "unexpected";
    entry["client"] = id;
    entry["command"] = transport::command_name(pdu.command);
  }
  log_.push_back(std::move(entry));
  if (client_hook_) client_hook_(id, pdu, events);
  pump(id);
}

void SimWorld::deliver(const InFlight& f) {
  const bool to_server = f.to == kServerNode;
  const std::string& id = to_server ? f.from : f.to;
  Client& c = client(id);
  if (!c.connected || c.epoch != f.epoch) {
    ++lost_on_disconnect_;
    log_.push_back({{"t", now()}, {"event", "lost"}, {"from", f.from}, {"to", f.to}});
    return;
  }
  if (to_server) {
    server_receive(c, id, f.frame);
  } else {
    client_receive(c, id, f.frame);
  }
}

bool SimWorld::step(std::int64_t limit) {
  const auto frame_at = net_.next_arrival();
  const bool has_timer = !timers_.empty();
  const std::int64_t timer_at = has_timer ? timers_.begin()->first.first : 0;
  if (frame_at && *frame_at <= limit && (!has_timer || *frame_at <= timer_at)) {
    deliver(*net_.pop());
    return true;
  }
  if (has_timer && timer_at <= limit) {
    auto node = timers_.extract(timers_.begin());
    net_.advance_to(std::max(now(), timer_at));
    node.mapped()();
    return true;
  }
  return false;
}

void SimWorld::run_until(std::int64_t t) {
  while (step(t)) {
  }
  if (t > now()) net_.advance_to(t);
}

void SimWorld::run_until_idle() {
  while (step(std::numeric_limits<std::int64_t>::max())) {
  }
}

// ---------------------------------------------------------------------------
// Scenario runner

namespace {

std::string need_string(const ordered_json& a, const char* key, std::size_t index) {
  if (!a.contains(key) || !a[key].is_string()) {
    throw std::invalid_argument("action " + std::to_string(index) + ": missing string field '" + key + "'");
  }
  return a[key].get<std::string>();
}

bool matches(const ordered_json& event, const ordered_json& want, std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    if (!want.contains(k)) continue;
    if (!event.contains(k) || event[k] != want[k]) return false;
  }
  return true;
}

}  // namespace

std::string run_scenario(std::string_view script_json, const std::string& base_dir, FrameTracer* tracer) {
  ordered_json script;
  try {
    script = ordered_json::parse(script_json);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("scenario is not valid JSON: ") + e.what());
  }
  if (!script.is_object() || !script.contains("actions") || !script["actions"].is_array()) {
    throw std::invalid_argument("scenario needs an \"actions\" array");
  }

  SimConfig net;
  net.seed = script.value("seed", std::uint64_t{1});
  net.latency_ms = script.value("latency_ms", net.latency_ms);
  net.drop_rate = script.value("drop_rate", net.drop_rate);
  if (net.latency_ms < 0 || net.drop_rate < 0.0 || net.drop_rate > 1.0) {
    throw std::invalid_argument("latency_ms must be >= 0 and drop_rate in [0, 1]");
  }
  relay::ServerConfig server;
  server.dead_time_ms = script.value("dead_time_ms", server.dead_time_ms);
  if (server.dead_time_ms <= 0) throw std::invalid_argument("dead_time_ms must be positive");

  SimWorld world(server, net, tracer);
  ordered_json results = ordered_json::array();

  auto report = [&] {
    ordered_json r;
    r["seed"] = net.seed;
    r["final_time"] = world.now();
    r["events"] = world.log();
    r["expectations"] = results;
    r["stats"] = ordered_json::parse(world.registry().stats_json());
    r["frames"] = {{"sent", world.net().sent()},
                   {"dropped", world.net().dropped()},
                   {"lost", world.lost_on_disconnect()}};
    return r.dump(2) + "\n";
  };

  std::int64_t t = 0;
  const auto& actions = script["actions"];
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const ordered_json& a = actions[i];
    if (!a.is_object()) throw std::invalid_argument("action " + std::to_string(i) + " is not an object");
    const std::int64_t at = a.value("t", t);
    if (at < t) throw std::invalid_argument("action " + std::to_string(i) + " is out of time order");
    t = at;
    world.run_until(t);

    if (a.contains("expect")) {
      const std::string kind = a["expect"].is_string() ? a["expect"].get<std::string>() : "";
      const auto& log = world.log();
      std::int64_t got = 0;
      bool ok = false;
      ordered_json observed;
      if (kind == "delivery" || kind == "status" || kind == "expired") {
        const char* event = kind == "delivery" ? "deliver" : kind == "status" ? "status" : "expire";
        for (const auto& e : log) {
          if (e["event"] != event) continue;
          if (matches(e, a, {"client", "message_id", "from", "forwarded_by", "status", "command", "to"})) ++got;
        }
        ok = a.contains("count") ? got == a["count"].get<std::int64_t>() : got >= 1;
        observed = got;
      } else if (kind == "stored") {
        const auto* rec = world.registry().find(need_string(a, "client", i));
        got = rec ? static_cast<std::int64_t>(rec->offline_queue.size()) : 0;
        ok = got == a.value("count", std::int64_t{0});
        observed = got;
      } else if (kind == "order") {
        const std::string who = need_string(a, "client", i);
        observed = ordered_json::array();
        for (const auto& e : log) {
          if (e["event"] == "deliver" && e["client"] == who && e.contains("message_id")) {
            observed.push_back(e["message_id"]);
          }
        }
        ok = a.contains("message_ids") && observed == a["message_ids"];
      } else if (kind == "online") {
        const auto* rec = world.registry().find(need_string(a, "client", i));
        observed = rec && rec->online;
        ok = observed == a.value("value", true);
      } else {
        throw std::invalid_argument("action " + std::to_string(i) + ": unknown expectation '" + kind + "'");
      }
      ordered_json res{{"t", t}, {"index", i}, {"expect", a}, {"observed", observed}, {"ok", ok}};
      results.push_back(res);
      if (!ok) {
        throw ScenarioError("expectation at action " + std::to_string(i) + " (t=" + std::to_string(t) +
                                ") failed: " + a.dump() + ", observed " + observed.dump(),
                            report());
      }
      continue;
    }

    const std::string action = need_string(a, "action", i);
    if (action == "register") {
      world.connect(need_string(a, "client", i));
    } else if (action == "disconnect") {
      world.disconnect(need_string(a, "client", i));
    } else if (action == "expire_tick") {
      world.expire_tick();
    } else if (action == "send") {
      const std::string from = need_string(a, "from", i);
      const std::string to = need_string(a, "to", i);
      std::optional<std::string> mid;
      if (a.contains("message_id")) mid = need_string(a, "message_id", i);
      composer::Manifest m;
      if (a.contains("manifest")) {
        m = composer::load_manifest(std::filesystem::path(base_dir) / need_string(a, "manifest", i));
      } else {
        composer::SlideSpec slide;
        slide.text = a.value("text", std::string("hello"));
        m.slides.push_back(slide);
      }
      m.from = from;
      m.to = to;
      composer::ExportOptions opts;
      opts.date_epoch_ms = world.now();
      opts.message_id = mid;
      opts.boundary_seed = net.seed;
      world.session(from).submit_send(composer::export_mms(m, opts), to, mid, world.now());
      world.pump(from);
    } else if (action == "delete") {
      const std::string from = need_string(a, "from", i);
      world.session(from).submit_delete(need_string(a, "message_id", i), world.now());
      world.pump(from);
    } else if (action == "forward") {
      const std::string from = need_string(a, "from", i);
      world.session(from).submit_forward(need_string(a, "message_id", i), need_string(a, "to", i), world.now());
      world.pump(from);
    } else if (action == "retrieve") {
      const std::string from = need_string(a, "from", i);
      world.session(from).submit_retrieve(need_string(a, "message_id", i), world.now());
      world.pump(from);
    } else {
      throw std::invalid_argument("action " + std::to_string(i) + ": unknown action '" + action + "'");
    }
  }
  world.run_until_idle();
  return report();
}

}  // namespace mms::sim
