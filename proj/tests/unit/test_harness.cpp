#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include <unistd.h>

#include "doctest.h"

#include "json.hpp"
#include "mms/bench.hpp"
#include "mms/cli.hpp"
#include "mms/net.hpp"
#include "mms/sim.hpp"
#include "mms/trace.hpp"
#include "mms/transport.hpp"

using namespace mms;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = MMS_FIXTURES;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run mmsc(std::vector<std::string> args) {
  args.insert(args.begin(), "mmsc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("mms_harness_" + std::to_string(::getpid()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::uint16_t unused_port() {
  net::Listener l("127.0.0.1", 0);
  return l.port();
}

}  // namespace

TEST_SUITE("harness_cli") {
  TEST_CASE("sim net keeps per-link order and applies latency") {
    sim::SimNet net({.latency_ms = 5, .seed = 1, .drop_rate = 0});
    net.send("a", "server", 1, "one");
    net.advance_to(1);
    net.send("a", "server", 1, "two");
    net.send("b", "server", 1, "three");
    CHECK(net.in_flight_to("server") == 3);
    auto f = net.pop();
    CHECK(f->frame == "one");
    CHECK(f->arrive_at == 5);
    CHECK(net.pop()->frame == "two");
    CHECK(net.pop()->frame == "three");
    CHECK(net.idle());
    CHECK_THROWS_AS(net.advance_to(0), std::logic_error);
  }

  TEST_CASE("sim drops depend only on seed and ordinal") {
    int dropped = 0;
    for (std::uint64_t i = 0; i < 1000; ++i) {
      CHECK(sim::SimNet::drops(9, i, 0.3) == sim::SimNet::drops(9, i, 0.3));
      dropped += sim::SimNet::drops(9, i, 0.3);
      CHECK_FALSE(sim::SimNet::drops(9, i, 0.0));
    }
    CHECK(dropped > 200);
    CHECK(dropped < 400);
  }

  TEST_CASE("rng") {
    sim::Rng a(4), b(4);
    for (int i = 0; i < 100; ++i) {
      const auto x = a.range(-3, 3);
      CHECK(x == b.range(-3, 3));
      CHECK(x >= -3);
      CHECK(x <= 3);
    }
  }

  TEST_CASE("sim world: direct send") {
    sim::SimWorld w({}, {});
    w.connect("a");
    w.connect("b");
    w.run_until_idle();
    const auto txn = w.session("a").submit_send("env", "b", "m1", w.now());
    w.pump("a");
    w.run_until_idle();
    CHECK_FALSE(w.session("a").awaiting(txn));
    CHECK(w.session("b").inbox_size() == 1);
    int deliveries = 0;
    for (const auto& e : w.log()) deliveries += e["event"] == "deliver";
    CHECK(deliveries == 1);
  }

  TEST_CASE("scenario scripts") {
    for (const char* name : {"basic_send", "offline_fifo", "strict_expiry", "delete_stored", "forward_offline"}) {
      CAPTURE(name);
      const std::string script = read_file(kFixtures / "scenarios" / (std::string(name) + ".json"));
      std::string report;
      CHECK_NOTHROW(report = sim::run_scenario(script, kFixtures.string()));
      // Byte-identical on a second run.
      CHECK(sim::run_scenario(script, kFixtures.string()) == report);
      const auto j = nlohmann::json::parse(report);
      for (const auto& e : j["expectations"]) CHECK(e["ok"] == true);
    }
  }

  TEST_CASE("basic scenario report") {
    const auto j = nlohmann::json::parse(sim::run_scenario(read_file(kFixtures / "scenarios" / "basic_send.json")));
    int notify_b = 0, ok_a = 0;
    for (const auto& e : j["events"]) {
      if (e["event"] == "deliver" && e["client"] == "b") ++notify_b;
      if (e["event"] == "status" && e["client"] == "a" && e.value("command", "") == "SEND" && e["status"] == "OK") ++ok_a;
    }
    CHECK(notify_b == 1);
    CHECK(ok_a == 1);
  }

  TEST_CASE("scenario: late registration and expiry") {
    const std::string late = R"({"dead_time_ms": 500, "actions": [
      {"t": 0, "action": "register", "client": "a"},
      {"t": 0, "action": "send", "from": "a", "to": "b", "message_id": "x"},
      {"t": 0, "action": "register", "client": "b"},
      {"t": 10, "action": "disconnect", "client": "b"},
      {"t": 20, "action": "send", "from": "a", "to": "b", "message_id": "m"},
      {"t": 300, "action": "register", "client": "b"},
      {"t": 400, "expect": "delivery", "client": "b", "message_id": "m", "count": 1}]})";
    CHECK_NOTHROW(sim::run_scenario(late));

    const std::string never = R"({"dead_time_ms": 500, "actions": [
      {"t": 0, "action": "register", "client": "a"},
      {"t": 0, "action": "register", "client": "b"},
      {"t": 10, "action": "disconnect", "client": "b"},
      {"t": 20, "action": "send", "from": "a", "to": "b", "message_id": "m"},
      {"t": 600, "action": "expire_tick"},
      {"t": 700, "expect": "status", "client": "a", "status": "EXPIRED", "message_id": "m", "count": 1}]})";
    CHECK_NOTHROW(sim::run_scenario(never));
  }

  TEST_CASE("failed expectations and bad scripts") {
    const std::string wrong = R"({"actions": [
      {"t": 0, "action": "register", "client": "a"},
      {"t": 5, "expect": "online", "client": "a", "value": false}]})";
    try {
      sim::run_scenario(wrong);
      FAIL("expected ScenarioError");
    } catch (const sim::ScenarioError& e) {
      const auto j = nlohmann::json::parse(e.report());
      CHECK(j["expectations"].back()["ok"] == false);
    }
    CHECK_THROWS_AS(sim::run_scenario("{}"), std::invalid_argument);
    CHECK_THROWS_AS(sim::run_scenario(R"({"actions":[{"t":0,"action":"dance"}]})"), std::invalid_argument);
  }

  TEST_CASE("bench: single client, single message") {
    for (auto mode : {bench::Mode::Sim, bench::Mode::Tcp}) {
      const auto r = bench::run_bench({.clients = 1, .messages = 1, .mode = mode});
      CHECK(r.requests == 1);
      CHECK(r.requests_per_second > 0);
      CHECK(r.delivered == 1);
      CHECK(r.lost == 0);
      CHECK(r.duplicated == 0);
    }
  }

  TEST_CASE("bench: sim runs are deterministic") {
    const bench::BenchOptions o{.clients = 4, .messages = 30, .seed = 3};
    const auto a = bench::run_bench(o), b = bench::run_bench(o);
    CHECK(a.delivered == b.delivered);
    CHECK(a.expired == b.expired);
    CHECK(a.virtual_ms == b.virtual_ms);
    CHECK(a.p99_ms == b.p99_ms);
    CHECK_THROWS_AS(bench::run_bench({.send_pct = 50}), std::invalid_argument);
  }

  TEST_CASE("trace format") {
    transport::Pdu p;
    p.command = transport::Command::SEND;
    p.txn_id = 3;
    p.headers = {{"To", "bob"}};
    p.body = "hello";
    const std::string frame = transport::encode_frame(p);
    const std::string text = FrameTracer::format(Direction::Out, 1234, "127.0.0.1:9", frame);
    CHECK(text.starts_with(">> 1.234 SEND txn=3 len=" + std::to_string(frame.size()) + " 127.0.0.1:9\n    hex: 00 00 00"));
    CHECK(text.find("\n    To: bob\n") != std::string::npos);
    CHECK(text.ends_with("    (body 5 bytes)\n"));
    CHECK(FrameTracer::format(Direction::In, 0, "", "xx").find("<< 0.000 UNDECODABLE") == 0);
    std::ostringstream sink;
    FrameTracer tracer(sink);
    tracer.trace(Direction::In, 5, "p", frame);
    CHECK(sink.str().starts_with("<< 0.005 SEND"));
  }

  TEST_CASE("cli: lint") {
    const auto r = mmsc({"lint", (kFixtures / "dup_kind.smil").string()});
    CHECK(r.code == kExitParse);
    CHECK(r.out.find("DuplicateKindInPar") != std::string::npos);
    TempDir tmp;
    std::ofstream(tmp.path / "ok.smil") << "<smil><body><par dur=\"1s\"/></body></smil>";
    CHECK(mmsc({"lint", (tmp.path / "ok.smil").string()}).code == kExitOk);
  }

  TEST_CASE("cli: compose, adapt and plan") {
    TempDir tmp;
    const auto mms_file = (tmp.path / "msg.mms").string();
    auto r = mmsc({"compose", (kFixtures / "two_slides.json").string(), "-o", mms_file, "--date-ms", "0"});
    REQUIRE(r.code == kExitOk);
    const auto plan_file = (tmp.path / "trace.json").string();
    r = mmsc({"plan", mms_file, "-o", plan_file});
    REQUIRE(r.code == kExitOk);
    const auto plan = nlohmann::json::parse(read_file(plan_file));
    int begins = 0;
    for (const auto& e : plan) begins += e["action"] == "ParBegin";
    CHECK(begins == 2);

    r = mmsc({"adapt", mms_file, "--device", "qvga"});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("<root-layout") != std::string::npos);
  }

  TEST_CASE("cli: play follows the control rules") {
    TempDir tmp;
    const auto mms_file = (tmp.path / "msg.mms").string();
    REQUIRE(mmsc({"compose", (kFixtures / "two_slides.json").string(), "-o", mms_file}).code == kExitOk);
    const auto r = mmsc({"play", mms_file, "--ops", "play,wait 1000,pause,wait 500,play,wait 2500,rewind,next,stop,play"});
    REQUIRE(r.code == kExitOk);
    std::vector<long> pos;
    const std::regex re(R"(pos=(\d+)ms)");
    for (std::sregex_iterator it(r.out.begin(), r.out.end(), re), end; it != end; ++it) pos.push_back(std::stol((*it)[1]));
    CHECK(pos == std::vector<long>{0, 1000, 1000, 1000, 1000, 3500, 3000, 8000, 0, 0});
    CHECK(r.out.find("mode=Stopped pos=0ms par=0 active=-") != std::string::npos);
    CHECK(mmsc({"play", mms_file, "--ops", "jump"}).code == kExitUsage);
  }

  TEST_CASE("cli: unreachable server") {
    TempDir tmp;
    const auto mms_file = (tmp.path / "msg.mms").string();
    REQUIRE(mmsc({"compose", (kFixtures / "text_only.json").string(), "-o", mms_file}).code == kExitOk);
    const std::string server = "127.0.0.1:" + std::to_string(unused_port());
    const auto r = mmsc({"send", "--server", server, "--from", "alice", "--to", "bob", mms_file});
    CHECK(r.code == kExitNetwork);
  }

  TEST_CASE("cli: usage errors and bench") {
    CHECK(mmsc({}).code == kExitUsage);
    CHECK(mmsc({"frobnicate"}).code == kExitUsage);
    CHECK(mmsc({"lint", "/no/such/file.smil"}).code != kExitOk);
    const auto r = mmsc({"bench", "--clients", "2", "--messages", "5", "--mode", "sim"});
    CHECK(r.code == kExitOk);
    CHECK(nlohmann::json::parse(r.out)["lost"] == 0);
  }

  TEST_CASE("cli: scenario") {
    TempDir tmp;
    const auto out = (tmp.path / "report.json").string();
    const auto r = mmsc({"scenario", (kFixtures / "scenarios" / "forward_offline.json").string(), "-o", out});
    CHECK(r.code == kExitOk);
    CHECK(nlohmann::json::parse(read_file(out))["frames"]["lost"] == 0);

    std::ofstream(tmp.path / "bad.json") << R"({"actions":[{"t":0,"action":"register","client":"a"},
      {"t":1,"expect":"stored","client":"a","count":3}]})";
    CHECK(mmsc({"scenario", (tmp.path / "bad.json").string()}).code == kExitProtocol);
  }
}
