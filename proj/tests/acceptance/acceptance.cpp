// Acceptance runner. `mms_acceptance` runs every criterion, `mms_acceptance N`
// runs one. One PASS/FAIL line per criterion; exit status 1 if any failed.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "mms/bench.hpp"
#include "mms/composer.hpp"
#include "mms/layout_adapter.hpp"
#include "mms/mime_codec.hpp"
#include "mms/sim.hpp"
#include "properties.hpp"

using namespace mms;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = MMS_FIXTURES;

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail = why + (detail.empty() ? "" : "; " + detail);
    pass = false;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string without_wall_clock(const bench::BenchReport& r) {
  auto j = nlohmann::ordered_json::parse(r.to_json());
  j.erase("elapsed_s");
  j.erase("requests_per_second");
  return j.dump();
}

/// Runs `count` seeds of a check, stopping at the first failure.
template <typename Check>
void seeds(Outcome& o, std::uint64_t count, Check&& check, const char* what) {
  for (std::uint64_t seed = 1; seed <= count; ++seed) {
    const std::string failure = check(seed);
    if (!failure.empty()) {
      o.fail(std::string(what) + " " + failure);
      return;
    }
  }
}

Outcome multi_client() {
  Outcome o;
  const bench::BenchOptions opts{.clients = 7, .messages = 100, .mode = bench::Mode::Sim};
  const auto t0 = std::chrono::steady_clock::now();
  bench::BenchReport a, b;
  try {
    a = bench::run_bench(opts);
    b = bench::run_bench(opts);
  } catch (const bench::BenchError& e) {
    o.fail(std::string("conservation: ") + e.what());
    return o;
  }
  const double elapsed = seconds_since(t0) / 2;
  o.detail = "requests=" + std::to_string(a.requests) + " accepted=" + std::to_string(a.accepted) +
             " delivered=" + std::to_string(a.delivered) + " held=" + std::to_string(a.held) +
             " expired=" + std::to_string(a.expired) + " deleted=" + std::to_string(a.deleted) +
             " lost=" + std::to_string(a.lost) + " dup=" + std::to_string(a.duplicated) + " runtime=" + fmt(elapsed) +
             "s";
  if (a.requests != 700) o.fail("expected 700 requests");
  if (a.lost != 0) o.fail("lost deliveries");
  if (a.duplicated != 0) o.fail("duplicated deliveries");
  if (a.accepted != a.delivered - a.retrieved + a.held + a.expired + a.deleted) o.fail("conservation");
  if (without_wall_clock(a) != without_wall_clock(b)) o.fail("two runs differ");
  if (elapsed >= 30) o.fail("too slow");
  return o;
}

Outcome throughput() {
  Outcome o;
  bench::BenchReport r;
  try {
    r = bench::run_bench({.clients = 8, .messages = 1000, .mode = bench::Mode::Tcp});
  } catch (const std::exception& e) {
    o.fail(e.what());
    return o;
  }
  o.detail = "requests=" + std::to_string(r.requests) + " elapsed=" + fmt(r.elapsed_s, 3) +
             "s rps=" + fmt(r.requests_per_second, 0) + " p99=" + fmt(r.p99_ms) + "ms lost=" + std::to_string(r.lost);
  if (r.requests != 8000) o.fail("expected 8000 requests");
  if (r.lost != 0 || r.duplicated != 0) o.fail("lost or duplicated deliveries");
  if (r.requests_per_second < 500) o.fail("below 500 requests/s");
  return o;
}

Outcome smil_roundtrip() {
  Outcome o;
  seeds(o, 1000, prop::smil_roundtrip, "smil");
  if (o.pass) o.detail = "1000/1000 trees";
  return o;
}

Outcome scheduler_oracle() {
  Outcome o;
  prop::ScheduleStats stats;
  const auto t0 = std::chrono::steady_clock::now();
  seeds(o, 500, [&](std::uint64_t s) { return prop::schedule_vs_ticks(s, &stats); }, "schedule");
  const double elapsed = seconds_since(t0);
  o.detail = "500 trees, " + std::to_string(stats.ticks) + " ms ticked, runtime=" + fmt(elapsed) + "s" +
             (o.detail.empty() ? "" : "; " + o.detail);
  if (elapsed >= 60) o.fail("too slow");
  return o;
}

Outcome mime_roundtrip() {
  Outcome o;
  prop::MimeStats stats;
  seeds(o, 1000, [&](std::uint64_t s) { return prop::mime_roundtrip(s, &stats); }, "mime");
  for (const auto& [manifest, golden, mid] : {std::tuple{"two_slides.json", "two_slides.mms", "golden-1"},
                                              std::tuple{"text_only.json", "text_only.mms", "golden-2"}}) {
    const std::string want = read_file(kFixtures / golden);
    const auto m = composer::load_manifest(kFixtures / manifest);
    const std::string got =
        composer::export_mms(m, {.date_epoch_ms = 1'700'000'000'000, .message_id = mid, .boundary_seed = 7});
    if (want.empty() || got != want) o.fail(std::string("golden ") + golden + " differs from export");
    try {
      if (mime::encapsulate(mime::decapsulate(want)) != want) o.fail(std::string("golden ") + golden + " re-encode");
    } catch (const std::exception& e) {
      o.fail(std::string("golden ") + golden + ": " + e.what());
    }
  }
  o.detail = "1000 envelopes, " + std::to_string(stats.seeded) + " seeded with the first boundary, " +
             std::to_string(stats.redrawn) + " redrawn, 2 golden files" + (o.detail.empty() ? "" : "; " + o.detail);
  return o;
}

Outcome store_and_forward() {
  Outcome o;
  for (const char* name : {"offline_fifo", "strict_expiry", "delete_stored", "forward_offline"}) {
    try {
      sim::run_scenario(read_file(kFixtures / "scenarios" / (std::string(name) + ".json")), kFixtures.string());
    } catch (const std::exception& e) {
      o.fail(std::string("scenario ") + name + ": " + e.what());
    }
  }
  prop::RelayStats stats;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) prop::relay_vs_model(seed, 1000, stats);
  o.detail = "4 scenarios, " + std::to_string(stats.steps) + " model steps, divergences=" +
             std::to_string(stats.divergences) + " (flushed=" + std::to_string(stats.flushed_on_register) +
             " expired=" + std::to_string(stats.expired) + " kept_at_boundary=" +
             std::to_string(stats.kept_at_boundary) + " deleted_stored=" + std::to_string(stats.deleted_stored) +
             " forwarded_offline=" + std::to_string(stats.forwarded_offline) + ")" +
             (o.detail.empty() ? "" : "; " + o.detail);
  if (stats.steps < 10'000) o.fail("fewer than 10000 steps");
  if (stats.divergences != 0) o.fail("first divergence: " + stats.first_divergence);
  if (stats.flushed_on_register == 0 || stats.expired == 0 || stats.kept_at_boundary == 0 ||
      stats.deleted_stored == 0 || stats.forwarded_offline == 0) {
    o.fail("a behaviour was never exercised");
  }
  return o;
}

Outcome frame_codec() {
  Outcome o;
  seeds(o, 10'000, prop::frame_roundtrip, "roundtrip");
  prop::MutationStats stats;
  seeds(o, 10'000, [&](std::uint64_t s) { return prop::frame_mutation(s, &stats); }, "mutation");
  o.detail = "10000 round trips, 10000 mutations (" + std::to_string(stats.rejected) + " rejected, " +
             std::to_string(stats.accepted) + " re-encoded exactly)" + (o.detail.empty() ? "" : "; " + o.detail);
  return o;
}

Outcome layout_fit() {
  Outcome o;
  seeds(o, 1000, prop::layout_fit, "layout");
  smil::SmilTree t;
  t.layout.root_width = 320;
  t.layout.root_height = 240;
  smil::Region r;
  r.id = "Image";
  r.left = smil::Dimension::px(0);
  r.top = smil::Dimension::px(0);
  r.width = smil::Dimension::px(320);
  r.height = smil::Dimension::px(120);
  t.layout.regions.push_back(r);
  const auto fitted = layout::fit(t, {"target", 160, 120});
  const auto& g = fitted.layout.regions.at(0);
  const std::string got = "(" + fmt(g.left.value, 0) + "," + fmt(g.top.value, 0) + "," + fmt(g.width.value, 0) + "," +
                          fmt(g.height.value, 0) + ")";
  o.detail = "1000 layouts, 320x240 -> 160x120 gives " + got + (o.detail.empty() ? "" : "; " + o.detail);
  if (got != "(0,0,160,60)") o.fail("worked example");
  return o;
}

const std::function<Outcome()> kCriteria[] = {multi_client,      throughput,  smil_roundtrip, scheduler_oracle,
                                              mime_roundtrip,    store_and_forward, frame_codec, layout_fit};
const char* const kNames[] = {"multi-client sim bench", "tcp throughput",   "smil round trip",
                              "scheduler oracle",       "mime round trip",  "store and forward",
                              "frame codec",            "layout adapter"};

}  // namespace

int main(int argc, char** argv) {
  int first = 1, last = 8;
  if (argc > 1) {
    first = last = std::atoi(argv[1]);
    if (first < 1 || first > 8) {
      std::cerr << "usage: mms_acceptance [1-8]\n";
      return 2;
    }
  }
  bool all = true;
  for (int n = first; n <= last; ++n) {
    Outcome o;
    try {
      o = kCriteria[n - 1]();
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << n << " " << kNames[n - 1] << ": " << o.detail << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
