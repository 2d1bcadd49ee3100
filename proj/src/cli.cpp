#include "mms/cli.hpp"

#include <pthread.h>
#include <signal.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "mms/bench.hpp"
#include "mms/client.hpp"
#include "mms/composer.hpp"
#include "mms/layout_adapter.hpp"
#include "mms/mime_codec.hpp"
#include "mms/playback.hpp"
#include "mms/relay_server.hpp"
#include "mms/sim.hpp"
#include "mms/smil_syntax.hpp"
#include "mms/trace.hpp"

namespace mms {

namespace {

namespace fs = std::filesystem;
using transport::StatusCode;

/// A command finished but the other side said no.
class ProtocolFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input rejected before any module saw it.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LintFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

void emit(std::ostream& out, const std::string& path, std::string_view data) {
  if (path.empty() || path == "-") {
    out << data;
  } else {
    write_file(path, data);
  }
}

bool is_smil_path(const std::string& path) {
  const auto ext = fs::path(path).extension().string();
  return ext == ".smil" || ext == ".smi" || ext == ".xml";
}

struct Loaded {
  smil::SmilTree tree;
  std::optional<mime::MmsEnvelope> envelope;
};

/// A .smil document, or the start part of a .mms envelope.
Loaded load_message(const std::string& path) {
  const std::string data = read_file(path);
  Loaded l;
  if (is_smil_path(path)) {
    l.tree = smil::parse_text(data);
    return l;
  }
  l.envelope = mime::decapsulate(data);
  const mime::MimePart* start = mime::start_part(*l.envelope);
  if (!start) throw mime::MimeError(mime::MimeErrorCode::MissingStart, 0, "envelope has no start part");
  l.tree = smil::parse_text(start->body);
  return l;
}

std::vector<smil::Violation> all_violations(const Loaded& l) {
  auto v = smil::validate(l.tree);
  if (l.envelope) {
    const auto r = mime::resolve_media(*l.envelope, l.tree);
    v.insert(v.end(), r.unbound.begin(), r.unbound.end());
  }
  return v;
}

void require_valid(const Loaded& l, const std::string& path) {
  const auto v = smil::validate(l.tree);
  if (v.empty()) return;
  std::string msg = path + ": " + std::to_string(v.size()) + " violation(s), first: " +
                    std::string(smil::violation_name(v.front().code)) + " at " + v.front().path;
  throw LintFailure(msg);
}

layout::DeviceProfile device_from(const std::string& spec) {
  if (spec.empty()) return layout::default_profile();
  if (fs::exists(spec)) return layout::load_profile(spec);
  return layout::builtin_profile(spec);
}

std::string describe(const smil::SmilTree& tree, const std::vector<playback::ActiveMedia>& active) {
  if (active.empty()) return "-";
  std::string s;
  for (const auto& a : active) {
    const auto& m = tree.pars[static_cast<std::size_t>(a.par_index)].media[static_cast<std::size_t>(a.media_index)];
    if (!s.empty()) s += ", ";
    s += std::string(smil::element_name(m.kind)) + ":" + m.src;
    if (a.region_id) s += "@" + *a.region_id;
    s += " z" + std::to_string(a.z);
  }
  return s;
}

std::string render_state(const smil::SmilTree& tree, const playback::RenderPlan& plan,
                         const playback::PlayerState& st) {
  std::string line = "mode=" + std::string(playback::mode_name(st.mode)) + " pos=" + std::to_string(st.position_ms) +
                     "ms par=" + std::to_string(st.current_par) + " active=";
  if (st.mode != playback::Mode::Stopped && st.position_ms < plan.total_ms) {
    line += describe(tree, playback::active_set(plan, st.position_ms));
  } else {
    line += "-";
  }
  return line;
}

net::Endpoint server_endpoint(const std::string& flag) {
  const char* env = std::getenv("MMS_SERVER");
  const std::string text = env && *env ? std::string(env) : flag;
  try {
    return net::parse_endpoint(text);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

void expect_ok(const std::string& what, const transport::SendResolved& r) {
  if (r.code != StatusCode::OK && r.code != StatusCode::STORED_OFFLINE) {
    throw ProtocolFailure(what + " answered " + std::string(transport::status_name(r.code)));
  }
}

std::string safe_name(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  }
  return s;
}

struct Globals {
  bool trace = false;
  std::unique_ptr<FrameTracer> tracer;
  FrameTracer* get() { return tracer.get(); }
};

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"MMS composer, player and relay tool", "mmsc"};
  app.require_subcommand(1);
  Globals g;
  app.add_flag("--trace", g.trace, "Dump every transport frame (hex and decoded) to stderr");

  std::function<void()> run;
  const std::string default_server = "127.0.0.1:" + std::to_string(transport::kDefaultPort);

  // compose
  std::string c_manifest, c_out = "-", c_mid;
  std::int64_t c_date = -1;
  std::uint64_t c_seed = 1;
  auto* compose = app.add_subcommand("compose", "Build a .mms message from a JSON manifest");
  compose->add_option("manifest", c_manifest, "Manifest JSON")->required();
  compose->add_option("-o,--output", c_out, "Output .mms file");
  compose->add_option("--date-ms", c_date, "Date header as Unix milliseconds (default: now)");
  compose->add_option("--message-id", c_mid, "Message-ID header");
  compose->add_option("--seed", c_seed, "Boundary seed");
  compose->callback([&] {
    run = [&] {
      const auto manifest = composer::load_manifest(c_manifest);
      composer::ExportOptions opts;
      if (c_date >= 0) opts.date_epoch_ms = c_date;
      if (!c_mid.empty()) opts.message_id = c_mid;
      opts.boundary_seed = c_seed;
      emit(out, c_out, composer::export_mms(manifest, opts));
    };
  });

  // lint
  std::string l_file;
  bool l_lenient = false;
  auto* lint = app.add_subcommand("lint", "Check a .smil or .mms file");
  lint->add_option("file", l_file, "Input file")->required();
  lint->add_flag("--lenient", l_lenient, "Skip unknown elements with a warning");
  lint->callback([&] {
    run = [&] {
      Loaded l;
      if (l_lenient && is_smil_path(l_file)) {
        const auto tokens = smil::tokenize(read_file(l_file));
        auto outcome = smil::parse(tokens, smil::ParseOptions{true});
        for (const auto& w : outcome.warnings) {
          out << l_file << ":" << w.line << ":" << w.column << ": warning: " << w.detail << "\n";
        }
        l.tree = std::move(outcome.tree);
      } else {
        l = load_message(l_file);
      }
      const auto violations = all_violations(l);
      for (const auto& v : violations) {
        out << l_file << ": " << smil::violation_name(v.code) << " at " << v.path;
        if (!v.detail.empty()) out << ": " << v.detail;
        out << "\n";
      }
      if (!violations.empty()) throw LintFailure(std::to_string(violations.size()) + " violation(s)");
      out << l_file << ": ok (" << l.tree.pars.size() << " par(s))\n";
    };
  });

  // adapt
  std::string a_file, a_device, a_out = "-";
  auto* adapt = app.add_subcommand("adapt", "Fit a message layout to a device; prints the SMIL");
  adapt->add_option("file", a_file, "Input .smil or .mms")->required();
  adapt->add_option("--device", a_device, "Profile JSON or built-in name (default, qcif, qvga, small, vga)");
  adapt->add_option("-o,--output", a_out, "Output .smil");
  adapt->callback([&] {
    run = [&] {
      const Loaded l = load_message(a_file);
      require_valid(l, a_file);
      emit(out, a_out, smil::serialize(layout::fit(l.tree, device_from(a_device))));
    };
  });

  // plan
  std::string p_file, p_device, p_out = "-";
  auto* plan = app.add_subcommand("plan", "Emit the render plan of a message as JSON");
  plan->add_option("file", p_file, "Input .mms or .smil")->required();
  plan->add_option("--device", p_device, "Profile JSON or built-in name");
  plan->add_option("-o,--output", p_out, "Output JSON");
  plan->callback([&] {
    run = [&] {
      const Loaded l = load_message(p_file);
      require_valid(l, p_file);
      const auto fitted = layout::fit(l.tree, device_from(p_device));
      emit(out, p_out, playback::plan_to_json(playback::build_plan(fitted)));
    };
  });

  // play
  std::string y_file, y_device, y_ops;
  bool y_realtime = false;
  double y_speed = 1.0;
  auto* play = app.add_subcommand("play", "Step through playback with control inputs");
  play->add_option("file", y_file, "Input .mms or .smil")->required();
  play->add_option("--device", y_device, "Profile JSON or built-in name");
  play->add_option("--ops", y_ops,
                   "Comma-separated inputs: play, pause, stop, rewind, next, wait <ms> (default: read stdin)");
  play->add_flag("--realtime", y_realtime, "Play from the start on the wall clock until the end");
  play->add_option("--speed", y_speed, "Clock multiplier for --realtime")->check(CLI::PositiveNumber);
  play->callback([&] {
    run = [&] {
      const Loaded l = load_message(y_file);
      require_valid(l, y_file);
      const auto tree = layout::fit(l.tree, device_from(y_device));
      const auto rp = playback::build_plan(tree);
      playback::PlayerState st;
      out << "total=" << rp.total_ms << "ms pars=" << tree.pars.size() << "\n";

      if (y_realtime) {
        // OS-timer adapter: sleep, measure, feed the elapsed time in.
        st = playback::control(st, rp, playback::Input::Play);
        out << "[play] " << render_state(tree, rp, st) << "\n";
        auto last = std::chrono::steady_clock::now();
        int shown_par = st.current_par;
        while (st.mode == playback::Mode::Playing) {
          std::this_thread::sleep_for(std::chrono::milliseconds(10));
          const auto now = std::chrono::steady_clock::now();
          const double ms = std::chrono::duration<double, std::milli>(now - last).count() * y_speed;
          const auto whole = static_cast<std::int64_t>(ms);
          if (whole <= 0) continue;
          last += std::chrono::duration_cast<std::chrono::steady_clock::duration>(
              std::chrono::duration<double, std::milli>(static_cast<double>(whole) / y_speed));
          st = playback::advance(st, rp, whole);
          if (st.current_par != shown_par || st.mode != playback::Mode::Playing) {
            shown_par = st.current_par;
            out << "[tick] " << render_state(tree, rp, st) << "\n";
          }
        }
        return;
      }

      std::vector<std::string> ops;
      if (!y_ops.empty()) {
        std::stringstream ss(y_ops);
        for (std::string op; std::getline(ss, op, ',');) ops.push_back(op);
      } else {
        for (std::string op; std::getline(std::cin, op);) ops.push_back(op);
      }
      for (std::string op : ops) {
        op.erase(0, op.find_first_not_of(" \t\r"));
        op.erase(op.find_last_not_of(" \t\r") + 1);
        if (op.empty()) continue;
        if (op.rfind("wait", 0) == 0) {
          std::int64_t ms = 0;
          try {
            ms = std::stoll(op.substr(4));
          } catch (const std::exception&) {
            throw UsageError("bad wait step '" + op + "'");
          }
          if (ms < 0) throw UsageError("bad wait step '" + op + "'");
          st = playback::advance(st, rp, ms);
        } else if (const auto in = playback::input_from_name(op)) {
          st = playback::control(st, rp, *in);
        } else {
          throw UsageError("unknown playback input '" + op + "'");
        }
        out << "[" << op << "] " << render_state(tree, rp, st) << "\n";
      }
    };
  });

  // send
  std::string s_server = default_server, s_from, s_to, s_file, s_mid;
  int timeout_ms = 5000;
  auto* send = app.add_subcommand("send", "Register and send a .mms file through a relay");
  send->add_option("--server", s_server, "host:port (MMS_SERVER overrides)");
  send->add_option("--from", s_from, "Sender id")->required();
  send->add_option("--to", s_to, "Recipient id")->required();
  send->add_option("--message-id", s_mid, "Message-ID (default: from the envelope)");
  send->add_option("--timeout-ms", timeout_ms, "Status timeout");
  send->add_option("file", s_file, ".mms file")->required();
  send->callback([&] {
    run = [&] {
      const std::string bytes = read_file(s_file);
      const auto env = mime::decapsulate(bytes);
      std::optional<std::string> mid;
      if (!s_mid.empty()) {
        mid = s_mid;
      } else if (const auto* h = mime::find_header(env.transport_headers, "Message-ID")) {
        mid = *h;
      }
      const auto ep = server_endpoint(s_server);
      TcpClient client(s_from, ep.host, ep.port, g.get());
      expect_ok("REGISTER", client.register_client(timeout_ms));
      const auto txn = client.session().submit_send(bytes, s_to, mid);
      const auto r = client.await(txn, timeout_ms);
      out << "SEND " << s_from << " -> " << s_to << ": " << transport::status_name(r.code) << "\n";
      expect_ok("SEND", r);
    };
  });

  // inbox
  std::string i_server = default_server, i_id, i_save;
  int i_wait = 300;
  auto* inbox = app.add_subcommand("inbox", "Register, collect waiting messages and list them");
  inbox->add_option("--server", i_server, "host:port (MMS_SERVER overrides)");
  inbox->add_option("--id", i_id, "Client id")->required();
  inbox->add_option("--wait-ms", i_wait, "How long to collect after registering");
  inbox->add_option("--save", i_save, "Directory to store received .mms bodies");
  inbox->callback([&] {
    run = [&] {
      const auto ep = server_endpoint(i_server);
      TcpClient client(i_id, ep.host, ep.port, g.get());
      expect_ok("REGISTER", client.register_client(timeout_ms));
      const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(i_wait);
      while (std::chrono::steady_clock::now() < deadline) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        client.poll(static_cast<int>(std::max<std::int64_t>(1, left.count())));
      }
      client.flush();
      std::size_t n = 0;
      while (auto m = client.session().take_inbox()) {
        ++n;
        const auto* mid = m->header(transport::hdr::MessageId);
        const auto* from = m->header(transport::hdr::From);
        const auto* fwd = m->header(transport::hdr::ForwardedBy);
        out << (mid ? *mid : "?") << "  from " << (from ? *from : "?") << "  "
            << (m->body ? m->body->size() : 0) << " bytes";
        if (fwd) out << "  forwarded by " << *fwd;
        out << "\n";
        if (!i_save.empty() && m->body) {
          fs::create_directories(i_save);
          write_file((fs::path(i_save) / (safe_name(mid ? *mid : "message") + ".mms")).string(), *m->body);
        }
      }
      out << n << " message(s)\n";
    };
  });

  // forward / delete / stats: single request helpers
  std::string r_server = default_server, r_id, r_mid, r_to;
  auto request = [&](const std::string& what, auto submit) {
    const auto ep = server_endpoint(r_server);
    TcpClient client(r_id, ep.host, ep.port, g.get());
    expect_ok("REGISTER", client.register_client(timeout_ms));
    client.poll(0);
    const auto r = client.await(submit(client.session()), timeout_ms);
    return std::make_pair(what, r);
  };
  auto* forward = app.add_subcommand("forward", "Forward a received message to another client");
  forward->add_option("--server", r_server, "host:port (MMS_SERVER overrides)");
  forward->add_option("--id", r_id, "Client id")->required();
  forward->add_option("--message-id", r_mid, "Message to forward")->required();
  forward->add_option("--to", r_to, "New recipient")->required();
  forward->callback([&] {
    run = [&] {
      const auto [what, r] = request("FORWARD", [&](auto& s) { return s.submit_forward(r_mid, r_to); });
      out << what << " " << r_mid << " -> " << r_to << ": " << transport::status_name(r.code) << "\n";
      expect_ok(what, r);
    };
  });
  auto* del = app.add_subcommand("delete", "Delete a message still held by the relay");
  del->add_option("--server", r_server, "host:port (MMS_SERVER overrides)");
  del->add_option("--id", r_id, "Client id")->required();
  del->add_option("--message-id", r_mid, "Message to delete")->required();
  del->callback([&] {
    run = [&] {
      const auto [what, r] = request("DELETE", [&](auto& s) { return s.submit_delete(r_mid); });
      out << what << " " << r_mid << ": " << transport::status_name(r.code) << "\n";
      expect_ok(what, r);
    };
  });
  auto* stats = app.add_subcommand("stats", "Query the relay's counters");
  stats->add_option("--server", r_server, "host:port (MMS_SERVER overrides)");
  stats->add_option("--id", r_id, "Client id to register as")->required();
  stats->callback([&] {
    run = [&] {
      const auto [what, r] = request("STATUS", [&](auto& s) { return s.submit_stats_query(); });
      expect_ok(what, r);
      out << (r.body ? nlohmann::ordered_json::parse(*r.body).dump(2) : "{}") << "\n";
    };
  });

  // serve
  std::string v_config;
  int v_port = -1;
  std::int64_t v_dead = -1;
  auto* serve = app.add_subcommand("serve", "Run the relay server until SIGINT/SIGTERM");
  serve->add_option("--config", v_config, "Server config JSON");
  serve->add_option("--port", v_port, "Listen port (0: ephemeral)")->check(CLI::Range(0, 65535));
  serve->add_option("--dead-time-ms", v_dead, "Offline hold time")->check(CLI::PositiveNumber);
  serve->callback([&] {
    run = [&] {
      relay::ServerConfig cfg = v_config.empty() ? relay::ServerConfig{} : relay::load_config(v_config);
      if (v_port >= 0) cfg.port = static_cast<std::uint16_t>(v_port);
      if (v_dead > 0) cfg.dead_time_ms = v_dead;
      sigset_t set;
      sigemptyset(&set);
      sigaddset(&set, SIGINT);
      sigaddset(&set, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &set, nullptr);
      relay::RelayServer server(cfg, g.get());
      const auto port = server.start();
      out << "listening on " << cfg.bind_host << ":" << port << " (dead time " << cfg.dead_time_ms << " ms)"
          << std::endl;
      int sig = 0;
      sigwait(&set, &sig);
      server.stop();
      out << "stopped; " << server.stats_json() << std::endl;
    };
  });

  // bench
  bench::BenchOptions b;
  std::string b_mode = "sim", b_mix = "80/10/10";
  auto* bn = app.add_subcommand("bench", "Multi-client load run with conservation check");
  bn->add_option("--clients", b.clients, "Number of clients")->check(CLI::PositiveNumber);
  bn->add_option("--messages", b.messages, "Commands per client")->check(CLI::PositiveNumber);
  bn->add_option("--mode", b_mode, "sim or tcp")->check(CLI::IsMember({"sim", "tcp", "tcp-loopback"}));
  bn->add_option("--seed", b.seed, "Seed");
  bn->add_option("--mix", b_mix, "SEND/DELETE/FORWARD percentages");
  bn->add_option("--churn", b.churn_pct, "Sim: percent chance of going offline after a command");
  bn->add_option("--payload", b.payload_bytes, "Text bytes per message");
  bn->callback([&] {
    run = [&] {
      b.mode = b_mode == "sim" ? bench::Mode::Sim : bench::Mode::Tcp;
      char s1 = 0, s2 = 0;
      std::istringstream mix(b_mix);
      if (!(mix >> b.send_pct >> s1 >> b.delete_pct >> s2 >> b.forward_pct) || s1 != '/' || s2 != '/') {
        throw UsageError("--mix expects S/D/F, e.g. 80/10/10");
      }
      out << bench::run_bench(b).to_json();
    };
  });

  // scenario
  std::string z_file, z_out = "-";
  auto* scen = app.add_subcommand("scenario", "Run a scripted scenario on virtual time");
  scen->add_option("script", z_file, "Scenario JSON")->required();
  scen->add_option("-o,--output", z_out, "Report JSON");
  scen->callback([&] {
    run = [&] {
      const std::string base = fs::path(z_file).parent_path().string();
      try {
        emit(out, z_out, sim::run_scenario(read_file(z_file), base, g.get()));
      } catch (const sim::ScenarioError& e) {
        emit(out, z_out, e.report());
        throw;
      }
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  if (g.trace) g.tracer = std::make_unique<FrameTracer>(err);

  try {
    if (run) run();
    return kExitOk;
  } catch (const LintFailure& e) {
    err << "mmsc: " << e.what() << "\n";
    return kExitParse;
  } catch (const smil::LexError& e) {
    err << "mmsc: SMIL lex error at " << e.line() << ":" << e.column() << ": " << e.what() << "\n";
    return kExitParse;
  } catch (const smil::ParseError& e) {
    err << "mmsc: SMIL " << smil::parse_error_name(e.code()) << " at " << e.line() << ":" << e.column() << ": "
        << e.detail() << "\n";
    return kExitParse;
  } catch (const smil::SerializeError& e) {
    err << "mmsc: " << e.what() << "\n";
    return kExitParse;
  } catch (const mime::MimeError& e) {
    err << "mmsc: MIME " << mime::mime_error_name(e.code()) << " at byte " << e.offset() << ": " << e.what()
        << "\n";
    return kExitParse;
  } catch (const mime::EnvelopeError& e) {
    err << "mmsc: " << e.what() << "\n";
    return kExitParse;
  } catch (const composer::ComposeError& e) {
    err << "mmsc: " << e.what() << "\n";
    return kExitParse;
  } catch (const playback::PlanError& e) {
    err << "mmsc: " << e.what() << "\n";
    return kExitParse;
  } catch (const nlohmann::json::exception& e) {
    err << "mmsc: bad JSON: " << e.what() << "\n";
    return kExitParse;
  } catch (const net::NetError& e) {
    err << "mmsc: network: " << e.what() << "\n";
    return kExitNetwork;
  } catch (const transport::FrameError& e) {
    err << "mmsc: protocol: " << e.what() << "\n";
    return kExitProtocol;
  } catch (const ProtocolFailure& e) {
    err << "mmsc: " << e.what() << "\n";
    return kExitProtocol;
  } catch (const bench::BenchError& e) {
    err << "mmsc: bench: " << e.what() << "\n";
    return kExitProtocol;
  } catch (const sim::ScenarioError& e) {
    err << "mmsc: scenario: " << e.what() << "\n";
    return kExitProtocol;
  } catch (const std::exception& e) {
    err << "mmsc: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace mms
