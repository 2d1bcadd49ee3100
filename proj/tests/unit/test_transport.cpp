#include <fstream>
#include <sstream>

#include "doctest.h"

#include "gen.hpp"
#include "mms/transport.hpp"
#include "properties.hpp"

using namespace mms::transport;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string with_prefix(std::string_view payload) {
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::string out{static_cast<char>(n >> 24), static_cast<char>(n >> 16), static_cast<char>(n >> 8),
                  static_cast<char>(n)};
  return out + std::string(payload);
}

FrameError::Code frame_error(std::string_view bytes, std::size_t max_body = kDefaultMaxBody) {
  try {
    decode_frame(bytes, max_body);
  } catch (const FrameError& e) {
    return e.code();
  }
  FAIL("no FrameError");
  return FrameError::Code::InvalidPdu;
}

Pdu notify(std::uint32_t txn, std::string mid) {
  Pdu p;
  p.command = Command::NOTIFY;
  p.txn_id = txn;
  p.headers = {{"From", "bob"}, {"Message-ID", std::move(mid)}};
  p.body = "envelope";
  return p;
}

}  // namespace

TEST_SUITE("transport_protocol") {
  TEST_CASE("register frame bytes") {
    Pdu p;
    p.command = Command::REGISTER;
    p.txn_id = 1;
    p.headers = {{"From", "alice"}};
    const std::string bytes = encode_frame(p);
    CHECK(bytes == with_prefix("REGISTER 1\r\nFrom: alice\r\n\r\n"));
    CHECK(bytes == read_file(std::string(MMS_FIXTURES) + "/register.frame"));
    CHECK(decode_frame(bytes) == p);
  }

  TEST_CASE("send frame fixture") {
    const Pdu p = decode_frame(read_file(std::string(MMS_FIXTURES) + "/send.frame"));
    CHECK(p.command == Command::SEND);
    CHECK(p.txn_id == 2);
    REQUIRE(p.header("To") != nullptr);
    CHECK(*p.header("To") == "bob");
    CHECK(p.header("to") == nullptr);
    CHECK(p.body == "hello");
  }

  TEST_CASE("decode errors") {
    const std::string good = with_prefix("REGISTER 1\r\nFrom: alice\r\n\r\n");
    // Declared length cuts into the header section.
    std::string shorter = good;
    shorter[3] = 12;
    shorter.resize(4 + 12);
    CHECK(frame_error(shorter) == FrameError::Code::Truncated);
    CHECK(frame_error(good.substr(0, 3)) == FrameError::Code::Truncated);
    CHECK(frame_error(good.substr(0, good.size() - 1)) == FrameError::Code::Truncated);
    CHECK(frame_error(good + "x") == FrameError::Code::LengthMismatch);
    CHECK(frame_error(with_prefix("FETCH 1\r\n\r\n")) == FrameError::Code::BadCommand);
    CHECK(frame_error(with_prefix("SEND x\r\n\r\nbody")) == FrameError::Code::BadCommand);
    CHECK(frame_error(with_prefix("REGISTER 1\r\nFrom alice\r\n\r\n")) == FrameError::Code::BadHeaders);
    CHECK(frame_error(with_prefix("SEND 1\r\nTo: b\r\n\r\n")) == FrameError::Code::InvalidPdu);
    CHECK(frame_error(with_prefix("STATUS 1\r\n\r\n")) == FrameError::Code::InvalidPdu);
    CHECK(frame_error(with_prefix("SEND 1\r\n\r\n12345"), 4) == FrameError::Code::TooLarge);
  }

  TEST_CASE("unknown command still reports its txn") {
    try {
      decode_frame(with_prefix("FETCH 42\r\n\r\n"));
      FAIL("expected FrameError");
    } catch (const FrameError& e) {
      CHECK(e.code() == FrameError::Code::BadCommand);
      CHECK(e.txn() == 42u);
    }
  }

  TEST_CASE("encoder refuses invalid pdus") {
    Pdu p;
    p.command = Command::SEND;
    CHECK_THROWS_AS(encode_frame(p), FrameError);
    p.body = "";
    CHECK_THROWS_AS(encode_frame(p), FrameError);
    p.body = "x";
    p.headers = {{"Bad Name", "v"}};
    CHECK_THROWS_AS(encode_frame(p), FrameError);
    p.headers = {{"To", "a\r\nb"}};
    CHECK_THROWS_AS(encode_frame(p), FrameError);
  }

  TEST_CASE("frame reader reassembles a byte stream") {
    std::string stream;
    std::vector<Pdu> sent;
    gen::Rng rng(3);
    for (int i = 0; i < 20; ++i) {
      sent.push_back(gen::pdu(rng));
      stream += encode_frame(sent.back());
    }
    FrameReader reader;
    std::vector<Pdu> got;
    for (std::size_t pos = 0; pos < stream.size();) {
      const std::size_t n = std::min<std::size_t>(stream.size() - pos, 1 + rng.below(50));
      reader.feed(std::string_view(stream).substr(pos, n));
      pos += n;
      while (auto f = reader.next_frame()) got.push_back(decode_frame(*f));
    }
    CHECK(got == sent);
    CHECK(reader.buffered() == 0);

    // The reader only bounds the declared length; the body cap is exact in
    // decode_frame.
    FrameReader capped(8);
    capped.feed(encode_frame(notify(1, "m")));
    const auto small = capped.next_frame();
    REQUIRE(small.has_value());
    CHECK(frame_error(*small, 4) == FrameError::Code::TooLarge);
    capped.feed(std::string("\x00\x10\x00\x00", 4));
    CHECK_THROWS_AS(capped.next_frame(), FrameError);
  }

  TEST_CASE("names and status helpers") {
    for (int i = 0; i < kCommandCount; ++i) {
      CHECK(command_from_name(command_name(static_cast<Command>(i))) == static_cast<Command>(i));
    }
    for (int i = 0; i < kStatusCount; ++i) {
      CHECK(status_from_name(status_name(static_cast<StatusCode>(i))) == static_cast<StatusCode>(i));
    }
    const Pdu s = make_status(9, StatusCode::STORED_OFFLINE, 4);
    CHECK(status_of(s) == StatusCode::STORED_OFFLINE);
    CHECK(orig_txn_of(s) == 4u);
    check_pdu(s);
  }

  TEST_CASE("session txn numbering and queues") {
    ClientSession s("alice");
    CHECK_THROWS_AS(s.submit_send("env", "bob"), NotRegistered);
    CHECK(s.submit_register() == 1);
    CHECK(s.next_outgoing()->command == Command::REGISTER);
    CHECK(s.submit_send("env", "bob", "m1") == 2);
    CHECK(s.cmd_out_size() == 1);
    CHECK(s.submit_delete("m1") == 3);
    CHECK(s.cmd_out_size() == 2);
    CHECK(s.next_outgoing()->txn_id == 2);
    CHECK(s.next_outgoing()->txn_id == 3);
    CHECK_FALSE(s.next_outgoing().has_value());
    CHECK(s.await_status_size() == 3);
  }

  TEST_CASE("session reacts to server frames") {
    ClientSession s("alice");
    s.submit_register();
    s.submit_send("env", "bob");
    while (s.next_outgoing()) {
    }
    auto ev = s.on_frame(make_status(1, StatusCode::OK, 2));
    REQUIRE(ev.size() == 1);
    CHECK(std::get<SendResolved>(ev[0]) == SendResolved{2, Command::SEND, StatusCode::OK, std::nullopt});
    CHECK(s.await_status_size() == 1);  // the REGISTER

    ev = s.on_frame(notify(7, "m9"));
    CHECK(std::get<MessageArrived>(ev[0]) == MessageArrived{"m9", "bob"});
    CHECK(s.inbox_size() == 1);
    CHECK(s.status_out_size() == 1);
    // Acks go out before queued commands.
    s.submit_delete("m9");
    const auto ack = s.next_outgoing();
    CHECK(ack->command == Command::STATUS);
    CHECK(orig_txn_of(*ack) == 7u);
    CHECK(s.next_outgoing()->command == Command::DELETE);

    ev = s.on_frame(make_status(2, StatusCode::OK, 99));
    CHECK(std::get<Orphan>(ev[0]) == Orphan{99});
    Pdu stray;
    stray.command = Command::SEND;
    stray.body = "x";
    CHECK(std::get<Unexpected>(s.on_frame(stray)[0]).command == Command::SEND);
    CHECK(s.take_inbox()->header("Message-ID") != nullptr);
    CHECK_FALSE(s.take_inbox().has_value());
  }

  TEST_CASE("pending age") {
    ClientSession s("a");
    CHECK_FALSE(s.oldest_pending_age(100).has_value());
    s.submit_register(10);
    s.submit_stats_query(50);
    CHECK(s.oldest_pending_age(100) == 90);
  }

  TEST_CASE("property: interleaved submits and arrivals keep the queues consistent") {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
      gen::Rng rng(seed);
      ClientSession s("me");
      s.submit_register();
      std::vector<std::uint32_t> in_flight;
      std::vector<std::uint32_t> submitted{1};
      std::size_t notifies = 0, resolved = 0, acks_sent = 0, cmds_sent = 0;
      std::vector<std::string> arrivals;
      for (int i = 0; i < 200; ++i) {
        switch (rng.below(4)) {
          case 0: submitted.push_back(s.submit_send("env", "peer")); break;
          case 1: {
            const std::string mid = "n" + std::to_string(i);
            s.on_frame(notify(static_cast<std::uint32_t>(1000 + i), mid));
            arrivals.push_back(mid);
            ++notifies;
            break;
          }
          case 2:
            if (auto p = s.next_outgoing()) {
              if (p->command == Command::STATUS) {
                ++acks_sent;
              } else {
                ++cmds_sent;
                in_flight.push_back(p->txn_id);
              }
            }
            break;
          case 3:
            if (!in_flight.empty()) {
              const auto k = rng.below(in_flight.size());
              const auto ev = s.on_frame(make_status(0, StatusCode::OK, in_flight[k]));
              CHECK(std::holds_alternative<SendResolved>(ev[0]));
              in_flight.erase(in_flight.begin() + static_cast<std::ptrdiff_t>(k));
              ++resolved;
            }
            break;
        }
        CHECK(s.cmd_out_size() + cmds_sent == submitted.size());
        CHECK(s.status_out_size() + acks_sent == notifies);
        CHECK(s.await_status_size() + resolved == submitted.size());
      }
      CHECK(std::adjacent_find(submitted.begin(), submitted.end(), std::greater_equal<>()) == submitted.end());
      std::vector<std::string> inbox;
      while (auto p = s.take_inbox()) inbox.push_back(*p->header("Message-ID"));
      CHECK(inbox == arrivals);
    }
  }

  TEST_CASE("property: frame round trip") {
    for (std::uint64_t seed = 1; seed <= 500; ++seed) {
      const std::string failure = prop::frame_roundtrip(seed);
      CHECK_MESSAGE(failure.empty(), failure);
    }
  }

  TEST_CASE("property: single byte mutations never crash or misread") {
    for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
      const std::string failure = prop::frame_mutation(seed);
      CHECK_MESSAGE(failure.empty(), failure);
    }
  }
}
