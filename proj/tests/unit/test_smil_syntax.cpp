#include <algorithm>

#include "doctest.h"

#include "gen.hpp"
#include "mms/smil_syntax.hpp"
#include "properties.hpp"

using namespace mms::smil;

namespace {

std::vector<std::pair<TokenKind, std::string>> kinds(std::string_view text) {
  std::vector<std::pair<TokenKind, std::string>> out;
  for (const auto& t : tokenize(text)) out.emplace_back(t.kind, t.lexeme);
  return out;
}

template <typename Fn>
ParseErrorCode parse_error_code(Fn&& fn) {
  try {
    fn();
  } catch (const ParseError& e) {
    return e.code();
  }
  FAIL("no ParseError");
  return ParseErrorCode::UnexpectedToken;
}

}  // namespace

TEST_SUITE("smil_syntax") {
  TEST_CASE("tokenize a minimal document") {
    const auto t = kinds("<smil></smil>");
    REQUIRE(t.size() == 3);
    CHECK(t[0] == std::pair{TokenKind::TagOpen, std::string("smil")});
    CHECK(t[1] == std::pair{TokenKind::TagClose, std::string("smil")});
    CHECK(t[2].first == TokenKind::Eof);
  }

  TEST_CASE("tokenize a self-closing tag with an attribute") {
    const auto t = kinds(R"(<par dur="5s"/>)");
    REQUIRE(t.size() == 5);
    CHECK(t[0] == std::pair{TokenKind::TagOpen, std::string("par")});
    CHECK(t[1] == std::pair{TokenKind::AttrName, std::string("dur")});
    CHECK(t[2] == std::pair{TokenKind::AttrValue, std::string("5s")});
    CHECK(t[3].first == TokenKind::TagSelfClose);
    CHECK(t[4].first == TokenKind::Eof);
  }

  TEST_CASE("token positions") {
    const auto t = tokenize("<smil>\r\n  <body/>\r\n</smil>");
    REQUIRE(t.size() >= 3);
    CHECK(t[1].lexeme == "body");
    CHECK(t[1].line == 2);
    CHECK(t[1].column == 3);
  }

  TEST_CASE("comments, declarations and entities") {
    const auto t = kinds(R"(<?xml version="1.0"?><!-- hi --><text src="a&amp;b&lt;&gt;&quot;"/>)");
    REQUIRE(t.size() == 5);
    CHECK(t[2].second == "a&b<>\"");
  }

  TEST_CASE("truncated tag is a lex error on line 1") {
    try {
      tokenize("<img src=");
      FAIL("expected LexError");
    } catch (const LexError& e) {
      CHECK(e.line() == 1);
    }
  }

  TEST_CASE("empty body") {
    const SmilTree t = parse_text("<smil><body/></smil>");
    CHECK(t.layout.empty());
    CHECK(t.pars.empty());
  }

  TEST_CASE("full document") {
    const SmilTree t = parse_text(
        R"(<smil><head><layout><root-layout width="160" height="120"/><region id="Image" width="100%" height="50%"/></layout></head><body><par dur="5s"><img src="a.jpg" region="Image"/></par></body></smil>)");
    CHECK(t.layout.root_width == 160);
    CHECK(t.layout.root_height == 120);
    REQUIRE(t.layout.regions.size() == 1);
    CHECK(t.layout.regions[0].width == Dimension::pct(100));
    CHECK(t.layout.regions[0].height == Dimension::pct(50));
    REQUIRE(t.pars.size() == 1);
    CHECK(t.pars[0].dur_ms == 5000);
    REQUIRE(t.pars[0].media.size() == 1);
    CHECK(t.pars[0].media[0].kind == MediaKind::Image);
    CHECK(t.pars[0].media[0].src == "a.jpg");
    CHECK(t.pars[0].media[0].region_id == "Image");
  }

  TEST_CASE("bad clock value") {
    CHECK(parse_error_code([] { parse_text(R"(<smil><body><par dur="abc"/></body></smil>)"); }) ==
          ParseErrorCode::BadClockValue);
  }

  TEST_CASE("unknown element: strict fails, lenient warns and skips") {
    const std::string text = R"(<smil><body><par><blink src="x"><text src="y"/></blink><text src="t"/></par></body></smil>)";
    CHECK(parse_error_code([&] { parse_text(text); }) == ParseErrorCode::UnknownElement);
    const auto outcome = parse(tokenize(text), ParseOptions{true});
    CHECK(outcome.warnings.size() == 1);
    REQUIRE(outcome.tree.pars.size() == 1);
    REQUIRE(outcome.tree.pars[0].media.size() == 1);
    CHECK(outcome.tree.pars[0].media[0].src == "t");
  }

  TEST_CASE("other parse errors") {
    CHECK(parse_error_code([] { parse_text("<smil><body>"); }) == ParseErrorCode::Unclosed);
    CHECK(parse_error_code([] { parse_text("<smil><body><par><img/></par></body></smil>"); }) ==
          ParseErrorCode::MissingAttribute);
    CHECK(parse_error_code([] { parse_text(R"(<smil><head><layout><region id="r" width="x%"/></layout></head></smil>)"); }) ==
          ParseErrorCode::BadDimension);
    CHECK(parse_error_code([] { parse_text("<smil><body></par></body></smil>"); }) == ParseErrorCode::UnexpectedToken);
  }

  TEST_CASE("end converts to dur") {
    const SmilTree t = parse_text(R"(<smil><body><par end="4s"><audio src="a" begin="1s" end="3s"/></par></body></smil>)");
    CHECK(t.pars[0].dur_ms == 4000);
    CHECK(t.pars[0].media[0].begin_ms == 1000);
    CHECK(t.pars[0].media[0].dur_ms == 2000);
    CHECK(parse_error_code([] { parse_text(R"(<smil><body><par><audio src="a" begin="3s" end="1s"/></par></body></smil>)"); }) ==
          ParseErrorCode::BadClockValue);
  }

  TEST_CASE("clock values") {
    CHECK(parse_clock_value("5s") == 5000);
    CHECK(parse_clock_value("1.5s") == 1500);
    CHECK(parse_clock_value("250ms") == 250);
    CHECK(parse_clock_value("7") == 7000);
    CHECK(parse_clock_value("0.0005s") == 1);
    CHECK(parse_clock_value("0.0004s") == 0);
    CHECK_FALSE(parse_clock_value("abc").has_value());
    CHECK_FALSE(parse_clock_value("").has_value());
    CHECK_FALSE(parse_clock_value("1.").has_value());
    CHECK_FALSE(parse_clock_value("-1s").has_value());
  }

  TEST_CASE("dimensions") {
    CHECK(parse_dimension("10") == Dimension::px(10));
    CHECK(parse_dimension("10px") == Dimension::px(10));
    CHECK(parse_dimension("12.5%") == Dimension::pct(12.5));
    CHECK_FALSE(parse_dimension("%").has_value());
    CHECK(format_dimension(Dimension::pct(12.5)) == "12.5%");
    CHECK(format_dimension(Dimension::px(7)) == "7");
  }

  TEST_CASE("canonical serialization") {
    const std::string text = serialize(default_tree());
    CHECK(parse_text(text) == default_tree());
    CHECK(text.find("\r\n") != std::string::npos);
    for (std::size_t i = 0; i < text.size(); ++i) {
      if (text[i] == '\n') CHECK((i > 0 && text[i - 1] == '\r'));
    }

    SmilTree t;
    Par p;
    p.dur_ms = 5000;
    t.pars.push_back(p);
    CHECK(serialize(t).find(R"(dur="5000ms")") != std::string::npos);
  }

  TEST_CASE("serialize refuses invalid trees") {
    SmilTree t;
    Par p;
    p.media.push_back({MediaKind::Text, "", {}, 0, {}, {}});
    t.pars.push_back(p);
    CHECK_THROWS_AS(serialize(t), SerializeError);
  }

  TEST_CASE("property: round trip and fixpoint") {
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
      const std::string failure = prop::smil_roundtrip(seed);
      CHECK_MESSAGE(failure.empty(), failure);
    }
  }

  TEST_CASE("property: error positions lie within the input") {
    static constexpr std::string_view kJunk = "<>/=\"x &";
    for (std::uint64_t seed = 1; seed <= 400; ++seed) {
      gen::Rng rng(seed);
      std::string text = serialize(gen::tree(rng));
      const int edits = static_cast<int>(rng.range(1, 3));
      for (int i = 0; i < edits; ++i) text[rng.below(text.size())] = kJunk[rng.below(kJunk.size())];
      if (rng.percent(30)) text.resize(rng.below(text.size()));

      std::vector<std::size_t> line_len{0};
      for (char c : text) {
        if (c == '\n') line_len.push_back(0);
        else ++line_len.back();
      }
      auto within = [&](int line, int column) {
        return line >= 1 && static_cast<std::size_t>(line) <= line_len.size() && column >= 1 &&
               static_cast<std::size_t>(column) <= line_len[line - 1] + 1;
      };
      try {
        parse_text(text);
      } catch (const LexError& e) {
        CHECK_MESSAGE(within(e.line(), e.column()), "seed ", seed);
      } catch (const ParseError& e) {
        CHECK_MESSAGE(within(e.line(), e.column()), "seed ", seed);
      }
    }
  }
}
